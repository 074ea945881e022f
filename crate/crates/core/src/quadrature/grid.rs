//! The composite quadrature grid every operator computation runs on.
//!
//! Layout: the support is truncated to total probability mass 1 − ε (half a
//! tail mass cut on each unbounded side; bounded sides are kept exactly) and
//! split into panels in the *mass* coordinate u = cdf(x):
//!
//! - a block of geometrically shrinking panels hugs each boundary: on an
//!   unbounded side the panel edges step down from the common side mass M to
//!   ε/2; on a bounded side they step down to a fixed 1e-10 and a closing
//!   panel reaches the endpoint itself;
//! - the bulk in between is covered by equal-mass panels.
//!
//! Each panel carries its endpoints in both the cdf coordinate u and the
//! survival coordinate s = 1 − u. Upper-side panels are *native* in s: their
//! nodes are placed and their widths measured in s, which keeps full relative
//! precision where u would round to 1. Node positions come from the quantile
//! (or, deep in the upper tail, the survival quantile), and each node y_k
//! gets the weight q_k = glw_k·Δu/2 / p(y_k), so that Σ f(y_k) q_k ≈ ∫ f dy.

use crate::density::{DensitySpec, WeightSpec};
use crate::error::{Error, Result};
use crate::quadrature::gauss::PanelBasis;
use std::sync::atomic::{AtomicU64, Ordering};

static GRID_COUNTER: AtomicU64 = AtomicU64::new(1);

/// Mass below a bounded endpoint's innermost nonzero panel edge.
const BOUNDED_EDGE_MASS: f64 = 1e-10;
/// Below this survival mass, node positions switch to the survival quantile.
pub(crate) const SURVIVAL_QUANTILE_SWITCH: f64 = 1e-8;

/// One quadrature panel. Endpoints are stored in both coordinates; exactly
/// one of them is "native" (exact), the other is its complement.
#[derive(Clone, Copy, Debug)]
pub struct Panel {
    pub u_left: f64,
    pub u_right: f64,
    /// Survival coordinate at the left edge (s decreases left → right).
    pub s_left: f64,
    pub s_right: f64,
    /// True for upper-side panels whose native coordinate is s.
    pub native_hi: bool,
}

impl Panel {
    /// Panel width in the mass coordinate, computed in the native coordinate.
    pub fn u_width(&self) -> f64 {
        if self.native_hi {
            self.s_left - self.s_right
        } else {
            self.u_right - self.u_left
        }
    }
}

/// A function sampled at the nodes of a specific grid.
#[derive(Clone, Debug)]
pub struct GridFunction {
    pub grid_id: u64,
    pub values: Vec<f64>,
}

/// Composite Gauss–Legendre grid adapted to (density, weight).
#[derive(Clone, Debug)]
pub struct QuadGrid {
    pub id: u64,
    pub density: DensitySpec,
    pub weight: WeightSpec,
    pub n_panels: usize,
    pub pts_per_panel: usize,
    pub eps_trunc: f64,
    pub basis: PanelBasis,
    pub panels: Vec<Panel>,
    /// Node positions, strictly increasing, length n_panels·pts_per_panel.
    pub x: Vec<f64>,
    /// cdf at the nodes (exact on lower/core panels).
    pub u: Vec<f64>,
    /// survival at the nodes (exact on upper panels).
    pub s: Vec<f64>,
    pub pdf: Vec<f64>,
    pub ln_pdf: Vec<f64>,
    pub w: Vec<f64>,
    pub ln_w: Vec<f64>,
    /// Quadrature weights for ∫·dy: q_k = glw_k·Δu/2 / p(y_k).
    pub q: Vec<f64>,
    /// Truncated support endpoints actually covered by the grid.
    pub trunc_lo: f64,
    pub trunc_hi: f64,
}

/// Geometric edge ladder for one side, in that side's own mass coordinate,
/// ascending from the boundary toward the bulk; the last entry is the side
/// mass M. Unbounded sides start at ε/2; bounded sides start at 0 with the
/// innermost nonzero edge at BOUNDED_EDGE_MASS.
fn side_mass_edges(bounded: bool, g: usize, m_side: f64, eps_half: f64) -> Vec<f64> {
    if bounded {
        let mut v = vec![0.0];
        if g >= 2 {
            let rho = (BOUNDED_EDGE_MASS / m_side).powf(1.0 / (g as f64 - 1.0));
            for j in (0..g).rev() {
                v.push(m_side * rho.powi(j as i32));
            }
        } else {
            v.push(m_side);
        }
        v
    } else {
        let rho = (eps_half / m_side).powf(1.0 / g as f64);
        (0..=g).rev().map(|j| m_side * rho.powi(j as i32)).collect()
    }
}

/// Build a grid for the weighted density. `n_panels ≥ 4`, `pts_per_panel ∈
/// [4, 16]`, `0 < eps_trunc ≤ 1e-6` (mass removed across unbounded tails).
pub fn build_grid(
    density: &DensitySpec,
    weight: &WeightSpec,
    n_panels: usize,
    pts_per_panel: usize,
    eps_trunc: f64,
) -> Result<QuadGrid> {
    if n_panels < 4 {
        return Err(Error::InvalidParameter(format!(
            "n_panels must be at least 4, got {n_panels}"
        )));
    }
    if !(4..=16).contains(&pts_per_panel) {
        return Err(Error::InvalidParameter(format!(
            "pts_per_panel must lie in [4, 16], got {pts_per_panel}"
        )));
    }
    if !(eps_trunc > 0.0 && eps_trunc <= 1e-6) {
        return Err(Error::InvalidParameter(format!(
            "eps_trunc must lie in (0, 1e-6], got {eps_trunc}"
        )));
    }
    weight.validate_for(density)?;

    let support = density.support();
    let bounded_lo = support.is_bounded_below();
    let bounded_hi = support.is_bounded_above();
    let eps_lo_half = if bounded_lo { 0.0 } else { 0.5 * eps_trunc };
    let eps_hi_half = if bounded_hi { 0.0 } else { 0.5 * eps_trunc };
    let span = 1.0 - eps_lo_half - eps_hi_half;

    let g = (n_panels / 4).min(16);
    let m_side = span * g as f64 / n_panels as f64;
    let lo_edges = side_mass_edges(bounded_lo, g, m_side, eps_lo_half);
    let hi_edges = side_mass_edges(bounded_hi, g, m_side, eps_hi_half);
    let core = n_panels - 2 * g;
    let base = *lo_edges.last().expect("nonempty");
    let core_end = 1.0 - *hi_edges.last().expect("nonempty");
    let dc = (core_end - base) / core as f64;

    let mut panels = Vec::with_capacity(n_panels);
    for i in 0..g {
        let (u_left, u_right) = (lo_edges[i], lo_edges[i + 1]);
        panels.push(Panel {
            u_left,
            u_right,
            s_left: 1.0 - u_left,
            s_right: 1.0 - u_right,
            native_hi: false,
        });
    }
    for c in 0..core {
        let u_left = base + c as f64 * dc;
        let u_right = if c + 1 == core {
            core_end
        } else {
            base + (c + 1) as f64 * dc
        };
        panels.push(Panel {
            u_left,
            u_right,
            s_left: 1.0 - u_left,
            s_right: 1.0 - u_right,
            native_hi: false,
        });
    }
    for i in (1..=g).rev() {
        let (s_left, s_right) = (hi_edges[i], hi_edges[i - 1]);
        panels.push(Panel {
            u_left: 1.0 - s_left,
            u_right: 1.0 - s_right,
            s_left,
            s_right,
            native_hi: true,
        });
    }
    debug_assert_eq!(panels.len(), n_panels);

    let basis = PanelBasis::new(pts_per_panel);
    let n = n_panels * pts_per_panel;
    let mut x = Vec::with_capacity(n);
    let mut u = Vec::with_capacity(n);
    let mut s = Vec::with_capacity(n);
    let mut pdf = Vec::with_capacity(n);
    let mut ln_pdf_v = Vec::with_capacity(n);
    let mut w_v = Vec::with_capacity(n);
    let mut ln_w_v = Vec::with_capacity(n);
    let mut q = Vec::with_capacity(n);

    for panel in &panels {
        let du = panel.u_width();
        for (k, &t) in basis.nodes.iter().enumerate() {
            let node = x.len();
            let (u_node, s_node) = if panel.native_hi {
                let sv = panel.s_left + (panel.s_right - panel.s_left) * 0.5 * (1.0 + t);
                (1.0 - sv, sv)
            } else {
                let uv = panel.u_left + (panel.u_right - panel.u_left) * 0.5 * (1.0 + t);
                (uv, 1.0 - uv)
            };
            let xk = if s_node < SURVIVAL_QUANTILE_SWITCH {
                density.survival_quantile(s_node)?
            } else {
                density.quantile(u_node)?
            };
            if !xk.is_finite() {
                return Err(Error::Assembly {
                    node,
                    x: xk,
                    detail: "node position is not finite".into(),
                });
            }
            let lp = density.ln_pdf(xk);
            let p = lp.exp();
            if !(p > 0.0) || !p.is_finite() {
                return Err(Error::Assembly {
                    node,
                    x: xk,
                    detail: format!("density is not positive-finite at the node (pdf = {p})"),
                });
            }
            let wv = weight.eval(density, xk);
            if !(wv > 0.0) || !wv.is_finite() {
                return Err(Error::Assembly {
                    node,
                    x: xk,
                    detail: format!("weight is not positive-finite at the node (w = {wv})"),
                });
            }
            let qk = basis.weights[k] * du * 0.5 / p;
            if !(qk > 0.0) || !qk.is_finite() {
                return Err(Error::Assembly {
                    node,
                    x: xk,
                    detail: format!("quadrature weight underflowed or overflowed (q = {qk})"),
                });
            }
            x.push(xk);
            u.push(u_node);
            s.push(s_node);
            pdf.push(p);
            ln_pdf_v.push(lp);
            w_v.push(wv);
            ln_w_v.push(wv.ln());
            q.push(qk);
        }
    }

    for i in 1..n {
        if !(x[i] > x[i - 1]) {
            return Err(Error::Assembly {
                node: i,
                x: x[i],
                detail: format!(
                    "node positions are not strictly increasing ({} then {})",
                    x[i - 1],
                    x[i]
                ),
            });
        }
    }

    let trunc_lo = if bounded_lo {
        support.lo
    } else {
        density.quantile(eps_lo_half)?
    };
    let trunc_hi = if bounded_hi {
        support.hi
    } else {
        density.survival_quantile(eps_hi_half)?
    };

    Ok(QuadGrid {
        id: GRID_COUNTER.fetch_add(1, Ordering::Relaxed),
        density: density.clone(),
        weight: weight.clone(),
        n_panels,
        pts_per_panel,
        eps_trunc,
        basis,
        panels,
        x,
        u,
        s,
        pdf,
        ln_pdf: ln_pdf_v,
        w: w_v,
        ln_w: ln_w_v,
        q,
        trunc_lo,
        trunc_hi,
    })
}

impl QuadGrid {
    pub fn n_nodes(&self) -> usize {
        self.x.len()
    }

    /// Node index range of panel j.
    pub fn panel_nodes(&self, j: usize) -> std::ops::Range<usize> {
        let p = self.pts_per_panel;
        j * p..(j + 1) * p
    }

    /// Panel index containing node i.
    pub fn panel_of_node(&self, i: usize) -> usize {
        i / self.pts_per_panel
    }

    /// Wrap nodal values as a GridFunction (length-checked).
    pub fn function(&self, values: Vec<f64>) -> Result<GridFunction> {
        if values.len() != self.n_nodes() {
            return Err(Error::GridMismatch(format!(
                "expected {} nodal values, got {}",
                self.n_nodes(),
                values.len()
            )));
        }
        Ok(GridFunction {
            grid_id: self.id,
            values,
        })
    }

    /// Sample a scalar function at the nodes.
    pub fn from_fn(&self, f: impl Fn(f64) -> f64) -> GridFunction {
        GridFunction {
            grid_id: self.id,
            values: self.x.iter().map(|&xi| f(xi)).collect(),
        }
    }

    pub fn constant(&self, c: f64) -> GridFunction {
        GridFunction {
            grid_id: self.id,
            values: vec![c; self.n_nodes()],
        }
    }

    /// Check that a GridFunction belongs to this grid.
    pub fn check_fn(&self, f: &GridFunction) -> Result<()> {
        if f.grid_id != self.id || f.values.len() != self.n_nodes() {
            return Err(Error::GridMismatch(format!(
                "function was built on grid {} ({} nodes), operator on grid {} ({} nodes)",
                f.grid_id,
                f.values.len(),
                self.id,
                self.n_nodes()
            )));
        }
        Ok(())
    }

    /// ⟨f, g⟩ = Σ f g · p w q ≈ ∫ f g p w dy.
    pub fn inner(&self, f: &[f64], g: &[f64]) -> f64 {
        debug_assert_eq!(f.len(), self.n_nodes());
        debug_assert_eq!(g.len(), self.n_nodes());
        let mut acc = 0.0;
        for i in 0..f.len() {
            acc += f[i] * g[i] * self.pdf[i] * self.w[i] * self.q[i];
        }
        acc
    }

    /// Covered probability mass Σ p q (= 1 − truncated mass, by construction).
    pub fn mass(&self) -> f64 {
        self.pdf.iter().zip(&self.q).map(|(p, q)| p * q).sum()
    }

    /// Σ p w q ≈ ∫ p w.
    pub fn pw_mass(&self) -> f64 {
        (0..self.n_nodes())
            .map(|i| self.pdf[i] * self.w[i] * self.q[i])
            .sum()
    }

    /// Prefix integrals in the mass coordinate: given nodal values of an
    /// integrand g(u) (du measure), returns ∫_{u_min}^{u(node)} g du at each
    /// node, using the exact per-panel polynomial antiderivative.
    pub fn cumulative_in_u(&self, g: &[f64]) -> Vec<f64> {
        debug_assert_eq!(g.len(), self.n_nodes());
        let pts = self.pts_per_panel;
        let mut out = vec![0.0; g.len()];
        let mut acc = 0.0;
        for (j, panel) in self.panels.iter().enumerate() {
            let seg = &g[j * pts..(j + 1) * pts];
            let coeffs = self.basis.legendre_coeffs(seg);
            let h = 0.5 * panel.u_width();
            for (k, &t) in self.basis.nodes.iter().enumerate() {
                out[j * pts + k] = acc + h * self.basis.eval_antiderivative(&coeffs, t);
            }
            acc += h * self.basis.integral(seg);
        }
        out
    }

    /// Total ∫ g du over the covered mass range (companion to
    /// `cumulative_in_u`).
    pub fn total_in_u(&self, g: &[f64]) -> f64 {
        let pts = self.pts_per_panel;
        let mut acc = 0.0;
        for (j, panel) in self.panels.iter().enumerate() {
            let seg = &g[j * pts..(j + 1) * pts];
            acc += 0.5 * panel.u_width() * self.basis.integral(seg);
        }
        acc
    }
}
