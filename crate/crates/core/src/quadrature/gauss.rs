//! Gauss–Legendre rules on [−1, 1] and the per-panel polynomial machinery
//! built on them: barycentric cardinal functions (interpolation through the
//! panel nodes), Legendre modal coefficients, and exact antiderivatives of
//! the nodal interpolant. The grid, the operator assembly, and every
//! cumulative-integral routine in the crate share this one implementation.

/// Nodes and weights of the n-point Gauss–Legendre rule on [−1, 1],
/// ascending node order. Newton iteration on P_n from the cosine initial
/// guess; converges to machine precision in a handful of steps.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    assert!(n >= 1, "gauss_legendre requires n >= 1");
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    let m = n.div_ceil(2);
    for i in 0..m {
        // i-th root counted from the +1 end.
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        for _ in 0..100 {
            let (p, d) = legendre_with_deriv(n, x);
            let dx = p / d;
            x -= dx;
            if dx.abs() < 1e-15 {
                break;
            }
        }
        // One final evaluation at the converged node for the weight.
        let (_, dp) = legendre_with_deriv(n, x);
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        nodes[i] = -x;
        nodes[n - 1 - i] = x;
        weights[i] = w;
        weights[n - 1 - i] = w;
    }
    if n % 2 == 1 {
        nodes[n / 2] = 0.0;
    }
    (nodes, weights)
}

/// (P_n(x), P_n'(x)) by the three-term recurrence.
fn legendre_with_deriv(n: usize, x: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = x;
    if n == 0 {
        return (1.0, 0.0);
    }
    for k in 1..n {
        let kf = k as f64;
        let p2 = ((2.0 * kf + 1.0) * x * p1 - kf * p0) / (kf + 1.0);
        p0 = p1;
        p1 = p2;
    }
    let d = n as f64 * (x * p1 - p0) / (x * x - 1.0);
    (p1, d)
}

/// P_0(t) … P_kmax(t).
fn legendre_values(kmax: usize, t: f64) -> Vec<f64> {
    let mut v = Vec::with_capacity(kmax + 1);
    v.push(1.0);
    if kmax >= 1 {
        v.push(t);
    }
    for k in 1..kmax {
        let kf = k as f64;
        let next = ((2.0 * kf + 1.0) * t * v[k] - kf * v[k - 1]) / (kf + 1.0);
        v.push(next);
    }
    v
}

/// Polynomial workspace for one panel size: interpolation and integration
/// in the reference coordinate t ∈ [−1, 1].
#[derive(Clone, Debug)]
pub struct PanelBasis {
    /// Number of nodes per panel.
    pub n: usize,
    /// Gauss–Legendre nodes, ascending.
    pub nodes: Vec<f64>,
    /// Gauss–Legendre weights.
    pub weights: Vec<f64>,
    /// Barycentric weights for the nodes.
    bary: Vec<f64>,
    /// leg[k][i] = P_k(t_i), k = 0..n-1.
    leg: Vec<Vec<f64>>,
}

impl PanelBasis {
    pub fn new(n: usize) -> Self {
        let (nodes, weights) = gauss_legendre(n);
        // Barycentric weights b_j = 1 / Π_{k≠j} (t_j − t_k), rescaled to
        // avoid overflow (any common scale cancels in the barycentric form).
        let mut bary = vec![1.0; n];
        for j in 0..n {
            let mut prod = 1.0;
            for k in 0..n {
                if k != j {
                    prod *= (nodes[j] - nodes[k]) * 2.0;
                }
            }
            bary[j] = 1.0 / prod;
        }
        let leg = (0..n)
            .map(|k| nodes.iter().map(|&t| legendre_values(k, t)[k]).collect())
            .collect();
        PanelBasis {
            n,
            nodes,
            weights,
            bary,
            leg,
        }
    }

    /// Cardinal functions ℓ_j(t): the interpolant of nodal values f is
    /// Σ_j f_j ℓ_j(t). Exact (returns a unit vector) when t hits a node.
    pub fn cardinal(&self, t: f64) -> Vec<f64> {
        let mut out = vec![0.0; self.n];
        for j in 0..self.n {
            if (t - self.nodes[j]).abs() < 1e-300 {
                out[j] = 1.0;
                return out;
            }
        }
        let mut denom = 0.0;
        for ((o, &b), &x) in out.iter_mut().zip(&self.bary).zip(&self.nodes) {
            let term = b / (t - x);
            *o = term;
            denom += term;
        }
        for v in &mut out {
            *v /= denom;
        }
        out
    }

    /// Interpolate nodal values at t.
    pub fn interpolate(&self, f: &[f64], t: f64) -> f64 {
        self.cardinal(t).iter().zip(f).map(|(c, v)| c * v).sum()
    }

    /// Legendre modal coefficients of the nodal interpolant:
    /// c_k = (2k+1)/2 Σ_i w_i P_k(t_i) f_i.
    pub fn legendre_coeffs(&self, f: &[f64]) -> Vec<f64> {
        (0..self.n)
            .map(|k| {
                let s: f64 = (0..self.n)
                    .map(|i| self.weights[i] * self.leg[k][i] * f[i])
                    .sum();
                (2.0 * k as f64 + 1.0) / 2.0 * s
            })
            .collect()
    }

    /// Antiderivative of the interpolant: F(t) = ∫_{−1}^{t} Σ c_k P_k,
    /// using ∫P_k = (P_{k+1} − P_{k−1})/(2k+1). F(−1) = 0 exactly.
    pub fn eval_antiderivative(&self, coeffs: &[f64], t: f64) -> f64 {
        let p = legendre_values(self.n, t);
        let mut acc = coeffs[0] * (t + 1.0);
        for k in 1..coeffs.len() {
            acc += coeffs[k] * (p[k + 1] - p[k - 1]) / (2.0 * k as f64 + 1.0);
        }
        acc
    }

    /// Antiderivative values at the panel's own nodes (prefix integrals).
    pub fn antiderivative_at_nodes(&self, f: &[f64]) -> Vec<f64> {
        let c = self.legendre_coeffs(f);
        self.nodes
            .iter()
            .map(|&t| self.eval_antiderivative(&c, t))
            .collect()
    }

    /// Full-panel integral ∫_{−1}^{1} of the interpolant (= Σ w_i f_i).
    pub fn integral(&self, f: &[f64]) -> f64 {
        self.weights.iter().zip(f).map(|(w, v)| w * v).sum()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn nodes_are_symmetric_and_weights_sum_to_two() {
        for n in 1..=16 {
            let (t, w) = gauss_legendre(n);
            let total: f64 = w.iter().sum();
            assert!((total - 2.0).abs() < 1e-14, "n = {n}");
            for i in 0..n {
                assert!((t[i] + t[n - 1 - i]).abs() < 1e-15, "n = {n}");
                assert!(w[i] > 0.0);
            }
            for i in 1..n {
                assert!(t[i] > t[i - 1]);
            }
        }
    }

    #[test]
    fn known_small_rules() {
        let (t, w) = gauss_legendre(2);
        let v = 1.0 / 3.0f64.sqrt();
        assert!((t[0] + v).abs() < 1e-15 && (t[1] - v).abs() < 1e-15);
        assert!((w[0] - 1.0).abs() < 1e-15);
        let (t, w) = gauss_legendre(3);
        assert!((t[1]).abs() < 1e-15);
        assert!((t[2] - (0.6f64).sqrt()).abs() < 1e-15);
        assert!((w[1] - 8.0 / 9.0).abs() < 1e-15);
    }

    #[test]
    fn polynomial_exactness_to_degree_2n_minus_1() {
        for n in 2..=16 {
            let (t, w) = gauss_legendre(n);
            for deg in 0..=(2 * n - 1) {
                let got: f64 = t.iter().zip(&w).map(|(&x, &wi)| wi * x.powi(deg as i32)).sum();
                let want = if deg % 2 == 0 { 2.0 / (deg as f64 + 1.0) } else { 0.0 };
                assert!(
                    (got - want).abs() < 1e-13,
                    "n = {n}, deg = {deg}: {got} vs {want}"
                );
            }
        }
    }

    #[test]
    fn cardinal_functions_partition_unity_and_hit_nodes() {
        let b = PanelBasis::new(8);
        for &t in &[-0.99, -0.3, 0.0, 0.123, 0.97] {
            let c = b.cardinal(t);
            let s: f64 = c.iter().sum();
            assert!((s - 1.0).abs() < 1e-13);
        }
        for j in 0..b.n {
            let c = b.cardinal(b.nodes[j]);
            for (i, v) in c.iter().enumerate() {
                let want = if i == j { 1.0 } else { 0.0 };
                assert!((v - want).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn interpolation_is_exact_for_polynomials() {
        let b = PanelBasis::new(6);
        let poly = |t: f64| 1.0 + t * (2.0 - t * (0.5 - t * (1.25 + t * 0.3)));
        let f: Vec<f64> = b.nodes.iter().map(|&t| poly(t)).collect();
        for &t in &[-0.95, -0.5, 0.2, 0.88] {
            assert!((b.interpolate(&f, t) - poly(t)).abs() < 1e-13);
        }
    }

    #[test]
    fn antiderivative_matches_closed_form() {
        let b = PanelBasis::new(7);
        // f = 3t² + 2t + 1, F(t) = t³ + t² + t + 1 (F(−1) = 0).
        let f: Vec<f64> = b.nodes.iter().map(|&t| 3.0 * t * t + 2.0 * t + 1.0).collect();
        let c = b.legendre_coeffs(&f);
        for &t in &[-1.0, -0.4, 0.0, 0.6, 1.0] {
            let want = t * t * t + t * t + t + 1.0;
            assert!((b.eval_antiderivative(&c, t) - want).abs() < 1e-13);
        }
        let prefix = b.antiderivative_at_nodes(&f);
        for (i, &t) in b.nodes.iter().enumerate() {
            let want = t * t * t + t * t + t + 1.0;
            assert!((prefix[i] - want).abs() < 1e-13);
        }
        assert!((b.integral(&f) - 4.0).abs() < 1e-14);
    }
}
