//! Probability densities on an interval of the real line, their weights, and
//! the closed-form quantities the rest of the library leans on: log-density,
//! distribution function and survival (both tail-accurate), quantiles, the
//! score d/dx ln p, the first moment, and the function
//! τ(x) = (1/p(x)) ∫_x^hi (y − mean) p(y) dy.
//!
//! Seven parametric families are built in; arbitrary densities can be loaded
//! from a two-column table and are interpolated monotonically in log space.

use crate::error::{Error, Result};
use crate::quadrature::gauss::PanelBasis;
use crate::quadrature::special;
use std::fmt;
use std::sync::Arc;

const LN_SQRT_2PI: f64 = 0.918_938_533_204_672_8;

/// Closed support interval; endpoints may be ±∞.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Support {
    pub lo: f64,
    pub hi: f64,
}

impl Support {
    pub fn is_bounded_below(&self) -> bool {
        self.lo.is_finite()
    }
    pub fn is_bounded_above(&self) -> bool {
        self.hi.is_finite()
    }
    pub fn contains(&self, x: f64) -> bool {
        x >= self.lo && x <= self.hi
    }
}

#[derive(Clone, Debug)]
pub(crate) enum Family {
    Gaussian { mu: f64, sigma: f64 },
    Uniform { lo: f64, hi: f64 },
    Beta { alpha: f64, beta: f64 },
    Gamma { k: f64, theta: f64 },
    Exponential { theta: f64 },
    Subbotin { alpha: f64 },
    Weibull { k: f64, lambda: f64 },
    Tabulated(Arc<Tabulated>),
}

/// A validated density specification. Cheap to clone.
#[derive(Clone, Debug)]
pub struct DensitySpec {
    family: Family,
}

impl fmt::Display for DensitySpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.name())?;
        let params = self.params();
        if !params.is_empty() {
            write!(f, "(")?;
            for (i, (k, v)) in params.iter().enumerate() {
                if i > 0 {
                    write!(f, ", ")?;
                }
                write!(f, "{k} = {v}")?;
            }
            write!(f, ")")?;
        }
        Ok(())
    }
}

fn require(cond: bool, msg: impl Into<String>) -> Result<()> {
    if cond {
        Ok(())
    } else {
        Err(Error::InvalidParameter(msg.into()))
    }
}

impl DensitySpec {
    // -- constructors -------------------------------------------------------

    pub fn gaussian(mu: f64, sigma: f64) -> Result<Self> {
        require(mu.is_finite(), format!("gaussian mu must be finite, got {mu}"))?;
        require(
            sigma.is_finite() && sigma > 0.0,
            format!("gaussian sigma must be positive, got {sigma}"),
        )?;
        Ok(Self {
            family: Family::Gaussian { mu, sigma },
        })
    }

    pub fn uniform(lo: f64, hi: f64) -> Result<Self> {
        require(
            lo.is_finite() && hi.is_finite() && lo < hi,
            format!("uniform requires finite lo < hi, got [{lo}, {hi}]"),
        )?;
        Ok(Self {
            family: Family::Uniform { lo, hi },
        })
    }

    pub fn beta(alpha: f64, beta: f64) -> Result<Self> {
        require(
            alpha.is_finite() && alpha > 0.0 && beta.is_finite() && beta > 0.0,
            format!("beta requires alpha, beta > 0, got ({alpha}, {beta})"),
        )?;
        Ok(Self {
            family: Family::Beta { alpha, beta },
        })
    }

    pub fn gamma(k: f64, theta: f64) -> Result<Self> {
        require(
            k.is_finite() && k > 0.0 && theta.is_finite() && theta > 0.0,
            format!("gamma requires k, theta > 0, got ({k}, {theta})"),
        )?;
        Ok(Self {
            family: Family::Gamma { k, theta },
        })
    }

    pub fn exponential(theta: f64) -> Result<Self> {
        require(
            theta.is_finite() && theta > 0.0,
            format!("exponential requires theta > 0, got {theta}"),
        )?;
        Ok(Self {
            family: Family::Exponential { theta },
        })
    }

    /// p(x) ∝ exp(−|x|^α/α) on ℝ; α ≥ 1 keeps the density log-concave.
    pub fn subbotin(alpha: f64) -> Result<Self> {
        require(
            alpha.is_finite() && alpha >= 1.0,
            format!("subbotin requires alpha >= 1, got {alpha}"),
        )?;
        Ok(Self {
            family: Family::Subbotin { alpha },
        })
    }

    pub fn weibull(k: f64, lambda: f64) -> Result<Self> {
        require(
            k.is_finite() && k > 0.0 && lambda.is_finite() && lambda > 0.0,
            format!("weibull requires k, lambda > 0, got ({k}, {lambda})"),
        )?;
        Ok(Self {
            family: Family::Weibull { k, lambda },
        })
    }

    // -- identification ------------------------------------------------------

    pub(crate) fn family(&self) -> &Family {
        &self.family
    }

    pub fn name(&self) -> &'static str {
        match &self.family {
            Family::Gaussian { .. } => "gaussian",
            Family::Uniform { .. } => "uniform",
            Family::Beta { .. } => "beta",
            Family::Gamma { .. } => "gamma",
            Family::Exponential { .. } => "exponential",
            Family::Subbotin { .. } => "subbotin",
            Family::Weibull { .. } => "weibull",
            Family::Tabulated(_) => "tabulated",
        }
    }

    pub fn params(&self) -> Vec<(&'static str, f64)> {
        match &self.family {
            Family::Gaussian { mu, sigma } => vec![("mu", *mu), ("sigma", *sigma)],
            Family::Uniform { lo, hi } => vec![("lo", *lo), ("hi", *hi)],
            Family::Beta { alpha, beta } => vec![("alpha", *alpha), ("beta", *beta)],
            Family::Gamma { k, theta } => vec![("k", *k), ("theta", *theta)],
            Family::Exponential { theta } => vec![("theta", *theta)],
            Family::Subbotin { alpha } => vec![("alpha", *alpha)],
            Family::Weibull { k, lambda } => vec![("k", *k), ("lambda", *lambda)],
            Family::Tabulated(t) => vec![("points", t.xs.len() as f64)],
        }
    }

    pub fn support(&self) -> Support {
        match &self.family {
            Family::Gaussian { .. } | Family::Subbotin { .. } => Support {
                lo: f64::NEG_INFINITY,
                hi: f64::INFINITY,
            },
            Family::Uniform { lo, hi } => Support { lo: *lo, hi: *hi },
            Family::Beta { .. } => Support { lo: 0.0, hi: 1.0 },
            Family::Gamma { .. } | Family::Exponential { .. } | Family::Weibull { .. } => Support {
                lo: 0.0,
                hi: f64::INFINITY,
            },
            Family::Tabulated(t) => Support {
                lo: t.xs[0],
                hi: *t.xs.last().expect("nonempty"),
            },
        }
    }

    // -- pointwise evaluations ----------------------------------------------

    /// ln p(x) for x in the open support (may be −∞ at endpoints).
    pub fn ln_pdf(&self, x: f64) -> f64 {
        match &self.family {
            Family::Gaussian { mu, sigma } => {
                let z = (x - mu) / sigma;
                -0.5 * z * z - sigma.ln() - LN_SQRT_2PI
            }
            Family::Uniform { lo, hi } => {
                if x < *lo || x > *hi {
                    f64::NEG_INFINITY
                } else {
                    -(hi - lo).ln()
                }
            }
            Family::Beta { alpha, beta } => {
                if !(0.0..=1.0).contains(&x) {
                    return f64::NEG_INFINITY;
                }
                let ln_b = special::ln_gamma(*alpha) + special::ln_gamma(*beta)
                    - special::ln_gamma(alpha + beta);
                (alpha - 1.0) * x.ln() + (beta - 1.0) * (-x).ln_1p() - ln_b
            }
            Family::Gamma { k, theta } => {
                if x < 0.0 {
                    return f64::NEG_INFINITY;
                }
                (k - 1.0) * x.ln() - x / theta - special::ln_gamma(*k) - k * theta.ln()
            }
            Family::Exponential { theta } => {
                if x < 0.0 {
                    f64::NEG_INFINITY
                } else {
                    -x / theta - theta.ln()
                }
            }
            Family::Subbotin { alpha } => -x.abs().powf(*alpha) / alpha - subbotin_ln_z(*alpha),
            Family::Weibull { k, lambda } => {
                if x < 0.0 {
                    return f64::NEG_INFINITY;
                }
                let u = x / lambda;
                k.ln() - lambda.ln() + (k - 1.0) * u.ln() - u.powf(*k)
            }
            Family::Tabulated(t) => t.ln_pdf(x),
        }
    }

    pub fn pdf(&self, x: f64) -> f64 {
        if !self.support().contains(x) {
            return 0.0;
        }
        self.ln_pdf(x).exp()
    }

    /// Distribution function, with full relative accuracy in the lower tail.
    pub fn cdf(&self, x: f64) -> f64 {
        let s = self.support();
        if x <= s.lo {
            return 0.0;
        }
        if x >= s.hi {
            return 1.0;
        }
        match &self.family {
            Family::Gaussian { mu, sigma } => {
                let z = (x - mu) / sigma;
                gaussian_cdf(z)
            }
            Family::Uniform { lo, hi } => (x - lo) / (hi - lo),
            Family::Beta { alpha, beta } => {
                special::reg_inc_beta(*alpha, *beta, x).expect("validated parameters")
            }
            Family::Gamma { k, theta } => {
                special::reg_lower_gamma(*k, x / theta).expect("validated parameters")
            }
            Family::Exponential { theta } => -(-x / theta).exp_m1(),
            Family::Subbotin { alpha } => {
                if x < 0.0 {
                    subbotin_half_tail(*alpha, -x)
                } else {
                    1.0 - subbotin_half_tail(*alpha, x)
                }
            }
            Family::Weibull { k, lambda } => -(-(x / lambda).powf(*k)).exp_m1(),
            Family::Tabulated(t) => t.cdf(x),
        }
    }

    /// Survival function 1 − cdf, with full relative accuracy in the upper tail.
    pub fn survival(&self, x: f64) -> f64 {
        let s = self.support();
        if x <= s.lo {
            return 1.0;
        }
        if x >= s.hi {
            return 0.0;
        }
        match &self.family {
            Family::Gaussian { mu, sigma } => {
                let z = (x - mu) / sigma;
                gaussian_cdf(-z)
            }
            Family::Uniform { lo, hi } => (hi - x) / (hi - lo),
            Family::Beta { alpha, beta } => {
                special::reg_inc_beta(*beta, *alpha, 1.0 - x).expect("validated parameters")
            }
            Family::Gamma { k, theta } => {
                special::reg_upper_gamma(*k, x / theta).expect("validated parameters")
            }
            Family::Exponential { theta } => (-x / theta).exp(),
            Family::Subbotin { alpha } => {
                if x >= 0.0 {
                    subbotin_half_tail(*alpha, x)
                } else {
                    1.0 - subbotin_half_tail(*alpha, -x)
                }
            }
            Family::Weibull { k, lambda } => (-(x / lambda).powf(*k)).exp(),
            Family::Tabulated(t) => t.survival(x),
        }
    }

    /// Score function d/dx ln p(x), defined in the open support.
    pub fn dlogp(&self, x: f64) -> f64 {
        match &self.family {
            Family::Gaussian { mu, sigma } => -(x - mu) / (sigma * sigma),
            Family::Uniform { .. } => 0.0,
            Family::Beta { alpha, beta } => (alpha - 1.0) / x - (beta - 1.0) / (1.0 - x),
            Family::Gamma { k, theta } => (k - 1.0) / x - 1.0 / theta,
            Family::Exponential { theta } => -1.0 / theta,
            Family::Subbotin { alpha } => {
                if x == 0.0 {
                    0.0
                } else {
                    -x.signum() * x.abs().powf(alpha - 1.0)
                }
            }
            Family::Weibull { k, lambda } => {
                (k - 1.0) / x - (k / lambda) * (x / lambda).powf(k - 1.0)
            }
            Family::Tabulated(t) => t.dlogp(x),
        }
    }

    /// First moment.
    pub fn mean(&self) -> f64 {
        match &self.family {
            Family::Gaussian { mu, .. } => *mu,
            Family::Uniform { lo, hi } => 0.5 * (lo + hi),
            Family::Beta { alpha, beta } => alpha / (alpha + beta),
            Family::Gamma { k, theta } => k * theta,
            Family::Exponential { theta } => *theta,
            Family::Subbotin { .. } => 0.0,
            Family::Weibull { k, lambda } => lambda * special::gamma(1.0 + 1.0 / k),
            Family::Tabulated(t) => t.mean,
        }
    }

    /// τ(x) = (1/p(x)) ∫_x^hi (y − mean) p(y) dy, in closed form per family.
    pub fn stein_tau(&self, x: f64) -> f64 {
        match &self.family {
            Family::Gaussian { sigma, .. } => sigma * sigma,
            Family::Uniform { lo, hi } => 0.5 * (hi - x) * (x - lo),
            Family::Beta { alpha, beta } => x * (1.0 - x) / (alpha + beta),
            Family::Gamma { theta, .. } => theta * x,
            Family::Exponential { theta } => theta * x,
            Family::Subbotin { alpha } => {
                // τ(x) = α^{2/α−1} Γ(2/α, |x|^α/α) e^{|x|^α/α}, symmetric in x.
                // Assembled in log space: Q e^t would otherwise lose range.
                let a = *alpha;
                let t = x.abs().powf(a) / a;
                let s = 2.0 / a;
                let ln_q = special::reg_upper_gamma(s, t)
                    .expect("validated parameters")
                    .ln();
                ((s - 1.0) * a.ln() + ln_q + special::ln_gamma(s) + t).exp()
            }
            Family::Weibull { k, lambda } => {
                // τ·p = λ Γ(s) [−expm1(−u) − P(s, u)], s = 1 + 1/k, u = (x/λ)^k,
                // which is cancellation-free for small u.
                let s = 1.0 + 1.0 / k;
                let u = (x / lambda).powf(*k);
                let p_reg = special::reg_lower_gamma(s, u).expect("validated parameters");
                let tau_p = lambda * special::gamma(s) * ((-(-u).exp_m1()) - p_reg);
                tau_p / self.pdf(x)
            }
            Family::Tabulated(t) => t.stein_tau(x),
        }
    }

    /// Median.
    pub fn median(&self) -> f64 {
        self.quantile(0.5).expect("median exists for a valid density")
    }

    /// Quantile: the x with cdf(x) = u.
    pub fn quantile(&self, u: f64) -> Result<f64> {
        if !(0.0..=1.0).contains(&u) {
            return Err(Error::Domain(format!("quantile requires u in [0, 1], got {u}")));
        }
        let s = self.support();
        if u == 0.0 {
            return Ok(s.lo);
        }
        if u == 1.0 {
            return Ok(s.hi);
        }
        match &self.family {
            Family::Uniform { lo, hi } => Ok(lo + u * (hi - lo)),
            Family::Exponential { theta } => Ok(-theta * (-u).ln_1p()),
            Family::Weibull { k, lambda } => Ok(lambda * (-(-u).ln_1p()).powf(1.0 / k)),
            _ => {
                if u <= 0.5 {
                    self.solve_tail(u, Side::Lower)
                } else {
                    self.solve_tail(1.0 - u, Side::Upper)
                }
            }
        }
    }

    /// Upper quantile: the x with survival(x) = s. Accurate for s down to
    /// the smallest positive doubles, which plain `quantile(1 − s)` cannot be.
    pub fn survival_quantile(&self, sv: f64) -> Result<f64> {
        if !(0.0..=1.0).contains(&sv) {
            return Err(Error::Domain(format!(
                "survival_quantile requires s in [0, 1], got {sv}"
            )));
        }
        let s = self.support();
        if sv == 0.0 {
            return Ok(s.hi);
        }
        if sv == 1.0 {
            return Ok(s.lo);
        }
        match &self.family {
            Family::Uniform { lo, hi } => Ok(hi - sv * (hi - lo)),
            Family::Exponential { theta } => Ok(-theta * sv.ln()),
            Family::Weibull { k, lambda } => Ok(lambda * (-sv.ln()).powf(1.0 / k)),
            _ => {
                if sv <= 0.5 {
                    self.solve_tail(sv, Side::Upper)
                } else {
                    self.solve_tail(1.0 - sv, Side::Lower)
                }
            }
        }
    }

    /// Solve tail(x) = target in log space, where tail is the cdf (Lower)
    /// or the survival (Upper) — each relative-accurate on its own side.
    fn solve_tail(&self, target: f64, side: Side) -> Result<f64> {
        let s = self.support();
        let tail = |x: f64| match side {
            Side::Lower => self.cdf(x),
            Side::Upper => self.survival(x),
        };
        // Monotone direction of `tail`: increasing for Lower, decreasing for Upper.
        // Build a bracket [a, b] with tail(a) <= target <= tail(b) in the
        // increasing orientation.
        let med = match &self.family {
            Family::Gaussian { mu, .. } => *mu,
            Family::Subbotin { .. } => 0.0,
            _ => {
                // Cheap interior point: mean works for all remaining families.
                self.mean()
            }
        };
        let expansion_failed =
            || Error::Domain(format!("quantile bracket expansion failed at {target:e}"));
        let (mut a, mut b);
        match side {
            Side::Lower => {
                // Want tail(a) <= target <= tail(b) with tail = cdf increasing.
                b = med;
                let mut step = 1.0f64.max(med.abs() * 0.5);
                let mut guard = 0;
                while tail(b) < target {
                    if s.hi.is_finite() {
                        b = s.hi;
                        break;
                    }
                    b = med + step;
                    step *= 2.0;
                    guard += 1;
                    if guard > 200 {
                        return Err(expansion_failed());
                    }
                }
                step = 1.0f64.max(med.abs() * 0.5);
                a = if s.lo.is_finite() { s.lo } else { med - step };
                guard = 0;
                while !s.lo.is_finite() && tail(a) > target {
                    step *= 2.0;
                    a = med - step;
                    guard += 1;
                    if guard > 200 {
                        return Err(expansion_failed());
                    }
                }
            }
            Side::Upper => {
                // tail = survival, decreasing: want tail(b) <= target <= tail(a).
                a = med;
                let mut step = 1.0f64.max(med.abs() * 0.5);
                let mut guard = 0;
                while tail(a) < target {
                    if s.lo.is_finite() {
                        a = s.lo;
                        break;
                    }
                    a = med - step;
                    step *= 2.0;
                    guard += 1;
                    if guard > 200 {
                        return Err(expansion_failed());
                    }
                }
                step = 1.0f64.max(med.abs() * 0.5);
                b = if s.hi.is_finite() { s.hi } else { med + step };
                guard = 0;
                while !s.hi.is_finite() && tail(b) > target {
                    step *= 2.0;
                    b = med + step;
                    guard += 1;
                    if guard > 200 {
                        return Err(expansion_failed());
                    }
                }
            }
        }
        // Newton on g(x) = ln tail(x) − ln target with bisection fallback.
        // Termination is relative-only so that roots of any magnitude
        // (down to subnormal quantiles of endpoint-singular densities)
        // resolve to full precision.
        let ln_target = target.ln();
        let mut x = 0.5 * (a + b);
        for _ in 0..300 {
            let t = tail(x);
            let g = t.ln() - ln_target;
            // Maintain the bracket.
            let below = match side {
                Side::Lower => g < 0.0,
                Side::Upper => g > 0.0,
            };
            if below {
                a = x;
            } else {
                b = x;
            }
            if b - a <= 1e-15 * (a.abs() + b.abs()) {
                break;
            }
            let p = self.pdf(x);
            // d/dx ln tail = ±p/tail.
            let slope = match side {
                Side::Lower => p / t,
                Side::Upper => -p / t,
            };
            let mut next = if slope != 0.0 && g.is_finite() {
                x - g / slope
            } else {
                f64::NAN
            };
            if !(next > a && next < b) {
                next = 0.5 * (a + b);
            }
            if next == x || (next - x).abs() <= 1e-16 * x.abs() {
                x = next;
                break;
            }
            x = next;
        }
        Ok(x)
    }
}

enum Side {
    Lower,
    Upper,
}

/// Φ(z) via the regularized upper incomplete gamma: for z ≤ 0,
/// Φ(z) = Q(1/2, z²/2)/2, which keeps relative accuracy arbitrarily deep
/// in the tail; the other side uses symmetry.
fn gaussian_cdf(z: f64) -> f64 {
    if z <= 0.0 {
        0.5 * special::reg_upper_gamma(0.5, 0.5 * z * z).expect("s = 1/2 is valid")
    } else {
        1.0 - 0.5 * special::reg_upper_gamma(0.5, 0.5 * z * z).expect("s = 1/2 is valid")
    }
}

fn subbotin_ln_z(alpha: f64) -> f64 {
    // Z = 2 α^{1/α − 1} Γ(1/α).
    std::f64::consts::LN_2 + (1.0 / alpha - 1.0) * alpha.ln() + special::ln_gamma(1.0 / alpha)
}

/// P(X > x) for x ≥ 0 under the subbotin density: Q(1/α, x^α/α) / 2.
fn subbotin_half_tail(alpha: f64, x: f64) -> f64 {
    debug_assert!(x >= 0.0);
    0.5 * special::reg_upper_gamma(1.0 / alpha, x.powf(alpha) / alpha).expect("valid s")
}

// ---------------------------------------------------------------------------
// Weights
// ---------------------------------------------------------------------------

/// Weight function w on the support of a density.
#[derive(Clone, Debug, PartialEq)]
pub enum WeightSpec {
    /// w ≡ 1.
    One,
    /// w = τ of the companion density.
    SteinKernel,
    /// w = x^c; requires a positive support.
    Power(f64),
    /// w = 1 + b x², b ≥ 0.
    Rational(f64),
}

impl fmt::Display for WeightSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            WeightSpec::One => write!(f, "one"),
            WeightSpec::SteinKernel => write!(f, "stein_kernel"),
            WeightSpec::Power(c) => write!(f, "power:{c}"),
            WeightSpec::Rational(b) => write!(f, "rational:{b}"),
        }
    }
}

impl WeightSpec {
    /// Parse the CLI/file syntax: `one`, `stein_kernel`, `power:<c>`,
    /// `rational:<b>`.
    pub fn parse(text: &str) -> Result<Self> {
        let t = text.trim();
        if t == "one" {
            return Ok(WeightSpec::One);
        }
        if t == "stein_kernel" {
            return Ok(WeightSpec::SteinKernel);
        }
        if let Some(rest) = t.strip_prefix("power:") {
            let c: f64 = rest
                .parse()
                .map_err(|_| Error::Parse(format!("bad power exponent {rest:?}")))?;
            if !c.is_finite() {
                return Err(Error::InvalidParameter(format!(
                    "power exponent must be finite, got {c}"
                )));
            }
            return Ok(WeightSpec::Power(c));
        }
        if let Some(rest) = t.strip_prefix("rational:") {
            let b: f64 = rest
                .parse()
                .map_err(|_| Error::Parse(format!("bad rational coefficient {rest:?}")))?;
            if !b.is_finite() || b < 0.0 {
                return Err(Error::InvalidParameter(format!(
                    "rational coefficient must be >= 0, got {b}"
                )));
            }
            return Ok(WeightSpec::Rational(b));
        }
        Err(Error::Parse(format!(
            "unknown weight {text:?}; expected one | stein_kernel | power:<c> | rational:<b>"
        )))
    }

    /// Check compatibility with a density's support.
    pub fn validate_for(&self, d: &DensitySpec) -> Result<()> {
        if let WeightSpec::Power(c) = self {
            if *c != 0.0 && d.support().lo < 0.0 {
                return Err(Error::InvalidParameter(format!(
                    "weight power:{c} requires a nonnegative support, but {d} lives on \
                     [{}, {}]",
                    d.support().lo,
                    d.support().hi
                )));
            }
        }
        Ok(())
    }

    pub fn eval(&self, d: &DensitySpec, x: f64) -> f64 {
        match self {
            WeightSpec::One => 1.0,
            WeightSpec::SteinKernel => d.stein_tau(x),
            WeightSpec::Power(c) => {
                if *c == 0.0 {
                    1.0
                } else {
                    x.powf(*c)
                }
            }
            WeightSpec::Rational(b) => 1.0 / (1.0 + b * x * x),
        }
    }

    pub fn ln_eval(&self, d: &DensitySpec, x: f64) -> f64 {
        match self {
            WeightSpec::One => 0.0,
            WeightSpec::Power(c) => c * x.ln(),
            WeightSpec::Rational(b) => -(b * x * x).ln_1p(),
            WeightSpec::SteinKernel => self.eval(d, x).ln(),
        }
    }

    /// dw/dx. For the Stein-kernel weight this uses the exact identity
    /// τ'(x) = (mean − x) − τ(x)·(ln p)'(x).
    pub fn deriv(&self, d: &DensitySpec, x: f64) -> f64 {
        match self {
            WeightSpec::One => 0.0,
            WeightSpec::SteinKernel => (d.mean() - x) - d.stein_tau(x) * d.dlogp(x),
            WeightSpec::Power(c) => {
                if *c == 0.0 {
                    0.0
                } else {
                    c * x.powf(c - 1.0)
                }
            }
            WeightSpec::Rational(b) => {
                let den = 1.0 + b * x * x;
                -2.0 * b * x / (den * den)
            }
        }
    }
}

// ---------------------------------------------------------------------------
// Tabulated densities
// ---------------------------------------------------------------------------

#[derive(Debug)]
pub(crate) struct Tabulated {
    xs: Vec<f64>,
    /// ln of the raw (pre-normalization) pdf at xs.
    ln_p_raw: Vec<f64>,
    /// Monotone cubic slopes of ln_p_raw.
    slopes: Vec<f64>,
    /// Normalization of the interpolated raw pdf.
    z: f64,
    /// Raw ∫_{x_0}^{x_i} p. cum[0] = 0, cum[n−1] = z.
    cum: Vec<f64>,
    /// Per-interval Legendre coefficients of raw p (in the reference coord).
    p_coeffs: Vec<Vec<f64>>,
    /// Per-interval Legendre coefficients of y·raw p.
    yp_coeffs: Vec<Vec<f64>>,
    /// Raw ∫_{x_0}^{x_i} y p.
    mcum: Vec<f64>,
    mean: f64,
    basis: PanelBasis,
}

const TAB_PANEL_PTS: usize = 12;

impl Tabulated {
    fn interval_of(&self, x: f64) -> usize {
        // Largest i with xs[i] <= x, clamped to a valid interval index.
        match self
            .xs
            .binary_search_by(|v| v.partial_cmp(&x).expect("finite grid"))
        {
            Ok(i) => i.min(self.xs.len() - 2),
            Err(i) => i.saturating_sub(1).min(self.xs.len() - 2),
        }
    }

    fn hermite(&self, x: f64) -> (f64, f64) {
        // Cubic Hermite value and derivative of ln_p_raw at x.
        let i = self.interval_of(x);
        let h = self.xs[i + 1] - self.xs[i];
        let t = (x - self.xs[i]) / h;
        let (y0, y1) = (self.ln_p_raw[i], self.ln_p_raw[i + 1]);
        let (d0, d1) = (self.slopes[i], self.slopes[i + 1]);
        let t2 = t * t;
        let t3 = t2 * t;
        let h00 = 2.0 * t3 - 3.0 * t2 + 1.0;
        let h10 = t3 - 2.0 * t2 + t;
        let h01 = -2.0 * t3 + 3.0 * t2;
        let h11 = t3 - t2;
        let val = h00 * y0 + h10 * h * d0 + h01 * y1 + h11 * h * d1;
        let dh00 = 6.0 * t2 - 6.0 * t;
        let dh10 = 3.0 * t2 - 4.0 * t + 1.0;
        let dh01 = -dh00;
        let dh11 = 3.0 * t2 - 2.0 * t;
        let dval = (dh00 * y0 + dh10 * h * d0 + dh01 * y1 + dh11 * h * d1) / h;
        (val, dval)
    }

    fn ln_pdf(&self, x: f64) -> f64 {
        if x < self.xs[0] || x > *self.xs.last().expect("nonempty") {
            return f64::NEG_INFINITY;
        }
        self.hermite(x).0 - self.z.ln()
    }

    fn dlogp(&self, x: f64) -> f64 {
        self.hermite(x).1
    }

    fn cdf(&self, x: f64) -> f64 {
        let i = self.interval_of(x);
        let h = self.xs[i + 1] - self.xs[i];
        let t = 2.0 * (x - self.xs[i]) / h - 1.0;
        let partial = 0.5 * h * self.basis.eval_antiderivative(&self.p_coeffs[i], t);
        ((self.cum[i] + partial) / self.z).clamp(0.0, 1.0)
    }

    fn survival(&self, x: f64) -> f64 {
        // The table spans the entire support, so 1 − cdf is adequate here.
        (1.0 - self.cdf(x)).clamp(0.0, 1.0)
    }

    fn stein_tau(&self, x: f64) -> f64 {
        // τ = (M(x) − mean·S_raw(x)) / p_raw(x), with M(x) = ∫_x^hi y p_raw.
        let i = self.interval_of(x);
        let h = self.xs[i + 1] - self.xs[i];
        let t = 2.0 * (x - self.xs[i]) / h - 1.0;
        let m_lo = self.mcum[i] + 0.5 * h * self.basis.eval_antiderivative(&self.yp_coeffs[i], t);
        let m_total = *self.mcum.last().expect("nonempty");
        let m_tail = m_total - m_lo;
        let s_raw = self.z - (self.cum[i]
            + 0.5 * h * self.basis.eval_antiderivative(&self.p_coeffs[i], t));
        let p_raw = self.hermite(x).0.exp();
        (m_tail - self.mean * s_raw) / p_raw
    }
}

/// Monotone cubic (Fritsch–Carlson) slopes for data (xs, ys).
fn pchip_slopes(xs: &[f64], ys: &[f64]) -> Vec<f64> {
    let n = xs.len();
    let h: Vec<f64> = (0..n - 1).map(|i| xs[i + 1] - xs[i]).collect();
    let delta: Vec<f64> = (0..n - 1).map(|i| (ys[i + 1] - ys[i]) / h[i]).collect();
    let mut d = vec![0.0; n];
    for i in 1..n - 1 {
        if delta[i - 1] * delta[i] <= 0.0 {
            d[i] = 0.0;
        } else {
            let w1 = 2.0 * h[i] + h[i - 1];
            let w2 = h[i] + 2.0 * h[i - 1];
            d[i] = (w1 + w2) / (w1 / delta[i - 1] + w2 / delta[i]);
        }
    }
    // One-sided three-point endpoint slopes with the usual shape clamps.
    let end_slope = |h0: f64, h1: f64, d0: f64, d1: f64| -> f64 {
        let s = ((2.0 * h0 + h1) * d0 - h0 * d1) / (h0 + h1);
        if s * d0 <= 0.0 {
            0.0
        } else if d0 * d1 < 0.0 && s.abs() > 3.0 * d0.abs() {
            3.0 * d0
        } else {
            s
        }
    };
    d[0] = end_slope(h[0], h[1], delta[0], delta[1]);
    d[n - 1] = end_slope(h[n - 2], h[n - 3], delta[n - 2], delta[n - 3]);
    d
}

/// Build a density from (x, pdf) samples: monotone cubic interpolation of
/// ln pdf, renormalized so the interpolant integrates to 1.
pub fn density_from_samples(xs: &[f64], ps: &[f64]) -> Result<DensitySpec> {
    if xs.len() != ps.len() {
        return Err(Error::Parse(format!(
            "x and pdf columns differ in length ({} vs {})",
            xs.len(),
            ps.len()
        )));
    }
    if xs.len() < 8 {
        return Err(Error::Parse(format!(
            "tabulated density needs at least 8 points, got {}",
            xs.len()
        )));
    }
    for i in 1..xs.len() {
        if !(xs[i] > xs[i - 1]) {
            return Err(Error::Parse(format!(
                "x values must be strictly increasing; row {} has x = {} after {}",
                i + 1,
                xs[i],
                xs[i - 1]
            )));
        }
    }
    for (i, &p) in ps.iter().enumerate() {
        if !(p > 0.0) || !p.is_finite() {
            return Err(Error::Parse(format!(
                "pdf values must be positive and finite; row {} has {p}",
                i + 1
            )));
        }
    }
    let ln_p_raw: Vec<f64> = ps.iter().map(|p| p.ln()).collect();
    let slopes = pchip_slopes(xs, &ln_p_raw);
    let basis = PanelBasis::new(TAB_PANEL_PTS);
    let mut tab = Tabulated {
        xs: xs.to_vec(),
        ln_p_raw,
        slopes,
        z: 1.0,
        cum: vec![],
        p_coeffs: vec![],
        yp_coeffs: vec![],
        mcum: vec![],
        mean: 0.0,
        basis,
    };
    // Per-interval quadrature tables for p and y·p.
    let n = xs.len();
    let mut cum = vec![0.0; n];
    let mut mcum = vec![0.0; n];
    for i in 0..n - 1 {
        let h = xs[i + 1] - xs[i];
        let nodes_x: Vec<f64> = tab
            .basis
            .nodes
            .iter()
            .map(|&t| xs[i] + 0.5 * h * (t + 1.0))
            .collect();
        let pv: Vec<f64> = nodes_x.iter().map(|&x| tab.hermite(x).0.exp()).collect();
        let ypv: Vec<f64> = nodes_x.iter().zip(&pv).map(|(&x, &p)| x * p).collect();
        cum[i + 1] = cum[i] + 0.5 * h * tab.basis.integral(&pv);
        mcum[i + 1] = mcum[i] + 0.5 * h * tab.basis.integral(&ypv);
        tab.p_coeffs.push(tab.basis.legendre_coeffs(&pv));
        tab.yp_coeffs.push(tab.basis.legendre_coeffs(&ypv));
    }
    tab.z = cum[n - 1];
    if !(tab.z.is_finite() && tab.z > 0.0) {
        return Err(Error::Moment(format!(
            "tabulated density does not normalize (integral = {})",
            tab.z
        )));
    }
    tab.mean = mcum[n - 1] / tab.z;
    tab.cum = cum;
    tab.mcum = mcum;
    Ok(DensitySpec {
        family: Family::Tabulated(Arc::new(tab)),
    })
}

/// Load a tabulated density from a text file with one `x pdf` pair per line
/// (whitespace- or comma-separated; `#` starts a comment).
pub fn load_tabulated(path: &std::path::Path) -> Result<DensitySpec> {
    let text = std::fs::read_to_string(path)?;
    let mut xs = Vec::new();
    let mut ps = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line
            .split(|c: char| c.is_whitespace() || c == ',')
            .filter(|s| !s.is_empty())
            .collect();
        if fields.len() != 2 {
            return Err(Error::Parse(format!(
                "{}:{}: expected two columns (x, pdf), got {}",
                path.display(),
                lineno + 1,
                fields.len()
            )));
        }
        let x: f64 = fields[0].parse().map_err(|_| {
            Error::Parse(format!(
                "{}:{}: bad x value {:?}",
                path.display(),
                lineno + 1,
                fields[0]
            ))
        })?;
        let p: f64 = fields[1].parse().map_err(|_| {
            Error::Parse(format!(
                "{}:{}: bad pdf value {:?}",
                path.display(),
                lineno + 1,
                fields[1]
            ))
        })?;
        xs.push(x);
        ps.push(p);
    }
    density_from_samples(&xs, &ps)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::quadrature::integrate::{integrate, integrate_tail};

    fn catalog() -> Vec<DensitySpec> {
        vec![
            DensitySpec::gaussian(0.0, 1.0).unwrap(),
            DensitySpec::gaussian(-1.5, 2.5).unwrap(),
            DensitySpec::uniform(0.0, 1.0).unwrap(),
            DensitySpec::uniform(-2.0, 5.0).unwrap(),
            DensitySpec::beta(2.0, 2.0).unwrap(),
            DensitySpec::beta(0.5, 3.0).unwrap(),
            DensitySpec::beta(3.0, 2.0).unwrap(),
            DensitySpec::gamma(2.0, 1.0).unwrap(),
            DensitySpec::gamma(1.5, 0.7).unwrap(),
            DensitySpec::exponential(1.0).unwrap(),
            DensitySpec::exponential(0.25).unwrap(),
            DensitySpec::subbotin(3.0).unwrap(),
            DensitySpec::subbotin(1.5).unwrap(),
            DensitySpec::weibull(1.5, 1.0).unwrap(),
            DensitySpec::weibull(2.0, 2.0).unwrap(),
        ]
    }

    #[test]
    fn parameter_validation() {
        assert!(DensitySpec::gaussian(0.0, 0.0).is_err());
        assert!(DensitySpec::gaussian(f64::NAN, 1.0).is_err());
        assert!(DensitySpec::uniform(1.0, 1.0).is_err());
        assert!(DensitySpec::beta(-1.0, 2.0).is_err());
        assert!(DensitySpec::gamma(2.0, -1.0).is_err());
        assert!(DensitySpec::exponential(0.0).is_err());
        assert!(DensitySpec::subbotin(0.9).is_err());
        assert!(DensitySpec::weibull(0.0, 1.0).is_err());
    }

    #[test]
    fn pdf_normalizes() {
        for d in catalog() {
            let s = d.support();
            let (lo, hi) = (
                if s.lo.is_finite() { s.lo } else { d.quantile(1e-13).unwrap() },
                if s.hi.is_finite() { s.hi } else { d.survival_quantile(1e-13).unwrap() },
            );
            let r = integrate(|x| d.pdf(x), lo, hi, 0.0, 1e-11).unwrap();
            assert!(
                (r.value - 1.0).abs() < 1e-8,
                "{d}: integral = {}",
                r.value
            );
        }
    }

    #[test]
    fn cdf_survival_complement_and_monotone() {
        for d in catalog() {
            let med = d.median();
            for &u in &[0.02, 0.2, 0.5, 0.8, 0.98] {
                let x = d.quantile(u).unwrap();
                let (c, s) = (d.cdf(x), d.survival(x));
                assert!((c + s - 1.0).abs() < 1e-12, "{d} at u = {u}");
            }
            assert!((d.cdf(med) - 0.5).abs() < 1e-9, "{d} median");
        }
    }

    #[test]
    fn quantile_roundtrip() {
        for d in catalog() {
            for i in 0..50 {
                // Deterministic quasi-random u values in (0, 1).
                let u = ((i as f64 + 0.5) * 0.618_033_988_749_894_9).fract();
                let x = d.quantile(u).unwrap();
                let back = d.cdf(x);
                assert!(
                    (back - u).abs() < 1e-9,
                    "{d}: u = {u}, x = {x}, cdf(x) = {back}"
                );
            }
        }
    }

    #[test]
    fn survival_quantile_reaches_deep_tails() {
        for d in catalog() {
            // Near a finite endpoint the tail probability of x is limited by
            // the spacing of doubles around the endpoint itself, hence the
            // absolute floor; on unbounded sides the check is purely relative.
            for &sv in &[1e-4, 1e-8, 1e-12, 1e-15] {
                let x = d.survival_quantile(sv).unwrap();
                let back = d.survival(x);
                let floor = if d.support().hi.is_finite() { 1e-15 } else { 0.0 };
                assert!(
                    (back - sv).abs() < 1e-8 * sv + floor,
                    "{d}: s = {sv:e}, x = {x}, survival = {back:e}"
                );
            }
            // Lower tail through quantile.
            for &u in &[1e-8, 1e-12] {
                let x = d.quantile(u).unwrap();
                let back = d.cdf(x);
                let floor = if d.support().lo.is_finite() && d.support().lo != 0.0 {
                    1e-15
                } else {
                    0.0
                };
                assert!(
                    (back - u).abs() < 1e-8 * u + floor,
                    "{d}: u = {u:e}, cdf = {back:e}"
                );
            }
        }
    }

    #[test]
    fn dlogp_matches_log_density_slope() {
        for d in catalog() {
            for &u in &[0.15, 0.4, 0.6, 0.85] {
                let x = d.quantile(u).unwrap();
                let h = 1e-6 * (1.0 + x.abs());
                let fd = (d.ln_pdf(x + h) - d.ln_pdf(x - h)) / (2.0 * h);
                let got = d.dlogp(x);
                assert!(
                    (got - fd).abs() < 1e-5 * (1.0 + got.abs()),
                    "{d} at x = {x}: {got} vs fd {fd}"
                );
            }
        }
    }

    #[test]
    fn stein_tau_satisfies_defining_integral() {
        // τ p = ∫_x^hi (y − mean) p dy, checked by direct quadrature.
        for d in catalog() {
            let mu = d.mean();
            for &u in &[0.25, 0.5, 0.75] {
                let x = d.quantile(u).unwrap();
                let s = d.support();
                let want = if s.hi.is_finite() {
                    integrate(|y| (y - mu) * d.pdf(y), x, s.hi, 0.0, 1e-11)
                        .unwrap()
                        .value
                } else {
                    integrate_tail(|y| (y - mu) * d.pdf(y), x, 1e-12).unwrap().value
                };
                let got = d.stein_tau(x) * d.pdf(x);
                assert!(
                    (got - want).abs() < 1e-8 * (1.0 + want.abs()),
                    "{d} at x = {x}: {got} vs {want}"
                );
            }
        }
    }

    #[test]
    fn subbotin_reference_values() {
        let d = DensitySpec::subbotin(3.0).unwrap();
        assert!((d.pdf(0.0) - 0.388_229_105_7).abs() < 1e-9);
        assert!((d.stein_tau(0.0) - 0.938_892_940_1).abs() < 1e-9);
        // Symmetry.
        assert!((d.stein_tau(1.3) - d.stein_tau(-1.3)).abs() < 1e-13);
        assert!((d.cdf(-0.7) - d.survival(0.7)).abs() < 1e-15);
    }

    #[test]
    fn closed_form_means() {
        assert_eq!(DensitySpec::gamma(2.0, 1.0).unwrap().mean(), 2.0);
        assert_eq!(DensitySpec::beta(2.0, 2.0).unwrap().mean(), 0.5);
        let w = DensitySpec::weibull(1.5, 1.0).unwrap();
        assert!((w.mean() - special::gamma(1.0 + 1.0 / 1.5)).abs() < 1e-14);
    }

    #[test]
    fn weight_parse_and_eval() {
        let d = DensitySpec::exponential(1.0).unwrap();
        assert_eq!(WeightSpec::parse("one").unwrap(), WeightSpec::One);
        assert_eq!(
            WeightSpec::parse("stein_kernel").unwrap(),
            WeightSpec::SteinKernel
        );
        assert_eq!(WeightSpec::parse("power:2").unwrap(), WeightSpec::Power(2.0));
        assert_eq!(
            WeightSpec::parse("rational:0.5").unwrap(),
            WeightSpec::Rational(0.5)
        );
        assert!(WeightSpec::parse("boop").is_err());
        assert!(WeightSpec::parse("rational:-1").is_err());

        assert_eq!(WeightSpec::One.eval(&d, 3.0), 1.0);
        assert_eq!(WeightSpec::SteinKernel.eval(&d, 3.0), 3.0); // τ = θx
        assert_eq!(WeightSpec::Power(2.0).eval(&d, 3.0), 9.0);
        assert_eq!(WeightSpec::Rational(1.0).eval(&d, 2.0), 0.2);

        // power weight rejected on a support containing negatives.
        let g = DensitySpec::gaussian(0.0, 1.0).unwrap();
        assert!(WeightSpec::Power(2.0).validate_for(&g).is_err());
        assert!(WeightSpec::Power(2.0)
            .validate_for(&DensitySpec::weibull(2.0, 1.0).unwrap())
            .is_ok());
    }

    #[test]
    fn weight_derivatives() {
        let d = DensitySpec::gaussian(0.0, 1.0).unwrap();
        for &x in &[-1.0, 0.3, 2.0] {
            // Stein-kernel weight of a gaussian is constant σ².
            assert!((WeightSpec::SteinKernel.deriv(&d, x)).abs() < 1e-12);
            let r = WeightSpec::Rational(0.7);
            let den = 1.0 + 0.7 * x * x;
            assert!((r.deriv(&d, x) + 1.4 * x / (den * den)).abs() < 1e-14);
        }
        let e = DensitySpec::exponential(2.0).unwrap();
        for &x in &[0.5, 1.0, 4.0] {
            // τ = θx on the positive axis, so τ' should be θ.
            let h = 1e-6;
            let fd =
                (WeightSpec::SteinKernel.eval(&e, x + h) - WeightSpec::SteinKernel.eval(&e, x - h))
                    / (2.0 * h);
            assert!((WeightSpec::SteinKernel.deriv(&e, x) - fd).abs() < 1e-6);
            assert!((WeightSpec::SteinKernel.deriv(&e, x) - 2.0).abs() < 1e-10);
        }
    }

    #[test]
    fn tabulated_gaussian_roundtrip() {
        let d0 = DensitySpec::gaussian(0.0, 1.0).unwrap();
        let n = 200;
        let (lo, hi) = (-8.0, 8.0);
        let xs: Vec<f64> = (0..n)
            .map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64)
            .collect();
        let ps: Vec<f64> = xs.iter().map(|&x| d0.pdf(x)).collect();
        let d = density_from_samples(&xs, &ps).unwrap();
        assert_eq!(d.name(), "tabulated");
        assert!((d.cdf(0.0) - 0.5).abs() < 1e-6);
        assert!((d.mean()).abs() < 1e-9);
        assert!((d.stein_tau(0.0) - 1.0).abs() < 1e-3);
        // Shape-preserving slopes trade a small O(h²) bias for monotonicity.
        assert!((d.dlogp(1.0) + 1.0).abs() < 5e-3);
        for &u in &[0.1, 0.5, 0.9] {
            let x = d.quantile(u).unwrap();
            assert!((d.cdf(x) - u).abs() < 1e-9, "u = {u}");
        }
        // Normalization of the interpolant.
        let r = integrate(|x| d.pdf(x), lo, hi, 0.0, 1e-11).unwrap();
        assert!((r.value - 1.0).abs() < 1e-6, "integral = {}", r.value);
    }

    #[test]
    fn tabulated_rejects_bad_input() {
        let xs = vec![0.0, 1.0, 0.5, 2.0, 3.0, 4.0, 5.0, 6.0];
        let ps = vec![1.0; 8];
        assert!(matches!(
            density_from_samples(&xs, &ps),
            Err(Error::Parse(_))
        ));
        let xs: Vec<f64> = (0..5).map(|i| i as f64).collect();
        let ps = vec![1.0; 5];
        assert!(density_from_samples(&xs, &ps).is_err()); // too few points
        let xs: Vec<f64> = (0..8).map(|i| i as f64).collect();
        let mut ps = vec![1.0; 8];
        ps[3] = 0.0;
        assert!(density_from_samples(&xs, &ps).is_err()); // nonpositive pdf
    }
}
