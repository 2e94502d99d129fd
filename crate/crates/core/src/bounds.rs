//! Closed-form evaluators: Gaussian tail, tail-ratio bounds, CLT rate terms
//! and a Bernstein-type exponential inequality.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

use std::f64::consts::FRAC_1_SQRT_2;

/// `1/√2 − FRAC_1_SQRT_2`, the rounding error of the constant.
const FRAC_1_SQRT_2_LO: f64 = -4.833_646_656_726_457e-17;

/// `1 − Φ(x)` through the complementary error function.
///
/// The argument `x/√2` is carried in two parts; the rounding of a single
/// product would otherwise be amplified by `x²` in the far tail.
pub fn gaussian_tail(x: f64) -> f64 {
    if x.is_infinite() {
        return if x > 0.0 { 0.0 } else { 1.0 };
    }
    let hi = x * FRAC_1_SQRT_2;
    let lo = x.mul_add(FRAC_1_SQRT_2, -hi) + x * FRAC_1_SQRT_2_LO;
    let core = libm::erfc(hi);
    // erfc(hi + lo) ≈ erfc(hi) − lo·(2/√π)e^{−hi²}
    0.5 * (core - lo * std::f64::consts::FRAC_2_SQRT_PI * (-hi * hi).exp())
}

/// `Φ(x)`, accurate in the lower tail.
pub fn gaussian_cdf(x: f64) -> f64 {
    gaussian_tail(-x)
}

fn gaussian_density(x: f64) -> f64 {
    (-0.5 * x * x).exp() * (0.5 * std::f64::consts::FRAC_2_SQRT_PI * FRAC_1_SQRT_2)
}

/// `z` with `Φ(z) = p`, for `p ∈ (0, 1)`.
pub fn normal_quantile(p: f64) -> f64 {
    if p <= 0.0 {
        return f64::NEG_INFINITY;
    }
    if p >= 1.0 {
        return f64::INFINITY;
    }
    if p > 0.5 {
        return -refine_lower(1.0 - p);
    }
    refine_lower(p)
}

/// `z` with `1 − Φ(z) = q`, for `q ∈ (0, 1)`; precise for tiny `q`.
pub fn normal_quantile_upper(q: f64) -> f64 {
    if q <= 0.0 {
        return f64::INFINITY;
    }
    if q >= 1.0 {
        return f64::NEG_INFINITY;
    }
    -refine_lower(q)
}

/// Solves `Φ(z) = p` for `p ≤ 1/2`: `erfc⁻¹` start, then Halley steps on the
/// accurate CDF.
fn refine_lower(p: f64) -> f64 {
    let mut z = -std::f64::consts::SQRT_2 * statrs::function::erf::erfc_inv(2.0 * p);
    for _ in 0..3 {
        let d = gaussian_density(z);
        if d == 0.0 {
            break;
        }
        let r = (gaussian_cdf(z) - p) / d;
        z -= r / (1.0 + 0.5 * z * r);
    }
    z
}

/// `ln(1 − Φ(x))`, finite far into the upper tail where the tail underflows.
pub fn ln_gaussian_tail(x: f64) -> f64 {
    let t = gaussian_tail(x);
    if t > 1e-300 {
        return t.ln();
    }
    // Mills ratio continued fraction: 1 − Φ(x) = φ(x)/(x + 1/(x + 2/(x + …)))
    let mut cf = x;
    for k in (1..=60).rev() {
        cf = x + f64::from(k) / cf;
    }
    -0.5 * x * x - 0.5 * (2.0 * std::f64::consts::PI).ln() - cf.ln()
}

/// Lower and upper bounds `e^{−x²/2}/(√(2π)(1+x))` and `e^{−x²/2}/(√π(1+x))`
/// on `1 − Φ(x)` for `x ≥ 0`.
pub fn gaussian_sandwich(x: f64) -> Result<(f64, f64)> {
    if !(x >= 0.0) {
        return Err(Error::param("x", format!("{x} must be ≥ 0")));
    }
    let core = (-0.5 * x * x).exp() / (1.0 + x);
    let pi = std::f64::consts::PI;
    Ok((core / (2.0 * pi).sqrt(), core / pi.sqrt()))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Regime {
    RhoLt1,
    RhoEq1,
}

/// Parameters of the tail-ratio bounds. `c` stands in for the unspecified
/// constant and defaults to 1.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundParams {
    pub rho: f64,
    pub eps_n: f64,
    pub delta_n: f64,
    pub c: f64,
}

impl BoundParams {
    pub fn new(rho: f64, eps_n: f64, delta_n: f64) -> Result<Self> {
        Self::with_constant(rho, eps_n, delta_n, 1.0)
    }

    pub fn with_constant(rho: f64, eps_n: f64, delta_n: f64, c: f64) -> Result<Self> {
        if !(rho > 0.0 && rho <= 1.0) {
            return Err(Error::param("rho", format!("{rho} not in (0, 1]")));
        }
        if !(eps_n >= 0.0 && delta_n >= 0.0 && eps_n.is_finite() && delta_n.is_finite()) {
            return Err(Error::param("eps_n/delta_n", "must be finite and ≥ 0"));
        }
        if !(c > 0.0 && c.is_finite()) {
            return Err(Error::param("c", format!("{c} must be positive")));
        }
        Ok(Self {
            rho,
            eps_n,
            delta_n,
            c,
        })
    }

    pub fn regime(&self) -> Regime {
        if self.rho < 1.0 {
            Regime::RhoLt1
        } else {
            Regime::RhoEq1
        }
    }

    /// `ε^ρ` for `ρ < 1`, `ε|ln ε|` for `ρ = 1` with `ε` clamped to `(0, 1/2]`.
    pub fn eps_tilde(&self) -> f64 {
        match self.regime() {
            Regime::RhoLt1 => self.eps_n.powf(self.rho),
            Regime::RhoEq1 => eps_log(self.eps_n),
        }
    }
}

fn eps_log(eps: f64) -> f64 {
    if eps == 0.0 {
        0.0
    } else {
        let e = eps.min(0.5);
        e * e.ln().abs()
    }
}

/// `c(x^{2+ρ}ε^ρ + x²δ² + (1+x)(ε̃ + δ))`.
pub fn tail_ratio_rhs(x: f64, p: &BoundParams) -> f64 {
    let x = x.max(0.0);
    p.c * (x.powf(2.0 + p.rho) * p.eps_n.powf(p.rho)
        + x * x * p.delta_n * p.delta_n
        + (1.0 + x) * (p.eps_tilde() + p.delta_n))
}

/// Single bound valid for every `ρ ∈ (0, 1]`:
/// `c(x^{2+ρ}ε^ρ + x²δ² + (1+x)(ε^ρ|ln ε| + δ))`.
pub fn combined_rhs(x: f64, p: &BoundParams) -> f64 {
    let x = x.max(0.0);
    let e = p.eps_n.min(0.5);
    let log_term = if e == 0.0 {
        0.0
    } else {
        e.powf(p.rho) * e.ln().abs()
    };
    p.c * (x.powf(2.0 + p.rho) * p.eps_n.powf(p.rho)
        + x * x * p.delta_n * p.delta_n
        + (1.0 + x) * (log_term + p.delta_n))
}

/// Uniform CLT rate `c(ε̃ + δ)`.
pub fn berry_esseen_term(p: &BoundParams) -> f64 {
    p.c * (p.eps_tilde() + p.delta_n)
}

/// `exp{∓ tail_ratio_rhs}`: the envelope for `P(X_n > x)/(1 − Φ(x))`.
pub fn ratio_envelope(x: f64, p: &BoundParams) -> (f64, f64) {
    let r = tail_ratio_rhs(x, p);
    ((-r).exp(), r.exp())
}

/// `2 exp{−x²/(2(1 + M/n + xL/(3√n)))}`.
pub fn bernstein_tail_bound(x: f64, n: usize, m: f64, l: f64) -> Result<f64> {
    if !(x >= 0.0) {
        return Err(Error::param("x", format!("{x} must be ≥ 0")));
    }
    if n == 0 {
        return Err(Error::param("n", "must be ≥ 1"));
    }
    if !(m >= 0.0) {
        return Err(Error::param("M", format!("{m} must be ≥ 0")));
    }
    if !(l > 0.0) {
        return Err(Error::param("L", format!("{l} must be > 0")));
    }
    let n = n as f64;
    let denom = 2.0 * (1.0 + m / n + x * l / (3.0 * n.sqrt()));
    Ok(2.0 * (-x * x / denom).exp())
}

/// Right side of the ψ-mixing tail-ratio bound for interlaced block sums with
/// `m = ⌊n^α⌋`: for `ρ < 1`
/// `c(x^{2+ρ}/n^{ρ(½−α)} + x²τ² + (1+x)(n^{−ρ(½−α)} + τ))`, and for `ρ = 1`
/// `c(x³/n^{½−α} + x²τ² + (1+x)(|ln n|/n^{½−α} + τ))`.
pub fn mixing_ratio_rhs(x: f64, n: usize, alpha: f64, rho: f64, tau_n: f64, c: f64) -> f64 {
    let x = x.max(0.0);
    let n = n as f64;
    let scale = n.powf(rho * (0.5 - alpha));
    let lead = x.powf(2.0 + rho) / scale;
    let rate = if rho < 1.0 {
        1.0 / scale
    } else {
        n.ln().abs() / scale
    };
    c * (lead + x * x * tau_n * tau_n + (1.0 + x) * (rate + tau_n))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    #[allow(clippy::excessive_precision)]
    fn gaussian_tail_values() {
        assert_eq!(gaussian_tail(0.0), 0.5);
        assert_eq!(gaussian_tail(f64::INFINITY), 0.0);
        assert_eq!(gaussian_tail(f64::NEG_INFINITY), 1.0);
        assert!(gaussian_tail(f64::NAN).is_nan());
        // 40-digit reference values of 1 − Φ(x)
        let reference = [
            (1.0, 0.158_655_253_931_457_051_414_767_5),
            (3.0, 1.349_898_031_630_094_526_651_815e-3),
            (5.0, 2.866_515_718_791_939_116_737_523e-7),
            (8.0, 6.220_960_574_271_784_123_515_995e-16),
            (10.0, 7.619_853_024_160_526_065_973_343e-24),
            (20.0, 2.753_624_118_606_233_695_075_623e-89),
            (30.0, 4.906_713_927_148_187_059_533_809e-198),
        ];
        for (x, t) in reference {
            let rel = (gaussian_tail(x) - t).abs() / t;
            assert!(rel < 1e-14, "x={x}: relative error {rel:e}");
        }
        for x in [0.3, 1.7, 4.0] {
            assert!((gaussian_tail(-x) - (1.0 - gaussian_tail(x))).abs() < 1e-15);
        }
        // continued fraction agrees with erfc where both are representable
        for x in [10.0_f64, 20.0, 30.0] {
            let direct = gaussian_tail(x).ln();
            let mut cf = x;
            for k in (1..=60).rev() {
                cf = x + f64::from(k) / cf;
            }
            let via_cf = -0.5 * x * x - 0.5 * (2.0 * std::f64::consts::PI).ln() - cf.ln();
            assert!((direct - via_cf).abs() < 1e-12 * direct.abs());
        }
        assert!(ln_gaussian_tail(45.0).is_finite());
    }

    #[test]
    fn quantile_inverts_cdf() {
        for p in [1e-300, 1e-20, 1e-5, 0.025, 0.3, 0.5] {
            let z = normal_quantile(p);
            // one ulp of z moves Φ(z) by about |z|·ulp(z) relative
            assert!(
                (gaussian_cdf(z) - p).abs() <= 1e-14 * (1.0 + z * z) * p,
                "p={p}"
            );
        }
        assert_eq!(normal_quantile(0.5), 0.0);
        assert!((normal_quantile(0.975) - 1.959_963_984_540_054).abs() < 1e-14);
        let z = normal_quantile_upper(1e-30);
        assert!((gaussian_tail(z) / 1e-30 - 1.0).abs() < 1e-14);
    }

    #[test]
    fn sandwich_at_zero() {
        let (lo, hi) = gaussian_sandwich(0.0).unwrap();
        assert!((lo - 0.398_942_280_401_432_7).abs() < 1e-15);
        assert!((hi - 0.564_189_583_547_756_3).abs() < 1e-15);
        assert!(gaussian_sandwich(-0.1).is_err());
    }

    #[test]
    fn ratio_rhs_hand_values() {
        let p = BoundParams::new(1.0, 0.0, 0.0).unwrap();
        assert_eq!(tail_ratio_rhs(0.0, &p), 0.0);
        let p = BoundParams::new(0.5, 0.1, 0.1).unwrap();
        assert!((tail_ratio_rhs(0.0, &p) - (0.1f64.sqrt() + 0.1)).abs() < 1e-15);
        let p = BoundParams::new(1.0, 0.1, 0.0).unwrap();
        assert!((p.eps_tilde() - 0.1 * 10f64.ln()).abs() < 1e-15);
        assert!((tail_ratio_rhs(0.0, &p) - berry_esseen_term(&p)).abs() < 1e-15);
        let p = BoundParams::new(1.0, (-1.0f64).exp(), 0.0).unwrap();
        assert!((berry_esseen_term(&p) - (-1.0f64).exp()).abs() < 1e-15);
        // ε clamped to 1/2 in the log term
        let p = BoundParams::new(1.0, 0.9, 0.0).unwrap();
        assert!((p.eps_tilde() - 0.5 * 2f64.ln()).abs() < 1e-15);
    }

    #[test]
    fn bernstein_values() {
        assert_eq!(bernstein_tail_bound(0.0, 10, 0.0, 1.0).unwrap(), 2.0);
        let far = bernstein_tail_bound(2.0, 1 << 40, 0.0, 1.0).unwrap();
        assert!((far - 2.0 * (-2.0f64).exp()).abs() < 1e-5);
        assert!(bernstein_tail_bound(1.0, 0, 0.0, 1.0).is_err());
        assert!(bernstein_tail_bound(1.0, 5, 0.0, 0.0).is_err());
    }

    #[test]
    fn mixing_rhs_reduces_in_independent_case() {
        let r = mixing_ratio_rhs(0.0, 10_000, 0.3, 0.5, 0.0, 1.0);
        assert!((r - 10_000f64.powf(-0.1)).abs() < 1e-15);
    }
}
