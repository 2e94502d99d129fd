//! Pointwise inequalities behind the tilting estimates, evaluated stably.

use crate::models::{Comparison, ConditionalLaw};

use super::saddle::SADDLE_C;

/// `Σ_{k ≥ from} x^k / k!` for small `|x|`.
fn exp_tail_series(x: f64, from: u32) -> f64 {
    let mut term: f64 = (1..=from).fold(1.0, |t, k| t * x / f64::from(k));
    let mut sum = 0.0_f64;
    let mut k = from;
    while term.abs() > f64::EPSILON * sum.abs() * 1e-3 && k < from + 60 {
        sum += term;
        k += 1;
        term *= x / f64::from(k);
    }
    sum
}

/// `e^x − 1 − x`.
pub fn exp_remainder_1(x: f64) -> f64 {
    if x.abs() < 0.5 {
        exp_tail_series(x, 2)
    } else {
        x.exp_m1() - x
    }
}

/// `e^x − 1 − x − x²/2`.
pub fn exp_remainder_2(x: f64) -> f64 {
    if x.abs() < 0.5 {
        exp_tail_series(x, 3)
    } else {
        x.exp_m1() - x - 0.5 * x * x
    }
}

/// `|x(e^x − 1 − x)| ≤ 2|x|^{2+ρ} e^{x⁺}`.
pub fn first_order_remainder(x: f64, rho: f64) -> Comparison {
    Comparison {
        lhs: (x * exp_remainder_1(x)).abs(),
        rhs: 2.0 * x.abs().powf(2.0 + rho) * x.max(0.0).exp(),
    }
}

/// `|e^x − 1 − x − x²/2| ≤ |x|^{2+ρ} e^{x⁺}`.
pub fn second_order_remainder(x: f64, rho: f64) -> Comparison {
    Comparison {
        lhs: exp_remainder_2(x).abs(),
        rhs: x.abs().powf(2.0 + rho) * x.max(0.0).exp(),
    }
}

/// `E[ξ²] ≤ ε²` for a standardized conditional law.
pub fn second_moment_bound(law: &ConditionalLaw, eps: f64) -> Comparison {
    Comparison {
        lhs: law.variance(),
        rhs: eps * eps,
    }
}

/// Rademacher drift `B_n(λ) = √n tanh(λ/√n)` against
/// `|B_n(λ) − λ| ≤ λδ² + 6λ^{1+ρ}ε^ρ`.
pub fn rademacher_drift_bound(n: usize, lambda: f64, rho: f64, eps: f64, delta: f64) -> Comparison {
    let rn = (n as f64).sqrt();
    let b = rn * (lambda / rn).tanh();
    Comparison {
        lhs: (b - lambda).abs(),
        rhs: lambda * delta * delta + SADDLE_C * lambda.powf(1.0 + rho) * eps.powf(rho),
    }
}

/// Rademacher cumulant `Ψ_n(λ) = n ln cosh(λ/√n)`.
pub fn rademacher_cumulant(n: usize, lambda: f64) -> f64 {
    let rn = (n as f64).sqrt();
    let u = lambda / rn;
    // ln cosh u = |u| + ln(1 + e^{−2|u|}) − ln 2, stable for large |u|
    let lc = if u.abs() < 0.5 {
        -0.5 * (-u.tanh().powi(2)).ln_1p()
    } else {
        u.abs() + (-2.0 * u.abs()).exp().ln_1p() - std::f64::consts::LN_2
    };
    n as f64 * lc
}

/// Smallest `c₁ ≥ 0` making
/// `|Ψ_n(λ) − λ²/2| ≤ 2(1 + c₁(λε)^{2−ρ}) λ^{2+ρ} ε^ρ + λ²δ²/2` hold at one `λ`.
pub fn implied_cumulant_constant(psi: f64, lambda: f64, rho: f64, eps: f64, delta: f64) -> f64 {
    let lhs = (psi - 0.5 * lambda * lambda).abs();
    let base = 2.0 * lambda.powf(2.0 + rho) * eps.powf(rho) + 0.5 * lambda * lambda * delta * delta;
    let scale = 2.0 * (lambda * eps).powf(2.0 - rho) * lambda.powf(2.0 + rho) * eps.powf(rho);
    if lhs <= base {
        0.0
    } else if scale > 0.0 {
        (lhs - base) / scale
    } else {
        f64::INFINITY
    }
}
