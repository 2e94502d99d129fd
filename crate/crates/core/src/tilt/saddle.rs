//! Saddle-point equations fixing the tilt in the upper and lower tail bounds.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Default constant in the saddle equations.
pub const SADDLE_C: f64 = 6.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SaddleKind {
    /// `λ + λδ² + cλ^{1+ρ}ε^ρ = x`
    Upper,
    /// `λ − λδ² − cλ^{1+ρ}ε^ρ = x`, smallest positive root
    Lower,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SaddleSolution {
    pub kind: SaddleKind,
    pub x: f64,
    pub lambda: f64,
    pub equation_residual: f64,
    pub c_const: f64,
}

fn validate(x: f64, rho: f64, eps: f64, delta: f64, c: f64) -> Result<()> {
    if !(x >= 0.0 && x.is_finite()) {
        return Err(Error::param("x", format!("{x} must be finite and ≥ 0")));
    }
    if !(rho > 0.0 && rho <= 1.0) {
        return Err(Error::param("rho", format!("{rho} not in (0, 1]")));
    }
    if !(eps >= 0.0 && delta >= 0.0 && eps.is_finite() && delta.is_finite()) {
        return Err(Error::param("eps/delta", "must be finite and ≥ 0"));
    }
    if !(c > 0.0 && c.is_finite()) {
        return Err(Error::param("c", format!("{c} must be positive")));
    }
    Ok(())
}

/// Bisection on an increasing `g` over `[lo, hi]` with `g(lo) ≤ 0 ≤ g(hi)`,
/// then Newton polishing kept inside the final bracket.
fn increasing_root(
    g: impl Fn(f64) -> f64,
    dg: impl Fn(f64) -> f64,
    mut lo: f64,
    mut hi: f64,
) -> f64 {
    for _ in 0..2000 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if g(mid) <= 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let mut best = if g(lo).abs() <= g(hi).abs() { lo } else { hi };
    for _ in 0..4 {
        let d = dg(best);
        if !(d > 0.0) {
            break;
        }
        let next = best - g(best) / d;
        if next.is_finite() && next >= lo && next <= hi && g(next).abs() < g(best).abs() {
            best = next;
        } else {
            break;
        }
    }
    best
}

/// Positive solution `λ̄` of `λ + λδ² + cλ^{1+ρ}ε^ρ = x`.
pub fn solve_saddle_upper(
    x: f64,
    rho: f64,
    eps: f64,
    delta: f64,
    c: f64,
) -> Result<SaddleSolution> {
    validate(x, rho, eps, delta, c)?;
    let a = 1.0 + delta * delta;
    let b = c * eps.powf(rho);
    let g = |l: f64| l * a + b * l.powf(1.0 + rho) - x;
    let dg = |l: f64| a + b * (1.0 + rho) * l.powf(rho);
    let lambda = if b == 0.0 {
        x / a
    } else {
        increasing_root(g, dg, 0.0, x / a)
    };
    Ok(SaddleSolution {
        kind: SaddleKind::Upper,
        x,
        lambda,
        equation_residual: g(lambda).abs(),
        c_const: c,
    })
}

/// Smallest positive solution `λ̲` of `λ − λδ² − cλ^{1+ρ}ε^ρ = x`.
///
/// The left side increases up to its stationary point and decreases after, so
/// targets above its maximum have no root and are reported as such.
pub fn solve_saddle_lower(
    x: f64,
    rho: f64,
    eps: f64,
    delta: f64,
    c: f64,
) -> Result<SaddleSolution> {
    validate(x, rho, eps, delta, c)?;
    let a = 1.0 - delta * delta;
    if a <= 0.0 {
        return Err(Error::NoRoot(format!(
            "δ = {delta} ≥ 1 leaves no increasing branch"
        )));
    }
    let b = c * eps.powf(rho);
    let h = |l: f64| l * a - b * l.powf(1.0 + rho) - x;
    let dh = |l: f64| a - b * (1.0 + rho) * l.powf(rho);
    let lambda = if b == 0.0 {
        x / a
    } else {
        let peak = (a / (b * (1.0 + rho))).powf(1.0 / rho);
        let top = h(peak) + x;
        if x > top {
            return Err(Error::NoRoot(format!(
                "x = {x} exceeds the maximum {top:.6e} reached at λ = {peak:.6e}"
            )));
        }
        increasing_root(h, dh, 0.0, peak)
    };
    Ok(SaddleSolution {
        kind: SaddleKind::Lower,
        x,
        lambda,
        equation_residual: h(lambda).abs(),
        c_const: c,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unperturbed_equations_return_x() {
        for x in [0.0, 0.5, 3.0] {
            assert_eq!(solve_saddle_upper(x, 0.5, 0.0, 0.0, 6.0).unwrap().lambda, x);
            assert_eq!(solve_saddle_lower(x, 0.5, 0.0, 0.0, 6.0).unwrap().lambda, x);
        }
    }

    #[test]
    fn quadratic_upper_root() {
        let s = solve_saddle_upper(1.0, 1.0, 0.1, 0.0, 6.0).unwrap();
        // 0.6λ² + λ − 1 = 0
        let exact = (-1.0 + (1.0f64 + 2.4).sqrt()) / 1.2;
        assert!((s.lambda - exact).abs() < 1e-14);
        assert!(s.equation_residual < 1e-12 * 2.0);
    }

    #[test]
    fn ordering_and_no_root() {
        let up = solve_saddle_upper(2.0, 0.5, 1e-4, 0.1, 6.0).unwrap();
        let lo = solve_saddle_lower(2.0, 0.5, 1e-4, 0.1, 6.0).unwrap();
        assert!(up.lambda <= 2.0 && 2.0 <= lo.lambda);
        assert!(lo.equation_residual < 1e-12 * 3.0);
        assert!(matches!(
            solve_saddle_lower(50.0, 1.0, 0.1, 0.0, 6.0),
            Err(Error::NoRoot(_))
        ));
        assert!(matches!(
            solve_saddle_lower(1.0, 1.0, 0.1, 1.0, 6.0),
            Err(Error::NoRoot(_))
        ));
    }
}
