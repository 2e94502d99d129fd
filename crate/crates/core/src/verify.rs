//! Closed-form inequality suites run by `martdev verify`.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::bounds::{gaussian_sandwich, gaussian_tail};
use crate::error::Result;
use crate::models::{
    certify, make_heavy_left, make_rademacher, make_regime_switch, make_two_point, Comparison,
    MartingaleModel,
};
use crate::rng::stream;
use crate::tilt::inequalities::{
    first_order_remainder, implied_cumulant_constant, rademacher_cumulant, rademacher_drift_bound,
    second_moment_bound, second_order_remainder,
};

/// Outcome of one suite: number of checked points, violations and the
/// largest `lhs/rhs` seen.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SuiteResult {
    pub name: String,
    pub checks: u64,
    pub violations: u64,
    pub worst_ratio: f64,
    pub note: Option<String>,
}

impl SuiteResult {
    fn new(name: &str) -> Self {
        Self {
            name: name.to_string(),
            checks: 0,
            violations: 0,
            worst_ratio: 0.0,
            note: None,
        }
    }

    fn record(&mut self, c: Comparison) {
        self.checks += 1;
        if !c.holds() {
            self.violations += 1;
        }
        if c.rhs > 0.0 {
            self.worst_ratio = self.worst_ratio.max(c.lhs / c.rhs);
        } else if c.lhs > 0.0 {
            self.worst_ratio = f64::INFINITY;
        }
    }

    pub fn passed(&self) -> bool {
        self.violations == 0 && self.checks > 0
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerifyReport {
    pub suites: Vec<SuiteResult>,
}

impl VerifyReport {
    pub fn passed(&self) -> bool {
        self.suites.iter().all(SuiteResult::passed)
    }
}

/// Both exponential remainder inequalities at `points` random `(x, ρ)` with
/// `x ∈ [−50, 50]`, `ρ ∈ (0, 1]`.
pub fn elementary_suites(points: u64, seed: u64) -> (SuiteResult, SuiteResult) {
    let mut first = SuiteResult::new("first_order_remainder");
    let mut second = SuiteResult::new("second_order_remainder");
    let mut rng = stream(seed, 0);
    for _ in 0..points {
        let x = rng.random_range(-50.0..=50.0);
        // 1 − [0, 1) lands in (0, 1]
        let rho = 1.0 - rng.random::<f64>();
        first.record(first_order_remainder(x, rho));
        second.record(second_order_remainder(x, rho));
    }
    (first, second)
}

/// Lower and upper Gaussian sandwich on `x = 0, 0.01, …, 10`.
pub fn gaussian_sandwich_suite() -> SuiteResult {
    let mut s = SuiteResult::new("gaussian_sandwich");
    for i in 0..=1000 {
        let x = f64::from(i) * 0.01;
        let (lo, hi) = gaussian_sandwich(x).expect("x ≥ 0");
        let tail = gaussian_tail(x);
        s.record(Comparison { lhs: lo, rhs: tail });
        s.record(Comparison { lhs: tail, rhs: hi });
    }
    s
}

fn certified_models() -> Result<Vec<MartingaleModel>> {
    let mut out = Vec::new();
    for n in [4, 100, 10_000] {
        out.push(make_rademacher(n)?);
    }
    for p in [0.1, 0.3, 0.7] {
        out.push(make_two_point(100, p)?);
    }
    for g in [0.0, 0.3, 0.45] {
        out.push(make_regime_switch(100, g)?);
    }
    out.push(make_heavy_left(100, 0.5, 8)?);
    Ok(out)
}

/// `E[ξ²] ≤ ε_n²` for every conditional law of every model that certifies.
pub fn second_moment_suite() -> Result<SuiteResult> {
    let mut s = SuiteResult::new("second_moment_bound");
    let mut skipped = Vec::new();
    for model in certified_models()? {
        let Ok(cert) = certify(&model) else {
            skipped.push(model.name().to_string());
            continue;
        };
        for law in model.laws() {
            s.record(second_moment_bound(law, cert.eps_n));
        }
    }
    if !skipped.is_empty() {
        s.note = Some(format!("not certifiable, skipped: {}", skipped.join(", ")));
    }
    Ok(s)
}

/// `λ = 0, …, 1/ε_n` in `points` equal steps.
pub fn lambda_grid(eps: f64, points: usize) -> Vec<f64> {
    (0..points)
        .map(|i| i as f64 / (points - 1) as f64 / eps)
        .collect()
}

/// Rademacher drift bound on the λ grid for several horizons, plus the
/// largest implied cumulant constant `c₁` on the same grid.
pub fn rademacher_grid_suites(points: usize) -> Result<(SuiteResult, SuiteResult)> {
    let mut drift = SuiteResult::new("rademacher_drift_bound");
    let mut cumulant = SuiteResult::new("rademacher_cumulant_bound");
    let mut c1: f64 = 0.0;
    for n in [4, 100, 10_000] {
        let model = make_rademacher(n)?;
        let cert = certify(&model)?;
        let rho = model.rho();
        for lambda in lambda_grid(cert.eps_n, points) {
            drift.record(rademacher_drift_bound(
                n,
                lambda,
                rho,
                cert.eps_n,
                cert.delta_n,
            ));
            let psi = rademacher_cumulant(n, lambda);
            let c = implied_cumulant_constant(psi, lambda, rho, cert.eps_n, cert.delta_n);
            cumulant.checks += 1;
            if !c.is_finite() {
                cumulant.violations += 1;
            }
            c1 = c1.max(c);
        }
    }
    cumulant.worst_ratio = c1;
    cumulant.note = Some(format!("implied c1 = {c1:.6}"));
    Ok((drift, cumulant))
}

/// Every closed-form suite at the default sizes.
pub fn run_all(seed: u64) -> Result<VerifyReport> {
    let (first, second) = elementary_suites(1_000_000, seed);
    let (drift, cumulant) = rademacher_grid_suites(1000)?;
    Ok(VerifyReport {
        suites: vec![
            first,
            second,
            gaussian_sandwich_suite(),
            second_moment_suite()?,
            drift,
            cumulant,
        ],
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn small_suites_pass() {
        let (a, b) = elementary_suites(10_000, 3);
        assert!(a.passed() && b.passed());
        assert!(gaussian_sandwich_suite().passed());
        let (d, c) = rademacher_grid_suites(50).unwrap();
        assert!(d.passed() && c.passed());
        assert!(second_moment_suite().unwrap().passed());
    }

    #[test]
    fn grid_endpoints() {
        let g = lambda_grid(0.5, 5);
        assert_eq!(g.first(), Some(&0.0));
        assert_eq!(g.last(), Some(&2.0));
    }
}
