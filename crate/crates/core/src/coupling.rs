//! Quantile coupling `W = H(Φ(Z))` of a standardized sum with a standard
//! normal variable on one probability space.

use std::io::Write;

use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use statrs::function::gamma::ln_gamma;

use crate::bounds::{gaussian_cdf, gaussian_tail, normal_quantile, normal_quantile_upper};
use crate::error::{Error, Result};
use crate::montecarlo::Engine;

/// Exact law of `(ε_1 + … + ε_n)/√n` for Rademacher signs: atoms
/// `(2k − n)/√n` with binomial weights.
#[derive(Debug, Clone, PartialEq)]
pub struct BinomialLattice {
    pub n: usize,
    pub values: Vec<f64>,
    pub pmf: Vec<f64>,
    /// `F_k = P(W ≤ values[k])`.
    pub lower: Vec<f64>,
    /// `1 − F_k`, summed from the top so it keeps relative precision.
    pub upper: Vec<f64>,
}

impl BinomialLattice {
    pub fn new(n: usize) -> Result<Self> {
        if n == 0 {
            return Err(Error::param("n", "must be ≥ 1"));
        }
        let nf = n as f64;
        let rn = nf.sqrt();
        let pmf: Vec<f64> = if n <= 1000 {
            // C(n, k) by recurrence (exact while below 2^53), scaled by the
            // exactly representable 2^{-n}
            let scale = 0.5f64.powi(n as i32);
            let mut c = 1.0;
            (0..=n)
                .map(|k| {
                    let p = c * scale;
                    c = c * (n - k) as f64 / (k + 1) as f64;
                    p
                })
                .collect()
        } else {
            let ln_total = ln_gamma(nf + 1.0) - nf * std::f64::consts::LN_2;
            (0..=n)
                .map(|k| {
                    let k = k as f64;
                    (ln_total - ln_gamma(k + 1.0) - ln_gamma(nf - k + 1.0)).exp()
                })
                .collect()
        };
        let values = (0..=n).map(|k| (2.0 * k as f64 - nf) / rn).collect();
        let mut lower = Vec::with_capacity(n + 1);
        let mut acc = 0.0;
        for p in &pmf {
            acc += p;
            lower.push(acc);
        }
        let mut upper = vec![0.0; n + 1];
        let mut acc = 0.0;
        for k in (0..n).rev() {
            acc += pmf[k + 1];
            upper[k] = acc;
        }
        Ok(Self {
            n,
            values,
            pmf,
            lower,
            upper,
        })
    }

    /// `P(W > x)`.
    pub fn tail_above(&self, x: f64) -> f64 {
        let slack = crate::event::THRESHOLD_SLACK * (1.0 + x.abs());
        match self.values.iter().position(|&v| v > x + slack) {
            Some(0) => 1.0,
            Some(k) => self.upper[k - 1],
            None => 0.0,
        }
    }

    /// `sup_x |P(W ≤ x) − Φ(x)|`, attained at a lattice point from one side.
    pub fn sup_distance_to_normal(&self) -> f64 {
        let mut sup: f64 = 0.0;
        for k in 0..=self.n {
            let phi = gaussian_cdf(self.values[k]);
            let before = if k == 0 { 0.0 } else { self.lower[k - 1] };
            sup = sup
                .max((self.lower[k] - phi).abs())
                .max((before - phi).abs());
        }
        sup
    }
}

/// Generalized inverse `H(s) = inf{x : F(x) ≥ s}` of a distribution function.
#[derive(Debug, Clone, PartialEq)]
pub enum QuantileFunction {
    /// Exact Rademacher sum; `cuts[k] = Φ^{-1}(F_k)` so that
    /// `H(Φ(z)) = values[k]` for the smallest `k` with `z ≤ cuts[k]`.
    ExactRademacher {
        lattice: BinomialLattice,
        cuts: Vec<f64>,
    },
    /// Empirical distribution of sorted samples, attached to horizon `n`.
    Empirical { sorted: Vec<f64>, n: usize },
    /// `Φ^{-1}` itself, attached to horizon `n`.
    StandardNormal { n: usize },
}

impl QuantileFunction {
    pub fn exact_rademacher(n: usize) -> Result<Self> {
        let lattice = BinomialLattice::new(n)?;
        let cuts = (0..=n)
            .map(|k| {
                if k == n {
                    f64::INFINITY
                } else if lattice.lower[k] <= 0.5 {
                    normal_quantile(lattice.lower[k])
                } else {
                    normal_quantile_upper(lattice.upper[k])
                }
            })
            .collect();
        Ok(Self::ExactRademacher { lattice, cuts })
    }

    pub fn empirical(mut samples: Vec<f64>, n: usize) -> Result<Self> {
        if samples.is_empty() {
            return Err(Error::param("samples", "must be nonempty"));
        }
        if samples.iter().any(|v| v.is_nan()) {
            return Err(Error::param("samples", "contain NaN"));
        }
        samples.sort_by(f64::total_cmp);
        Ok(Self::Empirical { sorted: samples, n })
    }

    pub fn standard_normal(n: usize) -> Self {
        Self::StandardNormal { n }
    }

    pub fn n(&self) -> usize {
        match self {
            Self::ExactRademacher { lattice, .. } => lattice.n,
            Self::Empirical { n, .. } | Self::StandardNormal { n } => *n,
        }
    }

    /// `H(s)` for `s ∈ (0, 1)`.
    pub fn evaluate(&self, s: f64) -> Result<f64> {
        if !(s > 0.0 && s < 1.0) {
            return Err(Error::param("s", format!("{s} not in (0, 1)")));
        }
        Ok(match self {
            Self::ExactRademacher { lattice, .. } => {
                let k = lattice
                    .lower
                    .iter()
                    .position(|&f| f >= s)
                    .unwrap_or(lattice.n);
                lattice.values[k]
            }
            Self::Empirical { sorted, .. } => sorted[empirical_index(s, sorted.len())],
            Self::StandardNormal { .. } => normal_quantile(s),
        })
    }

    /// `H(Φ(z))`, evaluated without forming `Φ(z)` where possible.
    pub fn compose_normal(&self, z: f64) -> f64 {
        match self {
            Self::ExactRademacher { lattice, cuts } => {
                let k = cuts.partition_point(|&c| c < z);
                lattice.values[k.min(lattice.n)]
            }
            Self::Empirical { sorted, .. } => {
                let s = gaussian_cdf(z).clamp(f64::MIN_POSITIVE, 1.0 - f64::EPSILON / 2.0);
                sorted[empirical_index(s, sorted.len())]
            }
            Self::StandardNormal { .. } => z,
        }
    }

    /// `P(H(Φ(Z)) = values[k])` as the normal measure of `(cuts[k−1], cuts[k]]`.
    pub fn atom_probabilities(&self) -> Option<Vec<f64>> {
        let Self::ExactRademacher { cuts, .. } = self else {
            return None;
        };
        let measure_below = |c: f64| {
            if c <= 0.0 {
                gaussian_cdf(c)
            } else {
                1.0 - gaussian_tail(c)
            }
        };
        Some(
            (0..cuts.len())
                .map(|k| {
                    let hi = cuts[k];
                    let lo = if k == 0 {
                        f64::NEG_INFINITY
                    } else {
                        cuts[k - 1]
                    };
                    if lo >= 0.0 {
                        gaussian_tail(lo) - gaussian_tail(hi)
                    } else {
                        measure_below(hi) - measure_below(lo)
                    }
                })
                .collect(),
        )
    }
}

/// 0-based index of the order statistic `⌈sN⌉`.
fn empirical_index(s: f64, len: usize) -> usize {
    let target = s * len as f64;
    let mut k = target.ceil() as usize;
    // guard against s·N landing one ulp above an integer
    if k > 1 && ((k - 1) as f64) >= target {
        k -= 1;
    }
    k.clamp(1, len) - 1
}

/// One coupled pair.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CouplingSample {
    pub z: f64,
    pub w: f64,
    /// `√n |w − z| / ln n`.
    pub deviation: f64,
}

pub fn couple(qf: &QuantileFunction, z: f64) -> CouplingSample {
    let w = qf.compose_normal(z);
    let n = qf.n() as f64;
    let deviation = if n > 1.0 {
        n.sqrt() * (w - z).abs() / n.ln()
    } else {
        f64::NAN
    };
    CouplingSample { z, w, deviation }
}

/// Summary of one coupling experiment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CouplingReport {
    pub n: usize,
    pub seed: u64,
    /// Smallest `D` with `deviation ≤ 2D(W² + 1)` on `{|W| ≤ α√n}`.
    pub d_hat: f64,
    /// Least-squares slope of `ln P̂(deviation > x)` against `x`.
    pub tail_slope: f64,
    pub tail_intercept: f64,
    /// Fraction of draws with `|W| ≤ α√n`.
    pub frac_event: f64,
    pub budget: u64,
    pub alpha: f64,
    pub warnings: Vec<String>,
}

pub const COUPLING_COLUMNS: [&str; 7] = [
    "n",
    "seed",
    "D_hat",
    "tail_slope",
    "tail_intercept",
    "frac_event",
    "budget",
];

/// Draws from which a tail fit is considered resolved.
pub const MIN_TAIL_BUDGET: u64 = 10_000;

/// Couples `budget` standard normal draws with the exact Rademacher sum at
/// horizon `n` and summarizes the deviation `√n|W − Z|/ln n`.
pub fn coupling_tail_report(
    n: usize,
    budget: u64,
    seed: u64,
    alpha: f64,
    engine: &Engine,
) -> Result<CouplingReport> {
    if n < 2 {
        return Err(Error::param("n", "must be ≥ 2 so that ln n > 0"));
    }
    if budget == 0 {
        return Err(Error::param("budget", "must be ≥ 1"));
    }
    if !(alpha > 0.0) {
        return Err(Error::param("alpha", format!("{alpha} must be positive")));
    }
    let qf = QuantileFunction::exact_rademacher(n)?;
    let samples = engine.collect(budget, seed, |rng, _| {
        let z: f64 = StandardNormal.sample(rng);
        couple(&qf, z)
    });
    let limit = alpha * (n as f64).sqrt();
    let mut d_hat: f64 = 0.0;
    let mut in_event = 0u64;
    for s in &samples {
        if s.w.abs() <= limit {
            in_event += 1;
            d_hat = d_hat.max(s.deviation / (2.0 * (s.w * s.w + 1.0)));
        }
    }
    let mut devs: Vec<f64> = samples.iter().map(|s| s.deviation).collect();
    devs.sort_by(f64::total_cmp);
    let (tail_slope, tail_intercept) = fit_exponential_tail(&devs);
    let mut warnings = Vec::new();
    if budget < MIN_TAIL_BUDGET {
        warnings.push(format!(
            "budget {budget} below {MIN_TAIL_BUDGET}: tail fit is poorly resolved"
        ));
    }
    Ok(CouplingReport {
        n,
        seed,
        d_hat,
        tail_slope,
        tail_intercept,
        frac_event: in_event as f64 / budget as f64,
        budget,
        alpha,
        warnings,
    })
}

/// Fits `ln P̂(D > x) ≈ intercept + slope·x` at empirical quantiles whose
/// survival runs geometrically from 1/2 down to 50 expected exceedances.
pub fn fit_exponential_tail(sorted: &[f64]) -> (f64, f64) {
    let len = sorted.len();
    if len < 200 {
        return (f64::NAN, f64::NAN);
    }
    let nf = len as f64;
    let floor = 50.0 / nf;
    let mut pts: Vec<(f64, f64)> = Vec::new();
    let mut q = 0.5;
    while q >= floor {
        let x = sorted[((1.0 - q) * nf) as usize];
        let above = len - sorted.partition_point(|&d| d <= x);
        if above > 0 && pts.last().is_none_or(|&(px, _)| x > px) {
            pts.push((x, (above as f64 / nf).ln()));
        }
        q *= 0.5;
    }
    if pts.len() < 2 {
        return (f64::NAN, f64::NAN);
    }
    let m = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / m;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / m;
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx) * (p.0 - mx)).sum();
    let slope = sxy / sxx;
    (slope, my - slope * mx)
}

impl CouplingReport {
    pub fn write_csv(reports: &[CouplingReport], out: impl Write, config: &str) -> Result<()> {
        crate::montecarlo::write_csv_with_header(out, config, &COUPLING_COLUMNS, |w| {
            for r in reports {
                w.write_record([
                    r.n.to_string(),
                    r.seed.to_string(),
                    r.d_hat.to_string(),
                    r.tail_slope.to_string(),
                    r.tail_intercept.to_string(),
                    r.frac_event.to_string(),
                    r.budget.to_string(),
                ])?;
            }
            Ok(())
        })
    }
}
