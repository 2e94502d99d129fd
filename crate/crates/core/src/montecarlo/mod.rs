//! Plain and importance-sampled tail estimation on the deterministic engine.

mod engine;
mod report;

use serde::{Deserialize, Serialize};
use statrs::function::beta::inv_beta_reg;

use crate::error::{Error, Result};
use crate::event::TailEvent;
use crate::models::{sample_path, MartingaleModel};
use crate::tilt::TiltedModel;

pub use engine::{Compensated, Engine, CHUNK};
pub(crate) use report::write_csv_with_header;
pub use report::{
    check_mdp_rule, mdp_scan, ratio_report, MdpRow, MdpScan, RatioOptions, RatioReport, RatioRow,
};

/// Two-sided 95% normal quantile.
pub const Z95: f64 = 1.959_963_984_540_054;

/// Effective sample size below which a weighted estimate is flagged.
pub const MIN_ESS: f64 = 10.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Estimator {
    Plain,
    Tilted { lambda: f64 },
}

/// Tail probability estimate with its uncertainty.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TailEstimate {
    pub p_hat: f64,
    /// `ln p̂`, finite even when `p̂` underflows.
    pub ln_p_hat: f64,
    pub std_err: f64,
    pub ci95: (f64, f64),
    pub ess: f64,
    pub n_samples: u64,
    pub estimator: Estimator,
    /// Set when the effective sample size is below [`MIN_ESS`].
    pub unreliable: bool,
}

impl TailEstimate {
    /// Relative standard error `se / p̂`.
    pub fn rel_se(&self) -> f64 {
        if self.p_hat > 0.0 {
            self.std_err / self.p_hat
        } else {
            f64::INFINITY
        }
    }
}

/// Exact Clopper–Pearson interval for `k` successes out of `n`.
pub fn clopper_pearson(k: u64, n: u64, level: f64) -> (f64, f64) {
    let a = 0.5 * (1.0 - level);
    let (kf, nf) = (k as f64, n as f64);
    let lo = if k == 0 {
        0.0
    } else {
        inv_beta_reg(kf, nf - kf + 1.0, a)
    };
    let hi = if k == n {
        1.0
    } else {
        inv_beta_reg(kf + 1.0, nf - kf, 1.0 - a)
    };
    (lo, hi)
}

fn check_budget(n_samples: u64) -> Result<()> {
    if n_samples == 0 {
        Err(Error::param("n_samples", "must be ≥ 1"))
    } else {
        Ok(())
    }
}

/// Hit-or-miss estimate of `P(event)` with a Clopper–Pearson interval.
pub fn estimate_tail_plain(
    model: &MartingaleModel,
    event: TailEvent,
    n_samples: u64,
    seed: u64,
    engine: &Engine,
) -> Result<TailEstimate> {
    check_budget(n_samples)?;
    let [hits] = engine.sum(n_samples, seed, |rng, _| {
        [f64::from(u8::from(
            event.contains(sample_path(model, rng).terminal()),
        ))]
    });
    let k = hits.round() as u64;
    let nf = n_samples as f64;
    let p = k as f64 / nf;
    Ok(TailEstimate {
        p_hat: p,
        ln_p_hat: p.ln(),
        std_err: (p * (1.0 - p) / nf).sqrt(),
        ci95: clopper_pearson(k, n_samples, 0.95),
        ess: nf,
        n_samples,
        estimator: Estimator::Plain,
        unreliable: false,
    })
}

/// Importance-sampling estimate `E_λ[e^{−λX_n+Ψ_n} 1{event}]`.
///
/// Weights are accumulated relative to `exp(−λx + n·max ψ)`, which bounds
/// every weight on the event, so tiny probabilities keep full precision and
/// their logarithm stays finite.
pub fn estimate_tail_tilted(
    model: &MartingaleModel,
    event: TailEvent,
    lambda: f64,
    n_samples: u64,
    seed: u64,
    engine: &Engine,
) -> Result<TailEstimate> {
    check_budget(n_samples)?;
    let tilted = TiltedModel::new(model, lambda)?;
    let psi_max = model
        .laws()
        .iter()
        .map(|l| crate::tilt::tilt_law(l, lambda).map(|t| t.step_log_mgf))
        .collect::<Result<Vec<_>>>()?
        .into_iter()
        .fold(f64::NEG_INFINITY, f64::max)
        * model.n() as f64;
    let x = event.level();
    let reference = if x.is_finite() {
        -lambda * x + psi_max
    } else {
        0.0
    };
    let [s1, s2] = engine.sum(n_samples, seed, |rng, _| {
        let (terminal, log_w) = tilted.sample_terminal(rng);
        if event.contains(terminal) {
            let w = (log_w - reference).exp();
            [w, w * w]
        } else {
            [0.0, 0.0]
        }
    });
    let nf = n_samples as f64;
    let mean = s1 / nf;
    let var = if n_samples > 1 {
        ((s2 - nf * mean * mean) / (nf - 1.0)).max(0.0)
    } else {
        0.0
    };
    let se_scaled = (var / nf).sqrt();
    let ess = if s2 > 0.0 { s1 * s1 / s2 } else { 0.0 };
    let scale = reference.exp();
    let p = mean * scale;
    let ci95 = if mean > 0.0 {
        let spread = (Z95 * se_scaled / mean).exp();
        (p / spread, p * spread)
    } else {
        (0.0, 0.0)
    };
    Ok(TailEstimate {
        p_hat: p,
        ln_p_hat: reference + mean.ln(),
        std_err: se_scaled * scale,
        ci95,
        ess,
        n_samples,
        estimator: Estimator::Tilted { lambda },
        unreliable: ess < MIN_ESS,
    })
}
