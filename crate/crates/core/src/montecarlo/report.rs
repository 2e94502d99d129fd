//! Ratio reports against the Gaussian tail and moderate-deviation scans.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::bounds::{gaussian_tail, ln_gaussian_tail, ratio_envelope, BoundParams};
use crate::error::{Error, Result};
use crate::event::TailEvent;
use crate::models::{Certificate, DeltaConvention, MartingaleModel};
use crate::rng::derive_seed;
use crate::tilt::{choose_tilt, within_bound_range};

use super::{estimate_tail_tilted, Engine, TailEstimate};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RatioOptions {
    /// Grid points above `alpha / ε_n` are flagged as outside the bound's range.
    pub alpha: f64,
    /// Constant multiplying the bound's right side.
    pub c: f64,
    pub delta: DeltaConvention,
}

impl Default for RatioOptions {
    fn default() -> Self {
        Self {
            alpha: 1.0,
            c: 1.0,
            delta: DeltaConvention::FromN,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RatioRow {
    pub x: f64,
    pub seed: u64,
    pub lambda: f64,
    pub tilt_converged: bool,
    pub estimate: TailEstimate,
    pub gauss_tail: f64,
    pub ratio: f64,
    pub log_ratio: f64,
    pub log_ratio_ci: (f64, f64),
    pub bound_lo: f64,
    pub bound_hi: f64,
    pub in_range: bool,
}

impl RatioRow {
    /// Largest distance from 1 of the ratio's confidence interval.
    pub fn ci_deviation(&self) -> f64 {
        let lo = self.estimate.ci95.0 / self.gauss_tail;
        let hi = self.estimate.ci95.1 / self.gauss_tail;
        (1.0 - lo).abs().max((hi - 1.0).abs())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RatioReport {
    pub model: String,
    pub n: usize,
    pub budget: u64,
    pub rows: Vec<RatioRow>,
    pub warnings: Vec<String>,
}

pub const RATIO_COLUMNS: [&str; 13] = [
    "x",
    "p_hat",
    "se",
    "ci_lo",
    "ci_hi",
    "gauss_tail",
    "ratio",
    "log_ratio",
    "bound_lo",
    "bound_hi",
    "ess",
    "n_samples",
    "seed",
];

impl RatioReport {
    /// CSV with a leading `# config: …` comment line.
    pub fn write_csv(&self, out: impl Write, config: &str) -> Result<()> {
        write_csv_with_header(out, config, &RATIO_COLUMNS, |w| {
            for r in &self.rows {
                w.write_record([
                    r.x.to_string(),
                    r.estimate.p_hat.to_string(),
                    r.estimate.std_err.to_string(),
                    r.estimate.ci95.0.to_string(),
                    r.estimate.ci95.1.to_string(),
                    r.gauss_tail.to_string(),
                    r.ratio.to_string(),
                    r.log_ratio.to_string(),
                    r.bound_lo.to_string(),
                    r.bound_hi.to_string(),
                    r.estimate.ess.to_string(),
                    r.estimate.n_samples.to_string(),
                    r.seed.to_string(),
                ])?;
            }
            Ok(())
        })
    }
}

pub(crate) fn write_csv_with_header(
    mut out: impl Write,
    config: &str,
    columns: &[&str],
    body: impl FnOnce(&mut csv::Writer<&mut dyn Write>) -> csv::Result<()>,
) -> Result<()> {
    writeln!(out, "# config: {config}")?;
    let mut w = csv::Writer::from_writer(&mut out as &mut dyn Write);
    let run = |w: &mut csv::Writer<&mut dyn Write>| -> csv::Result<()> {
        w.write_record(columns)?;
        body(w)?;
        w.flush()?;
        Ok(())
    };
    run(&mut w).map_err(|e| Error::Io(e.to_string()))
}

/// Tilted estimates of `P(X_n > x)` over a grid, compared with `1 − Φ(x)`
/// and the bound envelope `exp{±RHS(x)}` built from the certificate.
pub fn ratio_report(
    model: &MartingaleModel,
    cert: &Certificate,
    x_grid: &[f64],
    budget: u64,
    seed: u64,
    opts: &RatioOptions,
    engine: &Engine,
) -> Result<RatioReport> {
    if x_grid.is_empty() {
        return Err(Error::param("x_grid", "must be nonempty"));
    }
    let params = BoundParams::with_constant(cert.rho, cert.eps_n, cert.delta(opts.delta), opts.c)?;
    let mut rows = Vec::with_capacity(x_grid.len());
    let mut warnings = Vec::new();
    for (i, &x) in x_grid.iter().enumerate() {
        if !(x >= 0.0 && x.is_finite()) {
            return Err(Error::param(
                "x_grid",
                format!("{x} must be finite and ≥ 0"),
            ));
        }
        let choice = choose_tilt(model, x)?;
        if let Some(reason) = &choice.fallback {
            warnings.push(format!("x={x}: tilt fallback: {reason}"));
        }
        let row_seed = derive_seed(seed, i as u64);
        let est = estimate_tail_tilted(
            model,
            TailEvent::Above(x),
            choice.lambda,
            budget,
            row_seed,
            engine,
        )?;
        if est.unreliable {
            warnings.push(format!(
                "x={x}: effective sample size {:.1} is too small",
                est.ess
            ));
        }
        let in_range = x * cert.eps_n <= opts.alpha;
        if !in_range {
            warnings.push(format!(
                "x={x}: above alpha/eps_n = {:.4}",
                opts.alpha / cert.eps_n
            ));
        }
        if !within_bound_range(choice.lambda, cert.eps_n) {
            warnings.push(format!(
                "x={x}: tilt λ={:.4} exceeds 1/eps_n",
                choice.lambda
            ));
        }
        let gauss = gaussian_tail(x);
        let log_ratio = est.ln_p_hat - ln_gaussian_tail(x);
        let (lo, hi) = ratio_envelope(x, &params);
        rows.push(RatioRow {
            x,
            seed: row_seed,
            lambda: choice.lambda,
            tilt_converged: choice.converged,
            gauss_tail: gauss,
            ratio: est.p_hat / gauss,
            log_ratio,
            log_ratio_ci: (est.ci95.0.ln() - gauss.ln(), est.ci95.1.ln() - gauss.ln()),
            bound_lo: lo,
            bound_hi: hi,
            in_range,
            estimate: est,
        });
    }
    Ok(RatioReport {
        model: model.name().to_string(),
        n: model.n(),
        budget,
        rows,
        warnings,
    })
}

/// Rejects scaling rules `a_n = n^γ` that do not satisfy `a_n → ∞` and
/// `a_n ε_n → 0` for `ε_n ∝ n^{-1/2}`.
pub fn check_mdp_rule(gamma: f64) -> Result<()> {
    if !(gamma > 0.0 && gamma < 0.5) {
        return Err(Error::param(
            "gamma",
            format!("a_n = n^{gamma} needs 0 < γ < 1/2 so that a_n → ∞ and a_n·ε_n → 0"),
        ));
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MdpRow {
    pub n: usize,
    pub a_n: f64,
    pub level: f64,
    pub lambda: f64,
    pub estimate: TailEstimate,
    /// `(1/a_n²) ln P̂(X_n ≥ a_n b)`.
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MdpScan {
    pub b: f64,
    pub gamma: f64,
    pub target: f64,
    pub rows: Vec<MdpRow>,
}

pub const MDP_COLUMNS: [&str; 9] = [
    "n", "a_n", "level", "lambda", "p_hat", "ln_p_hat", "se", "value", "target",
];

impl MdpScan {
    /// Whether `|value − target|` is nonincreasing along the scan.
    pub fn monotone_toward_target(&self) -> bool {
        self.rows
            .windows(2)
            .all(|w| (w[1].value - self.target).abs() <= (w[0].value - self.target).abs())
    }

    pub fn write_csv(&self, out: impl Write, config: &str) -> Result<()> {
        write_csv_with_header(out, config, &MDP_COLUMNS, |w| {
            for r in &self.rows {
                w.write_record([
                    r.n.to_string(),
                    r.a_n.to_string(),
                    r.level.to_string(),
                    r.lambda.to_string(),
                    r.estimate.p_hat.to_string(),
                    r.estimate.ln_p_hat.to_string(),
                    r.estimate.std_err.to_string(),
                    r.value.to_string(),
                    self.target.to_string(),
                ])?;
            }
            Ok(())
        })
    }
}

/// `(1/a_n²) ln P̂(X_n ≥ a_n b)` for `a_n = n^γ` over a list of horizons,
/// estimated with the tilt that centers `X_n` at `a_n b`.
pub fn mdp_scan(
    family: impl Fn(usize) -> Result<MartingaleModel>,
    ns: &[usize],
    gamma: f64,
    b: f64,
    budget: u64,
    seed: u64,
    engine: &Engine,
) -> Result<MdpScan> {
    check_mdp_rule(gamma)?;
    if !(b >= 0.0 && b.is_finite()) {
        return Err(Error::param("b", format!("{b} must be finite and ≥ 0")));
    }
    let mut rows = Vec::with_capacity(ns.len());
    for (i, &n) in ns.iter().enumerate() {
        let model = family(n)?;
        let a_n = (n as f64).powf(gamma);
        let level = a_n * b;
        let choice = choose_tilt(&model, level)?;
        let estimate = estimate_tail_tilted(
            &model,
            TailEvent::AtLeast(level),
            choice.lambda,
            budget,
            derive_seed(seed, i as u64),
            engine,
        )?;
        rows.push(MdpRow {
            n,
            a_n,
            level,
            lambda: choice.lambda,
            value: estimate.ln_p_hat / (a_n * a_n),
            estimate,
        });
    }
    Ok(MdpScan {
        b,
        gamma,
        target: -0.5 * b * b,
        rows,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::{certify, make_rademacher};

    #[test]
    fn rule_check() {
        assert!(check_mdp_rule(0.25).is_ok());
        assert!(check_mdp_rule(0.5).is_err());
        assert!(check_mdp_rule(0.0).is_err());
    }

    #[test]
    fn envelope_at_zero_matches_bound() {
        let m = make_rademacher(100).unwrap();
        let cert = certify(&m).unwrap();
        let e = Engine::new(1).unwrap();
        let rep = ratio_report(&m, &cert, &[0.0], 2000, 1, &RatioOptions::default(), &e).unwrap();
        let r = &rep.rows[0];
        let p = BoundParams::new(1.0, cert.eps_n, 0.0).unwrap();
        let rhs = crate::bounds::berry_esseen_term(&p);
        assert!((r.bound_hi - rhs.exp()).abs() < 1e-15);
        assert!((r.bound_lo - (-rhs).exp()).abs() < 1e-15);
        assert!((r.ratio - r.estimate.p_hat / 0.5).abs() < 1e-15);
        let mut buf = Vec::new();
        rep.write_csv(&mut buf, "{}").unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("# config: {}\nx,p_hat,se,"));
    }
}
