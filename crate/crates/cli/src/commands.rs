//! One runner per subcommand.

use std::fmt::Write as _;
use std::path::PathBuf;

use martdev_core::coupling::{coupling_tail_report, CouplingReport};
use martdev_core::montecarlo::RatioOptions;
use martdev_core::{
    certify as certify_model, mdp_scan, mixing_tail_experiment, ratio_report, verify as suites,
    Engine, MarkovChain, ModelSpec,
};
use serde::Serialize;

use crate::config::{ExperimentConfig, ListSpec, Scalar};
use crate::CliError;

pub struct Context {
    pub engine: Engine,
    pub out: Option<PathBuf>,
}

impl Context {
    /// Writes `body` to `DIR/file` with the summary on stdout, or `body` to
    /// stdout with the summary on stderr.
    fn emit(&self, file: &str, body: &[u8], summary: &str) -> Result<(), CliError> {
        use std::io::Write;
        match &self.out {
            Some(dir) => {
                std::fs::create_dir_all(dir)?;
                let path = dir.join(file);
                std::fs::write(&path, body)?;
                print!("{summary}");
                println!("wrote {}", path.display());
            }
            None => {
                std::io::stdout().write_all(body)?;
                eprint!("{summary}");
            }
        }
        Ok(())
    }
}

fn warn(warnings: &[String]) {
    for w in warnings {
        eprintln!("warning: {w}");
    }
}

fn fill_seed(cfg: &mut ExperimentConfig) -> u64 {
    *cfg.seed.get_or_insert(0)
}

fn fill_budget(cfg: &mut ExperimentConfig, default: u64) -> Result<u64, CliError> {
    cfg.budget.get_or_insert(Scalar::Integer(default));
    let b = cfg.budget()?;
    cfg.budget = Some(Scalar::Integer(b));
    Ok(b)
}

fn model_spec(cfg: &ExperimentConfig, n: usize) -> Result<ModelSpec, CliError> {
    let name = cfg
        .model
        .as_deref()
        .ok_or_else(|| CliError::Usage("model is required".into()))?;
    let mut spec = ModelSpec::new(name, n);
    spec.params = cfg.params.clone();
    Ok(spec)
}

fn csv_bytes(
    write: impl FnOnce(&mut Vec<u8>) -> martdev_core::Result<()>,
) -> Result<Vec<u8>, CliError> {
    let mut buf = Vec::new();
    write(&mut buf)?;
    Ok(buf)
}

#[derive(Serialize)]
struct JsonArtifact<'a, T: Serialize> {
    config: &'a ExperimentConfig,
    result: &'a T,
}

fn json_bytes<T: Serialize>(cfg: &ExperimentConfig, result: &T) -> Result<Vec<u8>, CliError> {
    let mut v = serde_json::to_vec_pretty(&JsonArtifact {
        config: cfg,
        result,
    })
    .map_err(|e| CliError::Runtime(e.to_string()))?;
    v.push(b'\n');
    Ok(v)
}

pub fn verify(mut cfg: ExperimentConfig, ctx: &Context) -> Result<(), CliError> {
    cfg.check_fields("verify", &[])?;
    cfg.command = Some("verify".into());
    let seed = fill_seed(&mut cfg);
    let report = suites::run_all(seed)?;
    let mut s = format!(
        "{:<28} {:>9} {:>10} {:>12}  note\n",
        "suite", "checks", "violations", "worst"
    );
    for r in &report.suites {
        let _ = writeln!(
            s,
            "{:<28} {:>9} {:>10} {:>12.6}  {}",
            r.name,
            r.checks,
            r.violations,
            r.worst_ratio,
            r.note.as_deref().unwrap_or("")
        );
    }
    ctx.emit("verify.json", &json_bytes(&cfg, &report)?, &s)?;
    if report.passed() {
        Ok(())
    } else {
        let failed: Vec<&str> = report
            .suites
            .iter()
            .filter(|r| !r.passed())
            .map(|r| r.name.as_str())
            .collect();
        Err(CliError::Assertion(format!(
            "suites with violations: {}",
            failed.join(", ")
        )))
    }
}

pub fn certify(mut cfg: ExperimentConfig, ctx: &Context) -> Result<(), CliError> {
    cfg.check_fields("certify", &["model", "n", "params"])?;
    cfg.command = Some("certify".into());
    cfg.seed = None;
    let n = cfg.single_n()?;
    let model = model_spec(&cfg, n)?.build()?;
    let cert = certify_model(&model)?;
    let s = format!(
        "{} n={} rho={} K={} L={} N={} eps_n={:.6e} delta_n={:.6e} delta_n(L)={:.6e}\n",
        cert.model,
        cert.n,
        cert.rho,
        cert.k,
        cert.l,
        cert.n_const,
        cert.eps_n,
        cert.delta_n,
        cert.delta_n_from_l
    );
    ctx.emit("certify.json", &json_bytes(&cfg, &cert)?, &s)
}

pub fn tail(mut cfg: ExperimentConfig, ctx: &Context) -> Result<(), CliError> {
    cfg.check_fields(
        "tail",
        &[
            "model",
            "n",
            "params",
            "x",
            "budget",
            "alpha",
            "c",
            "delta_from",
        ],
    )?;
    cfg.command = Some("tail".into());
    let seed = fill_seed(&mut cfg);
    let budget = fill_budget(&mut cfg, 100_000)?;
    cfg.x.get_or_insert(ListSpec::Text("0:4:0.5".into()));
    let defaults = RatioOptions::default();
    let opts = RatioOptions {
        alpha: *cfg.alpha.get_or_insert(defaults.alpha),
        c: *cfg.c.get_or_insert(defaults.c),
        delta: cfg.delta_convention()?,
    };
    cfg.delta_from.get_or_insert("n".into());
    let n = cfg.single_n()?;
    let model = model_spec(&cfg, n)?.build()?;
    let cert = certify_model(&model)?;
    let report = ratio_report(
        &model,
        &cert,
        &cfg.x_grid()?,
        budget,
        seed,
        &opts,
        &ctx.engine,
    )?;
    warn(&report.warnings);
    let mut s = format!(
        "{} n={} budget={budget}\n{:>8} {:>12} {:>10} {:>10} {:>22}\n",
        report.model, report.n, "x", "p_hat", "rel_se", "ratio", "envelope"
    );
    for r in &report.rows {
        let _ = writeln!(
            s,
            "{:>8} {:>12.5e} {:>10.3e} {:>10.5} {:>10.4e}..{:<10.4e}",
            r.x,
            r.estimate.p_hat,
            r.estimate.std_err / r.estimate.p_hat,
            r.ratio,
            r.bound_lo,
            r.bound_hi
        );
    }
    let body = csv_bytes(|b| report.write_csv(b, &cfg.echo()))?;
    ctx.emit("tail.csv", &body, &s)
}

pub fn mdp(mut cfg: ExperimentConfig, ctx: &Context) -> Result<(), CliError> {
    cfg.check_fields("mdp", &["model", "n", "params", "budget", "rate", "b"])?;
    cfg.command = Some("mdp".into());
    let seed = fill_seed(&mut cfg);
    let budget = fill_budget(&mut cfg, 100_000)?;
    cfg.model.get_or_insert("rademacher".into());
    cfg.n
        .get_or_insert(ListSpec::Values(vec![100.0, 1000.0, 10000.0]));
    let rate = *cfg.rate.get_or_insert(0.25);
    let b = *cfg.b.get_or_insert(1.0);
    let ns = cfg.normalize_n()?;
    let spec = model_spec(&cfg, 1)?;
    let family = |n: usize| ModelSpec { n, ..spec.clone() }.build();
    let scan = mdp_scan(family, &ns, rate, b, budget, seed, &ctx.engine)?;
    let mut s = format!(
        "a_n = n^{rate}, b = {b}, target {}\n{:>8} {:>10} {:>12} {:>12}\n",
        scan.target, "n", "a_n", "ln_p_hat", "value"
    );
    for r in &scan.rows {
        let _ = writeln!(
            s,
            "{:>8} {:>10.4} {:>12.5} {:>12.6}",
            r.n, r.a_n, r.estimate.ln_p_hat, r.value
        );
    }
    let body = csv_bytes(|w| scan.write_csv(w, &cfg.echo()))?;
    ctx.emit("mdp.csv", &body, &s)
}

pub fn couple(mut cfg: ExperimentConfig, ctx: &Context) -> Result<(), CliError> {
    cfg.check_fields("couple", &["n", "budget", "alpha"])?;
    cfg.command = Some("couple".into());
    let seed = fill_seed(&mut cfg);
    let budget = fill_budget(&mut cfg, 100_000)?;
    cfg.n
        .get_or_insert(ListSpec::Values(vec![100.0, 400.0, 1600.0]));
    let alpha = *cfg.alpha.get_or_insert(0.125);
    let mut reports = Vec::new();
    for n in cfg.normalize_n()? {
        let r = coupling_tail_report(n, budget, seed, alpha, &ctx.engine)?;
        warn(&r.warnings);
        reports.push(r);
    }
    let mut s = format!(
        "alpha={alpha} budget={budget}\n{:>8} {:>12} {:>12} {:>10}\n",
        "n", "D_hat", "tail_slope", "frac_event"
    );
    for r in &reports {
        let _ = writeln!(
            s,
            "{:>8} {:>12.5} {:>12.5} {:>10.4}",
            r.n, r.d_hat, r.tail_slope, r.frac_event
        );
    }
    let body = csv_bytes(|w| CouplingReport::write_csv(&reports, w, &cfg.echo()))?;
    ctx.emit("couple.csv", &body, &s)
}

pub fn mixing(mut cfg: ExperimentConfig, ctx: &Context) -> Result<(), CliError> {
    cfg.check_fields(
        "mixing",
        &[
            "chain",
            "chain_file",
            "two_state",
            "n",
            "x",
            "budget",
            "alpha",
            "rho",
        ],
    )?;
    cfg.command = Some("mixing".into());
    let seed = fill_seed(&mut cfg);
    let budget = fill_budget(&mut cfg, 100_000)?;
    // the chain itself goes into the echo, not the path it came from
    let spec = cfg.chain_spec()?;
    cfg.chain = Some(spec.clone());
    cfg.chain_file = None;
    cfg.two_state = None;
    cfg.n.get_or_insert(ListSpec::Single(10_000.0));
    cfg.x.get_or_insert(ListSpec::Text("0.5,1,1.5".into()));
    let alpha = *cfg.alpha.get_or_insert(0.3);
    let rho = *cfg.rho.get_or_insert(1.0);
    let n = cfg.single_n()?;
    let chain = MarkovChain::new(spec)?;
    let report = mixing_tail_experiment(
        &chain,
        n,
        alpha,
        &cfg.x_grid()?,
        budget,
        seed,
        rho,
        &ctx.engine,
    )?;
    warn(&report.warnings);
    let mut s = format!(
        "{} n={} m={} k={} ES_n^2={:.6} (mc {:.6}) psi_m={:.3e} beta_m={:.3e} tau_n={:.4e} c1={:.4} c2={:.4}\n{:>8} {:>12} {:>10} {:>10}\n",
        report.chain,
        report.n,
        report.m,
        report.k,
        report.es2,
        report.es2_mc,
        report.psi_m,
        report.beta_m,
        report.tau_n,
        report.c1,
        report.c2,
        "x",
        "p_hat",
        "ratio",
        "envelope"
    );
    for r in &report.rows {
        let env = r
            .envelope
            .map_or("undefined".to_string(), |e| format!("{e:.4}"));
        let _ = writeln!(
            s,
            "{:>8} {:>12.5e} {:>10.5} {:>10}",
            r.x, r.p_hat, r.ratio, env
        );
    }
    let body = csv_bytes(|w| report.write_csv(w, &cfg.echo()))?;
    ctx.emit("mixing.csv", &body, &s)
}
