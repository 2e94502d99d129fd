//! Acceptance checks. Prints one PASS/FAIL line per criterion and exits
//! nonzero if any fails.

use std::process::ExitCode;
use std::time::Instant;

use rand::Rng;

use martdev_core::bounds::{
    bernstein_tail_bound, gaussian_tail, ln_gaussian_tail, tail_ratio_rhs, BoundParams,
};
use martdev_core::coupling::{coupling_tail_report, BinomialLattice, QuantileFunction};
use martdev_core::mixing::{
    beta_coefficient, covariance_bound_check, mixing_tail_experiment, psi_bar_coefficient,
    BerbeeCoupler, MarkovChain, MarkovChainSpec,
};
use martdev_core::montecarlo::{Engine, RatioOptions};
use martdev_core::rng::stream;
use martdev_core::tilt::{exact_tail_enumerated, lattice_terminal_law, tilted_tail_enumerated};
use martdev_core::{
    certify, choose_tilt, estimate_tail_plain, estimate_tail_tilted, make_rademacher,
    make_regime_switch, make_two_point, mdp_scan, ratio_report, sample_path, verify, TailEvent,
};

type Outcome = Result<(bool, String), Box<dyn std::error::Error>>;

/// `ln C(n, k)` by direct summation of logarithms.
fn ln_choose(n: usize, k: usize) -> f64 {
    (0..k)
        .map(|i| ((n - i) as f64).ln() - ((i + 1) as f64).ln())
        .sum()
}

/// `P(Bin(n, 1/2) ≥ k)`.
fn binomial_upper(n: usize, k: usize) -> f64 {
    (k..=n)
        .map(|j| (ln_choose(n, j) - n as f64 * std::f64::consts::LN_2).exp())
        .sum()
}

fn exact_iid_enumeration() -> Outcome {
    let start = Instant::now();
    let mut worst: f64 = 0.0;
    let mut cases = 0;
    let mut models = Vec::new();
    for n in 1..=12 {
        for p in [0.15, 0.5, 0.8] {
            models.push(make_two_point(n, p)?);
        }
        models.push(make_rademacher(n)?);
        models.push(make_regime_switch(n, 0.3)?);
    }
    for model in &models {
        for x in [0.0, 0.5, 1.0, 2.0] {
            let exact = exact_tail_enumerated(model, TailEvent::Above(x))?;
            for lambda in [0.0, 0.5, x] {
                let tilted = tilted_tail_enumerated(model, TailEvent::Above(x), lambda)?;
                worst = worst.max((tilted - exact).abs());
                cases += 1;
            }
        }
    }
    let secs = start.elapsed().as_secs_f64();
    Ok((
        worst < 1e-10 && secs < 10.0,
        format!("{cases} cases, max abs error {worst:.2e}, {secs:.2}s"),
    ))
}

fn rare_tail_accuracy(engine: &Engine) -> Outcome {
    let start = Instant::now();
    let model = make_rademacher(20)?;
    // X_20 > 2 ⇔ S_20 ≥ 10 ⇔ at least 15 heads
    let exact = binomial_upper(20, 15);
    let choice = choose_tilt(&model, 2.0)?;
    let est = estimate_tail_tilted(
        &model,
        TailEvent::Above(2.0),
        choice.lambda,
        100_000,
        11,
        engine,
    )?;
    let z = (est.p_hat - exact) / est.std_err;
    let secs = start.elapsed().as_secs_f64();
    Ok((
        z.abs() <= 3.0 && est.rel_se() < 0.01 && secs < 5.0,
        format!(
            "p_hat {:.6} exact {exact:.6} z {z:.2} rel_se {:.4} {secs:.2}s",
            est.p_hat,
            est.rel_se()
        ),
    ))
}

fn variance_reduction(engine: &Engine) -> Outcome {
    let model = make_rademacher(400)?;
    let event = TailEvent::Above(3.0);
    let budget = 1_000_000;
    let plain = estimate_tail_plain(&model, event, budget, 21, engine)?;
    let choice = choose_tilt(&model, 3.0)?;
    let tilted = estimate_tail_tilted(&model, event, choice.lambda, budget, 22, engine)?;
    let ratio = plain.std_err / tilted.std_err;
    Ok((
        ratio >= 50.0,
        format!(
            "plain se {:.3e} tilted se {:.3e} reduction {ratio:.1}x (need 50x)",
            plain.std_err, tilted.std_err
        ),
    ))
}

fn ratio_convergence(engine: &Engine) -> Outcome {
    let mut detail = Vec::new();
    let mut devs = Vec::new();
    let mut ci_devs = Vec::new();
    for (n, budget) in [(100, 200_000), (10_000, 50_000)] {
        let model = make_rademacher(n)?;
        let cert = certify(&model)?;
        let rep = ratio_report(
            &model,
            &cert,
            &[1.0],
            budget,
            31,
            &RatioOptions::default(),
            engine,
        )?;
        let row = &rep.rows[0];
        let exact = BinomialLattice::new(n)?.tail_above(1.0) / gaussian_tail(1.0);
        devs.push((row.ratio - 1.0).abs());
        ci_devs.push(row.ci_deviation());
        detail.push(format!(
            "n={n} ratio {:.4} (exact {exact:.4}) ci_dev {:.4}",
            row.ratio,
            row.ci_deviation()
        ));
    }
    Ok((devs[1] < devs[0] && ci_devs[1] <= 0.1, detail.join("; ")))
}

fn implied_constant_stability() -> Outcome {
    let grid = [0.5, 1.0, 1.5, 2.0];
    let ns = [400, 1600, 6400];
    let mut detail = Vec::new();
    let mut ok = true;
    for family in ["rademacher", "regime_switch"] {
        let mut constants = Vec::new();
        for &n in &ns {
            // both models move on the 0.1 grid, so their terminal laws are exact
            let model = if family == "rademacher" {
                make_rademacher(n)?
            } else {
                make_regime_switch(n, 0.3)?
            };
            let cert = certify(&model)?;
            let params = BoundParams::new(cert.rho, cert.eps_n, cert.delta_n)?;
            let law = lattice_terminal_law(&model, 0.1)?;
            let c = grid
                .iter()
                .map(|&x| {
                    let event = TailEvent::Above(x);
                    let tail: f64 = law
                        .iter()
                        .filter(|a| event.contains(a.0))
                        .map(|a| a.1)
                        .sum();
                    (tail.ln() - ln_gaussian_tail(x)).abs() / tail_ratio_rhs(x, &params)
                })
                .fold(0.0, f64::max);
            constants.push(c);
        }
        let hi = constants.iter().copied().fold(0.0, f64::max);
        let lo = constants.iter().copied().fold(f64::INFINITY, f64::min);
        ok &= lo > 0.0 && hi / lo <= 2.0;
        detail.push(format!(
            "{family} c = [{}] spread {:.2}",
            constants
                .iter()
                .map(|c| format!("{c:.3e}"))
                .collect::<Vec<_>>()
                .join(", "),
            hi / lo
        ));
    }
    Ok((ok, detail.join("; ")))
}

fn inequality_suites() -> Outcome {
    let report = verify::run_all(61)?;
    let detail = report
        .suites
        .iter()
        .map(|s| format!("{} {}/{}", s.name, s.violations, s.checks))
        .collect::<Vec<_>>()
        .join(", ");
    Ok((report.passed(), format!("violations: {detail}")))
}

fn bernstein_inequality(engine: &Engine) -> Outcome {
    let n = 100;
    let model = make_rademacher(n)?;
    let cert = certify(&model)?;
    let xs = [0.5, 1.0, 2.0, 3.0];
    let budget = 1_000_000u64;
    let hits = engine.sum::<4, _>(budget, 71, |rng, _| {
        let w = sample_path(&model, rng).terminal().abs();
        xs.map(|x| f64::from(u8::from(w >= x)))
    });
    let mut ok = true;
    let mut detail = Vec::new();
    for (x, h) in xs.iter().zip(hits) {
        let p = h / budget as f64;
        let se = (p * (1.0 - p) / budget as f64).sqrt();
        // rademacher increments have exact bracket 1, so M = 0
        let bound = bernstein_tail_bound(*x, n, 0.0, cert.l)?;
        ok &= p <= bound + 3.0 * se;
        detail.push(format!("x={x} p {p:.5} bound {bound:.5}"));
    }
    Ok((ok, detail.join("; ")))
}

fn berry_esseen_slope() -> Outcome {
    let pts: Vec<(f64, f64)> = [100usize, 1000, 10_000]
        .iter()
        .map(|&n| {
            let d = BinomialLattice::new(n).map(|l| l.sup_distance_to_normal())?;
            Ok(((n as f64).ln(), d.ln()))
        })
        .collect::<martdev_core::Result<_>>()?;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / 3.0;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / 3.0;
    let slope = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum::<f64>()
        / pts.iter().map(|p| (p.0 - mx).powi(2)).sum::<f64>();
    Ok((
        (slope + 0.5).abs() <= 0.15,
        format!(
            "slope {slope:.4}, sup distances {}",
            pts.iter()
                .map(|p| format!("{:.3e}", p.1.exp()))
                .collect::<Vec<_>>()
                .join(", ")
        ),
    ))
}

fn mdp_trend(engine: &Engine) -> Outcome {
    let scan = mdp_scan(
        make_rademacher,
        &[100, 1000, 10_000],
        0.25,
        1.0,
        20_000,
        81,
        engine,
    )?;
    let last = scan.rows.last().expect("three rows").value;
    Ok((
        (last - scan.target).abs() <= 0.1 && scan.monotone_toward_target(),
        format!(
            "values [{}] target {}",
            scan.rows
                .iter()
                .map(|r| format!("{:.4}", r.value))
                .collect::<Vec<_>>()
                .join(", "),
            scan.target
        ),
    ))
}

fn quantile_coupling(engine: &Engine) -> Outcome {
    let qf = QuantileFunction::exact_rademacher(6)?;
    let atoms = qf.atom_probabilities().expect("exact quantile function");
    let atom_err = atoms
        .iter()
        .enumerate()
        .map(|(k, p)| (p - ln_choose(6, k).exp() / 64.0).abs())
        .fold(0.0, f64::max);
    let mut ok = atoms.len() == 7 && atom_err <= 1e-12;
    let mut d = Vec::new();
    let mut slopes = Vec::new();
    for (i, n) in [100, 400, 1600].into_iter().enumerate() {
        let rep = coupling_tail_report(n, 200_000, 91 + i as u64, 0.125, engine)?;
        ok &= rep.tail_slope < 0.0;
        d.push(rep.d_hat);
        slopes.push(rep.tail_slope);
    }
    let hi = d.iter().copied().fold(0.0, f64::max);
    let lo = d.iter().copied().fold(f64::INFINITY, f64::min);
    ok &= lo > 0.0 && hi / lo <= 2.0;
    Ok((
        ok,
        format!(
            "atom error {atom_err:.1e}; slopes [{}]; D [{}]",
            slopes
                .iter()
                .map(|s| format!("{s:.3}"))
                .collect::<Vec<_>>()
                .join(", "),
            d.iter()
                .map(|s| format!("{s:.4}"))
                .collect::<Vec<_>>()
                .join(", ")
        ),
    ))
}

fn random_chain(rng: &mut impl Rng) -> MarkovChain {
    let s = rng.random_range(2..=3);
    let p: Vec<Vec<f64>> = (0..s)
        .map(|_| {
            let w: Vec<f64> = (0..s).map(|_| 0.05 + rng.random::<f64>()).collect();
            let t: f64 = w.iter().sum();
            let mut row: Vec<f64> = w.iter().map(|v| v / t).collect();
            let head: f64 = row[..s - 1].iter().sum();
            row[s - 1] = 1.0 - head;
            row
        })
        .collect();
    let raw: Vec<f64> = (0..s).map(|_| rng.random_range(-1.0..1.0)).collect();
    // center the observable under the stationary law of the raw chain
    let tmp = MarkovChain::new(MarkovChainSpec {
        name: "tmp".into(),
        states: (0..s).map(|i| i.to_string()).collect(),
        p: p.clone(),
        f: vec![0.0; s],
    })
    .expect("positive chain");
    let mean: f64 = tmp.stationary().iter().zip(&raw).map(|(a, b)| a * b).sum();
    MarkovChain::new(MarkovChainSpec {
        name: "random".into(),
        states: (0..s).map(|i| i.to_string()).collect(),
        p,
        f: raw.iter().map(|v| v - mean).collect(),
    })
    .expect("centered positive chain")
}

/// `P(X_0 = i, X_n = j)` summed over every path of length `n`.
fn enumerated_joint(chain: &MarkovChain, n: usize) -> Vec<Vec<f64>> {
    let s = chain.size();
    let pi = chain.stationary();
    let p = chain.transition();
    let mut joint = vec![vec![0.0; s]; s];
    let total = s.pow(n as u32 + 1);
    for code in 0..total {
        let mut c = code;
        let mut states = Vec::with_capacity(n + 1);
        for _ in 0..=n {
            states.push(c % s);
            c /= s;
        }
        let mut prob = pi[states[0]];
        for w in states.windows(2) {
            prob *= p[(w[0], w[1])];
        }
        joint[states[0]][states[n]] += prob;
    }
    joint
}

fn mixing_exactness(engine: &Engine) -> Outcome {
    let mut detail = Vec::new();
    // closed form β(n) = 2 π₀ π₁ |1 − a − b|^n
    let mut closed_err: f64 = 0.0;
    for (a, b) in [(0.3, 0.3), (0.1, 0.6), (0.9, 0.7), (0.05, 0.02)] {
        let chain = MarkovChain::new(MarkovChainSpec::two_state(a, b))?;
        let (p0, p1) = (b / (a + b), a / (a + b));
        for n in 1..=60 {
            let want = 2.0 * p0 * p1 * (1.0f64 - a - b).abs().powi(n as i32);
            closed_err = closed_err.max((beta_coefficient(&chain, n) - want).abs());
        }
    }
    detail.push(format!("closed form {closed_err:.1e}"));

    let mut rng = stream(101, 0);
    let mut enum_err: f64 = 0.0;
    for _ in 0..40 {
        let chain = random_chain(&mut rng);
        let pi = chain.stationary();
        for n in 1..=6 {
            let joint = enumerated_joint(&chain, n);
            let s = chain.size();
            let beta: f64 = (0..s)
                .map(|i| {
                    0.5 * (0..s)
                        .map(|j| (joint[i][j] - pi[i] * pi[j]).abs())
                        .sum::<f64>()
                })
                .sum();
            let psi = (0..s)
                .flat_map(|i| (0..s).map(move |j| (i, j)))
                .map(|(i, j)| (joint[i][j] / (pi[i] * pi[j]) - 1.0).abs())
                .fold(0.0, f64::max);
            enum_err = enum_err
                .max((beta - beta_coefficient(&chain, n)).abs())
                .max((psi - psi_bar_coefficient(&chain, n)).abs());
        }
    }
    detail.push(format!("enumeration {enum_err:.1e}"));

    let mut violations = 0;
    let mut lhs_err: f64 = 0.0;
    for _ in 0..1000 {
        let chain = random_chain(&mut rng);
        let s = chain.size();
        let n = rng.random_range(1..=6);
        let f: Vec<f64> = (0..s).map(|_| rng.random_range(-2.0..2.0)).collect();
        let g: Vec<f64> = (0..s).map(|_| rng.random_range(-2.0..2.0)).collect();
        let p = 1.0 + rng.random_range(0.01..4.0);
        let check = covariance_bound_check(&chain, n, &f, &g, p)?;
        let joint = enumerated_joint(&chain, n);
        let pi = chain.stationary();
        let exy: f64 = (0..s)
            .flat_map(|i| (0..s).map(move |j| (i, j)))
            .map(|(i, j)| joint[i][j] * g[i] * f[j])
            .sum();
        let ex: f64 = (0..s).map(|i| pi[i] * f[i]).sum();
        let ey: f64 = (0..s).map(|i| pi[i] * g[i]).sum();
        lhs_err = lhs_err.max(((exy - ex * ey).abs() - check.lhs).abs());
        if !check.holds() {
            violations += 1;
        }
    }
    detail.push(format!(
        "covariance bound violations {violations}/1000 (lhs error {lhs_err:.1e})"
    ));

    let mut berbee_ok = true;
    for (spec, m, k) in [
        (MarkovChainSpec::two_state(0.2, 0.3), 2, 10),
        (MarkovChainSpec::two_state(0.05, 0.1), 12, 4),
    ] {
        let chain = MarkovChain::new(spec)?;
        let coupler = BerbeeCoupler::new(&chain, m, k)?;
        let budget = 100_000u64;
        let [hits] = engine.sum(budget, 103, |rng, _| {
            [f64::from(u8::from(coupler.sample(rng).any_mismatch()))]
        });
        let rate = hits / budget as f64;
        let se = (rate * (1.0 - rate) / budget as f64).sqrt();
        let bound = coupler.mismatch_bound();
        berbee_ok &= rate <= bound + 3.0 * se;
        detail.push(format!("berbee mismatch {rate:.4} bound {bound:.4}"));
    }
    Ok((
        closed_err < 1e-12 && enum_err < 1e-10 && violations == 0 && lhs_err < 1e-10 && berbee_ok,
        detail.join("; "),
    ))
}

fn mixing_ratio(engine: &Engine) -> Outcome {
    let chain = MarkovChain::new(MarkovChainSpec::two_state(0.3, 0.3))?;
    let rep = mixing_tail_experiment(
        &chain,
        10_000,
        0.3,
        &[0.5, 1.0, 1.5],
        100_000,
        111,
        1.0,
        engine,
    )?;
    let mut ok = rep.warnings.is_empty();
    let mut detail = vec![format!(
        "m={} k={} tau_n {:.3} ES2 {:.2} (mc {:.2})",
        rep.m, rep.k, rep.tau_n, rep.es2, rep.es2_mc
    )];
    for r in &rep.rows {
        let consistent = r.consistent_with_envelope() == Some(true);
        ok &= consistent;
        detail.push(format!(
            "x={} ratio {:.4} ci [{:.4}, {:.4}] envelope ±{:.3}",
            r.x,
            r.ratio,
            r.ci95.0 / r.gauss_tail,
            r.ci95.1 / r.gauss_tail,
            r.envelope.unwrap_or(f64::NAN)
        ));
    }
    Ok((ok, detail.join("; ")))
}

type Criterion<'a> = Box<dyn Fn() -> Outcome + 'a>;

fn main() -> ExitCode {
    let engine = Engine::new(0).expect("worker pool");
    let criteria: Vec<(&str, Criterion<'_>)> = vec![
        ("exact importance identity", Box::new(exact_iid_enumeration)),
        (
            "rare-tail accuracy",
            Box::new(|| rare_tail_accuracy(&engine)),
        ),
        (
            "variance reduction",
            Box::new(|| variance_reduction(&engine)),
        ),
        ("ratio convergence", Box::new(|| ratio_convergence(&engine))),
        (
            "implied-constant stability",
            Box::new(implied_constant_stability),
        ),
        ("inequality suites", Box::new(inequality_suites)),
        (
            "bernstein inequality",
            Box::new(|| bernstein_inequality(&engine)),
        ),
        ("berry-esseen slope", Box::new(berry_esseen_slope)),
        ("mdp trend", Box::new(|| mdp_trend(&engine))),
        ("quantile coupling", Box::new(|| quantile_coupling(&engine))),
        ("mixing exactness", Box::new(|| mixing_exactness(&engine))),
        ("mixing ratio", Box::new(|| mixing_ratio(&engine))),
    ];
    let mut failed = 0;
    for (i, (name, run)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let (pass, detail) = match run() {
            Ok(r) => r,
            Err(e) => (false, format!("error: {e}")),
        };
        if !pass {
            failed += 1;
        }
        println!(
            "criterion {:>2} {:<27} {} ({:.1}s) {detail}",
            i + 1,
            name,
            if pass { "PASS" } else { "FAIL" },
            start.elapsed().as_secs_f64()
        );
    }
    println!(
        "{} of {} criteria passed",
        criteria.len() - failed,
        criteria.len()
    );
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
