//! Exponential tilting of conditional laws and of whole paths.
//!
//! Under the conjugate measure `P_λ` each increment is drawn from its
//! conditional law reweighted by `e^{λv}`. Along a path the importance weight
//! back to the original measure is `exp(−λ X_n + Ψ_n(λ))`, where `Ψ_n` sums the
//! conditional log moment generating functions.

mod enumerate;
pub mod inequalities;
mod saddle;

use std::collections::HashMap;

use rand::RngCore;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::models::{Atom, ConditionalLaw, HistorySummary, MartingaleModel, Path};

pub use enumerate::{
    enumerate_paths, exact_tail_enumerated, exact_tail_lattice, lattice_terminal_law,
    tilted_tail_enumerated, PathTerm,
};
pub use saddle::{solve_saddle_lower, solve_saddle_upper, SaddleKind, SaddleSolution, SADDLE_C};

/// A conditional law reweighted by `e^{λv}`.
#[derive(Debug, Clone, PartialEq)]
pub struct TiltedLaw {
    pub lambda: f64,
    /// `ln E[e^{λv}]` under the base law.
    pub step_log_mgf: f64,
    /// Mean of the tilted law, `b(λ)`.
    pub drift: f64,
    base: ConditionalLaw,
    tilted: ConditionalLaw,
}

impl TiltedLaw {
    pub fn base(&self) -> &ConditionalLaw {
        &self.base
    }

    /// Tilted atoms: the base values with reweighted probabilities.
    pub fn atoms(&self) -> &[Atom] {
        self.tilted.atoms()
    }

    /// Tilted law as a sampler (not centered unless `λ = 0`).
    pub fn law(&self) -> &ConditionalLaw {
        &self.tilted
    }

    /// Variance of the tilted law, the derivative of `b(λ)` in `λ`.
    pub fn tilted_variance(&self) -> f64 {
        let b = self.drift;
        self.tilted.expect(|v| (v - b) * (v - b))
    }
}

fn check_lambda(lambda: f64) -> Result<()> {
    if !(lambda >= 0.0 && lambda.is_finite()) {
        return Err(Error::param(
            "lambda",
            format!("{lambda} must be finite and ≥ 0"),
        ));
    }
    Ok(())
}

/// Exact reweighting of `law` by `e^{λv}`.
pub fn tilt_law(law: &ConditionalLaw, lambda: f64) -> Result<TiltedLaw> {
    check_lambda(lambda)?;
    if lambda == 0.0 {
        return Ok(TiltedLaw {
            lambda,
            step_log_mgf: 0.0,
            drift: law.mean(),
            base: law.clone(),
            tilted: law.clone(),
        });
    }
    let atoms = law.atoms();
    let top = atoms
        .iter()
        .map(|a| lambda * a.value)
        .fold(f64::NEG_INFINITY, f64::max);
    let weights: Vec<f64> = atoms
        .iter()
        .map(|a| a.prob * (lambda * a.value - top).exp())
        .collect();
    let z: f64 = weights.iter().sum();
    let reach = atoms
        .iter()
        .map(|a| (lambda * a.value).abs())
        .fold(0.0, f64::max);
    // for small exponents write Σ p e^{λv} = 1 + λ·mean + Σ p (e^{λv} − 1 − λv)
    let step_log_mgf = if reach < 1.0 {
        (lambda * law.mean() + law.expect(|v| inequalities::exp_remainder_1(lambda * v))).ln_1p()
    } else {
        top + z.ln()
    };
    let tilted_atoms: Vec<Atom> = atoms
        .iter()
        .zip(&weights)
        .map(|(a, w)| Atom {
            value: a.value,
            prob: w / z,
        })
        .collect();
    let drift = tilted_atoms.iter().map(|a| a.prob * a.value).sum();
    Ok(TiltedLaw {
        lambda,
        step_log_mgf,
        drift,
        base: law.clone(),
        tilted: ConditionalLaw::from_atoms_unchecked(tilted_atoms),
    })
}

/// Tilted conditional mean `b(λ) = E[v e^{λv}] / E[e^{λv}]`.
pub fn drift_step(law: &ConditionalLaw, lambda: f64) -> Result<f64> {
    Ok(tilt_law(law, lambda)?.drift)
}

/// All distinct conditional laws of a model tilted at one `λ`, indexed like
/// [`MartingaleModel::laws`].
#[derive(Debug, Clone)]
pub struct TiltedModel<'a> {
    model: &'a MartingaleModel,
    lambda: f64,
    laws: Vec<TiltedLaw>,
}

impl<'a> TiltedModel<'a> {
    pub fn new(model: &'a MartingaleModel, lambda: f64) -> Result<Self> {
        let laws = model
            .laws()
            .iter()
            .map(|l| tilt_law(l, lambda))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            model,
            lambda,
            laws,
        })
    }

    pub fn model(&self) -> &MartingaleModel {
        self.model
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn law_at(&self, s: &HistorySummary) -> &TiltedLaw {
        &self.laws[self.model.law_index(s)]
    }

    /// Terminal value and log importance weight of one tilted path, without
    /// storing the path.
    #[inline]
    pub fn sample_terminal(&self, rng: &mut impl RngCore) -> (f64, f64) {
        let m = self.model;
        let (mut x, mut psi) = (0.0, 0.0);
        if m.is_iid() {
            let law = &self.laws[0];
            let sampler = law.law();
            for _ in 0..m.n() {
                x += sampler.sample(rng);
            }
            psi = law.step_log_mgf * m.n() as f64;
        } else {
            let mut s = m.initial();
            for _ in 0..m.n() {
                let idx = m.law_index(&s);
                let law = &self.laws[idx];
                let v = law.law().sample(rng);
                x += v;
                psi += law.step_log_mgf;
                s = m.advance(&s, idx, v);
            }
        }
        (x, -self.lambda * x + psi)
    }

    /// Full tilted trajectory with its drift steps and exact log weight.
    pub fn sample_path(&self, rng: &mut impl RngCore) -> TiltedPath {
        let m = self.model;
        let n = m.n();
        let mut increments = Vec::with_capacity(n);
        let mut partial_sums = vec![0.0];
        let mut bracket = vec![0.0];
        let mut b_steps = Vec::with_capacity(n);
        let (mut x, mut br, mut psi) = (0.0, 0.0, 0.0);
        let mut s = m.initial();
        for _ in 0..n {
            let idx = m.law_index(&s);
            let law = &self.laws[idx];
            let v = law.law().sample(rng);
            x += v;
            br += law.base().variance();
            psi += law.step_log_mgf;
            increments.push(v);
            partial_sums.push(x);
            bracket.push(br);
            b_steps.push(law.drift);
            s = m.advance(&s, idx, v);
        }
        TiltedPath {
            path: Path {
                increments,
                partial_sums,
                bracket,
            },
            lambda: self.lambda,
            psi_n: psi,
            b_steps,
            log_weight: -self.lambda * x + psi,
        }
    }
}

/// A path drawn under `P_λ` together with its cumulant, drifts and weight.
#[derive(Debug, Clone, PartialEq)]
pub struct TiltedPath {
    pub path: Path,
    pub lambda: f64,
    pub psi_n: f64,
    pub b_steps: Vec<f64>,
    pub log_weight: f64,
}

impl TiltedPath {
    /// Accumulated drift `B_n(λ)`.
    pub fn drift_total(&self) -> f64 {
        self.b_steps.iter().sum()
    }

    /// Conjugate martingale `Y_n(λ) = X_n − B_n(λ)`.
    pub fn conjugate_terminal(&self) -> f64 {
        self.path.terminal() - self.drift_total()
    }
}

/// Draws one path under `P_λ`.
pub fn sample_tilted_path(
    model: &MartingaleModel,
    lambda: f64,
    rng: &mut impl RngCore,
) -> Result<TiltedPath> {
    Ok(TiltedModel::new(model, lambda)?.sample_path(rng))
}

/// Exact `E_λ[X_n]` and its derivative in `λ`, by dynamic programming over
/// reachable history summaries.
pub fn tilted_terminal_mean(model: &MartingaleModel, lambda: f64) -> Result<(f64, f64)> {
    let tilted = TiltedModel::new(model, lambda)?;
    if model.is_iid() {
        let law = &tilted.laws[0];
        let n = model.n() as f64;
        return Ok((n * law.drift, n * law.tilted_variance()));
    }
    // d/dλ E_λ[X_n] = Var_λ(X_n); accumulate first and second moments of X
    // per summary so the variance is exact.
    let mut frontier: HashMap<HistorySummary, (f64, f64, f64)> = HashMap::new();
    frontier.insert(model.initial(), (1.0, 0.0, 0.0));
    for _ in 0..model.n() {
        let mut next: HashMap<HistorySummary, (f64, f64, f64)> = HashMap::new();
        for (s, (mass, m1, m2)) in &frontier {
            let idx = model.law_index(s);
            for a in tilted.laws[idx].atoms() {
                let t = model.advance(s, idx, a.value);
                let e = next.entry(t).or_insert((0.0, 0.0, 0.0));
                let p = a.prob;
                e.0 += mass * p;
                e.1 += p * (m1 + mass * a.value);
                e.2 += p * (m2 + 2.0 * a.value * m1 + mass * a.value * a.value);
            }
        }
        frontier = next;
    }
    let (mut mean, mut second) = (0.0, 0.0);
    let mut keys: Vec<_> = frontier.keys().copied().collect();
    keys.sort();
    for k in keys {
        let (_, m1, m2) = frontier[&k];
        mean += m1;
        second += m2;
    }
    Ok((mean, (second - mean * mean).max(0.0)))
}

/// Tilt parameter chosen so that the tilted mean of `X_n` hits the target.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TiltChoice {
    pub lambda: f64,
    pub converged: bool,
    /// Reason the fallback `λ = x` was used, if it was.
    pub fallback: Option<String>,
}

/// Solves `E_λ[X_n] = x` with a bracketed Newton iteration; falls back to
/// `λ = x` (flagged) when `x` is outside the attainable range.
pub fn choose_tilt(model: &MartingaleModel, x: f64) -> Result<TiltChoice> {
    if !(x >= 0.0 && x.is_finite()) {
        return Err(Error::param("x", format!("{x} must be finite and ≥ 0")));
    }
    if x == 0.0 {
        return Ok(TiltChoice {
            lambda: 0.0,
            converged: true,
            fallback: None,
        });
    }
    let fallback = |reason: String| TiltChoice {
        lambda: x,
        converged: false,
        fallback: Some(reason),
    };
    let sup = model.n() as f64
        * model
            .laws()
            .iter()
            .map(|l| l.max_value())
            .fold(0.0, f64::max);
    if x >= sup * (1.0 - 1e-12) {
        return Ok(fallback(format!(
            "target {x} is not below the largest attainable terminal value {sup}"
        )));
    }
    let tol = 1e-10 * (1.0 + x);
    let (mut lo, mut hi) = (0.0_f64, x.max(1.0));
    loop {
        let (m, _) = tilted_terminal_mean(model, hi)?;
        if m >= x {
            break;
        }
        lo = hi;
        hi *= 2.0;
        if hi > 1e12 {
            return Ok(fallback(format!("no bracket for target {x}")));
        }
    }
    let mut lambda = 0.5 * (lo + hi);
    for _ in 0..200 {
        let (m, slope) = tilted_terminal_mean(model, lambda)?;
        let r = m - x;
        if r.abs() <= tol {
            return Ok(TiltChoice {
                lambda,
                converged: true,
                fallback: None,
            });
        }
        if r > 0.0 {
            hi = lambda;
        } else {
            lo = lambda;
        }
        let newton = lambda - r / slope;
        lambda = if slope > 0.0 && newton > lo && newton < hi {
            newton
        } else {
            0.5 * (lo + hi)
        };
        if hi - lo <= f64::EPSILON * hi {
            break;
        }
    }
    let (m, _) = tilted_terminal_mean(model, lambda)?;
    if (m - x).abs() <= 1e-8 * (1.0 + x) {
        return Ok(TiltChoice {
            lambda,
            converged: true,
            fallback: None,
        });
    }
    Ok(fallback(format!("Newton iteration stalled at λ={lambda}")))
}

/// Whether `λ` lies in the range `[0, ε_n^{-1}]` covered by the tail bounds.
pub fn within_bound_range(lambda: f64, eps_n: f64) -> bool {
    eps_n == 0.0 || lambda * eps_n <= 1.0
}
