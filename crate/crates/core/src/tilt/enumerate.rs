//! Exhaustive path enumeration for small horizons.

use std::collections::HashMap;

use crate::error::{Error, Result};
use crate::event::TailEvent;
use crate::models::{HistorySummary, MartingaleModel};

use super::TiltedModel;

/// Upper limit on the number of enumerated paths.
pub const MAX_PATHS: f64 = 1.7e7;

/// One complete path with its probability under `P` and under `P_λ`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PathTerm {
    pub prob: f64,
    pub tilted_prob: f64,
    pub terminal: f64,
    pub psi_n: f64,
}

/// Visits every path of `model` once, with probabilities under `P` and `P_λ`.
pub fn enumerate_paths(
    model: &MartingaleModel,
    lambda: f64,
    mut visit: impl FnMut(&PathTerm),
) -> Result<()> {
    let width = model.laws().iter().map(|l| l.len()).max().unwrap_or(1) as f64;
    if width.powi(model.n() as i32) > MAX_PATHS {
        return Err(Error::param(
            "n",
            format!(
                "{} paths exceed the enumeration limit",
                width.powi(model.n() as i32)
            ),
        ));
    }
    let tilted = TiltedModel::new(model, lambda)?;
    let start = PathTerm {
        prob: 1.0,
        tilted_prob: 1.0,
        terminal: 0.0,
        psi_n: 0.0,
    };
    recurse(&tilted, model.initial(), start, &mut visit);
    Ok(())
}

fn recurse(
    tilted: &TiltedModel<'_>,
    s: HistorySummary,
    acc: PathTerm,
    visit: &mut impl FnMut(&PathTerm),
) {
    let model = tilted.model();
    if s.step as usize == model.n() {
        visit(&acc);
        return;
    }
    let idx = model.law_index(&s);
    let base = &model.laws()[idx];
    let tl = tilted.law_at(&s);
    for (a, t) in base.atoms().iter().zip(tl.atoms()) {
        let next = PathTerm {
            prob: acc.prob * a.prob,
            tilted_prob: acc.tilted_prob * t.prob,
            terminal: acc.terminal + a.value,
            psi_n: acc.psi_n + tl.step_log_mgf,
        };
        recurse(tilted, model.advance(&s, idx, a.value), next, visit);
    }
}

/// Exact probability of a tail event by summing over every path.
pub fn exact_tail_enumerated(model: &MartingaleModel, event: TailEvent) -> Result<f64> {
    let mut total = 0.0;
    enumerate_paths(model, 0.0, |t| {
        if event.contains(t.terminal) {
            total += t.prob;
        }
    })?;
    Ok(total)
}

/// `Σ_paths P_λ(path) e^{−λX_n+Ψ_n} 1{event}`, the exact mean of the
/// importance-sampling estimator.
pub fn tilted_tail_enumerated(
    model: &MartingaleModel,
    event: TailEvent,
    lambda: f64,
) -> Result<f64> {
    let mut total = 0.0;
    enumerate_paths(model, lambda, |t| {
        if event.contains(t.terminal) {
            total += t.tilted_prob * (-lambda * t.terminal + t.psi_n).exp();
        }
    })?;
    Ok(total)
}

/// Exact law of `X_n` for models whose raw increments all lie on `unit·ℤ`,
/// by dynamic programming over (history summary, integer sum). Returns
/// `(k·unit/√n, P(X_n = k·unit/√n))` for every reachable `k`.
pub fn lattice_terminal_law(model: &MartingaleModel, unit: f64) -> Result<Vec<(f64, f64)>> {
    if !(unit > 0.0 && unit.is_finite()) {
        return Err(Error::param("unit", format!("{unit} must be positive")));
    }
    let mut steps: Vec<Vec<(i64, f64)>> = Vec::with_capacity(model.eta_laws().len());
    for law in model.eta_laws() {
        let mut atoms = Vec::with_capacity(law.len());
        for a in law.atoms() {
            let k = (a.value / unit).round();
            if (a.value - k * unit).abs() > 1e-9 * a.value.abs().max(1.0) {
                return Err(Error::param(
                    "unit",
                    format!("increment {} is not a multiple of {unit}", a.value),
                ));
            }
            atoms.push((k as i64, a.prob));
        }
        steps.push(atoms);
    }
    let reach = steps
        .iter()
        .flat_map(|a| a.iter().map(|(k, _)| k.abs()))
        .max()
        .unwrap_or(0);
    let n = model.n() as i64;
    let offset = reach * n;
    let width = (2 * offset + 1) as usize;
    if width as f64 * model.n() as f64 > 4e11 {
        return Err(Error::param(
            "unit",
            "lattice too fine for exact evaluation",
        ));
    }
    let collapse = |s: HistorySummary| {
        if model.is_iid() {
            HistorySummary { last_sign: 0, ..s }
        } else {
            s
        }
    };
    // each summary carries a dense mass vector and its occupied index range
    let mut frontier: HashMap<HistorySummary, (Vec<f64>, usize, usize)> = HashMap::new();
    let mut start = vec![0.0; width];
    start[offset as usize] = 1.0;
    frontier.insert(model.initial(), (start, offset as usize, offset as usize));
    for _ in 0..model.n() {
        let mut next: HashMap<HistorySummary, (Vec<f64>, usize, usize)> = HashMap::new();
        for (s, (mass, lo, hi)) in &frontier {
            let idx = model.law_index(s);
            for &(k, p) in &steps[idx] {
                let t = collapse(model.advance(s, idx, k as f64));
                let entry = next
                    .entry(t)
                    .or_insert_with(|| (vec![0.0; width], usize::MAX, 0));
                let (dlo, dhi) = ((*lo as i64 + k) as usize, (*hi as i64 + k) as usize);
                for (d, m) in entry.0[dlo..=dhi].iter_mut().zip(&mass[*lo..=*hi]) {
                    *d += p * m;
                }
                entry.1 = entry.1.min(dlo);
                entry.2 = entry.2.max(dhi);
            }
        }
        frontier = next;
    }
    let mut total = vec![0.0; width];
    for (mass, lo, hi) in frontier.values() {
        for i in *lo..=*hi {
            total[i] += mass[i];
        }
    }
    let scale = unit / (model.n() as f64).sqrt();
    Ok(total
        .into_iter()
        .enumerate()
        .filter(|(_, p)| *p > 0.0)
        .map(|(i, p)| ((i as i64 - offset) as f64 * scale, p))
        .collect())
}

/// `P(event)` from [`lattice_terminal_law`].
pub fn exact_tail_lattice(model: &MartingaleModel, event: TailEvent, unit: f64) -> Result<f64> {
    Ok(lattice_terminal_law(model, unit)?
        .into_iter()
        .filter(|(x, _)| event.contains(*x))
        .map(|(_, p)| p)
        .sum())
}
