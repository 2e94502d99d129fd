//! Martingale-difference models with exact finite-support conditional laws.
//!
//! Every model is described twice: on the raw scale (`η_i`, unit conditional
//! variance on average) and on the standardized scale `ξ_i = η_i / √n` that the
//! tail estimators work with. Both scales share probabilities atom by atom, so
//! a single uniform draw selects the same atom on either scale.

use std::collections::{BTreeMap, HashMap};
use std::fmt;

use rand::RngCore;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Tolerance on probability normalization and on the martingale-difference property.
pub const LAW_TOL: f64 = 1e-12;

/// Geometric grid `{2^j : j = -6..=10}` searched by [`certify`].
pub fn certification_grid() -> Vec<f64> {
    (-6..=10).map(|j| 2f64.powi(j)).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Atom {
    pub value: f64,
    pub prob: f64,
}

/// Finite-support law of one martingale increment given the history summary.
#[derive(Debug, Clone, PartialEq)]
pub struct ConditionalLaw {
    atoms: Vec<Atom>,
    // cumulative probabilities scaled to 2^64, for inverse-CDF sampling
    thresholds: Vec<u64>,
}

impl ConditionalLaw {
    /// Builds a law from `(value, prob)` pairs, validating all invariants.
    pub fn new(pairs: impl IntoIterator<Item = (f64, f64)>) -> Result<Self> {
        let atoms: Vec<Atom> = pairs
            .into_iter()
            .map(|(value, prob)| Atom { value, prob })
            .collect();
        if atoms.len() < 2 {
            return Err(Error::InvalidLaw(format!(
                "need at least 2 atoms, got {}",
                atoms.len()
            )));
        }
        for a in &atoms {
            if !a.value.is_finite() || !a.prob.is_finite() || a.prob <= 0.0 || a.prob > 1.0 {
                return Err(Error::InvalidLaw(format!(
                    "atom ({}, {}) outside finite value / prob in (0,1]",
                    a.value, a.prob
                )));
            }
        }
        for (i, a) in atoms.iter().enumerate() {
            if atoms[..i].iter().any(|b| b.value == a.value) {
                return Err(Error::InvalidLaw(format!("duplicate value {}", a.value)));
            }
        }
        let total: f64 = atoms.iter().map(|a| a.prob).sum();
        if (total - 1.0).abs() > LAW_TOL {
            return Err(Error::InvalidLaw(format!("probabilities sum to {total}")));
        }
        let mean: f64 = atoms.iter().map(|a| a.prob * a.value).sum();
        let scale: f64 = atoms
            .iter()
            .map(|a| a.prob * a.value.abs())
            .sum::<f64>()
            .max(1.0);
        if mean.abs() > LAW_TOL * scale {
            return Err(Error::InvalidLaw(format!("mean {mean:e} is not zero")));
        }
        Ok(Self::from_atoms_unchecked(atoms))
    }

    pub(crate) fn from_atoms_unchecked(atoms: Vec<Atom>) -> Self {
        let mut thresholds = Vec::with_capacity(atoms.len());
        let mut cum = 0.0;
        for a in &atoms {
            cum += a.prob;
            // `as` saturates at u64::MAX once cum reaches 1
            thresholds.push((cum * 18_446_744_073_709_551_616.0) as u64);
        }
        if let Some(last) = thresholds.last_mut() {
            *last = u64::MAX;
        }
        Self { atoms, thresholds }
    }

    pub fn atoms(&self) -> &[Atom] {
        &self.atoms
    }

    pub fn len(&self) -> usize {
        self.atoms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.atoms.is_empty()
    }

    /// Exact expectation of `h(value)` as a finite sum.
    pub fn expect(&self, h: impl Fn(f64) -> f64) -> f64 {
        self.atoms.iter().map(|a| a.prob * h(a.value)).sum()
    }

    pub fn mean(&self) -> f64 {
        self.expect(|v| v)
    }

    /// Second moment, which equals the conditional variance for a centered law.
    pub fn variance(&self) -> f64 {
        self.expect(|v| v * v)
    }

    pub fn min_value(&self) -> f64 {
        self.atoms
            .iter()
            .map(|a| a.value)
            .fold(f64::INFINITY, f64::min)
    }

    pub fn max_value(&self) -> f64 {
        self.atoms
            .iter()
            .map(|a| a.value)
            .fold(f64::NEG_INFINITY, f64::max)
    }

    /// Same probabilities, values multiplied by `factor`.
    pub fn scaled(&self, factor: f64) -> Self {
        let atoms = self
            .atoms
            .iter()
            .map(|a| Atom {
                value: a.value * factor,
                prob: a.prob,
            })
            .collect();
        Self {
            atoms,
            thresholds: self.thresholds.clone(),
        }
    }

    /// Index of the atom selected by a raw 64-bit draw.
    #[inline]
    pub fn index_for(&self, raw: u64) -> usize {
        self.thresholds
            .iter()
            .position(|&t| raw < t)
            .unwrap_or(self.atoms.len() - 1)
    }

    #[inline]
    pub fn sample(&self, rng: &mut impl RngCore) -> f64 {
        self.atoms[self.index_for(rng.next_u64())].value
    }
}

impl fmt::Display for ConditionalLaw {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{{")?;
        for (i, a) in self.atoms.iter().enumerate() {
            if i > 0 {
                write!(f, ", ")?;
            }
            write!(f, "({:.6}, {:.6})", a.value, a.prob)?;
        }
        write!(f, "}}")
    }
}

/// Fixed-size summary of the history that selects the next conditional law.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, PartialOrd, Ord)]
pub struct HistorySummary {
    /// Number of increments already drawn.
    pub step: u32,
    /// Sign of the last increment (0 before the first step).
    pub last_sign: i8,
    /// Number of high-variance steps taken so far (regime-switch budget).
    pub high_steps: u32,
}

/// JSON description of a model: `{name, n, params{...}}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSpec {
    pub name: String,
    pub n: usize,
    #[serde(default)]
    pub params: BTreeMap<String, f64>,
}

impl ModelSpec {
    pub fn new(name: &str, n: usize) -> Self {
        Self {
            name: name.to_string(),
            n,
            params: BTreeMap::new(),
        }
    }

    pub fn with(mut self, key: &str, value: f64) -> Self {
        self.params.insert(key.to_string(), value);
        self
    }

    fn param(&self, key: &'static str) -> Result<f64> {
        self.params
            .get(key)
            .copied()
            .ok_or_else(|| Error::param(key, format!("missing for model `{}`", self.name)))
    }

    fn param_or(&self, key: &str, default: f64) -> f64 {
        self.params.get(key).copied().unwrap_or(default)
    }

    /// Builds the model this spec describes.
    pub fn build(&self) -> Result<MartingaleModel> {
        let model = match self.name.as_str() {
            "rademacher" => make_rademacher(self.n)?,
            "heavy_left" => make_heavy_left(
                self.n,
                self.param("rho")?,
                self.param_or("tail_atoms", 8.0) as usize,
            )?,
            "regime_switch" => make_regime_switch(self.n, self.param("gamma")?)?,
            "two_point" => make_two_point(self.n, self.param("p_up")?)?,
            other => {
                return Err(Error::param(
                    "name",
                    format!(
                    "unknown model `{other}` (rademacher | heavy_left | regime_switch | two_point)"
                ),
                ))
            }
        };
        match self.params.get("rho") {
            Some(&rho) if self.name != "heavy_left" => model.with_rho(rho),
            _ => Ok(model),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Dynamics {
    Iid,
    /// Laws: 0 = unit variance (first step), 1 = (1+γ)², 2 = (1−γ)².
    RegimeSwitch {
        gamma: f64,
    },
}

/// A martingale-difference process of horizon `n` with exact conditional laws.
#[derive(Debug, Clone, PartialEq)]
pub struct MartingaleModel {
    spec: ModelSpec,
    n: usize,
    rho: f64,
    eta_laws: Vec<ConditionalLaw>,
    xi_laws: Vec<ConditionalLaw>,
    dynamics: Dynamics,
    declared_n_sq: f64,
}

impl MartingaleModel {
    /// An i.i.d. model whose raw increments `η_i` all follow `eta_law`.
    pub fn iid(spec: ModelSpec, eta_law: ConditionalLaw, rho: f64) -> Result<Self> {
        check_horizon(spec.n)?;
        check_rho(rho)?;
        let n = spec.n;
        let xi = eta_law.scaled(1.0 / (n as f64).sqrt());
        let var = eta_law.variance();
        Ok(Self {
            spec,
            n,
            rho,
            eta_laws: vec![eta_law],
            xi_laws: vec![xi],
            dynamics: Dynamics::Iid,
            declared_n_sq: (n as f64 * (var - 1.0)).abs(),
        })
    }

    fn with_rho(mut self, rho: f64) -> Result<Self> {
        check_rho(rho)?;
        self.rho = rho;
        Ok(self)
    }

    pub fn name(&self) -> &str {
        &self.spec.name
    }

    pub fn spec(&self) -> &ModelSpec {
        &self.spec
    }

    pub fn n(&self) -> usize {
        self.n
    }

    /// Moment exponent ρ used when certifying this model.
    pub fn rho(&self) -> f64 {
        self.rho
    }

    pub fn is_iid(&self) -> bool {
        self.dynamics == Dynamics::Iid
    }

    /// Bound on `|Σ E[η_i²|F_{i-1}] − n|` guaranteed by construction.
    pub fn declared_n_squared(&self) -> f64 {
        self.declared_n_sq
    }

    /// Distinct standardized laws (`ξ` scale); `law_index` points into this slice.
    pub fn laws(&self) -> &[ConditionalLaw] {
        &self.xi_laws
    }

    pub fn eta_laws(&self) -> &[ConditionalLaw] {
        &self.eta_laws
    }

    pub fn initial(&self) -> HistorySummary {
        HistorySummary::default()
    }

    #[inline]
    pub fn law_index(&self, s: &HistorySummary) -> usize {
        match self.dynamics {
            Dynamics::Iid => 0,
            Dynamics::RegimeSwitch { gamma } => {
                if s.step == 0 {
                    return 0;
                }
                let (up, down) = regime_steps(gamma);
                let dev = regime_deviation(s, up, down);
                let band = 2.0 * gamma;
                let prefer_high = s.last_sign > 0;
                let high = if prefer_high {
                    dev + up <= band
                } else {
                    dev + down < -band
                };
                if high {
                    1
                } else {
                    2
                }
            }
        }
    }

    /// Standardized conditional law `ξ_{i+1} | F_i`.
    #[inline]
    pub fn law_at(&self, s: &HistorySummary) -> &ConditionalLaw {
        &self.xi_laws[self.law_index(s)]
    }

    /// Raw conditional law `η_{i+1} | F_i`.
    pub fn eta_law_at(&self, s: &HistorySummary) -> &ConditionalLaw {
        &self.eta_laws[self.law_index(s)]
    }

    /// Summary after appending `increment`, drawn from law `law_idx`.
    #[inline]
    pub fn advance(&self, s: &HistorySummary, law_idx: usize, increment: f64) -> HistorySummary {
        HistorySummary {
            step: s.step + 1,
            last_sign: if increment > 0.0 {
                1
            } else if increment < 0.0 {
                -1
            } else {
                0
            },
            high_steps: s.high_steps + u32::from(law_idx == 1 && !self.is_iid()),
        }
    }

    /// Reachable summaries before each step `1..=n`, together with the raw
    /// bracket `Σ_{j≤i} E[η_j²|F_{j-1}]` accumulated so far.
    pub fn reachable(&self) -> Vec<Vec<(HistorySummary, f64)>> {
        let mut out = Vec::with_capacity(self.n + 1);
        let mut frontier: Vec<(HistorySummary, f64)> = vec![(self.initial(), 0.0)];
        for _ in 0..self.n {
            let mut next: HashMap<HistorySummary, f64> = HashMap::new();
            for (s, bracket) in &frontier {
                let idx = self.law_index(s);
                let law = &self.eta_laws[idx];
                let b = bracket + law.variance();
                for a in law.atoms() {
                    let t = self.advance(s, idx, a.value);
                    if self.is_iid() {
                        // the law does not depend on the sign; collapse it
                        next.insert(HistorySummary { last_sign: 0, ..t }, b);
                    } else {
                        next.insert(t, b);
                    }
                }
            }
            out.push(std::mem::take(&mut frontier));
            let mut v: Vec<_> = next.into_iter().collect();
            v.sort_by_key(|a| a.0);
            frontier = v;
        }
        out.push(frontier);
        out
    }

    /// Indices of every conditional law reachable before step `n`.
    pub fn reachable_law_indices(&self) -> Vec<(usize, usize)> {
        let levels = self.reachable();
        let mut seen: Vec<(usize, usize)> = Vec::new();
        for (step, level) in levels.iter().take(self.n).enumerate() {
            for (s, _) in level {
                let idx = self.law_index(s);
                if !seen.iter().any(|&(_, i)| i == idx) {
                    seen.push((step + 1, idx));
                }
            }
        }
        seen
    }
}

fn regime_steps(gamma: f64) -> (f64, f64) {
    ((1.0 + gamma).powi(2) - 1.0, (1.0 - gamma).powi(2) - 1.0)
}

fn regime_deviation(s: &HistorySummary, up: f64, down: f64) -> f64 {
    let low = s.step.saturating_sub(1).saturating_sub(s.high_steps);
    s.high_steps as f64 * up + low as f64 * down
}

fn check_horizon(n: usize) -> Result<()> {
    if n == 0 {
        return Err(Error::param("n", "horizon must be at least 1"));
    }
    if n > u32::MAX as usize {
        return Err(Error::param("n", "horizon too large"));
    }
    Ok(())
}

fn check_rho(rho: f64) -> Result<()> {
    if !(rho > 0.0 && rho <= 1.0) {
        return Err(Error::param("rho", format!("{rho} not in (0, 1]")));
    }
    Ok(())
}

/// Increments `±n^{-1/2}` with probability 1/2 each.
pub fn make_rademacher(n: usize) -> Result<MartingaleModel> {
    check_horizon(n)?;
    let law = ConditionalLaw::new([(1.0, 0.5), (-1.0, 0.5)])?;
    MartingaleModel::iid(ModelSpec::new("rademacher", n), law, 1.0)
}

/// Centered, unit-variance two-point law `{+a w.p. p, −b w.p. 1−p}`.
pub fn make_two_point(n: usize, p_up: f64) -> Result<MartingaleModel> {
    if !(p_up > 0.0 && p_up < 1.0) {
        return Err(Error::param("p_up", format!("{p_up} not in (0, 1)")));
    }
    let up = ((1.0 - p_up) / p_up).sqrt();
    let down = (p_up / (1.0 - p_up)).sqrt();
    let law = ConditionalLaw::new([(up, p_up), (-down, 1.0 - p_up)])?;
    MartingaleModel::iid(ModelSpec::new("two_point", n).with("p_up", p_up), law, 1.0)
}

/// Largest negative atom of the heavy-left construction (raw scale).
pub const HEAVY_LEFT_REACH: f64 = 1e8;

/// I.i.d. increments with one positive atom and a heavy, geometrically spread
/// negative tail. The negative atoms sit at `−R^{j/(T−1)}`, `j = 0..T`, with
/// weights `∝ v^{−(2+2ρ)}`; total negative mass and the positive atom are solved
/// so that the law is centered with unit variance.
pub fn make_heavy_left(n: usize, rho: f64, tail_atoms: usize) -> Result<MartingaleModel> {
    check_horizon(n)?;
    if !(rho > 0.0 && rho < 1.0) {
        return Err(Error::param("rho", format!("{rho} not in (0, 1)")));
    }
    if tail_atoms < 2 {
        return Err(Error::param("tail_atoms", "need at least 2 tail atoms"));
    }
    let t = tail_atoms as f64;
    let reach: Vec<f64> = (0..tail_atoms)
        .map(|j| HEAVY_LEFT_REACH.powf(j as f64 / (t - 1.0)))
        .collect();
    let raw: Vec<f64> = reach.iter().map(|v| v.powf(-(2.0 + 2.0 * rho))).collect();
    let z: f64 = raw.iter().sum();
    let w: Vec<f64> = raw.iter().map(|r| r / z).collect();
    let mu: f64 = w.iter().zip(&reach).map(|(w, v)| w * v).sum();
    let s2: f64 = w.iter().zip(&reach).map(|(w, v)| w * v * v).sum();

    // q ↦ q²μ²/(1−q) + q·s2 − 1 is increasing on (0,1), −1 at 0, +∞ at 1.
    let f = |q: f64| q * q * mu * mu / (1.0 - q) + q * s2 - 1.0;
    let (mut lo, mut hi) = (0.0_f64, 1.0_f64);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if f(mid) < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let q = 0.5 * (lo + hi);
    let a = q * mu / (1.0 - q);
    let mut pairs = vec![(a, 1.0 - q)];
    pairs.extend(w.iter().zip(&reach).map(|(w, v)| (-v, q * w)));
    if !(q > 0.0 && q < 1.0 && a.is_finite() && a > 0.0)
        || pairs.iter().any(|&(_, p)| !(p > 0.0 && p.is_finite()))
    {
        return Err(Error::InfeasibleConstruction(format!(
            "no valid probability vector for rho={rho}, tail_atoms={tail_atoms} (q={q:e})"
        )));
    }
    let law =
        ConditionalLaw::new(pairs).map_err(|e| Error::InfeasibleConstruction(e.to_string()))?;
    let mut spec = ModelSpec::new("heavy_left", n)
        .with("rho", rho)
        .with("tail_atoms", tail_atoms as f64);
    spec.n = n;
    MartingaleModel::iid(spec, law, rho)
}

/// Conditional variance `(1±γ)²/n` chosen by the sign of the previous
/// increment, with a variance budget that switches regime whenever the
/// running deviation `Σ (σ_i² − 1)` would leave `[−2γ, 2γ]`.
pub fn make_regime_switch(n: usize, gamma: f64) -> Result<MartingaleModel> {
    check_horizon(n)?;
    if !(0.0..0.5).contains(&gamma) {
        return Err(Error::param("gamma", format!("{gamma} not in [0, 1/2)")));
    }
    let law = |sigma: f64| ConditionalLaw::new([(sigma, 0.5), (-sigma, 0.5)]);
    let eta_laws = vec![law(1.0)?, law(1.0 + gamma)?, law(1.0 - gamma)?];
    let scale = 1.0 / (n as f64).sqrt();
    let xi_laws = eta_laws.iter().map(|l| l.scaled(scale)).collect();
    Ok(MartingaleModel {
        spec: ModelSpec::new("regime_switch", n).with("gamma", gamma),
        n,
        rho: 1.0,
        eta_laws,
        xi_laws,
        dynamics: Dynamics::RegimeSwitch { gamma },
        declared_n_sq: (1.0 + gamma).powi(2) - (1.0 - gamma).powi(2),
    })
}

/// Left and right sides of an inequality `lhs ≤ rhs`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Comparison {
    pub lhs: f64,
    pub rhs: f64,
}

impl Comparison {
    pub fn holds(&self) -> bool {
        self.lhs <= self.rhs
    }
}

/// `E[|v|^{2+ρ} e^{K v⁺}]` against `L^ρ E[v²]`, evaluated exactly.
pub fn check_one_sided(law: &ConditionalLaw, rho: f64, k: f64, l: f64) -> Comparison {
    Comparison {
        lhs: law.expect(|v| v.abs().powf(2.0 + rho) * (k * v.max(0.0)).exp()),
        rhs: l.powf(rho) * law.variance(),
    }
}

/// Two-sided variant `E[|v|^{2+ρ} e^{K|v|}] ≤ L^ρ E[v²]`.
pub fn check_two_sided(law: &ConditionalLaw, rho: f64, k: f64, l: f64) -> Comparison {
    Comparison {
        lhs: law.expect(|v| v.abs().powf(2.0 + rho) * (k * v.abs()).exp()),
        rhs: l.powf(rho) * law.variance(),
    }
}

/// Standardized one-sided condition `E[|ξ|^{2+ρ} e^{ξ⁺/ε}] ≤ ε^ρ E[ξ²]`.
pub fn check_standardized(law: &ConditionalLaw, rho: f64, eps: f64) -> Comparison {
    Comparison {
        lhs: law.expect(|v| v.abs().powf(2.0 + rho) * (v.max(0.0) / eps).exp()),
        rhs: eps.powf(rho) * law.variance(),
    }
}

/// Conditional Bernstein condition `|E v^k| ≤ ½ k! H^{k−2} E v²` at one `k`.
pub fn bernstein_holds(law: &ConditionalLaw, k: u32, h: f64) -> bool {
    let factorial: f64 = (1..=k).map(f64::from).product();
    let lhs = law.expect(|v| v.powi(k as i32)).abs();
    lhs <= 0.5 * factorial * h.powi(k as i32 - 2) * law.variance()
}

/// Verified constants for the one-sided moment and bracket conditions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Certificate {
    pub model: String,
    pub n: usize,
    pub rho: f64,
    #[serde(rename = "K")]
    pub k: f64,
    #[serde(rename = "L")]
    pub l: f64,
    #[serde(rename = "N")]
    pub n_const: f64,
    /// `n^{-1/2} max{K, L}`.
    pub eps_n: f64,
    /// `n^{-1/2} N`.
    pub delta_n: f64,
    /// `n^{-1/2} L`, the alternative convention.
    pub delta_n_from_l: f64,
    /// Whether the standardized increments satisfy the `ε_n` form exactly.
    pub standardized_holds: bool,
}

/// Which δ_n convention an experiment uses.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DeltaConvention {
    #[default]
    FromN,
    FromL,
}

impl Certificate {
    pub fn delta(&self, convention: DeltaConvention) -> f64 {
        match convention {
            DeltaConvention::FromN => self.delta_n,
            DeltaConvention::FromL => self.delta_n_from_l,
        }
    }
}

/// Exact `max |Σ E[η_i²|F_{i-1}] − n|` over every reachable trajectory.
pub fn exact_bracket_deviation(model: &MartingaleModel) -> f64 {
    let levels = model.reachable();
    let n = model.n() as f64;
    levels
        .last()
        .map(|last| last.iter().map(|(_, b)| (b - n).abs()).fold(0.0, f64::max))
        .unwrap_or(0.0)
}

/// Certifies `model` at fixed `(K, L)`; fails with the violating law otherwise.
pub fn certify_with(model: &MartingaleModel, k: f64, l: f64) -> Result<Certificate> {
    if !(k > 0.0 && l > 0.0) {
        return Err(Error::param("K/L", "must be positive"));
    }
    let rho = model.rho();
    for (step, idx) in model.reachable_law_indices() {
        let law = &model.eta_laws()[idx];
        let c = check_one_sided(law, rho, k, l);
        if !c.holds() {
            return Err(Error::CertificationFailed {
                step,
                law: law.to_string(),
                inequality: format!("E[|η|^(2+ρ) e^(Kη⁺)] ≤ L^ρ E[η²] with ρ={rho}, K={k}, L={l}"),
                lhs: c.lhs,
                rhs: c.rhs,
            });
        }
    }
    let n = model.n() as f64;
    let n_const = exact_bracket_deviation(model).sqrt();
    let eps_n = k.max(l) / n.sqrt();
    let standardized_holds = model
        .reachable_law_indices()
        .iter()
        .all(|&(_, idx)| check_standardized(&model.laws()[idx], rho, eps_n).holds());
    Ok(Certificate {
        model: model.name().to_string(),
        n: model.n(),
        rho,
        k,
        l,
        n_const,
        eps_n,
        delta_n: n_const / n.sqrt(),
        delta_n_from_l: l / n.sqrt(),
        standardized_holds,
    })
}

/// Smallest `max{K, L}` on the certification grid such that the one-sided
/// moment condition holds for every reachable law and `K·max{K, L} ≥ 1`
/// (which transfers the condition to the standardized increments).
pub fn certify(model: &MartingaleModel) -> Result<Certificate> {
    let grid = certification_grid();
    let mut candidates: Vec<(f64, f64)> = grid
        .iter()
        .flat_map(|&k| grid.iter().map(move |&l| (k, l)))
        .filter(|&(k, l)| k * k.max(l) >= 1.0)
        .collect();
    candidates.sort_by(|a, b| {
        a.0.max(a.1)
            .total_cmp(&b.0.max(b.1))
            .then(a.0.total_cmp(&b.0))
            .then(a.1.total_cmp(&b.1))
    });
    let mut last_err = None;
    for (k, l) in candidates {
        match certify_with(model, k, l) {
            Ok(c) => return Ok(c),
            Err(e) => last_err = Some(e),
        }
    }
    Err(last_err.unwrap_or_else(|| Error::InvalidLaw("empty certification grid".into())))
}

/// Re-checks both conditions of an existing certificate against `model`.
pub fn verify_certificate(model: &MartingaleModel, cert: &Certificate) -> Result<()> {
    let fresh = certify_with(model, cert.k, cert.l)?;
    let dev = fresh.n_const * fresh.n_const;
    if dev > cert.n_const * cert.n_const * (1.0 + 1e-12) + 1e-12 {
        return Err(Error::CertificationFailed {
            step: model.n(),
            law: "bracket".into(),
            inequality: "|Σ E[η²|F] − n| ≤ N²".into(),
            lhs: dev,
            rhs: cert.n_const * cert.n_const,
        });
    }
    Ok(())
}

/// One simulated trajectory: increments, partial sums and conditional variance.
#[derive(Debug, Clone, PartialEq)]
pub struct Path {
    pub increments: Vec<f64>,
    pub partial_sums: Vec<f64>,
    pub bracket: Vec<f64>,
}

impl Path {
    pub fn terminal(&self) -> f64 {
        *self.partial_sums.last().unwrap_or(&0.0)
    }
}

/// Draws a standardized path sequentially from the model's conditional laws.
pub fn sample_path(model: &MartingaleModel, rng: &mut impl RngCore) -> Path {
    let n = model.n();
    let mut increments = Vec::with_capacity(n);
    let mut partial_sums = Vec::with_capacity(n + 1);
    let mut bracket = Vec::with_capacity(n + 1);
    partial_sums.push(0.0);
    bracket.push(0.0);
    let (mut x, mut b) = (0.0, 0.0);
    let mut s = model.initial();
    for _ in 0..n {
        let idx = model.law_index(&s);
        let law = &model.laws()[idx];
        let xi = law.sample(rng);
        x += xi;
        b += law.variance();
        increments.push(xi);
        partial_sums.push(x);
        bracket.push(b);
        s = model.advance(&s, idx, xi);
    }
    Path {
        increments,
        partial_sums,
        bracket,
    }
}

/// Raw increments `η_1..η_n` drawn with the same consumption of `rng` as
/// [`sample_path`]; `Σ η_i / √n` reproduces `X_n` under a matched stream.
pub fn sample_raw_increments(model: &MartingaleModel, rng: &mut impl RngCore) -> Vec<f64> {
    let mut s = model.initial();
    (0..model.n())
        .map(|_| {
            let idx = model.law_index(&s);
            let eta = model.eta_laws()[idx].sample(rng);
            s = model.advance(&s, idx, eta);
            eta
        })
        .collect()
}
