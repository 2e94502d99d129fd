//! Finite-state stationary Markov chains: exact mixing coefficients,
//! interlaced block sums, a Berbee-type coupling and tail-ratio experiments.

use std::collections::HashMap;
use std::io::Write;

use nalgebra::{DMatrix, DVector};
use rand::RngCore;
use serde::{Deserialize, Serialize};

use crate::bounds::{gaussian_tail, mixing_ratio_rhs};
use crate::error::{Error, Result};
use crate::montecarlo::{clopper_pearson, Engine};
use crate::rng::StreamRng;

/// Tolerance on row sums, stationarity residuals and centering.
pub const CHAIN_TOL: f64 = 1e-12;

/// JSON description of a chain: `{name, states, P, f}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MarkovChainSpec {
    pub name: String,
    pub states: Vec<String>,
    #[serde(rename = "P")]
    pub p: Vec<Vec<f64>>,
    pub f: Vec<f64>,
}

impl MarkovChainSpec {
    /// `[[1−a, a], [b, 1−b]]` with a centered observable of unit stationary variance.
    pub fn two_state(a: f64, b: f64) -> Self {
        // π = (b, a)/(a+b); f = (√(a/b), −√(b/a)) has mean 0 and variance 1
        let f = vec![(a / b).sqrt(), -(b / a).sqrt()];
        Self {
            name: format!("two_state(a={a},b={b})"),
            states: vec!["0".into(), "1".into()],
            p: vec![vec![1.0 - a, a], vec![b, 1.0 - b]],
            f,
        }
    }
}

/// A validated irreducible, aperiodic chain started from stationarity.
#[derive(Debug, Clone, PartialEq)]
pub struct MarkovChain {
    spec: MarkovChainSpec,
    p: DMatrix<f64>,
    pi: Vec<f64>,
}

fn is_primitive(p: &DMatrix<f64>) -> bool {
    let s = p.nrows();
    let support = p.map(|v| v > 0.0);
    let mut reach = support.clone();
    // Wielandt: a primitive matrix has a strictly positive power (S−1)²+1
    let target = (s - 1) * (s - 1) + 1;
    for _ in 1..target {
        let mut next = DMatrix::from_element(s, s, false);
        for i in 0..s {
            for j in 0..s {
                next[(i, j)] = (0..s).any(|l| reach[(i, l)] && support[(l, j)]);
            }
        }
        reach = next;
    }
    reach.iter().all(|&b| b)
}

/// Stationary distribution of an irreducible aperiodic stochastic matrix.
pub fn stationary_dist(p: &DMatrix<f64>) -> Result<Vec<f64>> {
    let s = p.nrows();
    if s == 0 || p.ncols() != s {
        return Err(Error::InvalidChain(
            "transition matrix must be square and nonempty".into(),
        ));
    }
    if !is_primitive(p) {
        return Err(Error::InvalidChain("chain is reducible or periodic".into()));
    }
    // (Pᵀ − I)π = 0 with the last equation replaced by Σπ = 1
    let mut a = p.transpose() - DMatrix::identity(s, s);
    for j in 0..s {
        a[(s - 1, j)] = 1.0;
    }
    let mut rhs = DVector::zeros(s);
    rhs[s - 1] = 1.0;
    let pi = a
        .lu()
        .solve(&rhs)
        .ok_or_else(|| Error::InvalidChain("singular stationary system".into()))?;
    let pi: Vec<f64> = pi.iter().copied().collect();
    let resid = (0..s)
        .map(|j| ((0..s).map(|i| pi[i] * p[(i, j)]).sum::<f64>() - pi[j]).abs())
        .fold(0.0, f64::max);
    if resid > CHAIN_TOL || pi.iter().any(|&v| v <= 0.0) {
        return Err(Error::InvalidChain(format!(
            "stationary solve residual {resid:e} exceeds tolerance"
        )));
    }
    Ok(pi)
}

impl MarkovChain {
    pub fn new(spec: MarkovChainSpec) -> Result<Self> {
        let s = spec.p.len();
        if s < 2 {
            return Err(Error::InvalidChain("need at least two states".into()));
        }
        if spec.states.len() != s || spec.f.len() != s {
            return Err(Error::InvalidChain(format!(
                "{} states, {} rows and {} observable values disagree",
                spec.states.len(),
                s,
                spec.f.len()
            )));
        }
        for (i, row) in spec.p.iter().enumerate() {
            if row.len() != s {
                return Err(Error::InvalidChain(format!(
                    "row {i} has {} entries",
                    row.len()
                )));
            }
            if row.iter().any(|&v| !(0.0..=1.0).contains(&v)) {
                return Err(Error::InvalidChain(format!(
                    "row {i} has entries outside [0, 1]"
                )));
            }
            let sum: f64 = row.iter().sum();
            if (sum - 1.0).abs() > CHAIN_TOL {
                return Err(Error::InvalidChain(format!("row {i} sums to {sum}")));
            }
        }
        if spec.f.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidChain("observable must be finite".into()));
        }
        let p = DMatrix::from_fn(s, s, |i, j| spec.p[i][j]);
        let pi = stationary_dist(&p)?;
        let mean: f64 = pi.iter().zip(&spec.f).map(|(a, b)| a * b).sum();
        if mean.abs() > CHAIN_TOL {
            return Err(Error::InvalidChain(format!(
                "observable has stationary mean {mean:e}, expected 0"
            )));
        }
        Ok(Self { spec, p, pi })
    }

    pub fn spec(&self) -> &MarkovChainSpec {
        &self.spec
    }

    pub fn size(&self) -> usize {
        self.pi.len()
    }

    pub fn transition(&self) -> &DMatrix<f64> {
        &self.p
    }

    pub fn stationary(&self) -> &[f64] {
        &self.pi
    }

    pub fn observable(&self) -> &[f64] {
        &self.spec.f
    }

    /// Upper bound `c₃ = max f`.
    pub fn c3(&self) -> f64 {
        self.spec
            .f
            .iter()
            .copied()
            .fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn power(&self, n: usize) -> DMatrix<f64> {
        let s = self.size();
        let mut out = DMatrix::identity(s, s);
        let mut base = self.p.clone();
        let mut e = n;
        while e > 0 {
            if e & 1 == 1 {
                out = &out * &base;
            }
            base = &base * &base;
            e >>= 1;
        }
        out
    }

    /// Autocovariances `r(h) = E[f(X_0) f(X_h)]` for `h = 0..=h_max`.
    pub fn autocovariances(&self, h_max: usize) -> Vec<f64> {
        let mut g = DVector::from_column_slice(&self.spec.f);
        let mut out = Vec::with_capacity(h_max + 1);
        for _ in 0..=h_max {
            out.push(
                (0..self.size())
                    .map(|i| self.pi[i] * self.spec.f[i] * g[i])
                    .sum(),
            );
            g = &self.p * g;
        }
        out
    }
}

fn beta_from_power(pn: &DMatrix<f64>, pi: &[f64]) -> f64 {
    let s = pi.len();
    (0..s)
        .map(|i| pi[i] * 0.5 * (0..s).map(|j| (pn[(i, j)] - pi[j]).abs()).sum::<f64>())
        .sum()
}

fn psi_bar_from_power(pn: &DMatrix<f64>, pi: &[f64]) -> f64 {
    let s = pi.len();
    let mut worst: f64 = 0.0;
    for i in 0..s {
        for j in 0..s {
            worst = worst.max((pn[(i, j)] / pi[j] - 1.0).abs());
        }
    }
    worst
}

/// `β(n) = Σ_i π_i TV(Pⁿ(i,·), π)`.
pub fn beta_coefficient(chain: &MarkovChain, n: usize) -> f64 {
    beta_from_power(&chain.power(n), chain.stationary())
}

/// `ψ̄(n) = max_{i,j} |Pⁿ(i,j)/π(j) − 1|`, which dominates ψ(n).
pub fn psi_bar_coefficient(chain: &MarkovChain, n: usize) -> f64 {
    psi_bar_from_power(&chain.power(n), chain.stationary())
}

/// `β(n) ≤ a₁ exp(−a₂ n^τ)` fitted on the values above 1e-12.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BetaFit {
    pub a1: f64,
    pub a2: f64,
    pub tau: f64,
    /// Largest relative deviation of the fitted curve from β on the fitted range.
    pub max_rel_error: f64,
}

/// Exact decay arrays plus fitted and measured constants of a chain.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MixingCertificate {
    pub beta: Vec<f64>,
    pub psi_bar: Vec<f64>,
    pub fit: Option<BetaFit>,
    pub rho: f64,
    /// `max_m (E|S_m|^{2+ρ} / m^{1+ρ/2})^{1/(2+ρ)}` over the measured block lengths.
    pub c1: f64,
    /// `min_m (E S_m² / m)^{1/2}` over the measured block lengths.
    pub c2: f64,
    pub c3: f64,
}

impl MixingCertificate {
    /// `β(1..=n_max)`, `ψ̄(1..=n_max)` and moment constants over block
    /// lengths `1..=m_max`.
    pub fn compute(chain: &MarkovChain, n_max: usize, m_max: usize, rho: f64) -> Result<Self> {
        if n_max == 0 || m_max == 0 {
            return Err(Error::param("n_max/m_max", "must be ≥ 1"));
        }
        if !(rho > 0.0 && rho <= 1.0) {
            return Err(Error::param("rho", format!("{rho} not in (0, 1]")));
        }
        let mut beta = Vec::with_capacity(n_max);
        let mut psi_bar = Vec::with_capacity(n_max);
        let mut pn = chain.transition().clone();
        for _ in 0..n_max {
            beta.push(beta_from_power(&pn, chain.stationary()));
            psi_bar.push(psi_bar_from_power(&pn, chain.stationary()));
            pn = &pn * chain.transition();
        }
        let fit = fit_beta(&beta);
        let r = chain.autocovariances(m_max);
        let mut c1: f64 = 0.0;
        let mut c2 = f64::INFINITY;
        for m in 1..=m_max {
            let law = block_sum_law(chain, m)?;
            let abs_moment: f64 = law.iter().map(|(v, p)| p * v.abs().powf(2.0 + rho)).sum();
            let mf = m as f64;
            c1 = c1.max((abs_moment / mf.powf(1.0 + rho / 2.0)).powf(1.0 / (2.0 + rho)));
            c2 = c2.min((block_variance(&r, m) / mf).sqrt());
        }
        Ok(Self {
            beta,
            psi_bar,
            fit,
            rho,
            c1,
            c2,
            c3: chain.c3(),
        })
    }

    /// Values are nonincreasing, nonnegative and `β ≤ ψ̄`, up to rounding.
    pub fn is_consistent(&self) -> bool {
        let tol = 1e-12;
        self.beta.windows(2).all(|w| w[1] <= w[0] + tol)
            && self.psi_bar.windows(2).all(|w| w[1] <= w[0] + tol)
            && self.beta.iter().all(|&b| b >= 0.0)
            && self
                .beta
                .iter()
                .zip(&self.psi_bar)
                .all(|(b, p)| *b <= p + tol)
    }
}

/// `E S_m²` for a stationary run of `m` terms from autocovariances.
fn block_variance(r: &[f64], m: usize) -> f64 {
    m as f64 * r[0] + 2.0 * (1..m).map(|h| (m - h) as f64 * r[h]).sum::<f64>()
}

fn fit_beta(beta: &[f64]) -> Option<BetaFit> {
    let pts: Vec<(f64, f64)> = beta
        .iter()
        .enumerate()
        .filter(|(_, &b)| b > 1e-12)
        .map(|(i, &b)| ((i + 1) as f64, b.ln()))
        .collect();
    if pts.len() < 2 {
        return None;
    }
    let mut best: Option<(f64, f64, f64, f64)> = None;
    for t in 1..=40 {
        let tau = f64::from(t) * 0.05;
        let xs: Vec<f64> = pts.iter().map(|p| p.0.powf(tau)).collect();
        let m = xs.len() as f64;
        let mx = xs.iter().sum::<f64>() / m;
        let my = pts.iter().map(|p| p.1).sum::<f64>() / m;
        let sxy: f64 = xs
            .iter()
            .zip(&pts)
            .map(|(x, p)| (x - mx) * (p.1 - my))
            .sum();
        let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
        if sxx == 0.0 {
            continue;
        }
        let slope = sxy / sxx;
        let intercept = my - slope * mx;
        let sse: f64 = xs
            .iter()
            .zip(&pts)
            .map(|(x, p)| (p.1 - intercept - slope * x).powi(2))
            .sum();
        if slope < 0.0 && best.is_none_or(|b| sse < b.3) {
            best = Some((tau, -slope, intercept, sse));
        }
    }
    let (tau, a2, intercept, _) = best?;
    // lift a₁ so the curve dominates every fitted point
    let lift = pts
        .iter()
        .map(|p| p.1 - intercept + a2 * p.0.powf(tau))
        .fold(0.0, f64::max);
    let ln_a1 = intercept + lift;
    let max_rel_error = pts
        .iter()
        .map(|p| ((ln_a1 - a2 * p.0.powf(tau) - p.1).exp() - 1.0).abs())
        .fold(0.0, f64::max);
    Some(BetaFit {
        a1: ln_a1.exp(),
        a2,
        tau,
        max_rel_error,
    })
}

/// Exact law of `f(X_1) + … + f(X_m)` under stationarity, as `(value, prob)`
/// pairs; sums closer than 1e-9·max|f| are merged.
pub fn block_sum_law(chain: &MarkovChain, m: usize) -> Result<Vec<(f64, f64)>> {
    let f = chain.observable();
    let unit = 1e-9
        * f.iter()
            .map(|v| v.abs())
            .fold(0.0, f64::max)
            .max(f64::MIN_POSITIVE);
    let key = |v: f64| (v / unit).round() as i64;
    let mut frontier: HashMap<(usize, i64), (f64, f64)> = HashMap::new();
    for (i, (&v, &p)) in f.iter().zip(chain.stationary()).enumerate() {
        frontier.insert((i, key(v)), (v, p));
    }
    for _ in 1..m {
        let mut next: HashMap<(usize, i64), (f64, f64)> = HashMap::new();
        for (&(i, _), &(sum, p)) in &frontier {
            for (j, &fj) in f.iter().enumerate() {
                let q = chain.transition()[(i, j)];
                if q == 0.0 {
                    continue;
                }
                let v = sum + fj;
                let e = next.entry((j, key(v))).or_insert((v, 0.0));
                e.1 += p * q;
            }
        }
        if next.len() > 2_000_000 {
            return Err(Error::param(
                "m",
                "block-sum support too large to enumerate",
            ));
        }
        frontier = next;
    }
    let mut merged: HashMap<i64, (f64, f64)> = HashMap::new();
    for ((_, k), (v, p)) in frontier {
        let e = merged.entry(k).or_insert((v, 0.0));
        e.1 += p;
    }
    let mut out: Vec<(f64, f64)> = merged.into_values().collect();
    out.sort_by(|a, b| a.0.total_cmp(&b.0));
    Ok(out)
}

/// Block length `m = ⌊n^α⌋` and block count `k = ⌊n/(2m)⌋`.
pub fn block_sizes(n: usize, alpha: f64) -> Result<(usize, usize)> {
    if !(alpha > 0.0 && alpha <= 0.5) {
        return Err(Error::param("alpha", format!("{alpha} not in (0, 1/2]")));
    }
    let nf = n as f64;
    let mut m = nf.powf(alpha).floor() as usize;
    // correct floor for powers that land one ulp below an integer
    while ((m + 1) as f64).powf(1.0 / alpha) <= nf * (1.0 + 1e-12) {
        m += 1;
    }
    let m = m.max(1);
    let k = n / (2 * m);
    if k == 0 {
        return Err(Error::param(
            "n",
            format!("n = {n} gives no complete block for m = {m}"),
        ));
    }
    Ok((m, k))
}

/// Interlaced blocks `Y_j = η_{2m(j−1)+1} + … + η_{2m(j−1)+m}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BlockDecomposition {
    pub m: usize,
    pub k: usize,
    pub alpha: f64,
    pub blocks: Vec<f64>,
    pub s_n: f64,
}

impl BlockDecomposition {
    /// 1-based index range of block `j` (1-based).
    pub fn block_range(m: usize, j: usize) -> std::ops::RangeInclusive<usize> {
        let start = 2 * m * (j - 1) + 1;
        start..=start + m - 1
    }
}

pub fn block_decompose(path: &[f64], alpha: f64) -> Result<BlockDecomposition> {
    let (m, k) = block_sizes(path.len(), alpha)?;
    let blocks: Vec<f64> = (1..=k)
        .map(|j| {
            BlockDecomposition::block_range(m, j)
                .map(|i| path[i - 1])
                .sum()
        })
        .collect();
    let s_n = blocks.iter().sum();
    Ok(BlockDecomposition {
        m,
        k,
        alpha,
        blocks,
        s_n,
    })
}

/// `E S_n²` for the interlaced sum with `k` blocks of length `m`, exactly.
pub fn interlaced_variance(chain: &MarkovChain, m: usize, k: usize) -> f64 {
    let span = 2 * m * k;
    let r = chain.autocovariances(span);
    let within = block_variance(&r, m);
    let mut across = 0.0;
    for g in 1..k {
        let base = 2 * m * g;
        let mut cross = 0.0;
        for t in -(m as isize - 1)..=(m as isize - 1) {
            cross += (m - t.unsigned_abs()) as f64 * r[(base as isize + t) as usize];
        }
        across += (k - g) as f64 * cross;
    }
    k as f64 * within + 2.0 * across
}

/// `τ_n = (ψ + nψ² + kψ^{1/2})^{1/2}`.
pub fn tau_n(psi_m: f64, n: usize, k: usize) -> f64 {
    (psi_m + n as f64 * psi_m * psi_m + k as f64 * psi_m.sqrt()).sqrt()
}

/// Row-wise samplers with 64-bit inverse-CDF thresholds.
#[derive(Debug, Clone)]
struct RowSampler {
    rows: Vec<Vec<u64>>,
}

fn thresholds(probs: &[f64]) -> Vec<u64> {
    let total: f64 = probs.iter().sum();
    let mut cum = 0.0;
    let mut out: Vec<u64> = probs
        .iter()
        .map(|p| {
            cum += p / total;
            (cum * 18_446_744_073_709_551_616.0) as u64
        })
        .collect();
    // states with zero mass never get selected: trailing entries stay at MAX
    if let Some(last_pos) = probs.iter().rposition(|&p| p > 0.0) {
        for t in out.iter_mut().skip(last_pos) {
            *t = u64::MAX;
        }
    }
    out
}

#[inline]
fn pick(th: &[u64], raw: u64) -> usize {
    th.iter().position(|&t| raw < t).unwrap_or(th.len() - 1)
}

impl RowSampler {
    fn from_matrix(p: &DMatrix<f64>) -> Self {
        let rows = (0..p.nrows())
            .map(|i| thresholds(&p.row(i).iter().copied().collect::<Vec<_>>()))
            .collect();
        Self { rows }
    }

    #[inline]
    fn step(&self, from: usize, rng: &mut impl RngCore) -> usize {
        pick(&self.rows[from], rng.next_u64())
    }
}

/// Maximal coupling of `ν = P^{gap}(s,·)` with `π` for every state `s`.
#[derive(Debug, Clone)]
struct BlockStartCoupling {
    /// Joint law `J_s(x, x̃)` flattened row-major, as sampling thresholds.
    joint: Vec<Vec<u64>>,
    size: usize,
}

/// Joint matrix with marginals `ν` and `μ` and `P(x ≠ x̃) = TV(ν, μ)`.
pub fn maximal_coupling(nu: &[f64], mu: &[f64]) -> Vec<Vec<f64>> {
    let s = nu.len();
    let tv = 0.5 * nu.iter().zip(mu).map(|(a, b)| (a - b).abs()).sum::<f64>();
    let mut j = vec![vec![0.0; s]; s];
    for x in 0..s {
        j[x][x] = nu[x].min(mu[x]);
        if tv > 0.0 {
            for y in 0..s {
                if x != y {
                    j[x][y] = (nu[x] - mu[x]).max(0.0) * (mu[y] - nu[y]).max(0.0) / tv;
                }
            }
        }
    }
    j
}

impl BlockStartCoupling {
    fn new(chain: &MarkovChain, gap: usize) -> Self {
        let pg = chain.power(gap);
        let s = chain.size();
        let joint = (0..s)
            .map(|from| {
                let nu: Vec<f64> = pg.row(from).iter().copied().collect();
                let j = maximal_coupling(&nu, chain.stationary());
                thresholds(&j.concat())
            })
            .collect();
        Self { joint, size: s }
    }

    #[inline]
    fn draw(&self, from: usize, rng: &mut impl RngCore) -> (usize, usize) {
        let cell = pick(&self.joint[from], rng.next_u64());
        (cell / self.size, cell % self.size)
    }
}

/// One Berbee-coupled draw of the interlaced blocks.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BerbeeSample {
    pub blocks: Vec<f64>,
    pub copies: Vec<f64>,
    pub mismatch: Vec<bool>,
}

impl BerbeeSample {
    pub fn any_mismatch(&self) -> bool {
        self.mismatch.iter().any(|&b| b)
    }
}

/// Sequential block coupler for a fixed `(m, k)`.
#[derive(Debug, Clone)]
pub struct BerbeeCoupler<'a> {
    chain: &'a MarkovChain,
    m: usize,
    k: usize,
    steps: RowSampler,
    start: Vec<u64>,
    coupling: BlockStartCoupling,
}

impl<'a> BerbeeCoupler<'a> {
    pub fn new(chain: &'a MarkovChain, m: usize, k: usize) -> Result<Self> {
        if m == 0 || k == 0 {
            return Err(Error::param("m/k", "must be ≥ 1"));
        }
        Ok(Self {
            chain,
            m,
            k,
            steps: RowSampler::from_matrix(chain.transition()),
            start: thresholds(chain.stationary()),
            // the last state of block j−1 and the first of block j are m+1 steps apart
            coupling: BlockStartCoupling::new(chain, m + 1),
        })
    }

    /// Union bound `(k − 1) β(m + 1)` on the mismatch probability.
    pub fn mismatch_bound(&self) -> f64 {
        (self.k - 1) as f64 * beta_coefficient(self.chain, self.m + 1)
    }

    pub fn sample(&self, rng: &mut impl RngCore) -> BerbeeSample {
        let f = self.chain.observable();
        let mut blocks = Vec::with_capacity(self.k);
        let mut copies = Vec::with_capacity(self.k);
        let mut mismatch = Vec::with_capacity(self.k);
        let mut last = 0;
        for j in 0..self.k {
            let (mut x, mut y) = if j == 0 {
                let s = pick(&self.start, rng.next_u64());
                (s, s)
            } else {
                self.coupling.draw(last, rng)
            };
            let (mut sx, mut sy) = (f[x], f[y]);
            for _ in 1..self.m {
                if x == y {
                    x = self.steps.step(x, rng);
                    y = x;
                } else {
                    x = self.steps.step(x, rng);
                    y = self.steps.step(y, rng);
                }
                sx += f[x];
                sy += f[y];
            }
            last = x;
            blocks.push(sx);
            copies.push(sy);
            mismatch.push(sx != sy);
        }
        BerbeeSample {
            blocks,
            copies,
            mismatch,
        }
    }
}

pub fn berbee_couple(
    chain: &MarkovChain,
    m: usize,
    k: usize,
    rng: &mut StreamRng,
) -> Result<BerbeeSample> {
    Ok(BerbeeCoupler::new(chain, m, k)?.sample(rng))
}

/// Both sides of `|E XY − EX EY| ≤ 2ψ̄(n)^{1/p} (E|X|^p)^{1/p} (E|Y|^q)^{1/q}`
/// for `X = f(X_{j+n})`, `Y = g(X_j)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CovarianceCheck {
    pub lhs: f64,
    pub rhs: f64,
    pub ratio: f64,
}

impl CovarianceCheck {
    pub fn holds(&self) -> bool {
        self.lhs <= self.rhs * (1.0 + 1e-12) + 1e-15
    }
}

pub fn covariance_bound_check(
    chain: &MarkovChain,
    n: usize,
    f: &[f64],
    g: &[f64],
    p: f64,
) -> Result<CovarianceCheck> {
    if !(p > 1.0 && p.is_finite()) {
        return Err(Error::param("p", format!("{p} must be > 1")));
    }
    let s = chain.size();
    if f.len() != s || g.len() != s {
        return Err(Error::param(
            "f/g",
            "length must equal the number of states",
        ));
    }
    let q = p / (p - 1.0);
    let pi = chain.stationary();
    let pn = chain.power(n);
    let mut exy = 0.0;
    for i in 0..s {
        for j in 0..s {
            exy += pi[i] * pn[(i, j)] * g[i] * f[j];
        }
    }
    let ex: f64 = (0..s).map(|i| pi[i] * f[i]).sum();
    let ey: f64 = (0..s).map(|i| pi[i] * g[i]).sum();
    let lhs = (exy - ex * ey).abs();
    let mx: f64 = (0..s)
        .map(|i| pi[i] * f[i].abs().powf(p))
        .sum::<f64>()
        .powf(1.0 / p);
    let my: f64 = (0..s)
        .map(|i| pi[i] * g[i].abs().powf(q))
        .sum::<f64>()
        .powf(1.0 / q);
    let rhs = 2.0 * psi_bar_from_power(&pn, pi).powf(1.0 / p) * mx * my;
    let ratio = if rhs > 0.0 {
        lhs / rhs
    } else if lhs > 0.0 {
        f64::INFINITY
    } else {
        0.0
    };
    Ok(CovarianceCheck { lhs, rhs, ratio })
}

/// One grid point of the block-sum ratio experiment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MixingRow {
    pub x: f64,
    pub p_hat: f64,
    pub ci95: (f64, f64),
    pub gauss_tail: f64,
    pub ratio: f64,
    pub log_ratio: f64,
    /// Right side of the ratio bound with constant 1; `None` when τ_n ≥ 1.
    pub envelope: Option<f64>,
}

impl MixingRow {
    /// Whether the ratio CI meets `[e^{−env}, e^{env}]`.
    pub fn consistent_with_envelope(&self) -> Option<bool> {
        let env = self.envelope?;
        let lo = self.ci95.0 / self.gauss_tail;
        let hi = self.ci95.1 / self.gauss_tail;
        Some(hi >= (-env).exp() && lo <= env.exp())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MixingReport {
    pub chain: String,
    pub n: usize,
    pub alpha: f64,
    pub m: usize,
    pub k: usize,
    pub es2: f64,
    /// Monte Carlo mean of `S_n²`, a cross-check of `es2`.
    pub es2_mc: f64,
    pub psi_m: f64,
    pub beta_m: f64,
    pub tau_n: f64,
    pub rho: f64,
    /// Moment constants measured over block lengths `1..=m`; NaN when the
    /// block-sum law is too large to enumerate.
    pub c1: f64,
    pub c2: f64,
    pub budget: u64,
    pub seed: u64,
    pub rows: Vec<MixingRow>,
    pub warnings: Vec<String>,
}

pub const MIXING_COLUMNS: [&str; 13] = [
    "x",
    "p_hat",
    "ci_lo",
    "ci_hi",
    "gauss_tail",
    "ratio",
    "log_ratio",
    "envelope",
    "m",
    "k",
    "es2",
    "tau_n",
    "n_samples",
];

impl MixingReport {
    pub fn write_csv(&self, out: impl Write, config: &str) -> Result<()> {
        crate::montecarlo::write_csv_with_header(out, config, &MIXING_COLUMNS, |w| {
            for r in &self.rows {
                w.write_record([
                    r.x.to_string(),
                    r.p_hat.to_string(),
                    r.ci95.0.to_string(),
                    r.ci95.1.to_string(),
                    r.gauss_tail.to_string(),
                    r.ratio.to_string(),
                    r.log_ratio.to_string(),
                    r.envelope
                        .map_or_else(|| "NaN".to_string(), |e| e.to_string()),
                    self.m.to_string(),
                    self.k.to_string(),
                    self.es2.to_string(),
                    self.tau_n.to_string(),
                    self.budget.to_string(),
                ])?;
            }
            Ok(())
        })
    }
}

/// Plain Monte Carlo estimates of `P(S_n/√(E S_n²) > x)` for the interlaced
/// sum of a stationary chain, with `E S_n²` computed exactly. Gaps between
/// blocks are skipped by sampling the next block start from `P^{m+1}`.
#[allow(clippy::too_many_arguments)]
pub fn mixing_tail_experiment(
    chain: &MarkovChain,
    n: usize,
    alpha: f64,
    x_grid: &[f64],
    budget: u64,
    seed: u64,
    rho: f64,
    engine: &Engine,
) -> Result<MixingReport> {
    if !(alpha > 0.0 && alpha < 0.5) {
        return Err(Error::param("alpha", format!("{alpha} not in (0, 1/2)")));
    }
    if x_grid.is_empty() {
        return Err(Error::param("x_grid", "must be nonempty"));
    }
    if budget == 0 {
        return Err(Error::param("budget", "must be ≥ 1"));
    }
    let (m, k) = block_sizes(n, alpha)?;
    let es2 = interlaced_variance(chain, m, k);
    if !(es2 > 0.0) {
        return Err(Error::InvalidChain(
            "interlaced sum has zero variance".into(),
        ));
    }
    let sd = es2.sqrt();
    let steps = RowSampler::from_matrix(chain.transition());
    let jump = RowSampler::from_matrix(&chain.power(m + 1));
    let start = thresholds(chain.stationary());
    let f = chain.observable();
    let sums = engine.collect(budget, seed, |rng, _| {
        let mut x = pick(&start, rng.next_u64());
        let mut total = 0.0;
        for j in 0..k {
            if j > 0 {
                x = jump.step(x, rng);
            }
            total += f[x];
            for _ in 1..m {
                x = steps.step(x, rng);
                total += f[x];
            }
        }
        total
    });
    let es2_mc = sums.iter().map(|s| s * s).sum::<f64>() / budget as f64;
    let psi_m = psi_bar_coefficient(chain, m);
    let tau = tau_n(psi_m, n, k);
    let mut warnings = Vec::new();
    let (c1, c2) = match MixingCertificate::compute(chain, m, m, rho) {
        Ok(cert) => (cert.c1, cert.c2),
        Err(e) => {
            warnings.push(format!("moment constants not measured: {e}"));
            (f64::NAN, f64::NAN)
        }
    };
    if tau >= 1.0 {
        warnings.push(format!("tau_n = {tau:.4} ≥ 1: envelope undefined"));
    }
    let rows = x_grid
        .iter()
        .map(|&x| {
            let hits = sums.iter().filter(|&&s| s > x * sd).count() as u64;
            let p_hat = hits as f64 / budget as f64;
            let gauss = gaussian_tail(x);
            MixingRow {
                x,
                p_hat,
                ci95: clopper_pearson(hits, budget, 0.95),
                gauss_tail: gauss,
                ratio: p_hat / gauss,
                log_ratio: (p_hat / gauss).ln(),
                envelope: (tau < 1.0).then(|| mixing_ratio_rhs(x, n, alpha, rho, tau, 1.0)),
            }
        })
        .collect();
    Ok(MixingReport {
        chain: chain.spec().name.clone(),
        n,
        alpha,
        m,
        k,
        es2,
        es2_mc,
        psi_m,
        beta_m: beta_coefficient(chain, m),
        tau_n: tau,
        rho,
        c1,
        c2,
        budget,
        seed,
        rows,
        warnings,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream;

    fn two(a: f64, b: f64) -> MarkovChain {
        MarkovChain::new(MarkovChainSpec::two_state(a, b)).unwrap()
    }

    #[test]
    fn two_state_stationary() {
        let c = two(0.2, 0.6);
        assert!((c.stationary()[0] - 0.75).abs() < 1e-15);
        assert!((c.stationary()[1] - 0.25).abs() < 1e-15);
        let h = two(0.5, 0.5);
        assert!((h.stationary()[0] - 0.5).abs() < 1e-15);
    }

    #[test]
    fn rejects_bad_chains() {
        let mut s = MarkovChainSpec::two_state(0.3, 0.3);
        s.p = vec![vec![0.0, 1.0], vec![1.0, 0.0]];
        assert!(matches!(MarkovChain::new(s), Err(Error::InvalidChain(_))));
        let mut s = MarkovChainSpec::two_state(0.3, 0.3);
        s.p = vec![vec![1.0, 0.0], vec![0.3, 0.7]];
        assert!(MarkovChain::new(s).is_err());
        let mut s = MarkovChainSpec::two_state(0.3, 0.3);
        s.f = vec![1.0, 1.0];
        assert!(MarkovChain::new(s).is_err());
        let mut s = MarkovChainSpec::two_state(0.3, 0.3);
        s.p[0][0] = 0.71;
        assert!(MarkovChain::new(s).is_err());
    }

    #[test]
    fn iid_chain_has_no_dependence() {
        let c = two(0.5, 0.5);
        for n in 1..5 {
            assert!(beta_coefficient(&c, n) < 1e-15);
            assert!(psi_bar_coefficient(&c, n) < 1e-15);
        }
        let mut rng = stream(1, 1);
        let b = berbee_couple(&c, 3, 6, &mut rng).unwrap();
        assert!(!b.any_mismatch());
    }

    #[test]
    fn block_arithmetic() {
        assert_eq!(block_sizes(100, 0.5).unwrap(), (10, 5));
        assert_eq!(block_sizes(100, 0.01).unwrap(), (1, 50));
        assert_eq!(block_sizes(10_000, 0.3).unwrap(), (15, 333));
        assert_eq!(BlockDecomposition::block_range(10, 2), 21..=30);
        let path: Vec<f64> = (1..=100).map(f64::from).collect();
        let d = block_decompose(&path, 0.5).unwrap();
        assert_eq!(d.blocks[1], (21..=30).sum::<i32>() as f64);
        assert!(block_sizes(1, 0.3).is_err());
        assert!(block_sizes(100, 0.6).is_err());
    }

    #[test]
    fn tau_values() {
        assert_eq!(tau_n(0.0, 100, 5), 0.0);
        assert!((tau_n(1e-4, 10_000, 50).powi(2) - 0.5002).abs() < 1e-12);
    }

    #[test]
    fn interlaced_variance_matches_enumeration() {
        // small case: compare with the block-sum law of the whole span
        let c = two(0.3, 0.2);
        let (m, k) = (2, 2);
        let v = interlaced_variance(&c, m, k);
        // brute force over all 2^6 paths of length 2mk − m = 6
        let pi = c.stationary();
        let p = c.transition();
        let f = c.observable();
        let mut es2 = 0.0;
        for mask in 0..64u32 {
            let st: Vec<usize> = (0..6).map(|i| ((mask >> i) & 1) as usize).collect();
            let mut prob = pi[st[0]];
            for w in st.windows(2) {
                prob *= p[(w[0], w[1])];
            }
            let s = f[st[0]] + f[st[1]] + f[st[4]] + f[st[5]];
            es2 += prob * s * s;
        }
        assert!((v - es2).abs() < 1e-12);
    }

    #[test]
    fn maximal_coupling_marginals() {
        let nu = [0.7, 0.2, 0.1];
        let mu = [0.2, 0.3, 0.5];
        let j = maximal_coupling(&nu, &mu);
        for x in 0..3 {
            let row: f64 = j[x].iter().sum();
            let col: f64 = (0..3).map(|r| j[r][x]).sum();
            assert!((row - nu[x]).abs() < 1e-15);
            assert!((col - mu[x]).abs() < 1e-15);
        }
        let off: f64 = (0..3)
            .flat_map(|x| (0..3).map(move |y| (x, y)))
            .filter(|(x, y)| x != y)
            .map(|(x, y)| j[x][y])
            .sum();
        assert!((off - 0.5).abs() < 1e-15);
    }

    #[test]
    fn spec_round_trip() {
        let s = MarkovChainSpec::two_state(0.3, 0.3);
        let json = serde_json::to_string(&s).unwrap();
        assert!(json.contains("\"P\""));
        let back: MarkovChainSpec = serde_json::from_str(&json).unwrap();
        assert_eq!(back, s);
    }
}
