//! Survey propagation by population dynamics for coupled K-SAT and Q-colouring,
//! and instance-level SP for K-SAT factor graphs.
//!
//! Populations hold `S` samples per chain position. K-SAT keeps `Q̂` on the `L`
//! constraint positions and the pair `(Q⁺, Q⁻)` on the `L+w−1` variable positions
//! (`L` for periodic chains). Colouring keeps the colour-symmetric `Q̂ ∈ [0, 1/Q]` on
//! the `L` positions. With open boundaries every sample requested from outside the
//! chain is 0.
//!
//! Sampling is split into fixed blocks of samples, each with its own random stream
//! keyed by `(seed, sweep, position, block)`, so results do not depend on the number
//! of threads.

use rand::Rng as _;
use rand_distr::{Distribution, Poisson};
use rayon::prelude::*;
use serde::Serialize;

use crate::ensembles::{FactorGraph, Problem};
use crate::error::{param, Result};
use crate::rng::{self, tag, Rng};
use crate::stats::{binomial, mean_stderr, KahanSum};
use crate::thresholds::{find_alpha_s, find_alpha_sp, Sample, StochasticSearch, ThresholdResult};

/// Samples per random stream.
pub const BLOCK: usize = 512;

/// Extra draws of the cheap K-SAT constraint and edge terms per variable-term draw;
/// their weights `α` and `αK` make them the noisiest parts of the estimate.
const CONS_DRAWS: usize = 4;
const EDGE_DRAWS: usize = 16;

/// Log arguments at or below this are rejected.
/// Rounding excursions below this size are clamped without being counted.
pub const CLOSURE_SLACK: f64 = 1e-12;
pub const LOG_FLOOR: f64 = 1e-300;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum ChainBoundary {
    Open,
    Periodic,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum InitPolicy {
    /// Every warning off.
    Trivial,
    /// Every warning on.
    Forced,
    /// Uniform over the admissible range.
    Uniform,
}

impl std::str::FromStr for InitPolicy {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s.to_ascii_lowercase().as_str() {
            "trivial" => Ok(Self::Trivial),
            "forced" => Ok(Self::Forced),
            "uniform" => Ok(Self::Uniform),
            other => Err(format!("unknown init policy {other:?}")),
        }
    }
}

/// Shape of a coupled chain for population dynamics.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub struct Chain {
    pub w: usize,
    pub l: usize,
    pub boundary: ChainBoundary,
}

impl Chain {
    pub fn individual() -> Self {
        Self { w: 1, l: 1, boundary: ChainBoundary::Open }
    }

    pub fn open(w: usize, l: usize) -> Self {
        Self { w, l, boundary: ChainBoundary::Open }
    }

    pub fn periodic(w: usize, l: usize) -> Self {
        Self { w, l, boundary: ChainBoundary::Periodic }
    }

    fn validate(&self) -> Result<()> {
        if self.w == 0 || self.l == 0 {
            return param("w and L must be positive");
        }
        if self.boundary == ChainBoundary::Periodic && self.w > self.l {
            return param("periodic chains need w <= L");
        }
        Ok(())
    }

    /// Number of positions carrying variable samples.
    pub fn var_positions(&self) -> usize {
        match self.boundary {
            ChainBoundary::Open => self.l + self.w - 1,
            ChainBoundary::Periodic => self.l,
        }
    }

    /// Maps a signed chain offset to a stored position, or `None` outside an open chain.
    fn wrap(&self, pos: isize, len: usize) -> Option<usize> {
        match self.boundary {
            ChainBoundary::Open => (pos >= 0 && (pos as usize) < len).then_some(pos as usize),
            ChainBoundary::Periodic => Some(pos.rem_euclid(len as isize) as usize),
        }
    }
}

/// Event counts accumulated over sweeps and measurements.
#[derive(Clone, Copy, Debug, Default, Serialize)]
pub struct Counters {
    /// K-SAT ratios with `Q⁺ = Q⁻ = 0`, set to 0.
    pub zero_over_zero: u64,
    /// Colouring updates with a non-positive denominator, set to 0.
    pub bad_denominator: u64,
    /// Resampled values outside their range, clamped back.
    pub closure_violations: u64,
    pub log_evaluations: u64,
    pub log_rejections: u64,
}

impl Counters {
    fn merge(&mut self, o: &Counters) {
        self.zero_over_zero += o.zero_over_zero;
        self.bad_denominator += o.bad_denominator;
        self.closure_violations += o.closure_violations;
        self.log_evaluations += o.log_evaluations;
        self.log_rejections += o.log_rejections;
    }

    pub fn rejection_rate(&self) -> f64 {
        if self.log_evaluations == 0 {
            0.0
        } else {
            self.log_rejections as f64 / self.log_evaluations as f64
        }
    }
}

/// `ln(arg)`, or `None` (counted) when `arg` is not safely positive.
fn guarded_ln(arg: f64, counters: &mut Counters) -> Option<f64> {
    counters.log_evaluations += 1;
    if arg > LOG_FLOOR && arg.is_finite() {
        Some(arg.ln())
    } else {
        counters.log_rejections += 1;
        None
    }
}

fn poisson(mean: f64) -> Option<Poisson<f64>> {
    (mean > 0.0).then(|| Poisson::new(mean).expect("finite positive mean"))
}

fn draw_count(dist: &Option<Poisson<f64>>, rng: &mut Rng) -> usize {
    dist.as_ref().map_or(0, |d| d.sample(rng) as usize)
}

/// Fills `s` samples in parallel blocks; `f(rng, counters)` produces one sample.
fn fill_blocks<T, F>(s: usize, seed: u64, tags: [u64; 3], f: F) -> (Vec<T>, Counters)
where
    T: Send,
    F: Fn(&mut Rng, &mut Counters) -> T + Sync,
{
    let blocks = s.div_ceil(BLOCK);
    let parts: Vec<(Vec<T>, Counters)> = (0..blocks)
        .into_par_iter()
        .map(|b| {
            let mut rng = rng::stream(seed, &[tags[0], tags[1], tags[2], b as u64]);
            let mut c = Counters::default();
            let n = BLOCK.min(s - b * BLOCK);
            let v = (0..n).map(|_| f(&mut rng, &mut c)).collect();
            (v, c)
        })
        .collect();
    let mut out = Vec::with_capacity(s);
    let mut counters = Counters::default();
    for (v, c) in parts {
        out.extend(v);
        counters.merge(&c);
    }
    (out, counters)
}

/// Per-position complexity with Monte-Carlo errors.
#[derive(Clone, Debug, Default, Serialize)]
pub struct ComplexityEstimate {
    pub per_position: Vec<f64>,
    pub per_position_stderr: Vec<f64>,
    pub total: f64,
    pub total_stderr: f64,
    pub rejection_rate: f64,
}

impl ComplexityEstimate {
    /// Combines per-sweep measurements by batch means; each sweep is one batch.
    /// Totals are divided by `norm`, the number of constraint positions.
    fn from_batches(batches: &[Vec<f64>], within: &[Vec<f64>], norm: usize, rejection_rate: f64) -> Self {
        let n = batches[0].len();
        let l = norm;
        let mut per_position = Vec::with_capacity(n);
        let mut per_position_stderr = Vec::with_capacity(n);
        for z in 0..n {
            let xs: Vec<f64> = batches.iter().map(|b| b[z]).collect();
            let (m, se) = mean_stderr(&xs);
            per_position.push(m);
            // A single batch falls back to the within-sweep error.
            per_position_stderr.push(if batches.len() > 1 { se } else { within[0][z] });
        }
        let totals: Vec<f64> = batches.iter().map(|b| b.iter().copied().collect::<KahanSum>().value() / l as f64).collect();
        let total = per_position.iter().copied().collect::<KahanSum>().value() / l as f64;
        let total_stderr = if batches.len() > 1 {
            mean_stderr(&totals).1
        } else {
            within[0].iter().map(|s| s * s).sum::<f64>().sqrt() / l as f64
        };
        Self { per_position, per_position_stderr, total, total_stderr, rejection_rate }
    }
}

/// Mean and standard error of the accepted values of one complexity term.
fn term_mean(values: &[Option<f64>]) -> (f64, f64) {
    let acc: Vec<f64> = values.iter().flatten().copied().collect();
    if acc.is_empty() {
        return (0.0, 0.0);
    }
    mean_stderr(&acc)
}

// ---------------------------------------------------------------------------
// K-SAT
// ---------------------------------------------------------------------------

/// `Q⁺(1 − Q⁻)/(Q⁺ + Q⁻ − Q⁺Q⁻)`, with 0/0 mapped to 0.
pub fn ksat_ratio(qp: f64, qm: f64, counters: &mut Counters) -> f64 {
    let den = qp + qm - qp * qm;
    if den <= 0.0 {
        counters.zero_over_zero += 1;
        return 0.0;
    }
    qp * (1.0 - qm) / den
}

#[derive(Clone, Debug)]
pub struct KsatPopulation {
    pub k: usize,
    pub alpha: f64,
    pub chain: Chain,
    pub size: usize,
    /// `Q̂` samples per constraint position.
    pub q_hat: Vec<Vec<f64>>,
    /// `(Q⁺, Q⁻)` samples per variable position.
    pub q_pm: Vec<Vec<(f64, f64)>>,
    pub counters: Counters,
    pub sweeps: u64,
}

impl KsatPopulation {
    pub fn new(k: usize, alpha: f64, chain: Chain, size: usize, init: InitPolicy, seed: u64) -> Result<Self> {
        chain.validate()?;
        if k < 2 || k > 16 {
            return param(format!("K must be in 2..=16, got {k}"));
        }
        if !(alpha >= 0.0) || !alpha.is_finite() {
            return param(format!("alpha must be finite and non-negative, got {alpha}"));
        }
        if size == 0 {
            return param("population size must be positive");
        }
        let q_hat = (0..chain.l)
            .map(|z| match init {
                InitPolicy::Trivial => vec![0.0; size],
                InitPolicy::Forced => vec![1.0; size],
                InitPolicy::Uniform => {
                    let mut r = rng::stream(seed, &[tag::INIT, z as u64]);
                    (0..size).map(|_| r.random::<f64>()).collect()
                }
            })
            .collect();
        let q_pm = vec![vec![(1.0, 1.0); size]; chain.var_positions()];
        let mut pop = Self { k, alpha, chain, size, q_hat, q_pm, counters: Counters::default(), sweeps: 0 };
        // Bring the variable pools in line with the initial Q̂.
        pop.update_vars(seed, u64::MAX);
        Ok(pop)
    }

    fn hat_at(&self, pos: isize, rng: &mut Rng) -> f64 {
        match self.chain.wrap(pos, self.chain.l) {
            Some(p) => self.q_hat[p][rng.random_range(0..self.size)],
            None => 0.0,
        }
    }

    fn pm_at(&self, pos: usize, rng: &mut Rng) -> (f64, f64) {
        let p = self.chain.wrap(pos as isize, self.chain.var_positions()).expect("variable position in range");
        self.q_pm[p][rng.random_range(0..self.size)]
    }

    fn update_vars(&mut self, seed: u64, sweep: u64) {
        let dist = poisson(self.alpha * self.k as f64 / 2.0);
        let w = self.chain.w;
        let nv = self.chain.var_positions();
        let results: Vec<(Vec<(f64, f64)>, Counters)> = (0..nv)
            .map(|u| {
                fill_blocks(self.size, seed, [tag::KSAT_VAR, sweep, u as u64], |rng, _| {
                    let p = draw_count(&dist, rng);
                    let q = draw_count(&dist, rng);
                    let mut qp = 1.0;
                    for _ in 0..p {
                        let k = rng.random_range(0..w) as isize;
                        qp *= 1.0 - self.hat_at(u as isize - k, rng);
                    }
                    let mut qm = 1.0;
                    for _ in 0..q {
                        let k = rng.random_range(0..w) as isize;
                        qm *= 1.0 - self.hat_at(u as isize - k, rng);
                    }
                    (qp, qm)
                })
            })
            .collect();
        for (u, (v, c)) in results.into_iter().enumerate() {
            self.q_pm[u] = v;
            self.counters.merge(&c);
        }
    }

    fn update_hats(&mut self, seed: u64, sweep: u64) {
        let w = self.chain.w;
        let km1 = self.k - 1;
        let results: Vec<(Vec<f64>, Counters)> = (0..self.chain.l)
            .map(|z| {
                fill_blocks(self.size, seed, [tag::KSAT_CONS, sweep, z as u64], |rng, c| {
                    let mut h = 1.0;
                    for _ in 0..km1 {
                        let l = rng.random_range(0..w);
                        let (qp, qm) = self.pm_at(z + l, rng);
                        h *= ksat_ratio(qp, qm, c);
                    }
                    if !(0.0..=1.0).contains(&h) {
                        c.closure_violations += 1;
                        h = h.clamp(0.0, 1.0);
                    }
                    h
                })
            })
            .collect();
        for (z, (v, c)) in results.into_iter().enumerate() {
            self.q_hat[z] = v;
            self.counters.merge(&c);
        }
    }

    /// One full sweep: variable pools from `Q̂`, then `Q̂` from the new variable pools.
    pub fn sweep(&mut self, seed: u64) {
        let s = self.sweeps;
        self.update_vars(seed, s);
        self.update_hats(seed, s);
        self.sweeps += 1;
    }

    pub fn mean_q_hat(&self) -> f64 {
        let sum: KahanSum = self.q_hat.iter().flatten().copied().collect();
        sum.value() / (self.chain.l * self.size) as f64
    }

    /// Per-position mean of `Q̂`.
    pub fn profile(&self) -> Vec<f64> {
        self.q_hat.iter().map(|v| v.iter().sum::<f64>() / v.len() as f64).collect()
    }

    pub fn set_trivial(&mut self) {
        for v in &mut self.q_hat {
            v.iter_mut().for_each(|x| *x = 0.0);
        }
        for v in &mut self.q_pm {
            v.iter_mut().for_each(|x| *x = (1.0, 1.0));
        }
    }

    /// One Monte-Carlo measurement of `σ_z` with `samples` draws per term.
    ///
    /// With `a = Q⁺ + Q⁻ − Q⁺Q⁻` and `r = Q⁺(1 − Q⁻)/a`, the constraint term is
    /// `Σ_i ln a_i + ln(1 − Π_i r_i)` and the edge term is `ln a + ln(1 − r Q̂)`. The
    /// `ln a` parts enter with weights `αK` and `−αK` and have the same expectation,
    /// so they are dropped before sampling.
    ///
    /// Returns `(σ_z, stderr_z)` per variable position. On an open chain the last
    /// `w − 1` entries carry only the variable term of the boundary variables.
    pub fn measure(&self, samples: usize, seed: u64, round: u64) -> (Vec<f64>, Vec<f64>, Counters) {
        let dist = poisson(self.alpha * self.k as f64 / 2.0);
        let (k, w, a) = (self.k, self.chain.w, self.alpha);
        let mut counters = Counters::default();
        let nv = self.chain.var_positions();
        let mut sig = Vec::with_capacity(nv);
        let mut err = Vec::with_capacity(nv);
        for z in 0..nv {
            let interior = z < self.chain.l;
            let samples_c = if interior { samples } else { 0 };
            let (cons, c1) = fill_blocks(samples_c * CONS_DRAWS, seed, [tag::KSAT_MEASURE, round, 3 * z as u64], |rng, c| {
                let mut prod = 1.0;
                for _ in 0..k {
                    let (qp, qm) = self.pm_at(z + rng.random_range(0..w), rng);
                    prod *= ksat_ratio(qp, qm, c);
                }
                guarded_ln(1.0 - prod, c)
            });
            let (var, c2) = fill_blocks(samples, seed, [tag::KSAT_MEASURE, round, 3 * z as u64 + 1], |rng, c| {
                let p = draw_count(&dist, rng);
                let q = draw_count(&dist, rng);
                let mut pp = 1.0;
                for _ in 0..p {
                    pp *= 1.0 - self.hat_at(z as isize - rng.random_range(0..w) as isize, rng);
                }
                let mut pm = 1.0;
                for _ in 0..q {
                    pm *= 1.0 - self.hat_at(z as isize - rng.random_range(0..w) as isize, rng);
                }
                guarded_ln(pp + pm - pp * pm, c)
            });
            let (edge, c3) = fill_blocks(samples_c * EDGE_DRAWS, seed, [tag::KSAT_MEASURE, round, 3 * z as u64 + 2], |rng, c| {
                let (qp, qm) = self.pm_at(z + rng.random_range(0..w), rng);
                let h = self.q_hat[z][rng.random_range(0..self.size)];
                guarded_ln(1.0 - ksat_ratio(qp, qm, c) * h, c)
            });
            for c in [c1, c2, c3] {
                counters.merge(&c);
            }
            let (mc, ec) = term_mean(&cons);
            let (mv, ev) = term_mean(&var);
            let (me, ee) = term_mean(&edge);
            let ak = a * k as f64;
            sig.push(a * mc + mv - ak * me);
            err.push(((a * ec).powi(2) + ev * ev + (ak * ee).powi(2)).sqrt());
        }
        (sig, err, counters)
    }

    /// Snapshot rows `(kind, position, sample, value, value2)`; `value2` is `Q⁻` for variable rows.
    pub fn snapshot(&self) -> Vec<(String, usize, usize, f64, f64)> {
        let mut rows = Vec::new();
        for (z, v) in self.q_hat.iter().enumerate() {
            rows.extend(v.iter().enumerate().map(|(i, &h)| ("q_hat".to_string(), z, i, h, f64::NAN)));
        }
        for (u, v) in self.q_pm.iter().enumerate() {
            rows.extend(v.iter().enumerate().map(|(i, &(p, m))| ("q_pm".to_string(), u, i, p, m)));
        }
        rows
    }
}

// ---------------------------------------------------------------------------
// Q-colouring
// ---------------------------------------------------------------------------

/// Exact binomial tables for the colour-symmetric SP update.
#[derive(Clone, Debug)]
struct ColorCoefficients {
    /// `(−1)^l C(Q−1, l)` for `l = 0..Q−1`.
    num: Vec<f64>,
    /// `(−1)^l C(Q, l+1)` for `l = 0..Q−1`.
    den: Vec<f64>,
}

impl ColorCoefficients {
    fn new(q: usize) -> Self {
        let sign = |l: usize| if l % 2 == 0 { 1.0 } else { -1.0 };
        let q32 = q as u32;
        Self {
            num: (0..q).map(|l| sign(l) * binomial(q32 - 1, l as u32) as f64).collect(),
            den: (0..q).map(|l| sign(l) * binomial(q32, l as u32 + 1) as f64).collect(),
        }
    }

    /// `(numerator, denominator)` of the update given the products `Π(1 − (l+1)Q̂_i)`.
    fn sums(&self, prods: &[f64]) -> (f64, f64) {
        let mut n = KahanSum::new();
        let mut d = KahanSum::new();
        for (l, &p) in prods.iter().enumerate() {
            n.add(self.num[l] * p);
            d.add(self.den[l] * p);
        }
        (n.value(), d.value())
    }
}

/// Products `Π_i (1 − (l+1) Q̂_i)` for `l = 0..Q−1`.
fn color_products(q: usize, hats: impl Iterator<Item = f64>, prods: &mut [f64]) {
    prods.iter_mut().for_each(|p| *p = 1.0);
    for h in hats {
        for (l, p) in prods.iter_mut().enumerate().take(q) {
            *p *= 1.0 - (l + 1) as f64 * h;
        }
    }
}

#[derive(Clone, Debug)]
pub struct QcolPopulation {
    pub q: usize,
    pub c: f64,
    pub chain: Chain,
    pub size: usize,
    pub q_hat: Vec<Vec<f64>>,
    pub counters: Counters,
    pub sweeps: u64,
    coeffs: ColorCoefficients,
}

impl QcolPopulation {
    pub fn new(q: usize, c: f64, chain: Chain, size: usize, init: InitPolicy, seed: u64) -> Result<Self> {
        chain.validate()?;
        if !(2..=20).contains(&q) {
            return param(format!("Q must be in 2..=20, got {q}"));
        }
        if !(c >= 0.0) || !c.is_finite() {
            return param(format!("c must be finite and non-negative, got {c}"));
        }
        if size == 0 {
            return param("population size must be positive");
        }
        let top = 1.0 / q as f64;
        let q_hat = (0..chain.l)
            .map(|z| match init {
                InitPolicy::Trivial => vec![0.0; size],
                InitPolicy::Forced => vec![top; size],
                InitPolicy::Uniform => {
                    let mut r = rng::stream(seed, &[tag::INIT, z as u64]);
                    (0..size).map(|_| top * r.random::<f64>()).collect()
                }
            })
            .collect();
        Ok(Self { q, c, chain, size, q_hat, counters: Counters::default(), sweeps: 0, coeffs: ColorCoefficients::new(q) })
    }

    fn hat_at(&self, pos: isize, rng: &mut Rng) -> f64 {
        match self.chain.wrap(pos, self.chain.l) {
            Some(p) => self.q_hat[p][rng.random_range(0..self.size)],
            None => 0.0,
        }
    }

    fn offset(&self, rng: &mut Rng) -> isize {
        let w = self.chain.w;
        rng.random_range(0..2 * w - 1) as isize - (w as isize - 1)
    }

    pub fn sweep(&mut self, seed: u64) {
        let dist = poisson(self.c);
        let q = self.q;
        let top = 1.0 / q as f64;
        let s = self.sweeps;
        let results: Vec<(Vec<f64>, Counters)> = (0..self.chain.l)
            .map(|z| {
                fill_blocks(self.size, seed, [tag::QCOL_SWEEP, s, z as u64], |rng, cnt| {
                    let d = draw_count(&dist, rng);
                    let mut prods = [1.0f64; 20];
                    let hats: Vec<f64> = (0..d).map(|_| self.hat_at(z as isize + self.offset(rng), rng)).collect();
                    color_products(q, hats.into_iter(), &mut prods[..q]);
                    let (num, den) = self.coeffs.sums(&prods[..q]);
                    if den <= 0.0 {
                        cnt.bad_denominator += 1;
                        return 0.0;
                    }
                    let h = num / den;
                    if !(-CLOSURE_SLACK..=top + CLOSURE_SLACK).contains(&h) {
                        cnt.closure_violations += 1;
                    }
                    if !(0.0..=top).contains(&h) {
                        return h.clamp(0.0, top);
                    }
                    h
                })
            })
            .collect();
        for (z, (v, c)) in results.into_iter().enumerate() {
            self.q_hat[z] = v;
            self.counters.merge(&c);
        }
        self.sweeps += 1;
    }

    pub fn mean_q_hat(&self) -> f64 {
        let sum: KahanSum = self.q_hat.iter().flatten().copied().collect();
        sum.value() / (self.chain.l * self.size) as f64
    }

    pub fn profile(&self) -> Vec<f64> {
        self.q_hat.iter().map(|v| v.iter().sum::<f64>() / v.len() as f64).collect()
    }

    pub fn set_trivial(&mut self) {
        for v in &mut self.q_hat {
            v.iter_mut().for_each(|x| *x = 0.0);
        }
    }

    /// Returns `(σ_z, stderr_z)` per position. On an open chain the `w − 1` positions on
    /// either side of the chain come first and last; they carry only the variable term
    /// of the outside variables that receive warnings from the chain.
    pub fn measure(&self, samples: usize, seed: u64, round: u64) -> (Vec<f64>, Vec<f64>, Counters) {
        let dist = poisson(self.c);
        let q = self.q;
        let l = self.chain.l as isize;
        let pad = match self.chain.boundary {
            ChainBoundary::Open => self.chain.w as isize - 1,
            ChainBoundary::Periodic => 0,
        };
        let mut counters = Counters::default();
        let mut sig = Vec::with_capacity((l + 2 * pad) as usize);
        let mut err = Vec::with_capacity((l + 2 * pad) as usize);
        for z in -pad..l + pad {
            let tag_z = (z + pad) as u64;
            let (var, c1) = fill_blocks(samples, seed, [tag::QCOL_MEASURE, round, 2 * tag_z], |rng, cnt| {
                let d = draw_count(&dist, rng);
                let mut prods = [1.0f64; 20];
                let hats: Vec<f64> = (0..d).map(|_| self.hat_at(z + self.offset(rng), rng)).collect();
                color_products(q, hats.into_iter(), &mut prods[..q]);
                guarded_ln(self.coeffs.sums(&prods[..q]).1, cnt)
            });
            let inside = (0..l).contains(&z);
            let (edge, c2) = fill_blocks(if inside { samples } else { 0 }, seed, [tag::QCOL_MEASURE, round, 2 * tag_z + 1], |rng, cnt| {
                let h1 = self.q_hat[z as usize][rng.random_range(0..self.size)];
                let h2 = self.hat_at(z + self.offset(rng), rng);
                guarded_ln(1.0 - q as f64 * h1 * h2, cnt)
            });
            counters.merge(&c1);
            counters.merge(&c2);
            let (mv, ev) = term_mean(&var);
            let (me, ee) = term_mean(&edge);
            let half = self.c / 2.0;
            sig.push(mv - half * me);
            err.push((ev * ev + (half * ee).powi(2)).sqrt());
        }
        (sig, err, counters)
    }
}

// ---------------------------------------------------------------------------
// Driver
// ---------------------------------------------------------------------------

#[derive(Clone, Copy, Debug, Serialize)]
pub struct PopulationConfig {
    /// Samples per position.
    pub size: usize,
    pub burn_in: usize,
    /// Sweeps with a measurement after each; each is one batch for the error bars.
    pub measure_sweeps: usize,
    /// Monte-Carlo draws per term and position in each measurement.
    pub measure_samples: usize,
    /// `None` picks the model default, see [`SpModel::default_init`].
    pub init: Option<InitPolicy>,
    pub seed: u64,
    /// The population is collapsed once the mean `Q̂` stays below this ...
    pub collapse_threshold: f64,
    /// ... for this many consecutive sweeps.
    pub collapse_window: usize,
    /// After burn-in, keep sweeping in chunks of this many sweeps while the mean `Q̂`
    /// still falls by more than `drift_tol` (relative) per chunk ...
    pub settle_chunk: usize,
    pub drift_tol: f64,
    /// ... up to this many extra sweeps.
    pub max_settle: usize,
}

impl PopulationConfig {
    /// Table-reproduction defaults.
    pub fn paper(seed: u64) -> Self {
        Self {
            size: 50_000,
            burn_in: 400,
            measure_sweeps: 20,
            measure_samples: 50_000,
            init: None,
            seed,
            collapse_threshold: 1e-6,
            collapse_window: 10,
            settle_chunk: 50,
            drift_tol: 5e-3,
            max_settle: 4000,
        }
    }

    /// Reduced population for runs of a few minutes.
    pub fn fast(seed: u64) -> Self {
        Self { size: 2000, burn_in: 150, measure_sweeps: 5, measure_samples: 2000, ..Self::paper(seed) }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct PopulationRun {
    pub estimate: ComplexityEstimate,
    pub collapsed: bool,
    pub sweeps: u64,
    pub mean_q_hat: f64,
    /// Per-position mean `Q̂` at the end of the run.
    pub profile: Vec<f64>,
    pub counters: Counters,
}

/// Operations shared by both population types.
pub trait Population {
    fn sweep(&mut self, seed: u64);
    fn mean_q_hat(&self) -> f64;
    fn profile(&self) -> Vec<f64>;
    fn set_trivial(&mut self);
    fn measure(&self, samples: usize, seed: u64, round: u64) -> (Vec<f64>, Vec<f64>, Counters);
    fn counters(&self) -> Counters;
    fn sweeps(&self) -> u64;
    fn constraint_positions(&self) -> usize;
}

macro_rules! impl_population {
    ($t:ty) => {
        impl Population for $t {
            fn sweep(&mut self, seed: u64) {
                <$t>::sweep(self, seed)
            }
            fn mean_q_hat(&self) -> f64 {
                <$t>::mean_q_hat(self)
            }
            fn profile(&self) -> Vec<f64> {
                <$t>::profile(self)
            }
            fn set_trivial(&mut self) {
                <$t>::set_trivial(self)
            }
            fn measure(&self, samples: usize, seed: u64, round: u64) -> (Vec<f64>, Vec<f64>, Counters) {
                <$t>::measure(self, samples, seed, round)
            }
            fn counters(&self) -> Counters {
                self.counters
            }
            fn sweeps(&self) -> u64 {
                self.sweeps
            }
            fn constraint_positions(&self) -> usize {
                self.chain.l
            }
        }
    };
}

impl_population!(KsatPopulation);
impl_population!(QcolPopulation);

/// Burn-in, settling while the mean `Q̂` still drifts down, then measured sweeps. A
/// population that collapses is set to the exact trivial point, whose complexity is 0.
pub fn run_population<P: Population>(pop: &mut P, cfg: &PopulationConfig) -> PopulationRun {
    let mut below = 0;
    let mut collapsed = false;
    let mut check = |pop: &mut P, collapsed: &mut bool| {
        if *collapsed {
            return;
        }
        if pop.mean_q_hat() < cfg.collapse_threshold {
            below += 1;
        } else {
            below = 0;
        }
        if below >= cfg.collapse_window {
            pop.set_trivial();
            *collapsed = true;
        }
    };
    check(pop, &mut collapsed);
    for _ in 0..cfg.burn_in {
        if collapsed {
            break;
        }
        pop.sweep(cfg.seed);
        check(pop, &mut collapsed);
    }
    // A receding kink front loses mass steadily; wait until it stops or the chain empties.
    let mut settled = 0;
    while !collapsed && cfg.settle_chunk > 0 && settled < cfg.max_settle {
        let before = pop.mean_q_hat();
        for _ in 0..cfg.settle_chunk {
            pop.sweep(cfg.seed);
            check(pop, &mut collapsed);
            if collapsed {
                break;
            }
        }
        settled += cfg.settle_chunk;
        if before - pop.mean_q_hat() <= cfg.drift_tol * before {
            break;
        }
    }
    let mut batches = Vec::new();
    let mut within = Vec::new();
    let mut counters = Counters::default();
    for round in 0..cfg.measure_sweeps.max(1) {
        if !collapsed {
            pop.sweep(cfg.seed);
            check(pop, &mut collapsed);
        }
        let (s, e, c) = pop.measure(cfg.measure_samples, cfg.seed, round as u64);
        batches.push(s);
        within.push(e);
        counters.merge(&c);
    }
    let mut all = pop.counters();
    all.merge(&counters);
    let estimate = ComplexityEstimate::from_batches(&batches, &within, pop.constraint_positions(), counters.rejection_rate());
    PopulationRun { estimate, collapsed, sweeps: pop.sweeps(), mean_q_hat: pop.mean_q_hat(), profile: pop.profile(), counters: all }
}

/// Which model a population run solves.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
#[serde(tag = "model", rename_all = "kebab-case")]
pub enum SpModel {
    Ksat { k: usize },
    Qcol { q: usize },
}

impl SpModel {
    /// Uniform for K-SAT, where the all-ones start sits on 0/0 ratios and collapses;
    /// forced (`1/Q`) for colouring.
    pub fn default_init(&self) -> InitPolicy {
        match self {
            SpModel::Ksat { .. } => InitPolicy::Uniform,
            SpModel::Qcol { .. } => InitPolicy::Forced,
        }
    }
}

/// Builds and runs a population at control parameter `control` (`α` or `c`).
pub fn run_population_dynamics(model: SpModel, control: f64, chain: Chain, cfg: &PopulationConfig) -> Result<PopulationRun> {
    let init = cfg.init.unwrap_or(model.default_init());
    Ok(match model {
        SpModel::Ksat { k } => run_population(&mut KsatPopulation::new(k, control, chain, cfg.size, init, cfg.seed)?, cfg),
        SpModel::Qcol { q } => run_population(&mut QcolPopulation::new(q, control, chain, cfg.size, init, cfg.seed)?, cfg),
    })
}

/// Complexity measurer for threshold searches.
///
/// Each call runs a fresh population seeded from `(cfg.seed, control, level)`; level
/// `j` multiplies the population size and the measurement draws by `2^j`.
pub fn population_measurer(model: SpModel, chain: Chain, cfg: PopulationConfig) -> Result<impl Fn(f64, u32) -> Sample + Sync> {
    chain.validate()?;
    match model {
        SpModel::Ksat { k } => KsatPopulation::new(k, 0.0, chain, 1, InitPolicy::Trivial, 0).map(|_| ())?,
        SpModel::Qcol { q } => QcolPopulation::new(q, 0.0, chain, 1, InitPolicy::Trivial, 0).map(|_| ())?,
    }
    Ok(move |control: f64, level: u32| {
        let scale = 1usize << level;
        let run_cfg = PopulationConfig {
            size: cfg.size * scale,
            measure_samples: cfg.measure_samples * scale,
            seed: rng::mix(cfg.seed, &[tag::THRESHOLD, control.to_bits(), u64::from(level)]),
            ..cfg
        };
        match run_population_dynamics(model, control, chain, &run_cfg) {
            Ok(r) => Sample { sigma: r.estimate.total, stderr: r.estimate.total_stderr, nontrivial: !r.collapsed },
            Err(_) => Sample { sigma: f64::NAN, stderr: f64::INFINITY, nontrivial: false },
        }
    })
}

#[derive(Clone, Debug, Serialize)]
pub struct SpThresholds {
    pub sp: ThresholdResult,
    pub static_point: Option<ThresholdResult>,
}

/// SP onset on `[lo, hi]` and, when `with_static`, the zero of the complexity
/// searched between the SP onset and `hi`.
pub fn sp_thresholds(
    model: SpModel,
    chain: Chain,
    cfg: PopulationConfig,
    lo: f64,
    hi: f64,
    search: &StochasticSearch,
    with_static: bool,
) -> Result<SpThresholds> {
    let m = population_measurer(model, chain, cfg)?;
    let sp = find_alpha_sp(&m, lo, hi, search)?;
    let static_point = if with_static { Some(find_alpha_s(&m, sp.lo, hi, search)?) } else { None };
    Ok(SpThresholds { sp, static_point })
}

// ---------------------------------------------------------------------------
// Instance-level SP
// ---------------------------------------------------------------------------

#[derive(Clone, Debug, Serialize)]
pub struct InstanceSp {
    /// `Q̂` per edge.
    pub q_hat: Vec<f64>,
    /// `(Q⁺, Q⁻)` per edge, variable to constraint.
    pub q_pm: Vec<(f64, f64)>,
    pub converged: bool,
    pub iterations: usize,
    /// `Σ Σ_c + Σ Σ_i − Σ Σ_{c,i}`: the log of the number of pure states.
    pub log_states: f64,
    /// `log_states / (N L)`; `-inf` when some variable receives contradictory warnings.
    pub complexity: f64,
    pub counters: Counters,
}

fn instance_pm(graph: &FactorGraph, q_hat: &[f64], e: usize) -> (f64, f64) {
    let v = graph.edge_var(e);
    let neg = graph.edge_negated(e);
    let mut qp = 1.0;
    let mut qm = 1.0;
    for &f in graph.var_edges(v) {
        if f == e {
            continue;
        }
        if graph.edge_negated(f) == neg {
            qp *= 1.0 - q_hat[f];
        } else {
            qm *= 1.0 - q_hat[f];
        }
    }
    (qp, qm)
}

/// Per-edge SP for a K-SAT instance from the all-warnings-on start.
pub fn instance_sp_ksat(graph: &FactorGraph, max_iters: usize) -> Result<InstanceSp> {
    if graph.problem != Problem::Ksat {
        return param("instance SP needs a K-SAT instance");
    }
    let k = graph.arity;
    let ne = graph.num_edges();
    let mut q_hat = vec![1.0; ne];
    let mut counters = Counters::default();
    let mut converged = false;
    let mut iterations = 0;
    let mut q_pm: Vec<(f64, f64)> = (0..ne).map(|e| instance_pm(graph, &q_hat, e)).collect();
    while iterations < max_iters {
        let next: Vec<f64> = (0..ne)
            .map(|e| {
                let c = e / k;
                (0..k)
                    .map(|s| c * k + s)
                    .filter(|&f| f != e)
                    .map(|f| ksat_ratio(q_pm[f].0, q_pm[f].1, &mut counters))
                    .product()
            })
            .collect();
        let change = next.iter().zip(&q_hat).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        q_hat = next;
        q_pm = (0..ne).map(|e| instance_pm(graph, &q_hat, e)).collect();
        iterations += 1;
        if change < 1e-12 {
            converged = true;
            break;
        }
    }
    let mut total = KahanSum::new();
    let mut contradiction = false;
    for c in 0..graph.num_constraints() {
        let (mut pa, mut pb) = (1.0, 1.0);
        for s in 0..k {
            let (qp, qm) = q_pm[c * k + s];
            pa *= qp + qm - qp * qm;
            pb *= qp * (1.0 - qm);
        }
        total.add((pa - pb).ln());
    }
    for v in 0..graph.num_vars() {
        let (mut p1, mut p0, mut all) = (1.0, 1.0, 1.0);
        for &f in graph.var_edges(v) {
            let t = 1.0 - q_hat[f];
            if graph.edge_negated(f) {
                p1 *= t;
            } else {
                p0 *= t;
            }
            all *= t;
        }
        contradiction |= p1 + p0 - all <= 0.0;
        total.add((p1 + p0 - all).ln());
    }
    for e in 0..ne {
        let (qp, qm) = q_pm[e];
        total.add(-((qp + qm - qp * qm) - qp * (1.0 - qm) * q_hat[e]).ln());
    }
    let log_states = if contradiction { f64::NEG_INFINITY } else { total.value() };
    let complexity = log_states / (graph.n * graph.l) as f64;
    Ok(InstanceSp { q_hat, q_pm, converged, iterations, log_states, complexity, counters })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ratio_handles_zero_over_zero() {
        let mut c = Counters::default();
        assert_eq!(ksat_ratio(0.0, 0.0, &mut c), 0.0);
        assert_eq!(c.zero_over_zero, 1);
        assert_eq!(ksat_ratio(1.0, 1.0, &mut c), 0.0);
        assert_eq!(ksat_ratio(1.0, 0.0, &mut c), 1.0);
        assert!((ksat_ratio(0.5, 0.5, &mut c) - 1.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn color_sums_at_zero() {
        for q in 2..=20 {
            let co = ColorCoefficients::new(q);
            let (n, d) = co.sums(&vec![1.0; q]);
            assert_eq!(n, 0.0, "q={q}");
            assert_eq!(d, 1.0, "q={q}");
        }
    }

    #[test]
    fn single_neighbour_forces_nothing_else() {
        // A single frozen neighbour leaves Q − 1 colours free, so nothing is forced.
        let q = 3;
        let co = ColorCoefficients::new(q);
        let mut prods = vec![1.0; q];
        color_products(q, [1.0 / q as f64].into_iter(), &mut prods);
        let (n, d) = co.sums(&prods);
        assert!((n / d).abs() < 1e-15);
        // Two frozen neighbours of distinct colours on Q = 3 force the third colour.
        color_products(q, [1.0 / 3.0, 1.0 / 3.0].into_iter(), &mut prods);
        let (n, d) = co.sums(&prods);
        assert!(n / d > 0.0 && n / d <= 1.0 / 3.0 + 1e-15);
    }
}
