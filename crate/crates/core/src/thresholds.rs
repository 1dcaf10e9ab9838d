//! Threshold extraction by scanning and bisection.

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{param, Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum ThresholdKind {
    Sp,
    Static,
    LeafRemoval,
    PureLiteral,
    QCore,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    ScanBisect,
    VdwMinimum,
}

#[derive(Clone, Debug, Serialize)]
pub struct ThresholdResult {
    pub kind: ThresholdKind,
    pub lo: f64,
    pub hi: f64,
    pub estimate: f64,
    pub method: Method,
    pub tolerance: f64,
    /// Monte-Carlo standard error of the last measurement used, for stochastic searches.
    pub mc_stderr: Option<f64>,
}

/// Root of a continuous function with a sign change on `[lo, hi]`.
pub fn bisect_root<F: Fn(f64) -> f64>(f: F, mut lo: f64, mut hi: f64, tol: f64) -> Result<f64> {
    let mut flo = f(lo);
    let fhi = f(hi);
    if flo == 0.0 {
        return Ok(lo);
    }
    if fhi == 0.0 {
        return Ok(hi);
    }
    if !(flo * fhi < 0.0) {
        return Err(Error::Bracket { lo, hi });
    }
    while hi - lo > tol {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        let fm = f(mid);
        if fm == 0.0 {
            return Ok(mid);
        }
        if (fm < 0.0) == (flo < 0.0) {
            lo = mid;
            flo = fm;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// Minimum of a unimodal function on `[lo, hi]`; returns `(argmin, min)`.
pub fn golden_section_min<F: Fn(f64) -> f64>(f: F, mut lo: f64, mut hi: f64, tol: f64) -> (f64, f64) {
    let r = (5f64.sqrt() - 1.0) / 2.0;
    let mut a = hi - r * (hi - lo);
    let mut b = lo + r * (hi - lo);
    let mut fa = f(a);
    let mut fb = f(b);
    while hi - lo > tol {
        if fa < fb {
            hi = b;
            b = a;
            fb = fa;
            a = hi - r * (hi - lo);
            fa = f(a);
        } else {
            lo = a;
            a = b;
            fa = fb;
            b = lo + r * (hi - lo);
            fb = f(b);
        }
        if b - a <= 0.0 {
            break;
        }
    }
    let x = 0.5 * (lo + hi);
    (x, f(x))
}

/// Narrows `[lo, hi]` with `pred(lo) = false`, `pred(hi) = true` until `hi − lo ≤ tol`.
///
/// The invariant holds throughout; the endpoints themselves are checked first.
pub fn bisect_predicate<P: FnMut(f64) -> bool>(mut pred: P, mut lo: f64, mut hi: f64, tol: f64) -> Result<(f64, f64)> {
    if !(lo < hi) || !(tol > 0.0) {
        return param(format!("need lo < hi and tol > 0, got [{lo}, {hi}], tol {tol}"));
    }
    if pred(lo) || !pred(hi) {
        return Err(Error::Bracket { lo, hi });
    }
    while hi - lo > tol {
        let mid = 0.5 * (lo + hi);
        if pred(mid) {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok((lo, hi))
}

/// Threshold of a deterministic survival predicate that is false below and true above.
pub fn find_de_threshold<P: FnMut(f64) -> bool>(
    survives: P,
    kind: ThresholdKind,
    lo: f64,
    hi: f64,
    tol: f64,
) -> Result<ThresholdResult> {
    let (lo, hi) = bisect_predicate(survives, lo, hi, 2.0 * tol)?;
    Ok(ThresholdResult {
        kind,
        lo,
        hi,
        estimate: 0.5 * (lo + hi),
        method: Method::ScanBisect,
        tolerance: tol,
        mc_stderr: None,
    })
}

/// Settings for stochastic threshold searches.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct StochasticSearch {
    /// Points of the initial parallel scan, endpoints included.
    pub scan_points: usize,
    pub tol: f64,
    /// Significance required to call the sign of a measured complexity.
    pub z_score: f64,
    /// How many times the budget may be doubled when a measurement is inconclusive.
    pub max_doublings: u32,
}

impl Default for StochasticSearch {
    fn default() -> Self {
        Self { scan_points: 5, tol: 0.005, z_score: 3.0, max_doublings: 2 }
    }
}

impl StochasticSearch {
    /// Coarser tolerance and a single doubling, for the reduced population preset.
    pub fn fast() -> Self {
        Self { tol: 0.02, max_doublings: 1, ..Self::default() }
    }
}

/// What a complexity measurer reports at one control value.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Sample {
    pub sigma: f64,
    pub stderr: f64,
    /// False when the population collapsed to the trivial fixed point.
    pub nontrivial: bool,
}

/// One complexity measurement and the budget level it was taken at.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct Measurement {
    pub control: f64,
    pub sigma: f64,
    pub stderr: f64,
    pub nontrivial: bool,
    pub doublings: u32,
}

/// Measures `Σ` at `control`, doubling the budget while a nontrivial measurement has
/// `|Σ| < z·stderr`. The measurer receives the number of doublings applied so far.
pub fn measure_adaptive<M>(measurer: &M, control: f64, cfg: &StochasticSearch) -> Measurement
where
    M: Fn(f64, u32) -> Sample + Sync,
{
    let mut level = 0;
    loop {
        let s = measurer(control, level);
        let decided = !s.nontrivial || s.sigma.abs() >= cfg.z_score * s.stderr;
        if decided || level >= cfg.max_doublings {
            return Measurement { control, sigma: s.sigma, stderr: s.stderr, nontrivial: s.nontrivial, doublings: level };
        }
        level += 1;
    }
}

/// Error raised when a scan finds no transition, with the scan attached.
#[derive(Clone, Debug, Serialize)]
pub struct ScanFailure {
    pub scan: Vec<Measurement>,
}

fn stochastic_threshold<M, A>(
    measurer: &M,
    lo: f64,
    hi: f64,
    cfg: &StochasticSearch,
    kind: ThresholdKind,
    above: A,
) -> std::result::Result<ThresholdResult, ScanFailure>
where
    M: Fn(f64, u32) -> Sample + Sync,
    A: Fn(&Measurement) -> bool,
{
    let n = cfg.scan_points.max(2);
    let grid: Vec<f64> = (0..n).map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64).collect();
    let scan: Vec<Measurement> = grid.par_iter().map(|&a| measure_adaptive(measurer, a, cfg)).collect();
    let Some(i) = (1..n).find(|&i| !above(&scan[i - 1]) && above(&scan[i])) else {
        return Err(ScanFailure { scan });
    };
    let (mut a, mut b) = (grid[i - 1], grid[i]);
    let mut last = scan[i];
    while b - a > 2.0 * cfg.tol {
        let mid = 0.5 * (a + b);
        let m = measure_adaptive(measurer, mid, cfg);
        if above(&m) {
            b = mid;
        } else {
            a = mid;
        }
        last = m;
    }
    Ok(ThresholdResult {
        kind,
        lo: a,
        hi: b,
        estimate: 0.5 * (a + b),
        method: Method::ScanBisect,
        tolerance: cfg.tol,
        mc_stderr: Some(last.stderr),
    })
}

/// Onset of a nontrivial SP fixed point.
pub fn find_alpha_sp<M>(measurer: &M, lo: f64, hi: f64, cfg: &StochasticSearch) -> std::result::Result<ThresholdResult, ScanFailure>
where
    M: Fn(f64, u32) -> Sample + Sync,
{
    stochastic_threshold(measurer, lo, hi, cfg, ThresholdKind::Sp, |m| m.nontrivial)
}

/// Point where the complexity of the nontrivial fixed point turns negative. An
/// inconclusive measurement counts by the sign of its mean.
pub fn find_alpha_s<M>(measurer: &M, lo: f64, hi: f64, cfg: &StochasticSearch) -> std::result::Result<ThresholdResult, ScanFailure>
where
    M: Fn(f64, u32) -> Sample + Sync,
{
    stochastic_threshold(measurer, lo, hi, cfg, ThresholdKind::Static, |m| m.nontrivial && m.sigma < 0.0)
}

impl std::fmt::Display for ScanFailure {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "no transition in scan:")?;
        for m in &self.scan {
            let tag = if m.nontrivial { "" } else { " trivial" };
            write!(f, " ({:.4}: {:.3e} ± {:.1e}{tag})", m.control, m.sigma, m.stderr)?;
        }
        Ok(())
    }
}

impl std::error::Error for ScanFailure {}
