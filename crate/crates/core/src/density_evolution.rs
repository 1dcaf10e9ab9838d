//! Density evolution for XORSAT leaf removal, the K-SAT pure-literal rule and
//! Q-core peeling, on individual and coupled chains.
//!
//! Leaf removal and pure-literal profiles hold `x_z`, the probability that a
//! constraint at position `z` survives. Q-core profiles hold `y_z = c(1 − x_z)`.
//! Positions outside the chain carry zero.

use rayon::prelude::*;
use serde::Serialize;

use crate::ensembles::{FactorGraph, Problem};
use crate::error::{param, Result};
use crate::thresholds::{find_de_threshold, ThresholdKind, ThresholdResult};

/// One synchronous leaf-removal update on a chain with window `w`.
///
/// `x_z = {(1/w) Σ_l (1 − exp(−(αK/w) Σ_k x_{z+l−k}))}^{K−1}`.
pub fn xorsat_update(x: &[f64], alpha: f64, k: usize, w: usize) -> Vec<f64> {
    let l = x.len();
    let rate = alpha * k as f64 / w as f64;
    let v: Vec<f64> = (0..l + w - 1)
        .map(|u| {
            let lo = u.saturating_sub(w - 1);
            let hi = u.min(l - 1);
            let s: f64 = if lo <= hi { x[lo..=hi].iter().sum() } else { 0.0 };
            -(-rate * s).exp_m1()
        })
        .collect();
    (0..l)
        .map(|z| (v[z..z + w].iter().sum::<f64>() / w as f64).powi(k as i32 - 1))
        .collect()
}

/// Pure-literal rule: the leaf-removal update at half the density.
pub fn pure_literal_update(x: &[f64], alpha: f64, k: usize, w: usize) -> Vec<f64> {
    xorsat_update(x, alpha / 2.0, k, w)
}

/// `G(y) = 1 − e^{−y} Σ_{j<Q−1} y^j/j!`, the probability that a Poisson(`y`)
/// variable is at least `Q − 1`.
pub fn qcore_g(y: f64, q: usize) -> f64 {
    if y <= 0.0 {
        return 0.0;
    }
    let m = q - 1;
    if m == 0 {
        return 1.0;
    }
    if y <= 30.0 && y < m as f64 {
        // Small y: sum the upper tail directly to avoid cancellation.
        let mut term = (-y).exp();
        for j in 1..=m {
            term *= y / j as f64;
        }
        let mut tail = 0.0;
        let mut j = m;
        while term > tail * 1e-18 && j < m + 400 {
            tail += term;
            j += 1;
            term *= y / j as f64;
        }
        return tail.min(1.0);
    }
    // Lower head via the term recurrence p_{j+1} = p_j · y/(j+1), in log space for large y.
    let mut head = 0.0;
    let mut log_term = -y;
    for j in 0..m {
        head += log_term.exp();
        log_term += y.ln() - ((j + 1) as f64).ln();
    }
    (1.0 - head).clamp(0.0, 1.0)
}

/// One synchronous Q-core update `y_z = c G(ȳ_z)` with a symmetric window of width `2w−1`.
pub fn qcore_update(y: &[f64], c: f64, q: usize, w: usize) -> Vec<f64> {
    let l = y.len() as isize;
    let w = w as isize;
    let width = (2 * w - 1) as f64;
    (0..l)
        .map(|z| {
            let lo = (z - w + 1).max(0) as usize;
            let hi = (z + w - 1).min(l - 1) as usize;
            c * qcore_g(y[lo..=hi].iter().sum::<f64>() / width, q)
        })
        .collect()
}

/// `x_{t+1}` from the unsimplified degree sum of the Q-core recursion.
///
/// Used to cross-check `1 − x_{t+1} = G(c(1 − x_t))`.
pub fn qcore_double_sum(x: f64, c: f64, q: usize) -> f64 {
    let mut total = 0.0;
    let mut p = (-c).exp(); // e^{−c} c^{d−1}/(d−1)! at d = 1
    for d in 1..400usize {
        if d >= 2 {
            p *= c / (d - 1) as f64;
        }
        if d < q {
            total += p;
        } else {
            let n = d - 1;
            let mut inner = 0.0;
            for j in 0..=q - 2 {
                let binom = (0..j).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64);
                inner += binom * (1.0 - x).powi(j as i32) * x.powi((n - j) as i32);
            }
            total += p * inner;
        }
    }
    total
}

/// A density-evolution recursion parametrised by its control parameter.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(tag = "model", rename_all = "kebab-case")]
pub enum DeModel {
    LeafRemoval { k: usize },
    PureLiteral { k: usize },
    QCore { q: usize },
}

impl DeModel {
    pub fn validate(&self) -> Result<()> {
        match *self {
            DeModel::LeafRemoval { k } | DeModel::PureLiteral { k } if k < 3 => param(format!("K must be at least 3, got {k}")),
            DeModel::QCore { q } if q < 3 => param(format!("Q must be at least 3, got {q}")),
            _ => Ok(()),
        }
    }

    pub fn update(&self, profile: &[f64], control: f64, w: usize) -> Vec<f64> {
        match *self {
            DeModel::LeafRemoval { k } => xorsat_update(profile, control, k, w),
            DeModel::PureLiteral { k } => pure_literal_update(profile, control, k, w),
            DeModel::QCore { q } => qcore_update(profile, control, q, w),
        }
    }

    /// Top of the profile range: the iteration starts here.
    pub fn top(&self, control: f64) -> f64 {
        match self {
            DeModel::QCore { .. } => control,
            _ => 1.0,
        }
    }

    pub fn kind(&self) -> ThresholdKind {
        match self {
            DeModel::LeafRemoval { .. } => ThresholdKind::LeafRemoval,
            DeModel::PureLiteral { .. } => ThresholdKind::PureLiteral,
            DeModel::QCore { .. } => ThresholdKind::QCore,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            DeModel::LeafRemoval { .. } => "leaf-removal",
            DeModel::PureLiteral { .. } => "pure-literal",
            DeModel::QCore { .. } => "q-core",
        }
    }
}

#[derive(Clone, Copy, Debug, Serialize)]
pub struct SurvivalConfig {
    /// Stop when the sup-norm change of one sweep falls below this.
    pub tol: f64,
    /// A profile whose maximum falls below this is trivial.
    pub trivial: f64,
    pub max_iters: usize,
}

impl Default for SurvivalConfig {
    fn default() -> Self {
        Self { tol: 1e-12, trivial: 1e-8, max_iters: 10_000_000 }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct Survival {
    pub control: f64,
    pub survives: bool,
    pub max_value: f64,
    pub iterations: usize,
    /// False when the iteration cap was hit; the verdict then uses the last maximum.
    pub converged: bool,
    #[serde(skip)]
    pub profile: Vec<f64>,
}

/// Iterates from the top profile and reports whether a non-trivial fixed point survives.
pub fn survival(model: DeModel, control: f64, w: usize, l: usize, cfg: &SurvivalConfig) -> Survival {
    let mut p = vec![model.top(control); l];
    let mut iterations = 0;
    let mut converged = false;
    while iterations < cfg.max_iters {
        let next = model.update(&p, control, w);
        let change = next.iter().zip(&p).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        p = next;
        iterations += 1;
        let max = p.iter().copied().fold(0.0, f64::max);
        if change < cfg.tol || max < cfg.trivial {
            converged = true;
            break;
        }
    }
    let max_value = p.iter().copied().fold(0.0, f64::max);
    Survival { control, survives: max_value >= cfg.trivial, max_value, iterations, converged, profile: p }
}

/// Survival at each control value of `grid`, in parallel.
pub fn scan(model: DeModel, grid: &[f64], w: usize, l: usize, cfg: &SurvivalConfig) -> Vec<Survival> {
    grid.par_iter().map(|&c| survival(model, c, w, l, cfg)).collect()
}

/// Smallest control parameter at which a non-trivial fixed point survives.
///
/// `L = w = 1` gives the individual emergence threshold; otherwise the coupled
/// kink-survival threshold.
pub fn de_threshold(model: DeModel, w: usize, l: usize, lo: f64, hi: f64, tol: f64, cfg: &SurvivalConfig) -> Result<ThresholdResult> {
    model.validate()?;
    if w == 0 || l == 0 {
        return param("w and L must be positive");
    }
    find_de_threshold(|c| survival(model, c, w, l, cfg).survives, model.kind(), lo, hi, tol)
}

/// Default bisection bracket for each model.
pub fn default_bracket(model: DeModel) -> (f64, f64) {
    match model {
        DeModel::LeafRemoval { .. } => (0.3, 1.0),
        DeModel::PureLiteral { .. } => (0.6, 2.0),
        DeModel::QCore { q } => (1.0, 4.0 * q as f64),
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct PeelingResult {
    pub in_core: Vec<bool>,
    pub core_size: usize,
    /// Nodes removed in each round.
    pub rounds: Vec<usize>,
}

/// Neighbour lists of the graph induced by a colouring instance. Self-loops are
/// dropped; repeated edges are kept.
pub fn induced_adjacency(graph: &FactorGraph) -> Result<Vec<Vec<usize>>> {
    if graph.problem != Problem::Qcol {
        return param("peeling needs a colouring instance");
    }
    let mut adj = vec![Vec::new(); graph.num_vars()];
    for c in &graph.constraints {
        let (a, b) = (c.vars[0], c.vars[1]);
        if a != b {
            adj[a].push(b);
            adj[b].push(a);
        }
    }
    Ok(adj)
}

/// Repeatedly removes every node of degree below `q`, one round at a time.
pub fn peel_qcore(graph: &FactorGraph, q: usize) -> Result<PeelingResult> {
    let adj = induced_adjacency(graph)?;
    let n = adj.len();
    let mut deg: Vec<usize> = adj.iter().map(Vec::len).collect();
    let mut alive = vec![true; n];
    let mut frontier: Vec<usize> = (0..n).filter(|&v| deg[v] < q).collect();
    let mut rounds = Vec::new();
    while !frontier.is_empty() {
        for &v in &frontier {
            alive[v] = false;
        }
        rounds.push(frontier.len());
        let mut next = Vec::new();
        for &v in &frontier {
            for &u in &adj[v] {
                if alive[u] {
                    deg[u] -= 1;
                    if deg[u] + 1 == q {
                        next.push(u);
                    }
                }
            }
        }
        frontier = next;
    }
    let core_size = alive.iter().filter(|&&a| a).count();
    Ok(PeelingResult { in_core: alive, core_size, rounds })
}

/// The Q-core through cavity messages: `μ_{i→j} = 1` means `i` has been peeled as
/// seen from `j`. `μ_{i→j}` becomes 1 once fewer than `Q−1` of the messages into `i`
/// from neighbours other than `j` are 0.
///
/// Messages start at 0 and are iterated synchronously to their fixed point; a node
/// is in the core when at least `Q` incoming messages are 0.
pub fn qcore_message_passing(graph: &FactorGraph, q: usize) -> Result<Vec<bool>> {
    if graph.problem != Problem::Qcol {
        return param("peeling needs a colouring instance");
    }
    // Directed edge 2i is a → b of the i-th non-loop edge, 2i+1 is b → a.
    let mut src = Vec::new();
    let mut dst = Vec::new();
    for c in graph.constraints.iter().filter(|c| c.vars[0] != c.vars[1]) {
        src.extend([c.vars[0], c.vars[1]]);
        dst.extend([c.vars[1], c.vars[0]]);
    }
    let n = graph.num_vars();
    let mut mu = vec![false; src.len()];
    let live_in = |mu: &[bool]| {
        let mut zeros = vec![0usize; n];
        for (e, &m) in mu.iter().enumerate() {
            if !m {
                zeros[dst[e]] += 1;
            }
        }
        zeros
    };
    loop {
        let zeros = live_in(&mu);
        // Message i → j excludes the message j → i, which is edge e ^ 1.
        let next: Vec<bool> = (0..mu.len())
            .map(|e| zeros[src[e]] - usize::from(!mu[e ^ 1]) < q - 1)
            .collect();
        if next == mu {
            break;
        }
        mu = next;
    }
    Ok(live_in(&mu).into_iter().map(|z| z >= q).collect())
}
