//! Exhaustive ground-state oracles for tiny instances.
//!
//! `brute_force` enumerates every assignment. `exact_minimum` uses a transfer-matrix
//! recursion along the chain when every constraint stays inside its window, which is
//! what makes Theorem-style comparisons of open and periodic chains affordable at
//! `N = 3` or `4`.

use rand::Rng as _;
use rayon::prelude::*;
use serde::Serialize;

use crate::ensembles::{constraint_satisfied, sample, Boundary, ChainSpec, Constraint, FactorGraph, Problem};
use crate::error::{param, Error, Result};
use crate::message_passing::{all_warnings, bethe_energy, minsum_step, Messages, Warning};
use crate::rng::{self, tag};
use crate::stats::mean_stderr;

/// Largest number of assignments `brute_force` will enumerate.
pub const ENUMERATION_LIMIT: f64 = (1u64 << 26) as f64;
/// Largest number of directed edges `enumerate_minsum_states` accepts.
pub const MINSUM_EDGE_LIMIT: usize = 14;
/// Largest window table the transfer-matrix recursion builds.
const WINDOW_LIMIT: f64 = (1u64 << 22) as f64;

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct GroundStateReport {
    pub min_energy: u64,
    pub minimizers: u64,
    /// Connected components of the minimizer set under single-variable flips.
    pub clusters: u64,
    pub enumerated: u64,
}

fn assignment_count(graph: &FactorGraph) -> f64 {
    (graph.alphabet as f64).powi(graph.num_vars() as i32)
}

fn decode(mut code: u64, q: u64, out: &mut [u8]) {
    for x in out.iter_mut() {
        *x = (code % q) as u8;
        code /= q;
    }
}

/// Exact minimum, minimizer count and single-flip clusters by full enumeration.
///
/// Assignment `x` has code `Σ_v x_v Q^v`.
pub fn brute_force(graph: &FactorGraph) -> Result<GroundStateReport> {
    let total = assignment_count(graph);
    if total > ENUMERATION_LIMIT {
        return Err(Error::Budget { needed: total, limit: ENUMERATION_LIMIT });
    }
    let total = total as u64;
    let q = graph.alphabet as u64;
    let n = graph.num_vars();
    let words = total.div_ceil(64);

    // Per 64-assignment word: the smallest energy in the word and the mask attaining it.
    let per_word: Vec<(u64, u64)> = (0..words)
        .into_par_iter()
        .map_init(
            || vec![0u8; n],
            |x, wi| {
                let mut best = u64::MAX;
                let mut mask = 0u64;
                for b in 0..64 {
                    let code = wi * 64 + b;
                    if code >= total {
                        break;
                    }
                    decode(code, q, x);
                    let e = graph.energy_unchecked(x);
                    if e < best {
                        best = e;
                        mask = 1 << b;
                    } else if e == best {
                        mask |= 1 << b;
                    }
                }
                (best, mask)
            },
        )
        .collect();
    let min_energy = per_word.iter().map(|p| p.0).min().unwrap_or(0);
    let minset: Vec<u64> = per_word.iter().map(|&(e, m)| if e == min_energy { m } else { 0 }).collect();
    let minimizers = minset.iter().map(|m| u64::from(m.count_ones())).sum();

    let is_min = |code: u64| (minset[(code / 64) as usize] >> (code % 64)) & 1 == 1;
    let mut seen = vec![0u64; words as usize];
    let mut clusters = 0;
    let mut stack = Vec::new();
    let mut pow = vec![1u64; n];
    for v in 1..n {
        pow[v] = pow[v - 1] * q;
    }
    for start in 0..total {
        let (w, b) = ((start / 64) as usize, start % 64);
        if (minset[w] >> b) & 1 == 0 || (seen[w] >> b) & 1 == 1 {
            continue;
        }
        clusters += 1;
        seen[w] |= 1 << b;
        stack.push(start);
        while let Some(code) = stack.pop() {
            for &p in &pow {
                let digit = (code / p) % q;
                let base = code - digit * p;
                for d in 0..q {
                    if d == digit {
                        continue;
                    }
                    let nb = base + d * p;
                    let (nw, nbit) = ((nb / 64) as usize, nb % 64);
                    if is_min(nb) && (seen[nw] >> nbit) & 1 == 0 {
                        seen[nw] |= 1 << nbit;
                        stack.push(nb);
                    }
                }
            }
        }
    }
    Ok(GroundStateReport { min_energy, minimizers, clusters, enumerated: total })
}

/// Minimum energy and minimizer count by depth-first search with bound pruning.
///
/// Shares no code with [`brute_force`] beyond the constraint predicate; used to
/// cross-check it.
pub fn branch_and_bound(graph: &FactorGraph) -> Result<(u64, u64)> {
    let total = assignment_count(graph);
    if total > ENUMERATION_LIMIT {
        return Err(Error::Budget { needed: total, limit: ENUMERATION_LIMIT });
    }
    let n = graph.num_vars();
    // Constraints are charged at the variable that completes them.
    let mut closing: Vec<Vec<&Constraint>> = vec![Vec::new(); n];
    let mut free = 0u64;
    for con in &graph.constraints {
        match con.vars.iter().max() {
            Some(&v) => closing[v].push(con),
            None => free += 1,
        }
    }
    struct Search<'a> {
        problem: Problem,
        q: u8,
        closing: Vec<Vec<&'a Constraint>>,
        x: Vec<u8>,
        best: u64,
        count: u64,
    }
    impl Search<'_> {
        fn go(&mut self, v: usize, energy: u64) {
            if energy > self.best {
                return;
            }
            if v == self.x.len() {
                if energy < self.best {
                    self.best = energy;
                    self.count = 0;
                }
                self.count += 1;
                return;
            }
            for a in 0..self.q {
                self.x[v] = a;
                let mut e = energy;
                for con in &self.closing[v] {
                    let vals: Vec<u8> = con.vars.iter().map(|&u| self.x[u]).collect();
                    if !constraint_satisfied(self.problem, con.payload, &vals) {
                        e += 1;
                    }
                }
                self.go(v + 1, e);
            }
        }
    }
    let mut s = Search { problem: graph.problem, q: graph.alphabet as u8, closing, x: vec![0; n], best: u64::MAX, count: 0 };
    s.go(0, 0);
    Ok((s.best + free, s.count))
}

/// Window geometry used by the transfer-matrix recursion.
fn window_of(graph: &FactorGraph) -> Option<(usize, usize, bool)> {
    let p = match graph.boundary {
        Boundary::Individual => 1,
        Boundary::Open => graph.l + graph.w - 1,
        _ => graph.l,
    };
    match graph.boundary {
        Boundary::Individual => Some((p, 1, false)),
        Boundary::Open => Some((p, graph.w, false)),
        Boundary::Periodic | Boundary::Ring => Some((p, graph.w, true)),
        Boundary::Disconnected => Some((p, 1, false)),
        Boundary::Connected => None,
    }
}

/// Exact minimum energy. Chains whose constraints stay inside their windows go
/// through a transfer-matrix recursion over blocks of `N` variables; everything else
/// is enumerated.
pub fn exact_minimum(graph: &FactorGraph) -> Result<u64> {
    let Some((p, w, periodic)) = window_of(graph) else {
        return brute_force(graph).map(|r| r.min_energy);
    };
    let n = graph.n;
    let q = graph.alphabet as u64;
    let block = (q as f64).powi(n as i32);
    if block.powi(w as i32) > WINDOW_LIMIT {
        return Err(Error::Budget { needed: block.powi(w as i32), limit: WINDOW_LIMIT });
    }
    let block = block as usize;
    let states = block.pow(w as u32 - 1);
    let window = states * block;
    let l = if periodic { p } else { p + 1 - w };

    // cost[z][c]: violated constraints at z for window code c (offset 0 least significant).
    let mut by_pos: Vec<Vec<&Constraint>> = vec![Vec::new(); l];
    for con in &graph.constraints {
        if con.position >= l {
            return param(format!("constraint at position {} outside chain of length {l}", con.position));
        }
        by_pos[con.position].push(con);
    }
    let mut slots: Vec<Vec<Vec<(usize, usize)>>> = Vec::with_capacity(l);
    for (z, cons) in by_pos.iter().enumerate() {
        let mut cz = Vec::with_capacity(cons.len());
        for con in cons {
            let mut s = Vec::with_capacity(con.vars.len());
            for &v in &con.vars {
                let off = (v / n + p - z) % p;
                if off >= w {
                    return brute_force(graph).map(|r| r.min_energy);
                }
                s.push((off, v % n));
            }
            cz.push(s);
        }
        slots.push(cz);
    }
    // Column-major digit table: cols[j][c] is digit j of window code c.
    let width = w * n;
    let mut cols = vec![vec![0u8; window]; width];
    let mut stride = 1;
    for col in cols.iter_mut() {
        for (c, x) in col.iter_mut().enumerate() {
            *x = ((c / stride) % q as usize) as u8;
        }
        stride *= q as usize;
    }
    let k = graph.arity;
    let local = (q as usize).pow(k as u32);
    let cost: Vec<Vec<u32>> = (0..l)
        .into_par_iter()
        .map(|z| {
            let mut cost = vec![0u32; window];
            let mut idx = vec![0u32; window];
            let mut vals = vec![0u8; k];
            let mut table = vec![0u32; local];
            for (con, s) in by_pos[z].iter().zip(&slots[z]) {
                for (a, t) in table.iter_mut().enumerate() {
                    decode(a as u64, q, &mut vals);
                    *t = u32::from(!constraint_satisfied(graph.problem, con.payload, &vals));
                }
                idx.fill(0);
                for &(off, i) in s.iter().rev() {
                    for (x, &d) in idx.iter_mut().zip(&cols[off * n + i]) {
                        *x = *x * q as u32 + u32::from(d);
                    }
                }
                for (e, &x) in cost.iter_mut().zip(&idx) {
                    *e += table[x as usize];
                }
            }
            cost
        })
        .collect();

    const INF: u32 = u32::MAX;
    let stride = states / block;
    let step = |f: &[u32], z: usize, forced: Option<usize>| -> Vec<u32> {
        let mut g = vec![INF; states];
        for (s, &fs) in f.iter().enumerate() {
            if fs == INF {
                continue;
            }
            let range = match forced {
                Some(d) => d..d + 1,
                None => 0..block,
            };
            let base = s / block;
            for d in range {
                let next = base + d * stride;
                let v = fs + cost[z][s + d * states];
                if v < g[next] {
                    g[next] = v;
                }
            }
        }
        g
    };
    if !periodic {
        let mut f = vec![0u32; states];
        for z in 0..l {
            f = step(&f, z, None);
        }
        return Ok(u64::from(f.into_iter().min().unwrap_or(0)));
    }
    // Periodic: fix the first w − 1 blocks; blocks that wrap around must agree with them.
    // A partial minimum is a lower bound, so starts that cannot beat the best are dropped.
    let mut best = INF;
    for s0 in 0..states {
        let mut f = vec![INF; states];
        f[s0] = 0;
        for z in 0..l {
            let pos = z + w - 1;
            let forced = (pos >= l).then(|| (s0 / block.pow((pos - l) as u32)) % block);
            f = step(&f, z, forced);
            if f.iter().copied().min().unwrap_or(INF) >= best {
                break;
            }
        }
        best = best.min(f[s0]);
    }
    Ok(u64::from(best))
}

#[derive(Clone, Copy, Debug, Serialize)]
pub struct EnergyEstimate {
    /// Mean minimum energy per variable block, `E[min H] / (N L)`.
    pub mean: f64,
    pub stderr: f64,
    pub instances: usize,
    /// Fraction of instances with minimum energy 0.
    pub sat_fraction: f64,
}

/// Monte-Carlo estimate of the ground-state energy density over `instances` samples.
pub fn estimate_e(spec: &ChainSpec, instances: usize, seed: u64) -> Result<EnergyEstimate> {
    spec.validate()?;
    if instances == 0 {
        return param("need at least one instance");
    }
    let norm = (spec.n * if spec.boundary == Boundary::Individual { 1 } else { spec.l }) as f64;
    let minima: Vec<u64> = (0..instances)
        .into_par_iter()
        .map(|i| {
            let g = sample(spec, rng::mix(seed, &[tag::ORACLE, i as u64]))?;
            exact_minimum(&g)
        })
        .collect::<Result<_>>()?;
    let xs: Vec<f64> = minima.iter().map(|&e| e as f64 / norm).collect();
    let (mean, stderr) = if xs.len() > 1 { mean_stderr(&xs) } else { (xs[0], 0.0) };
    let sat = minima.iter().filter(|&&e| e == 0).count() as f64 / instances as f64;
    Ok(EnergyEstimate { mean, stderr, instances, sat_fraction: sat })
}

#[derive(Clone, Debug, Serialize)]
pub struct Theorem1Point {
    pub alpha: f64,
    pub open: EnergyEstimate,
    pub periodic: EnergyEstimate,
    pub difference: f64,
    /// `α w / L`.
    pub bound: f64,
    pub combined_stderr: f64,
    /// `bound + 4σ − |difference|`; non-negative means the point passes.
    pub margin: f64,
    pub pass: bool,
}

#[derive(Clone, Debug, Serialize)]
pub struct Theorem1Report {
    pub problem: Problem,
    /// `K` for satisfiability problems, `Q` for colouring.
    pub k_or_q: usize,
    pub n: usize,
    pub w: usize,
    pub l: usize,
    pub instances: usize,
    pub seed: u64,
    pub points: Vec<Theorem1Point>,
}

impl Theorem1Report {
    pub fn all_pass(&self) -> bool {
        self.points.iter().all(|p| p.pass)
    }
}

/// Compares open and periodic energy densities against `|e − e_per| ≤ α w / L`,
/// allowing four combined standard errors. `alphas` are constraint densities; for
/// colouring the mean degree is `2α`.
#[allow(clippy::too_many_arguments)]
pub fn theorem1_check(
    problem: Problem,
    k_or_q: usize,
    alphas: &[f64],
    n: usize,
    w: usize,
    l: usize,
    instances: usize,
    seed: u64,
) -> Result<Theorem1Report> {
    let spec = |alpha: f64, boundary: Boundary| match problem {
        Problem::Ksat => ChainSpec::ksat(k_or_q, n, alpha, w, l, boundary),
        Problem::Xorsat => ChainSpec::xorsat(k_or_q, n, alpha, w, l, boundary),
        Problem::Qcol => ChainSpec::qcol(k_or_q, n, alpha, w, l, boundary),
    };
    let mut points = Vec::with_capacity(alphas.len());
    for (i, &alpha) in alphas.iter().enumerate() {
        let open = estimate_e(&spec(alpha, Boundary::Open), instances, rng::mix(seed, &[tag::ORACLE, 2 * i as u64]))?;
        let periodic = estimate_e(&spec(alpha, Boundary::Periodic), instances, rng::mix(seed, &[tag::ORACLE, 2 * i as u64 + 1]))?;
        let difference = open.mean - periodic.mean;
        let bound = alpha * w as f64 / l as f64;
        let combined_stderr = open.stderr.hypot(periodic.stderr);
        let margin = bound + 4.0 * combined_stderr - difference.abs();
        points.push(Theorem1Point { alpha, open, periodic, difference, bound, combined_stderr, margin, pass: margin >= 0.0 });
    }
    Ok(Theorem1Report { problem, k_or_q, n, w, l, instances, seed, points })
}

/// Number of warning configurations that are min-sum fixed points with Bethe energy 0.
pub fn enumerate_minsum_states(graph: &FactorGraph) -> Result<u64> {
    let ne = graph.num_edges();
    if 2 * ne > MINSUM_EDGE_LIMIT {
        return Err(Error::Budget { needed: (2 * ne) as f64, limit: MINSUM_EDGE_LIMIT as f64 });
    }
    let alphabet: Vec<Warning> = all_warnings(graph.alphabet).collect();
    let a = alphabet.len() as u64;
    let total = a.pow(2 * ne as u32);
    let count = (0..total)
        .into_par_iter()
        .map_init(
            || Messages::zeros(graph),
            |msgs, code| {
                let mut c = code;
                for slot in msgs.to_check.iter_mut().chain(msgs.to_var.iter_mut()) {
                    *slot = alphabet[(c % a) as usize];
                    c /= a;
                }
                let fixed = minsum_step(graph, msgs) == *msgs;
                u64::from(fixed && matches!(bethe_energy(graph, msgs), Ok(0)))
            },
        )
        .sum();
    Ok(count)
}

/// A random factor forest on at most `max_vars` variables.
///
/// Grown from a single variable: each new constraint joins one existing variable to
/// `arity − 1` fresh ones, so no cycle can form. Satisfiability instances use
/// `arity` in `1..=3`, where unit constraints hang off random variables and may
/// contradict each other; colouring uses 2 and `Q = 3`.
pub fn random_tree_instance(problem: Problem, max_vars: usize, seed: u64) -> Result<FactorGraph> {
    if max_vars == 0 {
        return param("need at least one variable");
    }
    let mut rng = rng::stream(seed, &[tag::TREE]);
    let (arity, alphabet) = match problem {
        Problem::Qcol => (2, 3),
        _ => (rng.random_range(1..=3usize), 2),
    };
    let target = rng.random_range(1..=max_vars);
    let payload = |rng: &mut rand_chacha::ChaCha8Rng| match problem {
        Problem::Ksat => rng.random_range(0..1u32 << arity),
        Problem::Xorsat => rng.random_range(0..2u32),
        Problem::Qcol => 0,
    };
    let mut n = 1;
    let mut constraints = Vec::new();
    if arity == 1 {
        n = target;
        for _ in 0..rng.random_range(0..=2 * target) {
            let v = rng.random_range(0..n);
            let p = payload(&mut rng);
            constraints.push(Constraint { position: 0, vars: vec![v], payload: p });
        }
    }
    while arity > 1 && n + arity - 1 <= target {
        let anchor = rng.random_range(0..n);
        let slot = rng.random_range(0..arity);
        let mut vars = Vec::with_capacity(arity);
        let mut fresh = n;
        for s in 0..arity {
            if s == slot {
                vars.push(anchor);
            } else {
                vars.push(fresh);
                fresh += 1;
            }
        }
        n = fresh;
        let p = payload(&mut rng);
        constraints.push(Constraint { position: 0, vars, payload: p });
    }
    let m = constraints.len();
    FactorGraph::from_constraints(problem, arity, alphabet, n, m, 1, 1, Boundary::Individual, seed, constraints)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ksat(n: usize, clauses: &[(&[usize], u32)]) -> FactorGraph {
        let k = clauses[0].0.len();
        let cons = clauses.iter().map(|&(v, p)| Constraint { position: 0, vars: v.to_vec(), payload: p }).collect();
        FactorGraph::from_constraints(Problem::Ksat, k, 2, n, clauses.len(), 1, 1, Boundary::Individual, 0, cons).unwrap()
    }

    #[test]
    fn empty_instance_is_one_cluster() {
        let g = FactorGraph::from_constraints(Problem::Ksat, 3, 2, 5, 0, 1, 1, Boundary::Individual, 0, vec![]).unwrap();
        let r = brute_force(&g).unwrap();
        assert_eq!(r, GroundStateReport { min_energy: 0, minimizers: 32, clusters: 1, enumerated: 32 });
    }

    #[test]
    fn unit_clause_contradiction() {
        let g = ksat(1, &[(&[0], 0), (&[0], 1)]);
        let r = brute_force(&g).unwrap();
        assert_eq!((r.min_energy, r.minimizers, r.clusters), (1, 2, 1));
        assert_eq!(branch_and_bound(&g).unwrap(), (1, 2));
    }

    #[test]
    fn separated_minimizers_form_two_clusters() {
        // x0 = x1 via two 2-clauses: minimizers 00 and 11 are two flips apart.
        let g = ksat(2, &[(&[0, 1], 0b10), (&[0, 1], 0b01)]);
        let r = brute_force(&g).unwrap();
        assert_eq!((r.min_energy, r.minimizers, r.clusters), (0, 2, 2));
    }

    #[test]
    fn budget_is_enforced() {
        let g = FactorGraph::from_constraints(Problem::Ksat, 3, 2, 27, 0, 1, 1, Boundary::Individual, 0, vec![]).unwrap();
        assert!(matches!(brute_force(&g), Err(Error::Budget { .. })));
    }

    #[test]
    fn transfer_matrix_matches_enumeration() {
        for seed in 0..40 {
            for boundary in [Boundary::Open, Boundary::Periodic, Boundary::Ring, Boundary::Disconnected] {
                let spec = ChainSpec::ksat(3, 3, 2.0, 2, 4, boundary);
                let g = sample(&spec, seed).unwrap();
                assert_eq!(exact_minimum(&g).unwrap(), brute_force(&g).unwrap().min_energy, "{boundary:?} {seed}");
            }
            let g = sample(&ChainSpec::qcol(3, 2, 2.5, 2, 4, Boundary::Periodic), seed).unwrap();
            assert_eq!(exact_minimum(&g).unwrap(), brute_force(&g).unwrap().min_energy);
        }
    }

    #[test]
    fn zero_density_has_zero_energy() {
        let e = estimate_e(&ChainSpec::ksat(3, 4, 0.0, 2, 4, Boundary::Open), 10, 1).unwrap();
        assert_eq!((e.mean, e.stderr, e.sat_fraction), (0.0, 0.0, 1.0));
    }

    #[test]
    fn empty_graph_has_one_minsum_state() {
        let g = FactorGraph::from_constraints(Problem::Ksat, 3, 2, 2, 0, 1, 1, Boundary::Individual, 0, vec![]).unwrap();
        assert_eq!(enumerate_minsum_states(&g).unwrap(), 1);
    }

    #[test]
    fn trees_are_forests() {
        for p in [Problem::Ksat, Problem::Xorsat, Problem::Qcol] {
            for s in 0..50 {
                let g = random_tree_instance(p, 12, s).unwrap();
                assert!(g.is_forest() && g.num_vars() <= 12);
            }
        }
    }
}
