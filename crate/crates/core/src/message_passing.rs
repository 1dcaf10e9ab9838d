//! Zero-temperature min-sum (warning) propagation and the Bethe energy.
//!
//! A warning is an energy-cost vector over the alphabet with entries in {0,1} and
//! minimum 0. It is stored as a bitmask: bit `a` is set when value `a` costs 1.

use rand::Rng as _;

use crate::ensembles::{constraint_satisfied, FactorGraph, Problem};
use crate::error::{param, Result};
use crate::rng::{self, tag};

pub type Warning = u32;

/// The all-zero warning ("free").
pub const FREE: Warning = 0;

pub fn full_mask(q: usize) -> Warning {
    if q >= 32 {
        u32::MAX
    } else {
        (1u32 << q) - 1
    }
}

/// A warning is valid when at least one value has cost 0.
pub fn is_normalized(w: Warning, q: usize) -> bool {
    w & !full_mask(q) == 0 && w != full_mask(q)
}

/// All min-normalised warnings over an alphabet of size `q`.
pub fn all_warnings(q: usize) -> impl Iterator<Item = Warning> {
    (0..full_mask(q)).map(|w| w as Warning)
}

fn cap_normalize(sums: &[u32]) -> Warning {
    let c = sums.iter().copied().min().unwrap_or(0);
    sums.iter()
        .enumerate()
        .fold(0, |acc, (a, &s)| if s > c { acc | (1 << a) } else { acc })
}

/// Variable-to-constraint update: `out(x) = min{1, Σ_b Ê_b(x) − C}`.
pub fn var_update(incoming: &[Warning], q: usize) -> Warning {
    let mut sums = [0u32; 32];
    for &w in incoming {
        for (a, s) in sums.iter_mut().enumerate().take(q) {
            *s += (w >> a) & 1;
        }
    }
    cap_normalize(&sums[..q])
}

/// The constraint seen by message updates: problem type plus payload bits.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ConstraintKind {
    pub problem: Problem,
    pub arity: usize,
    pub alphabet: usize,
    pub payload: u32,
}

impl ConstraintKind {
    pub fn of(graph: &FactorGraph, c: usize) -> Self {
        Self {
            problem: graph.problem,
            arity: graph.arity,
            alphabet: graph.alphabet,
            payload: graph.constraints[c].payload,
        }
    }

    fn violated(&self, values: &[u8]) -> u32 {
        u32::from(!constraint_satisfied(self.problem, self.payload, values))
    }
}

/// Constraint-to-variable update towards slot `target`.
///
/// `incoming` holds the `K − 1` variable-to-constraint warnings of the other slots, in
/// slot order.
pub fn check_update(incoming: &[Warning], kind: &ConstraintKind, target: usize) -> Result<Warning> {
    if incoming.len() + 1 != kind.arity {
        return param(format!("check update needs {} incoming warnings, got {}", kind.arity - 1, incoming.len()));
    }
    if target >= kind.arity {
        return param(format!("target slot {target} out of range"));
    }
    let mut full = [FREE; 16];
    let mut j = 0;
    for (s, slot) in full.iter_mut().enumerate().take(kind.arity) {
        if s != target {
            *slot = incoming[j];
            j += 1;
        }
    }
    Ok(check_update_slots(&full[..kind.arity], kind, target))
}

/// Same as [`check_update`] but reads the warnings of all slots and ignores `target`'s.
pub(crate) fn check_update_slots(slots: &[Warning], kind: &ConstraintKind, target: usize) -> Warning {
    let q = kind.alphabet;
    let k = kind.arity;
    let mut best = [u32::MAX; 32];
    let mut vals = [0u8; 16];
    // Odometer over the values of the non-target slots.
    loop {
        let mut base = 0u32;
        for s in 0..k {
            if s != target {
                base += (slots[s] >> vals[s]) & 1;
            }
        }
        for x in 0..q {
            vals[target] = x as u8;
            let cost = base + kind.violated(&vals[..k]);
            if cost < best[x] {
                best[x] = cost;
            }
        }
        vals[target] = 0;
        let mut s = 0;
        loop {
            if s == k {
                return cap_normalize(&best[..q]);
            }
            if s != target {
                vals[s] += 1;
                if (vals[s] as usize) < q {
                    break;
                }
                vals[s] = 0;
            }
            s += 1;
        }
    }
}

/// One warning per directed edge, indexed by edge id.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Messages {
    /// Variable → constraint warnings `E`.
    pub to_check: Vec<Warning>,
    /// Constraint → variable warnings `Ê`.
    pub to_var: Vec<Warning>,
}

impl Messages {
    pub fn zeros(graph: &FactorGraph) -> Self {
        let e = graph.num_edges();
        Self { to_check: vec![FREE; e], to_var: vec![FREE; e] }
    }

    pub fn is_valid(&self, q: usize) -> bool {
        self.to_check.iter().chain(&self.to_var).all(|&w| is_normalized(w, q))
    }
}

/// Variable → constraint warnings computed from the current `to_var` warnings.
pub fn update_to_check(graph: &FactorGraph, to_var: &[Warning]) -> Vec<Warning> {
    let q = graph.alphabet;
    let mut out = vec![FREE; graph.num_edges()];
    for v in 0..graph.num_vars() {
        let edges = graph.var_edges(v);
        let mut sums = [0u32; 32];
        for &e in edges {
            for (a, s) in sums.iter_mut().enumerate().take(q) {
                *s += (to_var[e] >> a) & 1;
            }
        }
        for &e in edges {
            let mut own = [0u32; 32];
            for a in 0..q {
                own[a] = sums[a] - ((to_var[e] >> a) & 1);
            }
            out[e] = cap_normalize(&own[..q]);
        }
    }
    out
}

/// Constraint → variable warnings computed from the current `to_check` warnings.
pub fn update_to_var(graph: &FactorGraph, to_check: &[Warning]) -> Vec<Warning> {
    let k = graph.arity;
    let mut out = vec![FREE; graph.num_edges()];
    for c in 0..graph.num_constraints() {
        let kind = ConstraintKind::of(graph, c);
        let slots = &to_check[c * k..(c + 1) * k];
        for s in 0..k {
            out[c * k + s] = check_update_slots(slots, &kind, s);
        }
    }
    out
}

/// One synchronous application of both update maps.
pub fn minsum_step(graph: &FactorGraph, msgs: &Messages) -> Messages {
    Messages {
        to_check: update_to_check(graph, &msgs.to_var),
        to_var: update_to_var(graph, &msgs.to_check),
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Damping {
    None,
    /// Each message keeps its previous value with probability `keep`.
    Random { keep: f64, seed: u64 },
}

#[derive(Clone, Debug)]
pub struct MinSumResult {
    pub messages: Messages,
    pub converged: bool,
    pub iterations: usize,
}

/// Synchronous min-sum from the all-zero initialisation, until the messages stop
/// changing or `max_iters` updates have been made. `converged` reports whether the
/// returned messages are a fixed point of the undamped update.
pub fn run_minsum(graph: &FactorGraph, max_iters: usize, damping: Damping) -> MinSumResult {
    let mut msgs = Messages::zeros(graph);
    let mut rng = match damping {
        Damping::Random { seed, .. } => Some(rng::stream(seed, &[tag::DAMPING])),
        Damping::None => None,
    };
    let mut iterations = 0;
    while iterations < max_iters {
        let mut next = minsum_step(graph, &msgs);
        iterations += 1;
        if let (Damping::Random { keep, .. }, Some(r)) = (damping, rng.as_mut()) {
            for (n, o) in next.to_check.iter_mut().zip(&msgs.to_check) {
                if r.random::<f64>() < keep {
                    *n = *o;
                }
            }
            for (n, o) in next.to_var.iter_mut().zip(&msgs.to_var) {
                if r.random::<f64>() < keep {
                    *n = *o;
                }
            }
        }
        if next == msgs && damping == Damping::None {
            break;
        }
        msgs = next;
    }
    let converged = minsum_step(graph, &msgs) == msgs;
    MinSumResult { messages: msgs, converged, iterations }
}

/// Constraint term: `min over x_∂c of (1 − ψ) + Σ_i E_{i→c}(x_i)`.
pub fn constraint_energy(kind: &ConstraintKind, to_check: &[Warning]) -> u32 {
    let q = kind.alphabet;
    let k = kind.arity;
    let mut vals = [0u8; 16];
    let mut best = u32::MAX;
    loop {
        let cost = kind.violated(&vals[..k])
            + (0..k).map(|s| (to_check[s] >> vals[s]) & 1).sum::<u32>();
        best = best.min(cost);
        let mut s = 0;
        loop {
            if s == k {
                return best;
            }
            vals[s] += 1;
            if (vals[s] as usize) < q {
                break;
            }
            vals[s] = 0;
            s += 1;
        }
    }
}

/// Variable term: `min_x Σ_c Ê_{c→i}(x)`.
pub fn variable_energy(incoming: impl IntoIterator<Item = Warning>, q: usize) -> u32 {
    let mut sums = [0u32; 32];
    for w in incoming {
        for (a, s) in sums.iter_mut().enumerate().take(q) {
            *s += (w >> a) & 1;
        }
    }
    sums[..q].iter().copied().min().unwrap_or(0)
}

/// Edge term: `min_x E(x) + Ê(x)`.
pub fn edge_energy(e: Warning, ehat: Warning, q: usize) -> u32 {
    (0..q).map(|a| ((e >> a) & 1) + ((ehat >> a) & 1)).min().unwrap_or(0)
}

/// Bethe energy `Σ_c ℰ_c + Σ_i ℰ_i − Σ_edges ℰ_{c,i}`.
pub fn bethe_energy(graph: &FactorGraph, msgs: &Messages) -> Result<i64> {
    let ne = graph.num_edges();
    if msgs.to_check.len() != ne || msgs.to_var.len() != ne {
        return param(format!(
            "message set has {}/{} entries, instance has {ne} edges",
            msgs.to_check.len(),
            msgs.to_var.len()
        ));
    }
    let q = graph.alphabet;
    let k = graph.arity;
    let mut total: i64 = 0;
    for c in 0..graph.num_constraints() {
        let kind = ConstraintKind::of(graph, c);
        total += constraint_energy(&kind, &msgs.to_check[c * k..(c + 1) * k]) as i64;
    }
    for v in 0..graph.num_vars() {
        total += variable_energy(graph.var_edges(v).iter().map(|&e| msgs.to_var[e]), q) as i64;
    }
    for e in 0..ne {
        total -= edge_energy(msgs.to_check[e], msgs.to_var[e], q) as i64;
    }
    Ok(total)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ensembles::{Boundary, Constraint};

    fn ksat_kind(arity: usize, payload: u32) -> ConstraintKind {
        ConstraintKind { problem: Problem::Ksat, arity, alphabet: 2, payload }
    }

    #[test]
    fn var_update_examples() {
        assert_eq!(var_update(&[], 2), 0b00);
        assert_eq!(var_update(&[0b10, 0b10], 2), 0b10);
        assert_eq!(var_update(&[0b10, 0b01], 2), 0b00);
        assert_eq!(var_update(&[0b010, 0b010, 0b100], 3), 0b110);
    }

    #[test]
    fn check_update_ksat() {
        let k = ksat_kind(3, 0);
        assert_eq!(check_update(&[0, 0], &k, 0).unwrap(), 0);
        // Clause (x or y): if y is warned away from 1 (cost on value 1), x must be 1.
        let k2 = ksat_kind(2, 0);
        assert_eq!(check_update(&[0b10], &k2, 0).unwrap(), 0b01);
        // Clause (not x or y) with the same warning on y forces x = 0.
        let k3 = ksat_kind(2, 0b01);
        assert_eq!(check_update(&[0b10], &k3, 0).unwrap(), 0b10);
        assert!(check_update(&[0], &k, 0).is_err());
    }

    #[test]
    fn check_update_colouring_single_zero_gives_canonical_vector() {
        let kind = ConstraintKind { problem: Problem::Qcol, arity: 2, alphabet: 4, payload: 0 };
        // Neighbour forced to colour 2: all colours but 2 cost 1.
        let incoming = 0b1011;
        assert_eq!(check_update(&[incoming], &kind, 1).unwrap(), 0b0100);
        // Two free colours: nothing forbidden.
        assert_eq!(check_update(&[0b1001], &kind, 1).unwrap(), 0);
    }

    #[test]
    fn isolated_variable_converges_immediately() {
        let g = FactorGraph::from_constraints(Problem::Ksat, 3, 2, 1, 0, 1, 1, Boundary::Individual, 0, vec![])
            .unwrap();
        let r = run_minsum(&g, 10, Damping::None);
        assert!(r.converged);
        assert_eq!(r.iterations, 1);
        assert_eq!(bethe_energy(&g, &r.messages).unwrap(), 0);
    }

    #[test]
    fn contradiction_on_two_unit_like_clauses() {
        // (x0 or x1) and (x0 or not x1) and (not x0 or x2) and (not x0 or not x2): UNSAT on a cycle.
        let cons = vec![
            Constraint { position: 0, vars: vec![0, 1], payload: 0b00 },
            Constraint { position: 0, vars: vec![0, 1], payload: 0b10 },
            Constraint { position: 0, vars: vec![0, 2], payload: 0b01 },
            Constraint { position: 0, vars: vec![0, 2], payload: 0b11 },
        ];
        let g = FactorGraph::from_constraints(Problem::Ksat, 2, 2, 3, 4, 1, 1, Boundary::Individual, 0, cons)
            .unwrap();
        let r = run_minsum(&g, 50, Damping::None);
        assert!(r.messages.is_valid(2));
        if r.converged {
            assert!(bethe_energy(&g, &r.messages).unwrap() >= 0);
        }
    }

    #[test]
    fn bethe_rejects_wrong_sizes() {
        let g = FactorGraph::from_constraints(
            Problem::Ksat,
            2,
            2,
            2,
            1,
            1,
            1,
            Boundary::Individual,
            0,
            vec![Constraint { position: 0, vars: vec![0, 1], payload: 0 }],
        )
        .unwrap();
        let m = Messages { to_check: vec![0], to_var: vec![0, 0] };
        assert!(bethe_energy(&g, &m).is_err());
    }
}
