//! Random instances of individual, coupled and interpolating chain ensembles.
//!
//! Positions are stored as 0-based offsets. A coupled chain of length `L` has
//! constraint positions `0..L`; with open boundaries the variables live on
//! `0..L+w-1`, with every other boundary style on `0..L`. Variable `v` sits at
//! position `v / N`.

use std::fmt::{self, Write as _};
use std::str::FromStr;

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::error::{param, Error, Result};
use crate::rng::{self, tag};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Problem {
    Ksat,
    Qcol,
    Xorsat,
}

impl Problem {
    pub fn name(self) -> &'static str {
        match self {
            Problem::Ksat => "KSAT",
            Problem::Qcol => "QCOL",
            Problem::Xorsat => "XORSAT",
        }
    }
}

impl fmt::Display for Problem {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Problem {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_uppercase().as_str() {
            "KSAT" => Ok(Problem::Ksat),
            "QCOL" => Ok(Problem::Qcol),
            "XORSAT" => Ok(Problem::Xorsat),
            _ => param(format!("unknown problem `{s}`")),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Boundary {
    /// A single uncoupled system (`L = w = 1`).
    Individual,
    /// Open chain: constraints on `0..L`, variables on `0..L+w-1`.
    Open,
    /// Periodic chain with `M` constraints per position.
    Periodic,
    /// Periodic chain with `LM` constraints placed at uniformly random positions.
    Ring,
    /// `LM` constraints over all `LN` variables, no spatial structure.
    Connected,
    /// `LM` constraints at random positions, each touching its own position only.
    Disconnected,
}

impl Boundary {
    pub fn name(self) -> &'static str {
        match self {
            Boundary::Individual => "Individual",
            Boundary::Open => "Open",
            Boundary::Periodic => "Periodic",
            Boundary::Ring => "Ring",
            Boundary::Connected => "Connected",
            Boundary::Disconnected => "Disconnected",
        }
    }
}

impl fmt::Display for Boundary {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Boundary {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "individual" => Ok(Boundary::Individual),
            "open" => Ok(Boundary::Open),
            "periodic" => Ok(Boundary::Periodic),
            "ring" => Ok(Boundary::Ring),
            "connected" => Ok(Boundary::Connected),
            "disconnected" => Ok(Boundary::Disconnected),
            _ => param(format!("unknown boundary `{s}`")),
        }
    }
}

/// Parameters of a chain ensemble.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChainSpec {
    pub problem: Problem,
    /// Variables per position.
    pub n: usize,
    /// Constraint density.
    pub alpha: f64,
    /// Constraint arity (2 for colouring).
    pub k: usize,
    /// Number of colours (colouring only; 2 otherwise).
    pub q: usize,
    pub w: usize,
    pub l: usize,
    pub boundary: Boundary,
}

impl ChainSpec {
    pub fn ksat(k: usize, n: usize, alpha: f64, w: usize, l: usize, boundary: Boundary) -> Self {
        Self { problem: Problem::Ksat, n, alpha, k, q: 2, w, l, boundary }
    }

    pub fn xorsat(k: usize, n: usize, alpha: f64, w: usize, l: usize, boundary: Boundary) -> Self {
        Self { problem: Problem::Xorsat, n, alpha, k, q: 2, w, l, boundary }
    }

    pub fn qcol(q: usize, n: usize, alpha: f64, w: usize, l: usize, boundary: Boundary) -> Self {
        Self { problem: Problem::Qcol, n, alpha, k: 2, q, w, l, boundary }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n == 0 {
            return param("N must be positive");
        }
        if !(self.alpha >= 0.0 && self.alpha.is_finite()) {
            return param(format!("alpha must be finite and non-negative, got {}", self.alpha));
        }
        if self.k < 2 {
            return param(format!("K must be at least 2, got {}", self.k));
        }
        if self.problem == Problem::Qcol && self.k != 2 {
            return param("colouring constraints have K = 2");
        }
        if self.q < 2 || self.q > 32 {
            return param(format!("Q must lie in 2..=32, got {}", self.q));
        }
        if self.problem != Problem::Qcol && self.q != 2 {
            return param("Q is only meaningful for colouring");
        }
        if self.k > 16 {
            return param("K above 16 is not supported");
        }
        if self.w == 0 || self.l == 0 {
            return param("w and L must be positive");
        }
        match self.boundary {
            Boundary::Individual => {
                if self.l != 1 || self.w != 1 {
                    return param("the individual ensemble has L = w = 1");
                }
            }
            Boundary::Connected | Boundary::Disconnected => {
                if self.l != 1 && self.l % 2 != 0 {
                    return param(format!("L must be even, got {}", self.l));
                }
            }
            Boundary::Open | Boundary::Periodic | Boundary::Ring => {
                if self.l % 2 != 0 {
                    return param(format!("L must be even, got {}", self.l));
                }
                if self.boundary != Boundary::Open && self.w > self.l {
                    return param("periodic chains need w <= L");
                }
            }
        }
        Ok(())
    }

    /// Constraints per position, `floor(alpha * N)`.
    ///
    /// A relative slack of 1e-9 absorbs binary rounding such as `2.3 * 100 = 229.999...`.
    pub fn m(&self) -> usize {
        let x = self.alpha * self.n as f64;
        (x * (1.0 + 1e-12) + 1e-9).floor() as usize
    }

    pub fn arity(&self) -> usize {
        self.k
    }

    pub fn alphabet(&self) -> usize {
        match self.problem {
            Problem::Qcol => self.q,
            _ => 2,
        }
    }

    pub fn var_positions(&self) -> usize {
        var_positions(self.boundary, self.l, self.w)
    }

    pub fn num_vars(&self) -> usize {
        self.n * self.var_positions()
    }
}

fn var_positions(boundary: Boundary, l: usize, w: usize) -> usize {
    match boundary {
        Boundary::Individual => 1,
        Boundary::Open => l + w - 1,
        _ => l,
    }
}

/// One constraint node.
///
/// `payload` holds the negation bits of a clause (bit `s` for slot `s`) or the
/// parity bit of an XORSAT check in bit 0; it is zero for colouring.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Constraint {
    pub position: usize,
    pub vars: Vec<usize>,
    pub payload: u32,
}

/// A sampled bipartite instance. Edge `e` is slot `e % K` of constraint `e / K`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct FactorGraph {
    pub problem: Problem,
    pub arity: usize,
    pub alphabet: usize,
    pub n: usize,
    /// Nominal constraints per position, `floor(alpha * N)`.
    pub m: usize,
    pub l: usize,
    pub w: usize,
    pub boundary: Boundary,
    pub seed: u64,
    pub constraints: Vec<Constraint>,
    var_edges: Vec<Vec<usize>>,
}

/// Whether a constraint is satisfied, given the values of its variables slot by slot.
pub fn constraint_satisfied(problem: Problem, payload: u32, values: &[u8]) -> bool {
    match problem {
        Problem::Ksat => values
            .iter()
            .enumerate()
            .any(|(s, &x)| (x as u32) != (payload >> s) & 1),
        Problem::Xorsat => {
            let parity = values.iter().fold(0u32, |acc, &x| acc ^ x as u32);
            parity == payload & 1
        }
        Problem::Qcol => values[0] != values[1],
    }
}

impl FactorGraph {
    /// Assembles an instance from explicit constraints. Used by tests and the text parser.
    #[allow(clippy::too_many_arguments)]
    pub fn from_constraints(
        problem: Problem,
        arity: usize,
        alphabet: usize,
        n: usize,
        m: usize,
        l: usize,
        w: usize,
        boundary: Boundary,
        seed: u64,
        constraints: Vec<Constraint>,
    ) -> Result<Self> {
        let num_vars = n * var_positions(boundary, l, w);
        let mut var_edges = vec![Vec::new(); num_vars];
        for (c, con) in constraints.iter().enumerate() {
            if con.vars.len() != arity {
                return param(format!("constraint {c} has {} variables, expected {arity}", con.vars.len()));
            }
            for (s, &v) in con.vars.iter().enumerate() {
                if v >= num_vars {
                    return param(format!("constraint {c} references variable {v} of {num_vars}"));
                }
                var_edges[v].push(c * arity + s);
            }
        }
        Ok(Self { problem, arity, alphabet, n, m, l, w, boundary, seed, constraints, var_edges })
    }

    /// An individual colouring instance with the given edges.
    pub fn coloring(q: usize, n: usize, edges: &[(usize, usize)]) -> Result<Self> {
        let constraints = edges
            .iter()
            .map(|&(a, b)| Constraint { position: 0, vars: vec![a, b], payload: 0 })
            .collect();
        Self::from_constraints(Problem::Qcol, 2, q, n, edges.len(), 1, 1, Boundary::Individual, 0, constraints)
    }

    pub fn num_vars(&self) -> usize {
        self.var_edges.len()
    }

    pub fn num_constraints(&self) -> usize {
        self.constraints.len()
    }

    pub fn num_edges(&self) -> usize {
        self.constraints.len() * self.arity
    }

    pub fn var_position(&self, v: usize) -> usize {
        v / self.n
    }

    /// Edge ids incident to variable `v`.
    pub fn var_edges(&self, v: usize) -> &[usize] {
        &self.var_edges[v]
    }

    /// Variable at the end of edge `e`.
    pub fn edge_var(&self, e: usize) -> usize {
        self.constraints[e / self.arity].vars[e % self.arity]
    }

    /// Negation bit of edge `e` (K-SAT only; 0 otherwise).
    pub fn edge_negated(&self, e: usize) -> bool {
        self.problem == Problem::Ksat && (self.constraints[e / self.arity].payload >> (e % self.arity)) & 1 == 1
    }

    pub fn degree(&self, v: usize) -> usize {
        self.var_edges[v].len()
    }

    pub fn satisfied(&self, c: usize, x: &[u8]) -> bool {
        let con = &self.constraints[c];
        let mut vals = [0u8; 16];
        for (s, &v) in con.vars.iter().enumerate() {
            vals[s] = x[v];
        }
        constraint_satisfied(self.problem, con.payload, &vals[..self.arity])
    }

    /// Number of violated constraints under assignment `x`.
    pub fn energy(&self, x: &[u8]) -> Result<u64> {
        if x.len() != self.num_vars() {
            return param(format!("assignment has {} values, instance has {} variables", x.len(), self.num_vars()));
        }
        if let Some(&bad) = x.iter().find(|&&v| v as usize >= self.alphabet) {
            return param(format!("value {bad} outside alphabet of size {}", self.alphabet));
        }
        Ok(self.energy_unchecked(x))
    }

    pub(crate) fn energy_unchecked(&self, x: &[u8]) -> u64 {
        (0..self.constraints.len()).filter(|&c| !self.satisfied(c, x)).count() as u64
    }

    /// True when the factor graph (variables plus constraints) has no cycle.
    /// Multi-edges count as cycles.
    pub fn is_forest(&self) -> bool {
        let nv = self.num_vars();
        let mut parent: Vec<usize> = (0..nv + self.constraints.len()).collect();
        fn find(p: &mut [usize], mut x: usize) -> usize {
            while p[x] != x {
                p[x] = p[p[x]];
                x = p[x];
            }
            x
        }
        for (c, con) in self.constraints.iter().enumerate() {
            for &v in &con.vars {
                let a = find(&mut parent, v);
                let b = find(&mut parent, nv + c);
                if a == b {
                    return false;
                }
                parent[a] = b;
            }
        }
        true
    }

    fn header_q_or_k(&self) -> usize {
        match self.problem {
            Problem::Qcol => self.alphabet,
            _ => self.arity,
        }
    }

    /// Line-oriented text form: a header `PROBLEM K/Q N M L w BOUNDARY SEED`, then one
    /// line per constraint with its position, variable indices and payload bits
    /// (`-` for colouring).
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(
            s,
            "{} {} {} {} {} {} {} {}",
            self.problem,
            self.header_q_or_k(),
            self.n,
            self.m,
            self.l,
            self.w,
            self.boundary,
            self.seed
        );
        for con in &self.constraints {
            let _ = write!(s, "{}", con.position);
            for v in &con.vars {
                let _ = write!(s, " {v}");
            }
            match self.problem {
                Problem::Ksat => {
                    s.push(' ');
                    for b in 0..self.arity {
                        s.push(if (con.payload >> b) & 1 == 1 { '1' } else { '0' });
                    }
                }
                Problem::Xorsat => {
                    let _ = write!(s, " {}", con.payload & 1);
                }
                Problem::Qcol => s.push_str(" -"),
            }
            s.push('\n');
        }
        s
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let perr = |line: usize, msg: String| Error::Parse { line, msg };
        let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
        let (hl, header) = lines.next().ok_or_else(|| perr(1, "empty input".into()))?;
        let f: Vec<&str> = header.split_whitespace().collect();
        if f.len() != 8 {
            return Err(perr(hl + 1, format!("header has {} fields, expected 8", f.len())));
        }
        let num = |i: usize| -> Result<u64> {
            f[i].parse::<u64>().map_err(|e| perr(hl + 1, format!("field {}: {e}", i + 1)))
        };
        let problem: Problem = f[0].parse().map_err(|e: Error| perr(hl + 1, e.to_string()))?;
        let kq = num(1)? as usize;
        let n = num(2)? as usize;
        let m = num(3)? as usize;
        let l = num(4)? as usize;
        let w = num(5)? as usize;
        let boundary: Boundary = f[6].parse().map_err(|e: Error| perr(hl + 1, e.to_string()))?;
        let seed = num(7)?;
        let (arity, alphabet) = match problem {
            Problem::Qcol => (2, kq),
            _ => (kq, 2),
        };
        if arity == 0 || arity > 16 || !(2..=32).contains(&alphabet) {
            return Err(perr(hl + 1, "unsupported K/Q".into()));
        }
        let mut constraints = Vec::new();
        for (i, line) in lines {
            let t: Vec<&str> = line.split_whitespace().collect();
            if t.len() != arity + 2 {
                return Err(perr(i + 1, format!("expected {} fields, found {}", arity + 2, t.len())));
            }
            let position = t[0].parse::<usize>().map_err(|e| perr(i + 1, e.to_string()))?;
            let vars = t[1..=arity]
                .iter()
                .map(|x| x.parse::<usize>().map_err(|e| perr(i + 1, e.to_string())))
                .collect::<Result<Vec<_>>>()?;
            let bits = t[arity + 1];
            let payload = match problem {
                Problem::Ksat => {
                    if bits.len() != arity || !bits.bytes().all(|b| b == b'0' || b == b'1') {
                        return Err(perr(i + 1, format!("bad negation bits `{bits}`")));
                    }
                    bits.bytes().enumerate().fold(0u32, |acc, (s, b)| acc | (((b - b'0') as u32) << s))
                }
                Problem::Xorsat => match bits {
                    "0" => 0,
                    "1" => 1,
                    _ => return Err(perr(i + 1, format!("bad parity bit `{bits}`"))),
                },
                Problem::Qcol => {
                    if bits != "-" {
                        return Err(perr(i + 1, format!("unexpected payload `{bits}`")));
                    }
                    0
                }
            };
            constraints.push(Constraint { position, vars, payload });
        }
        FactorGraph::from_constraints(problem, arity, alphabet, n, m, l, w, boundary, seed, constraints)
            .map_err(|e| perr(0, e.to_string()))
    }
}

/// Samples an instance of `spec`. Deterministic in `(spec, seed)`.
pub fn sample(spec: &ChainSpec, seed: u64) -> Result<FactorGraph> {
    spec.validate()?;
    let mut rng = rng::stream(seed, &[tag::SAMPLE]);
    let n = spec.n;
    let l = spec.l;
    let w = spec.w;
    let m = spec.m();
    let k = spec.arity();

    // Constraint counts per position.
    let counts: Vec<usize> = match spec.boundary {
        Boundary::Individual => vec![m],
        Boundary::Open | Boundary::Periodic => vec![m; l],
        Boundary::Ring | Boundary::Connected | Boundary::Disconnected => {
            let mut c = vec![0usize; l];
            for _ in 0..l * m {
                c[rng.random_range(0..l)] += 1;
            }
            c
        }
    };

    let nv = spec.num_vars();
    let mut constraints = Vec::with_capacity(counts.iter().sum());
    for (z, &cnt) in counts.iter().enumerate() {
        for _ in 0..cnt {
            let mut vars = Vec::with_capacity(k);
            for _ in 0..k {
                let v = match spec.boundary {
                    Boundary::Individual => rng.random_range(0..n),
                    Boundary::Open => (z + rng.random_range(0..w)) * n + rng.random_range(0..n),
                    Boundary::Periodic | Boundary::Ring => ((z + rng.random_range(0..w)) % l) * n + rng.random_range(0..n),
                    Boundary::Connected => rng.random_range(0..nv),
                    Boundary::Disconnected => z * n + rng.random_range(0..n),
                };
                vars.push(v);
            }
            let payload = match spec.problem {
                Problem::Ksat => rng.random_range(0..1u32 << k),
                Problem::Xorsat => rng.random_range(0..2u32),
                Problem::Qcol => 0,
            };
            constraints.push(Constraint { position: z, vars, payload });
        }
    }
    FactorGraph::from_constraints(
        spec.problem,
        k,
        spec.alphabet(),
        n,
        m,
        l,
        w,
        spec.boundary,
        seed,
        constraints,
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn individual_counts() {
        let spec = ChainSpec::ksat(3, 4, 1.0, 1, 1, Boundary::Individual);
        let g = sample(&spec, 1).unwrap();
        assert_eq!(g.num_vars(), 4);
        assert_eq!(g.num_constraints(), 4);
        assert_eq!(g.num_edges(), 12);
    }

    #[test]
    fn open_qcol_window() {
        let spec = ChainSpec::qcol(3, 2, 0.5, 2, 4, Boundary::Open);
        for seed in 0..50 {
            let g = sample(&spec, seed).unwrap();
            assert_eq!(g.num_vars(), 10);
            assert_eq!(g.num_constraints(), 4);
            for c in &g.constraints {
                for &v in &c.vars {
                    let u = g.var_position(v);
                    assert!(u == c.position || u == c.position + 1);
                }
            }
        }
    }

    #[test]
    fn m_is_floor_with_rounding_slack() {
        assert_eq!(ChainSpec::ksat(3, 100, 2.3, 1, 1, Boundary::Individual).m(), 230);
        assert_eq!(ChainSpec::ksat(3, 1000, 4.2, 1, 1, Boundary::Individual).m(), 4200);
        assert_eq!(ChainSpec::ksat(3, 3, 0.5, 1, 1, Boundary::Individual).m(), 1);
    }

    #[test]
    fn validation_errors() {
        assert!(ChainSpec::ksat(3, 4, 1.0, 2, 3, Boundary::Open).validate().is_err());
        assert!(ChainSpec::ksat(1, 4, 1.0, 1, 1, Boundary::Individual).validate().is_err());
        assert!(ChainSpec::ksat(3, 4, 1.0, 2, 4, Boundary::Individual).validate().is_err());
        let mut q = ChainSpec::qcol(3, 4, 1.0, 1, 1, Boundary::Individual);
        q.k = 3;
        assert!(q.validate().is_err());
    }

    #[test]
    fn energies_of_small_constraints() {
        // (x0 or not x1), x = (0, 1): both literals false.
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
            vec![Constraint { position: 0, vars: vec![0, 1], payload: 0b10 }],
        )
        .unwrap();
        assert_eq!(g.energy(&[0, 1]).unwrap(), 1);
        assert_eq!(g.energy(&[1, 1]).unwrap(), 0);
        assert!(g.energy(&[0, 2]).is_err());

        let x = FactorGraph::from_constraints(
            Problem::Xorsat,
            3,
            2,
            3,
            1,
            1,
            1,
            Boundary::Individual,
            0,
            vec![Constraint { position: 0, vars: vec![0, 1, 2], payload: 0 }],
        )
        .unwrap();
        assert_eq!(x.energy(&[1, 1, 0]).unwrap(), 0);
        assert_eq!(x.energy(&[1, 0, 0]).unwrap(), 1);

        let c = FactorGraph::from_constraints(
            Problem::Qcol,
            2,
            3,
            2,
            1,
            1,
            1,
            Boundary::Individual,
            0,
            vec![Constraint { position: 0, vars: vec![0, 1], payload: 0 }],
        )
        .unwrap();
        assert_eq!(c.energy(&[2, 2]).unwrap(), 1);
        assert_eq!(c.energy(&[2, 0]).unwrap(), 0);
    }

    #[test]
    fn text_round_trip_all_problems() {
        let specs = [
            ChainSpec::ksat(3, 5, 2.0, 3, 6, Boundary::Open),
            ChainSpec::qcol(4, 5, 1.5, 2, 4, Boundary::Ring),
            ChainSpec::xorsat(3, 6, 0.8, 2, 4, Boundary::Periodic),
            ChainSpec::ksat(4, 3, 1.0, 1, 4, Boundary::Disconnected),
            ChainSpec::xorsat(3, 4, 1.0, 1, 2, Boundary::Connected),
        ];
        for (i, spec) in specs.iter().enumerate() {
            let g = sample(spec, 100 + i as u64).unwrap();
            let t = g.to_text();
            let h = FactorGraph::from_text(&t).unwrap();
            assert_eq!(g, h);
            assert_eq!(t, h.to_text());
        }
    }

    #[test]
    fn parse_errors_carry_line_numbers() {
        let bad = "KSAT 3 2 1 1 1 Individual 0\n0 0 1 2 01\n";
        match FactorGraph::from_text(bad) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 2),
            other => panic!("unexpected {other:?}"),
        }
        assert!(FactorGraph::from_text("KSAT 3 2").is_err());
    }
}
