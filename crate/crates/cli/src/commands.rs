use clap::{Args, ValueEnum};
use serde::Serialize;
use serde_json::{json, Value};

use sccsp::density_evolution::{de_threshold, default_bracket, survival, DeModel, SurvivalConfig};
use sccsp::ensembles::{sample as sample_instance, Boundary, ChainSpec, Problem};
use sccsp::message_passing::{bethe_energy, run_minsum, Damping};
use sccsp::oracle::{brute_force, estimate_e, theorem1_check, ENUMERATION_LIMIT};
use sccsp::scalar_field::{
    descending_grid, kink_diagnostics, kink_resolving_grid, solve_constrained, trace_vdw, vdw_minimum, FieldModel, KsatField,
    QcolField, VdwConfig, VdwPoint,
};
use sccsp::sp_population::{run_population_dynamics, Chain, InitPolicy, PopulationConfig, PopulationRun, SpModel};
use sccsp::thresholds::{ThresholdResult, StochasticSearch};

use crate::output::{to_value, Artifact};
use crate::{Global, Preset, PresetFlags, Run};

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum ProblemArg {
    Ksat,
    Qcol,
    Xorsat,
}

impl From<ProblemArg> for Problem {
    fn from(p: ProblemArg) -> Self {
        match p {
            ProblemArg::Ksat => Problem::Ksat,
            ProblemArg::Qcol => Problem::Qcol,
            ProblemArg::Xorsat => Problem::Xorsat,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum BoundaryArg {
    Individual,
    Open,
    Periodic,
    Ring,
    Connected,
    Disconnected,
}

impl From<BoundaryArg> for Boundary {
    fn from(b: BoundaryArg) -> Self {
        match b {
            BoundaryArg::Individual => Boundary::Individual,
            BoundaryArg::Open => Boundary::Open,
            BoundaryArg::Periodic => Boundary::Periodic,
            BoundaryArg::Ring => Boundary::Ring,
            BoundaryArg::Connected => Boundary::Connected,
            BoundaryArg::Disconnected => Boundary::Disconnected,
        }
    }
}

#[derive(Args, Debug, Clone, Serialize)]
pub struct EnsembleArgs {
    #[arg(long, value_enum, default_value_t = ProblemArg::Ksat)]
    pub problem: ProblemArg,
    /// Constraint arity (K-SAT, XORSAT)
    #[arg(long, default_value_t = 3)]
    pub k: usize,
    /// Number of colours (colouring)
    #[arg(long, default_value_t = 3)]
    pub q: usize,
    /// Variables per position
    #[arg(long, default_value_t = 100)]
    pub n: usize,
    /// Constraint density
    #[arg(long)]
    pub alpha: f64,
    #[arg(long, default_value_t = 1)]
    pub w: usize,
    #[arg(long = "L", default_value_t = 1)]
    pub l: usize,
    #[arg(long, value_enum, default_value_t = BoundaryArg::Individual)]
    pub boundary: BoundaryArg,
}

impl EnsembleArgs {
    fn spec(&self) -> ChainSpec {
        let b = self.boundary.into();
        match self.problem {
            ProblemArg::Ksat => ChainSpec::ksat(self.k, self.n, self.alpha, self.w, self.l, b),
            ProblemArg::Xorsat => ChainSpec::xorsat(self.k, self.n, self.alpha, self.w, self.l, b),
            ProblemArg::Qcol => ChainSpec::qcol(self.q, self.n, self.alpha, self.w, self.l, b),
        }
    }
}

#[derive(Args, Debug, Clone, Serialize)]
pub struct SampleArgs {
    #[command(flatten)]
    pub ensemble: EnsembleArgs,
}

pub fn sample(a: &SampleArgs, g: &Global) -> Run {
    let graph = sample_instance(&a.ensemble.spec(), g.seed)?;
    let mut art = Artifact::new("sample", Value::Null, &["constraint", "position", "vars", "payload"]);
    art.summary("variables", graph.num_vars());
    art.summary("constraints", graph.num_constraints());
    art.summary("instance", graph.to_text());
    for (c, con) in graph.constraints.iter().enumerate() {
        let vars = con.vars.iter().map(|v| v.to_string()).collect::<Vec<_>>().join(" ");
        art.row(vec![json!(c), json!(con.position), json!(vars), json!(con.payload)]);
    }
    Ok(art)
}

#[derive(Args, Debug, Clone, Serialize)]
pub struct MinsumArgs {
    #[command(flatten)]
    pub ensemble: EnsembleArgs,
    #[arg(long, default_value_t = 1000)]
    pub max_iters: usize,
    /// Probability that a message keeps its old value in each update
    #[arg(long, default_value_t = 0.0)]
    pub keep: f64,
}

pub fn minsum(a: &MinsumArgs, g: &Global) -> Run {
    let graph = sample_instance(&a.ensemble.spec(), g.seed)?;
    let damping = if a.keep > 0.0 { Damping::Random { keep: a.keep, seed: g.seed } } else { Damping::None };
    let r = run_minsum(&graph, a.max_iters, damping);
    let mut art = Artifact::new("minsum", Value::Null, &["edge", "constraint", "var", "to_check", "to_var"]);
    art.summary("converged", r.converged);
    art.summary("iterations", r.iterations);
    art.summary("bethe_energy", bethe_energy(&graph, &r.messages)?);
    art.summary("is_forest", graph.is_forest());
    let space = (graph.alphabet as f64).powi(graph.num_vars() as i32);
    if space <= ENUMERATION_LIMIT {
        art.summary("ground_state", brute_force(&graph)?);
    }
    for e in 0..graph.num_edges() {
        art.row(vec![
            json!(e),
            json!(e / graph.arity),
            json!(graph.edge_var(e)),
            json!(r.messages.to_check[e]),
            json!(r.messages.to_var[e]),
        ]);
    }
    Ok(art)
}

#[derive(Args, Debug, Clone, Serialize)]
pub struct ChainArgs {
    #[arg(long, default_value_t = 3)]
    pub w: usize,
    #[arg(long = "L", default_value_t = 20)]
    pub l: usize,
    /// Uncoupled system (L = w = 1)
    #[arg(long)]
    pub individual: bool,
    /// Periodic instead of open boundaries
    #[arg(long)]
    pub periodic: bool,
}

impl ChainArgs {
    fn chain(&self) -> Chain {
        if self.individual {
            Chain::individual()
        } else if self.periodic {
            Chain::periodic(self.w, self.l)
        } else {
            Chain::open(self.w, self.l)
        }
    }
}

#[derive(Args, Debug, Clone, Serialize)]
pub struct PopulationArgs {
    /// Population size per position
    #[arg(long)]
    pub pop: Option<usize>,
    #[arg(long)]
    pub burn_in: Option<usize>,
    /// Measured sweeps (one batch each)
    #[arg(long)]
    pub sweeps: Option<usize>,
    /// Monte-Carlo draws per term and position per measurement (default: population size)
    #[arg(long)]
    pub samples: Option<usize>,
    /// trivial, forced or uniform (default: uniform for K-SAT, forced for colouring)
    #[arg(long)]
    pub init: Option<InitPolicy>,
}

pub fn population_config(p: &PopulationArgs, preset: Preset, seed: u64) -> PopulationConfig {
    let base = match preset {
        Preset::Paper => PopulationConfig::paper(seed),
        Preset::Fast => PopulationConfig::fast(seed),
    };
    let size = p.pop.unwrap_or(base.size);
    PopulationConfig {
        size,
        burn_in: p.burn_in.unwrap_or(base.burn_in),
        measure_sweeps: p.sweeps.unwrap_or(base.measure_sweeps),
        measure_samples: p.samples.unwrap_or(if p.pop.is_some() { size } else { base.measure_samples }),
        init: p.init.or(base.init),
        ..base
    }
}

fn population_artifact(name: &str, run: &PopulationRun) -> Artifact {
    let mut art = Artifact::new(name, Value::Null, &["z", "mean_q_hat", "sigma", "sigma_stderr"]);
    art.summary("sigma", run.estimate.total);
    art.summary("sigma_stderr", run.estimate.total_stderr);
    art.summary("collapsed", run.collapsed);
    art.summary("mean_q_hat", run.mean_q_hat);
    art.summary("sweeps", run.sweeps);
    art.summary("rejection_rate", run.estimate.rejection_rate);
    art.summary("counters", run.counters);
    for (z, (s, e)) in run.estimate.per_position.iter().zip(&run.estimate.per_position_stderr).enumerate() {
        let q = run.profile.get(z).map_or(Value::Null, |v| json!(v));
        art.row(vec![json!(z), q, json!(s), json!(e)]);
    }
    art
}

#[derive(Args, Debug, Clone, Serialize)]
pub struct SpKsatArgs {
    #[arg(long, default_value_t = 3)]
    pub k: usize,
    #[arg(long)]
    pub alpha: f64,
    #[command(flatten)]
    pub chain: ChainArgs,
    #[command(flatten)]
    pub population: PopulationArgs,
    #[command(flatten)]
    pub preset: PresetFlags,
}

pub fn sp_ksat(a: &SpKsatArgs, g: &Global) -> Run {
    let cfg = population_config(&a.population, a.preset.preset(), g.seed);
    let run = run_population_dynamics(SpModel::Ksat { k: a.k }, a.alpha, a.chain.chain(), &cfg)?;
    Ok(population_artifact("sp-ksat", &run))
}

#[derive(Args, Debug, Clone, Serialize)]
pub struct SpQcolArgs {
    #[arg(long, default_value_t = 3)]
    pub q: usize,
    /// Mean degree
    #[arg(long)]
    pub c: f64,
    #[command(flatten)]
    pub chain: ChainArgs,
    #[command(flatten)]
    pub population: PopulationArgs,
    #[command(flatten)]
    pub preset: PresetFlags,
}

pub fn sp_qcol(a: &SpQcolArgs, g: &Global) -> Run {
    let cfg = population_config(&a.population, a.preset.preset(), g.seed);
    let run = run_population_dynamics(SpModel::Qcol { q: a.q }, a.c, a.chain.chain(), &cfg)?;
    Ok(population_artifact("sp-qcol", &run))
}

#[derive(Args, Debug, Clone, Serialize)]
pub struct VdwArgs {
    #[arg(long, default_value_t = 3)]
    pub w: usize,
    #[arg(long = "L", default_value_t = 80)]
    pub l: usize,
    #[arg(long)]
    pub individual: bool,
    /// Solve at this single average field and list the profile
    #[arg(long)]
    pub phibar: Option<f64>,
    /// Grid spacing (default: resolves every kink position)
    #[arg(long)]
    pub step: Option<f64>,
    /// Largest average field of the grid
    #[arg(long)]
    pub max: Option<f64>,
}

#[derive(Args, Debug, Clone, Serialize)]
pub struct VdwKsatArgs {
    #[arg(long, default_value_t = 5)]
    pub k: usize,
    #[command(flatten)]
    pub vdw: VdwArgs,
}

#[derive(Args, Debug, Clone, Serialize)]
pub struct VdwQcolArgs {
    #[arg(long, default_value_t = 5)]
    pub q: usize,
    #[command(flatten)]
    pub vdw: VdwArgs,
}

fn vdw_run<M: FieldModel>(name: &str, model: &M, a: &VdwArgs, static_control: f64, sp: (f64, f64)) -> Run {
    let cfg = VdwConfig::default();
    let mst = model.metastable(static_control).unwrap_or(1.0);
    let grid = match (a.step, a.max) {
        (None, None) => kink_resolving_grid(model, static_control),
        (step, max) => descending_grid(max.unwrap_or(1.5 * mst), step.unwrap_or(mst / (4.0 * model.len() as f64))),
    };
    if let Some(target) = a.phibar {
        // Walk down from above so the profile lands on the branch a curve trace would reach.
        let lead: Vec<f64> = grid.iter().copied().filter(|&t| t > target).chain(std::iter::once(target)).collect();
        let pts = trace_vdw(model, &lead, &cfg);
        let p = pts.last().cloned().unwrap_or_else(|| solve_constrained(model, &vec![target; model.len()], target, &cfg));
        let mut art = Artifact::new(name, Value::Null, &["z", "field", "sigma"]);
        point_summary(&mut art, &p);
        for (z, f) in p.profile.iter().enumerate() {
            art.row(vec![json!(z), json!(f), p.per_position.get(z).map_or(Value::Null, |v| json!(v))]);
        }
        return Ok(art);
    }
    let pts = trace_vdw(model, &grid, &cfg);
    let mut art = Artifact::new(name, Value::Null, &["average_field", "control", "complexity", "converged", "iterations", "residual"]);
    if let Some(m) = vdw_minimum(&pts) {
        art.summary("minimum_average_field", m.target);
        art.summary("minimum_control", m.control);
    }
    art.summary("individual_sp", sp.0);
    art.summary("individual_sp_field", sp.1);
    art.summary("individual_static", static_control);
    art.summary("wiggle_amplitude", kink_diagnostics(&pts, model).wiggle_amplitude);
    for p in &pts {
        art.row(vec![json!(p.target), json!(p.control), json!(p.total_complexity), json!(p.converged), json!(p.iterations), json!(p.residual)]);
    }
    Ok(art)
}

fn point_summary(art: &mut Artifact, p: &VdwPoint) {
    art.summary("average_field", p.target);
    art.summary("control", p.control);
    art.summary("complexity", p.total_complexity);
    art.summary("converged", p.converged);
    art.summary("residual", p.residual);
}

pub fn vdw_ksat(a: &VdwKsatArgs, _g: &Global) -> Run {
    let (w, l) = if a.vdw.individual { (1, 1) } else { (a.vdw.w, a.vdw.l) };
    if a.k < 2 || w == 0 || l == 0 {
        return Err("need K >= 2 and positive w, L".into());
    }
    vdw_run("vdw-ksat", &KsatField::new(a.k, w, l), &a.vdw, KsatField::individual_static(a.k), KsatField::individual_sp(a.k))
}

pub fn vdw_qcol(a: &VdwQcolArgs, _g: &Global) -> Run {
    let (w, l) = if a.vdw.individual { (1, 1) } else { (a.vdw.w, a.vdw.l) };
    if a.q < 2 || w == 0 || l == 0 {
        return Err("need Q >= 2 and positive w, L".into());
    }
    vdw_run("vdw-qcol", &QcolField::new(a.q, w, l), &a.vdw, QcolField::individual_static(a.q), QcolField::individual_sp(a.q))
}

#[derive(Args, Debug, Clone, Serialize)]
pub struct DeChainArgs {
    #[arg(long, default_value_t = 5)]
    pub w: usize,
    #[arg(long = "L", default_value_t = 80)]
    pub l: usize,
    #[arg(long)]
    pub individual: bool,
    #[arg(long)]
    pub lo: Option<f64>,
    #[arg(long)]
    pub hi: Option<f64>,
    #[arg(long, default_value_t = 1e-4)]
    pub tol: f64,
}

#[derive(Args, Debug, Clone, Serialize)]
pub struct DeArgs {
    #[arg(long, default_value_t = 3)]
    pub k: usize,
    /// Iterate at this density and list the fixed-point profile instead of bisecting
    #[arg(long)]
    pub alpha: Option<f64>,
    #[command(flatten)]
    pub chain: DeChainArgs,
}

#[derive(Args, Debug, Clone, Serialize)]
pub struct DeQcoreArgs {
    #[arg(long, default_value_t = 3)]
    pub q: usize,
    /// Iterate at this mean degree and list the fixed-point profile instead of bisecting
    #[arg(long)]
    pub c: Option<f64>,
    #[command(flatten)]
    pub chain: DeChainArgs,
}

fn de_run(name: &str, model: DeModel, control: Option<f64>, a: &DeChainArgs) -> Run {
    model.validate()?;
    let (w, l) = if a.individual { (1, 1) } else { (a.w, a.l) };
    let cfg = SurvivalConfig::default();
    if let Some(c) = control {
        let s = survival(model, c, w, l, &cfg);
        let mut art = Artifact::new(name, Value::Null, &["z", "value"]);
        art.summary("control", c);
        art.summary("survives", s.survives);
        art.summary("max_value", s.max_value);
        art.summary("iterations", s.iterations);
        art.summary("converged", s.converged);
        for (z, v) in s.profile.iter().enumerate() {
            art.row(vec![json!(z), json!(v)]);
        }
        return Ok(art);
    }
    let (blo, bhi) = default_bracket(model);
    let r = de_threshold(model, w, l, a.lo.unwrap_or(blo), a.hi.unwrap_or(bhi), a.tol, &cfg)?;
    let mut art = threshold_artifact(name, &[r]);
    art.summary("model", model.name());
    Ok(art)
}

pub fn threshold_artifact(name: &str, results: &[ThresholdResult]) -> Artifact {
    let mut art = Artifact::new(name, Value::Null, &["kind", "estimate", "lo", "hi", "tolerance", "mc_stderr"]);
    for r in results {
        art.row(vec![to_value(r.kind), json!(r.estimate), json!(r.lo), json!(r.hi), json!(r.tolerance), to_value(r.mc_stderr)]);
    }
    if let [r] = results {
        art.summary("threshold", r.estimate);
    }
    art
}

pub fn de_xorsat(a: &DeArgs, _g: &Global) -> Run {
    de_run("de-xorsat", DeModel::LeafRemoval { k: a.k }, a.alpha, &a.chain)
}

pub fn de_pureliteral(a: &DeArgs, _g: &Global) -> Run {
    de_run("de-pureliteral", DeModel::PureLiteral { k: a.k }, a.alpha, &a.chain)
}

pub fn de_qcore(a: &DeQcoreArgs, _g: &Global) -> Run {
    de_run("de-qcore", DeModel::QCore { q: a.q }, a.c, &a.chain)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum SpModelArg {
    Ksat,
    Qcol,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum KindArg {
    Sp,
    Static,
    Both,
}

#[derive(Args, Debug, Clone, Serialize)]
pub struct ThresholdArgs {
    #[arg(long, value_enum, default_value_t = SpModelArg::Ksat)]
    pub model: SpModelArg,
    #[arg(long, default_value_t = 3)]
    pub k: usize,
    #[arg(long, default_value_t = 3)]
    pub q: usize,
    #[arg(long, value_enum, default_value_t = KindArg::Both)]
    pub kind: KindArg,
    #[arg(long)]
    pub lo: f64,
    #[arg(long)]
    pub hi: f64,
    /// Bisection tolerance (default: preset)
    #[arg(long)]
    pub tol: Option<f64>,
    #[command(flatten)]
    pub chain: ChainArgs,
    #[command(flatten)]
    pub population: PopulationArgs,
    #[command(flatten)]
    pub preset: PresetFlags,
}

pub fn search_config(preset: Preset) -> StochasticSearch {
    match preset {
        Preset::Fast => StochasticSearch::fast(),
        Preset::Paper => StochasticSearch::default(),
    }
}

pub fn threshold(a: &ThresholdArgs, g: &Global) -> Run {
    let preset = a.preset.preset();
    let cfg = population_config(&a.population, preset, g.seed);
    let mut search = search_config(preset);
    if let Some(t) = a.tol {
        search.tol = t;
    }
    let model = match a.model {
        SpModelArg::Ksat => SpModel::Ksat { k: a.k },
        SpModelArg::Qcol => SpModel::Qcol { q: a.q },
    };
    let pair = sccsp::sp_population::sp_thresholds(model, a.chain.chain(), cfg, a.lo, a.hi, &search, a.kind != KindArg::Sp)?;
    let mut results = Vec::new();
    if a.kind != KindArg::Static {
        results.push(pair.sp);
    }
    if let Some(s) = pair.static_point {
        results.push(s);
    }
    Ok(threshold_artifact("threshold", &results))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum OracleMode {
    /// Exhaustive ground state of one sampled instance
    Brute,
    /// Mean ground-state energy density over many instances
    Estimate,
    /// Open versus periodic comparison over a density grid
    Theorem1,
}

#[derive(Args, Debug, Clone, Serialize)]
pub struct OracleArgs {
    #[arg(long, value_enum, default_value_t = OracleMode::Theorem1)]
    pub mode: OracleMode,
    #[arg(long, value_enum, default_value_t = ProblemArg::Ksat)]
    pub problem: ProblemArg,
    #[arg(long, default_value_t = 3)]
    pub k: usize,
    #[arg(long, default_value_t = 3)]
    pub q: usize,
    #[arg(long, default_value_t = 3)]
    pub n: usize,
    #[arg(long, default_value_t = 2)]
    pub w: usize,
    #[arg(long = "L", default_value_t = 4)]
    pub l: usize,
    #[arg(long, value_enum, default_value_t = BoundaryArg::Open)]
    pub boundary: BoundaryArg,
    /// Constraint densities (comma separated)
    #[arg(long, value_delimiter = ',', default_values_t = [1.0, 2.0, 4.0])]
    pub alphas: Vec<f64>,
    #[arg(long, default_value_t = 10_000)]
    pub instances: usize,
}

pub fn oracle(a: &OracleArgs, g: &Global) -> Run {
    let problem: Problem = a.problem.into();
    let k_or_q = if problem == Problem::Qcol { a.q } else { a.k };
    let spec = |alpha: f64| EnsembleArgs {
        problem: a.problem,
        k: a.k,
        q: a.q,
        n: a.n,
        alpha,
        w: a.w,
        l: a.l,
        boundary: a.boundary,
    }
    .spec();
    match a.mode {
        OracleMode::Brute => {
            let mut art = Artifact::new("oracle", Value::Null, &["alpha", "min_energy", "minimizers", "clusters", "enumerated"]);
            for &alpha in &a.alphas {
                let r = brute_force(&sample_instance(&spec(alpha), g.seed)?)?;
                art.row(vec![json!(alpha), json!(r.min_energy), json!(r.minimizers), json!(r.clusters), json!(r.enumerated)]);
            }
            Ok(art)
        }
        OracleMode::Estimate => {
            let mut art = Artifact::new("oracle", Value::Null, &["alpha", "energy", "stderr", "sat_fraction", "instances"]);
            for &alpha in &a.alphas {
                let e = estimate_e(&spec(alpha), a.instances, g.seed)?;
                art.row(vec![json!(alpha), json!(e.mean), json!(e.stderr), json!(e.sat_fraction), json!(e.instances)]);
            }
            Ok(art)
        }
        OracleMode::Theorem1 => {
            let rep = theorem1_check(problem, k_or_q, &a.alphas, a.n, a.w, a.l, a.instances, g.seed)?;
            let mut art = Artifact::new(
                "oracle",
                Value::Null,
                &["alpha", "e_open", "e_open_stderr", "e_periodic", "e_periodic_stderr", "difference", "bound", "margin", "pass"],
            );
            art.summary("all_pass", rep.all_pass());
            for p in &rep.points {
                art.row(vec![
                    json!(p.alpha),
                    json!(p.open.mean),
                    json!(p.open.stderr),
                    json!(p.periodic.mean),
                    json!(p.periodic.stderr),
                    json!(p.difference),
                    json!(p.bound),
                    json!(p.margin),
                    json!(p.pass),
                ]);
            }
            Ok(art)
        }
    }
}
