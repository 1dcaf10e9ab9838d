use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use serde_json::{json, Value};

mod commands;
mod output;
mod tables;

use output::{Artifact, Format};

#[derive(Parser, Debug)]
#[command(name = "sccsp", version, about = "Experiments on spatially coupled K-SAT, Q-colouring and XORSAT ensembles")]
struct Cli {
    #[command(flatten)]
    global: Global,

    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug, Clone, Serialize)]
pub struct Global {
    /// Master seed; every random stream is derived from it
    #[arg(long, global = true, default_value_t = 1)]
    pub seed: u64,

    /// Worker threads (default: logical cores)
    #[arg(long, global = true)]
    pub threads: Option<usize>,

    /// Output file (default: stdout)
    #[arg(long, global = true)]
    #[serde(skip)]
    pub out: Option<PathBuf>,

    #[arg(long, global = true, value_enum, default_value_t = Format::Csv)]
    pub format: Format,

    /// Print the resolved configuration and exit
    #[arg(long, global = true)]
    #[serde(skip)]
    pub dry_run: bool,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Sample an instance and list its constraints
    Sample(commands::SampleArgs),
    /// Run min-sum warning propagation on a sampled instance
    Minsum(commands::MinsumArgs),
    /// K-SAT survey propagation by population dynamics
    SpKsat(commands::SpKsatArgs),
    /// Q-colouring survey propagation by population dynamics
    SpQcol(commands::SpQcolArgs),
    /// Large-K van der Waals curve
    VdwKsat(commands::VdwKsatArgs),
    /// Large-Q van der Waals curve
    VdwQcol(commands::VdwQcolArgs),
    /// XORSAT leaf-removal density evolution
    DeXorsat(commands::DeArgs),
    /// Pure-literal density evolution
    DePureliteral(commands::DeArgs),
    /// Q-core peeling density evolution
    DeQcore(commands::DeQcoreArgs),
    /// SP and static thresholds by population dynamics
    Threshold(commands::ThresholdArgs),
    /// Exhaustive ground-state oracles on tiny instances
    Oracle(commands::OracleArgs),
    /// Reproduce one of the threshold tables
    Table(tables::TableArgs),
}

/// `--fast` (the default) or `--paper`.
#[derive(Args, Debug, Clone, Copy, Serialize)]
pub struct PresetFlags {
    /// Reduced population sizes and looser tolerances
    #[arg(long, conflicts_with = "paper")]
    pub fast: bool,
    /// Full population sizes and tolerances
    #[arg(long)]
    pub paper: bool,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Preset {
    Fast,
    Paper,
}

impl PresetFlags {
    pub fn preset(&self) -> Preset {
        if self.paper {
            Preset::Paper
        } else {
            Preset::Fast
        }
    }
}

type Run = Result<Artifact, Box<dyn std::error::Error>>;

fn config(name: &str, args: &impl Serialize, global: &Global) -> Value {
    json!({ "command": name, "args": output::to_value(args), "seed": global.seed, "threads": global.threads, "format": global.format })
}

fn dispatch<'a>(cmd: &'a Command, g: &'a Global) -> (String, Value, Box<dyn FnOnce() -> Run + 'a>) {
    macro_rules! arm {
        ($name:literal, $a:expr, $f:path) => {
            ($name.to_string(), config($name, $a, g), Box::new(move || $f($a, g)))
        };
    }
    match cmd {
        Command::Sample(a) => arm!("sample", a, commands::sample),
        Command::Minsum(a) => arm!("minsum", a, commands::minsum),
        Command::SpKsat(a) => arm!("sp-ksat", a, commands::sp_ksat),
        Command::SpQcol(a) => arm!("sp-qcol", a, commands::sp_qcol),
        Command::VdwKsat(a) => arm!("vdw-ksat", a, commands::vdw_ksat),
        Command::VdwQcol(a) => arm!("vdw-qcol", a, commands::vdw_qcol),
        Command::DeXorsat(a) => arm!("de-xorsat", a, commands::de_xorsat),
        Command::DePureliteral(a) => arm!("de-pureliteral", a, commands::de_pureliteral),
        Command::DeQcore(a) => arm!("de-qcore", a, commands::de_qcore),
        Command::Threshold(a) => arm!("threshold", a, commands::threshold),
        Command::Oracle(a) => arm!("oracle", a, commands::oracle),
        Command::Table(a) => arm!("table", a, tables::table),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let g = &cli.global;
    if let Some(n) = g.threads {
        if n == 0 {
            eprintln!("error: --threads must be positive");
            return ExitCode::from(2);
        }
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("error: {e}");
            return ExitCode::from(1);
        }
    }
    let (name, cfg, run) = dispatch(&cli.command, g);
    if g.dry_run {
        println!("{}", serde_json::to_string_pretty(&cfg).unwrap_or_default());
        return ExitCode::SUCCESS;
    }
    let result = run().and_then(|mut art| {
        art.command = name;
        art.config = cfg;
        art.write(g.format, g.out.as_deref())
    });
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}
