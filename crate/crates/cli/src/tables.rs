//! Full reproduction pipelines for the threshold tables.

use clap::{Args, ValueEnum};
use rayon::prelude::*;
use serde::Serialize;
use serde_json::{json, Value};

use sccsp::density_evolution::{de_threshold, default_bracket, DeModel, SurvivalConfig};
use sccsp::scalar_field::{coupled_sp_ksat, coupled_sp_qcol, KsatField, QcolField, VdwConfig};
use sccsp::sp_population::{sp_thresholds, Chain, SpModel};
use sccsp::thresholds::ThresholdResult;

use crate::commands::{population_config, search_config, PopulationArgs};
use crate::output::{to_value, Artifact};
use crate::{Global, PresetFlags, Run};

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Serialize)]
pub enum TableId {
    T1,
    T2,
    T3,
    T4,
    T5,
    T7,
}

#[derive(Args, Debug, Clone, Serialize)]
pub struct TableArgs {
    #[arg(value_enum, ignore_case = true)]
    pub id: TableId,
    #[command(flatten)]
    pub preset: PresetFlags,
    #[command(flatten)]
    pub population: PopulationArgs,
}

const COLUMNS: [&str; 9] = ["quantity", "parameter", "w", "L", "estimate", "lo", "hi", "mc_stderr", "note"];

/// One table cell.
struct Cell {
    quantity: &'static str,
    parameter: usize,
    w: usize,
    l: usize,
    value: Result<ThresholdResult, String>,
}

fn exact(kind: sccsp::thresholds::ThresholdKind, v: f64, tol: f64) -> ThresholdResult {
    ThresholdResult { kind, lo: v, hi: v, estimate: v, method: sccsp::thresholds::Method::VdwMinimum, tolerance: tol, mc_stderr: None }
}

fn push(art: &mut Artifact, c: Cell) {
    let head = [json!(c.quantity), json!(c.parameter), json!(c.w), json!(c.l)];
    let tail = match c.value {
        Ok(r) => [json!(r.estimate), json!(r.lo), json!(r.hi), to_value(r.mc_stderr), Value::Null],
        Err(e) => [Value::Null, Value::Null, Value::Null, Value::Null, json!(e)],
    };
    art.row(head.into_iter().chain(tail).collect());
}

fn de_cells(quantity: &'static str, models: &[(usize, DeModel)], w: usize, l: usize) -> Vec<Cell> {
    let cfg = SurvivalConfig::default();
    models
        .par_iter()
        .flat_map(|&(p, m)| {
            let (lo, hi) = default_bracket(m);
            let tol = match m {
                DeModel::QCore { .. } => 1e-3,
                _ => 1e-4,
            };
            [(1, 1), (w, l)]
                .into_iter()
                .map(|(ww, ll)| Cell {
                    quantity,
                    parameter: p,
                    w: ww,
                    l: ll,
                    value: de_threshold(m, ww, ll, lo, hi, tol, &cfg).map_err(|e| e.to_string()),
                })
                .collect::<Vec<_>>()
        })
        .collect()
}

pub fn table(a: &TableArgs, g: &Global) -> Run {
    use sccsp::thresholds::ThresholdKind::{Sp, Static};
    let mut art = Artifact::new("table", Value::Null, &COLUMNS);
    art.summary("table", a.id);
    art.summary("preset", a.preset.preset());
    let vdw = VdwConfig::default();
    let cells: Vec<Cell> = match a.id {
        TableId::T5 => de_cells("alpha_lr", &[3, 4, 5, 7].map(|k| (k, DeModel::LeafRemoval { k })), 5, 80),
        TableId::T7 => de_cells("c_p", &[3, 4, 5, 7].map(|q| (q, DeModel::QCore { q })), 5, 80),
        TableId::T2 => {
            let mut cells = Vec::new();
            for k in [5usize, 7, 10] {
                cells.push(Cell { quantity: "alpha_hat_s", parameter: k, w: 1, l: 1, value: Ok(exact(Static, KsatField::individual_static(k), 1e-10)) });
                cells.push(Cell { quantity: "alpha_hat_sp", parameter: k, w: 1, l: 1, value: Ok(exact(Sp, KsatField::individual_sp(k).0, 1e-10)) });
            }
            let coupled: Vec<Cell> = [5usize, 7, 10]
                .iter()
                .flat_map(|&k| [3usize, 5, 7].map(|w| (k, w)))
                .collect::<Vec<_>>()
                .par_iter()
                .map(|&(k, w)| Cell {
                    quantity: "alpha_hat_sp",
                    parameter: k,
                    w,
                    l: 80,
                    value: coupled_sp_ksat(k, w, 80, &vdw).map(|p| exact(Sp, p.control, vdw.tol)).ok_or_else(|| "no converged point".to_string()),
                })
                .collect();
            cells.extend(coupled);
            cells
        }
        TableId::T4 => {
            let mut cells = Vec::new();
            for q in [5usize, 7, 10] {
                cells.push(Cell { quantity: "c_hat_s", parameter: q, w: 1, l: 1, value: Ok(exact(Static, QcolField::individual_static(q), 1e-10)) });
                cells.push(Cell { quantity: "c_hat_sp", parameter: q, w: 1, l: 1, value: Ok(exact(Sp, QcolField::individual_sp(q).0, 1e-10)) });
            }
            let coupled: Vec<Cell> = [5usize, 7, 10]
                .iter()
                .flat_map(|&q| [2usize, 3, 4].map(|w| (q, w)))
                .collect::<Vec<_>>()
                .par_iter()
                .map(|&(q, w)| Cell {
                    quantity: "c_hat_sp",
                    parameter: q,
                    w,
                    l: 80,
                    value: coupled_sp_qcol(q, w, 80, &vdw).map(|p| exact(Sp, p.control, vdw.tol)).ok_or_else(|| "no converged point".to_string()),
                })
                .collect();
            cells.extend(coupled);
            cells
        }
        TableId::T1 => {
            let mut jobs = vec![(3usize, 1usize, 1usize, 3.7, 4.6)];
            jobs.extend([10usize, 20, 40, 80, 160].map(|l| (3, 3, l, 3.9, 5.0)));
            stochastic_cells(a, g, SpModel::Ksat { k: 3 }, ("alpha_sp", "alpha_s"), &jobs)
        }
        TableId::T3 => {
            let mut jobs = vec![(3usize, 1usize, 1usize, 4.0, 5.2), (4, 1, 1, 7.6, 9.6)];
            jobs.extend([10usize, 20, 40, 80].map(|l| (3, 3, l, 4.2, 5.4)));
            jobs.extend([10usize, 20, 40, 80].map(|l| (4, 3, l, 8.0, 10.0)));
            let (q3, q4): (Vec<_>, Vec<_>) = jobs.into_iter().partition(|j| j.0 == 3);
            let mut cells = stochastic_cells(a, g, SpModel::Qcol { q: 3 }, ("c_sp", "c_s"), &q3);
            cells.extend(stochastic_cells(a, g, SpModel::Qcol { q: 4 }, ("c_sp", "c_s"), &q4));
            cells
        }
    };
    for c in cells {
        push(&mut art, c);
    }
    Ok(art)
}

/// Jobs are `(K or Q, w, L, lo, hi)`; each yields an SP row and a static row.
fn stochastic_cells(a: &TableArgs, g: &Global, model: SpModel, names: (&'static str, &'static str), jobs: &[(usize, usize, usize, f64, f64)]) -> Vec<Cell> {
    let preset = a.preset.preset();
    let search = search_config(preset);
    let mut cells = Vec::new();
    for (i, &(p, w, l, lo, hi)) in jobs.iter().enumerate() {
        let chain = if l == 1 { Chain::individual() } else { Chain::open(w, l) };
        let cfg = population_config(&a.population, preset, sccsp::rng::mix(g.seed, &[p as u64, w as u64, l as u64, i as u64]));
        match sp_thresholds(model, chain, cfg, lo, hi, &search, true) {
            Ok(t) => {
                cells.push(Cell { quantity: names.0, parameter: p, w, l, value: Ok(t.sp) });
                let s = t.static_point.ok_or_else(|| "not searched".to_string());
                cells.push(Cell { quantity: names.1, parameter: p, w, l, value: s });
            }
            Err(e) => {
                cells.push(Cell { quantity: names.0, parameter: p, w, l, value: Err(e.to_string()) });
                cells.push(Cell { quantity: names.1, parameter: p, w, l, value: Err(e.to_string()) });
            }
        }
    }
    cells
}
