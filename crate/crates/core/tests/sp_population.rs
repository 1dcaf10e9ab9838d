use proptest::prelude::*;
use sccsp::ensembles::{Boundary, Constraint, FactorGraph, Problem};
use sccsp::oracle::{enumerate_minsum_states, random_tree_instance};
use sccsp::sp_population::*;

fn small(seed: u64) -> PopulationConfig {
    PopulationConfig { size: 2000, burn_in: 60, measure_sweeps: 4, measure_samples: 2000, ..PopulationConfig::paper(seed) }
}

#[test]
fn trivial_population_is_a_fixed_point_with_zero_complexity() {
    let mut k = KsatPopulation::new(3, 4.2, Chain::open(3, 8), 500, InitPolicy::Trivial, 1).unwrap();
    let mut q = QcolPopulation::new(4, 9.0, Chain::open(2, 8), 500, InitPolicy::Trivial, 1).unwrap();
    for _ in 0..5 {
        k.sweep(1);
        q.sweep(1);
    }
    assert_eq!(k.mean_q_hat(), 0.0);
    assert_eq!(q.mean_q_hat(), 0.0);
    let run = run_population(&mut k, &small(1));
    assert!(run.collapsed);
    assert_eq!(run.estimate.total, 0.0);
    assert!(run.estimate.per_position.iter().all(|&s| s == 0.0));
}

#[test]
fn populations_stay_in_range() {
    let mut k = KsatPopulation::new(3, 4.2, Chain::open(3, 6), 2000, InitPolicy::Uniform, 3).unwrap();
    let mut q = QcolPopulation::new(3, 4.6, Chain::open(2, 6), 2000, InitPolicy::Forced, 3).unwrap();
    for _ in 0..20 {
        k.sweep(3);
        q.sweep(3);
        assert!(k.q_hat.iter().flatten().all(|&h| (0.0..=1.0).contains(&h)));
        assert!(k.q_pm.iter().flatten().all(|&(p, m)| (0.0..=1.0).contains(&p) && (0.0..=1.0).contains(&m)));
        assert!(q.q_hat.iter().flatten().all(|&h| (0.0..=1.0 / 3.0).contains(&h)));
    }
    assert_eq!(k.counters.closure_violations, 0);
    assert_eq!(q.counters.closure_violations, 0);
}

#[test]
fn individual_ksat_complexity_signs() {
    let below = run_population_dynamics(SpModel::Ksat { k: 3 }, 3.6, Chain::individual(), &small(5)).unwrap();
    assert!(below.collapsed && below.estimate.total == 0.0);
    let inside = run_population_dynamics(SpModel::Ksat { k: 3 }, 4.1, Chain::individual(), &small(5)).unwrap();
    assert!(!inside.collapsed);
    let above = run_population_dynamics(SpModel::Ksat { k: 3 }, 4.8, Chain::individual(), &small(5)).unwrap();
    assert!(!above.collapsed);
    assert!(above.estimate.total < -3.0 * above.estimate.total_stderr, "{:?}", above.estimate);
}

#[test]
fn periodic_chain_is_translation_invariant() {
    let run = run_population_dynamics(SpModel::Ksat { k: 3 }, 4.2, Chain::periodic(3, 6), &small(7)).unwrap();
    assert!(!run.collapsed);
    let mean = run.profile.iter().sum::<f64>() / run.profile.len() as f64;
    for &p in &run.profile {
        assert!((p - mean).abs() < 0.02, "{:?}", run.profile);
    }
    assert_eq!(run.estimate.per_position.len(), 6);
}

#[test]
fn open_chain_reports_boundary_variable_positions() {
    let run = run_population_dynamics(SpModel::Ksat { k: 3 }, 4.3, Chain::open(3, 8), &small(2)).unwrap();
    assert_eq!(run.profile.len(), 8);
    assert_eq!(run.estimate.per_position.len(), 10);
    let total: f64 = run.estimate.per_position.iter().sum::<f64>() / 8.0;
    assert!((total - run.estimate.total).abs() < 1e-12);
}

#[test]
fn same_seed_reproduces_and_seeds_agree_statistically() {
    let a = run_population_dynamics(SpModel::Ksat { k: 3 }, 4.1, Chain::individual(), &small(11)).unwrap();
    let b = run_population_dynamics(SpModel::Ksat { k: 3 }, 4.1, Chain::individual(), &small(11)).unwrap();
    assert_eq!(a.estimate.total.to_bits(), b.estimate.total.to_bits());
    let c = run_population_dynamics(SpModel::Ksat { k: 3 }, 4.1, Chain::individual(), &small(12)).unwrap();
    let se = a.estimate.total_stderr.hypot(c.estimate.total_stderr);
    assert!((a.estimate.total - c.estimate.total).abs() < 3.0 * se + 1e-3, "{:?} {:?}", a.estimate, c.estimate);
}

#[test]
fn thread_count_does_not_change_results() {
    let run = |threads: usize| {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .unwrap()
            .install(|| run_population_dynamics(SpModel::Qcol { q: 3 }, 4.6, Chain::open(2, 4), &small(9)).unwrap())
    };
    let one = run(1);
    let four = run(4);
    assert_eq!(one.estimate.total.to_bits(), four.estimate.total.to_bits());
    assert_eq!(one.profile, four.profile);
}

fn unit_clauses(n: usize, clauses: &[(usize, u32)]) -> FactorGraph {
    let cons = clauses.iter().map(|&(v, p)| Constraint { position: 0, vars: vec![v], payload: p }).collect();
    FactorGraph::from_constraints(Problem::Ksat, 1, 2, n, clauses.len(), 1, 1, Boundary::Individual, 0, cons).unwrap()
}

#[test]
fn single_clause_sends_no_warning() {
    let g = FactorGraph::from_constraints(
        Problem::Ksat,
        3,
        2,
        3,
        1,
        1,
        1,
        Boundary::Individual,
        0,
        vec![Constraint { position: 0, vars: vec![0, 1, 2], payload: 0b101 }],
    )
    .unwrap();
    let sp = instance_sp_ksat(&g, 100).unwrap();
    assert!(sp.converged);
    assert!(sp.q_hat.iter().all(|&h| h == 0.0));
    assert_eq!(sp.log_states, 0.0);
    assert_eq!(enumerate_minsum_states(&g).unwrap(), 1);
}

#[test]
fn instance_sp_counts_states_on_trees() {
    for seed in 0..60 {
        let g = random_tree_instance(Problem::Ksat, 5, seed).unwrap();
        if 2 * g.num_edges() > 14 {
            continue;
        }
        let sp = instance_sp_ksat(&g, 200).unwrap();
        let count = enumerate_minsum_states(&g).unwrap();
        assert!(sp.converged);
        assert_eq!(sp.log_states.exp().round() as u64, count, "seed {seed}");
    }
    // Unit clauses: agreeing ones freeze the variable, opposing ones leave no state.
    let agree = unit_clauses(2, &[(0, 0), (0, 0), (1, 1)]);
    assert_eq!(enumerate_minsum_states(&agree).unwrap(), 1);
    assert_eq!(instance_sp_ksat(&agree, 50).unwrap().log_states.exp(), 1.0);
    let clash = unit_clauses(1, &[(0, 0), (0, 1)]);
    assert_eq!(enumerate_minsum_states(&clash).unwrap(), 0);
    assert_eq!(instance_sp_ksat(&clash, 50).unwrap().log_states.exp(), 0.0);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn ksat_ratio_is_a_probability(qp in 0.0..=1.0f64, qm in 0.0..=1.0f64) {
        let mut c = Counters::default();
        let r = ksat_ratio(qp, qm, &mut c);
        prop_assert!((0.0..=1.0).contains(&r));
    }

    #[test]
    fn one_sweep_preserves_range(alpha in 0.5..6.0f64, c in 0.5..10.0f64, seed in 0u64..1000) {
        let mut k = KsatPopulation::new(3, alpha, Chain::open(2, 4), 200, InitPolicy::Uniform, seed).unwrap();
        k.sweep(seed);
        prop_assert!(k.q_hat.iter().flatten().all(|&h| (0.0..=1.0).contains(&h)));
        let mut q = QcolPopulation::new(4, c, Chain::open(2, 4), 200, InitPolicy::Uniform, seed).unwrap();
        q.sweep(seed);
        prop_assert!(q.q_hat.iter().flatten().all(|&h| (0.0..=0.25).contains(&h)));
    }
}
