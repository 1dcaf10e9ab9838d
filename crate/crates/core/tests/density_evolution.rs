use proptest::prelude::*;
use sccsp::density_evolution::*;
use sccsp::ensembles::{sample, Boundary, ChainSpec, FactorGraph};

fn threshold(model: DeModel, w: usize, l: usize) -> f64 {
    let (lo, hi) = default_bracket(model);
    de_threshold(model, w, l, lo, hi, 1e-4, &SurvivalConfig::default()).unwrap().estimate
}

#[test]
fn leaf_removal_individual_thresholds() {
    // The individual threshold solves min_x −ln(1 − x^{1/(K−1)})/(Kx); computed here by a fine scan.
    for k in [3usize, 4, 5, 7] {
        let analytic = (1..200_000)
            .map(|i| i as f64 / 200_000.0)
            .map(|x| -(1.0 - x.powf(1.0 / (k as f64 - 1.0))).ln() / (k as f64 * x))
            .fold(f64::INFINITY, f64::min);
        let de = threshold(DeModel::LeafRemoval { k }, 1, 1);
        assert!((de - analytic).abs() < 2e-4, "K={k}: {de} vs {analytic}");
    }
    assert!((threshold(DeModel::LeafRemoval { k: 3 }, 1, 1) - 0.818).abs() < 2e-3);
    assert!((threshold(DeModel::LeafRemoval { k: 4 }, 1, 1) - 0.772).abs() < 2e-3);
}

#[test]
fn pure_literal_is_exactly_twice_leaf_removal() {
    for (w, l) in [(1, 1), (5, 80)] {
        // Doubling the bracket and tolerance makes every bisection midpoint exactly twice the other.
        let cfg = SurvivalConfig::default();
        let x = de_threshold(DeModel::LeafRemoval { k: 3 }, w, l, 0.3, 1.0, 1e-4, &cfg).unwrap().estimate;
        let p = de_threshold(DeModel::PureLiteral { k: 3 }, w, l, 0.6, 2.0, 2e-4, &cfg).unwrap().estimate;
        assert_eq!(p, 2.0 * x);
    }
}

#[test]
fn qcore_individual_thresholds() {
    for (q, want) in [(3usize, 3.35), (4, 5.14), (5, 6.79), (7, 9.87)] {
        let t = threshold(DeModel::QCore { q }, 1, 1);
        assert!((t - want).abs() < 1e-2, "Q={q}: {t}");
    }
}

#[test]
fn coupled_thresholds_exceed_individual() {
    let ind = threshold(DeModel::LeafRemoval { k: 4 }, 1, 1);
    let cou = threshold(DeModel::LeafRemoval { k: 4 }, 5, 40);
    assert!(ind < cou && cou < 0.98, "{ind} {cou}");
    let ind = threshold(DeModel::QCore { q: 3 }, 1, 1);
    let cou = threshold(DeModel::QCore { q: 3 }, 3, 20);
    assert!(ind < cou, "{ind} {cou}");
}

#[test]
fn iterates_from_the_top_decrease() {
    for (model, c) in [(DeModel::LeafRemoval { k: 3 }, 0.9), (DeModel::PureLiteral { k: 4 }, 1.6), (DeModel::QCore { q: 4 }, 5.5)] {
        let mut p = vec![model.top(c); 30];
        for _ in 0..500 {
            let n = model.update(&p, c, 3);
            assert!(n.iter().zip(&p).all(|(a, b)| *a <= b + 1e-15));
            p = n;
        }
    }
}

#[test]
fn tree_has_empty_core() {
    let edges: Vec<(usize, usize)> = (1..30).map(|v| (v, (v * 7) % v.max(1) / 2)).collect();
    let g = FactorGraph::coloring(3, 30, &edges).unwrap();
    let r = peel_qcore(&g, 3).unwrap();
    assert_eq!(r.core_size, 0);
    assert_eq!(r.rounds.iter().sum::<usize>(), 30);
    assert!(qcore_message_passing(&g, 3).unwrap().iter().all(|&b| !b));
}

#[test]
fn complete_graph_is_its_own_core() {
    let q = 4;
    let edges: Vec<(usize, usize)> = (0..=q).flat_map(|a| (a + 1..=q).map(move |b| (a, b))).collect();
    let g = FactorGraph::coloring(q, q + 1, &edges).unwrap();
    assert_eq!(peel_qcore(&g, q).unwrap().core_size, q + 1);
    assert!(qcore_message_passing(&g, q).unwrap().iter().all(|&b| b));
    // Removing one edge leaves two nodes of degree Q−1 and the whole graph peels.
    let g = FactorGraph::coloring(q, q + 1, &edges[1..]).unwrap();
    assert_eq!(peel_qcore(&g, q).unwrap().core_size, 0);
}

#[test]
fn qcore_emerges_near_the_de_threshold() {
    let n = 100_000;
    let emerged = |c: f64| {
        let spec = ChainSpec::qcol(3, n, c / 2.0, 1, 1, Boundary::Individual);
        let g = sample(&spec, 11).unwrap();
        peel_qcore(&g, 3).unwrap().core_size as f64 / n as f64 > 0.05
    };
    let grid: Vec<f64> = (0..=20).map(|i| 3.1 + 0.025 * i as f64).collect();
    let first = grid.iter().copied().find(|&c| emerged(c)).expect("core appears on the grid");
    assert!((first - 3.35).abs() <= 0.05, "{first}");
}

proptest! {
    #[test]
    fn peeling_and_messages_agree(n in 2usize..50, q in 3usize..5, edges in prop::collection::vec((0usize..50, 0usize..50), 0..120)) {
        let edges: Vec<(usize, usize)> = edges.into_iter().map(|(a, b)| (a % n, b % n)).collect();
        let g = FactorGraph::coloring(q, n, &edges).unwrap();
        prop_assert_eq!(peel_qcore(&g, q).unwrap().in_core, qcore_message_passing(&g, q).unwrap());
    }

    #[test]
    fn updates_are_monotone(base in prop::collection::vec(0.0f64..1.0, 12), bump in prop::collection::vec(0.0f64..0.5, 12), a in 0.5f64..1.2, w in 1usize..4) {
        let hi: Vec<f64> = base.iter().zip(&bump).map(|(b, d)| (b + d).min(1.0)).collect();
        for model in [DeModel::LeafRemoval { k: 3 }, DeModel::PureLiteral { k: 5 }] {
            let u0 = model.update(&base, 2.0 * a, w);
            let u1 = model.update(&hi, 2.0 * a, w);
            prop_assert!(u0.iter().zip(&u1).all(|(x, y)| x <= y && *y <= 1.0 && *x >= 0.0));
        }
        let c = 8.0 * a;
        let (y0, y1): (Vec<f64>, Vec<f64>) = (base.iter().map(|v| v * c).collect(), hi.iter().map(|v| v * c).collect());
        let u0 = qcore_update(&y0, c, 4, w);
        let u1 = qcore_update(&y1, c, 4, w);
        prop_assert!(u0.iter().zip(&u1).all(|(x, y)| x <= y && *y <= c));
    }
}
