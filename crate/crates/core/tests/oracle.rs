use sccsp::ensembles::{sample, Boundary, ChainSpec, Problem};
use sccsp::oracle::*;

#[test]
fn branch_and_bound_agrees_with_enumeration() {
    for seed in 0..200 {
        let g = sample(&ChainSpec::ksat(3, 5, 4.0, 1, 1, Boundary::Individual), seed).unwrap();
        let brute = brute_force(&g).unwrap();
        assert_eq!(branch_and_bound(&g).unwrap(), (brute.min_energy, brute.minimizers), "seed {seed}");
        assert_eq!(exact_minimum(&g).unwrap(), brute.min_energy);
        assert!(brute.clusters >= 1 && brute.clusters <= brute.minimizers);
    }
}

#[test]
fn chain_minimum_matches_enumeration() {
    for (i, spec) in [
        ChainSpec::ksat(3, 2, 3.0, 2, 4, Boundary::Open),
        ChainSpec::ksat(3, 2, 3.0, 2, 4, Boundary::Periodic),
        ChainSpec::qcol(3, 2, 2.5, 2, 4, Boundary::Open),
        ChainSpec::xorsat(3, 2, 1.5, 3, 4, Boundary::Ring),
    ]
    .iter()
    .enumerate()
    {
        for seed in 0..25 {
            let g = sample(spec, 100 * i as u64 + seed).unwrap();
            assert_eq!(exact_minimum(&g).unwrap(), brute_force(&g).unwrap().min_energy);
        }
    }
}

#[test]
fn energy_density_grows_with_alpha() {
    let e = |a: f64| estimate_e(&ChainSpec::ksat(3, 3, a, 2, 4, Boundary::Open), 400, 9).unwrap().mean;
    let (lo, mid, hi) = (e(1.0), e(4.0), e(8.0));
    assert!(lo <= mid && mid < hi, "{lo} {mid} {hi}");
}

#[test]
fn theorem1_holds_at_small_sample() {
    let r = theorem1_check(Problem::Ksat, 3, &[2.0, 6.0], 3, 2, 4, 300, 4).unwrap();
    assert!(r.all_pass(), "{r:?}");
    let r = theorem1_check(Problem::Qcol, 3, &[1.0, 3.0], 3, 2, 4, 300, 4).unwrap();
    assert!(r.all_pass(), "{r:?}");
}

#[test]
fn oversized_instances_are_rejected() {
    let g = sample(&ChainSpec::ksat(3, 30, 1.0, 1, 1, Boundary::Individual), 1).unwrap();
    assert!(brute_force(&g).is_err());
}
