use sccsp::scalar_field::*;

fn converged_ksat(k: usize, w: usize, l: usize, target: f64) -> (KsatField, VdwPoint) {
    let m = KsatField::new(k, w, l);
    let grid = descending_grid(3.0 * target, 0.02)
        .into_iter()
        .filter(|&t| t >= target)
        .chain(std::iter::once(target))
        .collect::<Vec<_>>();
    let pts = trace_vdw(&m, &grid, &VdwConfig::default());
    (m, pts.last().unwrap().clone())
}

#[test]
fn ksat_functional_is_stationary_at_fixed_points() {
    let (m, p) = converged_ksat(5, 3, 20, 1.2);
    assert!(p.converged);
    let h = 1e-6;
    for z in 1..m.l - 1 {
        let mut a = p.profile.clone();
        let mut b = p.profile.clone();
        a[z] += h;
        b[z] -= h;
        let ga = m.complexity(&a, p.control).total * m.l as f64;
        let gb = m.complexity(&b, p.control).total * m.l as f64;
        let grad = (ga - gb) / (2.0 * h);
        assert!(grad.abs() < 1e-4, "z={z} grad={grad}");
    }
}

fn curve<M: FieldModel>(m: &M, grid: &[f64]) -> Vec<VdwPoint> {
    trace_vdw(m, grid, &VdwConfig::default())
}

#[test]
fn rescaled_update_matches_unrescaled_pair() {
    // x_u = (αK/2w) Σ_k y_{u−k},  y_z = {(1/w) Σ_l (e^x − 1)/(2e^x − 1)}^{K−1},  φ = 2^{K−1} α̂ K y.
    let (k, w, l) = (6usize, 3usize, 12usize);
    let alpha_hat = 0.61;
    let alpha = alpha_hat * 2f64.powi(k as i32);
    let scale = 2f64.powi(k as i32 - 1) * alpha_hat * k as f64;
    let m = KsatField::new(k, w, l);
    for seed in 0..20u64 {
        let phi: Vec<f64> = (0..l).map(|z| ((z as u64 * 7919 + seed * 104729) % 1000) as f64 / 200.0).collect();
        let y: Vec<f64> = phi.iter().map(|p| p / scale).collect();
        let x: Vec<f64> = (0..l + w - 1)
            .map(|u| (0..w).filter(|&kk| u >= kk && u - kk < l).map(|kk| y[u - kk]).sum::<f64>() * alpha * k as f64 / (2.0 * w as f64))
            .collect();
        let y_new: Vec<f64> = (0..l)
            .map(|z| ((0..w).map(|ll| (x[z + ll].exp() - 1.0) / (2.0 * x[z + ll].exp() - 1.0)).sum::<f64>() / w as f64).powi(k as i32 - 1))
            .collect();
        let via_pair: Vec<f64> = y_new.iter().map(|v| v * scale).collect();
        let direct = m.update(&phi, alpha_hat);
        for (a, b) in via_pair.iter().zip(&direct) {
            assert!((a - b).abs() <= 1e-13 * b.abs().max(1.0), "{a} vs {b}");
        }
    }
}

#[test]
fn converged_points_have_small_residual_and_exact_mean() {
    let m = KsatField::new(5, 3, 20);
    let pts = curve(&m, &descending_grid(4.0, 0.05));
    let q = QcolField::new(7, 2, 20);
    let qpts = curve(&q, &descending_grid(3.5, 0.05));
    for (p, r) in pts.iter().map(|p| (p, m.residual(&p.profile, p.control))).chain(qpts.iter().map(|p| (p, q.residual(&p.profile, p.control)))) {
        assert!(p.converged, "target {}", p.target);
        assert!(r < 1e-10 && p.residual < 1e-10, "residual {r}");
        let mean = p.profile.iter().sum::<f64>() / p.profile.len() as f64;
        assert!((mean - p.target).abs() < 1e-9);
        assert!(p.profile.iter().all(|&v| v >= 0.0 && v.is_finite()));
    }
}

#[test]
fn large_profile_decreases_monotonically() {
    let m = KsatField::new(5, 3, 20);
    let mut p = vec![20.0; 20];
    for _ in 0..200 {
        let n = m.update(&p, 0.6);
        assert!(n.iter().zip(&p).all(|(a, b)| a <= &(b + 1e-12)));
        p = n;
    }
}

#[test]
fn ksat_individual_sp_values() {
    for (k, want) in [(5, 0.513), (7, 0.449), (10, 0.370)] {
        let (_, a) = KsatField::individual_sp(k);
        assert!((a - want).abs() < 2e-3, "K={k}: {a}");
    }
    let (phi, _) = KsatField::individual_sp(10);
    let asym = (0.5 * 10.0 * 10f64.ln()).ln();
    assert!((phi - asym).abs() < 0.5, "{phi} vs {asym}");
}

#[test]
fn thresholds_trend_with_k_and_q() {
    let s: Vec<f64> = [5, 7, 10].iter().map(|&k| KsatField::individual_static(k)).collect();
    assert!(s[0] < s[1] && s[1] < s[2] && s[2] < 2f64.ln());
    let sp: Vec<f64> = [5, 7, 10].iter().map(|&k| KsatField::individual_sp(k).1).collect();
    assert!(sp[0] > sp[1] && sp[1] > sp[2]);
    let cs: Vec<f64> = [5, 7, 10].iter().map(|&q| QcolField::individual_static(q)).collect();
    assert!(cs[0] < cs[1] && cs[1] < cs[2] && cs[2] < 2.0);
}

#[test]
fn qcol_individual_values() {
    for (q, sp, st) in [(5, 1.6411666, 1.840980), (7, 1.651565, 1.911260)] {
        assert!((QcolField::individual_sp(q).1 - sp).abs() < 1e-5);
        assert!((QcolField::individual_static(q) - st).abs() < 1e-5);
    }
}

#[test]
fn curves_approach_individual_curve_for_large_field() {
    let m = KsatField::new(5, 3, 40);
    let pts = curve(&m, &descending_grid(12.0, 0.25));
    let top = &pts[0];
    let ind = KsatField::alpha_of_phi(5, top.target);
    let far = &pts[pts.len() / 2];
    assert!((top.control - ind).abs() < (far.control - KsatField::alpha_of_phi(5, far.target)).abs());
    assert!((top.control - ind).abs() / ind < 0.05);
}

#[test]
fn longer_chains_sit_lower() {
    let grid = descending_grid(4.0, 0.0175);
    let curves: Vec<Vec<VdwPoint>> = [10usize, 20, 40, 80].iter().map(|&l| curve(&KsatField::new(5, 3, l), &grid)).collect();
    let mst = KsatField::phi_mst(5, KsatField::individual_static(5)).unwrap();
    for pair in curves.windows(2) {
        // Above the plateau the curves are ordered pointwise.
        for (a, b) in pair[0].iter().zip(&pair[1]).filter(|(a, _)| a.target > 1.1 * mst) {
            assert!(b.control <= a.control + 1e-12, "at {}: {} > {}", a.target, b.control, a.control);
        }
    }
    let minima: Vec<f64> = [10usize, 20, 40, 80]
        .iter()
        .map(|&l| {
            let m = KsatField::new(5, 3, l);
            vdw_minimum(&curve(&m, &kink_resolving_grid(&m, KsatField::individual_static(5)))).unwrap().control
        })
        .collect();
    assert!(minima.windows(2).all(|p| p[1] <= p[0] + 1e-6), "{minima:?}");
}

#[test]
fn wiggles_shrink_with_window() {
    let amp: Vec<f64> = [3usize, 5, 7]
        .iter()
        .map(|&w| {
            let m = KsatField::new(5, w, 80);
            let pts = curve(&m, &kink_resolving_grid(&m, KsatField::individual_static(5)));
            kink_diagnostics(&pts, &m).wiggle_amplitude
        })
        .collect();
    assert!(amp[0] > amp[1] && amp[1] > amp[2], "{amp:?}");
}

#[test]
fn kink_deviation_is_a_surface_term() {
    let surf: Vec<f64> = [40usize, 80]
        .iter()
        .map(|&l| {
            let m = KsatField::new(5, 3, l);
            let pts = curve(&m, &kink_resolving_grid(&m, KsatField::individual_static(5)));
            let rep = kink_diagnostics(&pts, &m);
            assert!(!rep.points.is_empty());
            rep.points.iter().map(|p| p.surface_term).sum::<f64>() / rep.points.len() as f64
        })
        .collect();
    assert!(((surf[0] - surf[1]) / surf[1]).abs() < 0.1, "{surf:?}");
}

#[test]
fn individual_system_has_no_plateau() {
    let m = KsatField::individual(5);
    let pts = curve(&m, &descending_grid(4.0, 0.1));
    assert!(kink_diagnostics(&pts, &m).points.is_empty());
}
