use bayescub::cubature::{integrate_dense, integrate_fast, CubatureConfig, EtaMode};
use bayescub::inference::{credible_width, dense_posterior, Criterion, FastModel};
use bayescub::kernels::{KernelFamily, KernelSpec, LagSource};
use bayescub::nodes::{Family, LatticeGenerator};
use bayescub::problems::{genz_mvn_problem, keister_problem, mvn_example};
use bayescub::selftest::dense_ring_gram;
use bayescub::transforms::fbt;
use bayescub::data::DataFiles;

#[test]
fn keister_meets_tolerance_over_seeds() {
    let p = keister_problem(4).unwrap();
    let mu = p.reference.unwrap().value;
    let eps = 1e-3;
    let hits = (0..100)
        .filter(|&seed| {
            let cfg = CubatureConfig { periodizer: p.periodizer, ..CubatureConfig::lattice(Criterion::Eb, eps, 2.0, seed) };
            let r = integrate_fast(&*p.f, 4, &cfg).unwrap();
            (r.mu_hat - mu).abs() <= eps
        })
        .count();
    assert!(hits >= 95, "{hits}/100");
}

#[test]
fn dense_matern_mvn_meets_tolerance() {
    let (a, b, l) = mvn_example();
    let p = genz_mvn_problem(&a, &b, &l).unwrap();
    let mu = p.reference.unwrap().value;
    let eps = 1e-2;
    let hits = (0..100)
        .filter(|&seed| {
            let cfg = CubatureConfig { periodizer: p.periodizer, ..CubatureConfig::matern(Criterion::Eb, eps, seed) };
            let r = integrate_dense(&*p.f, p.d, &cfg, &[]).unwrap();
            (r.mu_hat - mu).abs() <= eps
        })
        .count();
    assert!(hits >= 90, "{hits}/100");
}

#[test]
fn general_dense_route_matches_fast_path() {
    // explicit C = 1 + C̊ with c = 1, c₀ = 1, no Sherman-Morrison
    let n = 32;
    let gen = LatticeGenerator::from_data(&DataFiles::embedded(), 2, 21).unwrap();
    let pts = gen.points(0, n as u64).unwrap();
    let y: Vec<f64> = pts.iter().map(|x| (x[0] * 2.0).exp() * (1.0 + x[1])).collect();
    let spec = KernelSpec::new(KernelFamily::Bernoulli, 2.0, vec![3.0, 5.0]).unwrap();
    let ring = dense_ring_gram(&spec, &pts).unwrap();
    let gram: Vec<f64> = ring.iter().map(|v| 1.0 + v).collect();
    let lags = LagSource::lattice(&gen);
    let yt = fbt(Family::Lattice, &y).unwrap();
    for criterion in [Criterion::Eb, Criterion::Full, Criterion::Gcv] {
        let model = FastModel { lags: &lags, y_tilde: &yt, family: KernelFamily::Bernoulli, order: 2.0, criterion, eta_count: 2, search_order: false };
        let td = model.transformed(&spec).unwrap();
        let dense = dense_posterior(&y, &gram, &vec![1.0; n], 1.0, criterion).unwrap();
        let mean = y.iter().sum::<f64>() / n as f64;
        assert!((dense.mu_hat - mean).abs() <= 1e-10 * mean.abs(), "{criterion:?}");
        let w = credible_width(criterion, &td).unwrap();
        assert!((dense.err - w).abs() <= 1e-8 * w, "{criterion:?}: {} vs {w}", dense.err);
    }
}

#[test]
fn affine_maps_of_the_integrand() {
    // μ̂ and err move with f ↦ a f + b; the stopping n stays put. The data are
    // kept rough (no periodizer) so the high-frequency coefficients stay well
    // above the transform's round-off, which the shift b perturbs.
    let p = keister_problem(3).unwrap();
    let (a, b) = (-4.0, 7.5);
    let g = |x: &[f64]| a * (p.f)(x) + b;
    for eta_mode in [EtaMode::Shared, EtaMode::PerDimension] {
        let cfg = CubatureConfig { eta_mode, n_max: 1 << 12, ..CubatureConfig::lattice(Criterion::Eb, 1e-9, 1.0, 3) };
        let base = integrate_fast(&*p.f, 3, &cfg).unwrap();
        let moved = integrate_fast(&g, 3, &cfg).unwrap();
        assert_eq!(base.n_used, moved.n_used);
        assert!((moved.mu_hat - (a * base.mu_hat + b)).abs() < 1e-10 * moved.mu_hat.abs());
        assert!((moved.err - a.abs() * base.err).abs() < 1e-6 * moved.err, "{eta_mode:?}: {} vs {}", moved.err, base.err);
    }
}

#[test]
fn reported_error_bounds_actual_error_on_easy_problem() {
    let p = keister_problem(2).unwrap();
    let mu = p.reference.unwrap().value;
    for seed in 0..10 {
        let cfg = CubatureConfig { periodizer: p.periodizer, ..CubatureConfig::lattice(Criterion::Gcv, 1e-5, 2.0, seed) };
        let r = integrate_fast(&*p.f, 2, &cfg).unwrap();
        assert!(r.tolerance_met && r.err <= 1e-5);
        assert!((r.mu_hat - mu).abs() <= 1e-5, "seed {seed}");
    }
}
