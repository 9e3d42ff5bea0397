use bayescub::data::DataFiles;
use bayescub::inference::{Criterion, FastModel};
use bayescub::kernels::{KernelFamily, KernelSpec, LagSource};
use bayescub::nodes::{Family, LatticeGenerator, SobolGenerator};
use bayescub::selftest::{compare_dense_fast, probe_integrand};
use bayescub::transforms::{fbt, fbt_double};
use proptest::prelude::*;

fn kernel(k: usize) -> (KernelFamily, f64) {
    [
        (KernelFamily::Bernoulli, 1.0),
        (KernelFamily::Bernoulli, 2.0),
        (KernelFamily::TruncatedSeries, 1.5),
        (KernelFamily::TruncatedSeries, 2.5),
        (KernelFamily::Walsh, 1.0),
    ][k]
}

fn criterion(k: usize) -> Criterion {
    [Criterion::Eb, Criterion::Full, Criterion::Gcv][k]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn fast_path_matches_dense_formulas(
        k in 0usize..5,
        c in 0usize..3,
        d in 1usize..=3,
        m in 3u32..=6,
        log_eta in proptest::collection::vec(-3.0f64..3.0, 3),
        per_dim in any::<bool>(),
        seed in 0u64..1000,
    ) {
        let (family, order) = kernel(k);
        let len = if per_dim { d } else { 1 };
        let eta: Vec<f64> = log_eta[..len].iter().map(|t| t.exp()).collect();
        let spec = KernelSpec::new(family, order, eta).unwrap();
        let gap = compare_dense_fast(&DataFiles::embedded(), &spec, d, 1 << m, seed, criterion(c)).unwrap();
        prop_assert!(gap.max() <= 1e-8, "{:?}", gap);
    }

    #[test]
    fn shared_gradient_is_sum_of_coordinates(
        k in 0usize..5,
        c in 0usize..3,
        d in 2usize..=4,
        t in -2.0f64..2.0,
        seed in 0u64..1000,
    ) {
        let (family, order) = kernel(k);
        let data = DataFiles::embedded();
        let n = 64;
        let (lags, pts) = if family == KernelFamily::Walsh {
            let g = SobolGenerator::from_data(&data, d, seed, true).unwrap();
            (LagSource::sobol(&g), g.points(0, n).unwrap())
        } else {
            let g = LatticeGenerator::from_data(&data, d, seed).unwrap();
            (LagSource::lattice(&g), g.points(0, n).unwrap())
        };
        let y: Vec<f64> = pts.iter().map(probe_integrand).collect();
        let yt = fbt(lags.family(), &y).unwrap();
        let per = FastModel { lags: &lags, y_tilde: &yt, family, order, criterion: criterion(c), eta_count: d, search_order: false };
        let shared = FastModel { eta_count: 1, ..per };
        let (v1, gp) = per.value_and_gradient(&vec![t; d]).unwrap();
        let (v2, gs) = shared.value_and_gradient(&[t]).unwrap();
        prop_assert!((v1 - v2).abs() <= 1e-12 * v1.abs().max(1.0));
        let sum: f64 = gp.iter().sum();
        prop_assert!((sum - gs[0]).abs() <= 1e-9 * gs[0].abs().max(1e-3), "{} vs {}", sum, gs[0]);
    }

    #[test]
    fn transforms_keep_energy(y in proptest::collection::vec(-10.0f64..10.0, 1..=256usize), lattice in any::<bool>()) {
        let n = y.len().next_power_of_two();
        let mut y = y;
        y.resize(n, 0.5);
        let family = if lattice { Family::Lattice } else { Family::Sobol };
        let yt = fbt(family, &y).unwrap();
        let energy: f64 = (0..n).map(|i| yt.abs2(i)).sum();
        let direct: f64 = y.iter().map(|v| v * v).sum::<f64>() * n as f64;
        prop_assert!((energy - direct).abs() <= 1e-12 * direct.max(1.0));
    }

    #[test]
    fn doubling_matches_direct_transform(y in proptest::collection::vec(-5.0f64..5.0, 64), lattice in any::<bool>()) {
        let family = if lattice { Family::Lattice } else { Family::Sobol };
        let first = fbt(family, &y[..32]).unwrap();
        let doubled = fbt_double(&first, &y[32..]).unwrap();
        let direct = fbt(family, &y).unwrap();
        for i in 0..64 {
            let diff = match (&doubled, &direct) {
                (bayescub::transforms::Spectrum::Lattice(a), bayescub::transforms::Spectrum::Lattice(b)) => (a[i] - b[i]).norm(),
                (bayescub::transforms::Spectrum::Sobol(a), bayescub::transforms::Spectrum::Sobol(b)) => (a[i] - b[i]).abs(),
                _ => f64::INFINITY,
            };
            prop_assert!(diff <= 1e-12 * 64.0 * 5.0);
        }
    }

    #[test]
    fn ring_ratio_is_free_of_cancellation(log_eta in -8.0f64..-3.0, m in 10u32..=14, seed in 0u64..100) {
        // n/λ₁ sits within 1e-12 of one throughout this range
        let n = 1usize << m;
        let data = DataFiles::embedded();
        let gen = LatticeGenerator::from_data(&data, 1, seed).unwrap();
        let lags = LagSource::lattice(&gen);
        let y: Vec<f64> = gen.points(0, n as u64).unwrap().iter().map(probe_integrand).collect();
        let yt = fbt(Family::Lattice, &y).unwrap();
        let eta = 10f64.powf(log_eta);
        let spec = KernelSpec::new(KernelFamily::Bernoulli, 1.0, vec![eta]).unwrap();
        let model = FastModel { lags: &lags, y_tilde: &yt, family: KernelFamily::Bernoulli, order: 1.0, criterion: Criterion::Eb, eta_count: 1, search_order: false };
        let td = model.transformed(&spec).unwrap();
        // Σ_j B₂(j/n) = 1/(6n) exactly, so λ̊₁ = η/(6n)
        let ring1 = eta / (6.0 * n as f64);
        let exact = ring1 / (n as f64 + ring1);
        let got = td.lambda_ring_1() / td.lambda_1();
        prop_assert!((got - exact).abs() <= 1e-6 * exact, "{} vs {}", got, exact);
    }
}
