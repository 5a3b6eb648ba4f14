use kfvfgo_core::bench::{self, Estimator, EstimatorParams, SetupOverrides};
use kfvfgo_core::fgo::{self, Factor, FactorGraph, MeasurementFactor, PriorFactor, SolverOptions};
use kfvfgo_core::kfv::{self, KfvKind, KfvVariant};
use kfvfgo_core::linalg;
use kfvfgo_core::model::{GaussianBelief, JacobianMode, MeasurementModel, ProcessModel, StateVector};
use kfvfgo_core::sim::{self, DataScheme, SchemeName, SeededRng};
use nalgebra::DMatrix;
use proptest::prelude::*;

fn est(name: &str) -> Estimator {
    Estimator::from_name(name, &EstimatorParams::default()).unwrap()
}

/// Runs a filter and its graph counterpart epoch by epoch, comparing beliefs.
fn worst_covariance_gap(kind: KfvKind, options: SolverOptions, scheme: SchemeName, seed: u64) -> (f64, f64) {
    let ds = sim::generate_dataset(&DataScheme::named(scheme), seed).unwrap();
    let setup = SetupOverrides::default().setup_for(&ds.scheme).unwrap();
    let meas = setup.measurement_model(&ds.anchors).unwrap();
    let variant = KfvVariant::default_for(kind);
    let mut belief = setup.init.clone();
    let mut prior = PriorFactor::from_belief(0, &setup.init).unwrap();
    let (mut cov_gap, mut info_gap): (f64, f64) = (0.0, 0.0);
    for z in &ds.ranges {
        let predicted = kfv::kf_predict(&belief, &setup.process).unwrap();
        let (post, _) = kfv::update(&variant, &predicted, &meas, z).unwrap();
        let (next, fg, _) = fgo::refgo_step(&prior, &setup.process, &meas, z, &options).unwrap();
        cov_gap = cov_gap.max((fg.covariance() - post.covariance()).norm());
        let p_inv = linalg::spd_inverse(post.covariance(), "P+").unwrap();
        info_gap = info_gap.max((next.information() - &p_inv).norm() / p_inv.norm());
        belief = post;
        prior = next;
    }
    (cov_gap, info_gap)
}

#[test]
fn graph_covariance_matches_filter_covariance() {
    let configs = [
        (KfvKind::Ekf, SolverOptions::fg_ekf()),
        (KfvKind::Iekf, SolverOptions::fg_iekf()),
        (KfvKind::Rekf, SolverOptions::fg_rekf()),
        (KfvKind::Riekf, SolverOptions::fg_riekf()),
    ];
    for scheme in SchemeName::ALL {
        for seed in 1..=5 {
            for (kind, options) in configs {
                let (cov, info) = worst_covariance_gap(kind, options, scheme, seed);
                assert!(cov <= 1e-8, "{kind:?} {scheme} seed {seed}: covariance gap {cov:e}");
                assert!(info <= 1e-8, "{kind:?} {scheme} seed {seed}: information gap {info:e}");
            }
        }
    }
}

#[test]
fn mismatched_configurations_differ() {
    let ds = sim::generate_dataset(&DataScheme::named(SchemeName::NonlinearNonGaussian), 1).unwrap();
    let setup = SetupOverrides::default().setup_for(&ds.scheme).unwrap();
    let a = est("ekf").run(&ds, &setup).unwrap();
    let b = est("fg-iekf").run(&ds, &setup).unwrap();
    let (_, diff) = bench::traj_difference(&a, &b, &ds).unwrap();
    assert!(diff > 1e-6, "{diff:e}");
}

#[test]
fn ad_pipeline_matches_analytic_on_window_smoother() {
    let ds = sim::generate_dataset(&DataScheme::named(SchemeName::NonlinearNonGaussian).with_epochs(40), 9).unwrap();
    let setup = SetupOverrides::default().setup_for(&ds.scheme).unwrap();
    let an = fgo::run_swfgo(3, &SolverOptions::fg_iekf(), &ds, &setup, "a").unwrap();
    let ad = fgo::run_swfgo(
        3,
        &SolverOptions::fg_iekf().with_jacobian(JacobianMode::AutoDiff),
        &ds,
        &setup,
        "a",
    )
    .unwrap();
    let worst = bench::state_differences(&an, &ad).unwrap().into_iter().fold(0.0, f64::max);
    assert!(worst <= 1e-12, "{worst:e}");
}

#[test]
fn ad_jacobian_matches_finite_differences() {
    let anchors = sim::place_anchors(105.0, 4).unwrap();
    let model = MeasurementModel::toa_isotropic(anchors, 0.1).unwrap();
    let mut rng = SeededRng::new(77);
    let h = 1e-6;
    for _ in 0..1000 {
        let s = StateVector::new(
            600.0 * rng.uniform() - 300.0,
            600.0 * rng.uniform() - 300.0,
            10.0 * rng.uniform() - 5.0,
            10.0 * rng.uniform() - 5.0,
        );
        let (_, ad) = model.predict_with_jacobian(&s, JacobianMode::AutoDiff).unwrap();
        for j in 0..4 {
            let mut plus = s.as_array();
            let mut minus = s.as_array();
            plus[j] += h;
            minus[j] -= h;
            let fp = model.predict(&StateVector::try_from_slice(&plus).unwrap()).unwrap();
            let fm = model.predict(&StateVector::try_from_slice(&minus).unwrap()).unwrap();
            let fd = (fp - fm) / (2.0 * h);
            for i in 0..fd.len() {
                assert!((fd[i] - ad[(i, j)]).abs() <= 1e-5);
            }
        }
    }
}

fn toa_graph(scale: f64, seed: u64) -> (FactorGraph, StateVector) {
    let mut rng = SeededRng::new(seed);
    let anchors = sim::place_anchors(105.0, 4).unwrap();
    let noise = DMatrix::identity(4, 4) * (0.01 * scale);
    let model = MeasurementModel::toa(anchors, noise).unwrap();
    let mean = StateVector::new(20.0 * rng.uniform(), 20.0 * rng.uniform(), 1.0, -1.0);
    let cov = DMatrix::from_diagonal(&nalgebra::DVector::from_vec(vec![9.0, 9.0, 1.0, 1.0])) * scale;
    let belief = GaussianBelief::new(mean, cov).unwrap();
    let truth = StateVector::new(mean.px() + 2.0, mean.py() - 1.0, 0.0, 0.0);
    let mut z = model.predict(&truth).unwrap();
    for v in z.iter_mut() {
        *v += 0.1 * rng.standard_normal();
    }
    let mut g = FactorGraph::new();
    g.add_variable(mean);
    g.add_factor(Factor::Prior(PriorFactor::from_belief(0, &belief).unwrap())).unwrap();
    g.add_factor(Factor::Measurement(MeasurementFactor::new(0, model, z).unwrap())).unwrap();
    (g, mean)
}

#[test]
fn solve_invariant_under_covariance_scaling() {
    for seed in 0..20 {
        let (g1, init) = toa_graph(1.0, seed);
        let (g2, _) = toa_graph(37.5, seed);
        let s1 = fgo::gauss_newton_solve(&g1, &[init], &SolverOptions::fg_iekf()).unwrap();
        let s2 = fgo::gauss_newton_solve(&g2, &[init], &SolverOptions::fg_iekf()).unwrap();
        let d = (s1.estimates[0].to_dvector() - s2.estimates[0].to_dvector()).amax();
        assert!(d <= 1e-10, "seed {seed}: {d:e}");
    }
}

#[test]
fn window_smoother_improves_with_window_length() {
    let spec = bench::MonteCarloSpec {
        estimators: [2usize, 4]
            .iter()
            .map(|w| {
                Estimator::from_name(
                    "sw-fgo",
                    &EstimatorParams {
                        window: Some(*w),
                        ..Default::default()
                    },
                )
                .unwrap()
            })
            .collect(),
        scheme: DataScheme::named(SchemeName::NonlinearNonGaussian),
        overrides: SetupOverrides::default(),
        timing: false,
    };
    let r = bench::monte_carlo(&spec, 20, 1).unwrap();
    assert!(r.get("sw-fgo-w4").unwrap().mean_seed_rmse() <= r.get("sw-fgo-w2").unwrap().mean_seed_rmse());
}

#[test]
fn robust_iterated_beats_robust_single_step() {
    let spec = bench::MonteCarloSpec {
        estimators: vec![est("rekf"), est("iekf"), est("riekf")],
        scheme: DataScheme::named(SchemeName::NonlinearNonGaussian),
        overrides: SetupOverrides::default(),
        timing: false,
    };
    let r = bench::monte_carlo(&spec, 20, 1).unwrap();
    let m = |id: &str| r.get(id).unwrap().mean_seed_rmse();
    assert!(m("riekf") <= m("rekf"));
    assert!(m("riekf") <= m("iekf"));
}

#[test]
fn dataset_round_trips_through_csv() {
    for scheme in SchemeName::ALL {
        let ds = sim::generate_dataset(&DataScheme::named(scheme).with_epochs(12), 3).unwrap();
        let back = sim::Dataset::from_csv(&ds.to_csv()).unwrap();
        assert_eq!(back.hash(), ds.hash());
        assert_eq!(back.ranges, ds.ranges);
    }
}

fn spd_strategy() -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-1.0f64..1.0, 16)
}

fn spd_from(v: &[f64], floor: f64) -> DMatrix<f64> {
    let a = DMatrix::from_row_slice(4, 4, v);
    &a * a.transpose() + DMatrix::identity(4, 4) * floor
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn schur_marginal_equals_prediction(p in spd_strategy(), q in spd_strategy(), f in spd_strategy()) {
        let p = spd_from(&p, 0.05);
        let q = spd_from(&q, 0.05);
        let f = DMatrix::from_row_slice(4, 4, &f);
        let belief = GaussianBelief::symmetrized(StateVector::new(1.0, -2.0, 0.3, 0.4), &p).unwrap();
        let process = ProcessModel::new(f, q, 1.0).unwrap();
        let prior = PriorFactor::from_belief(0, &belief).unwrap();
        let marg = fgo::refgo_predict(&prior, &process, &SolverOptions::default()).unwrap();
        let expected = kfv::kf_predict(&belief, &process).unwrap();
        let rel = (marg.covariance() - expected.covariance()).norm() / expected.covariance().norm();
        prop_assert!(rel <= 1e-9, "{}", rel);
        let dm = (marg.mean().to_dvector() - expected.mean().to_dvector()).amax();
        prop_assert!(dm <= 1e-9);
    }

    #[test]
    fn huber_update_never_moves_further_than_l2(dx in -50.0f64..50.0, dy in -50.0f64..50.0, outlier in 0.0f64..100.0) {
        let anchors = sim::place_anchors(105.0, 4).unwrap();
        let model = MeasurementModel::toa_isotropic(anchors, 0.1).unwrap();
        let belief = GaussianBelief::from_diagonal(StateVector::new(dx, dy, 0.0, 0.0), [4.0, 4.0, 1.0, 1.0]).unwrap();
        let mut z = model.predict(belief.mean()).unwrap();
        z[0] += outlier;
        let (l2, _) = kfv::ekf_update(&belief, &model, &z).unwrap();
        let (hub, _) = kfv::rekf_update(&belief, &model, &z, kfvfgo_core::RobustKernel::default_huber()).unwrap();
        let shift = |b: &GaussianBelief| (b.mean().position() - belief.mean().position()).norm();
        prop_assert!(shift(&hub) <= shift(&l2) + 1e-9);
    }
}
