//! Metrics, estimator registry, Monte-Carlo orchestration and timing.

use std::fmt;
use std::time::Instant;

use rayon::prelude::*;
use serde::Serialize;
use serde_json::{json, Value};

use crate::error::{Error, Result};
use crate::fgo::{self, SolverOptions};
use crate::kernel::RobustKernel;
use crate::kfv::{self, KfvKind, KfvVariant};
use crate::model::{FilterSetup, GaussianBelief, JacobianMode, ProcessModel, StateVector, STATE_DIM};
use crate::report::RunReport;
use crate::sim::{self, DataScheme, Dataset};

/// Environment variable capping Monte-Carlo worker threads.
pub const THREADS_ENV: &str = "KFVFGO_THREADS";

/// Every estimator name accepted by [`Estimator::from_name`].
pub const ESTIMATOR_NAMES: [&str; 14] = [
    "kf", "ekf", "iekf", "rekf", "riekf", "fg-ekf", "fg-iekf", "fg-rekf", "fg-riekf", "fg-ekf-ad", "fg-iekf-ad",
    "fg-rekf-ad", "fg-riekf-ad", "sw-fgo",
];

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MetricSummary {
    pub rmse: f64,
    pub mae: f64,
    pub cp95: f64,
    /// Seconds per epoch.
    pub mean_runtime: f64,
    /// 25th, 50th and 75th percentile of per-epoch seconds.
    pub runtime_quartiles: [f64; 3],
}

/// Per-epoch position error `‖p̂ₖ − pₖ‖`.
pub fn position_errors(report: &RunReport, dataset: &Dataset) -> Result<Vec<f64>> {
    if report.epochs.len() != dataset.truth.len() {
        return Err(Error::Dimension {
            context: format!("report {} vs dataset epochs", report.estimator),
            expected: dataset.truth.len(),
            actual: report.epochs.len(),
        });
    }
    Ok(report
        .estimates()
        .zip(&dataset.truth)
        .map(|(e, t)| (e.position() - t.position()).norm())
        .collect())
}

/// Nearest-rank percentile (`q` in `(0, 1]`) of an unsorted sample.
pub fn nearest_rank(values: &[f64], q: f64) -> Result<f64> {
    if values.is_empty() {
        return Err(Error::Domain("percentile of an empty sample".into()));
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let rank = ((q * sorted.len() as f64).ceil() as usize).clamp(1, sorted.len());
    Ok(sorted[rank - 1])
}

/// RMSE, MAE and nearest-rank CP95; runtime fields are zero.
pub fn metrics(errors: &[f64]) -> Result<MetricSummary> {
    if errors.is_empty() {
        return Err(Error::Domain("metrics of an empty error list".into()));
    }
    if errors.iter().any(|e| !e.is_finite()) {
        return Err(Error::Domain("non-finite position error".into()));
    }
    let n = errors.len() as f64;
    Ok(MetricSummary {
        rmse: (errors.iter().map(|e| e * e).sum::<f64>() / n).sqrt(),
        mae: errors.iter().map(|e| e.abs()).sum::<f64>() / n,
        cp95: nearest_rank(errors, 0.95)?,
        mean_runtime: 0.0,
        runtime_quartiles: [0.0; 3],
    })
}

impl MetricSummary {
    pub fn with_runtimes(mut self, seconds: &[f64]) -> Result<Self> {
        if !seconds.is_empty() {
            self.mean_runtime = seconds.iter().sum::<f64>() / seconds.len() as f64;
            self.runtime_quartiles = [
                nearest_rank(seconds, 0.25)?,
                nearest_rank(seconds, 0.5)?,
                nearest_rank(seconds, 0.75)?,
            ];
        }
        Ok(self)
    }
}

fn check_same_dataset(a: &RunReport, b: &RunReport, dataset: &Dataset) -> Result<()> {
    if a.seed != b.seed || a.scheme != b.scheme || a.seed != dataset.seed || a.scheme != dataset.scheme.name {
        return Err(Error::Config(format!(
            "reports come from different datasets ({} seed {}, {} seed {})",
            a.scheme, a.seed, b.scheme, b.seed
        )));
    }
    Ok(())
}

/// `(mean |eᴬ − eᴮ|, mean ‖p̂ᴬ − p̂ᴮ‖)` over epochs.
pub fn traj_difference(a: &RunReport, b: &RunReport, dataset: &Dataset) -> Result<(f64, f64)> {
    check_same_dataset(a, b, dataset)?;
    let ea = position_errors(a, dataset)?;
    let eb = position_errors(b, dataset)?;
    let n = ea.len() as f64;
    let err_diff = ea.iter().zip(&eb).map(|(x, y)| (x - y).abs()).sum::<f64>() / n;
    let state_diff = state_differences(a, b)?.iter().sum::<f64>() / n;
    Ok((err_diff, state_diff))
}

/// Per-epoch `‖p̂ᴬ − p̂ᴮ‖`.
pub fn state_differences(a: &RunReport, b: &RunReport) -> Result<Vec<f64>> {
    if a.epochs.len() != b.epochs.len() {
        return Err(Error::Dimension {
            context: "trajectory comparison".into(),
            expected: a.epochs.len(),
            actual: b.epochs.len(),
        });
    }
    Ok(a.estimates()
        .zip(b.estimates())
        .map(|(x, y)| (x.position() - y.position()).norm())
        .collect())
}

/// Runs `step` `warmup + reps` times and returns the last `reps` wall times in seconds.
pub fn time_estimator<F: FnMut()>(mut step: F, warmup: usize, reps: usize) -> Vec<f64> {
    for _ in 0..warmup {
        step();
    }
    (0..reps)
        .map(|_| {
            let start = Instant::now();
            step();
            start.elapsed().as_secs_f64()
        })
        .collect()
}

/// Optional overrides of the default filter setup.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct SetupOverrides {
    pub q_diag: Option<[f64; STATE_DIM]>,
    pub p0_diag: Option<[f64; STATE_DIM]>,
    pub init_mean: Option<[f64; STATE_DIM]>,
    /// Range noise std assumed by the estimators (m).
    pub range_std: Option<f64>,
}

impl SetupOverrides {
    /// Default setup for `scheme` with these overrides applied.
    pub fn setup_for(&self, scheme: &DataScheme) -> Result<FilterSetup> {
        let q = self.q_diag.unwrap_or(FilterSetup::DEFAULT_Q);
        let p0 = self.p0_diag.unwrap_or(FilterSetup::DEFAULT_P0);
        let [px, py, vx, vy] = self.init_mean.unwrap_or(FilterSetup::DEFAULT_INIT_MEAN);
        let range_std = self.range_std.unwrap_or_else(|| scheme.noise.nominal_std());
        Ok(FilterSetup {
            process: ProcessModel::constant_velocity(scheme.dt, q)?,
            init: GaussianBelief::from_diagonal(StateVector::try_new(px, py, vx, vy)?, p0)?,
            range_std,
        })
    }
}

/// Tunables shared by estimators; `None` keeps each estimator's default.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct EstimatorParams {
    pub max_iters: Option<usize>,
    pub tol: Option<f64>,
    pub kernel: Option<RobustKernel>,
    pub jacobian: Option<JacobianMode>,
    pub window: Option<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Estimator {
    Kfv(KfvVariant),
    Refgo { kind: KfvKind, options: SolverOptions },
    SlidingWindow { window: usize, options: SolverOptions },
}

fn reject(name: &str, flag: &str, why: &str) -> Error {
    Error::Config(format!("{flag} does not apply to {name}: {why}"))
}

impl Estimator {
    pub fn from_name(name: &str, params: &EstimatorParams) -> Result<Self> {
        let lower = name.trim().to_ascii_lowercase();
        let (base, ad_suffix) = match lower.strip_suffix("-ad") {
            Some(b) => (b, true),
            None => (lower.as_str(), false),
        };
        let kind_of = |s: &str| match s {
            "kf" => Some(KfvKind::Kf),
            "ekf" => Some(KfvKind::Ekf),
            "iekf" => Some(KfvKind::Iekf),
            "rekf" => Some(KfvKind::Rekf),
            "riekf" => Some(KfvKind::Riekf),
            _ => None,
        };
        let unknown = || {
            Error::Config(format!(
                "unknown estimator '{name}'; expected one of {}",
                ESTIMATOR_NAMES.join(", ")
            ))
        };

        if base == "sw-fgo" {
            if ad_suffix {
                return Err(unknown());
            }
            let mut options = SolverOptions::default();
            Self::apply_solver(&mut options, params, name, true, true)?;
            let window = params.window.unwrap_or(1);
            if window == 0 {
                return Err(Error::Config("window size must be >= 1".into()));
            }
            return Ok(Estimator::SlidingWindow { window, options });
        }
        if params.window.is_some() {
            return Err(reject(name, "--window", "only sw-fgo has a sliding window"));
        }
        if let Some(kind) = base.strip_prefix("fg-").and_then(kind_of) {
            if kind == KfvKind::Kf {
                return Err(unknown());
            }
            let mut options = match kind {
                KfvKind::Iekf => SolverOptions::fg_iekf(),
                KfvKind::Rekf => SolverOptions::fg_rekf(),
                KfvKind::Riekf => SolverOptions::fg_riekf(),
                _ => SolverOptions::fg_ekf(),
            };
            if ad_suffix {
                if params.jacobian == Some(JacobianMode::Analytic) {
                    return Err(Error::Config(format!("{name} conflicts with --jacobian analytic")));
                }
                options.jacobian = JacobianMode::AutoDiff;
            }
            Self::apply_solver(&mut options, params, name, kind.is_iterated(), kind.is_robust())?;
            return Ok(Estimator::Refgo { kind, options });
        }
        let kind = kind_of(base).filter(|_| !ad_suffix).ok_or_else(unknown)?;
        if params.jacobian == Some(JacobianMode::AutoDiff) {
            return Err(reject(name, "--jacobian ad", "filters use analytic Jacobians; use the fg- estimators"));
        }
        let mut variant = KfvVariant::default_for(kind);
        if let Some(iters) = params.max_iters {
            if !kind.is_iterated() {
                return Err(reject(name, "--iters", "this variant linearizes once"));
            }
            variant.max_iters = iters;
        }
        if let Some(tol) = params.tol {
            variant.iter_tol = tol;
        }
        if let Some(kernel) = params.kernel {
            if !kind.is_robust() && !kernel.is_l2() {
                return Err(reject(name, "--kernel huber", "use rekf or riekf"));
            }
            variant.kernel = kernel;
        }
        variant.validate()?;
        Ok(Estimator::Kfv(variant))
    }

    fn apply_solver(
        options: &mut SolverOptions,
        params: &EstimatorParams,
        name: &str,
        iterated: bool,
        robust: bool,
    ) -> Result<()> {
        if let Some(iters) = params.max_iters {
            if !iterated {
                return Err(reject(name, "--iters", "this configuration performs one Gauss-Newton step"));
            }
            options.max_iters = iters;
        }
        if let Some(tol) = params.tol {
            options.tol = tol;
        }
        if let Some(kernel) = params.kernel {
            if !robust && !kernel.is_l2() {
                return Err(reject(name, "--kernel huber", "use the robust configuration"));
            }
            options.kernel = kernel;
        }
        if let Some(j) = params.jacobian {
            if options.jacobian == JacobianMode::AutoDiff && j == JacobianMode::Analytic {
                return Err(Error::Config(format!("{name} conflicts with --jacobian analytic")));
            }
            options.jacobian = j;
        }
        options.validate()
    }

    pub fn id(&self) -> String {
        match self {
            Estimator::Kfv(v) => v.id().to_string(),
            Estimator::Refgo { kind, options } => {
                let ad = if options.jacobian == JacobianMode::AutoDiff { "-ad" } else { "" };
                format!("fg-{}{ad}", kind.as_str())
            }
            Estimator::SlidingWindow { window, .. } => format!("sw-fgo-w{window}"),
        }
    }

    /// Config as JSON, for result files.
    pub fn config(&self) -> Value {
        match self {
            Estimator::Kfv(v) => serde_json::to_value(v).unwrap_or(Value::Null),
            Estimator::Refgo { options, .. } => serde_json::to_value(options).unwrap_or(Value::Null),
            Estimator::SlidingWindow { window, options } => json!({
                "window": window,
                "solver": serde_json::to_value(options).unwrap_or(Value::Null),
            }),
        }
    }

    pub fn run(&self, dataset: &Dataset, setup: &FilterSetup) -> Result<RunReport> {
        let id = self.id();
        let report = match self {
            Estimator::Kfv(v) => kfv::run_filter(v, dataset, setup),
            Estimator::Refgo { options, .. } => fgo::run_refgo(options, dataset, setup, &id),
            Estimator::SlidingWindow { window, options } => fgo::run_swfgo(*window, options, dataset, setup, &id),
        }?;
        Ok(RunReport { estimator: id, ..report })
    }
}

impl fmt::Display for Estimator {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.id())
    }
}

#[derive(Debug, Clone)]
pub struct MonteCarloSpec {
    pub estimators: Vec<Estimator>,
    pub scheme: DataScheme,
    pub overrides: SetupOverrides,
    /// Serial, single-threaded execution for clean wall-clock samples.
    pub timing: bool,
}

#[derive(Debug, Clone)]
pub struct EstimatorResult {
    pub id: String,
    pub config: Value,
    /// Metrics over errors pooled across all seeds and epochs.
    pub summary: MetricSummary,
    pub runtime_samples_ms: Vec<f64>,
    pub per_seed_rmse: Vec<f64>,
}

impl EstimatorResult {
    pub fn mean_seed_rmse(&self) -> f64 {
        self.per_seed_rmse.iter().sum::<f64>() / self.per_seed_rmse.len() as f64
    }

    pub fn median_runtime_ms(&self) -> f64 {
        nearest_rank(&self.runtime_samples_ms, 0.5).unwrap_or(f64::NAN)
    }
}

#[derive(Debug, Clone)]
pub struct MonteCarloResult {
    pub scheme: DataScheme,
    pub seeds: Vec<u64>,
    pub estimators: Vec<EstimatorResult>,
}

impl MonteCarloResult {
    pub fn get(&self, id: &str) -> Option<&EstimatorResult> {
        self.estimators.iter().find(|e| e.id == id)
    }

    /// The normative results document.
    pub fn to_json(&self) -> Value {
        let mut per = serde_json::Map::new();
        for e in &self.estimators {
            per.insert(
                e.id.clone(),
                json!({
                    "config": e.config,
                    "metrics": e.summary,
                    "runtime_samples_ms": e.runtime_samples_ms,
                    "per_seed_rmse": e.per_seed_rmse,
                }),
            );
        }
        json!({
            "spec": {
                "scheme": self.scheme.name.as_str(),
                "epochs": self.scheme.epochs,
                "noise": self.scheme.noise.encode(),
                "anchors": self.scheme.anchor_count,
                "anchor_radius": self.scheme.anchor_radius,
                "dt": self.scheme.dt,
                "omega": self.scheme.omega,
                "seeds": self.seeds,
                "estimators": self.estimators.iter().map(|e| e.id.clone()).collect::<Vec<_>>(),
            },
            "estimators": per,
        })
    }
}

struct SeedOutcome {
    errors: Vec<Vec<f64>>,
    runtimes: Vec<Vec<f64>>,
}

fn run_seed(spec: &MonteCarloSpec, setup: &FilterSetup, seed: u64) -> Result<SeedOutcome> {
    let dataset = sim::generate_dataset(&spec.scheme, seed)?;
    let mut errors = Vec::with_capacity(spec.estimators.len());
    let mut runtimes = Vec::with_capacity(spec.estimators.len());
    for est in &spec.estimators {
        let report = est.run(&dataset, setup).map_err(|e| e.in_run(seed, est.id()))?;
        errors.push(position_errors(&report, &dataset)?);
        runtimes.push(report.runtimes());
    }
    Ok(SeedOutcome { errors, runtimes })
}

/// Worker count from `KFVFGO_THREADS`, if set.
pub fn thread_cap() -> Result<Option<usize>> {
    match std::env::var(THREADS_ENV) {
        Ok(v) => match v.trim().parse::<usize>() {
            Ok(n) if n >= 1 => Ok(Some(n)),
            _ => Err(Error::Config(format!("{THREADS_ENV} must be a positive integer, got '{v}'"))),
        },
        Err(_) => Ok(None),
    }
}

/// Runs every estimator on seeds `base_seed..base_seed + n_runs`.
pub fn monte_carlo(spec: &MonteCarloSpec, n_runs: usize, base_seed: u64) -> Result<MonteCarloResult> {
    if n_runs == 0 {
        return Err(Error::Config("n_runs must be >= 1".into()));
    }
    if spec.estimators.is_empty() {
        return Err(Error::Config("no estimators selected".into()));
    }
    spec.scheme.validate()?;
    let setup = spec.overrides.setup_for(&spec.scheme)?;
    let seeds: Vec<u64> = (0..n_runs as u64).map(|i| base_seed + i).collect();

    let outcomes: Vec<SeedOutcome> = if spec.timing {
        seeds
            .iter()
            .map(|s| run_seed(spec, &setup, *s))
            .collect::<Result<_>>()?
    } else {
        let work = || {
            seeds
                .par_iter()
                .map(|s| run_seed(spec, &setup, *s))
                .collect::<Result<Vec<_>>>()
        };
        match thread_cap()? {
            Some(n) => rayon::ThreadPoolBuilder::new()
                .num_threads(n)
                .build()
                .map_err(|e| Error::Config(format!("thread pool: {e}")))?
                .install(work)?,
            None => work()?,
        }
    };

    let mut estimators = Vec::with_capacity(spec.estimators.len());
    for (i, est) in spec.estimators.iter().enumerate() {
        let pooled: Vec<f64> = outcomes.iter().flat_map(|o| o.errors[i].iter().copied()).collect();
        let seconds: Vec<f64> = outcomes.iter().flat_map(|o| o.runtimes[i].iter().copied()).collect();
        let per_seed_rmse = outcomes
            .iter()
            .map(|o| metrics(&o.errors[i]).map(|m| m.rmse))
            .collect::<Result<Vec<_>>>()?;
        estimators.push(EstimatorResult {
            id: est.id(),
            config: est.config(),
            summary: metrics(&pooled)?.with_runtimes(&seconds)?,
            runtime_samples_ms: seconds.iter().map(|s| s * 1e3).collect(),
            per_seed_rmse,
        });
    }
    Ok(MonteCarloResult {
        scheme: spec.scheme.clone(),
        seeds,
        estimators,
    })
}

/// `k,est_px,est_py,true_px,true_py,err` rows.
pub fn trajectory_csv(report: &RunReport, dataset: &Dataset) -> Result<String> {
    let errors = position_errors(report, dataset)?;
    let mut out = String::from("k,est_px,est_py,true_px,true_py,err\n");
    for (k, ((e, t), err)) in report.estimates().zip(&dataset.truth).zip(errors).enumerate() {
        out.push_str(&format!(
            "{},{},{},{},{},{}\n",
            k + 1,
            e.px(),
            e.py(),
            t.px(),
            t.py(),
            err
        ));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::report::EpochRecord;
    use crate::sim::SchemeName;
    use nalgebra::DMatrix;

    fn report_with(dataset: &Dataset, offset: (f64, f64)) -> RunReport {
        let mut r = RunReport::new("test", dataset.scheme.name, dataset.seed);
        for t in &dataset.truth {
            r.epochs.push(EpochRecord {
                estimate: StateVector::new(t.px() + offset.0, t.py() + offset.1, t.vx(), t.vy()),
                covariance: DMatrix::identity(4, 4),
                trace: Default::default(),
                runtime: 0.0,
            });
        }
        r
    }

    fn small_dataset() -> Dataset {
        sim::generate_dataset(&DataScheme::named(SchemeName::NonlinearGaussian).with_epochs(10), 5).unwrap()
    }

    #[test]
    fn errors_perfect_and_offset() {
        let ds = small_dataset();
        assert!(position_errors(&report_with(&ds, (0.0, 0.0)), &ds).unwrap().iter().all(|e| *e == 0.0));
        assert!(position_errors(&report_with(&ds, (3.0, 4.0)), &ds).unwrap().iter().all(|e| *e == 5.0));
    }

    #[test]
    fn metric_examples() {
        let m = metrics(&[3.0, 4.0]).unwrap();
        assert!((m.rmse - 12.5f64.sqrt()).abs() < 1e-15);
        assert_eq!(m.mae, 3.5);
        let seq: Vec<f64> = (1..=100).map(f64::from).collect();
        assert_eq!(metrics(&seq).unwrap().cp95, 95.0);
        let c = metrics(&[2.5; 7]).unwrap();
        assert_eq!((c.rmse, c.mae, c.cp95), (2.5, 2.5, 2.5));
        assert!(metrics(&[]).is_err());
    }

    #[test]
    fn traj_difference_examples() {
        let ds = small_dataset();
        let a = report_with(&ds, (0.0, 0.0));
        assert_eq!(traj_difference(&a, &a, &ds).unwrap(), (0.0, 0.0));
        let b = report_with(&ds, (0.0, 1e-9));
        let (_, state) = traj_difference(&a, &b, &ds).unwrap();
        assert!((state - 1e-9).abs() < 1e-15);
        let other = sim::generate_dataset(&DataScheme::named(SchemeName::NonlinearGaussian).with_epochs(10), 6).unwrap();
        let c = report_with(&other, (0.0, 0.0));
        assert!(traj_difference(&a, &c, &ds).is_err());
    }

    #[test]
    fn noop_timing_is_small() {
        let samples = time_estimator(|| {}, 2, 10);
        assert_eq!(samples.len(), 10);
        assert!(samples.iter().all(|s| *s >= 0.0 && *s < 1e-3));
    }

    #[test]
    fn estimator_names_round_trip() {
        let p = EstimatorParams::default();
        for name in ESTIMATOR_NAMES {
            let e = Estimator::from_name(name, &p).unwrap();
            let expected = if name == "sw-fgo" { "sw-fgo-w1".to_string() } else { name.to_string() };
            assert_eq!(e.id(), expected);
        }
        assert!(Estimator::from_name("ukf", &p).is_err());
        assert!(Estimator::from_name("fg-kf", &p).is_err());
    }

    #[test]
    fn incompatible_flags_rejected() {
        let window = EstimatorParams { window: Some(4), ..Default::default() };
        assert!(Estimator::from_name("ekf", &window).unwrap_err().to_string().contains("--window"));
        let iters = EstimatorParams { max_iters: Some(5), ..Default::default() };
        assert!(Estimator::from_name("fg-ekf", &iters).is_err());
        assert!(Estimator::from_name("fg-iekf", &iters).is_ok());
        let huber = EstimatorParams { kernel: Some(RobustKernel::default_huber()), ..Default::default() };
        assert!(Estimator::from_name("iekf", &huber).is_err());
        let ad = EstimatorParams { jacobian: Some(JacobianMode::AutoDiff), ..Default::default() };
        assert!(Estimator::from_name("ekf", &ad).is_err());
        assert_eq!(Estimator::from_name("fg-ekf", &ad).unwrap().id(), "fg-ekf-ad");
    }

    #[test]
    fn monte_carlo_single_run_matches_direct_run() {
        let scheme = DataScheme::named(SchemeName::NonlinearNonGaussian).with_epochs(20);
        let est = Estimator::from_name("ekf", &EstimatorParams::default()).unwrap();
        let spec = MonteCarloSpec {
            estimators: vec![est.clone()],
            scheme: scheme.clone(),
            overrides: SetupOverrides::default(),
            timing: false,
        };
        let mc = monte_carlo(&spec, 1, 7).unwrap();
        let ds = sim::generate_dataset(&scheme, 7).unwrap();
        let setup = SetupOverrides::default().setup_for(&scheme).unwrap();
        let direct = metrics(&position_errors(&est.run(&ds, &setup).unwrap(), &ds).unwrap()).unwrap();
        assert_eq!(mc.estimators[0].summary.rmse, direct.rmse);
        assert_eq!(mc.estimators[0].per_seed_rmse, vec![direct.rmse]);
    }

    #[test]
    fn monte_carlo_is_deterministic() {
        let spec = MonteCarloSpec {
            estimators: vec![
                Estimator::from_name("riekf", &EstimatorParams::default()).unwrap(),
                Estimator::from_name("fg-ekf", &EstimatorParams::default()).unwrap(),
            ],
            scheme: DataScheme::named(SchemeName::LinearNonGaussian).with_epochs(15),
            overrides: SetupOverrides::default(),
            timing: false,
        };
        let a = monte_carlo(&spec, 4, 100).unwrap();
        let b = monte_carlo(&spec, 4, 100).unwrap();
        for (x, y) in a.estimators.iter().zip(&b.estimators) {
            assert_eq!(x.per_seed_rmse, y.per_seed_rmse);
            assert_eq!(x.summary.rmse, y.summary.rmse);
        }
        let json = a.to_json();
        assert!(json["estimators"]["riekf"]["metrics"]["rmse"].is_number());
        assert_eq!(json["spec"]["seeds"].as_array().unwrap().len(), 4);
    }

    #[test]
    fn trajectory_csv_shape() {
        let ds = small_dataset();
        let csv = trajectory_csv(&report_with(&ds, (3.0, 4.0)), &ds).unwrap();
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines[0], "k,est_px,est_py,true_px,true_py,err");
        assert_eq!(lines.len(), 11);
        assert!(lines[1].ends_with(",5"));
    }

    #[test]
    fn zero_runs_rejected() {
        let spec = MonteCarloSpec {
            estimators: vec![Estimator::Kfv(KfvVariant::ekf())],
            scheme: DataScheme::named(SchemeName::NonlinearGaussian),
            overrides: SetupOverrides::default(),
            timing: true,
        };
        assert!(monte_carlo(&spec, 0, 1).is_err());
    }
}
