use std::fmt::Write as _;
use std::io::Write as _;
use std::fs;
use std::path::Path;

use kfvfgo_core::bench::{self, Estimator, EstimatorParams, MonteCarloSpec, SetupOverrides};
use kfvfgo_core::sim::{self, DataScheme, Dataset, NoiseModel, SchemeName};
use kfvfgo_core::{JacobianMode, RobustKernel, STATE_DIM};
use serde_json::json;

use crate::args::{BenchArgs, CompareArgs, JacobianArg, KernelArg, ModelArgs, RunArgs, SchemeArgs, SimulateArgs, SolverArgs};

pub type CliResult<T> = Result<T, Box<dyn std::error::Error>>;

/// What the process should exit with after a successful command.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Verdict {
    Pass,
    Fail,
}

fn parse_vec4(flag: &str, text: &str) -> CliResult<[f64; STATE_DIM]> {
    let values: Vec<f64> = text
        .split(',')
        .map(|s| s.trim().parse::<f64>())
        .collect::<Result<_, _>>()
        .map_err(|_| format!("--{flag} expects 4 comma-separated numbers, got '{text}'"))?;
    values
        .try_into()
        .map_err(|_| format!("--{flag} expects exactly 4 values, got '{text}'").into())
}

fn scheme_from(args: &SchemeArgs) -> CliResult<DataScheme> {
    let name: SchemeName = args.scheme.parse()?;
    let mut scheme = DataScheme::named(name);
    if let Some(e) = args.epochs {
        scheme.epochs = e;
    }
    if let Some(w) = args.omega {
        scheme.omega = w;
    }
    if let Some(dt) = args.dt {
        scheme.dt = dt;
    }
    if let Some(n) = args.anchor_count {
        scheme.anchor_count = n;
    }
    if let Some(r) = args.anchor_radius {
        scheme.anchor_radius = r;
    }
    if let Some(n) = &args.noise {
        scheme.noise = NoiseModel::decode(n)?;
    }
    scheme.validate()?;
    Ok(scheme)
}

fn overrides_from(args: &ModelArgs) -> CliResult<SetupOverrides> {
    Ok(SetupOverrides {
        q_diag: args.q.as_deref().map(|t| parse_vec4("q", t)).transpose()?,
        p0_diag: args.p0.as_deref().map(|t| parse_vec4("p0", t)).transpose()?,
        init_mean: args.init.as_deref().map(|t| parse_vec4("init", t)).transpose()?,
        range_std: args.r_std,
    })
}

fn params_from(args: &SolverArgs, tol: Option<f64>) -> CliResult<EstimatorParams> {
    let kernel = match (args.kernel, args.delta) {
        (Some(KernelArg::L2), Some(_)) => return Err("--delta requires --kernel huber".into()),
        (Some(KernelArg::L2), None) => Some(RobustKernel::L2),
        (_, Some(d)) => Some(RobustKernel::huber(d)?),
        (Some(KernelArg::Huber), None) => Some(RobustKernel::default_huber()),
        (None, None) => None,
    };
    Ok(EstimatorParams {
        max_iters: args.iters,
        tol,
        kernel,
        jacobian: args.jacobian.map(|j| match j {
            JacobianArg::Analytic => JacobianMode::Analytic,
            JacobianArg::Ad => JacobianMode::AutoDiff,
        }),
        window: args.window,
    })
}

fn load_dataset(path: &Path) -> CliResult<Dataset> {
    let text = fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
    Dataset::from_csv(&text).map_err(|e| format!("{}: {e}", path.display()).into())
}

/// Prints to stdout, treating a closed pipe as success.
fn emit(text: &str) -> CliResult<()> {
    let mut out = std::io::stdout().lock();
    match out.write_all(text.as_bytes()).and_then(|_| out.flush()) {
        Err(e) if e.kind() != std::io::ErrorKind::BrokenPipe => Err(e.into()),
        _ => Ok(()),
    }
}

fn write_file(path: &Path, contents: &str) -> CliResult<()> {
    fs::write(path, contents).map_err(|e| format!("{}: {e}", path.display()).into())
}

fn dataset_json(ds: &Dataset) -> serde_json::Value {
    json!({ "scheme": ds.scheme.name.as_str(), "seed": ds.seed, "epochs": ds.epochs(), "hash": ds.hash() })
}

pub fn simulate(args: &SimulateArgs) -> CliResult<Verdict> {
    let scheme = scheme_from(&args.scheme)?;
    let ds = sim::generate_dataset(&scheme, args.seed)?;
    write_file(&args.out, &ds.to_csv())?;
    emit(&format!("{}\n", ds.hash()))?;
    Ok(Verdict::Pass)
}

pub fn run(args: &RunArgs) -> CliResult<Verdict> {
    let ds = load_dataset(&args.data)?;
    let estimator = Estimator::from_name(&args.estimator, &params_from(&args.solver, args.tol)?)?;
    let setup = overrides_from(&args.model)?.setup_for(&ds.scheme)?;
    let report = estimator.run(&ds, &setup)?;
    let errors = bench::position_errors(&report, &ds)?;
    let summary = bench::metrics(&errors)?.with_runtimes(&report.runtimes())?;
    if let Some(out) = &args.out {
        write_file(out, &bench::trajectory_csv(&report, &ds)?)?;
    }
    let doc = json!({
        "estimator": estimator.id(),
        "config": estimator.config(),
        "dataset": dataset_json(&ds),
        "metrics": summary,
    });
    let text = serde_json::to_string_pretty(&doc)?;
    if let Some(path) = &args.metrics {
        write_file(path, &text)?;
    }
    emit(&format!("{text}\n"))?;
    Ok(Verdict::Pass)
}

pub fn compare(args: &CompareArgs) -> CliResult<Verdict> {
    if !(args.tol.is_finite() && args.tol > 0.0) {
        return Err("--tol must be positive".into());
    }
    let ds = load_dataset(&args.data)?;
    let setup = overrides_from(&args.model)?.setup_for(&ds.scheme)?;
    let a = Estimator::from_name(&args.a, &EstimatorParams::default())?;
    let b = Estimator::from_name(&args.b, &EstimatorParams::default())?;
    let ra = a.run(&ds, &setup)?;
    let rb = b.run(&ds, &setup)?;
    let (err_diff, state_diff) = bench::traj_difference(&ra, &rb, &ds)?;
    let max_diff = bench::state_differences(&ra, &rb)?.into_iter().fold(0.0, f64::max);
    let verdict = if state_diff <= args.tol { Verdict::Pass } else { Verdict::Fail };
    let doc = json!({
        "a": a.id(),
        "b": b.id(),
        "dataset": dataset_json(&ds),
        "mean_abs_error_diff": err_diff,
        "mean_state_diff": state_diff,
        "max_state_diff": max_diff,
        "tol": args.tol,
        "result": if verdict == Verdict::Pass { "PASS" } else { "FAIL" },
    });
    let text = serde_json::to_string_pretty(&doc)?;
    if let Some(path) = &args.out {
        write_file(path, &text)?;
    }
    emit(&format!("{text}\n"))?;
    Ok(verdict)
}

fn parse_windows(text: &str) -> CliResult<Vec<usize>> {
    text.split(',')
        .map(|s| match s.trim().parse::<usize>() {
            Ok(w) if w >= 1 => Ok(w),
            _ => Err(format!("--sweep-window expects positive integers, got '{s}'").into()),
        })
        .collect()
}

pub fn bench(args: &BenchArgs) -> CliResult<Verdict> {
    if args.runs == 0 {
        return Err("--runs must be >= 1".into());
    }
    let scheme = scheme_from(&args.scheme)?;
    let params = params_from(&args.solver, args.tol)?;
    let mut estimators = Vec::new();
    for name in args.estimators.split(',').map(str::trim).filter(|s| !s.is_empty()) {
        estimators.push(Estimator::from_name(name, &params)?);
    }
    if let Some(sweep) = &args.sweep_window {
        for w in parse_windows(sweep)? {
            let p = EstimatorParams { window: Some(w), ..params };
            estimators.push(Estimator::from_name("sw-fgo", &p)?);
        }
    }
    let mut seen = std::collections::HashSet::new();
    estimators.retain(|e| seen.insert(e.id()));
    let spec = MonteCarloSpec {
        estimators,
        scheme,
        overrides: overrides_from(&args.model)?,
        timing: args.timing,
    };
    let result = bench::monte_carlo(&spec, args.runs, args.seed)?;

    let text = serde_json::to_string_pretty(&result.to_json())?;
    match &args.out {
        Some(path) => {
            write_file(path, &text)?;
            emit(&summary_table(&result))?;
        }
        None => emit(&format!("{text}\n"))?,
    }
    if let Some(path) = &args.traces {
        write_file(path, &residual_traces(&spec, &result.seeds)?)?;
    }
    Ok(Verdict::Pass)
}

fn summary_table(result: &bench::MonteCarloResult) -> String {
    let mut out = format!(
        "{:<14} {:>9} {:>9} {:>9} {:>10} {:>10} {:>10} {:>10}\n",
        "estimator", "rmse_m", "mae_m", "cp95_m", "seed_rmse", "q1_ms", "median_ms", "q3_ms"
    );
    for e in &result.estimators {
        let s = &e.summary;
        let _ = writeln!(
            out,
            "{:<14} {:>9.4} {:>9.4} {:>9.4} {:>10.4} {:>10.4} {:>10.4} {:>10.4}",
            e.id,
            s.rmse,
            s.mae,
            s.cp95,
            e.mean_seed_rmse(),
            s.runtime_quartiles[0] * 1e3,
            s.runtime_quartiles[1] * 1e3,
            s.runtime_quartiles[2] * 1e3
        );
    }
    out
}

/// First-epoch residual norm per iteration, for every estimator and seed.
fn residual_traces(spec: &MonteCarloSpec, seeds: &[u64]) -> CliResult<String> {
    let setup = spec.overrides.setup_for(&spec.scheme)?;
    let first = spec.scheme.clone().with_epochs(1);
    let mut out = String::from("seed,estimator,iteration,residual_norm\n");
    for seed in seeds {
        let ds = sim::generate_dataset(&first, *seed)?;
        for est in &spec.estimators {
            let report = est.run(&ds, &setup)?;
            for (it, norm) in report.epochs[0].trace.residual_path() {
                let _ = writeln!(out, "{seed},{},{it},{norm}", est.id());
            }
        }
    }
    Ok(out)
}
