//! Error metric and the multi-seed benchmark harness.

use std::fmt::Write as _;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{prepare_dataset, Dataset, Prepared, Protocol};
use crate::error::{Error, Result};
use crate::model::Model;
use crate::trainer::{train, Mode, TrainConfig, TrainReport};

/// Root mean squared error.
pub fn rmse(predictions: &[f64], targets: &[f64]) -> Result<f64> {
    if predictions.len() != targets.len() {
        return Err(Error::Dimension {
            expected: targets.len(),
            got: predictions.len(),
        });
    }
    if targets.is_empty() {
        return Err(Error::Data("rmse of an empty vector".into()));
    }
    let sse: f64 = predictions
        .iter()
        .zip(targets)
        .map(|(p, t)| (t - p).powi(2))
        .sum();
    Ok((sse / targets.len() as f64).sqrt())
}

/// Initial model shared by both training modes for a given seed.
pub fn initial_model(train: &Dataset, rules: usize, seed: u64) -> Result<Model> {
    Model::init_with_ranges(&train.input_ranges(), rules, seed)
}

/// Test predictions and error in the protocol's reporting units.
pub fn evaluate(model: &Model, prepared: &Prepared) -> Result<(Vec<f64>, Vec<f64>, f64)> {
    let predicted = model.predict_batch(prepared.test.inputs.view())?;
    let actual = prepared.test.targets.to_vec();
    let (predicted, actual) = if prepared.protocol.reports_raw_units() {
        (
            prepared.scaler.denormalize(&predicted),
            prepared.scaler.denormalize(&actual),
        )
    } else {
        (predicted, actual)
    };
    let err = rmse(&predicted, &actual)?;
    Ok((predicted, actual, err))
}

/// One training run inside a benchmark.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SeedRun {
    pub seed: u64,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub test_rmse: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub train_rmse: Option<f64>,
    pub epochs_run: usize,
    pub train_time_secs: f64,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub failure: Option<String>,
}

/// Row of the actual-versus-predicted plot data.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PlotRow {
    pub index: usize,
    pub actual: f64,
    pub predicted: f64,
    pub error: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentResult {
    pub benchmark: String,
    pub mode: Mode,
    pub rules: usize,
    pub parameter_count: usize,
    pub eta0: f64,
    pub runs: Vec<SeedRun>,
    /// Test errors of the completed seeds, in seed order.
    pub test_rmse: Vec<f64>,
    pub mean_rmse: f64,
    pub std_rmse: f64,
    pub failed_seeds: usize,
    /// Test-set plot data of the first completed seed (time series only).
    #[serde(skip)]
    pub plot: Option<Vec<PlotRow>>,
}

/// What to run in [`run_benchmark`].
#[derive(Clone, Debug)]
pub struct BenchmarkSpec {
    pub protocol: Protocol,
    pub rules: usize,
    pub config: TrainConfig,
    /// `None` picks the protocol's default learning rate.
    pub eta0: Option<f64>,
    pub n_seeds: u64,
    /// Worker threads for independent seeds; 1 runs sequentially.
    pub threads: usize,
}

impl BenchmarkSpec {
    pub fn new(protocol: Protocol, rules: usize, mode: Mode) -> Self {
        BenchmarkSpec {
            protocol,
            rules,
            config: TrainConfig {
                mode,
                ..TrainConfig::default()
            },
            eta0: None,
            n_seeds: 10,
            threads: 1,
        }
    }

    fn effective_eta0(&self) -> f64 {
        self.eta0.unwrap_or_else(|| self.protocol.default_eta0())
    }
}

struct SeedOutcome {
    run: SeedRun,
    plot: Option<Vec<PlotRow>>,
}

fn run_seed(raw: &Dataset, spec: &BenchmarkSpec, seed: u64) -> Result<SeedOutcome> {
    let prepared = prepare_dataset(raw.clone(), spec.protocol, seed)?;
    let init = initial_model(&prepared.train, spec.rules, seed)?;
    let cfg = TrainConfig {
        eta0: spec.effective_eta0(),
        seed,
        ..spec.config.clone()
    };
    let start = Instant::now();
    match train(init, &prepared.train, &cfg) {
        Ok((model, report)) => {
            let elapsed = start.elapsed().as_secs_f64();
            let (predicted, actual, err) = evaluate(&model, &prepared)?;
            let plot = spec
                .protocol
                .is_time_series()
                .then(|| plot_rows(&actual, &predicted));
            Ok(SeedOutcome {
                run: seed_run(seed, &report, Some(err), elapsed),
                plot,
            })
        }
        Err(e @ Error::NonFinite { .. }) => Ok(SeedOutcome {
            run: SeedRun {
                seed,
                test_rmse: None,
                train_rmse: None,
                epochs_run: 0,
                train_time_secs: 0.0,
                failure: Some(e.to_string()),
            },
            plot: None,
        }),
        Err(e) => Err(e),
    }
}

fn seed_run(seed: u64, report: &TrainReport, test_rmse: Option<f64>, secs: f64) -> SeedRun {
    SeedRun {
        seed,
        test_rmse,
        train_rmse: Some(report.train_rmse),
        epochs_run: report.epochs_run,
        train_time_secs: secs,
        failure: None,
    }
}

pub fn plot_rows(actual: &[f64], predicted: &[f64]) -> Vec<PlotRow> {
    actual
        .iter()
        .zip(predicted)
        .enumerate()
        .map(|(index, (&a, &p))| PlotRow {
            index,
            actual: a,
            predicted: p,
            error: a - p,
        })
        .collect()
}

/// Trains `spec.n_seeds` models (seeds `0..n_seeds`) on `raw` and
/// summarizes their test errors. Seeds that abort on a non-finite objective
/// are reported and excluded from the mean.
pub fn run_benchmark(raw: &Dataset, spec: &BenchmarkSpec) -> Result<ExperimentResult> {
    if spec.n_seeds == 0 {
        return Err(Error::Config("at least one seed is required".into()));
    }
    if spec.rules == 0 {
        return Err(Error::Config("rules must be at least 1".into()));
    }
    spec.config.validate()?;
    let seeds: Vec<u64> = (0..spec.n_seeds).collect();
    let outcomes: Vec<SeedOutcome> = if spec.threads <= 1 {
        seeds
            .iter()
            .map(|&s| run_seed(raw, spec, s))
            .collect::<Result<_>>()?
    } else {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(spec.threads)
            .build()
            .map_err(|e| Error::Config(e.to_string()))?;
        pool.install(|| {
            seeds
                .par_iter()
                .map(|&s| run_seed(raw, spec, s))
                .collect::<Result<_>>()
        })?
    };

    let n_inputs = match spec.protocol.window() {
        Some(w) => w.lag,
        None => raw.input_dim(),
    };
    let parameter_count = spec.rules * (2 + 2 * n_inputs + n_inputs * n_inputs);
    let test_rmse: Vec<f64> = outcomes.iter().filter_map(|o| o.run.test_rmse).collect();
    let failed_seeds = outcomes.len() - test_rmse.len();
    let (mean_rmse, std_rmse) = mean_std(&test_rmse);
    let plot = outcomes.iter().find_map(|o| o.plot.clone());
    Ok(ExperimentResult {
        benchmark: spec.protocol.name().to_string(),
        mode: spec.config.mode,
        rules: spec.rules,
        parameter_count,
        eta0: spec.effective_eta0(),
        runs: outcomes.into_iter().map(|o| o.run).collect(),
        test_rmse,
        mean_rmse,
        std_rmse,
        failed_seeds,
        plot,
    })
}

/// Mean and population standard deviation; NaN for an empty slice.
pub fn mean_std(values: &[f64]) -> (f64, f64) {
    if values.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    (mean, var.sqrt())
}

/// Plain-text results table: method, number of rules, mean test RMSE.
pub fn format_table(results: &[ExperimentResult]) -> String {
    let mut out = String::new();
    if let Some(first) = results.first() {
        let _ = writeln!(out, "Benchmark: {}", first.benchmark);
    }
    let _ = writeln!(
        out,
        "{:<10} | {:>11} | {:>12} | {:>10} | {:>6}",
        "Method", "no. neurons", "RMSE (mean)", "std", "failed"
    );
    let _ = writeln!(out, "{}", "-".repeat(62));
    for r in results {
        let _ = writeln!(
            out,
            "{:<10} | {:>11} | {:>12.4} | {:>10.4} | {:>6}",
            r.mode.to_string(),
            r.rules,
            r.mean_rmse,
            r.std_rmse,
            r.failed_seeds
        );
    }
    out
}
