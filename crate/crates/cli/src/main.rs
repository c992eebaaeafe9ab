//! `tskicfnn` command-line tool.
//!
//! Exit codes: 0 success, 2 configuration or usage error, 3 data or file
//! error, 4 training aborted on a non-finite objective.

mod config;
mod render;

use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Parser, Subcommand};
use serde::{Deserialize, Serialize};
use tskicfnn::data::{load_csv, load_features, load_matrix, prepare_dataset, windowize};
use tskicfnn::eval::{evaluate, format_table, initial_model, run_benchmark, BenchmarkSpec};
use tskicfnn::trainer::{train_observed, TrainEvent};
use tskicfnn::{Mode, Model, Protocol, Scaler, Schema, WindowSpec};

use config::{merge_training, FileConfig, TrainingFlags};

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("data error: {0}")]
    Data(String),
    #[error("training aborted: {0}")]
    Training(String),
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) => 2,
            CliError::Data(_) => 3,
            CliError::Training(_) => 4,
        }
    }
}

impl From<tskicfnn::Error> for CliError {
    fn from(e: tskicfnn::Error) -> Self {
        use tskicfnn::Error as E;
        match e {
            E::Config(_) => CliError::Config(e.to_string()),
            E::NonFinite { .. } => CliError::Training(e.to_string()),
            _ => CliError::Data(e.to_string()),
        }
    }
}

fn io_error(path: &Path, e: std::io::Error) -> CliError {
    CliError::Data(format!("{}: {e}", path.display()))
}

#[derive(Parser)]
#[command(
    name = "tskicfnn",
    version,
    about = "Correlation-aware TSK fuzzy neural network"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train a model and write it with its training report
    Train(TrainArgs),
    /// Predict with a trained model
    Predict(PredictArgs),
    /// Run a benchmark protocol over several seeds
    Benchmark(BenchmarkArgs),
    /// Print the rules of a trained model
    Inspect(InspectArgs),
}

#[derive(clap::Args)]
struct TrainArgs {
    /// TOML run configuration; flags override its values
    #[arg(long)]
    config: Option<PathBuf>,
    /// Input CSV
    #[arg(long)]
    data: Option<PathBuf>,
    /// Column schema (JSON); defaults to the protocol's schema
    #[arg(long)]
    schema: Option<PathBuf>,
    /// Benchmark protocol deciding windowing and the train/test split.
    /// Without it the whole file is used for training.
    #[arg(long)]
    protocol: Option<String>,
    /// Number of fuzzy rules
    #[arg(long)]
    rules: Option<usize>,
    /// stepwise or backprop
    #[arg(long)]
    mode: Option<Mode>,
    /// Seed for initialization
    #[arg(long)]
    seed: Option<u64>,
    /// Model output path
    #[arg(long)]
    out: Option<PathBuf>,
    /// Report output path (default: next to the model)
    #[arg(long)]
    report: Option<PathBuf>,
    /// Also write the untrained initial model here
    #[arg(long)]
    init_out: Option<PathBuf>,
    /// Print one JSON record per epoch on stdout
    #[arg(long)]
    verbose: bool,
    /// Record wall-clock time in the report (makes reports run-dependent)
    #[arg(long)]
    timing: bool,
    #[command(flatten)]
    training: TrainingFlags,
}

#[derive(clap::Args)]
struct PredictArgs {
    /// Trained model JSON
    #[arg(long)]
    model: PathBuf,
    /// Input CSV
    #[arg(long)]
    data: PathBuf,
    /// Column schema; defaults to the one stored at training time
    #[arg(long)]
    schema: Option<PathBuf>,
    /// Preprocessing file; defaults to the one written next to the model
    #[arg(long)]
    preprocessing: Option<PathBuf>,
    /// Predictions CSV (default: stdout)
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(clap::Args)]
struct BenchmarkArgs {
    /// TOML run configuration; flags override its values
    #[arg(long)]
    config: Option<PathBuf>,
    /// One of the built-in protocols, e.g. auto_mpg_case1 or google_stock
    #[arg(long)]
    protocol: Option<String>,
    /// Input CSV
    #[arg(long)]
    data: Option<PathBuf>,
    /// Column schema (JSON); defaults to the protocol's schema
    #[arg(long)]
    schema: Option<PathBuf>,
    /// Number of fuzzy rules
    #[arg(long)]
    rules: Option<usize>,
    /// Number of seeds (0..seeds)
    #[arg(long)]
    seeds: Option<u64>,
    /// stepwise, backprop or both
    #[arg(long, default_value = "both")]
    mode: String,
    /// Directory for result, table and plot files
    #[arg(long)]
    out_dir: Option<PathBuf>,
    #[command(flatten)]
    training: TrainingFlags,
}

#[derive(clap::Args)]
struct InspectArgs {
    /// Trained model JSON
    #[arg(long)]
    model: PathBuf,
}

/// Everything `predict` needs to reproduce the training-time input pipeline.
#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Preprocessing {
    schema: Schema,
    scaler: Scaler,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    window: Option<WindowSpec>,
}

fn preprocessing_path(model: &Path) -> PathBuf {
    model.with_extension("prep.json")
}

fn report_path(model: &Path) -> PathBuf {
    model.with_extension("report.json")
}

fn parse_protocol(name: &str) -> Result<Protocol, CliError> {
    name.parse().map_err(|_| {
        let known: Vec<&str> = Protocol::ALL.iter().map(|p| p.name()).collect();
        CliError::Config(format!(
            "unknown protocol `{name}` (known: {})",
            known.join(", ")
        ))
    })
}

fn load_schema(path: Option<&Path>, protocol: Option<Protocol>) -> Result<Schema, CliError> {
    match (path, protocol) {
        (Some(p), _) => Schema::load(p).map_err(|e| match e {
            tskicfnn::Error::Config(m) => CliError::Config(format!("{}: {m}", p.display())),
            other => CliError::Config(format!("{}: {other}", p.display())),
        }),
        (None, Some(proto)) => Ok(proto.default_schema()),
        (None, None) => Err(CliError::Config(
            "--schema is required when no --protocol is given".into(),
        )),
    }
}

fn require<T>(value: Option<T>, flag: &str) -> Result<T, CliError> {
    value.ok_or_else(|| CliError::Config(format!("{flag} is required")))
}

fn positive_rules(rules: usize) -> Result<usize, CliError> {
    if rules == 0 {
        return Err(CliError::Config("--rules must be at least 1".into()));
    }
    Ok(rules)
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<(), CliError> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(|e| io_error(parent, e))?;
    }
    fs::write(path, bytes).map_err(|e| io_error(path, e))
}

fn to_json<T: Serialize>(value: &T) -> Vec<u8> {
    let mut bytes = serde_json::to_vec_pretty(value).expect("plain data serializes");
    bytes.push(b'\n');
    bytes
}

fn cmd_train(args: TrainArgs) -> Result<(), CliError> {
    let file = FileConfig::load(args.config.as_deref())?;
    let rules = positive_rules(require(args.rules.or(file.rules), "--rules")?)?;
    let data_path = require(args.data.or(file.data), "--data")?;
    let out = require(args.out.or(file.out), "--out")?;
    let report_out = args
        .report
        .or(file.report)
        .unwrap_or_else(|| report_path(&out));
    let verbose = args.verbose || file.verbose.unwrap_or(false);
    let protocol = args
        .protocol
        .or(file.protocol)
        .map(|p| parse_protocol(&p))
        .transpose()?;
    let schema = load_schema(args.schema.or(file.schema).as_deref(), protocol)?;
    let cfg = merge_training(&file.training, &args.training, args.mode, args.seed)?;

    let raw = load_csv(&data_path, &schema)?;
    let (prepared, train_set, scaler) = match protocol {
        Some(p) => {
            let prepared = prepare_dataset(raw, p, cfg.seed)?;
            let (train, scaler) = (prepared.train.clone(), prepared.scaler.clone());
            (Some(prepared), train, scaler)
        }
        None => {
            let scaler = Scaler::fit(&raw)?;
            (None, scaler.transform(&raw)?, scaler)
        }
    };

    let init = initial_model(&train_set, rules, cfg.seed)?;
    if let Some(path) = &args.init_out {
        write_file(path, init.to_json()?.as_bytes())?;
    }
    let start = Instant::now();
    let stdout = std::io::stdout();
    let mut observer = |event: &TrainEvent| {
        if let (true, TrainEvent::EpochDone(record)) = (verbose, event) {
            let line = serde_json::to_string(record).expect("record serializes");
            let _ = writeln!(stdout.lock(), "{line}");
        }
    };
    let (model, mut report) = train_observed(init, &train_set, &cfg, &mut observer)?;
    if args.timing {
        report.wall_time_secs = Some(start.elapsed().as_secs_f64());
    }
    if let Some(prepared) = &prepared {
        report.test_rmse = Some(evaluate(&model, prepared)?.2);
    }

    let prep = Preprocessing {
        schema,
        scaler,
        window: protocol.and_then(|p| p.window()),
    };
    write_file(&out, model.to_json()?.as_bytes())?;
    write_file(&preprocessing_path(&out), &to_json(&prep))?;
    write_file(&report_out, &to_json(&report))?;
    if !verbose {
        let test = report
            .test_rmse
            .map(|t| format!(", test RMSE {t:.6}"))
            .unwrap_or_default();
        println!(
            "{} epochs, train RMSE {:.6}{test}; model written to {}",
            report.epochs_run,
            report.train_rmse,
            out.display()
        );
    }
    Ok(())
}

fn cmd_predict(args: PredictArgs) -> Result<(), CliError> {
    let text = fs::read_to_string(&args.model).map_err(|e| io_error(&args.model, e))?;
    let model = Model::from_json(&text)
        .map_err(|e| CliError::Data(format!("{}: {e}", args.model.display())))?;
    let prep_path = args
        .preprocessing
        .unwrap_or_else(|| preprocessing_path(&args.model));
    let prep: Option<Preprocessing> = if prep_path.exists() {
        let text = fs::read_to_string(&prep_path).map_err(|e| io_error(&prep_path, e))?;
        Some(
            serde_json::from_str(&text)
                .map_err(|e| CliError::Data(format!("{}: {e}", prep_path.display())))?,
        )
    } else {
        None
    };
    let schema = match &args.schema {
        Some(p) => Some(load_schema(Some(p), None)?),
        None => prep.as_ref().map(|p| p.schema.clone()),
    };

    let window = prep.as_ref().and_then(|p| p.window);
    let inputs = match (window, &schema) {
        (Some(spec), Some(schema)) => {
            let series = load_csv(&args.data, schema)?.targets.to_vec();
            windowize(&series, spec)?.inputs
        }
        (None, Some(schema)) => load_features(&args.data, schema)?,
        (_, None) => load_matrix(&args.data)?,
    };
    if inputs.ncols() != model.input_dim() {
        return Err(CliError::Data(format!(
            "model expects {} inputs but {} has {}",
            model.input_dim(),
            args.data.display(),
            inputs.ncols()
        )));
    }
    let predictions = match &prep {
        Some(p) => {
            let scaled = p.scaler.transform_inputs(&inputs)?;
            p.scaler.denormalize(&model.predict_batch(scaled.view())?)
        }
        None => model.predict_batch(inputs.view())?,
    };

    let mut csv = String::from("index,prediction\n");
    for (i, p) in predictions.iter().enumerate() {
        csv.push_str(&format!("{i},{p}\n"));
    }
    match &args.out {
        Some(path) => write_file(path, csv.as_bytes()),
        None => {
            use std::io::Write as _;
            match std::io::stdout().lock().write_all(csv.as_bytes()) {
                Err(e) if e.kind() != std::io::ErrorKind::BrokenPipe => {
                    Err(CliError::Data(format!("writing predictions: {e}")))
                }
                _ => Ok(()),
            }
        }
    }
}

fn thread_count(seeds: u64) -> Result<usize, CliError> {
    let available = std::thread::available_parallelism().map_or(1, |n| n.get());
    let cap = match std::env::var("TSKICFNN_THREADS") {
        Ok(v) => v
            .trim()
            .parse::<usize>()
            .ok()
            .filter(|&n| n > 0)
            .ok_or_else(|| {
                CliError::Config(format!(
                    "TSKICFNN_THREADS must be a positive integer, got `{v}`"
                ))
            })?,
        Err(_) => available,
    };
    Ok(cap.min(seeds.max(1) as usize))
}

fn cmd_benchmark(args: BenchmarkArgs) -> Result<(), CliError> {
    let file = FileConfig::load(args.config.as_deref())?;
    let protocol = parse_protocol(&require(args.protocol.or(file.protocol), "--protocol")?)?;
    let rules = positive_rules(require(args.rules.or(file.rules), "--rules")?)?;
    let data_path = require(args.data.or(file.data), "--data")?;
    let seeds = args.seeds.or(file.seeds).unwrap_or(10);
    if seeds == 0 {
        return Err(CliError::Config("--seeds must be at least 1".into()));
    }
    let modes = match args.mode.as_str() {
        "both" => vec![Mode::Stepwise, Mode::Backprop],
        other => vec![other
            .parse::<Mode>()
            .map_err(|e| CliError::Config(e.to_string()))?],
    };
    let out_dir = args
        .out_dir
        .or(file.out_dir)
        .unwrap_or_else(|| PathBuf::from("."));
    let schema = load_schema(args.schema.or(file.schema).as_deref(), Some(protocol))?;
    let base = merge_training(&file.training, &args.training, None, None)?;
    let eta0 = args.training.eta0.or(file.training.eta0);
    let threads = thread_count(seeds)?;

    let raw = load_csv(&data_path, &schema)?;
    let mut results = Vec::new();
    for mode in modes {
        let spec = BenchmarkSpec {
            protocol,
            rules,
            config: tskicfnn::TrainConfig {
                mode,
                ..base.clone()
            },
            eta0,
            n_seeds: seeds,
            threads,
        };
        results.push(run_benchmark(&raw, &spec)?);
    }

    let stem = format!("{}_r{rules}", protocol.name());
    let table = format_table(&results);
    write_file(&out_dir.join(format!("{stem}.json")), &to_json(&results))?;
    write_file(&out_dir.join(format!("{stem}.txt")), table.as_bytes())?;
    if let Some(rows) = results.first().and_then(|r| r.plot.as_ref()) {
        let mut csv = String::from("index,actual,predicted,error\n");
        for r in rows {
            csv.push_str(&format!(
                "{},{},{},{}\n",
                r.index, r.actual, r.predicted, r.error
            ));
        }
        write_file(&out_dir.join(format!("{stem}_plot.csv")), csv.as_bytes())?;
    }
    print!("{table}");
    if let Some(r) = results.iter().find(|r| r.failed_seeds == r.runs.len()) {
        return Err(CliError::Training(format!(
            "every {} seed diverged",
            r.mode
        )));
    }
    Ok(())
}

fn cmd_inspect(args: InspectArgs) -> Result<(), CliError> {
    let text = fs::read_to_string(&args.model).map_err(|e| io_error(&args.model, e))?;
    let model = Model::from_json(&text)
        .map_err(|e| CliError::Data(format!("{}: {e}", args.model.display())))?;
    print!("{}", render::model(&model));
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Train(a) => cmd_train(a),
        Command::Predict(a) => cmd_predict(a),
        Command::Benchmark(a) => cmd_benchmark(a),
        Command::Inspect(a) => cmd_inspect(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
