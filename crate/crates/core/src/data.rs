//! Dataset loading, cleaning, windowing, splitting and scaling.

use std::fmt;
use std::fs::File;
use std::io::Read;
use std::path::Path;
use std::str::FromStr;

use ndarray::{Array1, Array2, Axis};
use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Which part of a benchmark a dataset holds.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SplitKind {
    Train,
    Test,
    All,
}

/// A regression dataset: `N × n` inputs and `N` targets.
#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub name: String,
    pub inputs: Array2<f64>,
    pub targets: Array1<f64>,
    pub split: SplitKind,
    /// Scaling applied to this data, if any.
    pub scaler: Option<Scaler>,
    /// Rows dropped while loading because of missing values.
    pub dropped_rows: usize,
}

impl Dataset {
    pub fn new(name: impl Into<String>, inputs: Array2<f64>, targets: Array1<f64>) -> Result<Self> {
        if inputs.nrows() != targets.len() {
            return Err(Error::Dimension {
                expected: inputs.nrows(),
                got: targets.len(),
            });
        }
        Ok(Dataset {
            name: name.into(),
            inputs,
            targets,
            split: SplitKind::All,
            scaler: None,
            dropped_rows: 0,
        })
    }

    pub fn len(&self) -> usize {
        self.targets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.targets.is_empty()
    }

    pub fn input_dim(&self) -> usize {
        self.inputs.ncols()
    }

    /// `(min, max)` of every input column.
    pub fn input_ranges(&self) -> Vec<(f64, f64)> {
        self.inputs
            .columns()
            .into_iter()
            .map(|c| {
                c.iter()
                    .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| {
                        (lo.min(v), hi.max(v))
                    })
            })
            .collect()
    }

    /// Rows selected by `indices`, in that order.
    pub fn select(&self, indices: &[usize], split: SplitKind) -> Dataset {
        Dataset {
            name: self.name.clone(),
            inputs: self.inputs.select(Axis(0), indices),
            targets: self.targets.select(Axis(0), indices),
            split,
            scaler: self.scaler.clone(),
            dropped_rows: self.dropped_rows,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    Feature,
    Target,
    Ignore,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ColumnSpec {
    pub name: String,
    pub role: Role,
    /// Categorical levels; a cell equal to `levels[i]` is encoded as `i`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub levels: Option<Vec<String>>,
}

/// Column layout of a CSV file.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Schema {
    pub columns: Vec<ColumnSpec>,
    #[serde(default = "default_missing")]
    pub missing_token: String,
    #[serde(default = "default_true")]
    pub header: bool,
}

fn default_missing() -> String {
    "?".to_string()
}

fn default_true() -> bool {
    true
}

impl Schema {
    pub fn from_json(text: &str) -> Result<Self> {
        let schema: Schema = serde_json::from_str(text)?;
        schema.validate()?;
        Ok(schema)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    fn validate(&self) -> Result<()> {
        let targets = self
            .columns
            .iter()
            .filter(|c| c.role == Role::Target)
            .count();
        if targets != 1 {
            return Err(Error::Config(format!(
                "schema needs exactly one target column, found {targets}"
            )));
        }
        Ok(())
    }

    pub fn n_features(&self) -> usize {
        self.columns
            .iter()
            .filter(|c| c.role == Role::Feature)
            .count()
    }

    fn column(name: &str, role: Role) -> ColumnSpec {
        ColumnSpec {
            name: name.to_string(),
            role,
            levels: None,
        }
    }

    /// Single closing-price column after a date column.
    pub fn stock() -> Self {
        Schema {
            columns: vec![
                Self::column("date", Role::Ignore),
                Self::column("close", Role::Target),
            ],
            missing_token: default_missing(),
            header: true,
        }
    }

    pub fn auto_mpg() -> Self {
        use Role::*;
        let cols = [
            ("mpg", Target),
            ("cylinders", Feature),
            ("displacement", Feature),
            ("horsepower", Feature),
            ("weight", Feature),
            ("acceleration", Feature),
            ("model_year", Feature),
            ("origin", Ignore),
            ("car_name", Ignore),
        ];
        Schema {
            columns: cols.iter().map(|&(n, r)| Self::column(n, r)).collect(),
            missing_token: default_missing(),
            header: true,
        }
    }

    pub fn abalone() -> Self {
        let mut columns = vec![ColumnSpec {
            name: "sex".into(),
            role: Role::Feature,
            levels: Some(vec!["M".into(), "F".into(), "I".into()]),
        }];
        for name in [
            "length",
            "diameter",
            "height",
            "whole_weight",
            "shucked_weight",
            "viscera_weight",
            "shell_weight",
        ] {
            columns.push(Self::column(name, Role::Feature));
        }
        columns.push(Self::column("rings", Role::Target));
        Schema {
            columns,
            missing_token: default_missing(),
            header: true,
        }
    }

    pub fn california_housing() -> Self {
        let mut columns: Vec<ColumnSpec> = [
            "MedInc",
            "HouseAge",
            "AveRooms",
            "AveBedrms",
            "Population",
            "AveOccup",
            "Latitude",
            "Longitude",
        ]
        .iter()
        .map(|n| Self::column(n, Role::Feature))
        .collect();
        columns.push(Self::column("MedHouseVal", Role::Target));
        Schema {
            columns,
            missing_token: default_missing(),
            header: true,
        }
    }
}

enum Cell {
    Value(f64),
    Missing,
}

fn parse_cell(raw: &str, spec: &ColumnSpec, missing: &str) -> std::result::Result<Cell, String> {
    let raw = raw.trim();
    if raw == missing || raw.is_empty() {
        return Ok(Cell::Missing);
    }
    if let Some(levels) = &spec.levels {
        return levels
            .iter()
            .position(|l| l == raw)
            .map(|i| Cell::Value(i as f64))
            .ok_or_else(|| format!("column `{}`: unknown level `{raw}`", spec.name));
    }
    match raw.parse::<f64>() {
        Ok(v) if v.is_finite() => Ok(Cell::Value(v)),
        _ => Err(format!(
            "column `{}`: cannot parse `{raw}` as a number",
            spec.name
        )),
    }
}

/// Reads a CSV file laid out by `schema`.
///
/// Rows with a missing feature or target are dropped and counted; row order
/// is otherwise preserved.
pub fn load_csv(path: impl AsRef<Path>, schema: &Schema) -> Result<Dataset> {
    let path = path.as_ref();
    let mut text = String::new();
    File::open(path)?.read_to_string(&mut text)?;
    let name = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    parse_csv(&text, schema, path, &name)
}

pub(crate) fn parse_csv(text: &str, schema: &Schema, path: &Path, name: &str) -> Result<Dataset> {
    schema.validate()?;
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(schema.header)
        .flexible(true)
        .from_reader(text.as_bytes());
    let n_features = schema.n_features();
    let mut values = Vec::new();
    let mut targets = Vec::new();
    let mut dropped = 0;
    let parse_err = |line: u64, msg: String| Error::Parse {
        path: path.to_path_buf(),
        line,
        msg,
    };

    for record in reader.records() {
        let record = record.map_err(|e| {
            let line = e.position().map(|p| p.line()).unwrap_or(0);
            parse_err(line, e.to_string())
        })?;
        let line = record.position().map(|p| p.line()).unwrap_or(0);
        if record.len() == 1 && record[0].trim().is_empty() {
            continue;
        }
        if record.len() != schema.columns.len() {
            return Err(parse_err(
                line,
                format!(
                    "expected {} fields, found {}",
                    schema.columns.len(),
                    record.len()
                ),
            ));
        }
        let mut row = Vec::with_capacity(n_features);
        let mut target = None;
        let mut missing = false;
        for (raw, spec) in record.iter().zip(&schema.columns) {
            if spec.role == Role::Ignore {
                continue;
            }
            match parse_cell(raw, spec, &schema.missing_token).map_err(|m| parse_err(line, m))? {
                Cell::Missing => missing = true,
                Cell::Value(v) if spec.role == Role::Target => target = Some(v),
                Cell::Value(v) => row.push(v),
            }
        }
        if missing {
            dropped += 1;
            continue;
        }
        values.extend(row);
        targets.push(target.expect("schema has one target"));
    }

    if targets.is_empty() {
        return Err(Error::Data(format!("{}: no usable rows", path.display())));
    }
    let inputs = Array2::from_shape_vec((targets.len(), n_features), values)
        .expect("row widths fixed by schema");
    let mut ds = Dataset::new(name, inputs, Array1::from(targets))?;
    ds.dropped_rows = dropped;
    Ok(ds)
}

/// Reads only the feature columns of `schema`; the target cell may be absent
/// or missing. Rows with a missing feature are rejected.
pub fn load_features(path: impl AsRef<Path>, schema: &Schema) -> Result<Array2<f64>> {
    let path = path.as_ref();
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(schema.header)
        .flexible(true)
        .from_path(path)
        .map_err(|e| Error::Data(e.to_string()))?;
    let features: Vec<(usize, &ColumnSpec)> = schema
        .columns
        .iter()
        .enumerate()
        .filter(|(_, c)| c.role == Role::Feature)
        .collect();
    let mut values = Vec::new();
    let mut rows = 0;
    for record in reader.records() {
        let record = record.map_err(|e| Error::Parse {
            path: path.to_path_buf(),
            line: e.position().map(|p| p.line()).unwrap_or(0),
            msg: e.to_string(),
        })?;
        let line = record.position().map(|p| p.line()).unwrap_or(0);
        for &(idx, spec) in &features {
            let raw = record.get(idx).ok_or_else(|| Error::Parse {
                path: path.to_path_buf(),
                line,
                msg: format!("missing column `{}`", spec.name),
            })?;
            match parse_cell(raw, spec, &schema.missing_token) {
                Ok(Cell::Value(v)) => values.push(v),
                Ok(Cell::Missing) => {
                    return Err(Error::Parse {
                        path: path.to_path_buf(),
                        line,
                        msg: format!("missing value in `{}`", spec.name),
                    })
                }
                Err(msg) => {
                    return Err(Error::Parse {
                        path: path.to_path_buf(),
                        line,
                        msg,
                    })
                }
            }
        }
        rows += 1;
    }
    Ok(Array2::from_shape_vec((rows, features.len()), values).expect("fixed row width"))
}

/// Reads a headerless or headed CSV whose every column is numeric.
pub fn load_matrix(path: impl AsRef<Path>) -> Result<Array2<f64>> {
    let path = path.as_ref();
    let mut text = String::new();
    File::open(path)?.read_to_string(&mut text)?;
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .from_reader(text.as_bytes());
    let mut values = Vec::new();
    let mut width = None;
    let mut rows = 0;
    for (idx, record) in reader.records().enumerate() {
        let record = record.map_err(|e| Error::Parse {
            path: path.to_path_buf(),
            line: e.position().map(|p| p.line()).unwrap_or(0),
            msg: e.to_string(),
        })?;
        let line = record.position().map(|p| p.line()).unwrap_or(0);
        let parsed: std::result::Result<Vec<f64>, _> =
            record.iter().map(|c| c.trim().parse::<f64>()).collect();
        match parsed {
            Ok(row) => {
                if *width.get_or_insert(row.len()) != row.len() {
                    return Err(Error::Parse {
                        path: path.to_path_buf(),
                        line,
                        msg: "inconsistent number of fields".into(),
                    });
                }
                values.extend(row);
                rows += 1;
            }
            // first line may be a header
            Err(_) if idx == 0 => continue,
            Err(e) => {
                return Err(Error::Parse {
                    path: path.to_path_buf(),
                    line,
                    msg: e.to_string(),
                })
            }
        }
    }
    let width = width.ok_or_else(|| Error::Data(format!("{}: no rows", path.display())))?;
    Ok(Array2::from_shape_vec((rows, width), values).expect("fixed row width"))
}

/// Sliding-window parameters for one-step-ahead prediction.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct WindowSpec {
    pub lag: usize,
}

impl WindowSpec {
    pub const HORIZON: usize = 1;
}

/// Row `k` has inputs `s[k..k+lag]` and target `s[k+lag]`.
pub fn windowize(series: &[f64], spec: WindowSpec) -> Result<Dataset> {
    let lag = spec.lag;
    if lag == 0 {
        return Err(Error::Config("window lag must be at least 1".into()));
    }
    if series.len() <= lag {
        return Err(Error::Data(format!(
            "series of length {} is too short for lag {lag}",
            series.len()
        )));
    }
    let rows = series.len() - lag;
    let inputs = Array2::from_shape_fn((rows, lag), |(k, j)| series[k + j]);
    let targets = Array1::from_iter((0..rows).map(|k| series[k + lag]));
    Dataset::new(format!("window{lag}"), inputs, targets)
}

/// Per-column min-max scaling, fit on one split and applied to others.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Scaler {
    pub feature_min: Vec<f64>,
    pub feature_scale: Vec<f64>,
    pub target_min: f64,
    pub target_scale: f64,
}

fn min_scale<'a>(values: impl Iterator<Item = &'a f64>) -> (f64, f64) {
    let (lo, hi) = values.fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| {
        (lo.min(v), hi.max(v))
    });
    let span = hi - lo;
    (lo, if span > 0.0 { span } else { 1.0 })
}

impl Scaler {
    pub fn fit(data: &Dataset) -> Result<Self> {
        if data.is_empty() {
            return Err(Error::Data(
                "cannot fit a scaler on an empty dataset".into(),
            ));
        }
        let (feature_min, feature_scale) = data
            .inputs
            .columns()
            .into_iter()
            .map(|c| min_scale(c.iter()))
            .unzip();
        let (target_min, target_scale) = min_scale(data.targets.iter());
        Ok(Scaler {
            feature_min,
            feature_scale,
            target_min,
            target_scale,
        })
    }

    pub fn transform_inputs(&self, inputs: &Array2<f64>) -> Result<Array2<f64>> {
        if inputs.ncols() != self.feature_min.len() {
            return Err(Error::Dimension {
                expected: self.feature_min.len(),
                got: inputs.ncols(),
            });
        }
        let mut out = inputs.clone();
        for (mut col, (lo, s)) in out
            .columns_mut()
            .into_iter()
            .zip(self.feature_min.iter().zip(&self.feature_scale))
        {
            col.mapv_inplace(|v| (v - lo) / s);
        }
        Ok(out)
    }

    pub fn transform(&self, data: &Dataset) -> Result<Dataset> {
        Ok(Dataset {
            name: data.name.clone(),
            inputs: self.transform_inputs(&data.inputs)?,
            targets: data
                .targets
                .mapv(|v| (v - self.target_min) / self.target_scale),
            split: data.split,
            scaler: Some(self.clone()),
            dropped_rows: data.dropped_rows,
        })
    }

    /// Maps normalized outputs back to target units.
    pub fn denormalize(&self, values: &[f64]) -> Vec<f64> {
        values
            .iter()
            .map(|v| v * self.target_scale + self.target_min)
            .collect()
    }
}

/// Min-max normalizes a dataset with statistics from itself.
pub fn normalize(data: &Dataset) -> Result<Dataset> {
    Scaler::fit(data)?.transform(data)
}

pub fn denormalize(predictions: &[f64], scaler: &Scaler) -> Vec<f64> {
    scaler.denormalize(predictions)
}

/// Benchmark split protocols.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Protocol {
    AutoMpgCase1,
    AutoMpgCase2,
    Abalone,
    CaliforniaCase1,
    CaliforniaCase2,
    GoogleStock,
    SydneyStock,
}

impl Protocol {
    pub const ALL: [Protocol; 7] = [
        Protocol::AutoMpgCase1,
        Protocol::AutoMpgCase2,
        Protocol::Abalone,
        Protocol::CaliforniaCase1,
        Protocol::CaliforniaCase2,
        Protocol::GoogleStock,
        Protocol::SydneyStock,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Protocol::AutoMpgCase1 => "auto_mpg_case1",
            Protocol::AutoMpgCase2 => "auto_mpg_case2",
            Protocol::Abalone => "abalone",
            Protocol::CaliforniaCase1 => "california_case1",
            Protocol::CaliforniaCase2 => "california_case2",
            Protocol::GoogleStock => "google_stock",
            Protocol::SydneyStock => "sydney_stock",
        }
    }

    pub fn default_schema(self) -> Schema {
        match self {
            Protocol::AutoMpgCase1 | Protocol::AutoMpgCase2 => Schema::auto_mpg(),
            Protocol::Abalone => Schema::abalone(),
            Protocol::CaliforniaCase1 | Protocol::CaliforniaCase2 => Schema::california_housing(),
            Protocol::GoogleStock | Protocol::SydneyStock => Schema::stock(),
        }
    }

    /// Window spec for time-series protocols.
    pub fn window(self) -> Option<WindowSpec> {
        match self {
            Protocol::GoogleStock => Some(WindowSpec { lag: 3 }),
            Protocol::SydneyStock => Some(WindowSpec { lag: 4 }),
            _ => None,
        }
    }

    pub fn is_time_series(self) -> bool {
        self.window().is_some()
    }

    /// `(total rows, training rows)` for shuffled protocols.
    fn random_sizes(self) -> Option<(usize, usize)> {
        match self {
            Protocol::AutoMpgCase1 => Some((392, 320)),
            Protocol::AutoMpgCase2 => Some((392, 196)),
            Protocol::Abalone => Some((4177, 3000)),
            Protocol::CaliforniaCase1 => Some((20640, 8000)),
            Protocol::CaliforniaCase2 => Some((20640, 10320)),
            _ => None,
        }
    }

    /// Learning rate used by the benchmark harness.
    pub fn default_eta0(self) -> f64 {
        match self {
            Protocol::Abalone | Protocol::CaliforniaCase1 | Protocol::CaliforniaCase2 => 1e-4,
            _ => 1e-3,
        }
    }

    /// Whether errors are reported in original target units.
    pub fn reports_raw_units(self) -> bool {
        self.is_time_series()
    }
}

impl fmt::Display for Protocol {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Protocol {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Protocol::ALL
            .into_iter()
            .find(|p| p.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown protocol `{s}`")))
    }
}

/// Sydney: the first this-many windows train, the rest test.
pub const SYDNEY_TRAIN_ROWS: usize = 1260;

/// Fisher-Yates over `0..n` driven by ChaCha8.
pub fn shuffled_indices(n: usize, seed: u64) -> Vec<usize> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut idx: Vec<usize> = (0..n).collect();
    for i in (1..n).rev() {
        let j = ((rng.next_u64() as u128 * (i as u128 + 1)) >> 64) as usize;
        idx.swap(i, j);
    }
    idx
}

/// Splits `data` according to `protocol`. Time-series data must already be
/// windowed.
pub fn split(data: &Dataset, protocol: Protocol, seed: u64) -> Result<(Dataset, Dataset)> {
    if let Some((total, n_train)) = protocol.random_sizes() {
        if data.len() != total {
            return Err(Error::Data(format!(
                "{protocol} expects {total} rows, found {}",
                data.len()
            )));
        }
        let idx = shuffled_indices(total, seed);
        let (train, test) = idx.split_at(n_train);
        return Ok((
            data.select(train, SplitKind::Train),
            data.select(test, SplitKind::Test),
        ));
    }
    let all: Vec<usize> = (0..data.len()).collect();
    match protocol {
        Protocol::GoogleStock => {
            if data.is_empty() {
                return Err(Error::Data("google_stock: no windows".into()));
            }
            Ok((
                data.select(&all, SplitKind::Train),
                data.select(&all, SplitKind::Test),
            ))
        }
        Protocol::SydneyStock => {
            if data.len() <= SYDNEY_TRAIN_ROWS {
                return Err(Error::Data(format!(
                    "sydney_stock needs more than {SYDNEY_TRAIN_ROWS} windows, found {}",
                    data.len()
                )));
            }
            let (train, test) = all.split_at(SYDNEY_TRAIN_ROWS);
            Ok((
                data.select(train, SplitKind::Train),
                data.select(test, SplitKind::Test),
            ))
        }
        _ => unreachable!("random protocols handled above"),
    }
}

/// Train/test pair after splitting and train-fitted normalization.
#[derive(Clone, Debug)]
pub struct Prepared {
    pub protocol: Protocol,
    pub train: Dataset,
    pub test: Dataset,
    pub scaler: Scaler,
}

/// Loads `path` with `schema`, windows time series, splits and normalizes.
pub fn prepare(
    path: impl AsRef<Path>,
    schema: &Schema,
    protocol: Protocol,
    seed: u64,
) -> Result<Prepared> {
    let raw = load_csv(path, schema)?;
    prepare_dataset(raw, protocol, seed)
}

pub fn prepare_dataset(raw: Dataset, protocol: Protocol, seed: u64) -> Result<Prepared> {
    let data = match protocol.window() {
        Some(spec) => {
            let series = raw.targets.to_vec();
            let mut windows = windowize(&series, spec)?;
            windows.name = raw.name.clone();
            windows.dropped_rows = raw.dropped_rows;
            windows
        }
        None => raw,
    };
    let (train, test) = split(&data, protocol, seed)?;
    let scaler = Scaler::fit(&train)?;
    Ok(Prepared {
        protocol,
        train: scaler.transform(&train)?,
        test: scaler.transform(&test)?,
        scaler,
    })
}
