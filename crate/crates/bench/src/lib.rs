//! Deterministic workloads shared by the benchmarks.

use tskicfnn::ndarray::{Array1, Array2};
use tskicfnn::{Dataset, Model, Result};

/// A smooth nonlinear regression task on `[0, 1]^n` with `rows` samples.
/// Inputs follow a low-discrepancy sequence so no RNG is involved.
pub fn synthetic(rows: usize, n: usize) -> Dataset {
    let golden = 0.618_033_988_749_895_f64;
    let x = Array2::from_shape_fn((rows, n), |(k, j)| {
        ((k + 1) as f64 * golden * (j + 1) as f64).fract()
    });
    let y = Array1::from_shape_fn(rows, |k| {
        let row = x.row(k);
        let s: f64 = row
            .iter()
            .enumerate()
            .map(|(j, v)| v * (j + 1) as f64)
            .sum();
        (s / n as f64).sin() * 0.5 + 0.5
    });
    Dataset::new("synthetic", x, y).expect("shapes agree")
}

/// A seeded model whose centers span the data's input ranges.
pub fn model_for(data: &Dataset, rules: usize) -> Result<Model> {
    Model::init_with_ranges(&data.input_ranges(), rules, 7)
}
