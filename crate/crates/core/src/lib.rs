//! Correlation-aware Takagi-Sugeno-Kang fuzzy neural network.
//!
//! Every rule applies its own linear mixing to the centered input before a
//! generalized-Gaussian membership, so rule regions can be rotated and
//! skewed rather than axis-aligned. Consequents are affine in the raw input.
//!
//! Training follows a stepwise scheme that never backpropagates the output
//! error into the premise parameters:
//!
//! 1. [`premise::solve_targets`] finds, per instance, the firing strengths
//!    closest to the current ones for which the rule outputs reproduce the
//!    target exactly;
//! 2. premise parameters are fitted to those desired strengths by gradient
//!    descent;
//! 3. consequents are fitted to the targets by gradient descent.
//!
//! A conventional batch backpropagation trainer over the same network is
//! provided as a baseline ([`trainer::Mode::Backprop`]).
//!
//! ```
//! use tskicfnn::{Model, ndarray::array};
//!
//! let model = Model::init_random(2, 3, 42).unwrap();
//! let trace = model.forward(&[0.2, -0.1]).unwrap();
//! let total: f64 = trace.firing_strength.iter().sum();
//! assert!((total - 1.0).abs() < 1e-12);
//! assert_eq!(model.parameter_count(), 3 * (2 + 2 * 2 + 2 * 2));
//! # let _ = array![1.0];
//! ```

pub mod data;
pub mod error;
pub mod eval;
pub mod model;
pub mod premise;
pub mod trainer;

pub use ndarray;

pub use data::{Dataset, Protocol, Scaler, Schema, SplitKind, WindowSpec};
pub use error::{Error, Result};
pub use eval::{rmse, BenchmarkSpec, ExperimentResult};
pub use model::{membership, ForwardTrace, Model, RuleParams};
pub use premise::{solve_targets, PremiseTargets};
pub use trainer::{train, Mode, TrainConfig, TrainReport};
