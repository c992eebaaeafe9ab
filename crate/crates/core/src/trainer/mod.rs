//! Training loops.
//!
//! [`Mode::Stepwise`] alternates three phases per epoch: desired firing
//! strengths are solved in closed form, premise parameters are regressed
//! toward them, then consequents are regressed toward the targets.
//! [`Mode::Backprop`] runs plain batch gradient descent of the output error
//! over every parameter of the same network, with the same learning-rate
//! schedule and stopping thresholds.

mod grad;
mod lr;

use ndarray::{Array2, ArrayView2};
use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::eval::rmse;
use crate::model::{Model, BETA_MAX, BETA_MIN};
use crate::premise::{solve_targets, PremiseTargets};

pub use grad::{
    consequent_indices, grad_backprop, grad_consequent, grad_premise, objective_output,
    objective_premise, objective_targets, premise_indices, Gradient, TraceBatch, GRADIENT_CLAMP,
};
pub use lr::{lr_update, LrState};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Stepwise,
    Backprop,
}

impl std::str::FromStr for Mode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "stepwise" => Ok(Mode::Stepwise),
            "backprop" => Ok(Mode::Backprop),
            other => Err(Error::Config(format!(
                "unknown mode `{other}` (expected stepwise or backprop)"
            ))),
        }
    }
}

impl std::fmt::Display for Mode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Mode::Stepwise => "stepwise",
            Mode::Backprop => "backprop",
        })
    }
}

/// Hyperparameters of a training run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    /// Initial learning rate of every parameter.
    pub eta0: f64,
    /// Premise-phase stop threshold on the change of mean `(μ - ψ)²`.
    pub delta_mu: f64,
    /// Consequent-phase stop threshold on the change of the output MSE.
    pub delta_e: f64,
    /// Epoch-level stop threshold on the change of the sum-form objective.
    pub epsilon: f64,
    /// Step-averaging factor of the learning-rate schedule.
    pub alpha: f64,
    /// Learning-rate decay factor.
    pub zeta: f64,
    pub iter_max: usize,
    pub t_max: usize,
    pub tprime_max: usize,
    pub mode: Mode,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            eta0: 1e-3,
            delta_mu: 1e-3,
            delta_e: 1e-3,
            epsilon: 1e-6,
            alpha: 0.7,
            zeta: 0.9,
            iter_max: 200,
            t_max: 500,
            tprime_max: 500,
            mode: Mode::Stepwise,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("eta0", self.eta0),
            ("delta_mu", self.delta_mu),
            ("delta_e", self.delta_e),
            ("epsilon", self.epsilon),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::Config(format!("{name} must be positive, got {v}")));
            }
        }
        for (name, v) in [("alpha", self.alpha), ("zeta", self.zeta)] {
            if !(v > 0.0 && v < 1.0) {
                return Err(Error::Config(format!("{name} must lie in (0, 1), got {v}")));
            }
        }
        for (name, v) in [
            ("iter_max", self.iter_max),
            ("t_max", self.t_max),
            ("tprime_max", self.tprime_max),
        ] {
            if v == 0 {
                return Err(Error::Config(format!("{name} must be at least 1")));
            }
        }
        Ok(())
    }
}

/// Per-epoch summary. Objectives are in sum form.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    /// Optimal target-problem value after both phases, with desired
    /// strengths re-solved at the new parameters. Absent for backprop.
    pub j1: Option<f64>,
    /// Premise-fit objective when the premise phase stopped. Absent for backprop.
    pub j2: Option<f64>,
    pub j3: f64,
    pub train_rmse: f64,
    pub premise_steps: usize,
    pub consequent_steps: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub mode: Mode,
    pub seed: u64,
    pub epochs_run: usize,
    pub history: Vec<EpochRecord>,
    /// Epoch whose parameters were returned; 0 means the initial model
    /// beat every epoch.
    pub best_epoch: usize,
    pub train_rmse: f64,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub test_rmse: Option<f64>,
    pub degenerate_instances: usize,
    pub clamped_gradients: usize,
    /// Set by callers that time the run; the trainer leaves it empty so
    /// reports are reproducible.
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub wall_time_secs: Option<f64>,
}

/// Progress notifications emitted while training.
#[derive(Clone, Debug, PartialEq)]
pub enum TrainEvent {
    TargetsSolved { epoch: usize },
    PremiseStep { epoch: usize, step: usize, mse: f64 },
    ConsequentStep { epoch: usize, step: usize, mse: f64 },
    EpochDone(EpochRecord),
}

/// Trains with the algorithm selected by `cfg.mode`.
pub fn train(model: Model, data: &Dataset, cfg: &TrainConfig) -> Result<(Model, TrainReport)> {
    train_observed(model, data, cfg, &mut |_| {})
}

/// As [`train`], reporting progress to `observer`.
pub fn train_observed(
    model: Model,
    data: &Dataset,
    cfg: &TrainConfig,
    observer: &mut dyn FnMut(&TrainEvent),
) -> Result<(Model, TrainReport)> {
    cfg.validate()?;
    model.validate()?;
    if data.is_empty() {
        return Err(Error::Data("training set is empty".into()));
    }
    if data.input_dim() != model.input_dim() {
        return Err(Error::Dimension {
            expected: model.input_dim(),
            got: data.input_dim(),
        });
    }
    let mut run = Run::new(model, data, cfg);
    match cfg.mode {
        Mode::Stepwise => run.stepwise(observer)?,
        Mode::Backprop => run.backprop(observer)?,
    }
    let report = run.finish(cfg);
    Ok((run.best, report))
}

pub fn train_stepwise(
    model: Model,
    data: &Dataset,
    cfg: &TrainConfig,
) -> Result<(Model, TrainReport)> {
    let cfg = TrainConfig {
        mode: Mode::Stepwise,
        ..cfg.clone()
    };
    train(model, data, &cfg)
}

pub fn train_backprop(
    model: Model,
    data: &Dataset,
    cfg: &TrainConfig,
) -> Result<(Model, TrainReport)> {
    let cfg = TrainConfig {
        mode: Mode::Backprop,
        ..cfg.clone()
    };
    train(model, data, &cfg)
}

struct Run<'a> {
    model: Model,
    best: Model,
    best_j3: f64,
    best_epoch: usize,
    inputs: ArrayView2<'a, f64>,
    data: &'a Dataset,
    cfg: &'a TrainConfig,
    batch: TraceBatch,
    lr: LrState,
    params: Vec<f64>,
    premise_idx: Vec<usize>,
    consequent_idx: Vec<usize>,
    all_idx: Vec<usize>,
    beta_idx: Vec<usize>,
    history: Vec<EpochRecord>,
    degenerate: usize,
    clamped: usize,
}

impl<'a> Run<'a> {
    fn new(model: Model, data: &'a Dataset, cfg: &'a TrainConfig) -> Self {
        let inputs = data.inputs.view();
        let mut batch = TraceBatch::new(&model, data.len());
        batch.evaluate(&model, inputs);
        let premise_idx = premise_indices(&model);
        let consequent_idx = consequent_indices(&model);
        let n = model.input_dim();
        let beta_idx = (0..model.n_rules())
            .map(|i| grad::rule_layout(n, i).beta)
            .collect();
        let params = model.parameters();
        let initial_j3 = objective_output(&batch, data.targets.view());
        Run {
            best: model.clone(),
            best_j3: if initial_j3.is_finite() {
                initial_j3
            } else {
                f64::INFINITY
            },
            best_epoch: 0,
            lr: LrState::new(params.len(), cfg.eta0),
            all_idx: (0..params.len()).collect(),
            params,
            model,
            inputs,
            data,
            cfg,
            batch,
            premise_idx,
            consequent_idx,
            beta_idx,
            history: Vec::new(),
            degenerate: 0,
            clamped: 0,
        }
    }

    fn n(&self) -> f64 {
        self.data.len() as f64
    }

    fn refresh(&mut self) {
        self.batch.evaluate(&self.model, self.inputs);
    }

    /// Applies `θ += η Δθ` to `indices`, clamps β, then adapts the rates.
    fn step(&mut self, indices: &[usize], grad: &Gradient) {
        for &i in indices {
            self.params[i] += self.lr.eta[i] * grad.delta[i];
        }
        for &i in &self.beta_idx {
            self.params[i] = self.params[i].clamp(BETA_MIN, BETA_MAX);
        }
        self.model
            .set_parameters(&self.params)
            .expect("parameter layout is fixed for a run");
        self.lr
            .update(indices, &grad.delta, self.cfg.alpha, self.cfg.zeta);
        self.clamped += grad.clamped;
        self.refresh();
    }

    fn output_mse(&self) -> f64 {
        2.0 * objective_output(&self.batch, self.data.targets.view()) / self.n()
    }

    fn solve_current(&self) -> Result<PremiseTargets> {
        let r = self.model.n_rules();
        let rows = self.batch.traces.len();
        let phi =
            Array2::from_shape_fn((rows, r), |(k, i)| self.batch.traces[k].firing_strength[i]);
        let outs = Array2::from_shape_fn((rows, r), |(k, i)| self.batch.traces[k].rule_output[i]);
        solve_targets(phi.view(), outs.view(), self.data.targets.view())
    }

    fn solve(&mut self) -> Result<PremiseTargets> {
        let t = self.solve_current()?;
        self.degenerate += t.degenerate;
        Ok(t)
    }

    /// Optimal value of the target problem at the current parameters.
    fn target_objective(&self) -> Result<f64> {
        Ok(objective_targets(&self.batch, &self.solve_current()?))
    }

    fn keep_if_best(&mut self, epoch: usize, j3: f64) {
        if j3 < self.best_j3 {
            self.best_j3 = j3;
            self.best = self.model.clone();
            self.best_epoch = epoch;
        }
    }

    fn stepwise(&mut self, observer: &mut dyn FnMut(&TrainEvent)) -> Result<()> {
        let cfg = self.cfg;
        let per_target = self.n() * self.model.n_rules() as f64;
        let mut e1 = self.target_objective()?;
        check_finite(e1, 0, "initial target objective")?;

        for epoch in 1..=cfg.iter_max {
            let targets = self.solve()?;
            observer(&TrainEvent::TargetsSolved { epoch });

            let premise_idx = std::mem::take(&mut self.premise_idx);
            self.lr.reset(&premise_idx, cfg.eta0);
            let mut e2 = 2.0 * objective_premise(&self.batch, &targets) / per_target;
            let mut premise_steps = 0;
            for step in 1..=cfg.t_max {
                let g = grad_premise(&self.model, self.inputs, &self.batch, &targets);
                self.step(&premise_idx, &g);
                premise_steps = step;
                let e2_new = 2.0 * objective_premise(&self.batch, &targets) / per_target;
                check_finite(e2_new, epoch, "premise phase")?;
                observer(&TrainEvent::PremiseStep {
                    epoch,
                    step,
                    mse: e2_new,
                });
                let done = (e2 - e2_new).abs() < cfg.delta_mu;
                e2 = e2_new;
                if done {
                    break;
                }
            }
            self.premise_idx = premise_idx;
            let j2 = e2 * per_target / 2.0;

            let consequent_idx = std::mem::take(&mut self.consequent_idx);
            self.lr.reset(&consequent_idx, cfg.eta0);
            let mut e3 = self.output_mse();
            let mut consequent_steps = 0;
            for step in 1..=cfg.tprime_max {
                let g = grad_consequent(
                    &self.model,
                    self.inputs,
                    &self.batch,
                    self.data.targets.view(),
                );
                self.step(&consequent_idx, &g);
                consequent_steps = step;
                let e3_new = self.output_mse();
                check_finite(e3_new, epoch, "consequent phase")?;
                observer(&TrainEvent::ConsequentStep {
                    epoch,
                    step,
                    mse: e3_new,
                });
                let done = (e3 - e3_new).abs() < cfg.delta_e;
                e3 = e3_new;
                if done {
                    break;
                }
            }
            self.consequent_idx = consequent_idx;

            let e1_new = self.target_objective()?;
            check_finite(e1_new, epoch, "target objective")?;
            let record = EpochRecord {
                epoch,
                j1: Some(e1_new),
                j2: Some(j2),
                j3: e3 * self.n() / 2.0,
                train_rmse: e3.sqrt(),
                premise_steps,
                consequent_steps,
            };
            self.keep_if_best(epoch, record.j3);
            observer(&TrainEvent::EpochDone(record.clone()));
            self.history.push(record);
            if (e1 - e1_new).abs() < cfg.epsilon {
                break;
            }
            e1 = e1_new;
        }
        Ok(())
    }

    fn backprop(&mut self, observer: &mut dyn FnMut(&TrainEvent)) -> Result<()> {
        let cfg = self.cfg;
        let all_idx = std::mem::take(&mut self.all_idx);
        let mut e_outer = objective_output(&self.batch, self.data.targets.view());
        check_finite(e_outer, 0, "initial output error")?;

        for epoch in 1..=cfg.iter_max {
            self.lr.reset(&all_idx, cfg.eta0);
            let mut e3 = self.output_mse();
            let mut steps = 0;
            for step in 1..=cfg.t_max {
                let g = grad_backprop(
                    &self.model,
                    self.inputs,
                    &self.batch,
                    self.data.targets.view(),
                );
                self.step(&all_idx, &g);
                steps = step;
                let e3_new = self.output_mse();
                check_finite(e3_new, epoch, "backprop phase")?;
                observer(&TrainEvent::ConsequentStep {
                    epoch,
                    step,
                    mse: e3_new,
                });
                let done = (e3 - e3_new).abs() < cfg.delta_e;
                e3 = e3_new;
                if done {
                    break;
                }
            }
            let record = EpochRecord {
                epoch,
                j1: None,
                j2: None,
                j3: e3 * self.n() / 2.0,
                train_rmse: e3.sqrt(),
                premise_steps: 0,
                consequent_steps: steps,
            };
            let record_j3 = record.j3;
            self.keep_if_best(epoch, record_j3);
            observer(&TrainEvent::EpochDone(record.clone()));
            self.history.push(record);
            if (e_outer - record_j3).abs() < cfg.epsilon {
                break;
            }
            e_outer = record_j3;
        }
        self.all_idx = all_idx;
        Ok(())
    }

    fn finish(&self, cfg: &TrainConfig) -> TrainReport {
        let predictions = self
            .best
            .predict_batch(self.inputs)
            .expect("dimensions validated before training");
        TrainReport {
            mode: cfg.mode,
            seed: cfg.seed,
            epochs_run: self.history.len(),
            history: self.history.clone(),
            best_epoch: self.best_epoch,
            train_rmse: rmse(
                &predictions,
                self.data.targets.as_slice().expect("contiguous targets"),
            )
            .expect("lengths match"),
            test_rmse: None,
            degenerate_instances: self.degenerate,
            clamped_gradients: self.clamped,
            wall_time_secs: None,
        }
    }
}

fn check_finite(v: f64, epoch: usize, phase: &'static str) -> Result<()> {
    if v.is_finite() {
        Ok(())
    } else {
        Err(Error::NonFinite { epoch, phase })
    }
}
