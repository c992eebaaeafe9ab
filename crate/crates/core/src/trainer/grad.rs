//! Objectives and their analytic gradients.
//!
//! All objectives are in sum form (`½ Σ …`). Gradients are returned as
//! descent steps `Δθ = -∂J/∂θ`, laid out like [`Model::parameters`].
//!
//! With `s_l = (z_l²)^β` and `g_l = β s_l / z_l` the log-activation of a rule
//! has the derivatives
//!
//! ```text
//! ∂ ln μ / ∂Γ[l][j] = -g_l (x_j - M_j)
//! ∂ ln μ / ∂M_j     =  Σ_l g_l Γ[l][j]
//! ∂ ln μ / ∂β       = -½ Σ_l s_l ln z_l²
//! ```
//!
//! which the premise fit multiplies by `(μ - ψ) μ` and full backpropagation
//! by `e (y_i - ŷ) φ_i`.

use ndarray::{ArrayView1, ArrayView2};

use crate::model::{powered_square, ForwardTrace, Model, SQUARE_FLOOR};
use crate::premise::PremiseTargets;

/// Gradient entries are clamped to this magnitude.
pub const GRADIENT_CLAMP: f64 = 1e6;

/// Forward traces for a whole batch, reused across steps.
#[derive(Clone, Debug)]
pub struct TraceBatch {
    pub traces: Vec<ForwardTrace>,
}

impl TraceBatch {
    pub fn new(model: &Model, n_rows: usize) -> Self {
        TraceBatch {
            traces: vec![ForwardTrace::with_shape(model.input_dim(), model.n_rules()); n_rows],
        }
    }

    /// Runs the model over every row of `inputs`.
    pub fn evaluate(&mut self, model: &Model, inputs: ArrayView2<'_, f64>) {
        if self.traces.len() != inputs.nrows()
            || self
                .traces
                .first()
                .is_some_and(|t| t.n_rules() != model.n_rules())
        {
            *self = TraceBatch::new(model, inputs.nrows());
        }
        for (trace, row) in self.traces.iter_mut().zip(inputs.rows()) {
            match row.as_slice() {
                Some(x) => model.forward_into(x, trace),
                None => model.forward_into(&row.to_vec(), trace),
            }
        }
    }

    pub fn outputs(&self) -> Vec<f64> {
        self.traces.iter().map(|t| t.output).collect()
    }
}

/// Descent direction plus the number of entries that had to be clamped.
#[derive(Clone, Debug, PartialEq)]
pub struct Gradient {
    pub delta: Vec<f64>,
    pub clamped: usize,
}

impl Gradient {
    fn finish(mut delta: Vec<f64>) -> Self {
        let mut clamped = 0;
        for d in &mut delta {
            if d.is_nan() {
                *d = 0.0;
                clamped += 1;
            } else if d.abs() > GRADIENT_CLAMP {
                *d = d.signum() * GRADIENT_CLAMP;
                clamped += 1;
            }
        }
        Gradient { delta, clamped }
    }
}

/// Offsets of one rule's parameter groups inside the flat layout.
#[derive(Clone, Copy, Debug)]
pub(crate) struct RuleLayout {
    pub center: usize,
    pub transform: usize,
    pub beta: usize,
    pub consequent: usize,
}

pub(crate) fn rule_layout(n: usize, i: usize) -> RuleLayout {
    let stride = 2 * n + 2 + n * n;
    let center = i * stride;
    RuleLayout {
        center,
        transform: center + n,
        beta: center + n + n * n,
        consequent: center + n + n * n + 1,
    }
}

/// Flat indices of every premise parameter (center, transform, β).
pub fn premise_indices(model: &Model) -> Vec<usize> {
    let n = model.input_dim();
    (0..model.n_rules())
        .flat_map(|i| {
            let l = rule_layout(n, i);
            l.center..l.consequent
        })
        .collect()
}

/// Flat indices of every consequent parameter.
pub fn consequent_indices(model: &Model) -> Vec<usize> {
    let n = model.input_dim();
    (0..model.n_rules())
        .flat_map(|i| {
            let l = rule_layout(n, i);
            l.consequent..l.consequent + n + 1
        })
        .collect()
}

/// Adds `weight · ∂ ln μ_i / ∂θ` for rule `i`'s premise parameters into `acc`.
fn accumulate_log_activation(
    model: &Model,
    trace: &ForwardTrace,
    x: &[f64],
    i: usize,
    weight: f64,
    acc: &mut [f64],
) {
    if weight == 0.0 {
        return;
    }
    let n = model.input_dim();
    let rule = &model.rules()[i];
    let beta = rule.shape_regulator;
    let layout = rule_layout(n, i);
    let z = trace.rule_z(i);
    let mut beta_grad = 0.0;
    for (l, &zl) in z.iter().enumerate() {
        if zl == 0.0 {
            continue;
        }
        let s = powered_square(zl, beta);
        let g = beta * s / zl;
        beta_grad += s * (zl * zl).max(SQUARE_FLOOR).ln();
        let row = &rule.transform[l * n..(l + 1) * n];
        for j in 0..n {
            acc[layout.transform + l * n + j] -= weight * g * (x[j] - rule.center[j]);
            acc[layout.center + j] += weight * g * row[j];
        }
    }
    acc[layout.beta] -= weight * 0.5 * beta_grad;
}

/// `J₁ = ½ Σ_k Σ_i (φ_ik - ψ_ik)²`.
pub fn objective_targets(batch: &TraceBatch, targets: &PremiseTargets) -> f64 {
    0.5 * batch
        .traces
        .iter()
        .zip(targets.psi.rows())
        .map(|(t, psi)| {
            t.firing_strength
                .iter()
                .zip(psi)
                .map(|(p, s)| (p - s).powi(2))
                .sum::<f64>()
        })
        .sum::<f64>()
}

/// `J₂ = ½ Σ_k Σ_i (μ_ik - ψ_ik)²`.
pub fn objective_premise(batch: &TraceBatch, targets: &PremiseTargets) -> f64 {
    0.5 * batch
        .traces
        .iter()
        .zip(targets.psi.rows())
        .map(|(t, psi)| {
            t.rule_activation
                .iter()
                .zip(psi)
                .map(|(m, s)| (m - s).powi(2))
                .sum::<f64>()
        })
        .sum::<f64>()
}

/// `J₃ = ½ Σ_k (ŷ_k - y*_k)²`.
pub fn objective_output(batch: &TraceBatch, targets: ArrayView1<'_, f64>) -> f64 {
    0.5 * batch
        .traces
        .iter()
        .zip(targets)
        .map(|(t, y)| (t.output - y).powi(2))
        .sum::<f64>()
}

/// Descent step of `J₂` with respect to every premise parameter.
/// Consequent entries are zero.
pub fn grad_premise(
    model: &Model,
    inputs: ArrayView2<'_, f64>,
    batch: &TraceBatch,
    targets: &PremiseTargets,
) -> Gradient {
    let mut grad = vec![0.0; model.parameter_count()];
    for ((trace, row), psi) in batch
        .traces
        .iter()
        .zip(inputs.rows())
        .zip(targets.psi.rows())
    {
        let x = row.to_vec();
        for i in 0..model.n_rules() {
            let mu = trace.rule_activation[i];
            accumulate_log_activation(model, trace, &x, i, (mu - psi[i]) * mu, &mut grad);
        }
    }
    grad.iter_mut().for_each(|g| *g = -*g);
    Gradient::finish(grad)
}

/// Descent step of `J₃` with respect to every consequent parameter.
/// Premise entries are zero.
pub fn grad_consequent(
    model: &Model,
    inputs: ArrayView2<'_, f64>,
    batch: &TraceBatch,
    targets: ArrayView1<'_, f64>,
) -> Gradient {
    let n = model.input_dim();
    let mut grad = vec![0.0; model.parameter_count()];
    for ((trace, row), &target) in batch.traces.iter().zip(inputs.rows()).zip(targets) {
        let e = trace.output - target;
        accumulate_consequent(n, trace, row, e, &mut grad);
    }
    grad.iter_mut().for_each(|g| *g = -*g);
    Gradient::finish(grad)
}

fn accumulate_consequent(
    n: usize,
    trace: &ForwardTrace,
    x: ArrayView1<'_, f64>,
    e: f64,
    acc: &mut [f64],
) {
    for (i, &phi) in trace.firing_strength.iter().enumerate() {
        let base = rule_layout(n, i).consequent;
        let w = e * phi;
        acc[base] += w;
        for (j, xj) in x.iter().enumerate() {
            acc[base + 1 + j] += w * xj;
        }
    }
}

/// Descent step of `J₃` with respect to every parameter, backpropagating
/// the output error through the normalization layer.
pub fn grad_backprop(
    model: &Model,
    inputs: ArrayView2<'_, f64>,
    batch: &TraceBatch,
    targets: ArrayView1<'_, f64>,
) -> Gradient {
    let n = model.input_dim();
    let mut grad = vec![0.0; model.parameter_count()];
    for ((trace, row), &target) in batch.traces.iter().zip(inputs.rows()).zip(targets) {
        let e = trace.output - target;
        accumulate_consequent(n, trace, row, e, &mut grad);
        let x = row.to_vec();
        for i in 0..model.n_rules() {
            // ∂ŷ/∂μ_i · μ_i = (y_i - ŷ) φ_i
            let w = e * (trace.rule_output[i] - trace.output) * trace.firing_strength[i];
            accumulate_log_activation(model, trace, &x, i, w, &mut grad);
        }
    }
    grad.iter_mut().for_each(|g| *g = -*g);
    Gradient::finish(grad)
}
