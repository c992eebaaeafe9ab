//! Network parameterization and the seven-layer forward pass.
//!
//! Each rule owns a center `M`, a square mixing matrix `Γ`, a shape
//! regulator `β` and an affine consequent `a`. For an input `x` the rule
//! computes transformed features `z_l = Σ_j Γ[l][j] (x_j - M_j)` (row `l` of
//! `Γ` produces feature `l`), per-feature memberships `exp(-½ (z_l²)^β)`,
//! their product `μ`, the normalized firing strength `φ = μ / Σ μ`, the
//! hyperplane output `y = a_0 + Σ a_j x_j`, and finally `ŷ = Σ φ y`.

use std::fs;
use std::path::Path;

use ndarray::ArrayView2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Rule activations are floored here before normalization so that a batch
/// of fully underflowed activations never produces `0 / 0`.
pub const ACTIVATION_FLOOR: f64 = 1e-300;

/// Lower bound applied to `z²` before taking its logarithm.
pub const SQUARE_FLOOR: f64 = 1e-300;

/// Admissible range for the shape regulator; training clamps into it.
pub const BETA_MIN: f64 = 0.1;
pub const BETA_MAX: f64 = 10.0;

/// Version tag written into serialized models.
pub const MODEL_FORMAT_VERSION: u32 = 1;

/// `(z²)^β`, evaluated as `exp(β ln z²)`. Exactly zero at `z = 0`.
#[inline]
pub fn powered_square(z: f64, beta: f64) -> f64 {
    if z == 0.0 {
        return 0.0;
    }
    (beta * (z * z).max(SQUARE_FLOOR).ln()).exp()
}

/// Generalized Gaussian membership `exp(-½ (z²)^β)`.
///
/// Returns exactly 1 at `z = 0` for every `β > 0`.
#[inline]
pub fn membership(z: f64, beta: f64) -> f64 {
    (-0.5 * powered_square(z, beta)).exp()
}

/// Parameters of a single fuzzy rule.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RuleParams {
    /// Rule center `M`, length `n`.
    pub center: Vec<f64>,
    /// Mixing matrix `Γ`, row-major `n × n`.
    pub transform: Vec<f64>,
    /// Shape regulator `β`.
    pub shape_regulator: f64,
    /// Consequent hyperplane, bias first: `a_0, a_1, …, a_n`.
    pub consequent: Vec<f64>,
}

impl RuleParams {
    /// Rule with identity mixing, `β = 1` and a zero consequent.
    pub fn axis_aligned(center: Vec<f64>) -> Self {
        let n = center.len();
        let mut transform = vec![0.0; n * n];
        for l in 0..n {
            transform[l * n + l] = 1.0;
        }
        RuleParams {
            center,
            transform,
            shape_regulator: 1.0,
            consequent: vec![0.0; n + 1],
        }
    }

    pub fn input_dim(&self) -> usize {
        self.center.len()
    }

    #[inline]
    pub fn transform_at(&self, row: usize, col: usize) -> f64 {
        self.transform[row * self.center.len() + col]
    }

    /// Transformed features `z = Γ (x - M)`.
    pub fn transform_inputs(&self, x: &[f64]) -> Result<Vec<f64>> {
        check_dim(self.input_dim(), x.len())?;
        let mut z = vec![0.0; x.len()];
        self.transform_into(x, &mut z);
        Ok(z)
    }

    #[inline]
    pub(crate) fn transform_into(&self, x: &[f64], z: &mut [f64]) {
        let n = self.center.len();
        for (l, zl) in z.iter_mut().enumerate() {
            let row = &self.transform[l * n..(l + 1) * n];
            *zl = row
                .iter()
                .zip(x.iter().zip(&self.center))
                .map(|(g, (xj, mj))| g * (xj - mj))
                .sum();
        }
    }

    /// Hyperplane output `a_0 + Σ a_j x_j`.
    #[inline]
    pub fn consequent_output(&self, x: &[f64]) -> f64 {
        self.consequent[0]
            + self.consequent[1..]
                .iter()
                .zip(x)
                .map(|(a, xj)| a * xj)
                .sum::<f64>()
    }

    fn validate(&self, n: usize) -> Result<()> {
        check_dim(n, self.center.len())?;
        check_dim(n * n, self.transform.len())?;
        check_dim(n + 1, self.consequent.len())?;
        if !(self.shape_regulator > 0.0 && self.shape_regulator.is_finite()) {
            return Err(Error::Config(format!(
                "shape regulator must be positive and finite, got {}",
                self.shape_regulator
            )));
        }
        let all_finite = self
            .center
            .iter()
            .chain(&self.transform)
            .chain(&self.consequent)
            .all(|v| v.is_finite());
        if !all_finite {
            return Err(Error::Config("rule parameters must be finite".into()));
        }
        Ok(())
    }
}

/// Intermediate values of one forward pass.
///
/// Per-feature quantities are stored flat, rule-major: entry `i * n + l`
/// belongs to rule `i`, feature `l`.
#[derive(Clone, Debug, PartialEq)]
pub struct ForwardTrace {
    pub input_dim: usize,
    pub z: Vec<f64>,
    pub dim_memberships: Vec<f64>,
    /// Floored rule activations `μ_i`.
    pub rule_activation: Vec<f64>,
    pub firing_strength: Vec<f64>,
    pub rule_output: Vec<f64>,
    pub weighted_output: Vec<f64>,
    /// Sum of the floored activations (normalization denominator).
    pub activation_sum: f64,
    pub output: f64,
}

impl ForwardTrace {
    pub(crate) fn with_shape(n: usize, r: usize) -> Self {
        ForwardTrace {
            input_dim: n,
            z: vec![0.0; r * n],
            dim_memberships: vec![0.0; r * n],
            rule_activation: vec![0.0; r],
            firing_strength: vec![0.0; r],
            rule_output: vec![0.0; r],
            weighted_output: vec![0.0; r],
            activation_sum: 0.0,
            output: 0.0,
        }
    }

    pub fn n_rules(&self) -> usize {
        self.rule_activation.len()
    }

    /// Transformed features of rule `i`.
    pub fn rule_z(&self, i: usize) -> &[f64] {
        &self.z[i * self.input_dim..(i + 1) * self.input_dim]
    }

    pub fn rule_memberships(&self, i: usize) -> &[f64] {
        &self.dim_memberships[i * self.input_dim..(i + 1) * self.input_dim]
    }
}

/// An ordered rule base over a fixed input dimension.
#[derive(Clone, Debug, PartialEq)]
pub struct Model {
    input_dim: usize,
    rules: Vec<RuleParams>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ModelDocument {
    version: u32,
    input_dim: usize,
    rules: Vec<RuleParams>,
}

impl Model {
    pub fn new(input_dim: usize, rules: Vec<RuleParams>) -> Result<Self> {
        let model = Model { input_dim, rules };
        model.validate()?;
        Ok(model)
    }

    pub fn validate(&self) -> Result<()> {
        if self.input_dim == 0 {
            return Err(Error::Config("input dimension must be at least 1".into()));
        }
        if self.rules.is_empty() {
            return Err(Error::Config("a model needs at least one rule".into()));
        }
        self.rules
            .iter()
            .try_for_each(|r| r.validate(self.input_dim))
    }

    /// Random model with centers drawn from `U(-1, 1)`.
    pub fn init_random(input_dim: usize, n_rules: usize, seed: u64) -> Result<Self> {
        if input_dim == 0 {
            return Err(Error::Config("input dimension must be at least 1".into()));
        }
        Self::init_with_ranges(&vec![(-1.0, 1.0); input_dim], n_rules, seed)
    }

    /// Random model with centers drawn uniformly from per-dimension ranges,
    /// typically the `(min, max)` of the training inputs.
    ///
    /// `Γ = I + U(-0.05, 0.05)`, `β = 1`, consequents `U(-0.1, 0.1)`.
    pub fn init_with_ranges(ranges: &[(f64, f64)], n_rules: usize, seed: u64) -> Result<Self> {
        let n = ranges.len();
        if n == 0 {
            return Err(Error::Config("input dimension must be at least 1".into()));
        }
        if n_rules == 0 {
            return Err(Error::Config("a model needs at least one rule".into()));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut uniform = |lo: f64, hi: f64| lo + (hi - lo) * rng.random::<f64>();
        let rules = (0..n_rules)
            .map(|_| {
                let center = ranges.iter().map(|&(lo, hi)| uniform(lo, hi)).collect();
                let mut transform = vec![0.0; n * n];
                for (idx, g) in transform.iter_mut().enumerate() {
                    let diag = if idx / n == idx % n { 1.0 } else { 0.0 };
                    *g = diag + uniform(-0.05, 0.05);
                }
                let consequent = (0..=n).map(|_| uniform(-0.1, 0.1)).collect();
                RuleParams {
                    center,
                    transform,
                    shape_regulator: 1.0,
                    consequent,
                }
            })
            .collect();
        Model::new(n, rules)
    }

    pub fn input_dim(&self) -> usize {
        self.input_dim
    }

    pub fn n_rules(&self) -> usize {
        self.rules.len()
    }

    pub fn rules(&self) -> &[RuleParams] {
        &self.rules
    }

    pub fn rules_mut(&mut self) -> &mut [RuleParams] {
        &mut self.rules
    }

    /// Number of trainable scalars: `2R + 2Rn + Rn²`.
    pub fn parameter_count(&self) -> usize {
        let (n, r) = (self.input_dim, self.rules.len());
        2 * r + 2 * r * n + r * n * n
    }

    /// All trainable scalars, rule by rule: center, transform, β, consequent.
    pub fn parameters(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.parameter_count());
        for rule in &self.rules {
            out.extend_from_slice(&rule.center);
            out.extend_from_slice(&rule.transform);
            out.push(rule.shape_regulator);
            out.extend_from_slice(&rule.consequent);
        }
        out
    }

    /// Inverse of [`Model::parameters`]. No clamping is applied.
    pub fn set_parameters(&mut self, values: &[f64]) -> Result<()> {
        check_dim(self.parameter_count(), values.len())?;
        let mut it = values.iter().copied();
        for rule in &mut self.rules {
            for v in rule
                .center
                .iter_mut()
                .chain(rule.transform.iter_mut())
                .chain(std::iter::once(&mut rule.shape_regulator))
                .chain(rule.consequent.iter_mut())
            {
                *v = it.next().expect("length checked above");
            }
        }
        Ok(())
    }

    pub fn forward(&self, x: &[f64]) -> Result<ForwardTrace> {
        check_dim(self.input_dim, x.len())?;
        let mut trace = ForwardTrace::with_shape(self.input_dim, self.rules.len());
        self.forward_into(x, &mut trace);
        Ok(trace)
    }

    /// Forward pass into a preallocated trace. `x` must have length `n`.
    pub(crate) fn forward_into(&self, x: &[f64], t: &mut ForwardTrace) {
        let n = self.input_dim;
        let mut sum = 0.0;
        for (i, rule) in self.rules.iter().enumerate() {
            let z = &mut t.z[i * n..(i + 1) * n];
            rule.transform_into(x, z);
            let mu = &mut t.dim_memberships[i * n..(i + 1) * n];
            let mut act = 1.0;
            for (m, &zl) in mu.iter_mut().zip(z.iter()) {
                *m = membership(zl, rule.shape_regulator);
                act *= *m;
            }
            let act = act.max(ACTIVATION_FLOOR);
            t.rule_activation[i] = act;
            t.rule_output[i] = rule.consequent_output(x);
            sum += act;
        }
        t.activation_sum = sum;
        let mut out = 0.0;
        for i in 0..self.rules.len() {
            let phi = t.rule_activation[i] / sum;
            t.firing_strength[i] = phi;
            t.weighted_output[i] = phi * t.rule_output[i];
            out += t.weighted_output[i];
        }
        t.output = out;
    }

    /// Network output for one input.
    pub fn predict(&self, x: &[f64]) -> Result<f64> {
        Ok(self.forward(x)?.output)
    }

    /// Network outputs for every row of `inputs`.
    pub fn predict_batch(&self, inputs: ArrayView2<'_, f64>) -> Result<Vec<f64>> {
        check_dim(self.input_dim, inputs.ncols())?;
        let mut trace = ForwardTrace::with_shape(self.input_dim, self.rules.len());
        let mut row_buf = vec![0.0; self.input_dim];
        Ok(inputs
            .rows()
            .into_iter()
            .map(|row| {
                for (b, v) in row_buf.iter_mut().zip(row.iter()) {
                    *b = *v;
                }
                self.forward_into(&row_buf, &mut trace);
                trace.output
            })
            .collect())
    }

    pub fn to_json(&self) -> Result<String> {
        let doc = ModelDocument {
            version: MODEL_FORMAT_VERSION,
            input_dim: self.input_dim,
            rules: self.rules.clone(),
        };
        Ok(serde_json::to_string_pretty(&doc)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let doc: ModelDocument = serde_json::from_str(text)?;
        if doc.version != MODEL_FORMAT_VERSION {
            return Err(Error::Format(format!(
                "unsupported model version {}",
                doc.version
            )));
        }
        Model::new(doc.input_dim, doc.rules).map_err(|e| Error::Format(e.to_string()))
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        fs::write(path, self.to_json()? + "\n")?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_json(&fs::read_to_string(path)?)
    }
}

#[inline]
pub(crate) fn check_dim(expected: usize, got: usize) -> Result<()> {
    if expected != got {
        return Err(Error::Dimension { expected, got });
    }
    Ok(())
}
