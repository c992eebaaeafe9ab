//! Reference implementations written directly from the model equations,
//! without sharing code with the crate.

#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Parameters of one rule laid out as `[center n][Γ n×n][β][a_0..a_n]`.
pub fn rule_stride(n: usize) -> usize {
    n + n * n + 1 + n + 1
}

pub struct Oracle {
    pub n: usize,
    pub r: usize,
}

pub struct Eval {
    pub mu: Vec<f64>,
    pub phi: Vec<f64>,
    pub y: Vec<f64>,
    pub out: f64,
}

impl Oracle {
    pub fn eval(&self, p: &[f64], x: &[f64]) -> Eval {
        let (n, r) = (self.n, self.r);
        let s = rule_stride(n);
        let mut mu = vec![0.0; r];
        let mut y = vec![0.0; r];
        for i in 0..r {
            let b = &p[i * s..(i + 1) * s];
            let center = &b[..n];
            let gamma = &b[n..n + n * n];
            let beta = b[n + n * n];
            let a = &b[n + n * n + 1..];
            let mut act = 1.0;
            for l in 0..n {
                let mut z = 0.0;
                for j in 0..n {
                    z += gamma[l * n + j] * (x[j] - center[j]);
                }
                act *= (-0.5 * (z * z).powf(beta)).exp();
            }
            mu[i] = act;
            y[i] = a[0] + (0..n).map(|j| a[j + 1] * x[j]).sum::<f64>();
        }
        let total: f64 = mu.iter().sum();
        let phi: Vec<f64> = mu.iter().map(|m| m / total).collect();
        let out = phi.iter().zip(&y).map(|(f, v)| f * v).sum();
        Eval { mu, phi, y, out }
    }

    /// `½ Σ_k Σ_i (μ_ik - ψ_ik)²`
    pub fn j2(&self, p: &[f64], xs: &[Vec<f64>], psi: &[Vec<f64>]) -> f64 {
        xs.iter()
            .zip(psi)
            .map(|(x, ps)| {
                let e = self.eval(p, x);
                e.mu.iter()
                    .zip(ps)
                    .map(|(m, q)| (m - q).powi(2))
                    .sum::<f64>()
            })
            .sum::<f64>()
            * 0.5
    }

    /// `½ Σ_k (ŷ_k - y*_k)²`
    pub fn j3(&self, p: &[f64], xs: &[Vec<f64>], t: &[f64]) -> f64 {
        xs.iter()
            .zip(t)
            .map(|(x, yt)| (self.eval(p, x).out - yt).powi(2))
            .sum::<f64>()
            * 0.5
    }
}

/// Central difference of `f` at `p` along coordinate `idx`, with a
/// fourth-order Richardson correction.
pub fn central_difference(f: &dyn Fn(&[f64]) -> f64, p: &[f64], idx: usize) -> f64 {
    let h = 1e-5 * p[idx].abs().max(1.0);
    let at = |step: f64| {
        let mut q = p.to_vec();
        q[idx] += step;
        f(&q)
    };
    let d1 = (at(h) - at(-h)) / (2.0 * h);
    let d2 = (at(h / 2.0) - at(-h / 2.0)) / h;
    (4.0 * d2 - d1) / 3.0
}

/// Relative error with a unit floor on the scale, so entries that are
/// zero analytically are compared absolutely.
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1.0)
}

/// Solves the dense system `a · x = b` by Gaussian elimination with
/// partial pivoting.
pub fn gauss_solve(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Vec<f64> {
    let m = b.len();
    for col in 0..m {
        let piv = (col..m)
            .max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs()))
            .unwrap();
        a.swap(col, piv);
        b.swap(col, piv);
        for row in col + 1..m {
            let f = a[row][col] / a[col][col];
            let pivot_row = a[col].clone();
            for (v, p) in a[row].iter_mut().zip(&pivot_row).skip(col) {
                *v -= f * p;
            }
            b[row] -= f * b[col];
        }
    }
    let mut x = vec![0.0; m];
    for row in (0..m).rev() {
        let s: f64 = (row + 1..m).map(|c| a[row][c] * x[c]).sum();
        x[row] = (b[row] - s) / a[row][row];
    }
    x
}

/// Closest point to `phi` on the hyperplane `Σ ψ_i y_i = target`, from the
/// full KKT system `[I y; yᵀ 0] [ψ; λ] = [φ; target]`.
pub fn kkt_projection(phi: &[f64], y: &[f64], target: f64) -> (Vec<f64>, f64) {
    let r = phi.len();
    let mut a = vec![vec![0.0; r + 1]; r + 1];
    for i in 0..r {
        a[i][i] = 1.0;
        a[i][r] = y[i];
        a[r][i] = y[i];
    }
    let mut b = phi.to_vec();
    b.push(target);
    let x = gauss_solve(a, b);
    (x[..r].to_vec(), x[r])
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Random flat parameters with `β` drawn from `beta_range`.
pub fn random_params(rng: &mut ChaCha8Rng, n: usize, r: usize, beta_range: (f64, f64)) -> Vec<f64> {
    let mut p = Vec::with_capacity(r * rule_stride(n));
    for _ in 0..r {
        for _ in 0..n {
            p.push(rng.random_range(-1.0..1.0));
        }
        for l in 0..n {
            for j in 0..n {
                let base = if l == j { 1.0 } else { 0.0 };
                p.push(base + rng.random_range(-0.5..0.5));
            }
        }
        p.push(rng.random_range(beta_range.0..beta_range.1));
        for _ in 0..=n {
            p.push(rng.random_range(-1.0..1.0));
        }
    }
    p
}

/// Worst relative error between the crate's analytic gradients and finite
/// differences of the oracle objectives, over `configs` random problems.
///
/// Checks `J2` over premise parameters, `J3` over consequents, and the
/// backprop gradient of `J3` over every parameter.
pub fn worst_gradient_error(configs: usize, seed: u64) -> GradientCheck {
    use tskicfnn::ndarray::{Array1, Array2};
    use tskicfnn::premise::PremiseTargets;
    use tskicfnn::trainer::{
        consequent_indices, grad_backprop, grad_consequent, grad_premise, premise_indices,
        TraceBatch,
    };
    use tskicfnn::Model;

    let mut rng = rng(seed);
    let mut check = GradientCheck::default();
    for _ in 0..configs {
        let n = rng.random_range(1..=4);
        let r = rng.random_range(1..=3);
        let rows = rng.random_range(1..=20);
        let p = random_params(&mut rng, n, r, (0.5, 2.0));
        let xs: Vec<Vec<f64>> = (0..rows)
            .map(|_| (0..n).map(|_| rng.random_range(-1.0..1.0)).collect())
            .collect();
        let t: Vec<f64> = (0..rows).map(|_| rng.random_range(-1.0..1.0)).collect();
        let psi: Vec<Vec<f64>> = (0..rows)
            .map(|_| (0..r).map(|_| rng.random_range(0.0..1.0)).collect())
            .collect();

        let mut model = Model::init_random(n, r, 0).unwrap();
        model.set_parameters(&p).unwrap();
        let inputs = Array2::from_shape_fn((rows, n), |(k, j)| xs[k][j]);
        let targets = Array1::from(t.clone());
        let mut batch = TraceBatch::new(&model, rows);
        batch.evaluate(&model, inputs.view());
        let premise_targets = PremiseTargets {
            psi: Array2::from_shape_fn((rows, r), |(k, i)| psi[k][i]),
            lagrange: Array1::zeros(rows),
            degenerate: 0,
        };

        let oracle = Oracle { n, r };
        let j2 = |q: &[f64]| oracle.j2(q, &xs, &psi);
        let j3 = |q: &[f64]| oracle.j3(q, &xs, &t);

        let gp = grad_premise(&model, inputs.view(), &batch, &premise_targets);
        for idx in premise_indices(&model) {
            let e = relative_error(-gp.delta[idx], central_difference(&j2, &p, idx));
            check.premise = check.premise.max(e);
        }
        let gc = grad_consequent(&model, inputs.view(), &batch, targets.view());
        for idx in consequent_indices(&model) {
            let e = relative_error(-gc.delta[idx], central_difference(&j3, &p, idx));
            check.consequent = check.consequent.max(e);
        }
        let gb = grad_backprop(&model, inputs.view(), &batch, targets.view());
        for idx in 0..p.len() {
            let e = relative_error(-gb.delta[idx], central_difference(&j3, &p, idx));
            check.backprop = check.backprop.max(e);
        }
        check.configs += 1;
    }
    check
}

#[derive(Debug, Default, Clone, Copy)]
pub struct GradientCheck {
    pub configs: usize,
    pub premise: f64,
    pub consequent: f64,
    pub backprop: f64,
}

impl GradientCheck {
    pub fn worst(&self) -> f64 {
        self.premise.max(self.consequent).max(self.backprop)
    }
}
