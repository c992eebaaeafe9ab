//! Desired firing strengths from the per-instance equality-constrained
//! projection.
//!
//! For every instance `q` the current strengths `φ_q` are moved the shortest
//! Euclidean distance onto the hyperplane `ψ · y_q = y*_q`, where `y_q` holds
//! the rule hyperplane outputs at that instance:
//!
//! ```text
//! λ_q = (Σ_i φ_iq y_iq - y*_q) / Σ_i y_iq²
//! ψ_lq = φ_lq - λ_q y_lq
//! ```
//!
//! Targets are not clipped to `[0, 1]`.

use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis, Zip};

use crate::error::{Error, Result};

/// Instances whose `Σ y²` falls below this are left at `ψ = φ`.
pub const DEGENERACY_THRESHOLD: f64 = 1e-12;

#[derive(Clone, Debug, PartialEq)]
pub struct PremiseTargets {
    /// `N × R` desired firing strengths.
    pub psi: Array2<f64>,
    /// One multiplier per instance.
    pub lagrange: Array1<f64>,
    /// Number of instances skipped because their rule outputs were all ~0.
    pub degenerate: usize,
}

/// Solves the projection row by row. `phi` and `rule_outputs` are `N × R`.
pub fn solve_targets(
    phi: ArrayView2<'_, f64>,
    rule_outputs: ArrayView2<'_, f64>,
    targets: ArrayView1<'_, f64>,
) -> Result<PremiseTargets> {
    if phi.dim() != rule_outputs.dim() {
        return Err(Error::Config(format!(
            "firing strengths are {:?} but rule outputs are {:?}",
            phi.dim(),
            rule_outputs.dim()
        )));
    }
    if phi.nrows() != targets.len() {
        return Err(Error::Dimension {
            expected: phi.nrows(),
            got: targets.len(),
        });
    }

    let mut psi = phi.to_owned();
    let mut lagrange = Array1::zeros(phi.nrows());
    Zip::from(psi.rows_mut())
        .and(&mut lagrange)
        .and(rule_outputs.rows())
        .and(phi.rows())
        .and(&targets)
        .for_each(|mut psi_row, lam, y, phi_row, &target| {
            let norm_sq = y.dot(&y);
            if norm_sq < DEGENERACY_THRESHOLD {
                return;
            }
            *lam = (phi_row.dot(&y) - target) / norm_sq;
            psi_row.zip_mut_with(&y, |p, &yi| *p -= *lam * yi);
        });

    let degenerate = rule_outputs
        .axis_iter(Axis(0))
        .filter(|y| y.dot(y) < DEGENERACY_THRESHOLD)
        .count();

    Ok(PremiseTargets {
        psi,
        lagrange,
        degenerate,
    })
}
