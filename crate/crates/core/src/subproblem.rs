//! One cycle of coordinate descent on a worker's block of the penalized
//! quadratic model.
//!
//! With the Hessian replaced by its block-diagonal part, the model splits
//! into independent problems, one per feature block. Each coordinate step
//! minimizes
//!
//! ```text
//! ½ Σ_i w_i (q_i − u x_ij)² + (ν/2)(u − β_j)² + λ|u|,   u = β_j + Δβ_j
//! ```
//!
//! exactly, where `q_i = z_i − Δβᵀx_i + (β_j + Δβ_j) x_ij` uses the block's own
//! direction only.

use crate::data::{FeaturePosting, FeatureShard};
use crate::error::{Error, Result};
use crate::glm::QuadraticWorkspace;

/// Soft-threshold `sgn(x)·max(|x| − a, 0)`. Returns an exact zero inside the
/// dead zone.
#[inline]
pub fn soft_threshold(x: f64, a: f64) -> f64 {
    debug_assert!(a >= 0.0);
    if x > a {
        x - a
    } else if x < -a {
        x + a
    } else {
        0.0
    }
}

/// Block direction computed by one worker.
#[derive(Debug, Clone, PartialEq)]
pub struct SubproblemResult {
    /// `Δβ_j` for each owned feature, parallel to `FeatureShard::features`.
    pub delta_beta: Vec<f64>,
    /// `(Δβ^m)ᵀx_i` for every example.
    pub delta_margins: Vec<f64>,
}

impl SubproblemResult {
    pub fn is_zero(&self) -> bool {
        self.delta_beta.iter().all(|&d| d == 0.0)
    }

    /// Scatters `Δβ^m` into a dense vector of length `p`.
    pub fn scatter_delta_beta(&self, shard: &FeatureShard, out: &mut [f64]) {
        for (&j, &d) in shard.features().iter().zip(&self.delta_beta) {
            out[j] = d;
        }
    }
}

/// Exact minimization over one coordinate. Updates `delta_margins` in place
/// and returns the new `Δβ_j`.
#[allow(clippy::too_many_arguments)]
pub fn coordinate_update(
    postings: &[FeaturePosting],
    workspace: &QuadraticWorkspace,
    beta_j: f64,
    current_delta_j: f64,
    delta_margins: &mut [f64],
    lambda: f64,
    nu: f64,
) -> f64 {
    let current = beta_j + current_delta_j;
    let mut num = nu * beta_j;
    let mut den = nu;
    for e in postings {
        let i = e.example;
        let x = e.value;
        let wx = workspace.w[i] * x;
        let q = workspace.z[i] - delta_margins[i] + current * x;
        num += wx * q;
        den += wx * x;
    }
    let updated = soft_threshold(num, lambda) / den;
    let new_delta = updated - beta_j;
    let change = new_delta - current_delta_j;
    if change != 0.0 {
        for e in postings {
            delta_margins[e.example] += change * e.value;
        }
    }
    new_delta
}

/// One ascending-order pass of [`coordinate_update`] over the shard's
/// features, starting from `Δβ^m = 0`.
pub fn solve_subproblem(
    shard: &FeatureShard,
    workspace: &QuadraticWorkspace,
    beta: &[f64],
    lambda: f64,
    nu: f64,
) -> Result<SubproblemResult> {
    if workspace.n() != shard.n() || workspace.z.len() != shard.n() {
        return Err(Error::InvalidInput(format!(
            "workspace covers {} examples, shard has {}",
            workspace.n(),
            shard.n()
        )));
    }
    if beta.len() != shard.p() {
        return Err(Error::InvalidInput(format!(
            "beta has length {}, shard has p = {}",
            beta.len(),
            shard.p()
        )));
    }
    if !(nu > 0.0) || !(lambda >= 0.0) {
        return Err(Error::InvalidInput(format!(
            "need nu > 0 and lambda >= 0, got nu = {nu}, lambda = {lambda}"
        )));
    }
    let mut delta_margins = vec![0.0; shard.n()];
    let mut delta_beta = vec![0.0; shard.features().len()];
    for (k, &j) in shard.features().iter().enumerate() {
        delta_beta[k] = coordinate_update(
            shard.postings(k),
            workspace,
            beta[j],
            0.0,
            &mut delta_margins,
            lambda,
            nu,
        );
    }
    Ok(SubproblemResult {
        delta_beta,
        delta_margins,
    })
}
