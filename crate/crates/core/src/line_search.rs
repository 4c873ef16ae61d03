//! Step-size selection along the merged direction.
//!
//! Everything here runs on the cached vectors of [`ModelState`] (sizes `n`
//! and `p`); the dataset itself is never needed.

use serde::{Deserialize, Serialize};

use crate::data::{LabelVector, ModelState};
use crate::error::{Error, Result};
use crate::glm::{gradient_direction_product, l1_norm, softplus};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LineSearchConfig {
    /// Backtracking factor.
    pub b: f64,
    /// Armijo sufficient-decrease constant.
    pub sigma: f64,
    /// Weight of the curvature term in the model decrease `D`.
    pub gamma: f64,
    /// Open lower bound of the `α_init` search interval.
    pub delta_lower: f64,
    /// Relative decrease that lets the full step through without a search.
    pub skip_decrease: f64,
    pub max_backtracks: usize,
}

impl Default for LineSearchConfig {
    fn default() -> Self {
        Self {
            b: 0.5,
            sigma: 0.01,
            gamma: 0.0,
            delta_lower: 2f64.powi(-10),
            skip_decrease: 1e-4,
            max_backtracks: 50,
        }
    }
}

impl LineSearchConfig {
    pub fn validate(&self) -> Result<()> {
        let ok = self.b > 0.0
            && self.b < 1.0
            && self.sigma > 0.0
            && self.sigma < 1.0
            && self.gamma >= 0.0
            && self.gamma < 1.0
            && self.delta_lower > 0.0
            && self.delta_lower < 1.0
            && self.skip_decrease >= 0.0;
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidInput(format!(
                "invalid line search config {self:?}"
            )))
        }
    }
}

/// `f(β + αΔβ)` evaluated from the margin caches in O(n + p).
pub fn candidate_objective(
    alpha: f64,
    labels: &LabelVector,
    margins: &[f64],
    delta_margins: &[f64],
    beta: &[f64],
    delta_beta: &[f64],
    lambda: f64,
) -> f64 {
    let loss: f64 = labels
        .as_slice()
        .iter()
        .zip(margins)
        .zip(delta_margins)
        .map(|((&y, &m), &d)| softplus(-y * (m + alpha * d)))
        .sum();
    let penalty: f64 = beta
        .iter()
        .zip(delta_beta)
        .map(|(&b, &d)| (b + alpha * d).abs())
        .sum();
    loss + lambda * penalty
}

/// Model decrease
/// `D = ∇L(β)ᵀΔβ + γΔβᵀH̃Δβ + λ(‖β + Δβ‖₁ − ‖β‖₁)`.
///
/// `quad_term` is only read when `gamma > 0`.
pub fn armijo_bound(
    grad_dir: f64,
    quad_term: f64,
    beta: &[f64],
    delta_beta: &[f64],
    lambda: f64,
    gamma: f64,
) -> f64 {
    let stepped: f64 = beta
        .iter()
        .zip(delta_beta)
        .map(|(&b, &d)| (b + d).abs())
        .sum();
    let curvature = if gamma > 0.0 { gamma * quad_term } else { 0.0 };
    grad_dir + curvature + lambda * (stepped - l1_norm(beta))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LineSearchOutcome {
    pub alpha: f64,
    /// `f(β + αΔβ)` at the accepted step.
    pub objective: f64,
    /// `f(β)` at the start of the search.
    pub start_objective: f64,
    /// Model decrease `D` of the direction.
    pub decrease_bound: f64,
    /// Number of `candidate_objective` evaluations beyond `f(β)`.
    pub evaluations: usize,
}

/// Chooses `α ∈ (0, 1]` for the direction stored in `state`.
///
/// 1. Accept `α = 1` outright if it gives a relative decrease of at least
///    `skip_decrease`.
/// 2. Otherwise take `α_init` as the best point of the grid
///    `{1, b, b², …} ∩ (delta_lower, 1]`.
/// 3. Backtrack from `α_init` by factors of `b` until the Armijo condition
///    `f(β + αΔβ) ≤ f(β) + ασD` holds.
///
/// The curvature term of `D` is not available from the caches, so only
/// `gamma = 0` is supported here.
pub fn line_search(
    state: &ModelState,
    labels: &LabelVector,
    lambda: f64,
    config: &LineSearchConfig,
) -> Result<LineSearchOutcome> {
    config.validate()?;
    if config.gamma != 0.0 {
        return Err(Error::InvalidInput(
            "line search from cached margins requires gamma = 0".into(),
        ));
    }
    let n = labels.len();
    if state.margins.len() != n
        || state.delta_margins.len() != n
        || state.delta_beta.len() != state.beta.len()
    {
        return Err(Error::InvalidInput(format!(
            "model state sizes disagree: margins {}, delta margins {}, labels {n}, beta {}, delta beta {}",
            state.margins.len(),
            state.delta_margins.len(),
            state.beta.len(),
            state.delta_beta.len()
        )));
    }
    let eval = |alpha: f64| {
        candidate_objective(
            alpha,
            labels,
            &state.margins,
            &state.delta_margins,
            &state.beta,
            &state.delta_beta,
            lambda,
        )
    };

    let grad_dir = gradient_direction_product(labels, &state.margins, &state.delta_margins)?;
    let d = armijo_bound(grad_dir, 0.0, &state.beta, &state.delta_beta, lambda, 0.0);
    if !(d < 0.0) {
        return Err(Error::NotDescent(d));
    }

    let f0 = eval(0.0);
    let mut evaluations = 0;

    let f1 = eval(1.0);
    evaluations += 1;
    if f1 <= f0 * (1.0 - config.skip_decrease * f0.signum()) && f1 < f0 {
        return Ok(LineSearchOutcome {
            alpha: 1.0,
            objective: f1,
            start_objective: f0,
            decrease_bound: d,
            evaluations,
        });
    }

    let (mut alpha_init, mut best) = (1.0, f1);
    let mut alpha = config.b;
    while alpha > config.delta_lower {
        let f = eval(alpha);
        evaluations += 1;
        if f < best {
            best = f;
            alpha_init = alpha;
        }
        alpha *= config.b;
    }

    let mut alpha = alpha_init;
    let mut f = best;
    for _ in 0..=config.max_backtracks {
        if f <= f0 + alpha * config.sigma * d {
            return Ok(LineSearchOutcome {
                alpha,
                objective: f,
                start_objective: f0,
                decrease_bound: d,
                evaluations,
            });
        }
        alpha *= config.b;
        f = eval(alpha);
        evaluations += 1;
    }
    Err(Error::StalledStep {
        backtracks: config.max_backtracks,
        alpha,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn one_d_state(beta: f64, delta: f64, x: &[f64]) -> ModelState {
        ModelState {
            beta: vec![beta],
            margins: x.iter().map(|v| v * beta).collect(),
            delta_beta: vec![delta],
            delta_margins: x.iter().map(|v| v * delta).collect(),
        }
    }

    #[test]
    fn candidate_objective_examples() {
        let y = LabelVector::new(vec![1.0]).unwrap();
        let f = candidate_objective(1.0, &y, &[0.0], &[1.0], &[0.0], &[1.0], 0.0);
        assert!((f - (1.0 + (-1f64).exp()).ln()).abs() < 1e-15);

        let s = one_d_state(0.3, -0.7, &[2.0]);
        let f0 = candidate_objective(0.0, &y, &s.margins, &s.delta_margins, &s.beta, &s.delta_beta, 0.4);
        assert_eq!(f0, softplus(-0.6) + 0.4 * 0.3);
    }

    #[test]
    fn armijo_bound_examples() {
        assert_eq!(armijo_bound(-1.0, 0.0, &[0.0], &[1.0], 0.5, 0.0), -0.5);
        assert_eq!(armijo_bound(0.0, 0.0, &[1.0, -2.0], &[0.0, 0.0], 0.5, 0.0), 0.0);
        assert_eq!(
            armijo_bound(-0.3, 123.0, &[0.2], &[0.1], 0.5, 0.0),
            armijo_bound(-0.3, 0.0, &[0.2], &[0.1], 0.5, 0.0)
        );
        assert_eq!(armijo_bound(-1.0, 2.0, &[0.0], &[0.0], 0.5, 0.25), -0.5);
    }

    #[test]
    fn full_step_shortcut() {
        // L = softplus(-β) at β = 0 with Δβ = 1 decreases f by far more than 1e-3.
        let y = LabelVector::new(vec![1.0]).unwrap();
        let s = one_d_state(0.0, 1.0, &[1.0]);
        let f0 = 2f64.ln();
        let f1 = softplus(-1.0);
        assert!(f1 < f0 * (1.0 - 1e-3));
        let out = line_search(&s, &y, 0.0, &LineSearchConfig::default()).unwrap();
        assert_eq!(out.alpha, 1.0);
        assert_eq!(out.evaluations, 1);
    }

    #[test]
    fn overshooting_step_picks_largest_armijo_point_from_grid() {
        // f(α) = softplus(-4α) + softplus(4α)-ish: two mirrored examples make
        // the full step overshoot the minimum at 0.
        let y = LabelVector::new(vec![1.0, -1.0, 1.0]).unwrap();
        let x = [1.0, 1.0, 1.0];
        let s = one_d_state(0.0, 4.0, &x);
        let cfg = LineSearchConfig::default();
        let out = line_search(&s, &y, 0.0, &cfg).unwrap();
        let f = |a: f64| x.iter().zip(y.as_slice()).map(|(xi, yi)| softplus(-yi * xi * 4.0 * a)).sum::<f64>();
        let f0 = f(0.0);
        let d = -4.0 * 0.5; // ∇L(0) = -(1/2)(1 - 1 + 1) = -1/2, times Δβ = 4
        assert!(out.alpha > 0.0 && out.alpha <= 1.0);
        assert!(f(out.alpha) <= f0 + out.alpha * cfg.sigma * d);

        // Independent grid evaluation: α_init is the grid argmin, and the
        // result is the largest element of {α_init b^j} passing Armijo.
        let grid: Vec<f64> = (0..10).map(|k| 0.5f64.powi(k)).collect();
        let alpha_init = grid
            .iter()
            .copied()
            .fold((1.0, f(1.0)), |(ba, bf), a| if f(a) < bf { (a, f(a)) } else { (ba, bf) })
            .0;
        let expected = (0..50)
            .map(|j| alpha_init * 0.5f64.powi(j))
            .find(|&a| f(a) <= f0 + a * cfg.sigma * d)
            .unwrap();
        assert_eq!(out.alpha, expected);
        assert!(out.alpha < 1.0);
    }

    #[test]
    fn non_descent_direction_is_rejected() {
        let y = LabelVector::new(vec![1.0]).unwrap();
        let s = one_d_state(0.0, -1.0, &[1.0]);
        assert!(matches!(
            line_search(&s, &y, 0.0, &LineSearchConfig::default()),
            Err(Error::NotDescent(_))
        ));
        let zero = one_d_state(0.0, 0.0, &[1.0]);
        assert!(matches!(
            line_search(&zero, &y, 0.0, &LineSearchConfig::default()),
            Err(Error::NotDescent(_))
        ));
    }

    #[test]
    fn config_ranges_are_enforced() {
        let mut cfg = LineSearchConfig::default();
        cfg.validate().unwrap();
        cfg.b = 1.0;
        assert!(cfg.validate().is_err());
        let cfg = LineSearchConfig { gamma: 1.0, ..Default::default() };
        assert!(cfg.validate().is_err());
    }
}
