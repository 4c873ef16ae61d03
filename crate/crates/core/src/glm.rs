//! Logistic loss, its gradient along a direction, and the IRLS quantities
//! `w_i`, `z_i` of the local quadratic model
//!
//! ```text
//! L_q(β, Δβ) = ½ Σ_i w_i (z_i − Δβᵀx_i)² + C(β)
//! ```
//!
//! All functions work on margins `βᵀx_i`, never on exponentiated margins.

use crate::data::LabelVector;
use crate::error::{Error, Result};

/// Lower clamp on predicted probabilities (upper clamp is `1 - PROB_CLAMP`).
pub const PROB_CLAMP: f64 = 1e-15;
/// Floor on the IRLS weights `w_i = p_i (1 - p_i)`.
pub const WEIGHT_FLOOR: f64 = 1e-12;

/// `log(1 + exp(t))` without overflow.
#[inline]
pub fn softplus(t: f64) -> f64 {
    if t > 0.0 {
        t + (-t).exp().ln_1p()
    } else {
        t.exp().ln_1p()
    }
}

#[inline]
fn sigmoid(t: f64) -> f64 {
    if t >= 0.0 {
        1.0 / (1.0 + (-t).exp())
    } else {
        let e = t.exp();
        e / (1.0 + e)
    }
}

#[inline]
fn clamped_probability(margin: f64) -> f64 {
    sigmoid(margin).clamp(PROB_CLAMP, 1.0 - PROB_CLAMP)
}

/// `P(y = +1 | x)` for a margin `βᵀx`, clamped away from 0 and 1.
pub fn class_probability(margin: f64) -> Result<f64> {
    if !margin.is_finite() {
        return Err(Error::InvalidInput(format!("non-finite margin {margin}")));
    }
    Ok(clamped_probability(margin))
}

/// `d/dm log(1 + exp(-y m)) = (p - (y+1)/2)`, computed as `-y σ(-y m)`.
#[inline]
pub(crate) fn loss_derivative(y: f64, margin: f64) -> f64 {
    -y * sigmoid(-y * margin)
}

fn check_len(what: &str, got: usize, want: usize) -> Result<()> {
    if got != want {
        return Err(Error::InvalidInput(format!(
            "{what} has length {got}, expected {want}"
        )));
    }
    Ok(())
}

/// `L(β) = Σ log(1 + exp(-y_i βᵀx_i))` from cached margins.
pub fn negated_log_likelihood(labels: &LabelVector, margins: &[f64]) -> Result<f64> {
    check_len("margins", margins.len(), labels.len())?;
    Ok(loss_unchecked(labels.as_slice(), margins))
}

#[inline]
pub(crate) fn loss_unchecked(labels: &[f64], margins: &[f64]) -> f64 {
    labels
        .iter()
        .zip(margins)
        .map(|(&y, &m)| softplus(-y * m))
        .sum()
}

pub fn l1_norm(beta: &[f64]) -> f64 {
    beta.iter().map(|b| b.abs()).sum()
}

/// `f(β) = L(β) + λ‖β‖₁`.
pub fn objective(loss: f64, beta: &[f64], lambda: f64) -> Result<f64> {
    if !(lambda >= 0.0) {
        return Err(Error::InvalidInput(format!(
            "lambda must be non-negative, got {lambda}"
        )));
    }
    if !(loss >= 0.0) {
        return Err(Error::InvalidInput(format!(
            "loss must be non-negative, got {loss}"
        )));
    }
    Ok(loss + lambda * l1_norm(beta))
}

/// IRLS weights and working responses frozen at one `β`.
#[derive(Debug, Clone, PartialEq)]
pub struct QuadraticWorkspace {
    pub w: Vec<f64>,
    pub z: Vec<f64>,
    /// Unpenalized loss `L(β)` at the freeze point.
    pub snapshot_loss: f64,
}

impl QuadraticWorkspace {
    pub fn n(&self) -> usize {
        self.w.len()
    }

    /// `½ Σ w_i (z_i − Δmargin_i)²`, the quadratic model without its constant.
    pub fn model_value(&self, delta_margins: &[f64]) -> f64 {
        0.5 * self
            .w
            .iter()
            .zip(&self.z)
            .zip(delta_margins)
            .map(|((w, z), d)| w * (z - d) * (z - d))
            .sum::<f64>()
    }
}

pub fn build_workspace(labels: &LabelVector, margins: &[f64]) -> Result<QuadraticWorkspace> {
    check_len("margins", margins.len(), labels.len())?;
    let n = labels.len();
    let mut w = Vec::with_capacity(n);
    let mut z = Vec::with_capacity(n);
    for (&y, &m) in labels.as_slice().iter().zip(margins) {
        let p = clamped_probability(m);
        let wi = (p * (1.0 - p)).max(WEIGHT_FLOOR);
        w.push(wi);
        z.push(((y + 1.0) / 2.0 - p) / wi);
    }
    Ok(QuadraticWorkspace {
        w,
        z,
        snapshot_loss: loss_unchecked(labels.as_slice(), margins),
    })
}

/// Directional derivative `∇L(β)ᵀΔβ = Σ_i (p_i − (y_i+1)/2)·Δmargin_i`.
pub fn gradient_direction_product(
    labels: &LabelVector,
    margins: &[f64],
    delta_margins: &[f64],
) -> Result<f64> {
    check_len("margins", margins.len(), labels.len())?;
    check_len("delta margins", delta_margins.len(), labels.len())?;
    Ok(labels
        .as_slice()
        .iter()
        .zip(margins)
        .zip(delta_margins)
        .map(|((&y, &m), &d)| loss_derivative(y, m) * d)
        .sum())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn labels(v: &[f64]) -> LabelVector {
        LabelVector::new(v.to_vec()).unwrap()
    }

    #[test]
    fn probability_examples() {
        assert_eq!(class_probability(0.0).unwrap(), 0.5);
        assert!((class_probability(3f64.ln()).unwrap() - 0.75).abs() < 1e-15);
        // exp(-800) underflows to zero, so σ(800) rounds to 1 and the clamp applies.
        assert_eq!((-800f64).exp(), 0.0);
        assert_eq!(class_probability(800.0).unwrap(), 1.0 - 1e-15);
        assert_eq!(class_probability(-800.0).unwrap(), 1e-15);
        assert!(class_probability(f64::NAN).is_err());
        assert!(class_probability(f64::INFINITY).is_err());
    }

    #[test]
    fn loss_examples() {
        let l = negated_log_likelihood(&labels(&[1.0, -1.0, 1.0, -1.0]), &[0.0; 4]).unwrap();
        assert!((l - 4.0 * 2f64.ln()).abs() < 1e-15);
        let l = negated_log_likelihood(&labels(&[1.0]), &[3f64.ln()]).unwrap();
        assert!((l - (4.0f64 / 3.0).ln()).abs() < 1e-15);
        let l = negated_log_likelihood(&labels(&[1.0, -1.0]), &[1000.0, -1000.0]).unwrap();
        assert!(l.is_finite() && l >= 0.0 && l < 1e-300);
        assert!(negated_log_likelihood(&labels(&[1.0]), &[0.0, 0.0]).is_err());
    }

    #[test]
    fn stable_softplus_matches_naive_at_moderate_margins() {
        for i in -300..=300 {
            let t = i as f64 * 0.1;
            let naive = (1.0 + t.exp()).ln();
            assert!((softplus(t) - naive).abs() <= 1e-13 * naive.max(1.0), "t = {t}");
        }
        assert_eq!(softplus(1000.0), 1000.0);
        assert_eq!(softplus(-1000.0), 0.0);
    }

    #[test]
    fn objective_examples() {
        let o = objective(2.772589, &[0.0, 0.0], 1.0).unwrap();
        assert_eq!(o, 2.772589);
        assert_eq!(objective(1.0, &[0.5, -1.5], 2.0).unwrap(), 5.0);
        assert_eq!(objective(0.0, &[3.0], 0.0).unwrap(), 0.0);
        assert!(objective(1.0, &[1.0], -0.1).is_err());
    }

    #[test]
    fn workspace_examples() {
        let ws = build_workspace(&labels(&[1.0, -1.0]), &[0.0, 0.0]).unwrap();
        assert_eq!(ws.w, vec![0.25, 0.25]);
        assert_eq!(ws.z, vec![2.0, -2.0]);

        let ws = build_workspace(&labels(&[1.0]), &[3f64.ln()]).unwrap();
        assert!((ws.w[0] - 0.1875).abs() < 1e-15);
        assert!((ws.z[0] - 4.0 / 3.0).abs() < 1e-14);
    }

    #[test]
    fn workspace_weight_floor_keeps_z_finite() {
        let ws = build_workspace(&labels(&[1.0, -1.0]), &[900.0, 900.0]).unwrap();
        assert!(ws.w.iter().all(|&w| w >= WEIGHT_FLOOR && w <= 0.25));
        assert!(ws.z.iter().all(|z| z.is_finite()));
    }

    #[test]
    fn gradient_direction_examples() {
        let y = labels(&[1.0]);
        assert_eq!(gradient_direction_product(&y, &[0.0], &[0.0]).unwrap(), 0.0);
        assert_eq!(gradient_direction_product(&y, &[0.0], &[2.0]).unwrap(), -1.0);
        assert!(gradient_direction_product(&y, &[0.0], &[]).is_err());
    }

    proptest! {
        #[test]
        fn loss_is_permutation_invariant(
            pairs in prop::collection::vec((any::<bool>(), -50.0f64..50.0), 1..40),
            rot in 0usize..40,
        ) {
            let y: Vec<f64> = pairs.iter().map(|(s, _)| if *s { 1.0 } else { -1.0 }).collect();
            let m: Vec<f64> = pairs.iter().map(|(_, m)| *m).collect();
            let base = negated_log_likelihood(&labels(&y), &m).unwrap();

            let mut idx: Vec<usize> = (0..y.len()).collect();
            idx.rotate_left(rot % y.len());
            idx.reverse();
            let y2: Vec<f64> = idx.iter().map(|&i| y[i]).collect();
            let m2: Vec<f64> = idx.iter().map(|&i| m[i]).collect();
            let permuted = negated_log_likelihood(&labels(&y2), &m2).unwrap();
            prop_assert!((base - permuted).abs() <= 1e-12 * base.max(1.0));
        }

        #[test]
        fn weights_are_bounded(margin in -1e4f64..1e4) {
            let ws = build_workspace(&labels(&[1.0]), &[margin]).unwrap();
            prop_assert!(ws.w[0] > 0.0 && ws.w[0] <= 0.25);
            prop_assert!(ws.z[0].is_finite());
        }
    }
}
