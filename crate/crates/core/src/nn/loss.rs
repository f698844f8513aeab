//! Training losses on logits with soft targets, and their exact gradients.

use ndarray::{Array2, ArrayView2};
use serde::{Deserialize, Serialize};

use crate::baselines::bitempered;
use crate::error::{Error, Result};

/// Probabilities below this are clamped inside logarithms.
pub const CE_LOG_EPS: f64 = 1e-12;

/// Row-wise softmax with max-subtraction for stability.
///
/// Rows land on the probability simplex; the result is invariant to adding a
/// constant to a row (up to floating-point rounding).
pub fn softmax_probs(logits: &ArrayView2<f64>) -> Result<Array2<f64>> {
    if logits.iter().any(|v| !v.is_finite()) {
        return Err(Error::numeric(
            "softmax input contains NaN or infinity".to_string(),
        ));
    }
    let mut out = logits.to_owned();
    for mut row in out.outer_iter_mut() {
        let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        row.mapv_inplace(|z| (z - max).exp());
        let sum = row.sum();
        row.mapv_inplace(|e| e / sum);
    }
    Ok(out)
}

/// Soft-target cross-entropy `-sum_j target_j * ln(max(probs_j, eps))`,
/// averaged over batch rows.
pub fn soft_cross_entropy(probs: &ArrayView2<f64>, targets: &ArrayView2<f64>) -> Result<f64> {
    if probs.shape() != targets.shape() {
        return Err(Error::shape(format!(
            "probs shape {:?} does not match target shape {:?}",
            probs.shape(),
            targets.shape()
        )));
    }
    if probs.nrows() == 0 {
        return Err(Error::shape("cross-entropy of an empty batch".to_string()));
    }
    let mut total = 0.0;
    for (p_row, t_row) in probs.outer_iter().zip(targets.outer_iter()) {
        for (&p, &t) in p_row.iter().zip(t_row.iter()) {
            total -= t * p.max(CE_LOG_EPS).ln();
        }
    }
    Ok(total / probs.nrows() as f64)
}

/// Which norm an output-regularization penalty uses.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LpNorm {
    L1,
    L2,
}

impl LpNorm {
    /// `||z||_p` of one logits row.
    pub fn value(&self, row: &[f64]) -> f64 {
        match self {
            LpNorm::L1 => row.iter().map(|z| z.abs()).sum(),
            LpNorm::L2 => row.iter().map(|z| z * z).sum::<f64>().sqrt(),
        }
    }

    /// Gradient of `||z||_p` w.r.t. `z` (zero at the non-differentiable points).
    fn grad(&self, row: &[f64]) -> Vec<f64> {
        match self {
            LpNorm::L1 => row
                .iter()
                .map(|&z| {
                    if z > 0.0 {
                        1.0
                    } else if z < 0.0 {
                        -1.0
                    } else {
                        0.0
                    }
                })
                .collect(),
            LpNorm::L2 => {
                let norm = self.value(row);
                if norm == 0.0 {
                    vec![0.0; row.len()]
                } else {
                    row.iter().map(|z| z / norm).collect()
                }
            }
        }
    }
}

impl std::fmt::Display for LpNorm {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            LpNorm::L1 => write!(f, "l1"),
            LpNorm::L2 => write!(f, "l2"),
        }
    }
}

/// The per-batch losses a single network can train against.
#[derive(Debug, Clone, PartialEq)]
pub enum LossSpec {
    /// Softmax followed by soft-target cross-entropy.
    SoftCrossEntropy,
    /// Cross-entropy plus `weight * ||logits||_p` per example.
    LpRegularized { weight: f64, norm: LpNorm },
    /// Two-temperature generalization of logistic loss; reduces to
    /// cross-entropy at `t1 = t2 = 1`.
    BiTempered { t1: f64, t2: f64, n_iters: usize },
}

impl LossSpec {
    /// Loss value and its exact gradient w.r.t. the logits (both averaged
    /// over batch rows).
    pub fn value_and_logit_grad(
        &self,
        logits: &Array2<f64>,
        targets: &Array2<f64>,
    ) -> Result<(f64, Array2<f64>)> {
        if logits.shape() != targets.shape() {
            return Err(Error::shape(format!(
                "logits shape {:?} does not match target shape {:?}",
                logits.shape(),
                targets.shape()
            )));
        }
        match self {
            LossSpec::SoftCrossEntropy => cross_entropy_value_and_grad(logits, targets),
            LossSpec::LpRegularized { weight, norm } => {
                if weight.is_nan() || *weight < 0.0 {
                    return Err(Error::param(format!(
                        "regularization weight must be >= 0, got {weight}"
                    )));
                }
                let (mut value, mut grad) = cross_entropy_value_and_grad(logits, targets)?;
                let m = logits.nrows() as f64;
                for (i, row) in logits.outer_iter().enumerate() {
                    let row = row.as_slice().unwrap();
                    value += weight * norm.value(row) / m;
                    for (j, g) in norm.grad(row).into_iter().enumerate() {
                        grad[(i, j)] += weight * g / m;
                    }
                }
                Ok((value, grad))
            }
            LossSpec::BiTempered { t1, t2, n_iters } => {
                bitempered::batch_value_and_grad(logits, targets, *t1, *t2, *n_iters)
            }
        }
    }
}

/// Cross-entropy of `softmax(logits)` against soft targets, with the exact
/// gradient of the clamped expression.
fn cross_entropy_value_and_grad(
    logits: &Array2<f64>,
    targets: &Array2<f64>,
) -> Result<(f64, Array2<f64>)> {
    let probs = softmax_probs(&logits.view())?;
    let value = soft_cross_entropy(&probs.view(), &targets.view())?;
    let m = logits.nrows() as f64;
    let mut grad = Array2::zeros(logits.raw_dim());
    for (i, (p_row, t_row)) in probs.outer_iter().zip(targets.outer_iter()).enumerate() {
        // d/dz of -sum_j t_j ln(max(p_j, eps)): entries with p_j <= eps are
        // constant in p_j, which zeroes their slot in the chain rule.
        let g: Vec<f64> = p_row
            .iter()
            .zip(t_row.iter())
            .map(|(&p, &t)| if p > CE_LOG_EPS { -t } else { 0.0 })
            .collect();
        let s: f64 = g.iter().sum();
        for (j, (&p, &gj)) in p_row.iter().zip(g.iter()).enumerate() {
            grad[(i, j)] = (gj - p * s) / m;
        }
    }
    Ok((value, grad))
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn softmax_symmetric_input() {
        let p = softmax_probs(&array![[0.0, 0.0]].view()).unwrap();
        assert_eq!(p[(0, 0)], 0.5);
        assert_eq!(p[(0, 1)], 0.5);
    }

    #[test]
    fn softmax_hand_value() {
        let p = softmax_probs(&array![[2.0_f64.ln(), 0.0]].view()).unwrap();
        assert!((p[(0, 0)] - 2.0 / 3.0).abs() < 1e-15);
        assert!((p[(0, 1)] - 1.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn softmax_shift_invariance() {
        let z = array![[0.3, -1.2, 4.5]];
        let a = softmax_probs(&z.view()).unwrap();
        let b = softmax_probs(&(z + 123.456).view()).unwrap();
        for (x, y) in a.iter().zip(b.iter()) {
            assert!((x - y).abs() < 1e-12);
        }
    }

    #[test]
    fn softmax_rejects_non_finite() {
        assert!(softmax_probs(&array![[f64::NAN, 0.0]].view()).is_err());
        assert!(softmax_probs(&array![[f64::INFINITY, 0.0]].view()).is_err());
    }

    #[test]
    fn softmax_rows_are_on_the_simplex() {
        use rand::Rng;
        use rand_chacha::rand_core::SeedableRng;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(6);
        for _ in 0..1000 {
            let z = Array2::from_shape_fn((2, 4), |_| rng.gen_range(-30.0..30.0));
            let p = softmax_probs(&z.view()).unwrap();
            for row in p.outer_iter() {
                assert!((row.sum() - 1.0).abs() < 1e-12);
                assert!(row.iter().all(|&v| (0.0..=1.0).contains(&v)));
            }
        }
    }

    #[test]
    fn cross_entropy_hand_values() {
        let ce =
            soft_cross_entropy(&array![[0.5, 0.5]].view(), &array![[0.5, 0.5]].view()).unwrap();
        assert!((ce - 2.0_f64.ln()).abs() < 1e-15);

        let ce =
            soft_cross_entropy(&array![[1.0, 0.0]].view(), &array![[1.0, 0.0]].view()).unwrap();
        assert_eq!(ce, 0.0);

        let ce = soft_cross_entropy(
            &array![[2.0 / 3.0, 1.0 / 3.0]].view(),
            &array![[0.5, 0.5]].view(),
        )
        .unwrap();
        assert!((ce - 0.7520386983881371).abs() < 1e-12);
    }

    #[test]
    fn cross_entropy_rejects_length_mismatch() {
        let r = soft_cross_entropy(&array![[0.5, 0.5]].view(), &array![[0.2, 0.3, 0.5]].view());
        assert!(matches!(r, Err(Error::Shape(_))));
    }

    #[test]
    fn lp_norm_hand_values() {
        assert_eq!(LpNorm::L2.value(&[3.0, 4.0]), 5.0);
        assert_eq!(LpNorm::L1.value(&[1.0, -2.0]), 3.0);
    }

    #[test]
    fn lp_loss_reduces_to_cross_entropy_at_zero_weight() {
        let logits = array![[0.4, -0.3], [1.0, 2.0]];
        let targets = array![[1.0, 0.0], [0.0, 1.0]];
        let (a, ga) = LossSpec::SoftCrossEntropy
            .value_and_logit_grad(&logits, &targets)
            .unwrap();
        let (b, gb) = LossSpec::LpRegularized {
            weight: 0.0,
            norm: LpNorm::L1,
        }
        .value_and_logit_grad(&logits, &targets)
        .unwrap();
        assert_eq!(a, b);
        assert_eq!(ga, gb);
    }

    #[test]
    fn lp_loss_adds_hand_penalty() {
        let logits = array![[3.0, 4.0]];
        let targets = array![[1.0, 0.0]];
        let (ce, _) = LossSpec::SoftCrossEntropy
            .value_and_logit_grad(&logits, &targets)
            .unwrap();
        let (l2, _) = LossSpec::LpRegularized {
            weight: 1.0,
            norm: LpNorm::L2,
        }
        .value_and_logit_grad(&logits, &targets)
        .unwrap();
        assert!((l2 - ce - 5.0).abs() < 1e-12);

        let logits = array![[1.0, -2.0]];
        let targets = array![[0.5, 0.5]];
        let (ce, _) = LossSpec::SoftCrossEntropy
            .value_and_logit_grad(&logits, &targets)
            .unwrap();
        let (l1, _) = LossSpec::LpRegularized {
            weight: 0.5,
            norm: LpNorm::L1,
        }
        .value_and_logit_grad(&logits, &targets)
        .unwrap();
        assert!((l1 - ce - 1.5).abs() < 1e-12);
    }
}
