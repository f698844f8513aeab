//! Bi-tempered logistic loss.
//!
//! Two temperatures generalize the logistic loss: `t1` tempers the logarithm
//! in the loss, `t2` tempers the exponential in the softmax. At
//! `t1 = t2 = 1` this reduces to softmax cross-entropy. The normalization
//! constant of the tempered softmax has no closed form for `t2 > 1` and is
//! found by a fixed-point iteration.

use ndarray::Array2;

use crate::error::{Error, Result};
use crate::nn::CE_LOG_EPS;

/// Tempered logarithm: `(x^(1-t) - 1) / (1-t)`, natural log at `t = 1`.
pub fn log_t(x: f64, t: f64) -> f64 {
    if t == 1.0 {
        x.ln()
    } else {
        (x.powf(1.0 - t) - 1.0) / (1.0 - t)
    }
}

/// Tempered exponential: `[1 + (1-t)x]_+^(1/(1-t))`, `exp` at `t = 1`.
///
/// For `t > 1` the clamped region is taken as the limit from the decaying
/// tail, i.e. 0 rather than the pole.
pub fn exp_t(x: f64, t: f64) -> f64 {
    if t == 1.0 {
        x.exp()
    } else {
        let base = 1.0 + (1.0 - t) * x;
        if base <= 0.0 {
            0.0
        } else {
            base.powf(1.0 / (1.0 - t))
        }
    }
}

/// Tempered softmax of one activation row.
///
/// The normalization constant is located with `n_iters` fixed-point
/// iterations (exact immediately at `t = 1`); valid for `t >= 1`.
pub fn tempered_softmax(row: &[f64], t: f64, n_iters: usize) -> Vec<f64> {
    let mu = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let shifted: Vec<f64> = row.iter().map(|&z| z - mu).collect();
    let mut scaled = shifted.clone();
    for _ in 0..n_iters {
        let partition: f64 = scaled.iter().map(|&v| exp_t(v, t)).sum();
        let scale = partition.powf(1.0 - t);
        for (s, &z0) in scaled.iter_mut().zip(&shifted) {
            *s = z0 * scale;
        }
    }
    let partition: f64 = scaled.iter().map(|&v| exp_t(v, t)).sum();
    let lambda = -log_t(1.0 / partition, t) + mu;
    row.iter().map(|&z| exp_t(z - lambda, t)).collect()
}

fn validate(t1: f64, t2: f64, n_iters: usize) -> Result<()> {
    if !(t1 > 0.0 && t1 <= 1.0) {
        return Err(Error::param(format!("t1 must be in (0, 1], got {t1}")));
    }
    if !(t2 >= 1.0 && t2.is_finite()) {
        return Err(Error::param(format!("t2 must be >= 1, got {t2}")));
    }
    if n_iters == 0 {
        return Err(Error::param("n_iters must be >= 1".to_string()));
    }
    Ok(())
}

/// Per-example loss given tempered probabilities.
///
/// `sum_j y_j (log_t1 y_j - log_t1 p_j) - (y_j^(2-t1) - p_j^(2-t1)) / (2-t1)`
/// with the convention `0 * log_t(0) = 0`. At `t1 = 1` the log of the
/// probability is clamped exactly like the plain cross-entropy.
fn row_loss(probs: &[f64], target: &[f64], t1: f64) -> f64 {
    let q = 2.0 - t1;
    let mut loss = 0.0;
    for (&p, &y) in probs.iter().zip(target) {
        if y > 0.0 {
            let log_p = if t1 == 1.0 {
                p.max(CE_LOG_EPS).ln()
            } else {
                log_t(p, t1)
            };
            loss += y * (log_t(y, t1) - log_p);
        }
        loss += (p.powf(q) - y.powf(q)) / q;
    }
    loss
}

/// Per-example gradient w.r.t. the activations:
/// `(p - y) p^(t2-t1) - escort(p) * sum_j (p_j - y_j) p_j^(t2-t1)`
/// where `escort_j = p_j^t2 / sum p^t2`.
fn row_grad(probs: &[f64], target: &[f64], t1: f64, t2: f64) -> Vec<f64> {
    let forget: Vec<f64> = probs
        .iter()
        .zip(target)
        .map(|(&p, &y)| (p - y) * p.powf(t2 - t1))
        .collect();
    let s: f64 = forget.iter().sum();
    let escort_sum: f64 = probs.iter().map(|&p| p.powf(t2)).sum();
    probs
        .iter()
        .zip(&forget)
        .map(|(&p, &df)| df - p.powf(t2) / escort_sum * s)
        .collect()
}

/// Bi-tempered loss of an activation batch against soft targets, averaged
/// over rows.
pub fn bitempered_loss(
    activations: &ndarray::ArrayView2<f64>,
    targets: &ndarray::ArrayView2<f64>,
    t1: f64,
    t2: f64,
    n_iters: usize,
) -> Result<f64> {
    let owned_a = activations.to_owned();
    let owned_t = targets.to_owned();
    batch_value_and_grad(&owned_a, &owned_t, t1, t2, n_iters).map(|(v, _)| v)
}

/// Loss value and exact activation gradient, averaged over batch rows.
pub(crate) fn batch_value_and_grad(
    activations: &Array2<f64>,
    targets: &Array2<f64>,
    t1: f64,
    t2: f64,
    n_iters: usize,
) -> Result<(f64, Array2<f64>)> {
    validate(t1, t2, n_iters)?;
    if activations.shape() != targets.shape() {
        return Err(Error::shape(format!(
            "activations shape {:?} does not match target shape {:?}",
            activations.shape(),
            targets.shape()
        )));
    }
    if activations.iter().any(|v| !v.is_finite()) {
        return Err(Error::numeric(
            "bi-tempered loss input is not finite".to_string(),
        ));
    }
    let m = activations.nrows() as f64;
    let mut value = 0.0;
    let mut grad = Array2::zeros(activations.raw_dim());
    for (i, (a_row, t_row)) in activations
        .outer_iter()
        .zip(targets.outer_iter())
        .enumerate()
    {
        let a = a_row.as_slice().unwrap();
        let y = t_row.as_slice().unwrap();
        let probs = tempered_softmax(a, t2, n_iters);
        value += row_loss(&probs, y, t1) / m;
        for (j, g) in row_grad(&probs, y, t1, t2).into_iter().enumerate() {
            grad[(i, j)] = g / m;
        }
    }
    Ok((value, grad))
}
