//! Soft labels: probability vectors over classes.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Tolerance for "sums to one" checks on constructed labels.
pub const SIMPLEX_TOL: f64 = 1e-9;

/// A probability vector over `L >= 2` classes.
///
/// Entries are in `[0, 1]` and sum to one within [`SIMPLEX_TOL`]. One-hot
/// labels, globally smoothed labels, k-NN labels, and k-NN smoothed labels
/// are all `SoftLabel`s.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct SoftLabel(Vec<f64>);

impl SoftLabel {
    /// Validating constructor.
    pub fn new(probs: Vec<f64>) -> Result<Self> {
        if probs.len() < 2 {
            return Err(Error::param(format!(
                "soft label needs at least 2 classes, got {}",
                probs.len()
            )));
        }
        let mut sum = 0.0;
        for (j, &p) in probs.iter().enumerate() {
            if !p.is_finite() || !(0.0..=1.0).contains(&p) {
                return Err(Error::param(format!(
                    "soft label entry {j} = {p} is outside [0, 1]"
                )));
            }
            sum += p;
        }
        if (sum - 1.0).abs() > SIMPLEX_TOL {
            return Err(Error::param(format!(
                "soft label sums to {sum}, expected 1 within {SIMPLEX_TOL}"
            )));
        }
        Ok(SoftLabel(probs))
    }

    /// Constructor for values that are on the simplex by construction
    /// (convex combinations of existing labels). Checked in debug builds.
    pub(crate) fn new_unchecked(probs: Vec<f64>) -> Self {
        debug_assert!(probs.len() >= 2);
        debug_assert!((probs.iter().sum::<f64>() - 1.0).abs() <= 1e-6);
        SoftLabel(probs)
    }

    /// Number of classes `L`.
    pub fn num_classes(&self) -> usize {
        self.0.len()
    }

    pub fn probs(&self) -> &[f64] {
        &self.0
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.0
    }

    /// Index of the largest entry, ties broken toward the lowest index.
    pub fn argmax(&self) -> usize {
        argmax(&self.0)
    }
}

impl std::ops::Index<usize> for SoftLabel {
    type Output = f64;
    fn index(&self, i: usize) -> &f64 {
        &self.0[i]
    }
}

/// One-hot soft label: 1 at `class_index`, 0 elsewhere.
pub fn one_hot(class_index: usize, num_classes: usize) -> Result<SoftLabel> {
    if num_classes < 2 {
        return Err(Error::param(format!(
            "one_hot needs at least 2 classes, got {num_classes}"
        )));
    }
    if class_index >= num_classes {
        return Err(Error::param(format!(
            "class index {class_index} out of range for {num_classes} classes"
        )));
    }
    let mut v = vec![0.0; num_classes];
    v[class_index] = 1.0;
    Ok(SoftLabel(v))
}

/// Argmax with ties broken toward the lowest index.
pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate().skip(1) {
        if v > values[best] {
            best = i;
        }
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn one_hot_examples() {
        assert_eq!(one_hot(2, 4).unwrap().probs(), &[0.0, 0.0, 1.0, 0.0]);
        assert_eq!(one_hot(0, 2).unwrap().probs(), &[1.0, 0.0]);
        let s: f64 = one_hot(3, 7).unwrap().probs().iter().sum();
        assert_eq!(s, 1.0);
    }

    #[test]
    fn one_hot_rejects_out_of_range() {
        assert!(one_hot(4, 4).is_err());
        assert!(one_hot(0, 1).is_err());
    }

    #[test]
    fn validation_catches_bad_vectors() {
        assert!(SoftLabel::new(vec![0.5, 0.6]).is_err());
        assert!(SoftLabel::new(vec![1.2, -0.2]).is_err());
        assert!(SoftLabel::new(vec![1.0]).is_err());
        assert!(SoftLabel::new(vec![0.25; 4]).is_ok());
    }

    #[test]
    fn argmax_breaks_ties_low() {
        assert_eq!(argmax(&[0.5, 0.5]), 0);
        assert_eq!(argmax(&[0.1, 0.7, 0.2]), 1);
        assert_eq!(argmax(&[0.2, 0.4, 0.4]), 1);
    }
}
