//! Prediction churn: disagreement rates between runs, correctness-sliced
//! churn, pairwise aggregation, Pareto frontiers, and the accuracy-first
//! selection rule.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Fraction of positions where two prediction sequences disagree.
pub fn churn(preds_a: &[usize], preds_b: &[usize]) -> Result<f64> {
    if preds_a.len() != preds_b.len() || preds_a.is_empty() {
        return Err(Error::shape(format!(
            "churn needs two equal non-empty sequences, got lengths {} and {}",
            preds_a.len(),
            preds_b.len()
        )));
    }
    let disagreements = preds_a.iter().zip(preds_b).filter(|(a, b)| a != b).count();
    Ok(disagreements as f64 / preds_a.len() as f64)
}

/// Fraction of positions where `preds` matches `truth`.
pub fn accuracy(preds: &[usize], truth: &[usize]) -> Result<f64> {
    if preds.len() != truth.len() || preds.is_empty() {
        return Err(Error::shape(format!(
            "accuracy needs two equal non-empty sequences, got lengths {} and {}",
            preds.len(),
            truth.len()
        )));
    }
    let hits = preds.iter().zip(truth).filter(|(p, t)| p == t).count();
    Ok(hits as f64 / preds.len() as f64)
}

/// Churn split by whether the FIRST sequence was correct:
/// `(churn on preds_a == truth, churn on preds_a != truth)`.
///
/// An empty slice yields `None`, never 0/0.
pub fn sliced_churn(
    preds_a: &[usize],
    preds_b: &[usize],
    truth: &[usize],
) -> Result<(Option<f64>, Option<f64>)> {
    if preds_a.len() != preds_b.len() || preds_a.len() != truth.len() || preds_a.is_empty() {
        return Err(Error::shape(format!(
            "sliced_churn needs three equal non-empty sequences, got lengths {}, {}, {}",
            preds_a.len(),
            preds_b.len(),
            truth.len()
        )));
    }
    let mut correct = (0usize, 0usize); // (disagreements, total)
    let mut incorrect = (0usize, 0usize);
    for ((&a, &b), &t) in preds_a.iter().zip(preds_b).zip(truth) {
        let slot = if a == t { &mut correct } else { &mut incorrect };
        slot.1 += 1;
        if a != b {
            slot.0 += 1;
        }
    }
    let rate = |(d, n): (usize, usize)| {
        if n == 0 {
            None
        } else {
            Some(d as f64 / n as f64)
        }
    };
    Ok((rate(correct), rate(incorrect)))
}

/// Predictions of one training run on the shared test set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    /// Stable fingerprint of the method and hyperparameters.
    pub method: String,
    pub seed: u64,
    /// Predicted class per test example.
    pub classes: Vec<usize>,
    /// Full probability row per test example.
    pub probs: Vec<Vec<f64>>,
}

impl RunRecord {
    pub fn new(
        method: String,
        seed: u64,
        classes: Vec<usize>,
        probs: Vec<Vec<f64>>,
    ) -> Result<Self> {
        if classes.len() != probs.len() || classes.is_empty() {
            return Err(Error::shape(format!(
                "{} classes vs {} probability rows",
                classes.len(),
                probs.len()
            )));
        }
        let width = probs[0].len();
        for (i, (&c, row)) in classes.iter().zip(&probs).enumerate() {
            if row.len() != width {
                return Err(Error::shape(format!(
                    "probability row {i} has inconsistent width"
                )));
            }
            if c >= width {
                return Err(Error::shape(format!(
                    "predicted class {c} at row {i} out of range for {width} classes"
                )));
            }
        }
        Ok(RunRecord {
            method,
            seed,
            classes,
            probs,
        })
    }
}

/// Mean and run-level (sample) standard deviation, in percent.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Stat {
    pub mean: f64,
    pub std: f64,
}

impl Stat {
    /// Sample standard deviation (n-1 denominator); 0 for fewer than two
    /// values.
    fn from_values(values: &[f64]) -> Stat {
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let std = if values.len() < 2 {
            0.0
        } else {
            (values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0)).sqrt()
        };
        Stat { mean, std }
    }
}

/// Aggregated metrics for one method/hyperparameter setting, all in percent.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChurnReport {
    pub n_runs: usize,
    /// `n_runs * (n_runs - 1) / 2` unordered pairs.
    pub n_pairs: usize,
    /// Over runs.
    pub accuracy: Stat,
    /// Over pairs.
    pub churn: Stat,
    /// Over pairs with a non-empty correct slice; absent if none.
    pub churn_correct: Option<Stat>,
    /// Over pairs with a non-empty incorrect slice; absent if none.
    pub churn_incorrect: Option<Stat>,
}

/// Aggregate runs into a [`ChurnReport`].
///
/// Churn metrics are averaged over every unordered pair of runs; the
/// lower-index run of a pair defines the correctness slice. Accuracy is
/// averaged over runs. Standard deviations are sample standard deviations
/// over pairs (churn) and runs (accuracy).
pub fn pairwise_stats(runs: &[RunRecord], truth: &[usize]) -> Result<ChurnReport> {
    if runs.len() < 2 {
        return Err(Error::param(format!(
            "pairwise statistics need at least 2 runs, got {}",
            runs.len()
        )));
    }
    let accuracies: Vec<f64> = runs
        .iter()
        .map(|r| accuracy(&r.classes, truth).map(|a| a * 100.0))
        .collect::<Result<_>>()?;

    let mut churns = Vec::new();
    let mut corrects = Vec::new();
    let mut incorrects = Vec::new();
    for i in 0..runs.len() {
        for j in (i + 1)..runs.len() {
            churns.push(churn(&runs[i].classes, &runs[j].classes)? * 100.0);
            let (c, w) = sliced_churn(&runs[i].classes, &runs[j].classes, truth)?;
            if let Some(c) = c {
                corrects.push(c * 100.0);
            }
            if let Some(w) = w {
                incorrects.push(w * 100.0);
            }
        }
    }
    let n_pairs = runs.len() * (runs.len() - 1) / 2;
    debug_assert_eq!(churns.len(), n_pairs);

    let optional = |v: &[f64]| {
        if v.is_empty() {
            None
        } else {
            Some(Stat::from_values(v))
        }
    };
    Ok(ChurnReport {
        n_runs: runs.len(),
        n_pairs,
        accuracy: Stat::from_values(&accuracies),
        churn: Stat::from_values(&churns),
        churn_correct: optional(&corrects),
        churn_incorrect: optional(&incorrects),
    })
}

/// Indices of the Pareto frontier under (maximize accuracy, minimize churn).
///
/// A point is kept iff no other point is at least as accurate and at most as
/// churny with one of the two strict; exact duplicates are all kept.
pub fn pareto_frontier(points: &[(f64, f64)]) -> Result<Vec<usize>> {
    if points.is_empty() {
        return Err(Error::param(
            "pareto_frontier needs at least one point".to_string(),
        ));
    }
    let dominated = |p: (f64, f64)| {
        points
            .iter()
            .any(|&q| q.0 >= p.0 && q.1 <= p.1 && (q.0 > p.0 || q.1 < p.1))
    };
    Ok((0..points.len())
        .filter(|&i| !dominated(points[i]))
        .collect())
}

/// Accuracy-first model selection: among the settings within 0.1 accuracy
/// percentage points of the best, pick the one with the lowest mean churn
/// (list order breaks ties). Returns the index of the chosen setting.
pub fn select_best(reports: &[ChurnReport]) -> Result<usize> {
    if reports.is_empty() {
        return Err(Error::param(
            "select_best needs at least one setting".to_string(),
        ));
    }
    let top_acc = reports
        .iter()
        .map(|r| r.accuracy.mean)
        .fold(f64::NEG_INFINITY, f64::max);
    let mut best: Option<usize> = None;
    for (i, r) in reports.iter().enumerate() {
        if r.accuracy.mean >= top_acc - 0.1 {
            match best {
                Some(b) if reports[b].churn.mean <= r.churn.mean => {}
                _ => best = Some(i),
            }
        }
    }
    Ok(best.expect("at least one candidate within 0.1 of the top"))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn churn_hand_values() {
        assert!((churn(&[1, 0, 1], &[1, 1, 1]).unwrap() - 1.0 / 3.0).abs() < 1e-15);
        assert_eq!(churn(&[2, 2], &[2, 2]).unwrap(), 0.0);
        assert_eq!(churn(&[0, 0], &[1, 1]).unwrap(), 1.0);
        assert!(churn(&[0], &[0, 1]).is_err());
    }

    #[test]
    fn accuracy_hand_values() {
        assert_eq!(accuracy(&[1, 2], &[1, 2]).unwrap(), 1.0);
        assert_eq!(accuracy(&[1, 2], &[0, 0]).unwrap(), 0.0);
        assert_eq!(accuracy(&[0, 1], &[0, 0]).unwrap(), 0.5);
    }

    #[test]
    fn sliced_churn_hand_enumeration() {
        let a = [0, 1, 1, 0];
        let truth = [0, 1, 0, 0];
        let b = [0, 0, 1, 1];
        let (c, w) = sliced_churn(&a, &b, &truth).unwrap();
        assert!((c.unwrap() - 2.0 / 3.0).abs() < 1e-15);
        assert_eq!(w.unwrap(), 0.0);
        // Overall churn decomposes as the accuracy-weighted combination.
        let overall = churn(&a, &b).unwrap();
        let acc = accuracy(&a, &truth).unwrap();
        assert!((overall - (c.unwrap() * acc + w.unwrap() * (1.0 - acc))).abs() < 1e-15);
        assert_eq!(overall, 0.5);
    }

    #[test]
    fn sliced_churn_empty_slice_is_absent() {
        let a = [0, 1];
        let truth = [0, 1];
        let b = [1, 1];
        let (c, w) = sliced_churn(&a, &b, &truth).unwrap();
        assert_eq!(c, Some(0.5));
        assert_eq!(w, None);
    }

    #[test]
    fn sliced_churn_identical_runs_are_zero() {
        let a = [0, 1, 0];
        let truth = [0, 0, 1];
        let (c, w) = sliced_churn(&a, &a, &truth).unwrap();
        assert_eq!(c, Some(0.0));
        assert_eq!(w, Some(0.0));
    }

    fn record(classes: Vec<usize>) -> RunRecord {
        let probs = classes
            .iter()
            .map(|&c| {
                let mut row = vec![0.0; 2];
                row[c] = 1.0;
                row
            })
            .collect();
        RunRecord::new("test".to_string(), 0, classes, probs).unwrap()
    }

    #[test]
    fn five_runs_make_ten_pairs() {
        let runs: Vec<RunRecord> = (0..5).map(|i| record(vec![i % 2, 0, 1])).collect();
        let report = pairwise_stats(&runs, &[0, 0, 1]).unwrap();
        assert_eq!(report.n_pairs, 10);
        assert_eq!(report.n_runs, 5);
    }

    #[test]
    fn identical_runs_have_zero_churn() {
        let runs: Vec<RunRecord> = (0..3).map(|_| record(vec![0, 1, 1])).collect();
        let report = pairwise_stats(&runs, &[0, 1, 0]).unwrap();
        assert_eq!(report.churn.mean, 0.0);
        assert_eq!(report.churn.std, 0.0);
    }

    #[test]
    fn two_runs_single_pair() {
        let runs = vec![record(vec![0, 0]), record(vec![0, 1])];
        let report = pairwise_stats(&runs, &[0, 0]).unwrap();
        assert_eq!(report.n_pairs, 1);
        assert_eq!(report.churn.mean, 50.0);
        assert!(pairwise_stats(&runs[..1], &[0, 0]).is_err());
    }

    #[test]
    fn pareto_hand_dominance() {
        let points = [(0.90, 0.10), (0.88, 0.08), (0.91, 0.12), (0.85, 0.20)];
        let kept = pareto_frontier(&points).unwrap();
        assert_eq!(kept, vec![0, 1, 2]);
    }

    #[test]
    fn pareto_keeps_single_point_and_duplicates() {
        assert_eq!(pareto_frontier(&[(0.5, 0.5)]).unwrap(), vec![0]);
        assert_eq!(
            pareto_frontier(&[(0.5, 0.5), (0.5, 0.5)]).unwrap(),
            vec![0, 1]
        );
        assert!(pareto_frontier(&[]).is_err());
    }

    #[test]
    fn pareto_output_is_an_antichain() {
        use rand::Rng;
        use rand_chacha::rand_core::SeedableRng;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(17);
        for _ in 0..100 {
            let points: Vec<(f64, f64)> = (0..20)
                .map(|_| (rng.gen_range(0.0..1.0), rng.gen_range(0.0..1.0)))
                .collect();
            let kept = pareto_frontier(&points).unwrap();
            for &i in &kept {
                for &j in &kept {
                    if i != j {
                        let (p, q) = (points[i], points[j]);
                        let strict_dom = q.0 >= p.0 && q.1 <= p.1 && (q.0 > p.0 || q.1 < p.1);
                        assert!(!strict_dom, "{q:?} dominates {p:?} inside the frontier");
                    }
                }
            }
        }
    }

    fn report_with(acc: f64, churn: f64) -> ChurnReport {
        ChurnReport {
            n_runs: 5,
            n_pairs: 10,
            accuracy: Stat {
                mean: acc,
                std: 0.0,
            },
            churn: Stat {
                mean: churn,
                std: 0.0,
            },
            churn_correct: None,
            churn_incorrect: None,
        }
    }

    #[test]
    fn select_best_applies_accuracy_window_then_churn() {
        let settings = vec![
            report_with(90.00, 5.0),
            report_with(89.95, 3.0),
            report_with(89.00, 1.0),
        ];
        assert_eq!(select_best(&settings).unwrap(), 1);
        assert_eq!(select_best(&settings[..1]).unwrap(), 0);
        let tied = vec![report_with(90.0, 4.0), report_with(90.0, 2.0)];
        assert_eq!(select_best(&tied).unwrap(), 1);
        let equal = vec![report_with(90.0, 2.0), report_with(90.0, 2.0)];
        assert_eq!(select_best(&equal).unwrap(), 0);
        assert!(select_best(&[]).is_err());
    }
}
