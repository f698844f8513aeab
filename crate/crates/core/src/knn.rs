//! Exact k-nearest-neighbor queries and k-NN labels.
//!
//! The neighbor set of a query is everything inside the closed ball of the
//! k-th smallest distance, so distance ties can make the set larger than
//! `k`. The label is the plain average over that set, divided by its actual
//! size.

use ndarray::{ArrayView1, ArrayView2};

use crate::error::{Error, Result};
use crate::label::SoftLabel;

/// Result of a k-NN query: the k-NN radius and every index within it.
#[derive(Debug, Clone, PartialEq)]
pub struct NeighborQueryResult {
    /// The k-th smallest distance from the query to the point set.
    pub radius: f64,
    /// Indices at distance <= radius, ascending. At least `k` of them.
    pub members: Vec<usize>,
}

fn euclidean(a: &ArrayView1<f64>, b: &ArrayView1<f64>) -> f64 {
    a.iter()
        .zip(b.iter())
        .map(|(&x, &y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}

/// All distances from `query` to the rows of `points`.
fn distances(query: &ArrayView1<f64>, points: &ArrayView2<f64>) -> Result<Vec<f64>> {
    if query.len() != points.ncols() {
        return Err(Error::shape(format!(
            "query has dimension {} but points have dimension {}",
            query.len(),
            points.ncols()
        )));
    }
    Ok(points
        .outer_iter()
        .map(|row| euclidean(query, &row))
        .collect())
}

/// k-NN query under the Euclidean metric.
///
/// The radius is the k-th smallest distance and the member set contains
/// every index at distance <= radius, so `members.len() >= k` whenever the
/// k-th distance is tied.
pub fn knn_query(
    query: &ArrayView1<f64>,
    points: &ArrayView2<f64>,
    k: usize,
) -> Result<NeighborQueryResult> {
    let n = points.nrows();
    if k < 1 || k > n {
        return Err(Error::param(format!("k must be in [1, {n}], got {k}")));
    }
    let dists = distances(query, points)?;
    let mut scratch = dists.clone();
    let (_, kth, _) = scratch.select_nth_unstable_by(k - 1, f64::total_cmp);
    let radius = *kth;
    let members = dists
        .iter()
        .enumerate()
        .filter(|(_, &d)| d <= radius)
        .map(|(i, _)| i)
        .collect();
    Ok(NeighborQueryResult { radius, members })
}

/// k-NN label: the mean of the member labels of [`knn_query`].
pub fn knn_label(
    query: &ArrayView1<f64>,
    points: &ArrayView2<f64>,
    labels: &[SoftLabel],
    k: usize,
) -> Result<SoftLabel> {
    if labels.len() != points.nrows() {
        return Err(Error::shape(format!(
            "{} labels for {} points",
            labels.len(),
            points.nrows()
        )));
    }
    let result = knn_query(query, points, k)?;
    let width = labels[result.members[0]].num_classes();
    let mut mean = vec![0.0; width];
    for &i in &result.members {
        let probs = labels[i].probs();
        if probs.len() != width {
            return Err(Error::shape(
                "labels have inconsistent class counts".to_string(),
            ));
        }
        for (m, &p) in mean.iter_mut().zip(probs) {
            *m += p;
        }
    }
    let count = result.members.len() as f64;
    for m in mean.iter_mut() {
        *m /= count;
    }
    Ok(SoftLabel::new_unchecked(mean))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::label::one_hot;
    use ndarray::{array, Array2};

    #[test]
    fn query_hand_enumeration() {
        // Points 0.1, 0.2, 0.3 on the line, query at 0, k = 2: the second
        // smallest distance is 0.2 and the first two points are inside.
        let points = array![[0.1], [0.2], [0.3]];
        let q = array![0.0];
        let r = knn_query(&q.view(), &points.view(), 2).unwrap();
        assert!((r.radius - 0.2).abs() < 1e-15);
        assert_eq!(r.members, vec![0, 1]);
    }

    #[test]
    fn query_k_equals_n_returns_everything() {
        let points = array![[0.0, 0.0], [1.0, 1.0], [5.0, -1.0]];
        let q = array![2.0, 2.0];
        let r = knn_query(&q.view(), &points.view(), 3).unwrap();
        assert_eq!(r.members, vec![0, 1, 2]);
    }

    #[test]
    fn tied_distances_inflate_the_member_set() {
        // Distances {1, 1, 2}; k = 1 keeps both distance-1 points.
        let points = array![[1.0], [-1.0], [2.0]];
        let q = array![0.0];
        let r = knn_query(&q.view(), &points.view(), 1).unwrap();
        assert_eq!(r.radius, 1.0);
        assert_eq!(r.members, vec![0, 1]);
    }

    #[test]
    fn k_out_of_range_is_an_error() {
        let points = array![[0.0], [1.0]];
        let q = array![0.0];
        assert!(knn_query(&q.view(), &points.view(), 0).is_err());
        assert!(knn_query(&q.view(), &points.view(), 3).is_err());
    }

    #[test]
    fn dimension_mismatch_is_an_error() {
        let points = array![[0.0, 1.0]];
        let q = array![0.0];
        assert!(matches!(
            knn_query(&q.view(), &points.view(), 1),
            Err(Error::Shape(_))
        ));
    }

    #[test]
    fn label_hand_enumeration() {
        let points = array![[0.1], [0.2], [0.3]];
        let q = array![0.0];
        let labels = vec![
            one_hot(0, 2).unwrap(),
            one_hot(0, 2).unwrap(),
            one_hot(1, 2).unwrap(),
        ];
        let eta2 = knn_label(&q.view(), &points.view(), &labels, 2).unwrap();
        assert_eq!(eta2.probs(), &[1.0, 0.0]);
        let eta3 = knn_label(&q.view(), &points.view(), &labels, 3).unwrap();
        assert!((eta3[0] - 2.0 / 3.0).abs() < 1e-15);
        assert!((eta3[1] - 1.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn label_with_k_equals_n_is_global_mean() {
        let points = Array2::from_shape_fn((6, 2), |(i, j)| (i * 2 + j) as f64);
        let labels: Vec<_> = (0..6).map(|i| one_hot(i % 3, 3).unwrap()).collect();
        let a = knn_label(&array![0.0, 0.0].view(), &points.view(), &labels, 6).unwrap();
        let b = knn_label(&array![100.0, -3.0].view(), &points.view(), &labels, 6).unwrap();
        assert_eq!(a, b);
        for j in 0..3 {
            assert!((a[j] - 1.0 / 3.0).abs() < 1e-15);
        }
    }

    #[test]
    fn dataset_point_includes_itself() {
        let points = array![[0.5, 0.5], [2.0, 2.0], [3.0, 0.0]];
        let q = points.row(1);
        let r = knn_query(&q, &points.view(), 1).unwrap();
        assert_eq!(r.radius, 0.0);
        assert!(r.members.contains(&1));
    }
}
