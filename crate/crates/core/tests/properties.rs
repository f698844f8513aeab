//! Property tests for the algebraic invariants.

use churn_lab::churn::{accuracy, churn, sliced_churn};
use churn_lab::knn::{knn_label, knn_query};
use churn_lab::label::SoftLabel;
use churn_lab::smoothing::{global_label_smooth, knn_smooth_label};
use ndarray::{Array1, Array2};
use proptest::prelude::*;

fn simplex(len: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(0.001f64..1.0, len).prop_map(|raw| {
        let sum: f64 = raw.iter().sum();
        raw.into_iter().map(|v| v / sum).collect()
    })
}

proptest! {
    #[test]
    fn churn_is_a_symmetric_pseudometric(
        a in prop::collection::vec(0usize..4, 1..60),
        b_seed in prop::collection::vec(0usize..4, 1..60),
        truth_seed in prop::collection::vec(0usize..4, 1..60),
    ) {
        let n = a.len().min(b_seed.len()).min(truth_seed.len());
        let (a, b, truth) = (&a[..n], &b_seed[..n], &truth_seed[..n]);
        prop_assert_eq!(churn(a, a).unwrap(), 0.0);
        let ab = churn(a, b).unwrap();
        prop_assert_eq!(ab, churn(b, a).unwrap());
        prop_assert!((0.0..=1.0).contains(&ab));
        // Accuracies can differ by at most the disagreement rate.
        let acc_gap = (accuracy(a, truth).unwrap() - accuracy(b, truth).unwrap()).abs();
        prop_assert!(acc_gap <= ab + 1e-15);
        // Sliced churn recombines into overall churn where both slices exist.
        let (correct, incorrect) = sliced_churn(a, b, truth).unwrap();
        if let (Some(c), Some(i)) = (correct, incorrect) {
            let w = accuracy(a, truth).unwrap();
            prop_assert!((ab - (c * w + i * (1.0 - w))).abs() < 1e-12);
        }
    }

    #[test]
    fn smoothing_operations_preserve_the_simplex(
        y in simplex(3),
        eta in simplex(3),
        a in 0.0f64..=1.0,
        b in 0.0f64..=1.0,
    ) {
        let y = SoftLabel::new(y).unwrap();
        let eta = SoftLabel::new(eta).unwrap();
        let global = global_label_smooth(&y, a).unwrap();
        let local = knn_smooth_label(&y, &eta, a, b).unwrap();
        for out in [&global, &local] {
            let sum: f64 = out.probs().iter().sum();
            prop_assert!((sum - 1.0).abs() < 1e-12);
            prop_assert!(out.probs().iter().all(|&p| (-1e-15..=1.0 + 1e-12).contains(&p)));
        }
        // Exact endpoints.
        prop_assert_eq!(knn_smooth_label(&y, &eta, 0.0, b).unwrap(), y.clone());
        prop_assert_eq!(knn_smooth_label(&y, &eta, 1.0, 0.0).unwrap(), eta.clone());
        let uniform = knn_smooth_label(&y, &eta, 1.0, 1.0).unwrap();
        prop_assert!(uniform.probs().iter().all(|&p| p == 1.0 / 3.0));
    }

    #[test]
    fn knn_query_matches_a_full_sort_oracle(
        coords in prop::collection::vec(-8i32..8, 2..40),
        query in prop::collection::vec(-8i32..8, 2),
        k_raw in 1usize..40,
    ) {
        // Integer coordinates force plenty of exact distance ties.
        let n = coords.len() / 2;
        let k = (k_raw % n) + 1;
        let points = Array2::from_shape_fn((n, 2), |(i, j)| f64::from(coords[2 * i + j]));
        let q = Array1::from_vec(query.iter().map(|&v| f64::from(v)).collect());

        let result = knn_query(&q.view(), &points.view(), k).unwrap();

        // Independent oracle: sort every distance.
        let mut dists: Vec<(f64, usize)> = (0..n)
            .map(|i| {
                let d = (0..2)
                    .map(|c| (points[(i, c)] - q[c]).powi(2))
                    .sum::<f64>()
                    .sqrt();
                (d, i)
            })
            .collect();
        dists.sort_by(|x, y| x.0.total_cmp(&y.0).then(x.1.cmp(&y.1)));
        let radius = dists[k - 1].0;
        let mut members: Vec<usize> =
            dists.iter().filter(|(d, _)| *d <= radius).map(|&(_, i)| i).collect();
        members.sort_unstable();

        prop_assert_eq!(result.radius, radius);
        prop_assert_eq!(&result.members, &members);
        prop_assert!(members.len() >= k);

        // The averaged label agrees with the oracle average, exactly.
        let labels: Vec<SoftLabel> = (0..n)
            .map(|i| churn_lab::one_hot(i % 2, 2).unwrap())
            .collect();
        let eta = knn_label(&q.view(), &points.view(), &labels, k).unwrap();
        let mut expect = [0.0f64; 2];
        for &i in &members {
            expect[0] += labels[i].probs()[0];
            expect[1] += labels[i].probs()[1];
        }
        prop_assert_eq!(eta.probs()[0], expect[0] / members.len() as f64);
        prop_assert_eq!(eta.probs()[1], expect[1] / members.len() as f64);
    }

    #[test]
    fn self_inclusion_holds_for_dataset_points(
        coords in prop::collection::vec(-100i32..100, 6..30),
        pick in any::<prop::sample::Index>(),
        k_raw in 1usize..10,
    ) {
        let n = coords.len() / 3;
        let k = (k_raw % n) + 1;
        let points = Array2::from_shape_fn((n, 3), |(i, j)| f64::from(coords[3 * i + j]));
        let i = pick.index(n);
        let q = points.row(i).to_owned();
        let result = knn_query(&q.view(), &points.view(), k).unwrap();
        prop_assert!(result.members.contains(&i));
        prop_assert!(result.radius >= 0.0);
    }
}
