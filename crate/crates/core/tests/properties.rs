//! Property-based invariants over randomized inputs.

use proptest::prelude::*;

use clusterfed::clustering::{self, Assignment, Centroids, Weights};
use clusterfed::data::{dirichlet_partition, nclass_partition, Dataset};
use clusterfed::metrics;
use clusterfed::model::{self, InitKind, ModelKind, ModelSpec};
use clusterfed::param::{Layout, ParamVector};

fn vec_rep(values: Vec<f64>) -> ParamVector {
    let n = values.len();
    ParamVector::new(values, Layout::new(vec![("v", n)])).unwrap()
}

fn balanced_dataset(per_class: usize, n_classes: usize) -> Dataset {
    let n = per_class * n_classes;
    let features: Vec<f64> = (0..n * 3).map(|i| (i % 17) as f64 / 17.0).collect();
    let labels: Vec<usize> = (0..n).map(|i| i % n_classes).collect();
    Dataset::new(features, 3, labels, n_classes).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn dirichlet_partition_upholds_invariants(
        k_true in 1usize..5,
        per_cluster in 1usize..5,
        alpha_cluster in 0.05f64..20.0,
        alpha_client in 0.05f64..20.0,
        seed in 0u64..1000,
    ) {
        let m = k_true * per_cluster;
        let d = balanced_dataset(10 * m, 4);
        let p = dirichlet_partition(&d, m, k_true, alpha_cluster, alpha_client, seed).unwrap();
        p.validate(&d).unwrap();
        prop_assert_eq!(p.cluster_of_client.len(), m);
        let again = dirichlet_partition(&d, m, k_true, alpha_cluster, alpha_client, seed).unwrap();
        prop_assert_eq!(p, again);
    }

    #[test]
    fn nclass_partition_label_budgets(
        k_true in 1usize..5,
        per_cluster in 1usize..4,
        extra in 0usize..3,
        n_client_classes in 1usize..4,
        seed in 0u64..1000,
    ) {
        let n_cluster_classes = (n_client_classes + extra).min(6);
        let m = k_true * per_cluster;
        let d = balanced_dataset(20 * m, 6);
        let p = nclass_partition(&d, m, k_true, n_cluster_classes, n_client_classes, seed).unwrap();
        p.validate(&d).unwrap();
        for (i, shard) in p.client_shards.iter().enumerate() {
            let mut labels: Vec<usize> = shard.iter().map(|&s| d.label(s)).collect();
            labels.sort_unstable();
            labels.dedup();
            prop_assert_eq!(labels.len(), n_client_classes, "client {}", i);
        }
        // Union of member label sets stays within the cluster's budget.
        for cluster in 0..k_true {
            let mut union: Vec<usize> = p
                .client_shards
                .iter()
                .enumerate()
                .filter(|(i, _)| p.cluster_of_client[*i] == cluster)
                .flat_map(|(_, s)| s.iter().map(|&x| d.label(x)))
                .collect();
            union.sort_unstable();
            union.dedup();
            prop_assert!(union.len() <= n_cluster_classes);
        }
    }

    #[test]
    fn e_step_invariant_to_weight_rescaling(
        m in 1usize..10,
        k in 1usize..5,
        scale in 0.001f64..1000.0,
        seed in 0u64..1000,
    ) {
        use rand::Rng;
        let mut rng = clusterfed::rng::rng_from(seed);
        let dim = rng.gen_range(1..8);
        let reps: Vec<ParamVector> = (0..m)
            .map(|_| vec_rep((0..dim).map(|_| rng.gen_range(-4.0..4.0)).collect()))
            .collect();
        let centroids = Centroids::new(
            (0..k)
                .map(|_| vec_rep((0..dim).map(|_| rng.gen_range(-4.0..4.0)).collect()))
                .collect(),
        )
        .unwrap();
        let base: Vec<f64> = (0..m).map(|_| rng.gen_range(0.01..10.0)).collect();
        let w1 = Weights::new(base.clone()).unwrap();
        let w2 = Weights::new(base.iter().map(|&x| x * scale).collect()).unwrap();
        let a1 = clustering::e_step(&reps, &centroids, &w1).unwrap();
        let a2 = clustering::e_step(&reps, &centroids, &w2).unwrap();
        prop_assert_eq!(a1, a2);
    }

    #[test]
    fn ari_symmetric_and_relabel_invariant(
        assignment in proptest::collection::vec(0usize..4, 2..30),
        other in proptest::collection::vec(0usize..4, 2..30),
        offset in 1usize..7,
    ) {
        let n = assignment.len().min(other.len());
        let a = Assignment::new(assignment[..n].to_vec());
        let b = Assignment::new(other[..n].to_vec());
        let ab = metrics::adjusted_rand_index(&a, &b).unwrap();
        let ba = metrics::adjusted_rand_index(&b, &a).unwrap();
        prop_assert!((ab - ba).abs() < 1e-12);
        // Relabeling one side must not change the score.
        let relabeled =
            Assignment::new(a.cluster_of.iter().map(|&c| c + offset).collect());
        let rel = metrics::adjusted_rand_index(&relabeled, &b).unwrap();
        prop_assert!((ab - rel).abs() < 1e-12);
        let self_score = metrics::adjusted_rand_index(&a, &a).unwrap();
        prop_assert!((self_score - 1.0).abs() < 1e-12);
    }

    #[test]
    fn forward_rows_are_distributions(
        seed in 0u64..1000,
        hidden in 1usize..8,
        mlp in proptest::bool::ANY,
    ) {
        let spec = ModelSpec {
            kind: if mlp { ModelKind::Mlp1 } else { ModelKind::Logistic },
            n_features: 3,
            n_classes: 5,
            hidden_units: hidden,
            init: InitKind::Gaussian { std: 1.5 },
        };
        let params = spec.init_params(seed);
        let features: Vec<f64> = (0..12).map(|i| (i as f64 - 6.0) / 3.0).collect();
        let probs = model::forward(&params, &spec, &features).unwrap();
        for row in probs.chunks(5) {
            let total: f64 = row.iter().sum();
            prop_assert!((total - 1.0).abs() < 1e-9);
            prop_assert!(row.iter().all(|&p| (0.0..1.0).contains(&p)));
        }
    }

    #[test]
    fn micro_accuracy_stays_in_range(
        pred in proptest::collection::vec(0usize..5, 1..40),
    ) {
        let truth: Vec<usize> = pred.iter().map(|&p| (p + 1) % 5).collect();
        let all_wrong = metrics::micro_accuracy(&pred, &truth).unwrap();
        prop_assert_eq!(all_wrong, 0.0);
        let all_right = metrics::micro_accuracy(&pred, &pred).unwrap();
        prop_assert_eq!(all_right, 100.0);
    }

    #[test]
    fn macro_f1_bounded_by_unit_interval(
        pred in proptest::collection::vec(0usize..4, 1..40),
        truth in proptest::collection::vec(0usize..4, 1..40),
    ) {
        let n = pred.len().min(truth.len());
        let f1 = metrics::macro_f1(&pred[..n], &truth[..n], 4).unwrap();
        prop_assert!((0.0..=1.0).contains(&f1));
    }
}
