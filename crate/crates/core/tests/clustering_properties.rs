mod common;

use behavior_discovery::clustering::{init_centroids, ss_kmeans, ss_kmeans_observed, ClusteringConfig};
use behavior_discovery::encoder::{ClassMap, EmbeddingSet, Provenance};
use behavior_discovery::matrix::Matrix;
use common::{fixtures, oracle};
use proptest::prelude::*;

fn one_dim(values: &[(f64, Option<u32>)]) -> EmbeddingSet {
    EmbeddingSet {
        vectors: Matrix::from_rows(&values.iter().map(|(v, _)| [*v]).collect::<Vec<_>>()),
        ids: (0..values.len()).map(|i| i.to_string()).collect(),
        provenance: values
            .iter()
            .map(|(_, c)| c.map_or(Provenance::Unlabeled, Provenance::Labeled))
            .collect(),
        truth: values.iter().map(|(_, c)| *c).collect(),
        class_map: ClassMap::new(vec![0, 1]),
    }
}

#[test]
fn hand_computed_one_dimensional_centroids() {
    let emb = one_dim(&[(0.0, Some(0)), (0.1, Some(0)), (10.0, Some(1)), (10.1, Some(1))]);
    let cfg = ClusteringConfig {
        n_free: 0,
        ..ClusteringConfig::default()
    };
    let m = ss_kmeans(&emb, &cfg).unwrap();
    assert!((m.centroids.get(0, 0) - 0.05).abs() < 1e-12);
    assert!((m.centroids.get(1, 0) - 10.05).abs() < 1e-12);
    assert!((m.inertia - 0.01).abs() < 1e-12, "{}", m.inertia);
}

#[test]
fn reported_inertia_matches_recomputation() {
    for seed in 0..20 {
        let (emb, n_free) = fixtures::random_embeddings(seed);
        let cfg = ClusteringConfig {
            n_free,
            ..ClusteringConfig::default()
        };
        let rows = fixtures::rows_of(&emb.vectors);
        let m = ss_kmeans(&emb, &cfg).unwrap();
        let expect = oracle::inertia(&rows, &fixtures::rows_of(&m.centroids), &m.assignments);
        assert!((m.inertia - expect).abs() <= 1e-9 * expect.max(1.0), "seed {seed}");
    }
}

#[test]
fn clustering_is_deterministic() {
    let (emb, n_free) = fixtures::random_embeddings(7);
    let cfg = ClusteringConfig {
        n_free,
        ..ClusteringConfig::default()
    };
    assert_eq!(ss_kmeans(&emb, &cfg).unwrap(), ss_kmeans(&emb, &cfg).unwrap());
}

#[test]
fn free_centroid_is_the_farthest_unlabeled_point() {
    let rows = [[0.0, 0.0], [0.0, 2.0], [10.0, 0.0], [10.0, 2.0], [5.0, 1.0], [50.0, 50.0], [-3.0, 1.0]];
    let labels = [Some(0), Some(0), Some(1), Some(1), None, None, None];
    let emb = EmbeddingSet {
        vectors: Matrix::from_rows(&rows),
        ids: (0..rows.len()).map(|i| i.to_string()).collect(),
        provenance: labels.iter().map(|c| c.map_or(Provenance::Unlabeled, Provenance::Labeled)).collect(),
        truth: labels.to_vec(),
        class_map: ClassMap::new(vec![0, 1]),
    };
    let c = init_centroids(&emb, 2).unwrap();
    assert_eq!(c.row(0), &[0.0, 1.0]);
    assert_eq!(c.row(1), &[10.0, 1.0]);
    assert_eq!(c.row(2), &[50.0, 50.0]);
    // second pick: farthest from {(0,1), (10,1), (50,50)} among the rest
    let brute = [4usize, 6]
        .into_iter()
        .max_by(|&a, &b| {
            let d = |i: usize| {
                (0..3)
                    .map(|k| (rows[i][0] - c.get(k, 0)).powi(2) + (rows[i][1] - c.get(k, 1)).powi(2))
                    .fold(f64::INFINITY, f64::min)
            };
            d(a).total_cmp(&d(b))
        })
        .unwrap();
    assert_eq!(c.row(3), &rows[brute]);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn inertia_never_increases_and_labels_stay_pinned(seed in any::<u64>()) {
        let (emb, n_free) = fixtures::random_embeddings(seed);
        let cfg = ClusteringConfig { n_free, ..ClusteringConfig::default() };
        let pins: Vec<Option<usize>> = emb
            .provenance
            .iter()
            .map(|p| match p {
                Provenance::Labeled(c) => emb.class_map.index_of(*c),
                Provenance::Unlabeled => None,
            })
            .collect();
        let mut previous = f64::INFINITY;
        let mut violations = Vec::new();
        ss_kmeans_observed(&emb, &cfg, |it, assignments, _, inertia| {
            if inertia > previous + 1e-9 * previous.abs().max(1.0) {
                violations.push(format!("iteration {it}: {previous} -> {inertia}"));
            }
            previous = inertia;
            for (i, pin) in pins.iter().enumerate() {
                if let Some(c) = pin {
                    if assignments[i] != *c {
                        violations.push(format!("iteration {it}: row {i} left cluster {c}"));
                    }
                }
            }
        })
        .unwrap();
        prop_assert!(violations.is_empty(), "{:?}", violations);
    }
}
