//! Label-guided K-means with one free cluster on a toy embedding: two
//! labeled classes plus an unlabeled group that belongs to neither.
//!
//! cargo run --release --example semi_supervised_kmeans

use behavior_discovery::clustering::{ss_kmeans_observed, ClusteringConfig};
use behavior_discovery::encoder::{ClassMap, EmbeddingSet, Provenance};
use behavior_discovery::matrix::Matrix;
use rand::Rng;
use rand_distr::StandardNormal;

fn main() -> behavior_discovery::Result<()> {
    let mut rng = behavior_discovery::seed::rng_from(5);
    let centers = [([0.0, 0.0], Some(0)), ([6.0, 0.0], Some(1)), ([3.0, 6.0], None)];
    let mut rows = Vec::new();
    let mut provenance = Vec::new();
    let mut truth = Vec::new();
    for (c, (center, class)) in centers.iter().enumerate() {
        for i in 0..40 {
            let x: f64 = rng.sample(StandardNormal);
            let y: f64 = rng.sample(StandardNormal);
            rows.push([center[0] + 0.7 * x, center[1] + 0.7 * y]);
            // half of each known class is labeled
            provenance.push(match class {
                Some(k) if i % 2 == 0 => Provenance::Labeled(*k),
                _ => Provenance::Unlabeled,
            });
            truth.push(Some(c as u32));
        }
    }
    let emb = EmbeddingSet {
        vectors: Matrix::from_rows(&rows),
        ids: (0..rows.len()).map(|i| format!("r{i}")).collect(),
        provenance,
        truth,
        class_map: ClassMap::new(vec![0, 1]),
    };
    let model = ss_kmeans_observed(&emb, &ClusteringConfig::default(), |it, _assignments, _centroids, inertia| {
        println!("iteration {it:2}  inertia {inertia:.3}");
    })?;
    for c in 0..model.k() {
        let label = model.cluster_class(c).map_or("free".to_string(), |k| format!("class {k}"));
        println!("cluster {c} ({label}): {} rows", model.members(c).len());
    }
    let novel_rows = (80..120).filter(|&i| model.is_free(model.assignments[i])).count();
    println!("{novel_rows}/40 rows of the unlabeled group landed in the free cluster");
    Ok(())
}
