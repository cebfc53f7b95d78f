use serde::{Deserialize, Serialize};

use crate::data::ClassId;
use crate::encoder::{ClassMap, EmbeddingSet, Provenance};
use crate::error::{Error, Result};
use crate::matrix::{squared_distance, Matrix};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ClusteringConfig {
    /// Clusters beyond the known classes.
    pub n_free: usize,
    pub max_iter: usize,
    /// Stop when no centroid coordinate moves more than this.
    pub tol: f64,
    /// L2-normalize embeddings before clustering.
    pub normalize: bool,
}

impl Default for ClusteringConfig {
    fn default() -> Self {
        Self {
            n_free: 1,
            max_iter: 300,
            tol: 1e-6,
            normalize: false,
        }
    }
}

impl ClusteringConfig {
    pub fn validate(&self) -> Result<()> {
        if self.max_iter == 0 {
            return Err(Error::Config("clustering max_iter must be positive".into()));
        }
        if !(self.tol >= 0.0) {
            return Err(Error::Config("clustering tol must be non-negative".into()));
        }
        Ok(())
    }
}

/// Centroids `0..n_known` belong to the known classes in class-map order;
/// the remaining `n_free` are free.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterModel {
    pub centroids: Matrix,
    pub assignments: Vec<usize>,
    pub n_known: usize,
    pub n_free: usize,
    pub iterations_run: usize,
    pub inertia: f64,
    pub inertia_trace: Vec<f64>,
    pub class_map: ClassMap,
}

impl ClusterModel {
    pub fn k(&self) -> usize {
        self.n_known + self.n_free
    }

    pub fn is_free(&self, cluster: usize) -> bool {
        cluster >= self.n_known
    }

    pub fn free_clusters(&self) -> std::ops::Range<usize> {
        self.n_known..self.k()
    }

    /// Known class of a cluster, `None` for free clusters.
    pub fn cluster_class(&self, cluster: usize) -> Option<ClassId> {
        (cluster < self.n_known).then(|| self.class_map.class_at(cluster))
    }

    pub fn members(&self, cluster: usize) -> Vec<usize> {
        self.assignments
            .iter()
            .enumerate()
            .filter(|(_, &a)| a == cluster)
            .map(|(i, _)| i)
            .collect()
    }
}

/// Cluster index a row is pinned to, if labeled.
fn pinned_clusters(emb: &EmbeddingSet) -> Result<Vec<Option<usize>>> {
    emb.provenance
        .iter()
        .enumerate()
        .map(|(i, p)| match p {
            Provenance::Labeled(c) => emb.class_map.index_of(*c).map(Some).ok_or_else(|| {
                Error::Validation(format!(
                    "row {} is labeled with class {c}, which the encoder does not know",
                    emb.ids[i]
                ))
            }),
            Provenance::Unlabeled => Ok(None),
        })
        .collect()
}

fn prepared(emb: &EmbeddingSet, normalize: bool) -> Matrix {
    let mut x = emb.vectors.clone();
    if normalize {
        for i in 0..x.rows() {
            let r = x.row_mut(i);
            let norm = r.iter().map(|v| v * v).sum::<f64>().sqrt();
            if norm > 0.0 {
                r.iter_mut().for_each(|v| *v /= norm);
            }
        }
    }
    x
}

/// Known-class centroids are the means of their labeled rows. Each free
/// centroid is placed on the unlabeled row farthest from its nearest
/// already-chosen centroid (lowest row index on ties).
pub fn init_centroids(emb: &EmbeddingSet, n_free: usize) -> Result<Matrix> {
    init_on(&emb.vectors, emb, &pinned_clusters(emb)?, n_free)
}

fn init_on(x: &Matrix, emb: &EmbeddingSet, pinned: &[Option<usize>], n_free: usize) -> Result<Matrix> {
    let n_known = emb.class_map.len();
    let d = x.cols();
    let mut centroids = Matrix::zeros(n_known + n_free, d);
    let mut counts = vec![0usize; n_known];
    for (i, p) in pinned.iter().enumerate() {
        if let Some(c) = *p {
            counts[c] += 1;
            for (acc, v) in centroids.row_mut(c).iter_mut().zip(x.row(i)) {
                *acc += v;
            }
        }
    }
    for (c, &n) in counts.iter().enumerate() {
        if n == 0 {
            return Err(Error::Validation(format!(
                "known class {} has no labeled embedding",
                emb.class_map.class_at(c)
            )));
        }
        centroids.row_mut(c).iter_mut().for_each(|v| *v /= n as f64);
    }

    let unlabeled: Vec<usize> = (0..x.rows()).filter(|&i| pinned[i].is_none()).collect();
    if n_free > unlabeled.len() {
        return Err(Error::Validation(format!(
            "{n_free} free clusters requested but only {} unlabeled rows",
            unlabeled.len()
        )));
    }
    for f in 0..n_free {
        let chosen = n_known + f;
        let mut best: Option<(usize, f64)> = None;
        for &i in &unlabeled {
            let nearest = (0..chosen)
                .map(|c| squared_distance(x.row(i), centroids.row(c)))
                .fold(f64::INFINITY, f64::min);
            if best.is_none_or(|(_, b)| nearest > b) {
                best = Some((i, nearest));
            }
        }
        let (i, _) = best.expect("n_free <= unlabeled rows");
        centroids.row_mut(chosen).copy_from_slice(x.row(i));
    }
    Ok(centroids)
}

/// Semi-supervised K-means with hard-pinned labeled rows.
pub fn ss_kmeans(emb: &EmbeddingSet, cfg: &ClusteringConfig) -> Result<ClusterModel> {
    ss_kmeans_observed(emb, cfg, |_, _, _, _| {})
}

/// [`ss_kmeans`] calling `observer(iteration, assignments, centroids, inertia)`
/// after every update step.
pub fn ss_kmeans_observed<F>(emb: &EmbeddingSet, cfg: &ClusteringConfig, mut observer: F) -> Result<ClusterModel>
where
    F: FnMut(usize, &[usize], &Matrix, f64),
{
    emb.validate_rows()?;
    cfg.validate()?;
    let pinned = pinned_clusters(emb)?;
    let x = prepared(emb, cfg.normalize);
    let mut centroids = init_on(&x, emb, &pinned, cfg.n_free)?;
    let n_known = emb.class_map.len();
    let k = n_known + cfg.n_free;
    let n = x.rows();

    let mut assignments = vec![usize::MAX; n];
    let mut trace = Vec::new();
    let mut iterations = 0;
    for iter in 1..=cfg.max_iter {
        iterations = iter;
        let mut next = vec![0usize; n];
        for i in 0..n {
            next[i] = match pinned[i] {
                Some(c) => c,
                None => nearest(x.row(i), &centroids),
            };
        }
        let changed = next != assignments;
        assignments = next;

        let previous = centroids.clone();
        update_centroids(&x, &assignments, &mut centroids, k);
        repair_empty(&x, &pinned, &mut assignments, &mut centroids, k);

        let inertia = inertia_of(&x, &assignments, &centroids);
        trace.push(inertia);
        observer(iter, &assignments, &centroids, inertia);

        let shift = previous
            .as_slice()
            .iter()
            .zip(centroids.as_slice())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        if !changed || shift < cfg.tol {
            break;
        }
    }

    Ok(ClusterModel {
        centroids,
        assignments,
        n_known,
        n_free: cfg.n_free,
        iterations_run: iterations,
        inertia: *trace.last().expect("at least one iteration"),
        inertia_trace: trace,
        class_map: emb.class_map.clone(),
    })
}

/// Nearest centroid by squared Euclidean distance, lowest index on ties.
fn nearest(row: &[f64], centroids: &Matrix) -> usize {
    let mut best = (0, f64::INFINITY);
    for c in 0..centroids.rows() {
        let d = squared_distance(row, centroids.row(c));
        if d < best.1 {
            best = (c, d);
        }
    }
    best.0
}

/// Means of assigned rows; empty clusters keep their centroid.
fn update_centroids(x: &Matrix, assignments: &[usize], centroids: &mut Matrix, k: usize) {
    let d = x.cols();
    let mut sums = Matrix::zeros(k, d);
    let mut counts = vec![0usize; k];
    for (i, &a) in assignments.iter().enumerate() {
        counts[a] += 1;
        for (s, v) in sums.row_mut(a).iter_mut().zip(x.row(i)) {
            *s += v;
        }
    }
    for c in 0..k {
        if counts[c] > 0 {
            for (dst, s) in centroids.row_mut(c).iter_mut().zip(sums.row(c)) {
                *dst = s / counts[c] as f64;
            }
        }
    }
}

/// Re-seeds each empty cluster on the unlabeled row farthest from its
/// assigned centroid and moves that row into it. Rows that are the only
/// member of their cluster are not taken.
fn repair_empty(x: &Matrix, pinned: &[Option<usize>], assignments: &mut [usize], centroids: &mut Matrix, k: usize) {
    let mut counts = vec![0usize; k];
    for &a in assignments.iter() {
        counts[a] += 1;
    }
    for e in 0..k {
        if counts[e] > 0 {
            continue;
        }
        let mut best: Option<(usize, f64)> = None;
        for i in 0..x.rows() {
            if pinned[i].is_some() || counts[assignments[i]] < 2 {
                continue;
            }
            let d = squared_distance(x.row(i), centroids.row(assignments[i]));
            if best.is_none_or(|(_, b)| d > b) {
                best = Some((i, d));
            }
        }
        let Some((i, _)) = best else {
            log::warn!("cluster {e} is empty and no unlabeled row can re-seed it");
            continue;
        };
        let old = assignments[i];
        assignments[i] = e;
        counts[old] -= 1;
        counts[e] = 1;
        centroids.row_mut(e).copy_from_slice(x.row(i));
        let members: Vec<usize> = (0..x.rows()).filter(|&j| assignments[j] == old).collect();
        let mut mean = vec![0.0; x.cols()];
        for &j in &members {
            for (m, v) in mean.iter_mut().zip(x.row(j)) {
                *m += v;
            }
        }
        for (dst, m) in centroids.row_mut(old).iter_mut().zip(mean) {
            *dst = m / members.len() as f64;
        }
    }
}

fn inertia_of(x: &Matrix, assignments: &[usize], centroids: &Matrix) -> f64 {
    assignments
        .iter()
        .enumerate()
        .map(|(i, &a)| squared_distance(x.row(i), centroids.row(a)))
        .sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seed::rng_from;
    use rand::Rng;

    pub(crate) fn emb(rows: &[(&[f64], Option<ClassId>)], classes: Vec<ClassId>) -> EmbeddingSet {
        let data: Vec<Vec<f64>> = rows.iter().map(|(r, _)| r.to_vec()).collect();
        EmbeddingSet {
            vectors: Matrix::from_rows(&data),
            ids: (0..rows.len()).map(|i| format!("r{i}")).collect(),
            provenance: rows
                .iter()
                .map(|(_, l)| l.map_or(Provenance::Unlabeled, Provenance::Labeled))
                .collect(),
            truth: rows.iter().map(|(_, l)| *l).collect(),
            class_map: ClassMap::new(classes),
        }
    }

    #[test]
    fn class_centroids_are_labeled_means() {
        let e = emb(
            &[
                (&[0.0, 0.0], Some(0)),
                (&[0.0, 2.0], Some(0)),
                (&[10.0, 0.0], Some(1)),
                (&[10.0, 2.0], Some(1)),
                (&[50.0, 50.0], None),
                (&[1.0, 1.0], None),
            ],
            vec![0, 1],
        );
        let c = init_centroids(&e, 1).unwrap();
        assert_eq!(c.row(0), &[0.0, 1.0]);
        assert_eq!(c.row(1), &[10.0, 1.0]);
        assert_eq!(c.row(2), &[50.0, 50.0]);
        let c0 = init_centroids(&e, 0).unwrap();
        assert_eq!(c0.rows(), 2);
        assert_eq!(c0.row(1), &[10.0, 1.0]);
    }

    #[test]
    fn free_centroid_matches_brute_force_farthest_point() {
        let mut rng = rng_from(5);
        let mut rows: Vec<(Vec<f64>, Option<ClassId>)> = Vec::new();
        for i in 0..40 {
            let l = if i < 20 { Some((i % 3) as ClassId) } else { None };
            rows.push(((0..3).map(|_| rng.random_range(-5.0..5.0)).collect(), l));
        }
        let refs: Vec<(&[f64], Option<ClassId>)> = rows.iter().map(|(r, l)| (r.as_slice(), *l)).collect();
        let e = emb(&refs, vec![0, 1, 2]);
        let c = init_centroids(&e, 2).unwrap();
        // brute force: sequential farthest point over all unlabeled rows
        let mut chosen: Vec<Vec<f64>> = (0..3).map(|k| c.row(k).to_vec()).collect();
        for f in 0..2 {
            let mut best = (usize::MAX, -1.0);
            for (i, (r, l)) in rows.iter().enumerate() {
                if l.is_some() {
                    continue;
                }
                let dmin = chosen.iter().map(|cc| squared_distance(r, cc)).fold(f64::INFINITY, f64::min);
                if dmin > best.1 {
                    best = (i, dmin);
                }
            }
            assert_eq!(c.row(3 + f), rows[best.0].0.as_slice());
            chosen.push(rows[best.0].0.clone());
        }
    }

    #[test]
    fn init_errors() {
        let e = emb(&[(&[0.0], Some(0)), (&[1.0], None)], vec![0, 1]);
        assert!(init_centroids(&e, 0).unwrap_err().to_string().contains("no labeled"));
        let e = emb(&[(&[0.0], Some(0)), (&[1.0], Some(1)), (&[2.0], None)], vec![0, 1]);
        assert!(init_centroids(&e, 2).is_err());
    }

    #[test]
    fn one_dimensional_hand_example() {
        let e = emb(
            &[(&[0.0], Some(0)), (&[0.1], Some(0)), (&[10.0], Some(1)), (&[10.1], Some(1))],
            vec![0, 1],
        );
        let cfg = ClusteringConfig {
            n_free: 0,
            ..Default::default()
        };
        let m = ss_kmeans(&e, &cfg).unwrap();
        assert!((m.centroids.get(0, 0) - 0.05).abs() < 1e-15);
        assert!((m.centroids.get(1, 0) - 10.05).abs() < 1e-12);
        assert!((m.inertia - 0.01).abs() < 1e-12);
    }

    #[test]
    fn unlabeled_copy_joins_its_class() {
        let e = emb(
            &[(&[0.0, 0.0], Some(0)), (&[0.5, 0.0], Some(0)), (&[9.0, 9.0], Some(1)), (&[0.5, 0.0], None)],
            vec![0, 1],
        );
        let cfg = ClusteringConfig {
            n_free: 0,
            ..Default::default()
        };
        let m = ss_kmeans(&e, &cfg).unwrap();
        assert_eq!(m.assignments[3], 0);
    }

    #[test]
    fn free_cluster_absorbs_distant_identical_points() {
        let mut rows: Vec<(&[f64], Option<ClassId>)> =
            vec![(&[0.0, 0.0], Some(0)), (&[1.0, 0.0], Some(0)), (&[0.0, 5.0], Some(1)), (&[1.0, 5.0], Some(1))];
        for _ in 0..6 {
            rows.push((&[40.0, -40.0], None));
        }
        let e = emb(&rows, vec![0, 1]);
        let mut iters = Vec::new();
        let m = ss_kmeans_observed(&e, &ClusteringConfig::default(), |it, a, _, _| iters.push((it, a.to_vec())))
            .unwrap();
        assert!(iters[0].1[4..].iter().all(|&a| a == 2));
        assert!(m.assignments[4..].iter().all(|&a| a == 2));
        assert_eq!(m.k(), 3);
        assert_eq!(m.cluster_class(2), None);
        assert_eq!(m.cluster_class(1), Some(1));
    }

    #[test]
    fn all_labeled_without_free_clusters_gives_class_means() {
        let mut rng = rng_from(8);
        let rows: Vec<(Vec<f64>, Option<ClassId>)> = (0..30)
            .map(|i| ((0..4).map(|_| rng.random_range(-3.0..3.0)).collect(), Some([0, 2, 5][i % 3])))
            .collect();
        let refs: Vec<(&[f64], Option<ClassId>)> = rows.iter().map(|(r, l)| (r.as_slice(), *l)).collect();
        let e = emb(&refs, vec![0, 2, 5]);
        let init = init_centroids(&e, 0).unwrap();
        let m = ss_kmeans(
            &e,
            &ClusteringConfig {
                n_free: 0,
                ..Default::default()
            },
        )
        .unwrap();
        assert_eq!(m.centroids, init);
    }

    #[test]
    fn empty_free_cluster_is_reseeded() {
        // the free centroid starts on the lone unlabeled outlier; when a
        // second free cluster has nothing, it takes the farthest row
        let e = emb(
            &[
                (&[0.0], Some(0)),
                (&[1.0], Some(0)),
                (&[10.0], Some(1)),
                (&[11.0], Some(1)),
                (&[3.0], None),
                (&[3.0], None),
                (&[3.0], None),
            ],
            vec![0, 1],
        );
        let m = ss_kmeans(
            &e,
            &ClusteringConfig {
                n_free: 2,
                ..Default::default()
            },
        )
        .unwrap();
        for c in 0..m.k() {
            assert!(!m.members(c).is_empty(), "cluster {c} empty: {:?}", m.assignments);
        }
        let w = m.inertia_trace.windows(2).all(|w| w[1] <= w[0] + 1e-12);
        assert!(w);
    }
}
