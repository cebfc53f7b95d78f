use serde::{Deserialize, Serialize};

use super::ClusterModel;
use crate::data::ClassId;
use crate::encoder::{EmbeddingSet, Provenance};
use crate::error::{Error, Result};

/// Free cluster that received the most withheld-class rows of the unlabeled
/// pool (lowest index on ties), and the fraction it received.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WithheldMatch {
    pub cluster: usize,
    pub accuracy: f64,
}

/// Withheld-class accuracy on the unlabeled pool. `None` when no class is
/// withheld (negative control) or the model has no free cluster.
pub fn withheld_accuracy(
    model: &ClusterModel,
    emb: &EmbeddingSet,
    withheld: Option<ClassId>,
) -> Result<Option<WithheldMatch>> {
    let Some(w) = withheld else {
        return Ok(None);
    };
    if model.assignments.len() != emb.len() {
        return Err(Error::Shape("cluster model and embeddings are not row aligned".into()));
    }
    if model.n_free == 0 {
        return Ok(None);
    }
    let rows: Vec<usize> = (0..emb.len())
        .filter(|&i| emb.provenance[i] == Provenance::Unlabeled && emb.truth[i] == Some(w))
        .collect();
    if rows.is_empty() {
        return Err(Error::Validation(format!("withheld class {w} has no rows in the unlabeled pool")));
    }
    let mut best = WithheldMatch {
        cluster: model.n_known,
        accuracy: -1.0,
    };
    for c in model.free_clusters() {
        let hits = rows.iter().filter(|&&i| model.assignments[i] == c).count();
        let acc = hits as f64 / rows.len() as f64;
        if acc > best.accuracy {
            best = WithheldMatch { cluster: c, accuracy: acc };
        }
    }
    Ok(Some(best))
}

/// Counts of unlabeled rows by hidden truth class (rows) and cluster (columns).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub truth_classes: Vec<ClassId>,
    pub n_clusters: usize,
    pub counts: Vec<Vec<usize>>,
}

impl ConfusionMatrix {
    pub fn row_sums(&self) -> Vec<usize> {
        self.counts.iter().map(|r| r.iter().sum()).collect()
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("truth");
        for c in 0..self.n_clusters {
            s.push_str(&format!(",cluster_{c}"));
        }
        s.push('\n');
        for (class, row) in self.truth_classes.iter().zip(&self.counts) {
            s.push_str(&class.to_string());
            for v in row {
                s.push_str(&format!(",{v}"));
            }
            s.push('\n');
        }
        s
    }

    pub fn from_csv(text: &str) -> Result<Self> {
        let mut lines = text.lines().filter(|l| !l.trim().is_empty());
        let header = lines.next().ok_or_else(|| Error::Parse {
            row: 1,
            message: "empty confusion matrix".into(),
        })?;
        let n_clusters = header.split(',').count().saturating_sub(1);
        let mut truth_classes = Vec::new();
        let mut counts = Vec::new();
        for (i, line) in lines.enumerate() {
            let row = i + 2;
            let cells: Vec<&str> = line.split(',').collect();
            if cells.len() != n_clusters + 1 {
                return Err(Error::Parse {
                    row,
                    message: format!("expected {} cells", n_clusters + 1),
                });
            }
            let parse_err = |c: &str| Error::Parse {
                row,
                message: format!("`{c}` is not a count"),
            };
            truth_classes.push(cells[0].trim().parse().map_err(|_| parse_err(cells[0]))?);
            counts.push(
                cells[1..]
                    .iter()
                    .map(|c| c.trim().parse().map_err(|_| parse_err(c)))
                    .collect::<Result<Vec<usize>>>()?,
            );
        }
        Ok(Self {
            truth_classes,
            n_clusters,
            counts,
        })
    }
}

/// Confusion matrix over the unlabeled pool. Rows are the truth classes present
/// there (withheld class included), columns the clusters `0..K`.
pub fn confusion_matrix(model: &ClusterModel, emb: &EmbeddingSet) -> Result<ConfusionMatrix> {
    if model.assignments.len() != emb.len() {
        return Err(Error::Shape("cluster model and embeddings are not row aligned".into()));
    }
    let mut truth_classes: Vec<ClassId> = (0..emb.len())
        .filter(|&i| emb.provenance[i] == Provenance::Unlabeled)
        .filter_map(|i| emb.truth[i])
        .collect();
    truth_classes.sort_unstable();
    truth_classes.dedup();
    let k = model.k();
    let mut counts = vec![vec![0usize; k]; truth_classes.len()];
    for i in 0..emb.len() {
        if emb.provenance[i] != Provenance::Unlabeled {
            continue;
        }
        if let Some(t) = emb.truth[i] {
            let r = truth_classes.binary_search(&t).expect("collected above");
            counts[r][model.assignments[i]] += 1;
        }
    }
    Ok(ConfusionMatrix {
        truth_classes,
        n_clusters: k,
        counts,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialMetrics {
    pub withheld_accuracy: Option<f64>,
    pub matched_cluster: Option<usize>,
    pub confusion: ConfusionMatrix,
    /// Known class of each cluster, `None` for free clusters.
    pub cluster_classes: Vec<Option<ClassId>>,
}

impl TrialMetrics {
    pub fn compute(model: &ClusterModel, emb: &EmbeddingSet, withheld: Option<ClassId>) -> Result<Self> {
        let matched = withheld_accuracy(model, emb, withheld)?;
        Ok(Self {
            withheld_accuracy: matched.map(|m| m.accuracy),
            matched_cluster: matched.map(|m| m.cluster),
            confusion: confusion_matrix(model, emb)?,
            cluster_classes: (0..model.k()).map(|c| model.cluster_class(c)).collect(),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::clustering::{ss_kmeans, ClusteringConfig};
    use crate::encoder::ClassMap;
    use crate::matrix::Matrix;

    fn model(assignments: Vec<usize>, n_known: usize, n_free: usize) -> ClusterModel {
        ClusterModel {
            centroids: Matrix::zeros(n_known + n_free, 1),
            assignments,
            n_known,
            n_free,
            iterations_run: 1,
            inertia: 0.0,
            inertia_trace: vec![0.0],
            class_map: ClassMap::new((0..n_known as u32).collect()),
        }
    }

    fn emb(prov: Vec<Provenance>, truth: Vec<Option<ClassId>>, classes: Vec<ClassId>) -> EmbeddingSet {
        let n = prov.len();
        let d = classes.len();
        EmbeddingSet {
            vectors: Matrix::zeros(n, d),
            ids: (0..n).map(|i| i.to_string()).collect(),
            provenance: prov,
            truth,
            class_map: ClassMap::new(classes),
        }
    }

    use Provenance::{Labeled as L, Unlabeled as U};

    #[test]
    fn all_withheld_rows_in_free_cluster() {
        let e = emb(
            vec![L(0), L(1), U, U, U, U],
            vec![Some(0), Some(1), Some(0), Some(5), Some(5), Some(5)],
            vec![0, 1],
        );
        let m = model(vec![0, 1, 0, 2, 2, 2], 2, 1);
        let w = withheld_accuracy(&m, &e, Some(5)).unwrap().unwrap();
        assert_eq!(w.accuracy, 1.0);
        assert_eq!(w.cluster, 2);
        assert!(withheld_accuracy(&m, &e, None).unwrap().is_none());
    }

    #[test]
    fn perfect_clustering_structure() {
        let e = emb(
            vec![L(0), L(1), U, U, U, U, U],
            vec![Some(0), Some(1), Some(0), Some(0), Some(1), Some(4), Some(4)],
            vec![0, 1],
        );
        let m = model(vec![0, 1, 0, 0, 1, 2, 2], 2, 1);
        let cm = confusion_matrix(&m, &e).unwrap();
        assert_eq!(cm.truth_classes, vec![0, 1, 4]);
        assert_eq!(cm.counts, vec![vec![2, 0, 0], vec![0, 1, 0], vec![0, 0, 2]]);
        assert_eq!(cm.row_sums(), vec![2, 1, 2]);
        assert_eq!(ConfusionMatrix::from_csv(&cm.to_csv()).unwrap(), cm);
    }

    #[test]
    fn one_swapped_point_gives_single_off_diagonal() {
        // two well separated 1D classes; an unlabeled class-1 point sits on class 0
        let rows = [0.0, 0.2, 10.0, 10.2, 0.1, 0.15, 10.1, 0.05];
        let prov = vec![L(0), L(0), L(1), L(1), U, U, U, U];
        let truth = vec![Some(0), Some(0), Some(1), Some(1), Some(0), Some(0), Some(1), Some(1)];
        let mut e = emb(prov, truth, vec![0, 1]);
        e.vectors = Matrix::from_vec(8, 2, rows.iter().flat_map(|&v| [v, 0.0]).collect());
        let m = ss_kmeans(
            &e,
            &ClusteringConfig {
                n_free: 0,
                ..Default::default()
            },
        )
        .unwrap();
        let cm = confusion_matrix(&m, &e).unwrap();
        assert_eq!(cm.counts, vec![vec![2, 0], vec![1, 1]]);
        let off: usize = cm.counts[0][1] + cm.counts[1][0];
        assert_eq!(off, 1);
    }
}
