use std::collections::BTreeMap;

use crate::clustering::{ss_kmeans, ClusterModel, ClusteringConfig};
use crate::data::ClassId;
use crate::density::{
    containment_report, fit_class_densities, fit_kde, ClassSource, ContainmentReport, DensityConfig, Point,
};
use crate::encoder::{EmbeddingSet, Provenance};
use crate::error::{Error, Result, StageContext};
use crate::projection::{tsne_fit, Projection2D, TsneConfig};
use crate::seed::derive_seed;

/// Clustering, projection and containment of one embedding set.
#[derive(Debug, Clone)]
pub struct Analysis {
    pub clusters: ClusterModel,
    pub projection: Projection2D,
    /// One row per free cluster that has enough points for a density.
    pub containment: ContainmentReport,
    /// Free clusters too small for a density; they carry no score.
    pub unscored_clusters: Vec<usize>,
}

impl Analysis {
    /// `O_c` of a free cluster, if it was scored.
    pub fn score(&self, cluster: usize) -> Option<f64> {
        self.containment.row(cluster).map(|r| r.score)
    }

    pub fn any_novel(&self) -> bool {
        self.containment.rows.iter().any(|r| r.novel)
    }
}

/// Clusters `emb` with `n_free` extra clusters, projects all rows jointly and
/// scores every free cluster against the known-class densities.
pub fn analyze(
    emb: &EmbeddingSet,
    clustering: &ClusteringConfig,
    tsne: &TsneConfig,
    density: &DensityConfig,
    seed: u64,
) -> Result<Analysis> {
    let clusters = ss_kmeans(emb, clustering).stage("clustering")?;
    let projection = tsne_fit(emb, tsne, derive_seed(seed, "tsne")).stage("projection")?;
    let (containment, unscored_clusters) =
        score_free_clusters(emb, &clusters, &projection, density, derive_seed(seed, "density")).stage("density")?;
    Ok(Analysis {
        clusters,
        projection,
        containment,
        unscored_clusters,
    })
}

fn score_free_clusters(
    emb: &EmbeddingSet,
    clusters: &ClusterModel,
    proj: &Projection2D,
    cfg: &DensityConfig,
    seed: u64,
) -> Result<(ContainmentReport, Vec<usize>)> {
    let mut class_points: BTreeMap<ClassId, Vec<Point>> = BTreeMap::new();
    for &k in emb.class_map.classes() {
        class_points.insert(k, Vec::new());
    }
    for i in 0..emb.len() {
        let class = match cfg.class_source {
            ClassSource::Labeled => match emb.provenance[i] {
                Provenance::Labeled(k) => Some(k),
                Provenance::Unlabeled => None,
            },
            ClassSource::Assigned => clusters.cluster_class(clusters.assignments[i]),
        };
        if let Some(k) = class {
            class_points.get_mut(&k).expect("known class").push(proj.point(i));
        }
    }
    let (classes, skipped) = fit_class_densities(&class_points)?;
    if classes.is_empty() {
        return Err(Error::Validation("no known class has enough points for a density".into()));
    }

    let mut cluster_models = BTreeMap::new();
    let mut unscored = Vec::new();
    for c in clusters.free_clusters() {
        let pts = proj.points(&clusters.members(c));
        match fit_kde(&pts) {
            Ok(m) => {
                cluster_models.insert(c, m);
            }
            Err(Error::InsufficientPoints { got, .. }) => {
                log::warn!("free cluster {c} has {got} points, too few for a density; left unscored");
                unscored.push(c);
            }
            Err(e) => return Err(e),
        }
    }
    let report = containment_report(&cluster_models, &classes, skipped, cfg, seed)?;
    Ok((report, unscored))
}
