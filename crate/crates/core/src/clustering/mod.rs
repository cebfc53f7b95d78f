//! Label-guided K-means over logit embeddings with extra free clusters, and
//! the trial metrics computed on the unlabeled pool.

mod kmeans;
mod metrics;

pub use kmeans::{init_centroids, ss_kmeans, ss_kmeans_observed, ClusterModel, ClusteringConfig};
pub use metrics::{confusion_matrix, withheld_accuracy, ConfusionMatrix, TrialMetrics, WithheldMatch};
