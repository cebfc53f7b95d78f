//! End-to-end experiments: existing-novel discovery, the negative control,
//! sliding-window deployment, and the per-class suite of both trial kinds.

mod analysis;
mod deploy;
pub mod report;
mod suite;
mod trial;

use serde::{Deserialize, Serialize};

use crate::clustering::ClusteringConfig;
use crate::data::ClassId;
use crate::density::DensityConfig;
use crate::encoder::EncoderConfig;
use crate::error::{Error, Result};
use crate::projection::TsneConfig;
use crate::seed::fnv1a;

pub use analysis::{analyze, Analysis};
pub use deploy::{run_deployment, DeploymentConfig, DeploymentResult, WindowResult};
pub use suite::{run_suite, SuiteEntry, SuiteResult};
pub use trial::{run_existing_discovery, run_negative_control, run_trial, TrialResult};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TrialKind {
    Discovery,
    Control,
}

impl TrialKind {
    pub fn as_str(self) -> &'static str {
        match self {
            TrialKind::Discovery => "discovery",
            TrialKind::Control => "control",
        }
    }
}

/// Everything one trial needs besides the dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrialConfig {
    /// Class kept out of the labeled pool. Required for discovery; for a
    /// negative control its rows are dropped entirely.
    pub withheld_class: Option<ClassId>,
    pub fraction_labeled: f64,
    pub encoder: EncoderConfig,
    pub clustering: ClusteringConfig,
    pub tsne: TsneConfig,
    pub density: DensityConfig,
    pub seed: u64,
}

impl Default for TrialConfig {
    fn default() -> Self {
        Self {
            withheld_class: None,
            fraction_labeled: 0.5,
            encoder: EncoderConfig::default(),
            clustering: ClusteringConfig::default(),
            tsne: TsneConfig::default(),
            density: DensityConfig::default(),
            seed: 0,
        }
    }
}

impl TrialConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.fraction_labeled > 0.0 && self.fraction_labeled < 1.0) {
            return Err(Error::Config("fraction_labeled must lie strictly between 0 and 1".into()));
        }
        self.encoder.validate()?;
        self.clustering.validate()?;
        self.tsne.validate()?;
        self.density.validate()
    }

    /// Hash of every stage setting except the withheld class, so that a
    /// discovery trial and its control can be checked to share them.
    pub fn stage_hash(&self) -> String {
        #[derive(Serialize)]
        struct Stages<'a> {
            fraction_labeled: f64,
            encoder: &'a EncoderConfig,
            clustering: &'a ClusteringConfig,
            tsne: &'a TsneConfig,
            density: &'a DensityConfig,
            seed: u64,
        }
        let json = serde_json::to_vec(&Stages {
            fraction_labeled: self.fraction_labeled,
            encoder: &self.encoder,
            clustering: &self.clustering,
            tsne: &self.tsne,
            density: &self.density,
            seed: self.seed,
        })
        .expect("config serializes");
        format!("{:016x}", fnv1a(&json))
    }
}

/// One line of the discovery or control table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TableRow {
    #[serde(rename = "ind:name")]
    pub ind_name: String,
    pub rem_class: Option<ClassId>,
    pub disc_class: Option<u32>,
    pub acc: Option<f64>,
    pub cnt_score: Option<f64>,
}

/// The reported free cluster of a trial, in report-file form.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContainmentSummary {
    pub removed_class: Option<ClassId>,
    pub discovered_cluster: Option<usize>,
    pub accuracy: Option<f64>,
    pub containment_score: Option<f64>,
    pub best_match_class: Option<ClassId>,
    pub novel: bool,
}
