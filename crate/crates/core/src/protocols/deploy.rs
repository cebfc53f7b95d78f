use serde::{Deserialize, Serialize};

use super::{analyze, Analysis, TrialConfig};
use crate::data::{ensure_preprocessed, split_discovery, ClassId, Dataset, MotionSnippet, SplitSpec};
use crate::encoder::{embed, train, EmbeddingSet, EncoderParams};
use crate::error::{Error, Result, StageContext};
use crate::seed::derive_seed;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DeploymentConfig {
    /// Stream segments per window.
    pub window: usize,
    /// Offset between consecutive window starts.
    pub stride: usize,
    /// Total clusters; `k - n_known` of them are free.
    pub k: usize,
}

impl Default for DeploymentConfig {
    fn default() -> Self {
        Self {
            window: 100,
            stride: 100,
            k: 10,
        }
    }
}

impl DeploymentConfig {
    pub fn validate(&self) -> Result<()> {
        if self.window == 0 || self.stride == 0 {
            return Err(Error::Config("deploy: window and stride must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct WindowResult {
    pub index: usize,
    /// Position of the first segment in the stream.
    pub start: usize,
    pub len: usize,
    /// Set for a trailing window shorter than the configured size.
    pub short: bool,
    pub ids: Vec<String>,
    pub embeddings: EmbeddingSet,
    pub analysis: Analysis,
    /// Some free cluster has `O_c` below the novelty threshold.
    pub novel: bool,
}

#[derive(Debug, Clone)]
pub struct DeploymentResult {
    pub config: DeploymentConfig,
    pub known_classes: Vec<ClassId>,
    pub n_free: usize,
    pub encoder: EncoderParams,
    pub loss_trace: Vec<f64>,
    pub windows: Vec<WindowResult>,
}

impl DeploymentResult {
    pub fn novel_windows(&self) -> Vec<usize> {
        self.windows.iter().filter(|w| w.novel).map(|w| w.index).collect()
    }
}

/// Trains the encoder once on half of `labeled`, then clusters each stream
/// window together with the labeled half and the other (known) half.
///
/// `trial.withheld_class` is ignored; every class of `labeled` is known.
pub fn run_deployment(
    labeled: &Dataset,
    stream: &[MotionSnippet],
    trial: &TrialConfig,
    cfg: &DeploymentConfig,
) -> Result<DeploymentResult> {
    trial.validate()?;
    cfg.validate()?;
    let data = ensure_preprocessed(labeled).stage("preprocess")?;
    let split_spec = SplitSpec {
        withheld_class: None,
        seed: derive_seed(trial.seed, "split"),
        fraction_labeled: trial.fraction_labeled,
    };
    let split = split_discovery(&data, &split_spec).stage("split")?;
    let known_classes = split.labeled.populated_classes();
    if cfg.k <= known_classes.len() {
        return Err(Error::Config(format!(
            "deploy: k = {} leaves no free cluster beyond {} known classes",
            cfg.k,
            known_classes.len()
        )));
    }
    let n_free = cfg.k - known_classes.len();
    let mut clustering = trial.clustering.clone();
    clustering.n_free = n_free;

    let trained = train(&split.labeled, &trial.encoder, derive_seed(trial.seed, "encoder")).stage("encoder")?;
    let base = embed(&trained.params, &split.labeled)
        .and_then(|l| Ok(l.concat(&embed(&trained.params, &split.unlabeled)?.with_truth(split.truth.clone())?)?))
        .stage("embedding")?;

    let mut windows = Vec::new();
    let mut start = 0;
    while start < stream.len() {
        let end = (start + cfg.window).min(stream.len());
        let index = windows.len();
        let short = end - start < cfg.window;
        if short {
            log::warn!("window {index} has {} of {} segments", end - start, cfg.window);
        }
        // stream segments share the scale of the labeled input
        let raw = labeled.with_snippets(stream[start..end].iter().map(|s| MotionSnippet { label: None, ..s.clone() }).collect());
        let emb = ensure_preprocessed(&raw)
            .and_then(|segment| embed(&trained.params, &segment))
            .and_then(|w| base.concat(&w))
            .stage("embedding")?;
        let analysis = analyze(
            &emb,
            &clustering,
            &trial.tsne,
            &trial.density,
            derive_seed(trial.seed, &format!("window:{index}")),
        )
        .map_err(|e| Error::Stage {
            stage: "window",
            source: Box::new(e),
        })?;
        windows.push(WindowResult {
            index,
            start,
            len: end - start,
            short,
            ids: stream[start..end].iter().map(|s| s.id.clone()).collect(),
            novel: analysis.any_novel(),
            embeddings: emb,
            analysis,
        });
        if end == stream.len() {
            break;
        }
        start += cfg.stride;
    }
    Ok(DeploymentResult {
        config: cfg.clone(),
        known_classes,
        n_free,
        encoder: trained.params,
        loss_trace: trained.loss_trace,
        windows,
    })
}
