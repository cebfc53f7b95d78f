use std::collections::BTreeMap;

use super::{analyze, Analysis, ContainmentSummary, TableRow, TrialConfig, TrialKind};
use crate::clustering::TrialMetrics;
use crate::data::{ensure_preprocessed, split_discovery, ClassId, Dataset, SplitSpec};
use crate::encoder::{embed, train, EmbeddingSet, EncoderParams};
use crate::error::{Error, Result, StageContext};
use crate::seed::derive_seed;

#[derive(Debug, Clone)]
pub struct TrialResult {
    pub kind: TrialKind,
    pub config: TrialConfig,
    /// [`TrialConfig::stage_hash`] of `config`.
    pub config_hash: String,
    pub class_names: BTreeMap<ClassId, String>,
    pub row: TableRow,
    pub summary: ContainmentSummary,
    pub metrics: TrialMetrics,
    /// Labeled rows first, then the unlabeled pool.
    pub embeddings: EmbeddingSet,
    pub analysis: Analysis,
    pub encoder: EncoderParams,
    pub loss_trace: Vec<f64>,
}

impl TrialResult {
    pub fn withheld_class(&self) -> Option<ClassId> {
        self.config.withheld_class
    }
}

/// Withholds `cfg.withheld_class` from the labeled pool and asks whether the
/// free cluster that collects it is flagged as novel.
pub fn run_existing_discovery(d: &Dataset, cfg: &TrialConfig) -> Result<TrialResult> {
    run_trial(d, cfg, TrialKind::Discovery)
}

/// Same pipeline with every row of the withheld class (if any) removed, so
/// the free cluster can only pick up known behaviour.
pub fn run_negative_control(d: &Dataset, cfg: &TrialConfig) -> Result<TrialResult> {
    run_trial(d, cfg, TrialKind::Control)
}

pub fn run_trial(d: &Dataset, cfg: &TrialConfig, kind: TrialKind) -> Result<TrialResult> {
    cfg.validate()?;
    let withheld = cfg.withheld_class;
    match kind {
        TrialKind::Discovery if withheld.is_none() => {
            return Err(Error::Config("existing-novel requires withheld class".into()))
        }
        TrialKind::Discovery if cfg.clustering.n_free == 0 => {
            return Err(Error::Config("existing-novel requires a free cluster".into()))
        }
        TrialKind::Control if cfg.clustering.n_free == 0 => {
            return Err(Error::Config("negative control requires a free cluster".into()))
        }
        _ => {}
    }
    let data = ensure_preprocessed(d).stage("preprocess")?;
    let split_spec = SplitSpec {
        withheld_class: withheld,
        seed: derive_seed(cfg.seed, "split"),
        fraction_labeled: cfg.fraction_labeled,
    };
    let split = split_discovery(&data, &split_spec).stage("split")?;
    if let Some(w) = withheld {
        if split.labeled.snippets.iter().any(|s| s.label == Some(w)) {
            return Err(Error::Validation(format!("withheld class {w} leaked into the labeled pool")));
        }
    }
    let (unlabeled, truth) = match kind {
        TrialKind::Discovery => (split.unlabeled, split.truth),
        TrialKind::Control => {
            let keep: Vec<bool> = split.truth.iter().map(|t| withheld.is_none() || *t != withheld).collect();
            let snippets = split
                .unlabeled
                .snippets
                .iter()
                .zip(&keep)
                .filter(|(_, k)| **k)
                .map(|(s, _)| s.clone())
                .collect();
            let truth = split.truth.iter().zip(&keep).filter(|(_, k)| **k).map(|(t, _)| *t).collect();
            (split.unlabeled.with_snippets(snippets), truth)
        }
    };

    let trained = train(&split.labeled, &cfg.encoder, derive_seed(cfg.seed, "encoder")).stage("encoder")?;
    let emb = embed(&trained.params, &split.labeled)
        .and_then(|l| Ok(l.concat(&embed(&trained.params, &unlabeled)?.with_truth(truth)?)?))
        .stage("embedding")?;
    let analysis = analyze(&emb, &cfg.clustering, &cfg.tsne, &cfg.density, cfg.seed)?;
    let metrics = TrialMetrics::compute(
        &analysis.clusters,
        &emb,
        if kind == TrialKind::Discovery { withheld } else { None },
    )
    .stage("metrics")?;

    let reported = match kind {
        TrialKind::Discovery => metrics.matched_cluster.expect("discovery has a free cluster"),
        TrialKind::Control => analysis
            .containment
            .rows
            .iter()
            .fold(None::<(usize, f64)>, |best, r| match best {
                Some((_, s)) if s <= r.score => best,
                _ => Some((r.cluster, r.score)),
            })
            .map_or(analysis.clusters.n_known, |(c, _)| c),
    };
    let scored = analysis.containment.row(reported);
    let summary = ContainmentSummary {
        removed_class: withheld,
        discovered_cluster: Some(reported),
        accuracy: metrics.withheld_accuracy,
        containment_score: scored.map(|r| r.score),
        best_match_class: scored.map(|r| r.best_match_class),
        novel: scored.is_some_and(|r| r.novel),
    };
    // free clusters are numbered after every declared class
    let max_declared = data.classes.keys().copied().max().unwrap_or(0);
    let row = TableRow {
        ind_name: withheld.map_or("-".into(), |w| format!("{w}:{}", data.class_name(w))),
        rem_class: withheld,
        disc_class: match kind {
            TrialKind::Discovery => withheld,
            TrialKind::Control => Some(max_declared + 1 + (reported - analysis.clusters.n_known) as u32),
        },
        acc: metrics.withheld_accuracy,
        cnt_score: summary.containment_score,
    };
    Ok(TrialResult {
        kind,
        config: cfg.clone(),
        config_hash: cfg.stage_hash(),
        class_names: data.classes.clone(),
        row,
        summary,
        metrics,
        embeddings: emb,
        analysis,
        encoder: trained.params,
        loss_trace: trained.loss_trace,
    })
}
