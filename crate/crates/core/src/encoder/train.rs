use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::{
    adamw_step, backward, dropout_masks, forward, loss_softmax_ce, AdamState, ClassMap, EncoderConfig,
    EncoderParams, Mode,
};
use crate::data::{ClassId, Dataset, MotionSnippet, SNIPPET_LEN};
use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::seed::{derive_seed, rng_from};

#[derive(Debug, Clone)]
pub struct TrainOutput {
    pub params: EncoderParams,
    /// Mean training loss per epoch.
    pub loss_trace: Vec<f64>,
}

fn stack(snippets: &[&MotionSnippet]) -> Vec<f64> {
    let mut x = Vec::with_capacity(snippets.len() * SNIPPET_LEN);
    for s in snippets {
        x.extend_from_slice(&s.values);
    }
    x
}

/// Trains the classifier on the labeled snippets of `labeled`.
///
/// Deterministic for a fixed seed: weight init, batch order and dropout each
/// draw from their own derived stream. A trailing batch of one sample is
/// merged into the previous batch.
pub fn train(labeled: &Dataset, cfg: &EncoderConfig, seed: u64) -> Result<TrainOutput> {
    cfg.validate()?;
    let samples: Vec<&MotionSnippet> = labeled.snippets.iter().filter(|s| s.label.is_some()).collect();
    let class_map = ClassMap::new(samples.iter().filter_map(|s| s.label).collect());
    if class_map.len() < 2 {
        return Err(Error::Validation(format!(
            "need >= 2 classes to train the encoder, found {}",
            class_map.len()
        )));
    }
    let labels: Vec<usize> = samples
        .iter()
        .map(|s| class_map.index_of(s.label.expect("filtered")).expect("in map"))
        .collect();

    let mut params = EncoderParams::init(cfg, class_map, &mut rng_from(derive_seed(seed, "encoder/init")))?;
    let mut order_rng = rng_from(derive_seed(seed, "encoder/order"));
    let mut drop_rng = rng_from(derive_seed(seed, "encoder/dropout"));
    let mut adam = AdamState::new(&params);

    let n = samples.len();
    let batch_size = cfg.batch_size.unwrap_or(n).min(n);
    let mut order: Vec<usize> = (0..n).collect();
    let mut loss_trace = Vec::with_capacity(cfg.epochs);
    for epoch in 0..cfg.epochs {
        if batch_size < n {
            order.shuffle(&mut order_rng);
        }
        let mut bounds: Vec<(usize, usize)> =
            (0..n).step_by(batch_size).map(|s| (s, (s + batch_size).min(n))).collect();
        if bounds.len() > 1 && bounds.last().map(|&(a, b)| b - a) == Some(1) {
            let (_, end) = bounds.pop().expect("len > 1");
            bounds.last_mut().expect("len > 0").1 = end;
        }
        let mut epoch_loss = 0.0;
        for (start, end) in bounds {
            let idx = &order[start..end];
            let batch: Vec<&MotionSnippet> = idx.iter().map(|&i| samples[i]).collect();
            let y: Vec<usize> = idx.iter().map(|&i| labels[i]).collect();
            let x = stack(&batch);
            let masks = dropout_masks(&params, batch.len(), cfg.dropout_rate, &mut drop_rng);
            let out = forward(&params, &x, batch.len(), Mode::Train(&masks)).map_err(|e| Error::Diverged {
                epoch,
                message: e.to_string(),
            })?;
            let cache = out.cache.expect("train mode caches");
            let loss = loss_softmax_ce(&out.logits, &y)?;
            if !loss.is_finite() {
                return Err(Error::Diverged {
                    epoch,
                    message: format!("loss is {loss}"),
                });
            }
            epoch_loss += loss * batch.len() as f64;
            let grads = backward(&params, &cache, &y)?;
            adamw_step(&mut params, &grads, &mut adam, cfg)?;
            cache.update_running_stats(&mut params, cfg.bn_momentum);
            if !params.is_finite() {
                return Err(Error::Diverged {
                    epoch,
                    message: "non-finite parameter after optimizer step".into(),
                });
            }
        }
        loss_trace.push(epoch_loss / n as f64);
        if epoch % 100 == 0 {
            log::debug!("epoch {epoch}: loss {:.5}", epoch_loss / n as f64);
        }
    }
    Ok(TrainOutput { params, loss_trace })
}

const INFER_CHUNK: usize = 256;

/// Infer-mode logits for every snippet, row aligned with the input.
pub fn predict(params: &EncoderParams, snippets: &[MotionSnippet]) -> Result<Matrix> {
    let mut data = Vec::with_capacity(snippets.len() * params.n_classes());
    for chunk in snippets.chunks(INFER_CHUNK) {
        let refs: Vec<&MotionSnippet> = chunk.iter().collect();
        let out = forward(params, &stack(&refs), chunk.len(), Mode::Infer)?;
        data.extend_from_slice(out.logits.as_slice());
    }
    Ok(Matrix::from_vec(snippets.len(), params.n_classes(), data))
}

/// Fraction of labeled snippets whose argmax logit is their class.
pub fn training_accuracy(params: &EncoderParams, d: &Dataset) -> Result<f64> {
    let labeled: Vec<MotionSnippet> = d.snippets.iter().filter(|s| s.label.is_some()).cloned().collect();
    let logits = predict(params, &labeled)?;
    let correct = labeled
        .iter()
        .zip(logits.iter_rows())
        .filter(|(s, row)| {
            let best = row
                .iter()
                .enumerate()
                .fold((0, f64::NEG_INFINITY), |b, (i, &v)| if v > b.1 { (i, v) } else { b })
                .0;
            params.class_map.index_of(s.label.expect("labeled")) == Some(best)
        })
        .count();
    Ok(correct as f64 / labeled.len().max(1) as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Provenance {
    Labeled(ClassId),
    Unlabeled,
}

impl Provenance {
    pub fn is_labeled(&self) -> bool {
        matches!(self, Provenance::Labeled(_))
    }
}

/// Logit embeddings with per-row provenance.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingSet {
    pub vectors: Matrix,
    pub ids: Vec<String>,
    pub provenance: Vec<Provenance>,
    /// Hidden labels, evaluation only.
    pub truth: Vec<Option<ClassId>>,
    /// Class indexing of the encoder that produced the logits.
    pub class_map: ClassMap,
}

impl EmbeddingSet {
    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.vectors.cols()
    }

    /// Replaces the hidden truth column (e.g. with the labels stripped by a split).
    pub fn with_truth(mut self, truth: Vec<Option<ClassId>>) -> Result<Self> {
        if truth.len() != self.len() {
            return Err(Error::Shape(format!("{} truth labels for {} rows", truth.len(), self.len())));
        }
        self.truth = truth;
        Ok(self)
    }

    /// Rows of `self` followed by rows of `other`.
    pub fn concat(&self, other: &EmbeddingSet) -> Result<EmbeddingSet> {
        if self.class_map != other.class_map || self.dim() != other.dim() {
            return Err(Error::Shape("embedding sets come from different encoders".into()));
        }
        let mut data = self.vectors.as_slice().to_vec();
        data.extend_from_slice(other.vectors.as_slice());
        Ok(EmbeddingSet {
            vectors: Matrix::from_vec(self.len() + other.len(), self.dim(), data),
            ids: self.ids.iter().chain(&other.ids).cloned().collect(),
            provenance: self.provenance.iter().chain(&other.provenance).copied().collect(),
            truth: self.truth.iter().chain(&other.truth).copied().collect(),
            class_map: self.class_map.clone(),
        })
    }

    pub fn validate(&self) -> Result<()> {
        self.validate_rows()?;
        if self.dim() != self.class_map.len() {
            return Err(Error::Shape("embedding dimension differs from class count".into()));
        }
        Ok(())
    }

    /// Row alignment and finiteness, without tying the dimension to the encoder.
    pub fn validate_rows(&self) -> Result<()> {
        let n = self.len();
        if self.vectors.rows() != n || self.provenance.len() != n || self.truth.len() != n {
            return Err(Error::Shape("embedding columns are not row aligned".into()));
        }
        if !self.vectors.is_finite() {
            return Err(Error::NonFinite {
                stage: "embedding".into(),
                detail: "non-finite logit".into(),
            });
        }
        Ok(())
    }
}

/// Embeds every snippet of `d` (labeled or not) with the infer-mode network.
pub fn embed(params: &EncoderParams, d: &Dataset) -> Result<EmbeddingSet> {
    let vectors = predict(params, &d.snippets)?;
    let set = EmbeddingSet {
        vectors,
        ids: d.snippets.iter().map(|s| s.id.clone()).collect(),
        provenance: d
            .snippets
            .iter()
            .map(|s| s.label.map_or(Provenance::Unlabeled, Provenance::Labeled))
            .collect(),
        truth: d.snippets.iter().map(|s| s.label).collect(),
        class_map: params.class_map.clone(),
    };
    set.validate()?;
    Ok(set)
}
