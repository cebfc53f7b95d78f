//! Temporal convolutional classifier whose pre-softmax logits serve as the
//! embedding of a snippet.
//!
//! Architecture: `conv_layers` blocks of 1D convolution (stride 1, same
//! padding), batch normalization, ReLU and dropout, followed by global average
//! pooling over time and a linear map to one logit per known class. Forward
//! and backward passes are written out by hand.

mod adamw;
mod network;
mod train;

use std::path::Path;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::data::{ClassId, N_CHANNELS};
use crate::error::{Error, Result};

pub use adamw::{adamw_step, AdamState};
pub use network::{
    backward, dropout_masks, forward, loss_softmax_ce, softmax, DropoutMasks, ForwardCache, ForwardOutput,
    Mode,
};
pub use train::{embed, predict, train, training_accuracy, EmbeddingSet, Provenance, TrainOutput};

pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EncoderConfig {
    pub in_channels: usize,
    pub conv_layers: usize,
    pub channels_per_layer: usize,
    pub kernel: usize,
    pub padding: usize,
    pub dropout_rate: f64,
    pub epochs: usize,
    pub learning_rate: f64,
    pub weight_decay: f64,
    /// `None` trains full batch.
    pub batch_size: Option<usize>,
    pub bn_momentum: f64,
    pub bn_epsilon: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub adam_epsilon: f64,
}

impl Default for EncoderConfig {
    fn default() -> Self {
        Self {
            in_channels: N_CHANNELS,
            conv_layers: 3,
            channels_per_layer: 30,
            kernel: 3,
            padding: 1,
            dropout_rate: 0.25,
            epochs: 2000,
            learning_rate: 3e-4,
            weight_decay: 0.01,
            batch_size: None,
            bn_momentum: 0.1,
            bn_epsilon: 1e-5,
            beta1: 0.9,
            beta2: 0.999,
            adam_epsilon: 1e-8,
        }
    }
}

impl EncoderConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(format!("encoder: {m}")));
        if self.in_channels != N_CHANNELS {
            return bad("in_channels must be 4");
        }
        if self.conv_layers == 0 || self.channels_per_layer == 0 {
            return bad("need at least one conv layer with at least one channel");
        }
        if self.kernel % 2 == 0 {
            return bad("kernel must be odd");
        }
        if self.padding != (self.kernel - 1) / 2 {
            return bad("padding must equal (kernel - 1) / 2 to preserve length");
        }
        if !(0.0..1.0).contains(&self.dropout_rate) {
            return bad("dropout_rate must lie in [0, 1)");
        }
        if !(self.learning_rate > 0.0) || self.weight_decay < 0.0 {
            return bad("learning_rate must be positive and weight_decay non-negative");
        }
        if self.batch_size == Some(0) || self.batch_size == Some(1) {
            return bad("batch_size must be at least 2 (batch normalization)");
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) {
            return bad("beta1 and beta2 must lie in [0, 1)");
        }
        if !(self.bn_epsilon > 0.0 && self.adam_epsilon > 0.0) {
            return bad("epsilons must be positive");
        }
        Ok(())
    }
}

/// Trial-local contiguous indexing of the known classes, sorted ascending.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClassMap {
    classes: Vec<ClassId>,
}

impl ClassMap {
    pub fn new(mut classes: Vec<ClassId>) -> Self {
        classes.sort_unstable();
        classes.dedup();
        Self { classes }
    }

    pub fn len(&self) -> usize {
        self.classes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.classes.is_empty()
    }

    pub fn index_of(&self, class: ClassId) -> Option<usize> {
        self.classes.binary_search(&class).ok()
    }

    pub fn class_at(&self, index: usize) -> ClassId {
        self.classes[index]
    }

    pub fn classes(&self) -> &[ClassId] {
        &self.classes
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvBlock {
    pub in_ch: usize,
    pub out_ch: usize,
    /// `out_ch x in_ch x kernel`, row-major.
    pub weight: Vec<f64>,
    pub bias: Vec<f64>,
    pub bn_gamma: Vec<f64>,
    pub bn_beta: Vec<f64>,
    pub running_mean: Vec<f64>,
    pub running_var: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EncoderParams {
    pub kernel: usize,
    pub padding: usize,
    pub bn_epsilon: f64,
    pub blocks: Vec<ConvBlock>,
    pub hidden: usize,
    /// `n_classes x hidden`, row-major.
    pub fc_weight: Vec<f64>,
    pub fc_bias: Vec<f64>,
    pub class_map: ClassMap,
}

/// Whether AdamW applies decoupled weight decay to a tensor.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Decay {
    Apply,
    Skip,
}

/// Gradient of the loss, one tensor per trainable parameter, in the order of
/// [`EncoderParams::trainable_mut`].
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub tensors: Vec<Vec<f64>>,
}

impl Gradients {
    pub fn max_abs(&self) -> f64 {
        self.tensors.iter().flatten().fold(0.0, |m, v| m.max(v.abs()))
    }
}

impl EncoderParams {
    /// Fan-in scaled uniform weights, zero biases, identity batch norm.
    pub fn init<R: Rng>(cfg: &EncoderConfig, class_map: ClassMap, rng: &mut R) -> Result<Self> {
        cfg.validate()?;
        if class_map.len() < 2 {
            return Err(Error::Validation("need >= 2 classes".into()));
        }
        let mut blocks = Vec::with_capacity(cfg.conv_layers);
        let mut in_ch = cfg.in_channels;
        for _ in 0..cfg.conv_layers {
            let out_ch = cfg.channels_per_layer;
            let bound = 1.0 / ((in_ch * cfg.kernel) as f64).sqrt();
            let weight = (0..out_ch * in_ch * cfg.kernel)
                .map(|_| rng.random_range(-bound..bound))
                .collect();
            blocks.push(ConvBlock {
                in_ch,
                out_ch,
                weight,
                bias: vec![0.0; out_ch],
                bn_gamma: vec![1.0; out_ch],
                bn_beta: vec![0.0; out_ch],
                running_mean: vec![0.0; out_ch],
                running_var: vec![1.0; out_ch],
            });
            in_ch = out_ch;
        }
        let hidden = in_ch;
        let bound = 1.0 / (hidden as f64).sqrt();
        let fc_weight = (0..class_map.len() * hidden)
            .map(|_| rng.random_range(-bound..bound))
            .collect();
        Ok(Self {
            kernel: cfg.kernel,
            padding: cfg.padding,
            bn_epsilon: cfg.bn_epsilon,
            blocks,
            hidden,
            fc_weight,
            fc_bias: vec![0.0; class_map.len()],
            class_map,
        })
    }

    pub fn n_classes(&self) -> usize {
        self.class_map.len()
    }

    /// Trainable tensors in canonical order: per block conv weight, conv bias,
    /// BN scale, BN shift; then linear weight and bias.
    pub fn trainable_mut(&mut self) -> Vec<(&mut Vec<f64>, Decay)> {
        let mut out = Vec::with_capacity(4 * self.blocks.len() + 2);
        for b in &mut self.blocks {
            out.push((&mut b.weight, Decay::Apply));
            out.push((&mut b.bias, Decay::Skip));
            out.push((&mut b.bn_gamma, Decay::Skip));
            out.push((&mut b.bn_beta, Decay::Skip));
        }
        out.push((&mut self.fc_weight, Decay::Apply));
        out.push((&mut self.fc_bias, Decay::Skip));
        out
    }

    pub fn trainable(&self) -> Vec<&[f64]> {
        let mut out: Vec<&[f64]> = Vec::with_capacity(4 * self.blocks.len() + 2);
        for b in &self.blocks {
            out.extend([&b.weight[..], &b.bias[..], &b.bn_gamma[..], &b.bn_beta[..]]);
        }
        out.push(&self.fc_weight);
        out.push(&self.fc_bias);
        out
    }

    pub fn is_finite(&self) -> bool {
        self.trainable().iter().all(|t| t.iter().all(|v| v.is_finite()))
            && self
                .blocks
                .iter()
                .all(|b| b.running_mean.iter().chain(&b.running_var).all(|v| v.is_finite()))
    }

    pub fn check_shapes(&self) -> Result<()> {
        let mut in_ch = N_CHANNELS;
        for (i, b) in self.blocks.iter().enumerate() {
            let ok = b.in_ch == in_ch
                && b.weight.len() == b.out_ch * b.in_ch * self.kernel
                && [&b.bias, &b.bn_gamma, &b.bn_beta, &b.running_mean, &b.running_var]
                    .iter()
                    .all(|v| v.len() == b.out_ch)
                && b.running_var.iter().all(|&v| v >= 0.0);
            if !ok {
                return Err(Error::Shape(format!("conv block {i} has inconsistent shapes")));
            }
            in_ch = b.out_ch;
        }
        if self.kernel % 2 == 0 || self.padding != (self.kernel - 1) / 2 {
            return Err(Error::Shape("kernel/padding do not preserve length".into()));
        }
        if self.hidden != in_ch
            || self.fc_weight.len() != self.n_classes() * self.hidden
            || self.fc_bias.len() != self.n_classes()
        {
            return Err(Error::Shape("linear head does not match the class map".into()));
        }
        Ok(())
    }

    pub fn save_checkpoint(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let ck = Checkpoint {
            schema_version: CHECKPOINT_VERSION,
            params: self.clone(),
        };
        let text = serde_json::to_string_pretty(&ck)?;
        std::fs::write(path, text + "\n").map_err(|e| Error::io(path, e))
    }

    pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let ck: Checkpoint = serde_json::from_str(&text)?;
        if ck.schema_version != CHECKPOINT_VERSION {
            return Err(Error::Config(format!(
                "checkpoint schema version {} is not supported",
                ck.schema_version
            )));
        }
        ck.params.check_shapes()?;
        Ok(ck.params)
    }
}

#[derive(Serialize, Deserialize)]
struct Checkpoint {
    schema_version: u32,
    params: EncoderParams,
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seed::rng_from;

    #[test]
    fn config_validation() {
        assert!(EncoderConfig::default().validate().is_ok());
        let mut c = EncoderConfig::default();
        c.kernel = 4;
        assert!(c.validate().is_err());
        let mut c = EncoderConfig::default();
        c.padding = 0;
        assert!(c.validate().is_err());
        let mut c = EncoderConfig::default();
        c.dropout_rate = 1.0;
        assert!(c.validate().is_err());
        let mut c = EncoderConfig::default();
        c.batch_size = Some(1);
        assert!(c.validate().is_err());
    }

    #[test]
    fn class_map_remaps_gapped_labels() {
        let m = ClassMap::new(vec![9, 0, 8, 6, 0]);
        assert_eq!(m.classes(), &[0, 6, 8, 9]);
        assert_eq!(m.index_of(8), Some(2));
        assert_eq!(m.index_of(7), None);
        assert_eq!(m.class_at(3), 9);
    }

    #[test]
    fn init_shapes_and_checkpoint_round_trip() {
        let cfg = EncoderConfig::default();
        let p = EncoderParams::init(&cfg, ClassMap::new(vec![0, 1, 2]), &mut rng_from(1)).unwrap();
        p.check_shapes().unwrap();
        assert_eq!(p.blocks[0].weight.len(), 30 * 4 * 3);
        assert_eq!(p.blocks[1].weight.len(), 30 * 30 * 3);
        assert_eq!(p.fc_weight.len(), 3 * 30);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("enc.json");
        p.save_checkpoint(&path).unwrap();
        assert_eq!(EncoderParams::load_checkpoint(&path).unwrap(), p);
    }

    #[test]
    fn init_rejects_single_class() {
        let cfg = EncoderConfig::default();
        let err = EncoderParams::init(&cfg, ClassMap::new(vec![3]), &mut rng_from(1)).unwrap_err();
        assert!(err.to_string().contains("need >= 2 classes"));
    }
}
