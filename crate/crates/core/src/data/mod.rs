//! Motion snippets, datasets, preprocessing, discovery splits and the
//! synthetic generator.

mod csv_io;
mod split;
pub mod synth;

use std::collections::BTreeMap;

use crate::error::{Error, Result};

pub use csv_io::{csv_header, load_csv, read_csv, write_csv, DatasetMeta};
pub use split::{split_discovery, DiscoverySplit, SplitSpec};
pub use synth::{synth_generate, SynthSpec};

pub const N_CHANNELS: usize = 4;
pub const N_STEPS: usize = 20;
pub const SNIPPET_LEN: usize = N_CHANNELS * N_STEPS;

/// Channel order inside a snippet.
pub const CHANNEL_NAMES: [&str; N_CHANNELS] = ["ax", "ay", "az", "sp"];
pub const SPEED_CHANNEL: usize = 3;

/// Raw GPS speed is divided by this value (m/s).
pub const SPEED_SCALE: f64 = 22.0;
/// Accelerometer channels are clipped to `[-ACCEL_CLIP, ACCEL_CLIP]` g.
pub const ACCEL_CLIP: f64 = 2.0;

/// Behavior class index. Indices need not be contiguous.
pub type ClassId = u32;

/// One 20-step, 4-channel motion sample, stored channel-major.
#[derive(Debug, Clone, PartialEq)]
pub struct MotionSnippet {
    pub id: String,
    pub values: [f64; SNIPPET_LEN],
    pub label: Option<ClassId>,
}

impl MotionSnippet {
    pub fn new(id: impl Into<String>, values: [f64; SNIPPET_LEN], label: Option<ClassId>) -> Self {
        Self {
            id: id.into(),
            values,
            label,
        }
    }

    pub fn channel(&self, c: usize) -> &[f64] {
        &self.values[c * N_STEPS..(c + 1) * N_STEPS]
    }

    pub fn channel_mut(&mut self, c: usize) -> &mut [f64] {
        &mut self.values[c * N_STEPS..(c + 1) * N_STEPS]
    }

    pub fn get(&self, channel: usize, step: usize) -> f64 {
        self.values[channel * N_STEPS + step]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub snippets: Vec<MotionSnippet>,
    /// Declared class set: index to name.
    pub classes: BTreeMap<ClassId, String>,
    pub preprocessed: bool,
}

impl Dataset {
    pub fn new(classes: BTreeMap<ClassId, String>) -> Self {
        Self {
            snippets: Vec::new(),
            classes,
            preprocessed: false,
        }
    }

    pub fn len(&self) -> usize {
        self.snippets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.snippets.is_empty()
    }

    pub fn class_name(&self, c: ClassId) -> &str {
        self.classes.get(&c).map_or("?", String::as_str)
    }

    /// Per-class counts of labeled snippets, over the declared class set.
    pub fn class_counts(&self) -> BTreeMap<ClassId, usize> {
        let mut counts: BTreeMap<ClassId, usize> = self.classes.keys().map(|&c| (c, 0)).collect();
        for s in &self.snippets {
            if let Some(l) = s.label {
                *counts.entry(l).or_default() += 1;
            }
        }
        counts
    }

    /// Classes that have at least one labeled snippet.
    pub fn populated_classes(&self) -> Vec<ClassId> {
        self.class_counts()
            .into_iter()
            .filter(|&(_, n)| n > 0)
            .map(|(c, _)| c)
            .collect()
    }

    pub fn validate(&self) -> Result<()> {
        let mut seen = std::collections::BTreeSet::new();
        for s in &self.snippets {
            if let Some(l) = s.label {
                if !self.classes.contains_key(&l) {
                    return Err(Error::Validation(format!(
                        "snippet {} has undeclared class index {l}",
                        s.id
                    )));
                }
            }
            if let Some(i) = s.values.iter().position(|v| !v.is_finite()) {
                return Err(Error::Validation(format!(
                    "snippet {} has a non-finite value in channel {}",
                    s.id,
                    CHANNEL_NAMES[i / N_STEPS]
                )));
            }
            if !seen.insert(s.id.as_str()) {
                return Err(Error::Validation(format!("duplicate snippet id {}", s.id)));
            }
        }
        Ok(())
    }

    /// Same class set and flag, different snippets.
    pub fn with_snippets(&self, snippets: Vec<MotionSnippet>) -> Dataset {
        Dataset {
            snippets,
            classes: self.classes.clone(),
            preprocessed: self.preprocessed,
        }
    }
}

/// Clip accelerometer channels and scale speed. Refuses a dataset that is
/// already flagged as preprocessed.
pub fn preprocess(d: &Dataset) -> Result<Dataset> {
    if d.preprocessed {
        return Err(Error::Validation(
            "dataset is already preprocessed; speed would be scaled twice".into(),
        ));
    }
    let mut out = d.clone();
    for s in &mut out.snippets {
        if s.values.iter().any(|v| !v.is_finite()) {
            return Err(Error::Validation(format!("snippet {} has non-finite raw values", s.id)));
        }
        clip_accel(s);
        for v in s.channel_mut(SPEED_CHANNEL) {
            *v /= SPEED_SCALE;
        }
    }
    out.preprocessed = true;
    Ok(out)
}

/// The clamp half of preprocessing; idempotent.
pub fn clip_accel(s: &mut MotionSnippet) {
    for c in 0..SPEED_CHANNEL {
        for v in s.channel_mut(c) {
            *v = v.clamp(-ACCEL_CLIP, ACCEL_CLIP);
        }
    }
}

/// Runs [`preprocess`] unless the dataset is already flagged.
pub fn ensure_preprocessed(d: &Dataset) -> Result<Dataset> {
    if d.preprocessed {
        Ok(d.clone())
    } else {
        preprocess(d)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn one(values: [f64; SNIPPET_LEN]) -> Dataset {
        let mut d = Dataset::new([(0, "a".to_string())].into());
        d.snippets.push(MotionSnippet::new("x", values, Some(0)));
        d
    }

    #[test]
    fn clamps_accel_and_scales_speed() {
        let mut v = [0.0; SNIPPET_LEN];
        v[0] = 3.0;
        v[1] = 1.5;
        v[N_STEPS] = -7.0;
        v[SPEED_CHANNEL * N_STEPS] = 11.0;
        let p = preprocess(&one(v)).unwrap();
        let s = &p.snippets[0];
        assert_eq!(s.get(0, 0), 2.0);
        assert_eq!(s.get(0, 1), 1.5);
        assert_eq!(s.get(1, 0), -2.0);
        assert_eq!(s.get(SPEED_CHANNEL, 0), 0.5);
        assert!(p.preprocessed);
    }

    #[test]
    fn refuses_double_preprocessing() {
        let p = preprocess(&one([1.0; SNIPPET_LEN])).unwrap();
        assert!(matches!(preprocess(&p), Err(Error::Validation(_))));
    }

    #[test]
    fn speed_is_not_clamped() {
        let mut v = [0.0; SNIPPET_LEN];
        v[SPEED_CHANNEL * N_STEPS + 3] = 44.0;
        let p = preprocess(&one(v)).unwrap();
        assert_eq!(p.snippets[0].get(SPEED_CHANNEL, 3), 2.0);
    }

    #[test]
    fn validation_rejects_undeclared_class() {
        let mut d = one([0.0; SNIPPET_LEN]);
        d.snippets[0].label = Some(7);
        assert!(d.validate().is_err());
    }

    proptest! {
        #[test]
        fn clamp_is_idempotent(vals in proptest::collection::vec(-10.0f64..10.0, SNIPPET_LEN)) {
            let mut s = MotionSnippet::new("p", vals.try_into().unwrap(), None);
            clip_accel(&mut s);
            let once = s.clone();
            clip_accel(&mut s);
            prop_assert_eq!(once, s.clone());
            for c in 0..SPEED_CHANNEL {
                prop_assert!(s.channel(c).iter().all(|v| (-2.0..=2.0).contains(v)));
            }
        }
    }
}
