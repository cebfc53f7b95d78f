//! Synthetic motion snippets.
//!
//! Each class is a mixture of per-axis sinusoids with jittered amplitude,
//! frequency and phase, a per-snippet speed level and white noise. A
//! transition class crossfades between two other classes inside the snippet,
//! which spreads it between them in feature space. Output is already in the
//! preprocessed range (accel clipped, speed scaled).

use std::collections::BTreeMap;
use std::f64::consts::TAU;
use std::path::Path;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::{clip_accel, ClassId, Dataset, MotionSnippet, N_STEPS, SNIPPET_LEN, SPEED_CHANNEL};
use crate::error::{Error, Result};
use crate::seed::{derive_seed, derive_seed_u64, rng_from};

/// Sampling rate of the snippets.
pub const SAMPLE_HZ: f64 = 20.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AxisWave {
    pub offset: f64,
    #[serde(default)]
    pub offset_sd: f64,
    #[serde(default)]
    pub amplitude: f64,
    #[serde(default)]
    pub amplitude_sd: f64,
    #[serde(default)]
    pub freq_hz: f64,
    #[serde(default)]
    pub freq_sd: f64,
}

impl AxisWave {
    pub fn flat(offset: f64) -> Self {
        Self::wave(offset, 0.0, 0.0)
    }

    pub fn wave(offset: f64, amplitude: f64, freq_hz: f64) -> Self {
        Self {
            offset,
            offset_sd: 0.0,
            amplitude,
            amplitude_sd: 0.0,
            freq_hz,
            freq_sd: 0.0,
        }
    }

    pub fn jitter(mut self, offset_sd: f64, amplitude_sd: f64, freq_sd: f64) -> Self {
        self.offset_sd = offset_sd;
        self.amplitude_sd = amplitude_sd;
        self.freq_sd = freq_sd;
        self
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WaveTemplate {
    /// x, y, z acceleration in g.
    pub accel: [AxisWave; 3],
    /// Speed after scaling (raw m/s divided by 22).
    pub speed_mean: f64,
    #[serde(default)]
    pub speed_sd: f64,
    /// White noise added to every accel value.
    pub noise_sd: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Template {
    Wave(WaveTemplate),
    /// Each snippet follows one of several wave templates, picked uniformly,
    /// e.g. sitting or standing.
    Modes { modes: Vec<WaveTemplate> },
    /// Crossfade from one class template to another. The crossfade midpoint
    /// is drawn uniformly from `center` (in steps, may lie outside the
    /// snippet) and the fade lasts `width` steps.
    Transition {
        from: ClassId,
        to: ClassId,
        #[serde(default = "default_transition_center")]
        center: [f64; 2],
        #[serde(default = "default_transition_width")]
        width: f64,
    },
}

fn default_transition_center() -> [f64; 2] {
    [2.0, N_STEPS as f64 - 2.0]
}

fn default_transition_width() -> f64 {
    6.0
}

impl Template {
    /// Transition with the default midpoint range and width.
    pub fn transition(from: ClassId, to: ClassId) -> Self {
        Template::Transition {
            from,
            to,
            center: default_transition_center(),
            width: default_transition_width(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SynthClass {
    pub index: ClassId,
    pub name: String,
    pub count: usize,
    pub template: Template,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SynthSpec {
    pub classes: Vec<SynthClass>,
    /// Classes absent from the generated dataset, used to inject unseen
    /// behavior into streams.
    #[serde(default)]
    pub novel: Vec<SynthClass>,
}

impl SynthSpec {
    pub fn from_json_file(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let spec: SynthSpec = serde_json::from_str(&text)
            .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        spec.validate()?;
        Ok(spec)
    }

    /// Named preset (`2class`, `5class`, `9class`) or a JSON file path.
    pub fn resolve(name_or_path: &str) -> Result<Self> {
        match Self::preset(name_or_path) {
            Some(s) => Ok(s),
            None if Path::new(name_or_path).exists() => Self::from_json_file(name_or_path),
            None => Err(Error::Config(format!(
                "unknown synthetic preset `{name_or_path}` (expected 2class, 5class, 9class or a JSON file)"
            ))),
        }
    }

    pub fn preset(name: &str) -> Option<Self> {
        match name {
            "2class" => Some(preset_two_class()),
            "5class" => Some(preset_five_class()),
            "9class" => Some(preset_nine_class()),
            _ => None,
        }
    }

    pub fn counts(&self) -> Vec<usize> {
        self.classes.iter().map(|c| c.count).collect()
    }

    pub fn validate(&self) -> Result<()> {
        let mut seen = std::collections::BTreeSet::new();
        for c in self.classes.iter().chain(&self.novel) {
            if !seen.insert(c.index) {
                return Err(Error::Config(format!("duplicate synthetic class index {}", c.index)));
            }
        }
        for c in self.classes.iter().chain(&self.novel) {
            match &c.template {
                Template::Wave(w) => check_wave(c.index, w)?,
                Template::Modes { modes } => {
                    if modes.is_empty() {
                        return Err(Error::Config(format!("class {}: needs at least one mode", c.index)));
                    }
                    for w in modes {
                        check_wave(c.index, w)?;
                    }
                }
                Template::Transition { from, to, center, width } => {
                    if !(center[0] < center[1] && center.iter().all(|v| v.is_finite()) && *width > 0.0) {
                        return Err(Error::Config(format!(
                            "class {}: transition needs center[0] < center[1] and width > 0",
                            c.index
                        )));
                    }
                    for end in [from, to] {
                        match self.find(*end) {
                            Some(SynthClass {
                                template: Template::Wave(_),
                                ..
                            }) => {}
                            _ => {
                                return Err(Error::Config(format!(
                                    "class {}: transition endpoint {end} must be a wave class",
                                    c.index
                                )))
                            }
                        }
                    }
                }
            }
        }
        Ok(())
    }

    fn find(&self, index: ClassId) -> Option<&SynthClass> {
        self.classes.iter().chain(&self.novel).find(|c| c.index == index)
    }

    fn wave(&self, index: ClassId) -> &WaveTemplate {
        match self.find(index).map(|c| &c.template) {
            Some(Template::Wave(w)) => w,
            _ => unreachable!("validated transition endpoint"),
        }
    }

    /// Generates the dataset with the counts stored in the definition.
    pub fn generate(&self, seed: u64) -> Result<Dataset> {
        synth_generate(&self.counts(), self, seed)
    }

    /// Draws one snippet of class `c` (which may be a novel class).
    fn draw(&self, c: &SynthClass, rng: &mut ChaCha8Rng) -> [f64; SNIPPET_LEN] {
        let mut values = match &c.template {
            Template::Wave(w) => draw_wave(w, rng),
            Template::Modes { modes } => {
                let i = rng.random_range(0..modes.len());
                draw_wave(&modes[i], rng)
            }
            Template::Transition { from, to, center, width } => {
                let a = draw_wave(self.wave(*from), rng);
                let b = draw_wave(self.wave(*to), rng);
                let center: f64 = rng.random_range(center[0]..center[1]);
                let width = *width;
                let mut out = [0.0; SNIPPET_LEN];
                for ch in 0..super::N_CHANNELS {
                    for t in 0..N_STEPS {
                        let w = ((t as f64 - center) / width + 0.5).clamp(0.0, 1.0);
                        let i = ch * N_STEPS + t;
                        out[i] = (1.0 - w) * a[i] + w * b[i];
                    }
                }
                out
            }
        };
        for v in &mut values[SPEED_CHANNEL * N_STEPS..] {
            *v = v.max(0.0);
        }
        values
    }

    /// Unlabeled stream of `n_windows * window` snippets drawn from the known
    /// classes in proportion to their counts. If `novel_window` is set, that
    /// window is filled entirely with the first novel class.
    pub fn stream(
        &self,
        n_windows: usize,
        window: usize,
        novel_window: Option<usize>,
        seed: u64,
    ) -> Result<Vec<MotionSnippet>> {
        self.validate()?;
        let total: usize = self.classes.iter().map(|c| c.count).sum();
        if total == 0 {
            return Err(Error::Config("stream needs at least one known class with count > 0".into()));
        }
        let novel = match novel_window {
            Some(w) if w >= n_windows => {
                return Err(Error::Config(format!(
                    "novel window {w} out of range for {n_windows} windows"
                )))
            }
            Some(_) => Some(self.novel.first().ok_or_else(|| {
                Error::Config("novel window requested but the synthetic definition declares no novel class".into())
            })?),
            None => None,
        };
        let mut out = Vec::with_capacity(n_windows * window);
        for wi in 0..n_windows {
            let mut rng = rng_from(derive_seed(seed, &format!("stream-window:{wi}")));
            for j in 0..window {
                let class = match novel {
                    Some(n) if novel_window == Some(wi) => n,
                    _ => {
                        let mut pick = rng.random_range(0..total);
                        self.classes
                            .iter()
                            .find(|c| {
                                if pick < c.count {
                                    true
                                } else {
                                    pick -= c.count;
                                    false
                                }
                            })
                            .expect("pick below total")
                    }
                };
                let values = self.draw(class, &mut rng);
                out.push(MotionSnippet::new(format!("w{wi:03}_{j:03}"), values, None));
            }
        }
        Ok(out)
    }

    /// Hidden class of each stream snippet, for evaluation.
    pub fn class_map(&self) -> BTreeMap<ClassId, String> {
        self.classes.iter().map(|c| (c.index, c.name.clone())).collect()
    }
}

fn draw_wave(w: &WaveTemplate, rng: &mut ChaCha8Rng) -> [f64; SNIPPET_LEN] {
    let mut out = [0.0; SNIPPET_LEN];
    for (axis, a) in w.accel.iter().enumerate() {
        let offset = a.offset + a.offset_sd * normal(rng);
        let amp = a.amplitude + a.amplitude_sd * normal(rng);
        let freq = a.freq_hz + a.freq_sd * normal(rng);
        let phase: f64 = rng.random_range(0.0..TAU);
        for t in 0..N_STEPS {
            let time = t as f64 / SAMPLE_HZ;
            out[axis * N_STEPS + t] =
                offset + amp * (TAU * freq * time + phase).sin() + w.noise_sd * normal(rng);
        }
    }
    let level = w.speed_mean + w.speed_sd * normal(rng);
    for t in 0..N_STEPS {
        out[SPEED_CHANNEL * N_STEPS + t] = level + 0.1 * w.speed_sd * normal(rng);
    }
    out
}

fn normal(rng: &mut ChaCha8Rng) -> f64 {
    rng.sample(StandardNormal)
}

/// Generates `counts[i]` snippets of `spec.classes[i]`. Deterministic per seed;
/// each class has its own derived stream.
pub fn synth_generate(counts: &[usize], spec: &SynthSpec, seed: u64) -> Result<Dataset> {
    spec.validate()?;
    if counts.len() != spec.classes.len() {
        return Err(Error::Config(format!(
            "{} counts given for {} synthetic classes",
            counts.len(),
            spec.classes.len()
        )));
    }
    let mut d = Dataset::new(spec.class_map());
    for (c, &n) in spec.classes.iter().zip(counts) {
        let mut rng = rng_from(derive_seed_u64(seed, c.index as u64));
        for i in 0..n {
            let values = spec.draw(c, &mut rng);
            let mut s = MotionSnippet::new(format!("c{}_{i:05}", c.index), values, Some(c.index));
            clip_accel(&mut s);
            d.snippets.push(s);
        }
    }
    d.preprocessed = true;
    Ok(d)
}

fn check_wave(class: ClassId, w: &WaveTemplate) -> Result<()> {
    let finite = w.noise_sd.is_finite() && w.speed_mean.is_finite() && w.speed_sd.is_finite();
    if !finite || w.noise_sd < 0.0 || w.speed_sd < 0.0 {
        return Err(Error::Config(format!("class {class}: invalid noise or speed")));
    }
    Ok(())
}

fn wave_class(index: ClassId, name: &str, count: usize, t: WaveTemplate) -> SynthClass {
    SynthClass {
        index,
        name: name.into(),
        count,
        template: Template::Wave(t),
    }
}

fn tmpl(x: AxisWave, y: AxisWave, z: AxisWave, speed: (f64, f64), noise: f64) -> WaveTemplate {
    WaveTemplate {
        accel: [x, y, z],
        speed_mean: speed.0,
        speed_sd: speed.1,
        noise_sd: noise,
    }
}

fn flap() -> WaveTemplate {
    tmpl(
        AxisWave::wave(0.1, 0.3, 4.0).jitter(0.05, 0.05, 0.2),
        AxisWave::flat(0.0).jitter(0.05, 0.0, 0.0),
        AxisWave::wave(1.0, 0.8, 4.0).jitter(0.05, 0.1, 0.2),
        (0.5, 0.06),
        0.05,
    )
}

fn soar() -> WaveTemplate {
    tmpl(
        AxisWave::wave(0.05, 0.1, 0.5).jitter(0.03, 0.03, 0.1),
        AxisWave::wave(0.0, 0.1, 0.4).jitter(0.05, 0.03, 0.1),
        AxisWave::wave(0.95, 0.15, 0.5).jitter(0.05, 0.05, 0.1),
        (0.6, 0.06),
        0.03,
    )
}

/// Sitting and standing postures in one class.
fn sit_stand(index: ClassId, count: usize) -> SynthClass {
    let sit = tmpl(
        AxisWave::flat(0.3).jitter(0.05, 0.0, 0.0),
        AxisWave::flat(-0.1).jitter(0.05, 0.0, 0.0),
        AxisWave::flat(0.95).jitter(0.03, 0.0, 0.0),
        (0.0, 0.004),
        0.01,
    );
    let stand = tmpl(
        AxisWave::flat(-0.3).jitter(0.05, 0.0, 0.0),
        AxisWave::flat(0.2).jitter(0.05, 0.0, 0.0),
        AxisWave::flat(0.9).jitter(0.03, 0.0, 0.0),
        (0.0, 0.004),
        0.01,
    );
    SynthClass {
        index,
        name: "SitStand".into(),
        count,
        template: Template::Modes { modes: vec![sit, stand] },
    }
}

fn pecking() -> WaveTemplate {
    tmpl(
        AxisWave::wave(0.6, 0.8, 7.0).jitter(0.05, 0.1, 0.3),
        AxisWave::wave(0.0, 0.4, 7.0).jitter(0.05, 0.05, 0.3),
        AxisWave::wave(0.6, 0.4, 7.0).jitter(0.05, 0.05, 0.3),
        (0.01, 0.005),
        0.08,
    )
}

fn dive() -> WaveTemplate {
    tmpl(
        AxisWave::wave(-1.2, 0.2, 1.0).jitter(0.1, 0.05, 0.1),
        AxisWave::flat(0.4).jitter(0.1, 0.0, 0.0),
        AxisWave::flat(-0.5).jitter(0.1, 0.0, 0.0),
        (1.2, 0.08),
        0.05,
    )
}

/// Two linearly separable classes: sitting still and flapping.
fn preset_two_class() -> SynthSpec {
    SynthSpec {
        classes: vec![
            sit_stand(0, 40),
            wave_class(1, "Flap", 40, flap()),
        ],
        novel: vec![],
    }
}

fn preset_five_class() -> SynthSpec {
    SynthSpec {
        classes: vec![
            wave_class(0, "Flap", 160, flap()),
            wave_class(1, "Soar", 120, soar()),
            sit_stand(2, 240),
            wave_class(3, "Pecking", 40, pecking()),
            SynthClass {
                index: 4,
                name: "Manouvre".into(),
                count: 60,
                template: Template::transition(0, 1),
            },
        ],
        novel: vec![wave_class(5, "Dive", 0, dive())],
    }
}

/// Nine classes numbered like the field data (index 7 unused), counts
/// scaled down from the field class frequencies.
fn preset_nine_class() -> SynthSpec {
    SynthSpec {
        classes: vec![
            wave_class(0, "Flap", 64, flap()),
            wave_class(
                1,
                "ExFlap",
                20,
                tmpl(
                    AxisWave::wave(0.2, 0.6, 5.0).jitter(0.05, 0.1, 0.2),
                    AxisWave::wave(0.0, 0.3, 2.5).jitter(0.05, 0.05, 0.2),
                    AxisWave::wave(1.0, 1.5, 5.0).jitter(0.05, 0.1, 0.2),
                    (0.3, 0.06),
                    0.1,
                ),
            ),
            wave_class(2, "Soar", 54, soar()),
            wave_class(
                3,
                "Boat",
                30,
                tmpl(
                    AxisWave::flat(0.0).jitter(0.03, 0.0, 0.0),
                    AxisWave::wave(0.0, 0.15, 1.0).jitter(0.03, 0.03, 0.1),
                    AxisWave::wave(1.0, 0.1, 1.0).jitter(0.03, 0.03, 0.1),
                    (0.1, 0.02),
                    0.02,
                ),
            ),
            wave_class(
                4,
                "Float",
                73,
                tmpl(
                    AxisWave::flat(-0.2).jitter(0.03, 0.0, 0.0),
                    AxisWave::flat(0.3).jitter(0.03, 0.0, 0.0),
                    AxisWave::wave(1.0, 0.05, 0.3).jitter(0.03, 0.02, 0.05),
                    (0.02, 0.01),
                    0.02,
                ),
            ),
            sit_stand(5, 150),
            wave_class(
                6,
                "TerLoco",
                34,
                tmpl(
                    AxisWave::wave(0.0, 0.3, 2.0).jitter(0.05, 0.05, 0.2),
                    AxisWave::wave(0.0, 0.2, 1.0).jitter(0.05, 0.05, 0.1),
                    AxisWave::wave(1.0, 0.3, 2.0).jitter(0.05, 0.05, 0.2),
                    (0.06, 0.02),
                    0.06,
                ),
            ),
            SynthClass {
                index: 8,
                name: "Manouvre".into(),
                count: 30,
                template: Template::transition(0, 2),
            },
            wave_class(9, "Pecking", 30, pecking()),
        ],
        novel: vec![wave_class(10, "Dive", 0, dive())],
    }
}
