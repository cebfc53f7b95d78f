//! Seeded inputs shared by the integration and acceptance tests.

use behavior_discovery::data::ClassId;
use behavior_discovery::encoder::{ClassMap, EmbeddingSet, EncoderConfig, Provenance};
use behavior_discovery::matrix::Matrix;
use behavior_discovery::protocols::TrialConfig;
use behavior_discovery::seed::rng_from;
use rand::Rng;
use rand_distr::StandardNormal;

pub type P2 = [f64; 2];

/// Encoder settings that train in a few seconds; used wherever a full run
/// would be too slow.
pub fn quick_encoder() -> EncoderConfig {
    EncoderConfig {
        epochs: 30,
        learning_rate: 3e-3,
        batch_size: Some(32),
        ..EncoderConfig::default()
    }
}

pub fn quick_trial(seed: u64, withheld: Option<ClassId>) -> TrialConfig {
    TrialConfig {
        withheld_class: withheld,
        encoder: quick_encoder(),
        seed,
        ..TrialConfig::default()
    }
}

/// `m` draws from a normal with the given mean and covariance factor `l`
/// (covariance `l lᵀ`).
pub fn gaussian_cloud(seed: u64, m: usize, mean: P2, l: [[f64; 2]; 2]) -> Vec<P2> {
    let mut rng = rng_from(seed);
    (0..m)
        .map(|_| {
            let (a, b): (f64, f64) = (rng.sample(StandardNormal), rng.sample(StandardNormal));
            [mean[0] + l[0][0] * a + l[0][1] * b, mean[1] + l[1][0] * a + l[1][1] * b]
        })
        .collect()
}

/// A random point set: one to three anisotropic, rotated normal components
/// with random size `m` in `[lo, hi]`.
pub fn random_cloud(seed: u64, lo: usize, hi: usize) -> Vec<P2> {
    let mut rng = rng_from(seed ^ 0x5eed);
    let m = rng.random_range(lo..=hi);
    let parts = rng.random_range(1..=3usize);
    let mut out = Vec::with_capacity(m);
    for p in 0..parts {
        let n = if p + 1 == parts { m - out.len() } else { m / parts };
        let angle: f64 = rng.random_range(0.0..std::f64::consts::PI);
        let (s1, s2): (f64, f64) = (rng.random_range(0.2..3.0), rng.random_range(0.2..3.0));
        let (c, s) = (angle.cos(), angle.sin());
        let l = [[c * s1, -s * s2], [s * s1, c * s2]];
        let mean = [rng.random_range(-5.0..5.0), rng.random_range(-5.0..5.0)];
        out.extend(gaussian_cloud(rng.random(), n, mean, l));
    }
    out
}

/// Random embedding set for clustering: `n_known` labeled classes around
/// random centres plus unlabeled rows from those classes and from extra
/// unknown groups.
pub fn random_embeddings(seed: u64) -> (EmbeddingSet, usize) {
    let mut rng = rng_from(seed);
    let dim = rng.random_range(1..=6usize);
    let n_known = rng.random_range(1..=4usize);
    let n_unknown = rng.random_range(0..=2usize);
    let n_free = rng.random_range(0..=3usize);
    let spread: f64 = rng.random_range(0.3..3.0);
    let centres: Vec<Vec<f64>> = (0..n_known + n_unknown)
        .map(|_| (0..dim).map(|_| rng.random_range(-6.0..6.0)).collect())
        .collect();
    let mut rows = Vec::new();
    let mut provenance = Vec::new();
    let mut truth = Vec::new();
    for (g, centre) in centres.iter().enumerate() {
        let n = rng.random_range(3..=25usize);
        for i in 0..n {
            rows.push(centre.iter().map(|c| c + spread * rng.sample::<f64, _>(StandardNormal)).collect::<Vec<_>>());
            let known = g < n_known;
            provenance.push(if known && (i == 0 || rng.random_bool(0.5)) {
                Provenance::Labeled(g as ClassId)
            } else {
                Provenance::Unlabeled
            });
            truth.push(Some(g as ClassId));
        }
    }
    // keep enough unlabeled rows for the free centroids
    for _ in 0..n_free {
        rows.push((0..dim).map(|_| rng.random_range(-8.0..8.0)).collect());
        provenance.push(Provenance::Unlabeled);
        truth.push(None);
    }
    let emb = EmbeddingSet {
        vectors: Matrix::from_rows(&rows),
        ids: (0..rows.len()).map(|i| format!("r{i}")).collect(),
        provenance,
        truth,
        class_map: ClassMap::new((0..n_known as ClassId).collect()),
    };
    (emb, n_free)
}

/// Two normal blobs in `dim` dimensions, `sep` apart on the first axis.
pub fn blobs(seed: u64, per: usize, dim: usize, sep: f64) -> (Matrix, Vec<usize>) {
    let mut rng = rng_from(seed);
    let mut rows = Vec::new();
    let mut labels = Vec::new();
    for b in 0..2 {
        for _ in 0..per {
            let mut r: Vec<f64> = (0..dim).map(|_| rng.sample(StandardNormal)).collect();
            r[0] += b as f64 * sep;
            rows.push(r);
            labels.push(b);
        }
    }
    (Matrix::from_rows(&rows), labels)
}

pub fn rows_of(m: &Matrix) -> Vec<Vec<f64>> {
    m.iter_rows().map(|r| r.to_vec()).collect()
}

/// Three compact classes of the 5-class preset at reduced counts, keeping
/// the preset's novel class for streams.
pub fn small_spec() -> behavior_discovery::data::SynthSpec {
    let mut spec = behavior_discovery::data::SynthSpec::resolve("5class").expect("preset");
    spec.classes.retain(|c| matches!(c.index, 0 | 1 | 3));
    for c in &mut spec.classes {
        c.count = if c.index == 3 { 30 } else { 50 };
    }
    spec
}
