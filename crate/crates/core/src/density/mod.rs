//! Densities in the 2D projection, Monte Carlo HDR thresholds and the
//! containment score used to decide whether a discovered cluster is novel.
//!
//! Every density draws its Monte Carlo sample set from a seed derived from
//! the caller's seed and the density's own content. The same draws serve for
//! the density's HDR threshold and for its outbound containment direction, so
//! a density always contains itself exactly and `contain(a, b)` does not
//! depend on argument order.

mod kde;

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::ClassId;
use crate::error::{Error, Result};
use crate::seed::derive_seed_u64;

pub use kde::{fit_kde, silverman_factor, Gaussian2, KdeModel, Spd2, MIN_KDE_POINTS, WARN_KDE_POINTS};

pub type Point = [f64; 2];

/// A two-dimensional density that can be evaluated and sampled.
pub trait Density2: Sync {
    fn log_pdf(&self, z: Point) -> f64;
    /// `m` independent draws, deterministic in `seed`.
    fn sample(&self, m: usize, seed: u64) -> Vec<Point>;
    /// Content hash; equal densities hash equally.
    fn fingerprint(&self) -> u64;
}

/// Where the known-class densities take their points from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum ClassSource {
    /// Labeled rows of the class.
    #[default]
    Labeled,
    /// All rows assigned to the class's pinned cluster.
    Assigned,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DensityConfig {
    /// HDR mass.
    pub alpha: f64,
    pub mc_samples: usize,
    /// A cluster is novel when its best containment is below this.
    pub novelty_threshold: f64,
    pub class_source: ClassSource,
}

impl Default for DensityConfig {
    fn default() -> Self {
        Self {
            alpha: 0.95,
            mc_samples: 2000,
            novelty_threshold: 0.3,
            class_source: ClassSource::Labeled,
        }
    }
}

impl DensityConfig {
    pub fn validate(&self) -> Result<()> {
        check_alpha(self.alpha)?;
        if self.mc_samples == 0 {
            return Err(Error::Config("density: mc_samples must be positive".into()));
        }
        if !(0.0..=1.0).contains(&self.novelty_threshold) {
            return Err(Error::Config("density: novelty_threshold must be in [0, 1]".into()));
        }
        Ok(())
    }
}

fn check_alpha(alpha: f64) -> Result<()> {
    if alpha > 0.0 && alpha < 1.0 {
        Ok(())
    } else {
        Err(Error::Config(format!("alpha must be in (0, 1), got {alpha}")))
    }
}

/// Linear-interpolation quantile of `values` (sorted ascending): position
/// `q·(n-1)` between neighbouring order statistics.
pub fn quantile_sorted(sorted: &[f64], q: f64) -> f64 {
    assert!(!sorted.is_empty(), "quantile of an empty sample");
    let h = q.clamp(0.0, 1.0) * (sorted.len() - 1) as f64;
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(sorted.len() - 1);
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

/// A density with its Monte Carlo draws and α-HDR log-density threshold.
pub struct Hdr<'a> {
    pub density: &'a dyn Density2,
    pub samples: Vec<Point>,
    /// Log-density threshold `t(α)`.
    pub threshold: f64,
    pub alpha: f64,
}

impl<'a> Hdr<'a> {
    /// Draws `m` samples with a seed derived from `seed` and the density's
    /// fingerprint, and takes the `(1-α)` quantile of their log-densities.
    pub fn new(density: &'a dyn Density2, alpha: f64, m: usize, seed: u64) -> Result<Self> {
        check_alpha(alpha)?;
        if m == 0 {
            return Err(Error::Config("mc_samples must be positive".into()));
        }
        let samples = density.sample(m, derive_seed_u64(seed, density.fingerprint()));
        let mut logp: Vec<f64> = samples.iter().map(|&z| density.log_pdf(z)).collect();
        if logp.iter().any(|v| v.is_nan()) {
            return Err(Error::NonFinite {
                stage: "hdr threshold".into(),
                detail: "NaN log-density".into(),
            });
        }
        logp.sort_by(f64::total_cmp);
        let threshold = quantile_sorted(&logp, 1.0 - alpha);
        Ok(Self {
            density,
            samples,
            threshold,
            alpha,
        })
    }

    pub fn contains(&self, z: Point) -> bool {
        self.density.log_pdf(z) >= self.threshold
    }

    /// Fraction of points inside this HDR.
    pub fn mass_of(&self, points: &[Point]) -> f64 {
        if points.is_empty() {
            return 0.0;
        }
        points.iter().filter(|&&z| self.contains(z)).count() as f64 / points.len() as f64
    }
}

/// Log-density threshold of the α-HDR of `density`.
pub fn hdr_threshold(density: &dyn Density2, alpha: f64, m: usize, seed: u64) -> Result<f64> {
    Ok(Hdr::new(density, alpha, m, seed)?.threshold)
}

/// Directional containment `(P, C)`: `P` is the share of `from`'s draws
/// inside `to`'s HDR, `C = min(1, P/α)`.
pub fn directional(from: &Hdr, to: &Hdr) -> (f64, f64) {
    let p = to.mass_of(&from.samples);
    (p, (p / to.alpha).min(1.0))
}

pub fn directional_containment(
    from: &dyn Density2,
    to: &dyn Density2,
    alpha: f64,
    m: usize,
    seed: u64,
) -> Result<(f64, f64)> {
    let f = Hdr::new(from, alpha, m, seed)?;
    let t = Hdr::new(to, alpha, m, seed)?;
    Ok(directional(&f, &t))
}

/// Symmetric containment: the larger of the two directional scores.
pub fn contain_prepared(a: &Hdr, b: &Hdr) -> f64 {
    directional(a, b).1.max(directional(b, a).1)
}

pub fn contain(c: &dyn Density2, k: &dyn Density2, alpha: f64, m: usize, seed: u64) -> Result<f64> {
    let a = Hdr::new(c, alpha, m, seed)?;
    let b = Hdr::new(k, alpha, m, seed)?;
    Ok(contain_prepared(&a, &b))
}

/// Containment of one discovered cluster against every known class.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContainmentRow {
    pub cluster: usize,
    /// `Contain(c, k; α)` per known class that has a density.
    pub contain: BTreeMap<ClassId, f64>,
    pub best_match_class: ClassId,
    /// `O_c`, the row maximum.
    pub score: f64,
    pub novel: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContainmentReport {
    pub alpha: f64,
    pub mc_samples: usize,
    pub novelty_threshold: f64,
    pub seed: u64,
    /// Known classes without a density (too few points).
    pub skipped_classes: Vec<ClassId>,
    pub rows: Vec<ContainmentRow>,
}

impl ContainmentReport {
    pub fn row(&self, cluster: usize) -> Option<&ContainmentRow> {
        self.rows.iter().find(|r| r.cluster == cluster)
    }

    /// Cluster × class matrix, one line per cluster.
    pub fn to_csv(&self) -> Result<String> {
        let classes: Vec<ClassId> = self
            .rows
            .first()
            .map(|r| r.contain.keys().copied().collect())
            .unwrap_or_default();
        let mut w = csv::Writer::from_writer(Vec::new());
        let mut header = vec!["cluster".to_string()];
        header.extend(classes.iter().map(|c| format!("class_{c}")));
        header.extend(["best_match_class", "score", "novel"].map(String::from));
        w.write_record(&header)?;
        for r in &self.rows {
            let mut rec = vec![r.cluster.to_string()];
            rec.extend(classes.iter().map(|c| r.contain.get(c).map_or("NA".into(), |v| v.to_string())));
            rec.extend([r.best_match_class.to_string(), r.score.to_string(), r.novel.to_string()]);
            w.write_record(&rec)?;
        }
        let bytes = w.into_inner().map_err(|e| Error::Validation(e.to_string()))?;
        Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
    }
}

/// Best known-class match of one cluster. Ties go to the lowest class id.
pub fn best_match(
    cluster: usize,
    cluster_hdr: &Hdr,
    classes: &BTreeMap<ClassId, Hdr>,
    novelty_threshold: f64,
) -> Result<ContainmentRow> {
    if classes.is_empty() {
        return Err(Error::Validation("no known class has enough points for a density".into()));
    }
    let contain: BTreeMap<ClassId, f64> = classes
        .par_iter()
        .map(|(&k, h)| (k, contain_prepared(cluster_hdr, h)))
        .collect::<Vec<_>>()
        .into_iter()
        .collect();
    let (best_match_class, score) = contain
        .iter()
        .fold((None, f64::NEG_INFINITY), |(bk, bv), (&k, &v)| if v > bv { (Some(k), v) } else { (bk, bv) });
    Ok(ContainmentRow {
        cluster,
        contain,
        best_match_class: best_match_class.expect("non-empty"),
        score,
        novel: score < novelty_threshold,
    })
}

/// Fits a KDE per entry, skipping (with a warning) entries with too few points.
pub fn fit_class_densities(points: &BTreeMap<ClassId, Vec<Point>>) -> Result<(BTreeMap<ClassId, KdeModel>, Vec<ClassId>)> {
    let mut fitted = BTreeMap::new();
    let mut skipped = Vec::new();
    for (&k, pts) in points {
        match fit_kde(pts) {
            Ok(m) => {
                fitted.insert(k, m);
            }
            Err(Error::InsufficientPoints { got, .. }) => {
                log::warn!("class {k} has {got} points, too few for a density; excluded from matching");
                skipped.push(k);
            }
            Err(e) => return Err(e),
        }
    }
    Ok((fitted, skipped))
}

/// Containment report for the given clusters against the known classes.
pub fn containment_report(
    clusters: &BTreeMap<usize, KdeModel>,
    classes: &BTreeMap<ClassId, KdeModel>,
    skipped_classes: Vec<ClassId>,
    cfg: &DensityConfig,
    seed: u64,
) -> Result<ContainmentReport> {
    cfg.validate()?;
    let class_hdrs: BTreeMap<ClassId, Hdr> = classes
        .par_iter()
        .map(|(&k, m)| Ok((k, Hdr::new(m, cfg.alpha, cfg.mc_samples, seed)?)))
        .collect::<Result<Vec<_>>>()?
        .into_iter()
        .collect();
    let rows = clusters
        .iter()
        .map(|(&c, m)| {
            let h = Hdr::new(m, cfg.alpha, cfg.mc_samples, seed)?;
            best_match(c, &h, &class_hdrs, cfg.novelty_threshold)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(ContainmentReport {
        alpha: cfg.alpha,
        mc_samples: cfg.mc_samples,
        novelty_threshold: cfg.novelty_threshold,
        seed,
        skipped_classes,
        rows,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quantile_interpolates_linearly() {
        let v = [1.0, 2.0, 4.0, 8.0];
        assert_eq!(quantile_sorted(&v, 0.0), 1.0);
        assert_eq!(quantile_sorted(&v, 1.0), 8.0);
        assert_eq!(quantile_sorted(&v, 0.5), 3.0);
        assert!((quantile_sorted(&v, 0.25) - 1.75).abs() < 1e-15);
    }

    #[test]
    fn alpha_near_one_gives_minimum_log_density() {
        let g = Gaussian2::standard();
        let h = Hdr::new(&g, 1.0 - 1e-12, 500, 1).unwrap();
        let min = h.samples.iter().map(|&z| g.log_pdf(z)).fold(f64::INFINITY, f64::min);
        assert!((h.threshold - min).abs() < 1e-9);
    }

    #[test]
    fn higher_mass_means_lower_level() {
        let g = Gaussian2::new([0.5, 0.0], [[1.0, 0.3], [0.3, 0.5]]).unwrap();
        for seed in 0..5 {
            assert!(hdr_threshold(&g, 0.5, 2000, seed).unwrap() >= hdr_threshold(&g, 0.95, 2000, seed).unwrap());
        }
    }

    #[test]
    fn self_containment_is_exactly_one() {
        let g = Gaussian2::isotropic([3.0, 1.0], 2.0);
        for seed in 0..5 {
            assert_eq!(contain(&g, &g, 0.95, 2000, seed).unwrap(), 1.0);
        }
    }

    #[test]
    fn distant_densities_do_not_contain_each_other() {
        let a = KdeModel::with_bandwidth(&[[0.0, 0.0]], [[1.0, 0.0], [0.0, 1.0]]).unwrap();
        let b = KdeModel::with_bandwidth(&[[100.0, 0.0]], [[1.0, 0.0], [0.0, 1.0]]).unwrap();
        let (p, c) = directional_containment(&a, &b, 0.95, 2000, 0).unwrap();
        assert_eq!((p, c), (0.0, 0.0));
    }

    #[test]
    fn containment_is_symmetric() {
        let a = Gaussian2::isotropic([0.0, 0.0], 1.0);
        let b = Gaussian2::isotropic([1.5, 0.5], 0.7);
        assert_eq!(contain(&a, &b, 0.95, 1000, 9).unwrap(), contain(&b, &a, 0.95, 1000, 9).unwrap());
    }

    #[test]
    fn invalid_alpha_rejected() {
        let g = Gaussian2::standard();
        assert!(hdr_threshold(&g, 1.0, 10, 0).is_err());
        assert!(hdr_threshold(&g, 0.0, 10, 0).is_err());
        assert!(hdr_threshold(&g, 0.5, 0, 0).is_err());
    }

    #[test]
    fn best_match_picks_identical_class_and_flags_far_cluster() {
        let pts = |cx: f64| -> Vec<Point> {
            (0..60).map(|i| [cx + (i as f64 * 0.37).sin(), (i as f64 * 0.91).cos()]).collect()
        };
        let mut classes = BTreeMap::new();
        classes.insert(1, fit_kde(&pts(-10.0)).unwrap());
        classes.insert(3, fit_kde(&pts(0.0)).unwrap());
        let mut clusters = BTreeMap::new();
        clusters.insert(0, fit_kde(&pts(0.0)).unwrap());
        clusters.insert(1, fit_kde(&pts(40.0)).unwrap());
        let r = containment_report(&clusters, &classes, vec![], &DensityConfig::default(), 5).unwrap();
        let same = r.row(0).unwrap();
        assert_eq!((same.best_match_class, same.score, same.novel), (3, 1.0, false));
        let far = r.row(1).unwrap();
        assert!(far.score < 0.3 && far.novel);
        assert!(r.to_csv().unwrap().starts_with("cluster,class_1,class_3,best_match_class,score,novel\n"));
    }

    #[test]
    fn best_match_ties_go_to_lowest_class() {
        let g = Gaussian2::isotropic([0.0, 0.0], 1.0);
        let h = Hdr::new(&g, 0.95, 500, 0).unwrap();
        let mut classes = BTreeMap::new();
        classes.insert(4, Hdr::new(&g, 0.95, 500, 0).unwrap());
        classes.insert(2, Hdr::new(&g, 0.95, 500, 0).unwrap());
        assert_eq!(best_match(0, &h, &classes, 0.3).unwrap().best_match_class, 2);
        assert!(best_match(0, &h, &BTreeMap::new(), 0.3).is_err());
    }

    #[test]
    fn small_classes_are_skipped() {
        let mut pts = BTreeMap::new();
        pts.insert(0, (0..10).map(|i| [i as f64, (i * i) as f64]).collect());
        pts.insert(1, vec![[0.0, 0.0]; 3]);
        let (fitted, skipped) = fit_class_densities(&pts).unwrap();
        assert_eq!(fitted.keys().copied().collect::<Vec<_>>(), vec![0]);
        assert_eq!(skipped, vec![1]);
    }
}
