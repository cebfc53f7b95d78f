use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::{Density2, Point};
use crate::error::{Error, Result};
use crate::seed::{fingerprint_f64, rng_from};

pub const MIN_KDE_POINTS: usize = 5;
pub const WARN_KDE_POINTS: usize = 30;

const LN_2PI: f64 = 1.837_877_066_409_345_5;

/// Symmetric positive definite 2×2 matrix with its lower Cholesky factor.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Spd2 {
    pub m: [[f64; 2]; 2],
    /// Lower factor `[l11, l21, l22]`.
    chol: [f64; 3],
}

impl Spd2 {
    pub fn new(m: [[f64; 2]; 2]) -> Result<Self> {
        let (a, b, c) = (m[0][0], 0.5 * (m[0][1] + m[1][0]), m[1][1]);
        let l11 = a.sqrt();
        let l21 = b / l11;
        let l22 = (c - l21 * l21).sqrt();
        if !(l11 > 0.0 && l22 > 0.0 && l11.is_finite() && l22.is_finite() && l21.is_finite()) {
            return Err(Error::Validation(format!("matrix {m:?} is not positive definite")));
        }
        Ok(Self {
            m: [[a, b], [b, c]],
            chol: [l11, l21, l22],
        })
    }

    pub fn identity() -> Self {
        Self::new([[1.0, 0.0], [0.0, 1.0]]).unwrap()
    }

    pub fn det(&self) -> f64 {
        self.m[0][0] * self.m[1][1] - self.m[0][1] * self.m[1][0]
    }

    pub fn ln_det(&self) -> f64 {
        2.0 * (self.chol[0].ln() + self.chol[2].ln())
    }

    /// `dᵀ M⁻¹ d`.
    pub fn mahalanobis2(&self, d: [f64; 2]) -> f64 {
        let [l11, l21, l22] = self.chol;
        let u1 = d[0] / l11;
        let u2 = (d[1] - l21 * u1) / l22;
        u1 * u1 + u2 * u2
    }

    /// `L z` for a standard normal `z`.
    pub fn transform(&self, z: [f64; 2]) -> [f64; 2] {
        let [l11, l21, l22] = self.chol;
        [l11 * z[0], l21 * z[0] + l22 * z[1]]
    }

    /// Log density of `N(mean, self)` at `z`.
    pub fn gaussian_log_pdf(&self, mean: Point, z: Point) -> f64 {
        let d = [z[0] - mean[0], z[1] - mean[1]];
        -0.5 * self.mahalanobis2(d) - LN_2PI - 0.5 * self.ln_det()
    }
}

pub(crate) fn standard_normal2(rng: &mut impl Rng) -> [f64; 2] {
    [rng.sample(StandardNormal), rng.sample(StandardNormal)]
}

/// Gaussian kernel density estimate in two dimensions with a full bandwidth
/// matrix `H = f² Σ̂` (Silverman factor `f = M^(-1/6)`, unbiased covariance).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KdeModel {
    points: Vec<Point>,
    factor: f64,
    covariance: [[f64; 2]; 2],
    bandwidth: Spd2,
    regularized: bool,
}

/// Silverman's factor `(4/(d+2))^(1/(d+4)) · M^(-1/(d+4))`, with d = 2.
pub fn silverman_factor(m: usize) -> f64 {
    let d: f64 = 2.0;
    (4.0 / (d + 2.0)).powf(1.0 / (d + 4.0)) * (m as f64).powf(-1.0 / (d + 4.0))
}

fn sample_covariance(points: &[Point]) -> [[f64; 2]; 2] {
    let n = points.len() as f64;
    let mx = points.iter().map(|p| p[0]).sum::<f64>() / n;
    let my = points.iter().map(|p| p[1]).sum::<f64>() / n;
    let mut c = [[0.0; 2]; 2];
    for p in points {
        let (dx, dy) = (p[0] - mx, p[1] - my);
        c[0][0] += dx * dx;
        c[0][1] += dx * dy;
        c[1][1] += dy * dy;
    }
    let d = n - 1.0;
    [[c[0][0] / d, c[0][1] / d], [c[0][1] / d, c[1][1] / d]]
}

/// Fits a KDE with Silverman's bandwidth. A singular covariance (collinear
/// points) is regularized by adding `1e-9 · trace/2` to the diagonal.
pub fn fit_kde(points: &[Point]) -> Result<KdeModel> {
    let m = points.len();
    if m < MIN_KDE_POINTS {
        return Err(Error::InsufficientPoints {
            needed: MIN_KDE_POINTS,
            got: m,
        });
    }
    if points.iter().flatten().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite {
            stage: "kde".into(),
            detail: "support point is not finite".into(),
        });
    }
    if m < WARN_KDE_POINTS {
        log::warn!("KDE fitted on only {m} points; HDR estimates will be unstable");
    }
    let mut cov = sample_covariance(points);
    let half_trace = 0.5 * (cov[0][0] + cov[1][1]);
    if !(half_trace > 0.0) {
        return Err(Error::Validation("all KDE support points coincide".into()));
    }
    let det = cov[0][0] * cov[1][1] - cov[0][1] * cov[1][0];
    let mut regularized = false;
    if det <= 1e-12 * half_trace * half_trace {
        log::warn!("singular KDE covariance; adding {:.3e} to the diagonal", 1e-9 * half_trace);
        cov[0][0] += 1e-9 * half_trace;
        cov[1][1] += 1e-9 * half_trace;
        regularized = true;
    }
    let factor = silverman_factor(m);
    let f2 = factor * factor;
    let bandwidth = Spd2::new([[f2 * cov[0][0], f2 * cov[0][1]], [f2 * cov[1][0], f2 * cov[1][1]]])?;
    Ok(KdeModel {
        points: points.to_vec(),
        factor,
        covariance: cov,
        bandwidth,
        regularized,
    })
}

impl KdeModel {
    /// KDE with an explicit bandwidth matrix.
    pub fn with_bandwidth(points: &[Point], bandwidth: [[f64; 2]; 2]) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::InsufficientPoints { needed: 1, got: 0 });
        }
        Ok(Self {
            points: points.to_vec(),
            factor: f64::NAN,
            covariance: [[f64::NAN; 2]; 2],
            bandwidth: Spd2::new(bandwidth)?,
            regularized: false,
        })
    }

    pub fn points(&self) -> &[Point] {
        &self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Silverman factor (NaN for an explicit bandwidth).
    pub fn factor(&self) -> f64 {
        self.factor
    }

    pub fn covariance(&self) -> [[f64; 2]; 2] {
        self.covariance
    }

    pub fn bandwidth(&self) -> [[f64; 2]; 2] {
        self.bandwidth.m
    }

    pub fn regularized(&self) -> bool {
        self.regularized
    }
}

impl Density2 for KdeModel {
    /// Log of the mixture density, stabilized with log-sum-exp.
    fn log_pdf(&self, z: Point) -> f64 {
        let mut max = f64::NEG_INFINITY;
        let mut terms = Vec::with_capacity(self.points.len());
        for p in &self.points {
            let t = -0.5 * self.bandwidth.mahalanobis2([z[0] - p[0], z[1] - p[1]]);
            max = max.max(t);
            terms.push(t);
        }
        let s: f64 = terms.iter().map(|t| (t - max).exp()).sum();
        max + s.ln() - LN_2PI - 0.5 * self.bandwidth.ln_det() - (self.points.len() as f64).ln()
    }

    fn sample(&self, m: usize, seed: u64) -> Vec<Point> {
        let mut rng = rng_from(seed);
        (0..m)
            .map(|_| {
                let c = self.points[rng.random_range(0..self.points.len())];
                let e = self.bandwidth.transform(standard_normal2(&mut rng));
                [c[0] + e[0], c[1] + e[1]]
            })
            .collect()
    }

    fn fingerprint(&self) -> u64 {
        let h = &self.bandwidth.m;
        fingerprint_f64(
            [1.0, h[0][0], h[0][1], h[1][1]]
                .into_iter()
                .chain(self.points.iter().flat_map(|p| [p[0], p[1]])),
        )
    }
}

/// Bivariate normal with known parameters; the analytic reference density.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Gaussian2 {
    pub mean: Point,
    cov: Spd2,
}

impl Gaussian2 {
    pub fn new(mean: Point, cov: [[f64; 2]; 2]) -> Result<Self> {
        Ok(Self {
            mean,
            cov: Spd2::new(cov)?,
        })
    }

    pub fn standard() -> Self {
        Self::isotropic([0.0, 0.0], 1.0)
    }

    pub fn isotropic(mean: Point, sd: f64) -> Self {
        Self {
            mean,
            cov: Spd2::new([[sd * sd, 0.0], [0.0, sd * sd]]).expect("positive sd"),
        }
    }

    pub fn covariance(&self) -> [[f64; 2]; 2] {
        self.cov.m
    }
}

impl Density2 for Gaussian2 {
    fn log_pdf(&self, z: Point) -> f64 {
        self.cov.gaussian_log_pdf(self.mean, z)
    }

    fn sample(&self, m: usize, seed: u64) -> Vec<Point> {
        let mut rng = rng_from(seed);
        (0..m)
            .map(|_| {
                let e = self.cov.transform(standard_normal2(&mut rng));
                [self.mean[0] + e[0], self.mean[1] + e[1]]
            })
            .collect()
    }

    fn fingerprint(&self) -> u64 {
        let c = &self.cov.m;
        fingerprint_f64([2.0, self.mean[0], self.mean[1], c[0][0], c[0][1], c[1][1]])
    }
}
