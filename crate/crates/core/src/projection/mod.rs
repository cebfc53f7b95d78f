//! Exact t-SNE of the logit embeddings to two dimensions.
//!
//! Labeled and unlabeled rows are projected together so that class and
//! cluster densities live in one coordinate system. Gradient descent follows
//! the usual schedule: early exaggeration with low momentum, then plain
//! descent with high momentum, with per-coordinate adaptive gains.

mod perplexity;

use nalgebra::{DMatrix, SymmetricEigen};
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::encoder::EmbeddingSet;
use crate::error::{Error, Result};
use crate::matrix::{squared_distance, Matrix};
use crate::seed::rng_from;

pub use perplexity::{conditional_row, perplexity_search, PerplexityRow};

pub const MIN_POINTS: usize = 5;

/// Joint affinities below this are stored as zero.
pub const NEGLIGIBLE_AFFINITY: f64 = 1e-250;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TsneConfig {
    pub perplexity: f64,
    pub n_iter: usize,
    pub early_exaggeration: f64,
    pub exaggeration_iters: usize,
    pub learning_rate: f64,
    pub momentum_early: f64,
    pub momentum_late: f64,
    /// Standard deviation of the first PCA coordinate after rescaling.
    pub init_std: f64,
    pub perplexity_tol: f64,
    pub max_bisection_steps: usize,
    pub min_gain: f64,
}

impl Default for TsneConfig {
    fn default() -> Self {
        Self {
            perplexity: 30.0,
            n_iter: 1000,
            early_exaggeration: 12.0,
            exaggeration_iters: 250,
            learning_rate: 200.0,
            momentum_early: 0.5,
            momentum_late: 0.8,
            init_std: 1e-4,
            perplexity_tol: 1e-5,
            max_bisection_steps: 64,
            min_gain: 0.01,
        }
    }
}

impl TsneConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("perplexity", self.perplexity),
            ("early_exaggeration", self.early_exaggeration),
            ("learning_rate", self.learning_rate),
            ("init_std", self.init_std),
            ("perplexity_tol", self.perplexity_tol),
            ("min_gain", self.min_gain),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::Config(format!("tsne: {name} must be positive")));
            }
        }
        for (name, v) in [("momentum_early", self.momentum_early), ("momentum_late", self.momentum_late)] {
            if !(0.0..1.0).contains(&v) {
                return Err(Error::Config(format!("tsne: {name} must be in [0, 1)")));
            }
        }
        if self.n_iter == 0 || self.exaggeration_iters > self.n_iter {
            return Err(Error::Config("tsne: need 0 < exaggeration_iters <= n_iter".into()));
        }
        if self.max_bisection_steps == 0 {
            return Err(Error::Config("tsne: max_bisection_steps must be positive".into()));
        }
        Ok(())
    }
}

/// Two-dimensional coordinates, row aligned with the projected embeddings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Projection2D {
    pub coords: Matrix,
    pub ids: Vec<String>,
    /// KL(P || Q) after the last iteration.
    pub kl: f64,
    /// KL(P || Q), with unexaggerated P, at the end of early exaggeration.
    pub kl_after_exaggeration: f64,
    /// Achieved perplexity of every conditional row.
    pub row_perplexities: Vec<f64>,
}

impl Projection2D {
    pub fn len(&self) -> usize {
        self.coords.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.coords.rows() == 0
    }

    pub fn point(&self, i: usize) -> [f64; 2] {
        let r = self.coords.row(i);
        [r[0], r[1]]
    }

    /// Coordinates of the selected rows, in the given order.
    pub fn points(&self, rows: &[usize]) -> Vec<[f64; 2]> {
        rows.iter().map(|&i| self.point(i)).collect()
    }
}

/// Symmetrized affinities `p_ij = (p_{j|i} + p_{i|j}) / (2N)` as a dense
/// N×N matrix, plus the perplexity achieved by each conditional row.
pub fn joint_probabilities(x: &Matrix, cfg: &TsneConfig) -> Result<(Matrix, Vec<f64>)> {
    let n = x.rows();
    if n < 3 {
        return Err(Error::InsufficientPoints { needed: 3, got: n });
    }
    if cfg.perplexity >= n as f64 {
        return Err(Error::Config(format!("perplexity must be < N (N = {n})")));
    }
    let rows: Vec<PerplexityRow> = (0..n)
        .into_par_iter()
        .map(|i| {
            let dist: Vec<f64> = (0..n).filter(|&j| j != i).map(|j| squared_distance(x.row(i), x.row(j))).collect();
            perplexity_search(&dist, cfg.perplexity, cfg.perplexity_tol, cfg.max_bisection_steps)
        })
        .collect::<Result<_>>()?;
    let mut cond = Matrix::zeros(n, n);
    for (i, r) in rows.iter().enumerate() {
        let out = cond.row_mut(i);
        let mut k = 0;
        for (j, o) in out.iter_mut().enumerate() {
            if j != i {
                *o = r.probs[k];
                k += 1;
            }
        }
    }
    let mut p = Matrix::zeros(n, n);
    let denom = 2.0 * n as f64;
    for i in 0..n {
        for j in 0..n {
            if i != j {
                let v = (cond.get(i, j) + cond.get(j, i)) / denom;
                // subnormal affinities carry no weight but make every
                // gradient step crawl on common hardware
                p.row_mut(i)[j] = if v < NEGLIGIBLE_AFFINITY { 0.0 } else { v };
            }
        }
    }
    Ok((p, rows.iter().map(|r| r.perplexity).collect()))
}

/// Projects the embedding vectors. Rows keep their order and ids.
pub fn tsne_fit(emb: &EmbeddingSet, cfg: &TsneConfig, seed: u64) -> Result<Projection2D> {
    let mut proj = tsne(&emb.vectors, cfg, seed)?;
    proj.ids = emb.ids.clone();
    Ok(proj)
}

/// Exact t-SNE of the rows of `x`. `seed` only matters when the data has no
/// two-dimensional spread for the PCA initialization.
pub fn tsne(x: &Matrix, cfg: &TsneConfig, seed: u64) -> Result<Projection2D> {
    cfg.validate()?;
    let n = x.rows();
    if n < MIN_POINTS {
        return Err(Error::InsufficientPoints { needed: MIN_POINTS, got: n });
    }
    if !x.is_finite() {
        return Err(Error::NonFinite {
            stage: "tsne".into(),
            detail: "input contains non-finite values".into(),
        });
    }
    let (p, row_perplexities) = joint_probabilities(x, cfg)?;
    let mut y = pca_init(x, cfg.init_std, seed);

    let mut kl_after_exaggeration = f64::NAN;
    let mut grad = vec![0.0; 2 * n];
    let mut update = vec![0.0; 2 * n];
    let mut gains = vec![1.0f64; 2 * n];
    for it in 0..cfg.n_iter {
        let early = it < cfg.exaggeration_iters;
        if it == cfg.exaggeration_iters {
            // the second phase starts from fresh optimizer state
            update.fill(0.0);
            gains.fill(1.0);
        }
        let (exag, momentum) = if early {
            (cfg.early_exaggeration, cfg.momentum_early)
        } else {
            (1.0, cfg.momentum_late)
        };
        gradient(&p, y.as_slice(), exag, &mut grad);
        if let Some(k) = grad.iter().position(|g| !g.is_finite()) {
            return Err(Error::NonFinite {
                stage: "tsne".into(),
                detail: format!("gradient entry {k} at iteration {it}"),
            });
        }
        for k in 0..2 * n {
            if update[k] * grad[k] < 0.0 {
                gains[k] += 0.2;
            } else {
                gains[k] *= 0.8;
            }
            gains[k] = gains[k].max(cfg.min_gain);
            update[k] = momentum * update[k] - cfg.learning_rate * gains[k] * grad[k];
        }
        for (v, u) in y.as_mut_slice().iter_mut().zip(&update) {
            *v += u;
        }
        if it + 1 == cfg.exaggeration_iters {
            kl_after_exaggeration = kl_divergence(&p, &y);
        }
    }
    let kl = kl_divergence(&p, &y);
    if !y.is_finite() {
        return Err(Error::NonFinite {
            stage: "tsne".into(),
            detail: "non-finite coordinates".into(),
        });
    }
    Ok(Projection2D {
        coords: y,
        ids: (0..n).map(|i| i.to_string()).collect(),
        kl,
        kl_after_exaggeration,
        row_perplexities,
    })
}

/// KL(P || Q) for the given coordinates, with P unexaggerated.
pub fn kl_divergence(p: &Matrix, y: &Matrix) -> f64 {
    let (n, y) = (y.rows(), y.as_slice());
    let rows: Vec<(f64, f64)> = (0..n)
        .into_par_iter()
        .map(|i| {
            // sum_j p_ij ln p_ij - sum_j p_ij ln num_ij, and sum_j num_ij
            let (mut a, mut s) = (0.0, 0.0);
            for (j, &pij) in p.row(i).iter().enumerate() {
                if j == i {
                    continue;
                }
                let num = kernel(y, i, j);
                s += num;
                if pij > 0.0 {
                    a += pij * (pij / num).ln();
                }
            }
            (a, s)
        })
        .collect();
    let z: f64 = rows.iter().map(|r| r.1).sum();
    let p_total: f64 = p.as_slice().iter().sum();
    rows.iter().map(|r| r.0).sum::<f64>() + p_total * z.ln()
}

fn kernel(y: &[f64], i: usize, j: usize) -> f64 {
    let dx = y[2 * i] - y[2 * j];
    let dy = y[2 * i + 1] - y[2 * j + 1];
    1.0 / (1.0 + dx * dx + dy * dy)
}

/// Gradient of KL(exag·P || Q) with respect to the flattened coordinates.
///
/// With `num_ij = 1/(1+|y_i-y_j|^2)` and `z = sum num`, the gradient is
/// `4 sum_j (exag p_ij num_ij - num_ij^2 / z)(y_i - y_j)`; both sums are
/// accumulated in one pass per row and combined once `z` is known. The
/// `j == i` term only adds 1 to the kernel sum (`dx = dy = 0`, `p_ii = 0`).
/// Reductions use a fixed lane layout and a sequential final sum, so results
/// do not depend on thread count.
fn gradient(p: &Matrix, y: &[f64], exag: f64, grad: &mut [f64]) {
    const LANES: usize = 4;
    let n = y.len() / 2;
    let xs: Vec<f64> = y.iter().step_by(2).copied().collect();
    let ys: Vec<f64> = y.iter().skip(1).step_by(2).copied().collect();
    let rows: Vec<[f64; 5]> = (0..n)
        .into_par_iter()
        .map_init(
            || vec![0.0; n],
            |num, i| {
                let (xi, yi) = (xs[i], ys[i]);
                for ((v, &xj), &yj) in num.iter_mut().zip(&xs).zip(&ys) {
                    let dx = xi - xj;
                    let dy = yi - yj;
                    *v = 1.0 / (1.0 + dx * dx + dy * dy);
                }
                let prow = p.row(i);
                let mut acc = [[0.0; LANES]; 5];
                let full = n / LANES * LANES;
                let mut step = |j: usize, l: usize| {
                    let (dx, dy, q) = (xi - xs[j], yi - ys[j], num[j]);
                    let attract = exag * prow[j] * q;
                    let repel = q * q;
                    acc[0][l] += attract * dx;
                    acc[1][l] += attract * dy;
                    acc[2][l] += repel * dx;
                    acc[3][l] += repel * dy;
                    acc[4][l] += q;
                };
                for base in (0..full).step_by(LANES) {
                    for l in 0..LANES {
                        step(base + l, l);
                    }
                }
                for j in full..n {
                    step(j, 0);
                }
                let mut out = acc.map(|a| a.iter().sum::<f64>());
                out[4] -= 1.0;
                out
            },
        )
        .collect();
    let inv_z = 1.0 / rows.iter().map(|r| r[4]).sum::<f64>();
    for (g, r) in grad.chunks_exact_mut(2).zip(&rows) {
        g[0] = 4.0 * (r[0] - r[2] * inv_z);
        g[1] = 4.0 * (r[1] - r[3] * inv_z);
    }
}

/// First two principal components, sign-fixed so the largest-magnitude
/// loading of each axis is positive, rescaled so the first coordinate has
/// standard deviation `std`.
fn pca_init(x: &Matrix, std: f64, seed: u64) -> Matrix {
    let (n, d) = (x.rows(), x.cols());
    let mut mean = vec![0.0; d];
    for r in x.iter_rows() {
        for (m, v) in mean.iter_mut().zip(r) {
            *m += v / n as f64;
        }
    }
    let centered = DMatrix::from_fn(n, d, |i, j| x.get(i, j) - mean[j]);
    let cov = centered.transpose() * &centered / (n as f64 - 1.0).max(1.0);
    let eig = SymmetricEigen::new(cov);
    let mut order: Vec<usize> = (0..d).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]).then(a.cmp(&b)));

    let mut y = Matrix::zeros(n, 2);
    if d >= 2 && eig.eigenvalues[order[1]] > 1e-12 * eig.eigenvalues[order[0]].abs().max(1e-300) {
        for (axis, &k) in order.iter().take(2).enumerate() {
            let mut v: Vec<f64> = eig.eigenvectors.column(k).iter().copied().collect();
            let lead = v.iter().copied().fold(0.0f64, |a, b| if b.abs() > a.abs() { b } else { a });
            if lead < 0.0 {
                v.iter_mut().for_each(|e| *e = -*e);
            }
            for i in 0..n {
                y.row_mut(i)[axis] = (0..d).map(|j| centered[(i, j)] * v[j]).sum();
            }
        }
        let col0: Vec<f64> = (0..n).map(|i| y.get(i, 0)).collect();
        let s = sample_std(&col0);
        if s > 0.0 {
            y.as_mut_slice().iter_mut().for_each(|v| *v *= std / s);
            return y;
        }
    }
    log::warn!("embeddings have no two-dimensional spread; using a random t-SNE initialization");
    let mut rng = rng_from(seed);
    for v in y.as_mut_slice() {
        let z: f64 = StandardNormal.sample(&mut rng);
        *v = z * std;
    }
    y
}

fn sample_std(v: &[f64]) -> f64 {
    let n = v.len() as f64;
    let m = v.iter().sum::<f64>() / n;
    (v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / n).sqrt()
}
