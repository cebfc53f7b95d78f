//! Reference computations written from the formulas, sharing no code with
//! the library beyond plain data types.

use std::f64::consts::PI;

pub type P2 = [f64; 2];

fn inverse2(h: [[f64; 2]; 2]) -> ([[f64; 2]; 2], f64) {
    let det = h[0][0] * h[1][1] - h[0][1] * h[1][0];
    ([[h[1][1] / det, -h[0][1] / det], [-h[1][0] / det, h[0][0] / det]], det)
}

/// Equal-weight Gaussian mixture with one shared covariance `h`.
pub fn mixture_pdf(points: &[P2], h: [[f64; 2]; 2], z: P2) -> f64 {
    let (inv, det) = inverse2(h);
    let norm = 1.0 / (2.0 * PI * det.sqrt() * points.len() as f64);
    points
        .iter()
        .map(|p| {
            let (dx, dy) = (z[0] - p[0], z[1] - p[1]);
            let q = dx * (inv[0][0] * dx + inv[0][1] * dy) + dy * (inv[1][0] * dx + inv[1][1] * dy);
            (-0.5 * q).exp()
        })
        .sum::<f64>()
        * norm
}

/// Midpoint-rule integral of `pdf` over the points' bounding box widened by
/// `reach` kernel standard deviations on each axis, `n`×`n` cells.
pub fn grid_mass(points: &[P2], h: [[f64; 2]; 2], reach: f64, n: usize, pdf: impl Fn(P2) -> f64) -> f64 {
    let sd = [h[0][0].sqrt(), h[1][1].sqrt()];
    let mut lo = [f64::INFINITY; 2];
    let mut hi = [f64::NEG_INFINITY; 2];
    for p in points {
        for a in 0..2 {
            lo[a] = lo[a].min(p[a] - reach * sd[a]);
            hi[a] = hi[a].max(p[a] + reach * sd[a]);
        }
    }
    let step = [(hi[0] - lo[0]) / n as f64, (hi[1] - lo[1]) / n as f64];
    let mut total = 0.0;
    for i in 0..n {
        let x = lo[0] + (i as f64 + 0.5) * step[0];
        for j in 0..n {
            total += pdf([x, lo[1] + (j as f64 + 0.5) * step[1]]);
        }
    }
    total * step[0] * step[1]
}

/// Silverman bandwidth for d = 2: `M^(-1/3)` times the unbiased covariance.
pub fn silverman_bandwidth(points: &[P2]) -> [[f64; 2]; 2] {
    let m = points.len() as f64;
    let mean = [
        points.iter().map(|p| p[0]).sum::<f64>() / m,
        points.iter().map(|p| p[1]).sum::<f64>() / m,
    ];
    let mut c = [[0.0; 2]; 2];
    for p in points {
        for a in 0..2 {
            for b in 0..2 {
                c[a][b] += (p[a] - mean[a]) * (p[b] - mean[b]);
            }
        }
    }
    let f2 = m.powf(-1.0 / 3.0);
    c.map(|r| r.map(|v| f2 * v / (m - 1.0)))
}

/// Radius of the α-HDR disk of an isotropic normal with standard deviation `sd`.
pub fn hdr_radius(alpha: f64, sd: f64) -> f64 {
    sd * (-2.0 * (1.0 - alpha).ln()).sqrt()
}

/// Density level bounding the α-HDR of the standard bivariate normal.
pub fn standard_normal_hdr_level(alpha: f64) -> f64 {
    (1.0 - alpha) / (2.0 * PI)
}

/// Mass of an isotropic normal (mean 0, standard deviation `sd`) inside a
/// disk of radius `r` centred `d` away from its mean. Polar midpoint rule.
pub fn disk_mass(sd: f64, d: f64, r: f64, n: usize) -> f64 {
    let (dr, dt) = (r / n as f64, 2.0 * PI / n as f64);
    let norm = 1.0 / (2.0 * PI * sd * sd);
    let mut total = 0.0;
    for i in 0..n {
        let rho = (i as f64 + 0.5) * dr;
        for j in 0..n {
            let t = (j as f64 + 0.5) * dt;
            let (x, y) = (d + rho * t.cos(), rho * t.sin());
            total += (-(x * x + y * y) / (2.0 * sd * sd)).exp() * rho;
        }
    }
    total * norm * dr * dt
}

/// `Contain` of two unit normals whose means are `d` apart.
pub fn unit_pair_containment(d: f64, alpha: f64) -> f64 {
    (disk_mass(1.0, d, hdr_radius(alpha, 1.0), 600) / alpha).min(1.0)
}

/// Conditional neighbour distribution at precision `beta`, computed directly.
pub fn conditional(dist: &[f64], beta: f64) -> Vec<f64> {
    let w: Vec<f64> = dist.iter().map(|d| (-beta * d).exp()).collect();
    let z: f64 = w.iter().sum();
    w.iter().map(|v| v / z).collect()
}

pub fn perplexity_of(p: &[f64]) -> f64 {
    let h: f64 = p.iter().filter(|&&v| v > 0.0).map(|v| -v * v.ln()).sum();
    h.exp()
}

/// Dense log-spaced scan of the precision; returns the conditional row whose
/// perplexity is closest to `target`.
pub fn grid_search_row(dist: &[f64], target: f64, lo_log10: f64, hi_log10: f64, n: usize) -> Vec<f64> {
    let mut best = (f64::INFINITY, Vec::new());
    for i in 0..=n {
        let beta = 10f64.powf(lo_log10 + (hi_log10 - lo_log10) * i as f64 / n as f64);
        let p = conditional(dist, beta);
        let err = (perplexity_of(&p) - target).abs();
        if err < best.0 {
            best = (err, p);
        }
    }
    best.1
}

fn dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

/// Mean silhouette coefficient with Euclidean distances.
pub fn silhouette(rows: &[Vec<f64>], labels: &[usize]) -> f64 {
    let n = rows.len();
    let k = labels.iter().max().map_or(0, |m| m + 1);
    let mut total = 0.0;
    for i in 0..n {
        let mut sum = vec![0.0; k];
        let mut cnt = vec![0usize; k];
        for j in 0..n {
            if j != i {
                sum[labels[j]] += dist(&rows[i], &rows[j]);
                cnt[labels[j]] += 1;
            }
        }
        let own = labels[i];
        if cnt[own] == 0 {
            continue;
        }
        let a = sum[own] / cnt[own] as f64;
        let b = (0..k)
            .filter(|&c| c != own && cnt[c] > 0)
            .map(|c| sum[c] / cnt[c] as f64)
            .fold(f64::INFINITY, f64::min);
        total += (b - a) / a.max(b);
    }
    total / n as f64
}

/// Sum of squared distances of rows to their assigned centroid.
pub fn inertia(rows: &[Vec<f64>], centroids: &[Vec<f64>], assignments: &[usize]) -> f64 {
    rows.iter()
        .zip(assignments)
        .map(|(r, &a)| r.iter().zip(&centroids[a]).map(|(x, c)| (x - c) * (x - c)).sum::<f64>())
        .sum()
}
