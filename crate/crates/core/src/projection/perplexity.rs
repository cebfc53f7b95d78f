use crate::error::{Error, Result};

/// Conditional distribution of one point over its neighbours.
#[derive(Debug, Clone, PartialEq)]
pub struct PerplexityRow {
    /// Precision `beta = 1 / (2 sigma^2)` of the Gaussian kernel.
    pub beta: f64,
    pub probs: Vec<f64>,
    /// `exp(H)` of `probs`, H in nats.
    pub perplexity: f64,
}

impl PerplexityRow {
    pub fn sigma(&self) -> f64 {
        (0.5 / self.beta).sqrt()
    }
}

/// Conditional probabilities `p_{j|i}` for one row of squared distances at a
/// fixed precision, together with the row entropy in nats.
pub fn conditional_row(dist: &[f64], beta: f64) -> (Vec<f64>, f64) {
    let dmin = dist.iter().copied().fold(f64::INFINITY, f64::min);
    // shifting by the minimum keeps the largest weight at exactly 1
    let w: Vec<f64> = dist.iter().map(|&d| (-(d - dmin) * beta).exp()).collect();
    let z: f64 = w.iter().sum();
    let mean_d: f64 = w.iter().zip(dist).map(|(w, d)| w * (d - dmin)).sum::<f64>() / z;
    let h = z.ln() + beta * mean_d;
    (w.into_iter().map(|w| w / z).collect(), h)
}

/// Finds the precision whose conditional distribution over `dist` (squared
/// distances to the other N-1 points) has the target perplexity.
///
/// The precision is bracketed by doubling or halving, then bisected for at
/// most `max_steps` steps or until the perplexity is within `tol`.
pub fn perplexity_search(dist: &[f64], target: f64, tol: f64, max_steps: usize) -> Result<PerplexityRow> {
    let n_others = dist.len();
    if n_others < 2 {
        return Err(Error::Validation("perplexity search needs at least 3 points".into()));
    }
    if !(target > 0.0) {
        return Err(Error::Config("perplexity must be positive".into()));
    }
    if target >= (n_others + 1) as f64 {
        return Err(Error::Config(format!("perplexity must be < N (N = {})", n_others + 1)));
    }
    if dist.iter().any(|d| !d.is_finite() || *d < 0.0) {
        return Err(Error::NonFinite {
            stage: "perplexity search".into(),
            detail: "distances must be finite and non-negative".into(),
        });
    }
    let dmin = dist.iter().copied().fold(f64::INFINITY, f64::min);
    let dmax = dist.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if dmax == dmin {
        let p = 1.0 / n_others as f64;
        return Ok(PerplexityRow {
            beta: 1.0,
            probs: vec![p; n_others],
            perplexity: n_others as f64,
        });
    }

    let eval = |beta: f64| {
        let (p, h) = conditional_row(dist, beta);
        (p, h.exp())
    };
    // perplexity decreases monotonically in beta; start at the scale of the data
    let spread = dmax - dmin;
    let mut beta = 1.0 / spread;
    let (mut probs, mut perp) = eval(beta);
    let (mut lo, mut hi) = (0.0, f64::INFINITY);
    for _ in 0..2048 {
        if (perp - target).abs() <= tol {
            return Ok(PerplexityRow { beta, probs, perplexity: perp });
        }
        if perp > target {
            lo = beta;
        } else {
            hi = beta;
        }
        if hi.is_finite() && lo > 0.0 {
            break;
        }
        beta = if hi.is_finite() { beta / 2.0 } else { beta * 2.0 };
        if beta == 0.0 || !beta.is_finite() {
            break;
        }
        (probs, perp) = eval(beta);
    }
    for _ in 0..max_steps {
        if (perp - target).abs() <= tol || !hi.is_finite() || lo == 0.0 {
            break;
        }
        beta = 0.5 * (lo + hi);
        (probs, perp) = eval(beta);
        if perp > target {
            lo = beta;
        } else {
            hi = beta;
        }
    }
    if (perp - target).abs() > tol {
        log::warn!("perplexity search stopped at {perp:.6} (target {target})");
    }
    Ok(PerplexityRow { beta, probs, perplexity: perp })
}
