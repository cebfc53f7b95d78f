use rand::Rng;

use super::{EncoderParams, Gradients};
use crate::data::{N_CHANNELS, N_STEPS};
use crate::error::{Error, Result};
use crate::matrix::Matrix;

/// Per-block dropout multipliers (`0` or `1 / (1 - rate)`), each of shape
/// `n x out_ch x steps`.
#[derive(Debug, Clone, PartialEq)]
pub struct DropoutMasks {
    pub n: usize,
    pub blocks: Vec<Vec<f64>>,
}

pub fn dropout_masks<R: Rng>(params: &EncoderParams, n: usize, rate: f64, rng: &mut R) -> DropoutMasks {
    let keep = 1.0 - rate;
    let blocks = params
        .blocks
        .iter()
        .map(|b| {
            (0..n * b.out_ch * N_STEPS)
                .map(|_| {
                    if rate == 0.0 || rng.random::<f64>() < keep {
                        1.0 / keep
                    } else {
                        0.0
                    }
                })
                .collect()
        })
        .collect();
    DropoutMasks { n, blocks }
}

#[derive(Debug, Clone, Copy)]
pub enum Mode<'a> {
    /// Batch statistics and the given dropout masks.
    Train(&'a DropoutMasks),
    /// Running statistics, no dropout.
    Infer,
}

#[derive(Debug, Clone)]
struct BlockCache {
    input: Vec<f64>,
    xhat: Vec<f64>,
    bn_out: Vec<f64>,
    mask: Vec<f64>,
    inv_std: Vec<f64>,
    batch_mean: Vec<f64>,
    batch_var: Vec<f64>,
}

/// Intermediates kept by a train-mode forward pass for [`backward`].
#[derive(Debug, Clone)]
pub struct ForwardCache {
    n: usize,
    blocks: Vec<BlockCache>,
    pooled: Vec<f64>,
    logits: Matrix,
}

impl ForwardCache {
    /// Updates the batch-norm running statistics from this pass's batch
    /// statistics (unbiased variance).
    pub fn update_running_stats(&self, params: &mut EncoderParams, momentum: f64) {
        let m = (self.n * N_STEPS) as f64;
        let correction = if m > 1.0 { m / (m - 1.0) } else { 1.0 };
        for (b, c) in params.blocks.iter_mut().zip(&self.blocks) {
            for o in 0..b.out_ch {
                b.running_mean[o] = (1.0 - momentum) * b.running_mean[o] + momentum * c.batch_mean[o];
                b.running_var[o] =
                    (1.0 - momentum) * b.running_var[o] + momentum * c.batch_var[o] * correction;
            }
        }
    }

    pub fn logits(&self) -> &Matrix {
        &self.logits
    }

    /// Which ReLU units were active, over all blocks in order.
    pub fn relu_pattern(&self) -> Vec<bool> {
        self.blocks.iter().flat_map(|b| b.bn_out.iter().map(|&v| v > 0.0)).collect()
    }
}

#[derive(Debug, Clone)]
pub struct ForwardOutput {
    pub logits: Matrix,
    pub cache: Option<ForwardCache>,
}

/// Forward pass over `n` snippets stored back to back (`n x 4 x 20`).
pub fn forward(params: &EncoderParams, batch: &[f64], n: usize, mode: Mode<'_>) -> Result<ForwardOutput> {
    if batch.len() != n * N_CHANNELS * N_STEPS {
        return Err(Error::Shape(format!(
            "batch has {} values, expected {} for {n} snippets",
            batch.len(),
            n * N_CHANNELS * N_STEPS
        )));
    }
    let train = match mode {
        Mode::Train(masks) => {
            if n < 2 {
                return Err(Error::Validation(
                    "batch normalization in train mode needs a batch of at least 2".into(),
                ));
            }
            if masks.n != n
                || masks.blocks.len() != params.blocks.len()
                || masks.blocks.iter().zip(&params.blocks).any(|(m, b)| m.len() != n * b.out_ch * N_STEPS)
            {
                return Err(Error::Shape("dropout masks do not match the batch".into()));
            }
            Some(masks)
        }
        Mode::Infer => None,
    };

    let mut x = batch.to_vec();
    let mut caches = Vec::with_capacity(params.blocks.len());
    for (bi, b) in params.blocks.iter().enumerate() {
        let y = conv1d(&x, n, b.in_ch, b.out_ch, &b.weight, &b.bias, params.kernel, params.padding);
        let (mean, var) = match train {
            Some(_) => channel_stats(&y, n, b.out_ch),
            None => (b.running_mean.clone(), b.running_var.clone()),
        };
        let inv_std: Vec<f64> = var.iter().map(|v| 1.0 / (v + params.bn_epsilon).sqrt()).collect();
        let mut xhat = vec![0.0; y.len()];
        let mut bn_out = vec![0.0; y.len()];
        let mut out = vec![0.0; y.len()];
        for s in 0..n {
            for o in 0..b.out_ch {
                let base = (s * b.out_ch + o) * N_STEPS;
                for t in 0..N_STEPS {
                    let i = base + t;
                    xhat[i] = (y[i] - mean[o]) * inv_std[o];
                    bn_out[i] = b.bn_gamma[o] * xhat[i] + b.bn_beta[o];
                    out[i] = bn_out[i].max(0.0);
                }
            }
        }
        let mask = match train {
            Some(masks) => {
                let mk = &masks.blocks[bi];
                for (v, k) in out.iter_mut().zip(mk) {
                    *v *= k;
                }
                mk.clone()
            }
            None => Vec::new(),
        };
        if let Some(i) = out.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite {
                stage: format!("encoder conv block {}", bi + 1),
                detail: format!("activation {i} is {}", out[i]),
            });
        }
        if train.is_some() {
            caches.push(BlockCache {
                input: std::mem::take(&mut x),
                xhat,
                bn_out,
                mask,
                inv_std,
                batch_mean: mean,
                batch_var: var,
            });
        }
        x = out;
    }

    let hidden = params.hidden;
    let mut pooled = vec![0.0; n * hidden];
    for s in 0..n {
        for j in 0..hidden {
            let base = (s * hidden + j) * N_STEPS;
            pooled[s * hidden + j] = x[base..base + N_STEPS].iter().sum::<f64>() / N_STEPS as f64;
        }
    }
    let c = params.n_classes();
    let mut logits = Matrix::zeros(n, c);
    for s in 0..n {
        let h = &pooled[s * hidden..(s + 1) * hidden];
        let row = logits.row_mut(s);
        for k in 0..c {
            let w = &params.fc_weight[k * hidden..(k + 1) * hidden];
            row[k] = params.fc_bias[k] + w.iter().zip(h).map(|(a, b)| a * b).sum::<f64>();
        }
    }
    if !logits.is_finite() {
        return Err(Error::NonFinite {
            stage: "encoder linear head".into(),
            detail: "non-finite logit".into(),
        });
    }
    let cache = train.map(|_| ForwardCache {
        n,
        blocks: caches,
        pooled,
        logits: logits.clone(),
    });
    Ok(ForwardOutput { logits, cache })
}

#[allow(clippy::too_many_arguments)]
fn conv1d(
    x: &[f64],
    n: usize,
    in_ch: usize,
    out_ch: usize,
    weight: &[f64],
    bias: &[f64],
    kernel: usize,
    pad: usize,
) -> Vec<f64> {
    let mut y = vec![0.0; n * out_ch * N_STEPS];
    for s in 0..n {
        for o in 0..out_ch {
            let yo = &mut y[(s * out_ch + o) * N_STEPS..(s * out_ch + o + 1) * N_STEPS];
            yo.fill(bias[o]);
            for i in 0..in_ch {
                let xi = &x[(s * in_ch + i) * N_STEPS..(s * in_ch + i + 1) * N_STEPS];
                for k in 0..kernel {
                    let w = weight[(o * in_ch + i) * kernel + k];
                    // y[t] += w * x[t + k - pad] for valid t
                    let (t0, t1) = valid_range(k, pad);
                    for t in t0..t1 {
                        yo[t] += w * xi[t + k - pad];
                    }
                }
            }
        }
    }
    y
}

/// Output steps `t` for which `t + k - pad` is a valid input step.
fn valid_range(k: usize, pad: usize) -> (usize, usize) {
    let t0 = pad.saturating_sub(k);
    let t1 = (N_STEPS + pad).saturating_sub(k).min(N_STEPS);
    (t0, t1)
}

/// Per-channel mean and biased variance over batch and time.
fn channel_stats(y: &[f64], n: usize, ch: usize) -> (Vec<f64>, Vec<f64>) {
    let m = (n * N_STEPS) as f64;
    let mut mean = vec![0.0; ch];
    let mut var = vec![0.0; ch];
    for s in 0..n {
        for o in 0..ch {
            let base = (s * ch + o) * N_STEPS;
            mean[o] += y[base..base + N_STEPS].iter().sum::<f64>();
        }
    }
    for v in &mut mean {
        *v /= m;
    }
    for s in 0..n {
        for o in 0..ch {
            let base = (s * ch + o) * N_STEPS;
            var[o] += y[base..base + N_STEPS].iter().map(|v| (v - mean[o]).powi(2)).sum::<f64>();
        }
    }
    for v in &mut var {
        *v /= m;
    }
    (mean, var)
}

/// Row-wise softmax with max subtraction.
pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|v| (v - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / sum).collect()
}

/// Mean over the batch of `-log softmax(logits)[label]`.
pub fn loss_softmax_ce(logits: &Matrix, labels: &[usize]) -> Result<f64> {
    if labels.len() != logits.rows() {
        return Err(Error::Shape(format!(
            "{} labels for {} logit rows",
            labels.len(),
            logits.rows()
        )));
    }
    let mut total = 0.0;
    for (row, &y) in logits.iter_rows().zip(labels) {
        if y >= row.len() {
            return Err(Error::Validation(format!("label {y} out of range for {} classes", row.len())));
        }
        let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let lse = max + row.iter().map(|v| (v - max).exp()).sum::<f64>().ln();
        total += lse - row[y];
    }
    Ok(total / labels.len().max(1) as f64)
}

/// Gradient of `loss_softmax_ce(forward(params))` with respect to every
/// trainable tensor, using the intermediates of a train-mode forward pass.
pub fn backward(params: &EncoderParams, cache: &ForwardCache, labels: &[usize]) -> Result<Gradients> {
    let n = cache.n;
    let c = params.n_classes();
    let hidden = params.hidden;
    if labels.len() != n
        || cache.blocks.len() != params.blocks.len()
        || cache.logits.cols() != c
        || cache.pooled.len() != n * hidden
        || cache
            .blocks
            .iter()
            .zip(&params.blocks)
            .any(|(bc, b)| bc.inv_std.len() != b.out_ch || bc.input.len() != n * b.in_ch * N_STEPS)
    {
        return Err(Error::Shape("forward cache does not match parameters or labels".into()));
    }

    // d loss / d logits
    let mut dlogits = vec![0.0; n * c];
    for s in 0..n {
        if labels[s] >= c {
            return Err(Error::Validation(format!("label {} out of range", labels[s])));
        }
        let p = softmax(cache.logits.row(s));
        for k in 0..c {
            let onehot = if k == labels[s] { 1.0 } else { 0.0 };
            dlogits[s * c + k] = (p[k] - onehot) / n as f64;
        }
    }

    let mut fc_w = vec![0.0; c * hidden];
    let mut fc_b = vec![0.0; c];
    let mut dpooled = vec![0.0; n * hidden];
    for s in 0..n {
        let h = &cache.pooled[s * hidden..(s + 1) * hidden];
        for k in 0..c {
            let g = dlogits[s * c + k];
            fc_b[k] += g;
            let w = &params.fc_weight[k * hidden..(k + 1) * hidden];
            for j in 0..hidden {
                fc_w[k * hidden + j] += g * h[j];
                dpooled[s * hidden + j] += g * w[j];
            }
        }
    }

    // average pooling spreads the gradient evenly over time
    let mut dout = vec![0.0; n * hidden * N_STEPS];
    for (i, d) in dpooled.iter().enumerate() {
        dout[i * N_STEPS..(i + 1) * N_STEPS].fill(d / N_STEPS as f64);
    }

    let mut block_grads: Vec<[Vec<f64>; 4]> = Vec::with_capacity(params.blocks.len());
    for (b, bc) in params.blocks.iter().zip(&cache.blocks).rev() {
        let ch = b.out_ch;
        let m = (n * N_STEPS) as f64;
        // dropout and ReLU
        let mut dz = vec![0.0; dout.len()];
        for i in 0..dout.len() {
            if bc.bn_out[i] > 0.0 {
                dz[i] = dout[i] * bc.mask[i];
            }
        }
        let mut dgamma = vec![0.0; ch];
        let mut dbeta = vec![0.0; ch];
        let mut sum_dxhat = vec![0.0; ch];
        let mut sum_dxhat_xhat = vec![0.0; ch];
        for s in 0..n {
            for o in 0..ch {
                let base = (s * ch + o) * N_STEPS;
                for t in 0..N_STEPS {
                    let i = base + t;
                    dgamma[o] += dz[i] * bc.xhat[i];
                    dbeta[o] += dz[i];
                    let dxhat = dz[i] * b.bn_gamma[o];
                    sum_dxhat[o] += dxhat;
                    sum_dxhat_xhat[o] += dxhat * bc.xhat[i];
                }
            }
        }
        let mut dy = vec![0.0; dz.len()];
        for s in 0..n {
            for o in 0..ch {
                let base = (s * ch + o) * N_STEPS;
                let k = bc.inv_std[o] / m;
                for t in 0..N_STEPS {
                    let i = base + t;
                    let dxhat = dz[i] * b.bn_gamma[o];
                    dy[i] = k * (m * dxhat - sum_dxhat[o] - bc.xhat[i] * sum_dxhat_xhat[o]);
                }
            }
        }

        let in_ch = b.in_ch;
        let kernel = params.kernel;
        let pad = params.padding;
        let mut dw = vec![0.0; b.weight.len()];
        let mut db = vec![0.0; ch];
        let mut dx = vec![0.0; n * in_ch * N_STEPS];
        for s in 0..n {
            for o in 0..ch {
                let dyo = &dy[(s * ch + o) * N_STEPS..(s * ch + o + 1) * N_STEPS];
                db[o] += dyo.iter().sum::<f64>();
                for i in 0..in_ch {
                    let xi = &bc.input[(s * in_ch + i) * N_STEPS..(s * in_ch + i + 1) * N_STEPS];
                    let dxi = &mut dx[(s * in_ch + i) * N_STEPS..(s * in_ch + i + 1) * N_STEPS];
                    for k in 0..kernel {
                        let widx = (o * in_ch + i) * kernel + k;
                        let w = b.weight[widx];
                        let (t0, t1) = valid_range(k, pad);
                        let mut acc = 0.0;
                        for t in t0..t1 {
                            acc += dyo[t] * xi[t + k - pad];
                            dxi[t + k - pad] += dyo[t] * w;
                        }
                        dw[widx] += acc;
                    }
                }
            }
        }
        block_grads.push([dw, db, dgamma, dbeta]);
        dout = dx;
    }
    block_grads.reverse();

    let mut tensors = Vec::with_capacity(4 * block_grads.len() + 2);
    for g in block_grads {
        tensors.extend(g);
    }
    tensors.push(fc_w);
    tensors.push(fc_b);
    Ok(Gradients { tensors })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::encoder::{ClassMap, EncoderConfig, EncoderParams};
    use crate::seed::rng_from;
    use rand::Rng;

    fn params(c: usize, seed: u64) -> EncoderParams {
        let classes = (0..c as u32).collect();
        EncoderParams::init(&EncoderConfig::default(), ClassMap::new(classes), &mut rng_from(seed)).unwrap()
    }

    fn batch(n: usize, seed: u64) -> Vec<f64> {
        let mut rng = rng_from(seed);
        (0..n * N_CHANNELS * N_STEPS).map(|_| rng.random_range(-1.5..1.5)).collect()
    }

    #[test]
    fn zero_network_gives_zero_logits() {
        let mut p = params(4, 1);
        for (t, _) in p.trainable_mut() {
            t.fill(0.0);
        }
        let out = forward(&p, &batch(3, 2), 3, Mode::Infer).unwrap();
        assert!(out.logits.as_slice().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn logits_shape_and_infer_determinism() {
        let p = params(8, 3);
        let x = batch(7, 4);
        let a = forward(&p, &x, 7, Mode::Infer).unwrap();
        assert_eq!((a.logits.rows(), a.logits.cols()), (7, 8));
        let b = forward(&p, &x, 7, Mode::Infer).unwrap();
        assert_eq!(a.logits, b.logits);
        assert!(a.cache.is_none());
    }

    #[test]
    fn temporal_length_preserved() {
        for k in 0..3 {
            let (t0, t1) = valid_range(k, 1);
            // every output step gets the centre tap, edge taps lose one step
            assert_eq!(t1 - t0, if k == 1 { N_STEPS } else { N_STEPS - 1 });
        }
        let p = params(3, 5);
        let masks = dropout_masks(&p, 2, 0.25, &mut rng_from(1));
        let out = forward(&p, &batch(2, 6), 2, Mode::Train(&masks)).unwrap();
        let cache = out.cache.unwrap();
        for (b, bc) in p.blocks.iter().zip(&cache.blocks) {
            assert_eq!(bc.xhat.len(), 2 * b.out_ch * N_STEPS);
        }
    }

    #[test]
    fn train_mode_rejects_single_sample_batch() {
        let p = params(3, 5);
        let masks = dropout_masks(&p, 1, 0.25, &mut rng_from(1));
        assert!(forward(&p, &batch(1, 6), 1, Mode::Train(&masks)).is_err());
    }

    #[test]
    fn uniform_logits_loss_is_ln_c() {
        let logits = Matrix::zeros(5, 8);
        let l = loss_softmax_ce(&logits, &[0, 1, 2, 3, 7]).unwrap();
        assert!((l - 8f64.ln()).abs() < 1e-15);
        assert!((l - 2.0794).abs() < 1e-4);
    }

    #[test]
    fn margin_logits_loss_below_ln_c() {
        let logits = Matrix::from_rows(&[[3.0, 0.0, 0.0, 0.0], [0.0, 0.0, 2.0, 0.0]]);
        assert!(loss_softmax_ce(&logits, &[0, 2]).unwrap() < 4f64.ln());
    }

    #[test]
    fn loss_matches_compensated_reference() {
        // reference: log-sum-exp with Kahan summation and no max shift,
        // logits are small so exp does not overflow
        let mut rng = rng_from(77);
        let rows: Vec<Vec<f64>> = (0..3).map(|_| (0..4).map(|_| rng.random_range(-3.0..3.0)).collect()).collect();
        let labels = [2usize, 0, 3];
        let mut total = 0.0f64;
        let mut comp = 0.0f64;
        for (r, &y) in rows.iter().zip(&labels) {
            let mut s = 0.0f64;
            let mut c = 0.0f64;
            for v in r {
                let term = v.exp() - c;
                let t = s + term;
                c = (t - s) - term;
                s = t;
            }
            let term = (s.ln() - r[y]) - comp;
            let t = total + term;
            comp = (t - total) - term;
            total = t;
        }
        let reference = total / 3.0;
        let l = loss_softmax_ce(&Matrix::from_rows(&rows), &labels).unwrap();
        assert!((l - reference).abs() < 1e-12, "{l} vs {reference}");
    }

    #[test]
    fn duplicated_sample_gives_same_gradient() {
        let p = params(3, 8);
        let one = batch(2, 9);
        let mut dup = one.clone();
        dup.extend_from_slice(&one);
        let no_drop = |n: usize| DropoutMasks {
            n,
            blocks: p.blocks.iter().map(|b| vec![1.0; n * b.out_ch * N_STEPS]).collect(),
        };
        let m2 = no_drop(2);
        let m4 = no_drop(4);
        let a = forward(&p, &one, 2, Mode::Train(&m2)).unwrap().cache.unwrap();
        let b = forward(&p, &dup, 4, Mode::Train(&m4)).unwrap().cache.unwrap();
        let ga = backward(&p, &a, &[0, 2]).unwrap();
        let gb = backward(&p, &b, &[0, 2, 0, 2]).unwrap();
        for (x, y) in ga.tensors.iter().flatten().zip(gb.tensors.iter().flatten()) {
            assert!((x - y).abs() < 1e-10 * (1.0 + x.abs()), "{x} vs {y}");
        }
    }

    #[test]
    fn dead_relu_unit_has_zero_weight_gradient() {
        let mut p = params(3, 10);
        // channel 5 of block 2: BN output always negative
        p.blocks[1].bn_gamma[5] = 0.01;
        p.blocks[1].bn_beta[5] = -100.0;
        let masks = dropout_masks(&p, 3, 0.0, &mut rng_from(2));
        let cache = forward(&p, &batch(3, 11), 3, Mode::Train(&masks)).unwrap().cache.unwrap();
        let g = backward(&p, &cache, &[0, 1, 2]).unwrap();
        let dw = &g.tensors[4];
        let (in_ch, k) = (p.blocks[1].in_ch, p.kernel);
        assert!(dw[5 * in_ch * k..6 * in_ch * k].iter().all(|&v| v == 0.0));
        assert_eq!(g.tensors[5][5], 0.0);
        assert!(dw.iter().any(|&v| v != 0.0));
    }

    #[test]
    fn backward_rejects_mismatched_cache() {
        let p = params(3, 12);
        let masks = dropout_masks(&p, 2, 0.25, &mut rng_from(2));
        let cache = forward(&p, &batch(2, 13), 2, Mode::Train(&masks)).unwrap().cache.unwrap();
        assert!(backward(&p, &cache, &[0, 1, 2]).is_err());
        let other = params(4, 12);
        assert!(backward(&other, &cache, &[0, 1]).is_err());
    }
}
