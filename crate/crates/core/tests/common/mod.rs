//! Independent oracles shared by the integration and acceptance tests.
#![allow(dead_code)]

pub mod cli;
pub mod fixtures;
pub mod oracle;

pub mod gradcheck {
    use behavior_discovery::encoder::{
        backward, dropout_masks, forward, loss_softmax_ce, ClassMap, DropoutMasks, EncoderConfig,
        EncoderParams, Mode,
    };
    use behavior_discovery::seed::rng_from;
    use rand::seq::SliceRandom;
    use rand::Rng;
    use rayon::prelude::*;

    pub const STEP: f64 = 1e-4;
    /// Gradient entries smaller than this are compared in absolute terms;
    /// the O(h^2) truncation error of the difference quotient is ~1e-10 there.
    pub const FLOOR: f64 = 1e-5;

    #[derive(Debug)]
    pub struct Report {
        pub max_rel_error: f64,
        pub worst: (usize, usize, f64, f64),
        pub n_params: usize,
        /// Coordinates whose +-h perturbation flips a ReLU; the loss is not
        /// differentiable across the step so they are not compared.
        pub n_kinks: usize,
    }

    fn loss(p: &EncoderParams, x: &[f64], n: usize, masks: &DropoutMasks, y: &[usize]) -> (f64, Vec<bool>) {
        let out = forward(p, x, n, Mode::Train(masks)).unwrap();
        let pattern = out.cache.as_ref().unwrap().relu_pattern();
        (loss_softmax_ce(&out.logits, y).unwrap(), pattern)
    }

    /// Compares every analytic gradient entry with a central difference.
    /// Relative error is `|a - f| / max(|a|, |f|, FLOOR)`.
    /// `per_tensor` caps how many coordinates of each parameter tensor are
    /// probed (chosen at random); `None` probes all of them.
    pub fn check(seed: u64, n: usize, n_classes: usize, per_tensor: Option<usize>) -> Report {
        let cfg = EncoderConfig::default();
        let mut rng = rng_from(seed);
        let mut params =
            EncoderParams::init(&cfg, ClassMap::new((0..n_classes as u32).collect()), &mut rng).unwrap();
        // move batch norm away from the identity so its gradients are exercised
        for b in &mut params.blocks {
            for g in &mut b.bn_gamma {
                *g = rng.random_range(0.5..1.5);
            }
            for s in &mut b.bn_beta {
                *s = rng.random_range(-0.3..0.3);
            }
            for v in &mut b.bias {
                *v = rng.random_range(-0.1..0.1);
            }
        }
        for v in &mut params.fc_bias {
            *v = rng.random_range(-0.1..0.1);
        }
        let x: Vec<f64> = (0..n * 80).map(|_| rng.random_range(-2.0..2.0)).collect();
        let y: Vec<usize> = (0..n).map(|_| rng.random_range(0..n_classes)).collect();
        let masks = dropout_masks(&params, n, cfg.dropout_rate, &mut rng);

        let out = forward(&params, &x, n, Mode::Train(&masks)).unwrap();
        let cache = out.cache.unwrap();
        let base_pattern = cache.relu_pattern();
        let grads = backward(&params, &cache, &y).unwrap();

        let mut coords: Vec<(usize, usize)> = Vec::new();
        for (t, v) in params.trainable().iter().enumerate() {
            let mut idx: Vec<usize> = (0..v.len()).collect();
            if let Some(cap) = per_tensor {
                idx.shuffle(&mut rng);
                idx.truncate(cap);
                idx.sort_unstable();
            }
            coords.extend(idx.into_iter().map(|i| (t, i)));
        }
        let all: Vec<Option<(usize, usize, f64, f64, f64)>> = coords
            .par_iter()
            .map(|&(t, i)| {
                let mut plus = params.clone();
                plus.trainable_mut()[t].0[i] += STEP;
                let mut minus = params.clone();
                minus.trainable_mut()[t].0[i] -= STEP;
                let (lp, pp) = loss(&plus, &x, n, &masks, &y);
                let (lm, pm) = loss(&minus, &x, n, &masks, &y);
                if pp != base_pattern || pm != base_pattern {
                    return None;
                }
                let fd = (lp - lm) / (2.0 * STEP);
                let a = grads.tensors[t][i];
                let rel = (a - fd).abs() / a.abs().max(fd.abs()).max(FLOOR);
                Some((t, i, a, fd, rel))
            })
            .collect();
        let n_kinks = all.iter().filter(|r| r.is_none()).count();
        let results: Vec<_> = all.into_iter().flatten().collect();
        let worst = results
            .iter()
            .cloned()
            .fold((0, 0, 0.0, 0.0, -1.0), |w, r| if r.4 > w.4 { r } else { w });
        Report {
            max_rel_error: worst.4,
            worst: (worst.0, worst.1, worst.2, worst.3),
            n_params: coords.len(),
            n_kinks,
        }
    }
}
