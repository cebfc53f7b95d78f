use super::{Decay, EncoderConfig, EncoderParams, Gradients};
use crate::error::{Error, Result};

/// First and second moment estimates, shaped like the trainable tensors.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub m: Vec<Vec<f64>>,
    pub v: Vec<Vec<f64>>,
    /// Number of steps taken so far.
    pub t: u64,
}

impl AdamState {
    pub fn new(params: &EncoderParams) -> Self {
        let zeros: Vec<Vec<f64>> = params.trainable().iter().map(|t| vec![0.0; t.len()]).collect();
        Self {
            m: zeros.clone(),
            v: zeros,
            t: 0,
        }
    }
}

/// One AdamW step. Weight decay is decoupled (`w -= lr * wd * w`) and only
/// touches conv and linear weights; biases and batch-norm affine parameters
/// are not decayed.
pub fn adamw_step(
    params: &mut EncoderParams,
    grads: &Gradients,
    state: &mut AdamState,
    cfg: &EncoderConfig,
) -> Result<()> {
    let tensors = params.trainable_mut();
    if grads.tensors.len() != tensors.len() || state.m.len() != tensors.len() {
        return Err(Error::Shape("gradient/moment structure does not match parameters".into()));
    }
    state.t += 1;
    let t = state.t as i32;
    let lr = cfg.learning_rate;
    let bc1 = 1.0 - cfg.beta1.powi(t);
    let bc2 = 1.0 - cfg.beta2.powi(t);
    for (((w, decay), g), (m, v)) in tensors
        .into_iter()
        .zip(&grads.tensors)
        .zip(state.m.iter_mut().zip(state.v.iter_mut()))
    {
        if g.len() != w.len() {
            return Err(Error::Shape("gradient tensor length mismatch".into()));
        }
        for i in 0..w.len() {
            if decay == Decay::Apply {
                w[i] -= lr * cfg.weight_decay * w[i];
            }
            m[i] = cfg.beta1 * m[i] + (1.0 - cfg.beta1) * g[i];
            v[i] = cfg.beta2 * v[i] + (1.0 - cfg.beta2) * g[i] * g[i];
            let m_hat = m[i] / bc1;
            let v_hat = v[i] / bc2;
            w[i] -= lr * m_hat / (v_hat.sqrt() + cfg.adam_epsilon);
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::encoder::ClassMap;
    use crate::seed::rng_from;

    fn setup() -> (EncoderParams, EncoderConfig) {
        let cfg = EncoderConfig::default();
        let p = EncoderParams::init(&cfg, ClassMap::new(vec![0, 1]), &mut rng_from(4)).unwrap();
        (p, cfg)
    }

    fn grads_like(p: &EncoderParams, value: f64) -> Gradients {
        Gradients {
            tensors: p.trainable().iter().map(|t| vec![value; t.len()]).collect(),
        }
    }

    #[test]
    fn zero_gradient_zero_decay_is_fixed_point() {
        let (mut p, mut cfg) = setup();
        cfg.weight_decay = 0.0;
        let before = p.clone();
        let g = grads_like(&p, 0.0);
        let mut st = AdamState::new(&p);
        adamw_step(&mut p, &g, &mut st, &cfg).unwrap();
        assert_eq!(p, before);
    }

    #[test]
    fn zero_gradient_applies_decoupled_decay_to_weights_only() {
        let (mut p, mut cfg) = setup();
        cfg.weight_decay = 0.5;
        p.blocks[0].bias[0] = 0.7;
        p.blocks[0].bn_gamma[0] = 1.3;
        let before = p.clone();
        let g = grads_like(&p, 0.0);
        let mut st = AdamState::new(&p);
        adamw_step(&mut p, &g, &mut st, &cfg).unwrap();
        let f = 1.0 - cfg.learning_rate * cfg.weight_decay;
        assert_eq!(p.blocks[0].weight[3], before.blocks[0].weight[3] * f);
        assert_eq!(p.fc_weight[1], before.fc_weight[1] * f);
        assert_eq!(p.blocks[0].bias[0], 0.7);
        assert_eq!(p.blocks[0].bn_gamma[0], 1.3);
    }

    #[test]
    fn first_step_from_unit_weight() {
        let (mut p, mut cfg) = setup();
        cfg.weight_decay = 0.0;
        p.fc_weight[0] = 1.0;
        let g = grads_like(&p, 1.0);
        let mut st = AdamState::new(&p);
        adamw_step(&mut p, &g, &mut st, &cfg).unwrap();
        // m_hat = v_hat = 1 after bias correction
        let expected = 1.0 - 3e-4 * (1.0 / (1.0 + 1e-8));
        assert!((p.fc_weight[0] - expected).abs() < 1e-15);
        assert!((p.fc_weight[0] - 0.9997).abs() < 1e-9);
        assert_eq!(st.t, 1);
    }
}
