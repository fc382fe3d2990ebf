use super::{PipelineError, Result, TrainConfig};
use crate::scalar::{c, Scalar};
use crate::vtn_model::ModelParams;

/// First and second moment estimates plus the number of completed steps.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState<T> {
    pub m: ModelParams<T>,
    pub v: ModelParams<T>,
    pub step: u64,
}

impl<T: Scalar> AdamState<T> {
    pub fn new(params: &ModelParams<T>) -> Self {
        Self {
            m: params.zeros_like(),
            v: params.zeros_like(),
            step: 0,
        }
    }
}

/// Bias-corrected Adam update. Non-finite gradients abort before anything is
/// modified.
pub fn adam_step<T: Scalar>(
    params: &mut ModelParams<T>,
    grads: &ModelParams<T>,
    state: &mut AdamState<T>,
    lr: f64,
    config: &TrainConfig,
) -> Result<()> {
    if let Some(block) = grads.first_non_finite() {
        return Err(PipelineError::NonFinite {
            what: "gradient".into(),
            block,
        });
    }
    state.step += 1;
    let (b1, b2) = (config.adam_beta1, config.adam_beta2);
    let t = state.step as i32;
    let bc1 = 1.0 - b1.powi(t);
    let bc2 = 1.0 - b2.powi(t);
    let (b1t, b2t) = (c::<T>(b1), c::<T>(b2));
    let (one_b1, one_b2) = (c::<T>(1.0 - b1), c::<T>(1.0 - b2));
    let step_size = c::<T>(lr / bc1);
    let inv_sqrt_bc2 = c::<T>(1.0 / bc2.sqrt());
    let eps = c::<T>(config.adam_eps);
    let named_g = grads.named();
    let mut named_m = state.m.named_mut();
    let mut named_v = state.v.named_mut();
    for (i, (_, p)) in params.named_mut().into_iter().enumerate() {
        let g = &named_g[i].1.data;
        let m = &mut named_m[i].1.data;
        let v = &mut named_v[i].1.data;
        for j in 0..p.data.len() {
            m[j] = b1t * m[j] + one_b1 * g[j];
            v[j] = b2t * v[j] + one_b2 * g[j] * g[j];
            p.data[j] -= step_size * m[j] / (v[j].sqrt() * inv_sqrt_bc2 + eps);
        }
    }
    if let Some(block) = params.first_non_finite() {
        return Err(PipelineError::NonFinite {
            what: "parameter".into(),
            block,
        });
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::vtn_model::ModelConfig;

    fn setup() -> (ModelParams<f64>, AdamState<f64>, TrainConfig) {
        let p = ModelParams::<f64>::init(&ModelConfig::tiny(), 1);
        let s = AdamState::new(&p);
        (p, s, TrainConfig::default())
    }

    #[test]
    fn zero_gradient_leaves_params_and_decays_moments() {
        let (mut p, mut s, cfg) = setup();
        let before = p.clone();
        let mut g = p.zeros_like();
        g.head.bias.data[0] = 1.0;
        adam_step(&mut p, &g, &mut s, 1e-3, &cfg).unwrap();
        let m1 = s.m.head.bias.data[0];
        let mut p2 = p.clone();
        adam_step(&mut p2, &p.zeros_like(), &mut s, 1e-3, &cfg).unwrap();
        assert!(s.m.head.bias.data[0].abs() < m1.abs());
        assert_eq!(p2.head.weight, before.head.weight);
        assert_eq!(p2.spatial_pos, before.spatial_pos);
    }

    #[test]
    fn constant_gradient_moves_about_lr_per_step() {
        let (mut p, mut s, cfg) = setup();
        let mut g = p.zeros_like();
        g.head.bias.data[1] = 0.37;
        // Scalar simulation of the same recurrences.
        let (mut m, mut v, mut x) = (0.0f64, 0.0f64, p.head.bias.data[1]);
        for t in 1..=50 {
            adam_step(&mut p, &g, &mut s, 1e-3, &cfg).unwrap();
            m = 0.9 * m + 0.1 * 0.37;
            v = 0.999 * v + 0.001 * 0.37 * 0.37;
            let mh = m / (1.0 - 0.9f64.powi(t));
            let vh = v / (1.0 - 0.999f64.powi(t));
            let prev = x;
            x -= 1e-3 * mh / (vh.sqrt() + 1e-8);
            assert!(((prev - x) - 1e-3).abs() < 1e-7);
        }
        assert!((p.head.bias.data[1] - x).abs() < 1e-12);
    }

    #[test]
    fn nan_gradient_names_the_block() {
        let (mut p, mut s, cfg) = setup();
        let before = p.clone();
        let mut g = p.zeros_like();
        g.temporal_blocks[1].fc1.weight.data[3] = f64::NAN;
        match adam_step(&mut p, &g, &mut s, 1e-3, &cfg) {
            Err(PipelineError::NonFinite { block, .. }) => assert_eq!(block, "temporal.blocks.1.fc1.weight"),
            other => panic!("{other:?}"),
        }
        assert_eq!(p, before);
        assert_eq!(s.step, 0);
    }

    #[test]
    fn deterministic() {
        let (mut a, mut sa, cfg) = setup();
        let (mut b, mut sb, _) = setup();
        let mut g = a.zeros_like();
        g.proj_fc1
            .weight
            .data
            .iter_mut()
            .enumerate()
            .for_each(|(i, v)| *v = (i as f64).sin());
        for _ in 0..5 {
            adam_step(&mut a, &g, &mut sa, 1e-3, &cfg).unwrap();
            adam_step(&mut b, &g, &mut sb, 1e-3, &cfg).unwrap();
        }
        assert_eq!(a, b);
    }
}
