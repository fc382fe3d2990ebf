//! Central finite-difference check of the analytic gradient of
//! `total_loss(forward(params, view1, view2))` with respect to every
//! parameter tensor.

use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::frames::{Clip, EventFrame};
use crate::losses::{total_loss, total_loss_with_grad, LossConfig, LossError};
use crate::vtn_model::{forward_train, ForwardOptions, Mode, ModelConfig, ModelError, ModelParams};

#[derive(Debug, thiserror::Error)]
pub enum GradcheckError {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Loss(#[from] LossError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GradcheckConfig {
    pub model: ModelConfig,
    pub loss: LossConfig,
    pub step: f64,
    pub seed: u64,
    /// Std of the random parameter draw; larger than the training init so
    /// that every block receives a well-conditioned gradient.
    pub param_std: f64,
    pub logits_from_both_views: bool,
}

impl Default for GradcheckConfig {
    fn default() -> Self {
        Self {
            model: ModelConfig::tiny(),
            loss: LossConfig::default(),
            step: 1e-5,
            seed: 0,
            param_std: 0.3,
            logits_from_both_views: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BlockError {
    pub name: String,
    pub numel: usize,
    /// `|analytic - numeric| / max(|analytic|, |numeric|)` in the 2-norm.
    pub rel_err: f64,
    pub max_abs_diff: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GradcheckReport {
    pub blocks: Vec<BlockError>,
    pub max_rel_err: f64,
    pub worst_block: String,
    pub loss_evaluations: usize,
    pub wall_s: f64,
}

fn random_params(cfg: &GradcheckConfig, rng: &mut ChaCha8Rng) -> ModelParams<f64> {
    let normal = Normal::new(0.0, cfg.param_std).expect("finite std");
    let mut p = ModelParams::<f64>::zeros(&cfg.model);
    for (name, t) in p.named_mut() {
        let centre = if name.ends_with("gamma") { 1.0 } else { 0.0 };
        for v in t.data.iter_mut() {
            *v = centre + normal.sample(rng);
        }
    }
    p
}

fn random_clip(cfg: &ModelConfig, rng: &mut ChaCha8Rng) -> Clip<f64> {
    let frames = (0..cfg.clip_len)
        .map(|i| {
            let mut f = EventFrame::zeros(cfg.image_size, cfg.in_channels, i, 0, 1);
            for v in f.data.iter_mut() {
                *v = rng.random();
            }
            f
        })
        .collect();
    Clip { frames, start_index: 0 }
}

fn norm(v: impl Iterator<Item = f64>) -> f64 {
    v.map(|x| x * x).sum::<f64>().sqrt()
}

pub fn run(cfg: &GradcheckConfig) -> Result<GradcheckReport, GradcheckError> {
    cfg.model.validate()?;
    cfg.loss.validate()?;
    let started = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut params = random_params(cfg, &mut rng);
    let view1 = random_clip(&cfg.model, &mut rng);
    let view2 = random_clip(&cfg.model, &mut rng);
    let label = rng.random_range(0..cfg.model.num_classes);
    let options = ForwardOptions {
        logits_from_both_views: cfg.logits_from_both_views,
    };

    let (out, tape) = forward_train(&params, &view1, &view2, Mode::Train, options, None)?;
    let p1 = out.proj1.as_ref().expect("train mode projections");
    let p2 = out.proj2.as_ref().expect("train mode projections");
    let (_, g) = total_loss_with_grad(&out.logits, label, p1, p2, &cfg.loss)?;
    let analytic = tape.backward(&params, &g.dlogits, &g.dproj1, &g.dproj2);

    let loss_at = |p: &ModelParams<f64>| -> Result<f64, GradcheckError> {
        let (o, _) = forward_train(p, &view1, &view2, Mode::Train, options, None)?;
        let parts = total_loss(
            &o.logits,
            label,
            o.proj1.as_ref().expect("projections"),
            o.proj2.as_ref().expect("projections"),
            &cfg.loss,
        )?;
        Ok(parts.total)
    };

    let h = cfg.step;
    let block_count = params.named().len();
    let mut blocks = Vec::with_capacity(block_count);
    let mut evaluations = 0;
    for b in 0..block_count {
        let numel = params.named()[b].1.numel();
        let mut numeric = Vec::with_capacity(numel);
        for i in 0..numel {
            let orig = params.named()[b].1.data[i];
            params.named_mut()[b].1.data[i] = orig + h;
            let plus = loss_at(&params)?;
            params.named_mut()[b].1.data[i] = orig - h;
            let minus = loss_at(&params)?;
            params.named_mut()[b].1.data[i] = orig;
            numeric.push((plus - minus) / (2.0 * h));
            evaluations += 2;
        }
        let named = analytic.named();
        let (name, ana) = &named[b];
        let diff = norm(ana.data.iter().zip(&numeric).map(|(a, n)| a - n));
        let scale = norm(ana.data.iter().copied()).max(norm(numeric.iter().copied()));
        let rel_err = if scale > 0.0 { diff / scale } else { 0.0 };
        let max_abs_diff = ana
            .data
            .iter()
            .zip(&numeric)
            .map(|(a, n)| (a - n).abs())
            .fold(0.0, f64::max);
        blocks.push(BlockError {
            name: name.clone(),
            numel,
            rel_err,
            max_abs_diff,
        });
    }
    let worst = blocks
        .iter()
        .max_by(|a, b| a.rel_err.total_cmp(&b.rel_err))
        .expect("at least one block");
    Ok(GradcheckReport {
        max_rel_err: worst.rel_err,
        worst_block: worst.name.clone(),
        blocks: blocks.clone(),
        loss_evaluations: evaluations,
        wall_s: started.elapsed().as_secs_f64(),
    })
}
