#![allow(dead_code)]

use eventransact::frames::{Clip, EventFrame};
use eventransact::nn::{Block, LayerNorm, Linear};
use eventransact::vtn_model::{ModelConfig, ModelParams, Rows};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Replaces every tensor with N(0, std) draws; LayerNorm gains centred on 1.
pub fn randomize(params: &mut ModelParams<f64>, std: f64, seed: u64) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for (name, t) in params.named_mut() {
        let centre = if name.ends_with("gamma") { 1.0 } else { 0.0 };
        for v in t.data.iter_mut() {
            *v = centre + std * normal(&mut rng);
        }
    }
}

pub fn normal(rng: &mut ChaCha8Rng) -> f64 {
    let u1: f64 = rng.random_range(1e-12..1.0);
    let u2: f64 = rng.random();
    (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
}

pub fn random_params(cfg: &ModelConfig, std: f64, seed: u64) -> ModelParams<f64> {
    let mut p = ModelParams::<f64>::zeros(cfg);
    randomize(&mut p, std, seed);
    p
}

pub fn random_frame(cfg: &ModelConfig, index: usize, rng: &mut ChaCha8Rng) -> EventFrame<f64> {
    let mut f = EventFrame::zeros(cfg.image_size, cfg.in_channels, index, 0, 1);
    for v in f.data.iter_mut() {
        *v = rng.random();
    }
    f
}

pub fn random_clip(cfg: &ModelConfig, n: usize, seed: u64) -> Clip<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Clip {
        frames: (0..n).map(|i| random_frame(cfg, i, &mut rng)).collect(),
        start_index: 0,
    }
}

pub fn random_rows(rows: usize, dim: usize, seed: u64) -> Rows<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Rows::new(rows, dim, (0..rows * dim).map(|_| normal(&mut rng)).collect())
}

fn linear(l: &Linear<f64>, x: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let (din, dout) = (l.weight.shape[0], l.weight.shape[1]);
    x.iter()
        .map(|row| {
            (0..dout)
                .map(|j| l.bias.data[j] + (0..din).map(|i| row[i] * l.weight.data[i * dout + j]).sum::<f64>())
                .collect()
        })
        .collect()
}

fn layer_norm(ln: &LayerNorm<f64>, x: &[Vec<f64>]) -> Vec<Vec<f64>> {
    x.iter()
        .map(|row| {
            let n = row.len() as f64;
            let mean = row.iter().sum::<f64>() / n;
            let var = row.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
            row.iter()
                .enumerate()
                .map(|(j, v)| (v - mean) / (var + 1e-5).sqrt() * ln.gamma.data[j] + ln.beta.data[j])
                .collect()
        })
        .collect()
}

fn gelu(v: f64) -> f64 {
    0.5 * v * (1.0 + ((2.0 / std::f64::consts::PI).sqrt() * (v + 0.044715 * v.powi(3))).tanh())
}

/// Multi-head attention where `allowed(q, k)` decides visibility.
pub fn attention(
    block: &Block<f64>,
    x: &[Vec<f64>],
    heads: usize,
    allowed: &dyn Fn(usize, usize) -> bool,
) -> Vec<Vec<f64>> {
    let d = x[0].len();
    let dh = d / heads;
    let qkv = linear(&block.attn.qkv, x);
    let t = x.len();
    let mut ctx = vec![vec![0.0; d]; t];
    for h in 0..heads {
        for q in 0..t {
            let scores: Vec<Option<f64>> = (0..t)
                .map(|k| {
                    allowed(q, k).then(|| {
                        (0..dh)
                            .map(|i| qkv[q][h * dh + i] * qkv[k][d + h * dh + i])
                            .sum::<f64>()
                            / (dh as f64).sqrt()
                    })
                })
                .collect();
            let max = scores.iter().flatten().cloned().fold(f64::NEG_INFINITY, f64::max);
            let z: f64 = scores.iter().flatten().map(|s| (s - max).exp()).sum();
            for (k, s) in scores.iter().enumerate() {
                if let Some(s) = s {
                    let p = (s - max).exp() / z;
                    for i in 0..dh {
                        ctx[q][h * dh + i] += p * qkv[k][2 * d + h * dh + i];
                    }
                }
            }
        }
    }
    linear(&block.attn.proj, &ctx)
}

pub fn block(
    block: &Block<f64>,
    x: &[Vec<f64>],
    heads: usize,
    allowed: &dyn Fn(usize, usize) -> bool,
) -> Vec<Vec<f64>> {
    let a = attention(block, &layer_norm(&block.norm1, x), heads, allowed);
    let h: Vec<Vec<f64>> = x
        .iter()
        .zip(&a)
        .map(|(u, v)| u.iter().zip(v).map(|(p, q)| p + q).collect())
        .collect();
    let hidden: Vec<Vec<f64>> = linear(&block.fc1, &layer_norm(&block.norm2, &h))
        .into_iter()
        .map(|r| r.into_iter().map(gelu).collect())
        .collect();
    let m = linear(&block.fc2, &hidden);
    h.iter()
        .zip(&m)
        .map(|(u, v)| u.iter().zip(v).map(|(p, q)| p + q).collect())
        .collect()
}

/// Temporal encoder with every token attending to every token.
pub fn dense_temporal(params: &ModelParams<f64>, emb: &Rows<f64>) -> Vec<f64> {
    let d = emb.dim;
    let pos = |t: usize| &params.temporal_pos.data[t * d..(t + 1) * d];
    let mut x = vec![params
        .temporal_cls
        .data
        .iter()
        .zip(pos(0))
        .map(|(a, b)| a + b)
        .collect::<Vec<f64>>()];
    for t in 0..emb.rows {
        x.push(emb.row(t).iter().zip(pos(t + 1)).map(|(a, b)| a + b).collect());
    }
    for b in &params.temporal_blocks {
        x = block(b, &x, params.config.temporal_heads, &|_, _| true);
    }
    x.swap_remove(0)
}

/// Writes `<trial>.aedat` with `per_segment` events spread over each segment
/// and the matching `<trial>_labels.csv`.
pub fn write_dvs_trial(root: &std::path::Path, trial: &str, segments: &[(u32, u64, u64)], per_segment: u64) {
    let mut b = Vec::new();
    b.extend_from_slice(b"#!AER-DAT3.1\r\n#Format: RAW\r\n#Source 1: DVS128\r\n#!END-HEADER\r\n");
    let mut payload = Vec::new();
    let mut count = 0i32;
    for &(class, t0, t1) in segments {
        for k in 0..per_segment {
            let t = t0 + (t1 - t0) * k / per_segment;
            let (x, y) = ((k * 7 + class as u64) % 128, (k * 13) % 128);
            let data = ((x as u32) << 17) | ((y as u32) << 2) | (((k % 2) as u32) << 1) | 1;
            payload.extend_from_slice(&data.to_le_bytes());
            payload.extend_from_slice(&(t as i32).to_le_bytes());
            count += 1;
        }
    }
    for v in [1i16, 1] {
        b.extend_from_slice(&v.to_le_bytes());
    }
    for v in [8i32, 4, 0, count, count, count] {
        b.extend_from_slice(&v.to_le_bytes());
    }
    b.extend_from_slice(&payload);
    std::fs::write(root.join(format!("{trial}.aedat")), b).unwrap();
    let mut csv = String::from("class,startTime_usec,endTime_usec\n");
    for &(class, t0, t1) in segments {
        csv.push_str(&format!("{class},{t0},{t1}\n"));
    }
    std::fs::write(root.join(format!("{trial}_labels.csv")), csv).unwrap();
}
