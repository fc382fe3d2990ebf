use rand::Rng;

use super::layers::{join, Linear, ParamGroup};
use super::ops::{axpy, dot};
use super::tensor::Tensor;
use crate::scalar::{c, Scalar};

/// Which keys each query may attend to.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AttentionPattern {
    Full,
    /// Token 0 is global in both directions; every other token `t` sees
    /// tokens `t'` with `|t - t'| <= radius` plus token 0.
    Window {
        radius: usize,
    },
}

impl AttentionPattern {
    pub fn allows(&self, query: usize, key: usize) -> bool {
        match *self {
            AttentionPattern::Full => true,
            AttentionPattern::Window { radius } => query == 0 || key == 0 || query.abs_diff(key) <= radius,
        }
    }

    /// Allowed keys of `query` in ascending order.
    pub fn keys(&self, query: usize, tokens: usize) -> Vec<usize> {
        match *self {
            AttentionPattern::Full => (0..tokens).collect(),
            AttentionPattern::Window { .. } if query == 0 => (0..tokens).collect(),
            AttentionPattern::Window { radius } => {
                let lo = query.saturating_sub(radius).max(1);
                let hi = (query + radius).min(tokens - 1);
                std::iter::once(0).chain(lo..=hi).collect()
            }
        }
    }
}

/// Multi-head self-attention with a fused `[d, 3d]` query/key/value map.
#[derive(Debug, Clone, PartialEq)]
pub struct Attention<T> {
    pub qkv: Linear<T>,
    pub proj: Linear<T>,
}

pub struct AttentionCache<T> {
    x: Vec<T>,
    qkv: Vec<T>,
    keys: Vec<Vec<usize>>,
    /// `probs[h][q][j]` aligned with `keys[q]`.
    probs: Vec<Vec<Vec<T>>>,
    ctx: Vec<T>,
}

impl<T: Scalar> Attention<T> {
    pub fn zeros(dim: usize) -> Self {
        Self {
            qkv: Linear::zeros(dim, 3 * dim),
            proj: Linear::zeros(dim, dim),
        }
    }

    pub fn init(dim: usize, std: f64, rng: &mut impl Rng) -> Self {
        Self {
            qkv: Linear::init(dim, 3 * dim, std, rng),
            proj: Linear::init(dim, dim, std, rng),
        }
    }

    pub fn forward(
        &self,
        x: &[T],
        tokens: usize,
        heads: usize,
        pattern: AttentionPattern,
    ) -> (Vec<T>, AttentionCache<T>) {
        let d = self.proj.input_dim();
        let dh = d / heads;
        let scale = T::one() / c::<T>(dh as f64).sqrt();
        let qkv = self.qkv.forward(x, tokens);
        let keys: Vec<Vec<usize>> = (0..tokens).map(|q| pattern.keys(q, tokens)).collect();
        let mut ctx = vec![T::zero(); tokens * d];
        let mut probs = Vec::with_capacity(heads);
        for h in 0..heads {
            let off = h * dh;
            let mut head_probs = Vec::with_capacity(tokens);
            for q in 0..tokens {
                let qv = &qkv[q * 3 * d + off..q * 3 * d + off + dh];
                let mut scores: Vec<T> = keys[q]
                    .iter()
                    .map(|&k| dot(qv, &qkv[k * 3 * d + d + off..k * 3 * d + d + off + dh]) * scale)
                    .collect();
                let max = scores.iter().copied().fold(T::neg_infinity(), T::max);
                let mut sum = T::zero();
                for s in scores.iter_mut() {
                    *s = (*s - max).exp();
                    sum += *s;
                }
                for s in scores.iter_mut() {
                    *s /= sum;
                }
                let out = &mut ctx[q * d + off..q * d + off + dh];
                for (&k, &p) in keys[q].iter().zip(&scores) {
                    axpy(p, &qkv[k * 3 * d + 2 * d + off..k * 3 * d + 2 * d + off + dh], out);
                }
                head_probs.push(scores);
            }
            probs.push(head_probs);
        }
        let y = self.proj.forward(&ctx, tokens);
        (
            y,
            AttentionCache {
                x: x.to_vec(),
                qkv,
                keys,
                probs,
                ctx,
            },
        )
    }

    pub fn backward(
        &self,
        cache: &AttentionCache<T>,
        dy: &[T],
        tokens: usize,
        heads: usize,
        grad: &mut Attention<T>,
    ) -> Vec<T> {
        let d = self.proj.input_dim();
        let dh = d / heads;
        let scale = T::one() / c::<T>(dh as f64).sqrt();
        let dctx = self
            .proj
            .backward(&cache.ctx, dy, tokens, &mut grad.proj, true)
            .expect("input gradient requested");
        let qkv = &cache.qkv;
        let mut dqkv = vec![T::zero(); tokens * 3 * d];
        for h in 0..heads {
            let off = h * dh;
            for q in 0..tokens {
                let p = &cache.probs[h][q];
                let keys = &cache.keys[q];
                let dout = &dctx[q * d + off..q * d + off + dh];
                // dp_j = dout . v_j ; dv_j += p_j dout
                let dp: Vec<T> = keys
                    .iter()
                    .map(|&k| dot(dout, &qkv[k * 3 * d + 2 * d + off..k * 3 * d + 2 * d + off + dh]))
                    .collect();
                for (&k, &pj) in keys.iter().zip(p) {
                    axpy(
                        pj,
                        dout,
                        &mut dqkv[k * 3 * d + 2 * d + off..k * 3 * d + 2 * d + off + dh],
                    );
                }
                let inner: T = p.iter().zip(&dp).map(|(&a, &b)| a * b).sum();
                for (j, &k) in keys.iter().enumerate() {
                    let ds = p[j] * (dp[j] - inner) * scale;
                    if ds == T::zero() {
                        continue;
                    }
                    let (qs, ks) = (q * 3 * d + off, k * 3 * d + d + off);
                    // dq += ds k ; dk += ds q
                    for i in 0..dh {
                        let kv = qkv[ks + i];
                        let qv = qkv[qs + i];
                        dqkv[qs + i] += ds * kv;
                        dqkv[ks + i] += ds * qv;
                    }
                }
            }
        }
        self.qkv
            .backward(&cache.x, &dqkv, tokens, &mut grad.qkv, true)
            .expect("input gradient requested")
    }
}

impl<T> ParamGroup<T> for Attention<T> {
    fn collect<'a>(&'a self, prefix: &str, out: &mut Vec<(String, &'a Tensor<T>)>) {
        self.qkv.collect(&join(prefix, "qkv"), out);
        self.proj.collect(&join(prefix, "proj"), out);
    }

    fn collect_mut<'a>(&'a mut self, prefix: &str, out: &mut Vec<(String, &'a mut Tensor<T>)>) {
        self.qkv.collect_mut(&join(prefix, "qkv"), out);
        self.proj.collect_mut(&join(prefix, "proj"), out);
    }
}
