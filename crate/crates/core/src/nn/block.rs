use rand::Rng;

use super::attention::{Attention, AttentionCache, AttentionPattern};
use super::layers::{
    apply_mask, dropout_mask, gelu, gelu_backward, join, LayerNorm, LayerNormCache, Linear, ParamGroup,
};
use super::tensor::Tensor;
use crate::scalar::Scalar;

/// Pre-norm transformer block:
/// `h = x + drop(attn(ln1(x)))`, `y = h + drop(fc2(gelu(fc1(ln2(h)))))`.
#[derive(Debug, Clone, PartialEq)]
pub struct Block<T> {
    pub norm1: LayerNorm<T>,
    pub attn: Attention<T>,
    pub norm2: LayerNorm<T>,
    pub fc1: Linear<T>,
    pub fc2: Linear<T>,
}

pub struct BlockCache<T> {
    ln1: LayerNormCache<T>,
    attn: AttentionCache<T>,
    attn_mask: Option<Vec<T>>,
    ln2: LayerNormCache<T>,
    ln2_out: Vec<T>,
    fc1_out: Vec<T>,
    act: Vec<T>,
    mlp_mask: Option<Vec<T>>,
}

/// Dropout probability and the generator used for the masks.
pub struct Dropout<'r, R> {
    pub p: f64,
    pub rng: &'r mut R,
}

impl<T: Scalar> Block<T> {
    pub fn zeros(dim: usize, hidden: usize) -> Self {
        Self {
            norm1: LayerNorm::zeros(dim),
            attn: Attention::zeros(dim),
            norm2: LayerNorm::zeros(dim),
            fc1: Linear::zeros(dim, hidden),
            fc2: Linear::zeros(hidden, dim),
        }
    }

    pub fn init(dim: usize, hidden: usize, std: f64, rng: &mut impl Rng) -> Self {
        Self {
            norm1: LayerNorm::new(dim),
            attn: Attention::init(dim, std, rng),
            norm2: LayerNorm::new(dim),
            fc1: Linear::init(dim, hidden, std, rng),
            fc2: Linear::init(hidden, dim, std, rng),
        }
    }

    pub fn forward<R: Rng>(
        &self,
        x: &[T],
        tokens: usize,
        heads: usize,
        pattern: AttentionPattern,
        mut dropout: Option<&mut Dropout<'_, R>>,
    ) -> (Vec<T>, BlockCache<T>) {
        let (n1, ln1) = self.norm1.forward(x, tokens);
        let (mut a, attn) = self.attn.forward(&n1, tokens, heads, pattern);
        let attn_mask = dropout.as_mut().filter(|d| d.p > 0.0).map(|d| {
            let m = dropout_mask(a.len(), d.p, d.rng);
            apply_mask(&mut a, &m);
            m
        });
        let h: Vec<T> = x.iter().zip(&a).map(|(&u, &v)| u + v).collect();
        let (ln2_out, ln2) = self.norm2.forward(&h, tokens);
        let fc1_out = self.fc1.forward(&ln2_out, tokens);
        let act = gelu(&fc1_out);
        let mut m = self.fc2.forward(&act, tokens);
        let mlp_mask = dropout.as_mut().filter(|d| d.p > 0.0).map(|d| {
            let mask = dropout_mask(m.len(), d.p, d.rng);
            apply_mask(&mut m, &mask);
            mask
        });
        let y = h.iter().zip(&m).map(|(&u, &v)| u + v).collect();
        (
            y,
            BlockCache {
                ln1,
                attn,
                attn_mask,
                ln2,
                ln2_out,
                fc1_out,
                act,
                mlp_mask,
            },
        )
    }

    pub fn backward(
        &self,
        cache: &BlockCache<T>,
        dy: &[T],
        tokens: usize,
        heads: usize,
        grad: &mut Block<T>,
    ) -> Vec<T> {
        let mut dm = dy.to_vec();
        if let Some(mask) = &cache.mlp_mask {
            apply_mask(&mut dm, mask);
        }
        let dact = self
            .fc2
            .backward(&cache.act, &dm, tokens, &mut grad.fc2, true)
            .expect("input gradient");
        let dfc1 = gelu_backward(&cache.fc1_out, &dact);
        let dln2 = self
            .fc1
            .backward(&cache.ln2_out, &dfc1, tokens, &mut grad.fc1, true)
            .expect("input gradient");
        let mut dh = self.norm2.backward(&cache.ln2, &dln2, tokens, &mut grad.norm2);
        for (a, &b) in dh.iter_mut().zip(dy) {
            *a += b;
        }
        let mut da = dh.clone();
        if let Some(mask) = &cache.attn_mask {
            apply_mask(&mut da, mask);
        }
        let dn1 = self.attn.backward(&cache.attn, &da, tokens, heads, &mut grad.attn);
        let mut dx = self.norm1.backward(&cache.ln1, &dn1, tokens, &mut grad.norm1);
        for (a, &b) in dx.iter_mut().zip(&dh) {
            *a += b;
        }
        dx
    }
}

impl<T> ParamGroup<T> for Block<T> {
    fn collect<'a>(&'a self, prefix: &str, out: &mut Vec<(String, &'a Tensor<T>)>) {
        self.norm1.collect(&join(prefix, "norm1"), out);
        self.attn.collect(&join(prefix, "attn"), out);
        self.norm2.collect(&join(prefix, "norm2"), out);
        self.fc1.collect(&join(prefix, "fc1"), out);
        self.fc2.collect(&join(prefix, "fc2"), out);
    }

    fn collect_mut<'a>(&'a mut self, prefix: &str, out: &mut Vec<(String, &'a mut Tensor<T>)>) {
        self.norm1.collect_mut(&join(prefix, "norm1"), out);
        self.attn.collect_mut(&join(prefix, "attn"), out);
        self.norm2.collect_mut(&join(prefix, "norm2"), out);
        self.fc1.collect_mut(&join(prefix, "fc1"), out);
        self.fc2.collect_mut(&join(prefix, "fc2"), out);
    }
}
