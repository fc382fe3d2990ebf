use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::ModelConfig;
use crate::nn::{join, Block, LayerNorm, Linear, ParamGroup, Tensor};
use crate::scalar::Scalar;

pub const INIT_STD: f64 = 0.02;

/// Every learnable tensor of the network. Gradients and optimizer moments use
/// the same type.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams<T> {
    pub config: ModelConfig,
    /// `[patch_dim, d]`
    pub patch_embed: Linear<T>,
    pub spatial_cls: Tensor<T>,
    /// `[num_patches + 1, d]`, row 0 belongs to the spatial CLS token.
    pub spatial_pos: Tensor<T>,
    pub spatial_blocks: Vec<Block<T>>,
    pub spatial_norm: LayerNorm<T>,
    pub temporal_cls: Tensor<T>,
    /// `[clip_len + 1, d]`, row 0 belongs to the temporal CLS token.
    pub temporal_pos: Tensor<T>,
    pub temporal_blocks: Vec<Block<T>>,
    pub head: Linear<T>,
    pub proj_fc1: Linear<T>,
    pub proj_fc2: Linear<T>,
}

impl<T: Scalar> ModelParams<T> {
    /// Truncated normal (std 0.02) weights; zero biases, CLS tokens and
    /// position tables; unit LayerNorm gains.
    pub fn init(config: &ModelConfig, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let d = config.embed_dim;
        let hidden = config.mlp_hidden();
        let patch_embed = Linear::init(config.patch_dim(), d, INIT_STD, &mut rng);
        let spatial_blocks = (0..config.spatial_depth)
            .map(|_| Block::init(d, hidden, INIT_STD, &mut rng))
            .collect();
        let temporal_blocks = (0..config.temporal_layers)
            .map(|_| Block::init(d, hidden, INIT_STD, &mut rng))
            .collect();
        let head = Linear::init(d, config.num_classes, INIT_STD, &mut rng);
        let proj_fc1 = Linear::init(d, config.proj_hidden, INIT_STD, &mut rng);
        let proj_fc2 = Linear::init(config.proj_hidden, config.proj_dim, INIT_STD, &mut rng);
        Self {
            config: config.clone(),
            patch_embed,
            spatial_cls: Tensor::zeros(&[d]),
            spatial_pos: Tensor::zeros(&[config.num_patches() + 1, d]),
            spatial_blocks,
            spatial_norm: LayerNorm::new(d),
            temporal_cls: Tensor::zeros(&[d]),
            temporal_pos: Tensor::zeros(&[config.clip_len + 1, d]),
            temporal_blocks,
            head,
            proj_fc1,
            proj_fc2,
        }
    }

    /// All-zero tensors with the layout of `config` (gradient accumulators).
    pub fn zeros(config: &ModelConfig) -> Self {
        let d = config.embed_dim;
        let hidden = config.mlp_hidden();
        Self {
            config: config.clone(),
            patch_embed: Linear::zeros(config.patch_dim(), d),
            spatial_cls: Tensor::zeros(&[d]),
            spatial_pos: Tensor::zeros(&[config.num_patches() + 1, d]),
            spatial_blocks: (0..config.spatial_depth).map(|_| Block::zeros(d, hidden)).collect(),
            spatial_norm: LayerNorm::zeros(d),
            temporal_cls: Tensor::zeros(&[d]),
            temporal_pos: Tensor::zeros(&[config.clip_len + 1, d]),
            temporal_blocks: (0..config.temporal_layers).map(|_| Block::zeros(d, hidden)).collect(),
            head: Linear::zeros(d, config.num_classes),
            proj_fc1: Linear::zeros(d, config.proj_hidden),
            proj_fc2: Linear::zeros(config.proj_hidden, config.proj_dim),
        }
    }

    pub fn zeros_like(&self) -> Self {
        Self::zeros(&self.config)
    }

    pub fn named(&self) -> Vec<(String, &Tensor<T>)> {
        let mut out = Vec::new();
        self.collect("", &mut out);
        out
    }

    pub fn named_mut(&mut self) -> Vec<(String, &mut Tensor<T>)> {
        let mut out = Vec::new();
        self.collect_mut("", &mut out);
        out
    }

    pub fn num_scalars(&self) -> usize {
        self.named().iter().map(|(_, t)| t.numel()).sum()
    }

    pub fn add_assign(&mut self, other: &Self) {
        for ((_, a), (_, b)) in self.named_mut().into_iter().zip(other.named()) {
            a.add_assign(b);
        }
    }

    pub fn scale(&mut self, s: T) {
        for (_, t) in self.named_mut() {
            t.scale(s);
        }
    }

    /// First tensor containing a NaN or infinity, by name.
    pub fn first_non_finite(&self) -> Option<String> {
        self.named().into_iter().find(|(_, t)| !t.is_finite()).map(|(n, _)| n)
    }

    pub fn cast<U: Scalar>(&self) -> ModelParams<U> {
        let mut out = ModelParams::<U>::zeros(&self.config);
        for ((_, dst), (_, src)) in out.named_mut().into_iter().zip(self.named()) {
            *dst = src.cast();
        }
        out
    }
}

impl<T> ParamGroup<T> for ModelParams<T> {
    fn collect<'a>(&'a self, prefix: &str, out: &mut Vec<(String, &'a Tensor<T>)>) {
        self.patch_embed.collect(&join(prefix, "spatial.patch_embed"), out);
        self.spatial_cls.collect(&join(prefix, "spatial.cls"), out);
        self.spatial_pos.collect(&join(prefix, "spatial.pos"), out);
        for (i, b) in self.spatial_blocks.iter().enumerate() {
            b.collect(&join(prefix, &format!("spatial.blocks.{i}")), out);
        }
        self.spatial_norm.collect(&join(prefix, "spatial.norm"), out);
        self.temporal_cls.collect(&join(prefix, "temporal.cls"), out);
        self.temporal_pos.collect(&join(prefix, "temporal.pos"), out);
        for (i, b) in self.temporal_blocks.iter().enumerate() {
            b.collect(&join(prefix, &format!("temporal.blocks.{i}")), out);
        }
        self.head.collect(&join(prefix, "head"), out);
        self.proj_fc1.collect(&join(prefix, "proj.fc1"), out);
        self.proj_fc2.collect(&join(prefix, "proj.fc2"), out);
    }

    fn collect_mut<'a>(&'a mut self, prefix: &str, out: &mut Vec<(String, &'a mut Tensor<T>)>) {
        self.patch_embed.collect_mut(&join(prefix, "spatial.patch_embed"), out);
        self.spatial_cls.collect_mut(&join(prefix, "spatial.cls"), out);
        self.spatial_pos.collect_mut(&join(prefix, "spatial.pos"), out);
        for (i, b) in self.spatial_blocks.iter_mut().enumerate() {
            b.collect_mut(&join(prefix, &format!("spatial.blocks.{i}")), out);
        }
        self.spatial_norm.collect_mut(&join(prefix, "spatial.norm"), out);
        self.temporal_cls.collect_mut(&join(prefix, "temporal.cls"), out);
        self.temporal_pos.collect_mut(&join(prefix, "temporal.pos"), out);
        for (i, b) in self.temporal_blocks.iter_mut().enumerate() {
            b.collect_mut(&join(prefix, &format!("temporal.blocks.{i}")), out);
        }
        self.head.collect_mut(&join(prefix, "head"), out);
        self.proj_fc1.collect_mut(&join(prefix, "proj.fc1"), out);
        self.proj_fc2.collect_mut(&join(prefix, "proj.fc2"), out);
    }
}
