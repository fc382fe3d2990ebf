//! Forward and backward passes of the spatial encoder, windowed temporal
//! encoder, classification head and projection head.

use rand_chacha::ChaCha8Rng;

use super::{ModelError, ModelParams, Result};
use crate::frames::{Clip, EventFrame};
use crate::nn::{gelu, gelu_backward, AttentionPattern, BlockCache, Dropout, LayerNormCache};
use crate::scalar::Scalar;

/// `rows x dim` row-major matrix of per-frame vectors.
#[derive(Debug, Clone, PartialEq)]
pub struct Rows<T> {
    pub rows: usize,
    pub dim: usize,
    pub data: Vec<T>,
}

impl<T: Scalar> Rows<T> {
    pub fn new(rows: usize, dim: usize, data: Vec<T>) -> Self {
        assert_eq!(rows * dim, data.len(), "rows x dim mismatch");
        Self { rows, dim, data }
    }

    pub fn row(&self, i: usize) -> &[T] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }
}

/// Output of the spatial encoder, one `embed_dim` vector per frame.
pub type EmbeddingSequence<T> = Rows<T>;
/// Per-frame projections, `proj_dim` wide, not normalized.
pub type ProjectionSet<T> = Rows<T>;
pub type Logits<T> = Vec<T>;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Train,
    Eval,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct ForwardOptions {
    /// Average the logits of both views instead of using view 1 only.
    pub logits_from_both_views: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ForwardOutput<T> {
    pub logits: Logits<T>,
    pub proj1: Option<ProjectionSet<T>>,
    pub proj2: Option<ProjectionSet<T>>,
}

type Drop<'a, 'r> = Option<&'a mut Dropout<'r, ChaCha8Rng>>;

fn check_frame<T>(params: &ModelParams<T>, f: &EventFrame<T>) -> Result<()> {
    let c = &params.config;
    if f.size != c.image_size || f.channels != c.in_channels || f.data.len() != f.size * f.size * f.channels {
        return Err(ModelError::Shape(format!(
            "frame {}x{}x{} does not match model input {}x{}x{}",
            f.size, f.size, f.channels, c.image_size, c.image_size, c.in_channels
        )));
    }
    Ok(())
}

/// `[num_patches, patch*patch*channels]` with patches in row-major grid order
/// and each patch flattened as `[dy][dx][channel]`.
fn patchify<T: Scalar>(frame: &EventFrame<T>, patch: usize) -> Vec<T> {
    let (s, ch) = (frame.size, frame.channels);
    let g = s / patch;
    let pd = patch * patch * ch;
    let mut out = vec![T::zero(); g * g * pd];
    for pr in 0..g {
        for pc in 0..g {
            let base = (pr * g + pc) * pd;
            for dy in 0..patch {
                let src = ((pr * patch + dy) * s + pc * patch) * ch;
                let dst = base + dy * patch * ch;
                out[dst..dst + patch * ch].copy_from_slice(&frame.data[src..src + patch * ch]);
            }
        }
    }
    out
}

pub(crate) struct SpatialTape<T> {
    patches: Vec<T>,
    blocks: Vec<BlockCache<T>>,
    norm: LayerNormCache<T>,
}

fn spatial_frame_forward<T: Scalar>(
    params: &ModelParams<T>,
    frame: &EventFrame<T>,
    mut dropout: Drop<'_, '_>,
) -> (Vec<T>, SpatialTape<T>) {
    let cfg = &params.config;
    let d = cfg.embed_dim;
    let np = cfg.num_patches();
    let tokens = np + 1;
    let patches = patchify(frame, cfg.patch_size);
    let emb = params.patch_embed.forward(&patches, np);
    let pos = &params.spatial_pos.data;
    let mut x = vec![T::zero(); tokens * d];
    for j in 0..d {
        x[j] = params.spatial_cls.data[j] + pos[j];
    }
    for i in 0..np {
        for j in 0..d {
            x[(i + 1) * d + j] = emb[i * d + j] + pos[(i + 1) * d + j];
        }
    }
    let mut blocks = Vec::with_capacity(params.spatial_blocks.len());
    for b in &params.spatial_blocks {
        let (y, cache) = b.forward(
            &x,
            tokens,
            cfg.spatial_heads,
            AttentionPattern::Full,
            dropout.as_deref_mut(),
        );
        blocks.push(cache);
        x = y;
    }
    let (out, norm) = params.spatial_norm.forward(&x[..d], 1);
    (out, SpatialTape { patches, blocks, norm })
}

fn spatial_frame_backward<T: Scalar>(
    params: &ModelParams<T>,
    tape: &SpatialTape<T>,
    dout: &[T],
    grads: &mut ModelParams<T>,
) {
    let cfg = &params.config;
    let d = cfg.embed_dim;
    let np = cfg.num_patches();
    let tokens = np + 1;
    let dcls = params
        .spatial_norm
        .backward(&tape.norm, dout, 1, &mut grads.spatial_norm);
    let mut dx = vec![T::zero(); tokens * d];
    dx[..d].copy_from_slice(&dcls);
    for (b, (cache, g)) in params
        .spatial_blocks
        .iter()
        .zip(tape.blocks.iter().zip(grads.spatial_blocks.iter_mut()))
        .rev()
    {
        dx = b.backward(cache, &dx, tokens, cfg.spatial_heads, g);
    }
    for (g, &v) in grads.spatial_cls.data.iter_mut().zip(&dx[..d]) {
        *g += v;
    }
    for (g, &v) in grads.spatial_pos.data.iter_mut().zip(&dx) {
        *g += v;
    }
    params
        .patch_embed
        .backward(&tape.patches, &dx[d..], np, &mut grads.patch_embed, false);
}

pub(crate) struct TemporalTape<T> {
    blocks: Vec<BlockCache<T>>,
    n: usize,
    /// Final CLS state, the head input.
    cls: Vec<T>,
}

fn temporal_pattern<T>(params: &ModelParams<T>) -> AttentionPattern {
    AttentionPattern::Window {
        radius: params.config.attention_window,
    }
}

fn check_sequence<T: Scalar>(params: &ModelParams<T>, emb: &EmbeddingSequence<T>) -> Result<()> {
    let cfg = &params.config;
    if emb.dim != cfg.embed_dim || emb.rows == 0 || emb.rows > cfg.clip_len {
        return Err(ModelError::Shape(format!(
            "temporal input {}x{} incompatible with clip_len {} and embed_dim {}",
            emb.rows, emb.dim, cfg.clip_len, cfg.embed_dim
        )));
    }
    Ok(())
}

fn temporal_forward<T: Scalar>(
    params: &ModelParams<T>,
    emb: &EmbeddingSequence<T>,
    mut dropout: Drop<'_, '_>,
) -> (Vec<T>, TemporalTape<T>) {
    let cfg = &params.config;
    let d = cfg.embed_dim;
    let n = emb.rows;
    let tokens = n + 1;
    let pos = &params.temporal_pos.data;
    let mut x = vec![T::zero(); tokens * d];
    for j in 0..d {
        x[j] = params.temporal_cls.data[j] + pos[j];
    }
    for t in 0..n {
        for j in 0..d {
            x[(t + 1) * d + j] = emb.data[t * d + j] + pos[(t + 1) * d + j];
        }
    }
    let pattern = temporal_pattern(params);
    let mut blocks = Vec::with_capacity(params.temporal_blocks.len());
    for b in &params.temporal_blocks {
        let (y, cache) = b.forward(&x, tokens, cfg.temporal_heads, pattern, dropout.as_deref_mut());
        blocks.push(cache);
        x = y;
    }
    x.truncate(d);
    (x.clone(), TemporalTape { blocks, n, cls: x })
}

fn temporal_backward<T: Scalar>(
    params: &ModelParams<T>,
    tape: &TemporalTape<T>,
    dcls: &[T],
    grads: &mut ModelParams<T>,
) -> Vec<T> {
    let cfg = &params.config;
    let d = cfg.embed_dim;
    let tokens = tape.n + 1;
    let mut dx = vec![T::zero(); tokens * d];
    dx[..d].copy_from_slice(dcls);
    for (b, (cache, g)) in params
        .temporal_blocks
        .iter()
        .zip(tape.blocks.iter().zip(grads.temporal_blocks.iter_mut()))
        .rev()
    {
        dx = b.backward(cache, &dx, tokens, cfg.temporal_heads, g);
    }
    for (g, &v) in grads.temporal_cls.data.iter_mut().zip(&dx[..d]) {
        *g += v;
    }
    for (g, &v) in grads.temporal_pos.data.iter_mut().zip(&dx) {
        *g += v;
    }
    dx.split_off(d)
}

pub(crate) struct ProjTape<T> {
    input: Vec<T>,
    pre: Vec<T>,
    act: Vec<T>,
}

fn project_forward<T: Scalar>(params: &ModelParams<T>, emb: &EmbeddingSequence<T>) -> (ProjectionSet<T>, ProjTape<T>) {
    let pre = params.proj_fc1.forward(&emb.data, emb.rows);
    let act = gelu(&pre);
    let out = params.proj_fc2.forward(&act, emb.rows);
    (
        Rows::new(emb.rows, params.config.proj_dim, out),
        ProjTape {
            input: emb.data.clone(),
            pre,
            act,
        },
    )
}

fn project_backward<T: Scalar>(
    params: &ModelParams<T>,
    tape: &ProjTape<T>,
    dout: &[T],
    rows: usize,
    grads: &mut ModelParams<T>,
) -> Vec<T> {
    let dact = params
        .proj_fc2
        .backward(&tape.act, dout, rows, &mut grads.proj_fc2, true)
        .expect("input gradient");
    let dpre = gelu_backward(&tape.pre, &dact);
    params
        .proj_fc1
        .backward(&tape.input, &dpre, rows, &mut grads.proj_fc1, true)
        .expect("input gradient")
}

/// Spatial encoder applied to each frame independently.
pub fn spatial_encode<T: Scalar>(params: &ModelParams<T>, clip: &Clip<T>) -> Result<EmbeddingSequence<T>> {
    if clip.frames.is_empty() {
        return Err(ModelError::Shape("empty clip".into()));
    }
    let d = params.config.embed_dim;
    let mut data = Vec::with_capacity(clip.frames.len() * d);
    for f in &clip.frames {
        check_frame(params, f)?;
        data.extend(spatial_frame_forward(params, f, None).0);
    }
    Ok(Rows::new(clip.frames.len(), d, data))
}

/// Final state of the temporal CLS token.
pub fn temporal_encode<T: Scalar>(params: &ModelParams<T>, embeddings: &EmbeddingSequence<T>) -> Result<Vec<T>> {
    check_sequence(params, embeddings)?;
    Ok(temporal_forward(params, embeddings, None).0)
}

pub fn classify<T: Scalar>(params: &ModelParams<T>, cls_output: &[T]) -> Logits<T> {
    params.head.forward(cls_output, 1)
}

pub fn project<T: Scalar>(params: &ModelParams<T>, embeddings: &EmbeddingSequence<T>) -> ProjectionSet<T> {
    project_forward(params, embeddings).0
}

/// Logits of a single clip in eval mode.
pub fn clip_logits<T: Scalar>(params: &ModelParams<T>, clip: &Clip<T>) -> Result<Logits<T>> {
    let emb = spatial_encode(params, clip)?;
    Ok(classify(params, &temporal_encode(params, &emb)?))
}

struct ViewTape<T> {
    frames: Vec<SpatialTape<T>>,
    temporal: Option<TemporalTape<T>>,
    proj: ProjTape<T>,
}

/// Intermediate state of a training forward pass, consumed by
/// [`ForwardTape::backward`].
pub struct ForwardTape<T> {
    views: Vec<ViewTape<T>>,
    /// Weight of each view's logits in the output (1 or 1/2).
    logit_weight: T,
}

type ViewOutput<T> = (Option<Logits<T>>, ProjectionSet<T>, ViewTape<T>);

fn view_forward<T: Scalar>(
    params: &ModelParams<T>,
    clip: &Clip<T>,
    with_logits: bool,
    mut dropout: Drop<'_, '_>,
) -> Result<ViewOutput<T>> {
    let d = params.config.embed_dim;
    let mut frames = Vec::with_capacity(clip.frames.len());
    let mut data = Vec::with_capacity(clip.frames.len() * d);
    for f in &clip.frames {
        check_frame(params, f)?;
        let (v, tape) = spatial_frame_forward(params, f, dropout.as_deref_mut());
        data.extend(v);
        frames.push(tape);
    }
    let emb = Rows::new(clip.frames.len(), d, data);
    check_sequence(params, &emb)?;
    let (logits, temporal) = if with_logits {
        let (cls, tape) = temporal_forward(params, &emb, dropout);
        (Some(classify(params, &cls)), Some(tape))
    } else {
        (None, None)
    };
    let (proj, proj_tape) = project_forward(params, &emb);
    Ok((
        logits,
        proj,
        ViewTape {
            frames,
            temporal,
            proj: proj_tape,
        },
    ))
}

/// Full forward pass. In eval mode `view2` may be absent and only logits are
/// produced; dropout is active only in train mode.
pub fn forward<T: Scalar>(
    params: &ModelParams<T>,
    view1: &Clip<T>,
    view2: Option<&Clip<T>>,
    mode: Mode,
    options: ForwardOptions,
    rng: Option<&mut ChaCha8Rng>,
) -> Result<ForwardOutput<T>> {
    match (mode, view2) {
        (Mode::Eval, None) => Ok(ForwardOutput {
            logits: clip_logits(params, view1)?,
            proj1: None,
            proj2: None,
        }),
        (_, Some(view2)) => {
            let (out, _) = forward_train(params, view1, view2, mode, options, rng)?;
            Ok(out)
        }
        (Mode::Train, None) => Err(ModelError::Shape("train mode needs two views".into())),
    }
}

/// Forward pass over two views that keeps everything needed for backward.
pub fn forward_train<T: Scalar>(
    params: &ModelParams<T>,
    view1: &Clip<T>,
    view2: &Clip<T>,
    mode: Mode,
    options: ForwardOptions,
    rng: Option<&mut ChaCha8Rng>,
) -> Result<(ForwardOutput<T>, ForwardTape<T>)> {
    if view1.frames.len() != view2.frames.len() {
        return Err(ModelError::Shape(format!(
            "views have {} and {} frames",
            view1.frames.len(),
            view2.frames.len()
        )));
    }
    let p = params.config.dropout;
    let mut holder = match (mode, rng) {
        (Mode::Train, Some(rng)) if p > 0.0 => Some(Dropout { p, rng }),
        (Mode::Train, None) if p > 0.0 => {
            return Err(ModelError::Shape("dropout enabled but no generator supplied".into()))
        }
        _ => None,
    };
    let both = options.logits_from_both_views;
    let (l1, proj1, tape1) = view_forward(params, view1, true, holder.as_mut())?;
    let (l2, proj2, tape2) = view_forward(params, view2, both, holder.as_mut())?;
    let mut logits = l1.expect("view 1 logits");
    let logit_weight = if both {
        let half = T::from_f64c(0.5);
        for (a, b) in logits.iter_mut().zip(l2.expect("view 2 logits")) {
            *a = (*a + b) * half;
        }
        half
    } else {
        T::one()
    };
    Ok((
        ForwardOutput {
            logits,
            proj1: Some(proj1),
            proj2: Some(proj2),
        },
        ForwardTape {
            views: vec![tape1, tape2],
            logit_weight,
        },
    ))
}

impl<T: Scalar> ForwardTape<T> {
    /// Parameter gradients given the loss gradients with respect to the
    /// logits and both projection sets.
    pub fn backward(&self, params: &ModelParams<T>, dlogits: &[T], dproj1: &[T], dproj2: &[T]) -> ModelParams<T> {
        let mut grads = params.zeros_like();
        self.backward_into(params, dlogits, dproj1, dproj2, &mut grads);
        grads
    }

    pub fn backward_into(
        &self,
        params: &ModelParams<T>,
        dlogits: &[T],
        dproj1: &[T],
        dproj2: &[T],
        grads: &mut ModelParams<T>,
    ) {
        let d = params.config.embed_dim;
        let scaled: Vec<T> = dlogits.iter().map(|&g| g * self.logit_weight).collect();
        for (view, dproj) in self.views.iter().zip([dproj1, dproj2]) {
            let n = view.frames.len();
            let mut demb = project_backward(params, &view.proj, dproj, n, grads);
            if let Some(temporal) = &view.temporal {
                let dcls = params
                    .head
                    .backward(&temporal.cls, &scaled, 1, &mut grads.head, true)
                    .expect("input gradient");
                let dt = temporal_backward(params, temporal, &dcls, grads);
                for (a, b) in demb.iter_mut().zip(dt) {
                    *a += b;
                }
            }
            for (t, tape) in view.frames.iter().enumerate() {
                spatial_frame_backward(params, tape, &demb[t * d..(t + 1) * d], grads);
            }
        }
    }
}
