//! Cross-entropy, the event-contrastive loss and their weighted sum, each with
//! an analytic gradient.
//!
//! The contrastive loss for view-1 projections `z` and view-2 projections `z~`
//! of an `n`-frame clip is
//!
//! ```text
//! L_EC = -sum_t log[ h(z_t, z~_t) / sum_{s != t} ( h(z_t, z_s) + h(z_t, z~_s) ) ]
//! h(a, b) = exp(cos(a, b) / tau)
//! ```
//!
//! Anchors come from view 1 only and the positive pair is not part of the
//! denominator, so the loss can be negative.

use serde::{Deserialize, Serialize};

use crate::scalar::{c, Scalar};
use crate::vtn_model::ProjectionSet;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum LossError {
    #[error("label {label} outside [0, {classes})")]
    Label { label: usize, classes: usize },
    #[error("contrastive loss needs at least 2 frames per view, got {0}")]
    TooFewFrames(usize),
    #[error("projection {index} of view {view} has zero or non-finite norm")]
    ZeroNorm { view: usize, index: usize },
    #[error("shape: {0}")]
    Shape(String),
    #[error("tau must be positive and finite, got {0}")]
    Tau(f64),
    #[error("alpha must be non-negative and finite, got {0}")]
    Alpha(f64),
}

pub type Result<T, E = LossError> = std::result::Result<T, E>;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LossConfig {
    pub tau: f64,
    /// Weight of the contrastive term.
    pub alpha: f64,
    /// Average the loss over both anchor directions instead of view-1 anchors
    /// only.
    pub symmetric: bool,
}

impl Default for LossConfig {
    fn default() -> Self {
        Self {
            tau: 0.1,
            alpha: 1.0,
            symmetric: false,
        }
    }
}

impl LossConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.tau > 0.0 && self.tau.is_finite()) {
            return Err(LossError::Tau(self.tau));
        }
        if !(self.alpha >= 0.0 && self.alpha.is_finite()) {
            return Err(LossError::Alpha(self.alpha));
        }
        Ok(())
    }
}

fn log_sum_exp<T: Scalar>(xs: &[T]) -> T {
    let max = xs.iter().copied().fold(T::neg_infinity(), T::max);
    max + xs.iter().map(|&x| (x - max).exp()).sum::<T>().ln()
}

/// `-log softmax(logits)[label]` and its gradient `softmax - onehot`.
pub fn cross_entropy_with_grad<T: Scalar>(logits: &[T], label: usize) -> Result<(T, Vec<T>)> {
    if label >= logits.len() {
        return Err(LossError::Label {
            label,
            classes: logits.len(),
        });
    }
    let lse = log_sum_exp(logits);
    let mut grad: Vec<T> = logits.iter().map(|&l| (l - lse).exp()).collect();
    grad[label] -= T::one();
    Ok((lse - logits[label], grad))
}

pub fn cross_entropy<T: Scalar>(logits: &[T], label: usize) -> Result<T> {
    cross_entropy_with_grad(logits, label).map(|(l, _)| l)
}

pub fn softmax<T: Scalar>(logits: &[T]) -> Vec<T> {
    let lse = log_sum_exp(logits);
    logits.iter().map(|&l| (l - lse).exp()).collect()
}

fn norm<T: Scalar>(v: &[T]) -> T {
    v.iter().map(|&x| x * x).sum::<T>().sqrt()
}

/// `exp(cos(u1, u2) / tau)`.
pub fn cosine_sim_exp<T: Scalar>(u1: &[T], u2: &[T], tau: f64) -> Result<T> {
    if u1.len() != u2.len() {
        return Err(LossError::Shape(format!(
            "vectors of length {} and {}",
            u1.len(),
            u2.len()
        )));
    }
    if !(tau > 0.0 && tau.is_finite()) {
        return Err(LossError::Tau(tau));
    }
    let (n1, n2) = (norm(u1), norm(u2));
    for (view, n) in [(1, n1), (2, n2)] {
        if n == T::zero() || !n.is_finite() {
            return Err(LossError::ZeroNorm { view, index: 0 });
        }
    }
    let dot: T = u1.iter().zip(u2).map(|(&a, &b)| a * b).sum();
    Ok((dot / (n1 * n2) / c::<T>(tau)).exp())
}

/// Unit rows and the original norms.
fn normalize<T: Scalar>(set: &ProjectionSet<T>, view: usize) -> Result<(Vec<Vec<T>>, Vec<T>)> {
    let mut units = Vec::with_capacity(set.rows);
    let mut norms = Vec::with_capacity(set.rows);
    for i in 0..set.rows {
        let r = set.row(i);
        let n = norm(r);
        if n == T::zero() || !n.is_finite() {
            return Err(LossError::ZeroNorm { view, index: i });
        }
        units.push(r.iter().map(|&x| x / n).collect());
        norms.push(n);
    }
    Ok((units, norms))
}

fn dot<T: Scalar>(a: &[T], b: &[T]) -> T {
    a.iter().zip(b).map(|(&x, &y)| x * y).sum()
}

fn axpy<T: Scalar>(a: T, x: &[T], y: &mut [T]) {
    for (o, &v) in y.iter_mut().zip(x) {
        *o += a * v;
    }
}

/// Loss with anchors from `u` and positives from `v`, plus gradients with
/// respect to the unit vectors.
fn directed<T: Scalar>(u: &[Vec<T>], v: &[Vec<T>], tau: T) -> (T, Vec<Vec<T>>, Vec<Vec<T>>) {
    let n = u.len();
    let dim = u[0].len();
    let mut du = vec![vec![T::zero(); dim]; n];
    let mut dv = vec![vec![T::zero(); dim]; n];
    let mut loss = T::zero();
    let mut scores = Vec::with_capacity(2 * (n - 1));
    for t in 0..n {
        scores.clear();
        for s in (0..n).filter(|&s| s != t) {
            scores.push(dot(&u[t], &u[s]) / tau);
            scores.push(dot(&u[t], &v[s]) / tau);
        }
        let lse = log_sum_exp(&scores);
        loss += lse - dot(&u[t], &v[t]) / tau;

        let inv_tau = T::one() / tau;
        axpy(-inv_tau, &v[t], &mut du[t]);
        let ut = u[t].clone();
        axpy(-inv_tau, &ut, &mut dv[t]);
        for (k, s) in (0..n).filter(|&s| s != t).enumerate() {
            let w_uu = (scores[2 * k] - lse).exp() * inv_tau;
            let w_uv = (scores[2 * k + 1] - lse).exp() * inv_tau;
            let us = u[s].clone();
            axpy(w_uu, &us, &mut du[t]);
            axpy(w_uv, &v[s], &mut du[t]);
            axpy(w_uu, &ut, &mut du[s]);
            axpy(w_uv, &ut, &mut dv[s]);
        }
    }
    (loss, du, dv)
}

/// Chain rule through `z / |z|`.
fn unnormalize_grad<T: Scalar>(units: &[Vec<T>], norms: &[T], dunit: &[Vec<T>]) -> Vec<T> {
    let mut out = Vec::with_capacity(units.len() * units.first().map_or(0, Vec::len));
    for ((u, &n), g) in units.iter().zip(norms).zip(dunit) {
        let proj = dot(u, g);
        out.extend(u.iter().zip(g).map(|(&ui, &gi)| (gi - ui * proj) / n));
    }
    out
}

type Prepared<T> = (Vec<Vec<T>>, Vec<T>, Vec<Vec<T>>, Vec<T>);

fn prepare<T: Scalar>(proj1: &ProjectionSet<T>, proj2: &ProjectionSet<T>, tau: f64) -> Result<Prepared<T>> {
    if proj1.rows != proj2.rows || proj1.dim != proj2.dim {
        return Err(LossError::Shape(format!(
            "views are {}x{} and {}x{}",
            proj1.rows, proj1.dim, proj2.rows, proj2.dim
        )));
    }
    if proj1.rows < 2 {
        return Err(LossError::TooFewFrames(proj1.rows));
    }
    if !(tau > 0.0 && tau.is_finite()) {
        return Err(LossError::Tau(tau));
    }
    let (u, nu) = normalize(proj1, 1)?;
    let (v, nv) = normalize(proj2, 2)?;
    Ok((u, nu, v, nv))
}

/// Contrastive loss and its gradients with respect to both projection sets
/// (flattened row-major).
pub fn event_contrastive_with_grad<T: Scalar>(
    proj1: &ProjectionSet<T>,
    proj2: &ProjectionSet<T>,
    tau: f64,
    symmetric: bool,
) -> Result<(T, Vec<T>, Vec<T>)> {
    let (u, nu, v, nv) = prepare(proj1, proj2, tau)?;
    let tau = c::<T>(tau);
    let (mut loss, mut du, mut dv) = directed(&u, &v, tau);
    if symmetric {
        let (l2, dv2, du2) = directed(&v, &u, tau);
        let half = c::<T>(0.5);
        loss = (loss + l2) * half;
        for (a, b) in du.iter_mut().zip(&du2).chain(dv.iter_mut().zip(&dv2)) {
            for (x, &y) in a.iter_mut().zip(b) {
                *x = (*x + y) * half;
            }
        }
    }
    Ok((loss, unnormalize_grad(&u, &nu, &du), unnormalize_grad(&v, &nv, &dv)))
}

/// Per-anchor summands of the contrastive loss (view-1 anchors).
pub fn event_contrastive_terms<T: Scalar>(
    proj1: &ProjectionSet<T>,
    proj2: &ProjectionSet<T>,
    tau: f64,
) -> Result<Vec<T>> {
    let (u, _, v, _) = prepare(proj1, proj2, tau)?;
    let tau = c::<T>(tau);
    let n = u.len();
    Ok((0..n)
        .map(|t| {
            let scores: Vec<T> = (0..n)
                .filter(|&s| s != t)
                .flat_map(|s| [dot(&u[t], &u[s]) / tau, dot(&u[t], &v[s]) / tau])
                .collect();
            log_sum_exp(&scores) - dot(&u[t], &v[t]) / tau
        })
        .collect())
}

pub fn event_contrastive<T: Scalar>(proj1: &ProjectionSet<T>, proj2: &ProjectionSet<T>, tau: f64) -> Result<T> {
    event_contrastive_with_grad(proj1, proj2, tau, false).map(|(l, _, _)| l)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossParts<T> {
    pub total: T,
    pub ce: T,
    pub ec: T,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LossGrads<T> {
    pub dlogits: Vec<T>,
    pub dproj1: Vec<T>,
    pub dproj2: Vec<T>,
}

/// `ce + alpha * ec` with both parts reported, plus gradients.
pub fn total_loss_with_grad<T: Scalar>(
    logits: &[T],
    label: usize,
    proj1: &ProjectionSet<T>,
    proj2: &ProjectionSet<T>,
    config: &LossConfig,
) -> Result<(LossParts<T>, LossGrads<T>)> {
    config.validate()?;
    let (ce, dlogits) = cross_entropy_with_grad(logits, label)?;
    let (ec, mut dproj1, mut dproj2) = event_contrastive_with_grad(proj1, proj2, config.tau, config.symmetric)?;
    let alpha = c::<T>(config.alpha);
    for g in dproj1.iter_mut().chain(dproj2.iter_mut()) {
        *g *= alpha;
    }
    Ok((
        LossParts {
            total: ce + alpha * ec,
            ce,
            ec,
        },
        LossGrads {
            dlogits,
            dproj1,
            dproj2,
        },
    ))
}

pub fn total_loss<T: Scalar>(
    logits: &[T],
    label: usize,
    proj1: &ProjectionSet<T>,
    proj2: &ProjectionSet<T>,
    config: &LossConfig,
) -> Result<LossParts<T>> {
    total_loss_with_grad(logits, label, proj1, proj2, config).map(|(p, _)| p)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::vtn_model::Rows;

    #[test]
    fn label_out_of_range() {
        assert_eq!(
            cross_entropy(&[0.0f64, 1.0], 2),
            Err(LossError::Label { label: 2, classes: 2 })
        );
    }

    #[test]
    fn ce_gradient_sums_to_zero() {
        let (_, g) = cross_entropy_with_grad(&[0.3f64, -1.0, 2.0], 1).unwrap();
        assert!(g.iter().sum::<f64>().abs() < 1e-15);
        assert!(g[1] < 0.0);
    }

    #[test]
    fn single_frame_and_zero_vectors_are_errors() {
        let one = Rows::new(1, 2, vec![1.0f64, 0.0]);
        assert_eq!(event_contrastive(&one, &one, 0.1), Err(LossError::TooFewFrames(1)));
        let z = Rows::new(2, 2, vec![1.0f64, 0.0, 0.0, 0.0]);
        let ok = Rows::new(2, 2, vec![1.0f64, 0.0, 0.0, 1.0]);
        assert_eq!(
            event_contrastive(&ok, &z, 0.1),
            Err(LossError::ZeroNorm { view: 2, index: 1 })
        );
        assert!(cosine_sim_exp(&[0.0f64, 0.0], &[1.0, 0.0], 0.1).is_err());
    }

    #[test]
    fn config_validation() {
        assert!(LossConfig {
            tau: 0.0,
            ..Default::default()
        }
        .validate()
        .is_err());
        assert!(LossConfig {
            alpha: -1.0,
            ..Default::default()
        }
        .validate()
        .is_err());
        LossConfig::default().validate().unwrap();
    }
}
