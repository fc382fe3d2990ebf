//! Layers with explicit forward caches and hand-written backward passes.
//! Activations are `[rows x features]` row-major slices.

use rand::Rng;

use super::ops::{matmul, matmul_a_bt, matmul_at_b_acc};
use super::tensor::Tensor;
use crate::scalar::{c, Scalar};

/// Visits the tensors of a parameter group in a fixed order.
pub trait ParamGroup<T> {
    fn collect<'a>(&'a self, prefix: &str, out: &mut Vec<(String, &'a Tensor<T>)>);
    fn collect_mut<'a>(&'a mut self, prefix: &str, out: &mut Vec<(String, &'a mut Tensor<T>)>);
}

impl<T> ParamGroup<T> for Tensor<T> {
    fn collect<'a>(&'a self, prefix: &str, out: &mut Vec<(String, &'a Tensor<T>)>) {
        out.push((prefix.to_string(), self));
    }

    fn collect_mut<'a>(&'a mut self, prefix: &str, out: &mut Vec<(String, &'a mut Tensor<T>)>) {
        out.push((prefix.to_string(), self));
    }
}

pub(crate) fn join(prefix: &str, name: &str) -> String {
    if prefix.is_empty() {
        name.to_string()
    } else {
        format!("{prefix}.{name}")
    }
}

/// `y = x W + b` with `W` stored `[in, out]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Linear<T> {
    pub weight: Tensor<T>,
    pub bias: Tensor<T>,
}

impl<T: Scalar> Linear<T> {
    pub fn zeros(input: usize, output: usize) -> Self {
        Self {
            weight: Tensor::zeros(&[input, output]),
            bias: Tensor::zeros(&[output]),
        }
    }

    pub fn init(input: usize, output: usize, std: f64, rng: &mut impl Rng) -> Self {
        Self {
            weight: Tensor::trunc_normal(&[input, output], std, rng),
            bias: Tensor::zeros(&[output]),
        }
    }

    pub fn input_dim(&self) -> usize {
        self.weight.shape[0]
    }

    pub fn output_dim(&self) -> usize {
        self.weight.shape[1]
    }

    pub fn forward(&self, x: &[T], rows: usize) -> Vec<T> {
        let (i, o) = (self.input_dim(), self.output_dim());
        let mut y = matmul(x, &self.weight.data, rows, i, o);
        for r in 0..rows {
            for (yv, &b) in y[r * o..(r + 1) * o].iter_mut().zip(&self.bias.data) {
                *yv += b;
            }
        }
        y
    }

    /// Accumulates parameter gradients into `grad` and returns `dL/dx` when
    /// `need_input` is set.
    pub fn backward(&self, x: &[T], dy: &[T], rows: usize, grad: &mut Linear<T>, need_input: bool) -> Option<Vec<T>> {
        let (i, o) = (self.input_dim(), self.output_dim());
        matmul_at_b_acc(x, dy, rows, i, o, &mut grad.weight.data);
        for r in 0..rows {
            for (g, &d) in grad.bias.data.iter_mut().zip(&dy[r * o..(r + 1) * o]) {
                *g += d;
            }
        }
        need_input.then(|| matmul_a_bt(dy, &self.weight.data, rows, o, i))
    }
}

impl<T> ParamGroup<T> for Linear<T> {
    fn collect<'a>(&'a self, prefix: &str, out: &mut Vec<(String, &'a Tensor<T>)>) {
        out.push((join(prefix, "weight"), &self.weight));
        out.push((join(prefix, "bias"), &self.bias));
    }

    fn collect_mut<'a>(&'a mut self, prefix: &str, out: &mut Vec<(String, &'a mut Tensor<T>)>) {
        out.push((join(prefix, "weight"), &mut self.weight));
        out.push((join(prefix, "bias"), &mut self.bias));
    }
}

pub const LAYER_NORM_EPS: f64 = 1e-5;

#[derive(Debug, Clone, PartialEq)]
pub struct LayerNorm<T> {
    pub gamma: Tensor<T>,
    pub beta: Tensor<T>,
}

pub struct LayerNormCache<T> {
    xhat: Vec<T>,
    inv_std: Vec<T>,
}

impl<T: Scalar> LayerNorm<T> {
    pub fn new(dim: usize) -> Self {
        Self {
            gamma: Tensor::filled(&[dim], T::one()),
            beta: Tensor::zeros(&[dim]),
        }
    }

    pub fn zeros(dim: usize) -> Self {
        Self {
            gamma: Tensor::zeros(&[dim]),
            beta: Tensor::zeros(&[dim]),
        }
    }

    pub fn forward(&self, x: &[T], rows: usize) -> (Vec<T>, LayerNormCache<T>) {
        let d = self.gamma.numel();
        let dn = c::<T>(d as f64);
        let eps = c::<T>(LAYER_NORM_EPS);
        let mut y = vec![T::zero(); rows * d];
        let mut xhat = vec![T::zero(); rows * d];
        let mut inv_std = vec![T::zero(); rows];
        for r in 0..rows {
            let row = &x[r * d..(r + 1) * d];
            let mean = row.iter().copied().sum::<T>() / dn;
            let var = row.iter().map(|&v| (v - mean) * (v - mean)).sum::<T>() / dn;
            let is = T::one() / (var + eps).sqrt();
            inv_std[r] = is;
            for j in 0..d {
                let h = (row[j] - mean) * is;
                xhat[r * d + j] = h;
                y[r * d + j] = h * self.gamma.data[j] + self.beta.data[j];
            }
        }
        (y, LayerNormCache { xhat, inv_std })
    }

    pub fn backward(&self, cache: &LayerNormCache<T>, dy: &[T], rows: usize, grad: &mut LayerNorm<T>) -> Vec<T> {
        let d = self.gamma.numel();
        let dn = c::<T>(d as f64);
        let mut dx = vec![T::zero(); rows * d];
        for r in 0..rows {
            let xh = &cache.xhat[r * d..(r + 1) * d];
            let g = &dy[r * d..(r + 1) * d];
            let mut sum_dh = T::zero();
            let mut sum_dh_xh = T::zero();
            for j in 0..d {
                grad.gamma.data[j] += g[j] * xh[j];
                grad.beta.data[j] += g[j];
                let dh = g[j] * self.gamma.data[j];
                sum_dh += dh;
                sum_dh_xh += dh * xh[j];
            }
            let is = cache.inv_std[r];
            for j in 0..d {
                let dh = g[j] * self.gamma.data[j];
                dx[r * d + j] = is * (dh - sum_dh / dn - xh[j] * sum_dh_xh / dn);
            }
        }
        dx
    }
}

impl<T> ParamGroup<T> for LayerNorm<T> {
    fn collect<'a>(&'a self, prefix: &str, out: &mut Vec<(String, &'a Tensor<T>)>) {
        out.push((join(prefix, "gamma"), &self.gamma));
        out.push((join(prefix, "beta"), &self.beta));
    }

    fn collect_mut<'a>(&'a mut self, prefix: &str, out: &mut Vec<(String, &'a mut Tensor<T>)>) {
        out.push((join(prefix, "gamma"), &mut self.gamma));
        out.push((join(prefix, "beta"), &mut self.beta));
    }
}

// tanh approximation: 0.5 x (1 + tanh(sqrt(2/pi) (x + 0.044715 x^3)))
const GELU_K: f64 = 0.797_884_560_802_865_4;
const GELU_A: f64 = 0.044_715;

pub fn gelu<T: Scalar>(x: &[T]) -> Vec<T> {
    let (k, a, half) = (c::<T>(GELU_K), c::<T>(GELU_A), c::<T>(0.5));
    x.iter()
        .map(|&v| half * v * (T::one() + (k * (v + a * v * v * v)).tanh()))
        .collect()
}

pub fn gelu_backward<T: Scalar>(x: &[T], dy: &[T]) -> Vec<T> {
    let (k, a, half, three) = (c::<T>(GELU_K), c::<T>(GELU_A), c::<T>(0.5), c::<T>(3.0));
    x.iter()
        .zip(dy)
        .map(|(&v, &g)| {
            let th = (k * (v + a * v * v * v)).tanh();
            let dth = (T::one() - th * th) * k * (T::one() + three * a * v * v);
            g * (half * (T::one() + th) + half * v * dth)
        })
        .collect()
}

/// Inverted dropout mask: entries are 0 or `1 / (1 - p)`.
pub fn dropout_mask<T: Scalar>(len: usize, p: f64, rng: &mut impl Rng) -> Vec<T> {
    let keep = c::<T>(1.0 / (1.0 - p));
    (0..len)
        .map(|_| if rng.random::<f64>() < p { T::zero() } else { keep })
        .collect()
}

pub fn apply_mask<T: Scalar>(x: &mut [T], mask: &[T]) {
    for (v, &m) in x.iter_mut().zip(mask) {
        *v *= m;
    }
}
