//! Dense networks with hand-written backpropagation.
//!
//! Parameters live in one flat vector. Layer `l` stores its weight matrix
//! `W_l` (`in × out`, row-major) followed by its bias `b_l`; activations are
//! row vectors, `h_l = act(h_{l−1} W_l + b_l)`, and the output layer is linear.

use ndarray::{s, Array2, ArrayView1, ArrayView2, ArrayViewMut2, Axis};
use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    Elu,
    Relu,
}

impl Activation {
    pub fn code(self) -> u8 {
        match self {
            Activation::Elu => 0,
            Activation::Relu => 1,
        }
    }

    pub fn from_code(c: u8) -> Option<Self> {
        match c {
            0 => Some(Activation::Elu),
            1 => Some(Activation::Relu),
            _ => None,
        }
    }

    #[inline]
    pub fn apply(self, x: f64) -> f64 {
        match self {
            Activation::Elu => {
                if x > 0.0 {
                    x
                } else {
                    x.exp_m1()
                }
            }
            Activation::Relu => x.max(0.0),
        }
    }

    /// Derivative given the pre-activation `x`.
    #[inline]
    pub fn derivative(self, x: f64) -> f64 {
        match self {
            Activation::Elu => {
                if x > 0.0 {
                    1.0
                } else {
                    x.exp()
                }
            }
            Activation::Relu => {
                if x > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Mlp {
    /// Layer widths including input and output.
    pub sizes: Vec<usize>,
    pub activation: Activation,
    pub params: Vec<f64>,
}

/// Intermediate values from a forward pass, needed for backpropagation.
#[derive(Debug, Clone)]
pub struct ForwardCache {
    /// Layer inputs: `inputs[0]` is the network input.
    pub inputs: Vec<Array2<f64>>,
    /// Pre-activations of every layer.
    pub pre: Vec<Array2<f64>>,
}

impl ForwardCache {
    pub fn output(&self) -> &Array2<f64> {
        self.pre.last().expect("at least one layer")
    }
}

pub fn param_count(sizes: &[usize]) -> usize {
    sizes.windows(2).map(|w| w[0] * w[1] + w[1]).sum()
}

impl Mlp {
    pub fn zeros(sizes: &[usize], activation: Activation) -> Self {
        assert!(sizes.len() >= 2, "need input and output widths");
        Mlp { sizes: sizes.to_vec(), activation, params: vec![0.0; param_count(sizes)] }
    }

    /// Scaled-normal weights (`std = gain / sqrt(fan_in)`), zero biases. The
    /// output layer uses `out_gain`.
    pub fn init<R: Rng + ?Sized>(sizes: &[usize], activation: Activation, gain: f64, out_gain: f64, rng: &mut R) -> Self {
        let mut m = Mlp::zeros(sizes, activation);
        let layers = m.num_layers();
        for l in 0..layers {
            let (fan_in, _) = m.layer_shape(l);
            let gl = if l + 1 == layers { out_gain } else { gain };
            let std = gl / (fan_in as f64).sqrt();
            let dist = Normal::new(0.0, std).expect("finite std");
            let (w0, w1) = m.weight_range(l);
            for p in &mut m.params[w0..w1] {
                *p = dist.sample(rng);
            }
        }
        m
    }

    pub fn num_layers(&self) -> usize {
        self.sizes.len() - 1
    }

    pub fn input_dim(&self) -> usize {
        self.sizes[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.sizes.last().expect("non-empty")
    }

    pub fn layer_shape(&self, l: usize) -> (usize, usize) {
        (self.sizes[l], self.sizes[l + 1])
    }

    fn offset(&self, l: usize) -> usize {
        param_count(&self.sizes[..=l])
    }

    /// Index range of `W_l` in the flat vector.
    pub fn weight_range(&self, l: usize) -> (usize, usize) {
        let o = self.offset(l);
        let (i, n) = self.layer_shape(l);
        (o, o + i * n)
    }

    pub fn bias_range(&self, l: usize) -> (usize, usize) {
        let (_, w1) = self.weight_range(l);
        (w1, w1 + self.sizes[l + 1])
    }

    pub fn weight(&self, l: usize) -> ArrayView2<'_, f64> {
        let (a, b) = self.weight_range(l);
        ArrayView2::from_shape(self.layer_shape(l), &self.params[a..b]).expect("layout")
    }

    pub fn bias(&self, l: usize) -> ArrayView1<'_, f64> {
        let (a, b) = self.bias_range(l);
        ArrayView1::from(&self.params[a..b])
    }

    fn affine(&self, l: usize, x: &ArrayView2<f64>) -> Array2<f64> {
        let mut z = x.dot(&self.weight(l));
        z += &self.bias(l);
        z
    }

    /// Batched forward pass; rows are samples.
    pub fn forward(&self, x: ArrayView2<f64>) -> Array2<f64> {
        assert_eq!(x.ncols(), self.input_dim(), "input dimension mismatch");
        let mut h = x.to_owned();
        for l in 0..self.num_layers() {
            let mut z = self.affine(l, &h.view());
            if l + 1 < self.num_layers() {
                z.mapv_inplace(|v| self.activation.apply(v));
            }
            h = z;
        }
        h
    }

    pub fn forward_one(&self, x: &[f64]) -> Vec<f64> {
        let v = ArrayView2::from_shape((1, x.len()), x).expect("row");
        self.forward(v).into_raw_vec_and_offset().0
    }

    pub fn forward_cached(&self, x: ArrayView2<f64>) -> ForwardCache {
        assert_eq!(x.ncols(), self.input_dim(), "input dimension mismatch");
        let mut inputs = Vec::with_capacity(self.num_layers());
        let mut pre = Vec::with_capacity(self.num_layers());
        let mut h = x.to_owned();
        for l in 0..self.num_layers() {
            let z = self.affine(l, &h.view());
            let next = if l + 1 < self.num_layers() { z.mapv(|v| self.activation.apply(v)) } else { Array2::zeros((0, 0)) };
            inputs.push(h);
            pre.push(z);
            h = next;
        }
        ForwardCache { inputs, pre }
    }

    /// Accumulates `∂L/∂θ` into `grad` given `∂L/∂output`; returns `∂L/∂input`.
    pub fn backward(&self, cache: &ForwardCache, dout: ArrayView2<f64>, grad: &mut [f64]) -> Array2<f64> {
        assert_eq!(grad.len(), self.params.len());
        let mut delta = dout.to_owned();
        for l in (0..self.num_layers()).rev() {
            if l + 1 < self.num_layers() {
                let z = &cache.pre[l];
                ndarray::Zip::from(&mut delta).and(z).for_each(|d, &zv| *d *= self.activation.derivative(zv));
            }
            let (w0, w1) = self.weight_range(l);
            let mut gw = ArrayViewMut2::from_shape(self.layer_shape(l), &mut grad[w0..w1]).expect("layout");
            ndarray::linalg::general_mat_mul(1.0, &cache.inputs[l].t(), &delta, 1.0, &mut gw);
            let (b0, b1) = self.bias_range(l);
            let gb = delta.sum_axis(Axis(0));
            for (g, v) in grad[b0..b1].iter_mut().zip(gb.iter()) {
                *g += v;
            }
            delta = delta.dot(&self.weight(l).t());
        }
        delta
    }

    /// Input gradient of a scalar-output network for every row of `x`.
    pub fn input_gradient(&self, x: ArrayView2<f64>) -> Array2<f64> {
        assert_eq!(self.output_dim(), 1);
        let cache = self.forward_cached(x);
        let ones = Array2::ones((x.nrows(), 1));
        let mut scratch = vec![0.0; self.params.len()];
        self.backward(&cache, ones.view(), &mut scratch)
    }

    /// `Σ_rows ‖∇ₓ f(x)‖²` and its weight gradient (scaled by `scale`)
    /// accumulated into `grad`. ReLU only; biases receive no gradient.
    pub fn input_gradient_penalty(&self, x: ArrayView2<f64>, scale: f64, grad: &mut [f64]) -> f64 {
        assert_eq!(self.activation, Activation::Relu, "penalty gradient assumes piecewise-linear units");
        assert_eq!(self.output_dim(), 1);
        let nl = self.num_layers();
        let n = x.nrows();
        let cache = self.forward_cached(x);
        let masks: Vec<Array2<f64>> = cache.pre[..nl - 1].iter().map(|z| z.mapv(|v| if v > 0.0 { 1.0 } else { 0.0 })).collect();
        // γ_l: derivative of the output w.r.t. layer-l pre-activations
        let mut gammas: Vec<Array2<f64>> = vec![Array2::zeros((0, 0)); nl];
        gammas[nl - 1] = Array2::ones((n, 1));
        for l in (0..nl - 1).rev() {
            let mut g = gammas[l + 1].dot(&self.weight(l + 1).t());
            g *= &masks[l];
            gammas[l] = g;
        }
        let input_grad = gammas[0].dot(&self.weight(0).t());
        let penalty: f64 = input_grad.iter().map(|v| v * v).sum();
        // r_0 = 2g, r_l = (r_{l−1} W_l) ⊙ m_l, dW_l = r_{l−1}ᵀ γ_l
        let mut r = input_grad.mapv(|v| 2.0 * v);
        for l in 0..nl {
            let (w0, w1) = self.weight_range(l);
            let mut gw = ArrayViewMut2::from_shape(self.layer_shape(l), &mut grad[w0..w1]).expect("layout");
            ndarray::linalg::general_mat_mul(scale, &r.t(), &gammas[l], 1.0, &mut gw);
            if l + 1 < nl {
                let mut next = r.dot(&self.weight(l));
                next *= &masks[l];
                r = next;
            }
        }
        penalty
    }
}

/// Adam with bias correction.
#[derive(Debug, Clone, PartialEq)]
pub struct Adam {
    pub m: Vec<f64>,
    pub v: Vec<f64>,
    pub t: u64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Adam {
    pub fn new(n: usize) -> Self {
        Adam { m: vec![0.0; n], v: vec![0.0; n], t: 0, beta1: 0.9, beta2: 0.999, eps: 1e-8 }
    }

    pub fn step(&mut self, params: &mut [f64], grad: &[f64], lr: f64) {
        self.t += 1;
        let b1t = 1.0 - self.beta1.powi(self.t as i32);
        let b2t = 1.0 - self.beta2.powi(self.t as i32);
        for i in 0..params.len() {
            let g = grad[i];
            self.m[i] = self.beta1 * self.m[i] + (1.0 - self.beta1) * g;
            self.v[i] = self.beta2 * self.v[i] + (1.0 - self.beta2) * g * g;
            let mh = self.m[i] / b1t;
            let vh = self.v[i] / b2t;
            params[i] -= lr * mh / (vh.sqrt() + self.eps);
        }
    }
}

/// Rescales `grad` so its Euclidean norm is at most `max_norm`; returns the original norm.
pub fn clip_grad_norm(grad: &mut [f64], max_norm: f64) -> f64 {
    let norm = grad.iter().map(|g| g * g).sum::<f64>().sqrt();
    if norm > max_norm && norm > 0.0 {
        let s = max_norm / norm;
        grad.iter_mut().for_each(|g| *g *= s);
    }
    norm
}

/// Copies rows `idx` of a row-major `data` matrix with `dim` columns.
pub fn gather_rows(data: &[f64], dim: usize, idx: &[usize]) -> Array2<f64> {
    let mut out = Array2::zeros((idx.len(), dim));
    for (r, &i) in idx.iter().enumerate() {
        out.slice_mut(s![r, ..]).assign(&ArrayView1::from(&data[i * dim..(i + 1) * dim]));
    }
    out
}


#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn rng() -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(42)
    }

    #[test]
    fn zero_weights_give_zero() {
        let m = Mlp::zeros(&[5, 4, 3], Activation::Elu);
        let x = Array2::from_elem((2, 5), 1.7);
        assert!(m.forward(x.view()).iter().all(|&v| v == 0.0));
    }

    #[test]
    fn elu_saturates() {
        assert!((Activation::Elu.apply(-1000.0) + 1.0).abs() < 1e-12);
    }

    #[test]
    fn single_neuron_hand_value() {
        let mut m = Mlp::zeros(&[2, 1, 1], Activation::Relu);
        // W0 = [2, -1]ᵀ, b0 = 0.5, W1 = 3, b1 = -1
        m.params.copy_from_slice(&[2.0, -1.0, 0.5, 3.0, -1.0]);
        let y = m.forward_one(&[1.0, 0.5]);
        assert_eq!(y, vec![3.0 * (2.0 - 0.5 + 0.5) - 1.0]);
    }

    fn loss(m: &Mlp, x: &Array2<f64>, w: &Array2<f64>) -> f64 {
        (&m.forward(x.view()) * w).sum()
    }

    #[test]
    fn backward_matches_finite_differences() {
        let mut r = rng();
        for act in [Activation::Elu, Activation::Relu] {
            let m = Mlp::init(&[6, 8, 5, 3], act, 1.0, 1.0, &mut r);
            let x = Array2::from_shape_fn((4, 6), |_| r.random_range(-1.0..1.0));
            let w = Array2::from_shape_fn((4, 3), |_| r.random_range(-1.0..1.0));
            let cache = m.forward_cached(x.view());
            let mut g = vec![0.0; m.params.len()];
            m.backward(&cache, w.view(), &mut g);
            for i in 0..m.params.len() {
                let h = 1e-6;
                let mut p = m.clone();
                p.params[i] += h;
                let up = loss(&p, &x, &w);
                p.params[i] -= 2.0 * h;
                let dn = loss(&p, &x, &w);
                let fd = (up - dn) / (2.0 * h);
                assert!((fd - g[i]).abs() <= 1e-6 * (1.0 + fd.abs()), "{act:?} {i}: {fd} vs {}", g[i]);
            }
        }
    }

    #[test]
    fn penalty_weight_gradient_matches_finite_differences() {
        let mut r = rng();
        let m = Mlp::init(&[4, 7, 5, 1], Activation::Relu, 1.0, 1.0, &mut r);
        let x = Array2::from_shape_fn((3, 4), |_| r.random_range(-1.0..1.0));
        let mut g = vec![0.0; m.params.len()];
        let p0 = m.input_gradient_penalty(x.view(), 1.0, &mut g);
        let direct: f64 = m.input_gradient(x.view()).iter().map(|v| v * v).sum();
        assert!((p0 - direct).abs() < 1e-12);
        for i in 0..m.params.len() {
            let h = 1e-6;
            let mut p = m.clone();
            p.params[i] += h;
            let up: f64 = p.input_gradient(x.view()).iter().map(|v| v * v).sum();
            p.params[i] -= 2.0 * h;
            let dn: f64 = p.input_gradient(x.view()).iter().map(|v| v * v).sum();
            let fd = (up - dn) / (2.0 * h);
            assert!((fd - g[i]).abs() <= 1e-6 * (1.0 + fd.abs()), "{i}: {fd} vs {}", g[i]);
        }
    }

    #[test]
    fn adam_moves_against_gradient() {
        let mut a = Adam::new(2);
        let mut p = vec![1.0, -1.0];
        a.step(&mut p, &[1.0, -1.0], 0.1);
        assert!(p[0] < 1.0 && p[1] > -1.0);
    }

    #[test]
    fn clip_bounds_norm() {
        let mut g = vec![3.0, 4.0];
        assert_eq!(clip_grad_norm(&mut g, 1.0), 5.0);
        assert!((g[0] - 0.6).abs() < 1e-15 && (g[1] - 0.8).abs() < 1e-15);
    }
}
