//! Trainable layers built on the tape: convolution, linear, instance norm.
//!
//! Each layer owns its parameters as plain arrays. `bind` registers them as
//! tape leaves for one forward pass; the returned bound handle applies the
//! layer and exposes the leaf ids in a canonical order matching
//! [`visit`](Params::visit).

use ndarray::{ArrayD, IxDyn};
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use super::tape::{Tape, VarId};

/// Parameter traversal in a canonical, stable order.
pub trait Params {
    fn visit(&self, f: &mut dyn FnMut(&str, &ArrayD<f64>));
    fn visit_mut(&mut self, f: &mut dyn FnMut(&str, &mut ArrayD<f64>));

    fn param_count(&self) -> usize {
        let mut n = 0;
        self.visit(&mut |_, a| n += a.len());
        n
    }

    /// Flat clone of all parameters, in visit order.
    fn param_arrays(&self) -> Vec<ArrayD<f64>> {
        let mut out = Vec::new();
        self.visit(&mut |_, a| out.push(a.clone()));
        out
    }
}

/// Weight initialization scheme, seeded.
pub struct Init {
    rng: ChaCha8Rng,
    scheme: InitScheme,
}

#[derive(Debug, Clone, Copy)]
pub enum InitScheme {
    /// Fixed-std normal, the conventional GAN initialization.
    Normal(f64),
    /// Fan-in scaled normal for classifier stacks.
    Kaiming,
}

impl Init {
    pub fn new(seed: u64, scheme: InitScheme) -> Self {
        Self {
            rng: ChaCha8Rng::seed_from_u64(seed),
            scheme,
        }
    }

    fn sample(&mut self, shape: &[usize], fan_in: usize) -> ArrayD<f64> {
        let std = match self.scheme {
            InitScheme::Normal(s) => s,
            InitScheme::Kaiming => (2.0 / fan_in.max(1) as f64).sqrt(),
        };
        let dist = Normal::new(0.0, std).expect("valid std");
        ArrayD::from_shape_simple_fn(IxDyn(shape), || dist.sample(&mut self.rng))
    }

    /// Uniform in [lo, hi), used by tests.
    pub fn uniform(&mut self, shape: &[usize], lo: f64, hi: f64) -> ArrayD<f64> {
        ArrayD::from_shape_simple_fn(IxDyn(shape), || self.rng.random_range(lo..hi))
    }
}

/// 2-D convolution layer.
#[derive(Debug, Clone)]
pub struct Conv2d {
    pub name: String,
    pub w: ArrayD<f64>,
    pub b: ArrayD<f64>,
    pub stride: usize,
    pub pad: usize,
}

impl Conv2d {
    pub fn new(
        name: &str,
        cin: usize,
        cout: usize,
        k: usize,
        stride: usize,
        pad: usize,
        init: &mut Init,
    ) -> Self {
        Self {
            name: name.to_string(),
            w: init.sample(&[cout, cin, k, k], cin * k * k),
            b: ArrayD::zeros(IxDyn(&[cout])),
            stride,
            pad,
        }
    }

    pub fn bind(&self, t: &Tape, trainable: bool) -> BoundConv2d {
        BoundConv2d {
            w: t.leaf(self.w.clone(), trainable),
            b: t.leaf(self.b.clone(), trainable),
            stride: self.stride,
            pad: self.pad,
        }
    }
}

impl Params for Conv2d {
    fn visit(&self, f: &mut dyn FnMut(&str, &ArrayD<f64>)) {
        f(&format!("{}.w", self.name), &self.w);
        f(&format!("{}.b", self.name), &self.b);
    }
    fn visit_mut(&mut self, f: &mut dyn FnMut(&str, &mut ArrayD<f64>)) {
        f(&format!("{}.w", self.name), &mut self.w);
        f(&format!("{}.b", self.name), &mut self.b);
    }
}

#[derive(Debug, Clone, Copy)]
pub struct BoundConv2d {
    pub w: VarId,
    pub b: VarId,
    stride: usize,
    pad: usize,
}

impl BoundConv2d {
    pub fn apply(&self, t: &Tape, x: VarId) -> VarId {
        t.conv2d(x, self.w, Some(self.b), self.stride, self.pad)
    }

    pub fn var_ids(&self, out: &mut Vec<VarId>) {
        out.push(self.w);
        out.push(self.b);
    }
}

/// Fully connected layer.
#[derive(Debug, Clone)]
pub struct Linear {
    pub name: String,
    pub w: ArrayD<f64>, // [in, out]
    pub b: ArrayD<f64>, // [out]
}

impl Linear {
    pub fn new(name: &str, din: usize, dout: usize, init: &mut Init) -> Self {
        Self {
            name: name.to_string(),
            w: init.sample(&[din, dout], din),
            b: ArrayD::zeros(IxDyn(&[dout])),
        }
    }

    pub fn bind(&self, t: &Tape, trainable: bool) -> BoundLinear {
        BoundLinear {
            w: t.leaf(self.w.clone(), trainable),
            b: t.leaf(self.b.clone(), trainable),
        }
    }
}

impl Params for Linear {
    fn visit(&self, f: &mut dyn FnMut(&str, &ArrayD<f64>)) {
        f(&format!("{}.w", self.name), &self.w);
        f(&format!("{}.b", self.name), &self.b);
    }
    fn visit_mut(&mut self, f: &mut dyn FnMut(&str, &mut ArrayD<f64>)) {
        f(&format!("{}.w", self.name), &mut self.w);
        f(&format!("{}.b", self.name), &mut self.b);
    }
}

#[derive(Debug, Clone, Copy)]
pub struct BoundLinear {
    pub w: VarId,
    pub b: VarId,
}

impl BoundLinear {
    pub fn apply(&self, t: &Tape, x: VarId) -> VarId {
        let y = t.matmul(x, self.w);
        t.add_row_bias(y, self.b)
    }

    pub fn var_ids(&self, out: &mut Vec<VarId>) {
        out.push(self.w);
        out.push(self.b);
    }
}

/// Instance normalization: per-sample, per-channel spatial standardization
/// followed by a learned channel affine.
#[derive(Debug, Clone)]
pub struct InstanceNorm {
    pub name: String,
    pub gamma: ArrayD<f64>,
    pub beta: ArrayD<f64>,
    pub eps: f64,
}

impl InstanceNorm {
    pub fn new(name: &str, channels: usize) -> Self {
        Self {
            name: name.to_string(),
            gamma: ArrayD::from_elem(IxDyn(&[channels]), 1.0),
            beta: ArrayD::zeros(IxDyn(&[channels])),
            eps: 1e-5,
        }
    }

    pub fn bind(&self, t: &Tape, trainable: bool) -> BoundInstanceNorm {
        BoundInstanceNorm {
            gamma: t.leaf(self.gamma.clone(), trainable),
            beta: t.leaf(self.beta.clone(), trainable),
            eps: self.eps,
        }
    }
}

impl Params for InstanceNorm {
    fn visit(&self, f: &mut dyn FnMut(&str, &ArrayD<f64>)) {
        f(&format!("{}.gamma", self.name), &self.gamma);
        f(&format!("{}.beta", self.name), &self.beta);
    }
    fn visit_mut(&mut self, f: &mut dyn FnMut(&str, &mut ArrayD<f64>)) {
        f(&format!("{}.gamma", self.name), &mut self.gamma);
        f(&format!("{}.beta", self.name), &mut self.beta);
    }
}

#[derive(Debug, Clone, Copy)]
pub struct BoundInstanceNorm {
    pub gamma: VarId,
    pub beta: VarId,
    eps: f64,
}

impl BoundInstanceNorm {
    pub fn apply(&self, t: &Tape, x: VarId) -> VarId {
        let shape = t.shape(x);
        let (h, w) = (shape[2], shape[3]);
        let mu = t.mean_spatial(x);
        let centered = t.sub(x, t.broadcast_spatial(mu, h, w));
        let var = t.mean_spatial(t.mul(centered, centered));
        let std = t.sqrt(t.add_scalar(var, self.eps));
        let normed = t.div(centered, t.broadcast_spatial(std, h, w));
        t.affine_channel(normed, self.gamma, self.beta)
    }

    pub fn var_ids(&self, out: &mut Vec<VarId>) {
        out.push(self.gamma);
        out.push(self.beta);
    }
}
