//! A small NCHW layer library with explicit backward passes.
//!
//! Layers cache what their backward pass needs during a training-mode
//! forward call; `backward` consumes that cache, accumulates parameter
//! gradients and returns the gradient with respect to the layer input.

mod conv;
mod norm;
mod ops;
mod optim;

pub use conv::Conv2d;
pub use norm::BatchNorm2d;
pub use ops::{
    concat_channels, split_channels, upsample_bilinear, upsample_bilinear_backward, ConvBnRelu,
    MaxPool2, Relu,
};
pub use optim::{Adam, AdamConfig};

use rand::Rng;

/// Whether a forward pass records state for backpropagation.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Mode {
    Train,
    Eval,
}

/// Dense 4-D tensor in `[batch, channels, height, width]` order.
#[derive(Clone, Debug, PartialEq)]
pub struct Tensor {
    pub n: usize,
    pub c: usize,
    pub h: usize,
    pub w: usize,
    pub data: Vec<f32>,
}

impl Tensor {
    pub fn zeros(n: usize, c: usize, h: usize, w: usize) -> Self {
        Self {
            n,
            c,
            h,
            w,
            data: vec![0.0; n * c * h * w],
        }
    }

    pub fn from_vec(n: usize, c: usize, h: usize, w: usize, data: Vec<f32>) -> Self {
        assert_eq!(
            data.len(),
            n * c * h * w,
            "tensor data length does not match shape"
        );
        Self { n, c, h, w, data }
    }

    pub fn shape(&self) -> [usize; 4] {
        [self.n, self.c, self.h, self.w]
    }

    pub fn plane_len(&self) -> usize {
        self.h * self.w
    }

    pub fn sample_len(&self) -> usize {
        self.c * self.h * self.w
    }

    pub fn sample(&self, i: usize) -> &[f32] {
        let len = self.sample_len();
        &self.data[i * len..(i + 1) * len]
    }

    pub fn sample_mut(&mut self, i: usize) -> &mut [f32] {
        let len = self.sample_len();
        &mut self.data[i * len..(i + 1) * len]
    }

    pub fn add_assign(&mut self, other: &Tensor) {
        assert_eq!(self.shape(), other.shape());
        self.data
            .iter_mut()
            .zip(&other.data)
            .for_each(|(a, b)| *a += b);
    }
}

/// A trainable parameter and its accumulated gradient.
#[derive(Clone, Debug, PartialEq)]
pub struct Param {
    pub shape: Vec<usize>,
    pub value: Vec<f32>,
    pub grad: Vec<f32>,
}

impl Param {
    pub fn zeros(shape: &[usize]) -> Self {
        let len = shape.iter().product();
        Self {
            shape: shape.to_vec(),
            value: vec![0.0; len],
            grad: vec![0.0; len],
        }
    }

    pub fn filled(shape: &[usize], v: f32) -> Self {
        let mut p = Self::zeros(shape);
        p.value.fill(v);
        p
    }

    pub fn len(&self) -> usize {
        self.value.len()
    }

    pub fn is_empty(&self) -> bool {
        self.value.is_empty()
    }

    /// Glorot/Xavier uniform with conv fan conventions (`fan = channels · k · k`).
    pub fn xavier_uniform(&mut self, rng: &mut impl Rng) {
        let receptive: usize = self.shape.iter().skip(2).product();
        let fan_out = self.shape[0] * receptive;
        let fan_in = self.shape.get(1).copied().unwrap_or(1) * receptive;
        let bound = (6.0 / (fan_in + fan_out) as f64).sqrt() as f32;
        for v in &mut self.value {
            *v = rng.gen_range(-bound..bound);
        }
    }
}

/// Receives every named parameter and buffer of a module tree.
pub trait Visitor {
    fn param(&mut self, name: &str, param: &mut Param);

    /// Non-trainable state, such as batch-norm running statistics.
    fn buffer(&mut self, _name: &str, _shape: &[usize], _data: &mut Vec<f32>) {}
}

pub trait Module {
    fn visit(&mut self, prefix: &str, visitor: &mut dyn Visitor);
}

/// `prefix.name`, or `name` at the root.
pub fn child(prefix: &str, name: &str) -> String {
    if prefix.is_empty() {
        name.to_string()
    } else {
        format!("{prefix}.{name}")
    }
}

struct FnVisitor<F>(F);

impl<F: FnMut(&str, &mut Param)> Visitor for FnVisitor<F> {
    fn param(&mut self, name: &str, param: &mut Param) {
        (self.0)(name, param)
    }
}

/// Calls `f` on every parameter of `module` with its full name.
pub fn for_each_param(module: &mut dyn Module, f: impl FnMut(&str, &mut Param)) {
    module.visit("", &mut FnVisitor(f));
}

pub fn zero_grad(module: &mut dyn Module) {
    for_each_param(module, |_, p| p.grad.fill(0.0));
}

pub fn parameter_count(module: &mut dyn Module) -> usize {
    let mut n = 0;
    for_each_param(module, |_, p| n += p.len());
    n
}

/// Names and shapes of every parameter and buffer, in visiting order.
pub fn layout(module: &mut dyn Module) -> Vec<(String, Vec<usize>, bool)> {
    struct Collect(Vec<(String, Vec<usize>, bool)>);
    impl Visitor for Collect {
        fn param(&mut self, name: &str, p: &mut Param) {
            self.0.push((name.to_string(), p.shape.clone(), true));
        }
        fn buffer(&mut self, name: &str, shape: &[usize], _: &mut Vec<f32>) {
            self.0.push((name.to_string(), shape.to_vec(), false));
        }
    }
    let mut c = Collect(Vec::new());
    module.visit("", &mut c);
    c.0
}
