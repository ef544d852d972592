use rand::Rng;

use super::{child, BatchNorm2d, Conv2d, Mode, Module, Tensor, Visitor};
use crate::imageops::bilinear_taps;

#[derive(Clone, Debug, Default)]
pub struct Relu {
    output: Option<Tensor>,
}

impl Relu {
    pub fn forward(&mut self, mut x: Tensor, mode: Mode) -> Tensor {
        x.data.iter_mut().for_each(|v| *v = v.max(0.0));
        self.output = (mode == Mode::Train).then(|| x.clone());
        x
    }

    pub fn backward(&mut self, mut grad: Tensor) -> Tensor {
        let out = self
            .output
            .take()
            .expect("relu backward without a training forward");
        grad.data.iter_mut().zip(&out.data).for_each(|(g, y)| {
            if *y <= 0.0 {
                *g = 0.0
            }
        });
        grad
    }
}

/// Non-overlapping 2×2 max pooling (odd trailing rows/columns are dropped).
#[derive(Clone, Debug, Default)]
pub struct MaxPool2 {
    argmax: Option<(Vec<u32>, [usize; 4])>,
}

impl MaxPool2 {
    pub fn forward(&mut self, x: &Tensor, mode: Mode) -> Tensor {
        let (oh, ow) = (x.h / 2, x.w / 2);
        let mut out = Tensor::zeros(x.n, x.c, oh, ow);
        let mut arg = Vec::with_capacity(out.data.len());
        for plane in 0..x.n * x.c {
            let base = plane * x.h * x.w;
            for oy in 0..oh {
                for ox in 0..ow {
                    let mut best = base + 2 * oy * x.w + 2 * ox;
                    for (dy, dx) in [(0, 1), (1, 0), (1, 1)] {
                        let i = base + (2 * oy + dy) * x.w + 2 * ox + dx;
                        if x.data[i] > x.data[best] {
                            best = i;
                        }
                    }
                    out.data[(plane * oh + oy) * ow + ox] = x.data[best];
                    arg.push(best as u32);
                }
            }
        }
        self.argmax = (mode == Mode::Train).then(|| (arg, x.shape()));
        out
    }

    pub fn backward(&mut self, grad: &Tensor) -> Tensor {
        let (arg, [n, c, h, w]) = self
            .argmax
            .take()
            .expect("pool backward without a training forward");
        let mut dx = Tensor::zeros(n, c, h, w);
        for (g, i) in grad.data.iter().zip(arg) {
            dx.data[i as usize] += g;
        }
        dx
    }
}

/// Bilinear resize of every plane to `oh × ow` (half-pixel centres).
pub fn upsample_bilinear(x: &Tensor, oh: usize, ow: usize) -> Tensor {
    if (x.h, x.w) == (oh, ow) {
        return x.clone();
    }
    let rows = bilinear_taps(x.h, oh);
    let cols = bilinear_taps(x.w, ow);
    let mut out = Tensor::zeros(x.n, x.c, oh, ow);
    for plane in 0..x.n * x.c {
        let src = &x.data[plane * x.h * x.w..][..x.h * x.w];
        let dst = &mut out.data[plane * oh * ow..][..oh * ow];
        for (r, rt) in rows.iter().enumerate() {
            let (ty, lo, hi) = (
                rt.t as f32,
                &src[rt.lo * x.w..][..x.w],
                &src[rt.hi * x.w..][..x.w],
            );
            for (c, ct) in cols.iter().enumerate() {
                let tx = ct.t as f32;
                let top = lo[ct.lo] + (lo[ct.hi] - lo[ct.lo]) * tx;
                let bottom = hi[ct.lo] + (hi[ct.hi] - hi[ct.lo]) * tx;
                dst[r * ow + c] = top + (bottom - top) * ty;
            }
        }
    }
    out
}

/// Adjoint of [`upsample_bilinear`] back to an `ih × iw` input.
pub fn upsample_bilinear_backward(grad: &Tensor, ih: usize, iw: usize) -> Tensor {
    if (grad.h, grad.w) == (ih, iw) {
        return grad.clone();
    }
    let rows = bilinear_taps(ih, grad.h);
    let cols = bilinear_taps(iw, grad.w);
    let mut dx = Tensor::zeros(grad.n, grad.c, ih, iw);
    for plane in 0..grad.n * grad.c {
        let g = &grad.data[plane * grad.h * grad.w..][..grad.h * grad.w];
        let d = &mut dx.data[plane * ih * iw..][..ih * iw];
        for (r, rt) in rows.iter().enumerate() {
            let ty = rt.t as f32;
            for (c, ct) in cols.iter().enumerate() {
                let tx = ct.t as f32;
                let v = g[r * grad.w + c];
                let top = v * (1.0 - ty);
                let bottom = v * ty;
                d[rt.lo * iw + ct.lo] += top * (1.0 - tx);
                d[rt.lo * iw + ct.hi] += top * tx;
                d[rt.hi * iw + ct.lo] += bottom * (1.0 - tx);
                d[rt.hi * iw + ct.hi] += bottom * tx;
            }
        }
    }
    dx
}

pub fn concat_channels(a: &Tensor, b: &Tensor) -> Tensor {
    assert_eq!(
        (a.n, a.h, a.w),
        (b.n, b.h, b.w),
        "concat needs equal batch and spatial size"
    );
    let mut out = Tensor::zeros(a.n, a.c + b.c, a.h, a.w);
    for n in 0..a.n {
        let dst = out.sample_mut(n);
        dst[..a.sample_len()].copy_from_slice(a.sample(n));
        dst[a.sample_len()..].copy_from_slice(b.sample(n));
    }
    out
}

/// Splits a gradient of `concat_channels(a, b)` back into its two parts.
pub fn split_channels(g: &Tensor, first: usize) -> (Tensor, Tensor) {
    let mut a = Tensor::zeros(g.n, first, g.h, g.w);
    let mut b = Tensor::zeros(g.n, g.c - first, g.h, g.w);
    let cut = first * g.plane_len();
    for n in 0..g.n {
        a.sample_mut(n).copy_from_slice(&g.sample(n)[..cut]);
        b.sample_mut(n).copy_from_slice(&g.sample(n)[cut..]);
    }
    (a, b)
}

/// 3×3 convolution (no bias) → batch norm → ReLU.
#[derive(Clone, Debug)]
pub struct ConvBnRelu {
    pub conv: Conv2d,
    pub bn: BatchNorm2d,
    relu: Relu,
}

impl ConvBnRelu {
    pub fn new(cin: usize, cout: usize, stride: usize, dilation: usize) -> Self {
        Self {
            conv: Conv2d::new(cin, cout, 3, stride, dilation, false),
            bn: BatchNorm2d::new(cout),
            relu: Relu::default(),
        }
    }

    pub fn init(&mut self, rng: &mut impl Rng) {
        self.conv.init_xavier(rng);
    }

    pub fn forward(&mut self, x: &Tensor, mode: Mode) -> Tensor {
        let y = self.conv.forward(x, mode);
        let y = self.bn.forward(&y, mode);
        self.relu.forward(y, mode)
    }

    pub fn backward(&mut self, grad: Tensor) -> Tensor {
        let g = self.relu.backward(grad);
        let g = self.bn.backward(&g);
        self.conv.backward(&g)
    }
}

impl Module for ConvBnRelu {
    fn visit(&mut self, prefix: &str, v: &mut dyn Visitor) {
        self.conv.visit(&child(prefix, "conv"), v);
        self.bn.visit(&child(prefix, "bn"), v);
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pool_routes_gradient_to_the_maximum() {
        let x = Tensor::from_vec(1, 1, 2, 4, vec![1.0, 5.0, 0.0, 0.0, 2.0, 3.0, 0.0, 7.0]);
        let mut p = MaxPool2::default();
        let y = p.forward(&x, Mode::Train);
        assert_eq!(y.data, vec![5.0, 7.0]);
        let dx = p.backward(&Tensor::from_vec(1, 1, 1, 2, vec![1.0, 2.0]));
        assert_eq!(dx.data, vec![0.0, 1.0, 0.0, 0.0, 0.0, 0.0, 0.0, 2.0]);
    }

    #[test]
    fn upsample_backward_is_adjoint() {
        let x = Tensor::from_vec(
            1,
            2,
            3,
            2,
            (0..12).map(|i| (i as f32 * 0.37).sin()).collect(),
        );
        let g = Tensor::from_vec(
            1,
            2,
            7,
            5,
            (0..70).map(|i| (i as f32 * 0.11).cos()).collect(),
        );
        let y = upsample_bilinear(&x, 7, 5);
        let lhs: f64 = y
            .data
            .iter()
            .zip(&g.data)
            .map(|(a, b)| (*a as f64) * (*b as f64))
            .sum();
        let dx = upsample_bilinear_backward(&g, 3, 2);
        let rhs: f64 = x
            .data
            .iter()
            .zip(&dx.data)
            .map(|(a, b)| (*a as f64) * (*b as f64))
            .sum();
        assert!((lhs - rhs).abs() < 1e-4, "{lhs} vs {rhs}");
    }

    #[test]
    fn concat_split_round_trip() {
        let a = Tensor::from_vec(2, 1, 1, 2, vec![1.0, 2.0, 3.0, 4.0]);
        let b = Tensor::from_vec(2, 2, 1, 2, vec![5.0, 6.0, 7.0, 8.0, 9.0, 10.0, 11.0, 12.0]);
        let c = concat_channels(&a, &b);
        assert_eq!(&c.data[..6], &[1.0, 2.0, 5.0, 6.0, 7.0, 8.0]);
        let (a2, b2) = split_channels(&c, 1);
        assert_eq!((a2, b2), (a, b));
    }
}
