use rand::Rng;

use super::{child, Mode, Module, Param, Tensor, Visitor};

/// 2-D convolution (cross-correlation) lowered to a matrix product.
#[derive(Clone, Debug)]
pub struct Conv2d {
    pub weight: Param,
    pub bias: Option<Param>,
    in_channels: usize,
    out_channels: usize,
    kernel: usize,
    stride: usize,
    padding: usize,
    dilation: usize,
    input: Option<Tensor>,
}

impl Conv2d {
    /// Square kernel with "same" padding for stride 1.
    pub fn new(
        in_channels: usize,
        out_channels: usize,
        kernel: usize,
        stride: usize,
        dilation: usize,
        bias: bool,
    ) -> Self {
        Self {
            weight: Param::zeros(&[out_channels, in_channels, kernel, kernel]),
            bias: bias.then(|| Param::zeros(&[out_channels])),
            in_channels,
            out_channels,
            kernel,
            stride,
            padding: dilation * (kernel - 1) / 2,
            dilation,
            input: None,
        }
    }

    pub fn init_xavier(&mut self, rng: &mut impl Rng) {
        self.weight.xavier_uniform(rng);
        if let Some(b) = &mut self.bias {
            b.value.fill(0.0);
        }
    }

    pub fn in_channels(&self) -> usize {
        self.in_channels
    }

    pub fn out_channels(&self) -> usize {
        self.out_channels
    }

    pub fn dilation(&self) -> usize {
        self.dilation
    }

    pub fn stride(&self) -> usize {
        self.stride
    }

    pub fn kernel(&self) -> usize {
        self.kernel
    }

    pub fn output_size(&self, h: usize, w: usize) -> (usize, usize) {
        let span = self.dilation * (self.kernel - 1) + 1;
        (
            (h + 2 * self.padding - span) / self.stride + 1,
            (w + 2 * self.padding - span) / self.stride + 1,
        )
    }

    fn is_pointwise(&self) -> bool {
        self.kernel == 1 && self.stride == 1 && self.padding == 0
    }

    fn im2col(&self, x: &[f32], h: usize, w: usize, oh: usize, ow: usize, cols: &mut Vec<f32>) {
        let k = self.kernel;
        let p = oh * ow;
        cols.clear();
        cols.resize(self.in_channels * k * k * p, 0.0);
        for ci in 0..self.in_channels {
            let plane = &x[ci * h * w..(ci + 1) * h * w];
            for ky in 0..k {
                for kx in 0..k {
                    let row = &mut cols[((ci * k + ky) * k + kx) * p..][..p];
                    let dy = (ky * self.dilation) as isize - self.padding as isize;
                    let dx = (kx * self.dilation) as isize - self.padding as isize;
                    for oy in 0..oh {
                        let iy = (oy * self.stride) as isize + dy;
                        if iy < 0 || iy >= h as isize {
                            continue;
                        }
                        let src = &plane[iy as usize * w..][..w];
                        let dst = &mut row[oy * ow..][..ow];
                        if self.stride == 1 {
                            let lo = (-dx).max(0) as usize;
                            let hi = ((w as isize - dx).min(ow as isize)).max(0) as usize;
                            if lo < hi {
                                let s0 = (lo as isize + dx) as usize;
                                dst[lo..hi].copy_from_slice(&src[s0..s0 + (hi - lo)]);
                            }
                        } else {
                            for (ox, d) in dst.iter_mut().enumerate() {
                                let ix = (ox * self.stride) as isize + dx;
                                if ix >= 0 && ix < w as isize {
                                    *d = src[ix as usize];
                                }
                            }
                        }
                    }
                }
            }
        }
    }

    fn col2im(&self, cols: &[f32], h: usize, w: usize, oh: usize, ow: usize, out: &mut [f32]) {
        let k = self.kernel;
        let p = oh * ow;
        for ci in 0..self.in_channels {
            let plane = &mut out[ci * h * w..(ci + 1) * h * w];
            for ky in 0..k {
                for kx in 0..k {
                    let row = &cols[((ci * k + ky) * k + kx) * p..][..p];
                    let dy = (ky * self.dilation) as isize - self.padding as isize;
                    let dx = (kx * self.dilation) as isize - self.padding as isize;
                    for oy in 0..oh {
                        let iy = (oy * self.stride) as isize + dy;
                        if iy < 0 || iy >= h as isize {
                            continue;
                        }
                        let dst = &mut plane[iy as usize * w..][..w];
                        let src = &row[oy * ow..][..ow];
                        for (ox, v) in src.iter().enumerate() {
                            let ix = (ox * self.stride) as isize + dx;
                            if ix >= 0 && ix < w as isize {
                                dst[ix as usize] += v;
                            }
                        }
                    }
                }
            }
        }
    }

    pub fn forward(&mut self, x: &Tensor, mode: Mode) -> Tensor {
        assert_eq!(
            x.c, self.in_channels,
            "conv expects {} input channels, got {}",
            self.in_channels, x.c
        );
        let (oh, ow) = self.output_size(x.h, x.w);
        let p = oh * ow;
        let kk = self.in_channels * self.kernel * self.kernel;
        let mut out = Tensor::zeros(x.n, self.out_channels, oh, ow);
        let mut cols = Vec::new();
        for n in 0..x.n {
            let b: &[f32] = if self.is_pointwise() {
                x.sample(n)
            } else {
                self.im2col(x.sample(n), x.h, x.w, oh, ow, &mut cols);
                &cols
            };
            let y = out.sample_mut(n);
            if let Some(bias) = &self.bias {
                for (o, bv) in bias.value.iter().enumerate() {
                    y[o * p..(o + 1) * p].fill(*bv);
                }
            }
            // SAFETY: slice lengths match the dimensions and strides passed.
            unsafe {
                matrixmultiply::sgemm(
                    self.out_channels,
                    kk,
                    p,
                    1.0,
                    self.weight.value.as_ptr(),
                    kk as isize,
                    1,
                    b.as_ptr(),
                    p as isize,
                    1,
                    if self.bias.is_some() { 1.0 } else { 0.0 },
                    y.as_mut_ptr(),
                    p as isize,
                    1,
                );
            }
        }
        self.input = (mode == Mode::Train).then(|| x.clone());
        out
    }

    pub fn backward(&mut self, grad: &Tensor) -> Tensor {
        let x = self
            .input
            .take()
            .expect("conv backward without a training forward");
        let (oh, ow) = (grad.h, grad.w);
        let p = oh * ow;
        let kk = self.in_channels * self.kernel * self.kernel;
        let mut dx = Tensor::zeros(x.n, x.c, x.h, x.w);
        let mut cols = Vec::new();
        let mut dcols = vec![0.0f32; kk * p];
        for n in 0..x.n {
            let g = grad.sample(n);
            if let Some(bias) = &mut self.bias {
                for (o, bg) in bias.grad.iter_mut().enumerate() {
                    *bg += g[o * p..(o + 1) * p].iter().sum::<f32>();
                }
            }
            let pointwise = self.is_pointwise();
            let b: &[f32] = if pointwise {
                x.sample(n)
            } else {
                self.im2col(x.sample(n), x.h, x.w, oh, ow, &mut cols);
                &cols
            };
            // SAFETY: as in forward; operands are row/column views of dense buffers.
            unsafe {
                // dW += dY · colsᵀ
                matrixmultiply::sgemm(
                    self.out_channels,
                    p,
                    kk,
                    1.0,
                    g.as_ptr(),
                    p as isize,
                    1,
                    b.as_ptr(),
                    1,
                    p as isize,
                    1.0,
                    self.weight.grad.as_mut_ptr(),
                    kk as isize,
                    1,
                );
                // dcols = Wᵀ · dY
                let target: *mut f32 = if pointwise {
                    dx.sample_mut(n).as_mut_ptr()
                } else {
                    dcols.as_mut_ptr()
                };
                matrixmultiply::sgemm(
                    kk,
                    self.out_channels,
                    p,
                    1.0,
                    self.weight.value.as_ptr(),
                    1,
                    kk as isize,
                    g.as_ptr(),
                    p as isize,
                    1,
                    0.0,
                    target,
                    p as isize,
                    1,
                );
            }
            if !pointwise {
                self.col2im(&dcols, x.h, x.w, oh, ow, dx.sample_mut(n));
            }
        }
        dx
    }
}

impl Module for Conv2d {
    fn visit(&mut self, prefix: &str, v: &mut dyn Visitor) {
        v.param(&child(prefix, "weight"), &mut self.weight);
        if let Some(b) = &mut self.bias {
            v.param(&child(prefix, "bias"), b);
        }
    }
}
