use super::{child, Mode, Module, Param, Tensor, Visitor};

/// Per-channel batch normalization with running statistics for inference.
#[derive(Clone, Debug)]
pub struct BatchNorm2d {
    pub weight: Param,
    pub bias: Param,
    pub running_mean: Vec<f32>,
    pub running_var: Vec<f32>,
    pub eps: f32,
    pub momentum: f32,
    cache: Option<(Tensor, Vec<f32>)>,
}

impl BatchNorm2d {
    pub fn new(channels: usize) -> Self {
        Self {
            weight: Param::filled(&[channels], 1.0),
            bias: Param::zeros(&[channels]),
            running_mean: vec![0.0; channels],
            running_var: vec![1.0; channels],
            eps: 1e-5,
            momentum: 0.1,
            cache: None,
        }
    }

    pub fn channels(&self) -> usize {
        self.weight.len()
    }

    pub fn forward(&mut self, x: &Tensor, mode: Mode) -> Tensor {
        assert_eq!(x.c, self.channels(), "batch norm channel mismatch");
        let plane = x.plane_len();
        let count = x.n * plane;
        let mut out = Tensor::zeros(x.n, x.c, x.h, x.w);
        match mode {
            Mode::Eval => {
                for c in 0..x.c {
                    let scale = self.weight.value[c] / (self.running_var[c] + self.eps).sqrt();
                    let shift = self.bias.value[c] - self.running_mean[c] * scale;
                    for n in 0..x.n {
                        let off = (n * x.c + c) * plane;
                        for i in off..off + plane {
                            out.data[i] = x.data[i] * scale + shift;
                        }
                    }
                }
                self.cache = None;
            }
            Mode::Train => {
                let mut xhat = Tensor::zeros(x.n, x.c, x.h, x.w);
                let mut inv_stds = Vec::with_capacity(x.c);
                for c in 0..x.c {
                    let (mut sum, mut sq) = (0.0f64, 0.0f64);
                    for n in 0..x.n {
                        let off = (n * x.c + c) * plane;
                        for v in &x.data[off..off + plane] {
                            sum += *v as f64;
                            sq += (*v as f64) * (*v as f64);
                        }
                    }
                    let mean = sum / count as f64;
                    let var = (sq / count as f64 - mean * mean).max(0.0);
                    let inv_std = 1.0 / (var + self.eps as f64).sqrt();
                    let (g, b) = (self.weight.value[c], self.bias.value[c]);
                    for n in 0..x.n {
                        let off = (n * x.c + c) * plane;
                        for i in off..off + plane {
                            let h = ((x.data[i] as f64 - mean) * inv_std) as f32;
                            xhat.data[i] = h;
                            out.data[i] = h * g + b;
                        }
                    }
                    let unbiased = if count > 1 {
                        var * count as f64 / (count - 1) as f64
                    } else {
                        var
                    };
                    let m = self.momentum;
                    self.running_mean[c] = (1.0 - m) * self.running_mean[c] + m * mean as f32;
                    self.running_var[c] = (1.0 - m) * self.running_var[c] + m * unbiased as f32;
                    inv_stds.push(inv_std as f32);
                }
                self.cache = Some((xhat, inv_stds));
            }
        }
        out
    }

    pub fn backward(&mut self, grad: &Tensor) -> Tensor {
        let (xhat, inv_stds) = self
            .cache
            .take()
            .expect("batch norm backward without a training forward");
        let plane = grad.plane_len();
        let count = (grad.n * plane) as f64;
        let mut dx = Tensor::zeros(grad.n, grad.c, grad.h, grad.w);
        for c in 0..grad.c {
            let (mut sum_dy, mut sum_dy_xhat) = (0.0f64, 0.0f64);
            for n in 0..grad.n {
                let off = (n * grad.c + c) * plane;
                for i in off..off + plane {
                    sum_dy += grad.data[i] as f64;
                    sum_dy_xhat += grad.data[i] as f64 * xhat.data[i] as f64;
                }
            }
            self.weight.grad[c] += sum_dy_xhat as f32;
            self.bias.grad[c] += sum_dy as f32;
            let k = self.weight.value[c] as f64 * inv_stds[c] as f64 / count;
            for n in 0..grad.n {
                let off = (n * grad.c + c) * plane;
                for i in off..off + plane {
                    dx.data[i] =
                        (k * (count * grad.data[i] as f64
                            - sum_dy
                            - xhat.data[i] as f64 * sum_dy_xhat)) as f32;
                }
            }
        }
        dx
    }
}

impl Module for BatchNorm2d {
    fn visit(&mut self, prefix: &str, v: &mut dyn Visitor) {
        let shape = [self.channels()];
        v.param(&child(prefix, "weight"), &mut self.weight);
        v.param(&child(prefix, "bias"), &mut self.bias);
        v.buffer(
            &child(prefix, "running_mean"),
            &shape,
            &mut self.running_mean,
        );
        v.buffer(&child(prefix, "running_var"), &shape, &mut self.running_var);
    }
}
