//! Plain U-Net baseline with a single output head.

use rand::Rng;

use crate::error::{Error, Result};
use crate::nn::{
    child, concat_channels, split_channels, upsample_bilinear, upsample_bilinear_backward, Conv2d,
    MaxPool2, Mode, Module, Tensor, Visitor,
};
use crate::prednet::ConvStack;

pub const UNET_DEPTH: usize = 4;

#[derive(Clone, Debug)]
pub struct UNet {
    width: usize,
    inc: ConvStack,
    downs: Vec<(MaxPool2, ConvStack)>,
    ups: Vec<ConvStack>,
    out: Conv2d,
    sizes: Vec<(usize, usize)>,
}

impl UNet {
    /// Encoder widths are `width · 2^i` for `i` in `0..=4`.
    pub fn build(width: usize, rng: &mut impl Rng) -> Result<Self> {
        if width == 0 {
            return Err(Error::Config("U-Net width must be positive".into()));
        }
        let widths: Vec<usize> = (0..=UNET_DEPTH).map(|i| width << i).collect();
        let mut net = Self {
            width,
            inc: ConvStack::new(3, widths[0], 2, 1),
            downs: (1..=UNET_DEPTH)
                .map(|i| {
                    (
                        MaxPool2::default(),
                        ConvStack::new(widths[i - 1], widths[i], 2, 1),
                    )
                })
                .collect(),
            // up[i] merges level i+1 (upsampled) with the level-i skip.
            ups: (0..UNET_DEPTH)
                .map(|i| ConvStack::new(widths[i + 1] + widths[i], widths[i], 2, 1))
                .collect(),
            out: Conv2d::new(widths[0], 1, 1, 1, 1, true),
            sizes: Vec::new(),
        };
        net.inc.init(rng);
        net.downs.iter_mut().for_each(|(_, s)| s.init(rng));
        net.ups.iter_mut().for_each(|s| s.init(rng));
        net.out.init_xavier(rng);
        Ok(net)
    }

    pub fn input_multiple(&self) -> usize {
        1 << UNET_DEPTH
    }

    pub fn forward(&mut self, x: &Tensor, mode: Mode) -> Result<Tensor> {
        let m = self.input_multiple();
        if x.c != 3 || !x.h.is_multiple_of(m) || !x.w.is_multiple_of(m) || x.h == 0 {
            return Err(Error::Shape(format!(
                "U-Net expects 3 channels and sides divisible by {m}, got {:?}",
                x.shape()
            )));
        }
        let mut levels = vec![self.inc.forward(x, mode)];
        for (pool, conv) in &mut self.downs {
            let p = pool.forward(levels.last().expect("level"), mode);
            levels.push(conv.forward(&p, mode));
        }
        self.sizes = levels.iter().map(|t| (t.h, t.w)).collect();
        let mut h = levels.pop().expect("bottom");
        for i in (0..UNET_DEPTH).rev() {
            let skip = &levels[i];
            let up = upsample_bilinear(&h, skip.h, skip.w);
            h = self.ups[i].forward(&concat_channels(&up, skip), mode);
        }
        Ok(self.out.forward(&h, mode))
    }

    pub fn backward(&mut self, grad: &Tensor) {
        let mut g = self.out.backward(grad);
        let mut g_skip: Vec<Option<Tensor>> = vec![None; UNET_DEPTH];
        for i in 0..UNET_DEPTH {
            let g_cat = self.ups[i].backward(g);
            let (g_up, gs) = split_channels(&g_cat, self.width << (i + 1));
            g_skip[i] = Some(gs);
            let (bh, bw) = self.sizes[i + 1];
            g = upsample_bilinear_backward(&g_up, bh, bw);
        }
        for i in (0..UNET_DEPTH).rev() {
            let (pool, conv) = &mut self.downs[i];
            let mut gl = pool.backward(&conv.backward(g));
            gl.add_assign(g_skip[i].as_ref().expect("skip gradient"));
            g = gl;
        }
        self.inc.backward(g);
    }
}

impl Module for UNet {
    fn visit(&mut self, prefix: &str, v: &mut dyn Visitor) {
        self.inc.visit(&child(prefix, "inc"), v);
        for (i, (_, conv)) in self.downs.iter_mut().enumerate() {
            conv.visit(&child(prefix, &format!("down{}", i + 1)), v);
        }
        for (i, up) in self.ups.iter_mut().enumerate() {
            up.visit(&child(prefix, &format!("up{}", i + 1)), v);
        }
        self.out.visit(&child(prefix, "out"), v);
    }
}
