//! Residual refinement modules.
//!
//! Each variant maps the coarse 1-channel logits to a residual at the same
//! resolution; the refined logits are `coarse + residual`, so one sigmoid at
//! the end keeps the refined probabilities inside (0, 1).

use std::fmt;
use std::str::FromStr;

use rand::Rng;

use crate::error::{Error, Result};
use crate::nn::{
    child, concat_channels, split_channels, upsample_bilinear, upsample_bilinear_backward, Conv2d,
    ConvBnRelu, MaxPool2, Mode, Module, Relu, Tensor, Visitor,
};

/// Depth of the encoder and decoder of the encoder-decoder variant.
pub const RRM_STAGES: usize = 4;
pub const MS_DILATIONS: [usize; 4] = [1, 2, 4, 8];
pub const LC_LAYERS: usize = 4;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum RrmKind {
    /// Encoder-decoder with four single-conv stages and a bridge.
    Ours,
    /// Plain stack of full-resolution 3×3 convolutions.
    Lc,
    /// Parallel dilated 3×3 branches fused by a 1×1 convolution.
    Ms,
}

impl fmt::Display for RrmKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Ours => "ours",
            Self::Lc => "lc",
            Self::Ms => "ms",
        })
    }
}

impl FromStr for RrmKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "ours" => Ok(Self::Ours),
            "lc" => Ok(Self::Lc),
            "ms" => Ok(Self::Ms),
            other => Err(Error::Config(format!(
                "unknown refinement module {other:?}"
            ))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct RrmConfig {
    pub kind: RrmKind,
    pub width: usize,
}

impl RrmConfig {
    pub fn new(kind: RrmKind) -> Self {
        Self { kind, width: 64 }
    }
}

#[derive(Clone, Debug)]
struct EncoderDecoder {
    input: Conv2d,
    encoder: Vec<ConvBnRelu>,
    pools: Vec<MaxPool2>,
    bridge: ConvBnRelu,
    decoder: Vec<ConvBnRelu>,
    output: Conv2d,
    sizes: Vec<(usize, usize)>,
}

impl EncoderDecoder {
    fn new(w: usize) -> Self {
        Self {
            input: Conv2d::new(1, w, 3, 1, 1, true),
            encoder: (0..RRM_STAGES)
                .map(|_| ConvBnRelu::new(w, w, 1, 1))
                .collect(),
            pools: (0..RRM_STAGES).map(|_| MaxPool2::default()).collect(),
            bridge: ConvBnRelu::new(w, w, 1, 1),
            decoder: (0..RRM_STAGES)
                .map(|_| ConvBnRelu::new(2 * w, w, 1, 1))
                .collect(),
            output: Conv2d::new(w, 1, 3, 1, 1, true),
            sizes: Vec::new(),
        }
    }

    fn init(&mut self, rng: &mut impl Rng) {
        self.input.init_xavier(rng);
        self.encoder.iter_mut().for_each(|l| l.init(rng));
        self.bridge.init(rng);
        self.decoder.iter_mut().for_each(|l| l.init(rng));
        self.output.init_xavier(rng);
    }

    fn forward(&mut self, x: &Tensor, mode: Mode) -> Tensor {
        let mut h = self.input.forward(x, mode);
        let mut skips = Vec::with_capacity(RRM_STAGES);
        self.sizes.clear();
        for (enc, pool) in self.encoder.iter_mut().zip(&mut self.pools) {
            let e = enc.forward(&h, mode);
            self.sizes.push((e.h, e.w));
            h = pool.forward(&e, mode);
            skips.push(e);
        }
        self.sizes.push((h.h, h.w));
        let mut d = self.bridge.forward(&h, mode);
        for (i, dec) in self.decoder.iter_mut().enumerate().rev() {
            let skip = &skips[i];
            let up = upsample_bilinear(&d, skip.h, skip.w);
            d = dec.forward(&concat_channels(&up, skip), mode);
        }
        self.output.forward(&d, mode)
    }

    fn backward(&mut self, grad: &Tensor) -> Tensor {
        let w = self.output.in_channels();
        let mut g = self.output.backward(grad);
        let mut g_skips: Vec<Option<Tensor>> = vec![None; RRM_STAGES];
        for i in 0..RRM_STAGES {
            let g_cat = self.decoder[i].backward(g);
            let (g_up, g_skip) = split_channels(&g_cat, w);
            g_skips[i] = Some(g_skip);
            let (bh, bw) = self.sizes[i + 1];
            g = upsample_bilinear_backward(&g_up, bh, bw);
        }
        let mut g = self.bridge.backward(g);
        for i in (0..RRM_STAGES).rev() {
            let mut ge = self.pools[i].backward(&g);
            ge.add_assign(g_skips[i].as_ref().expect("skip gradient"));
            g = self.encoder[i].backward(ge);
        }
        self.input.backward(&g)
    }
}

#[derive(Clone, Debug)]
struct LocalStack {
    convs: Vec<Conv2d>,
    relus: Vec<Relu>,
}

impl LocalStack {
    fn new(w: usize) -> Self {
        let convs = (0..LC_LAYERS)
            .map(|i| {
                let cin = if i == 0 { 1 } else { w };
                let cout = if i + 1 == LC_LAYERS { 1 } else { w };
                Conv2d::new(cin, cout, 3, 1, 1, true)
            })
            .collect();
        Self {
            convs,
            relus: vec![Relu::default(); LC_LAYERS - 1],
        }
    }

    fn forward(&mut self, x: &Tensor, mode: Mode) -> Tensor {
        let mut h = x.clone();
        for i in 0..LC_LAYERS {
            h = self.convs[i].forward(&h, mode);
            if i + 1 < LC_LAYERS {
                h = self.relus[i].forward(h, mode);
            }
        }
        h
    }

    fn backward(&mut self, grad: &Tensor) -> Tensor {
        let mut g = grad.clone();
        for i in (0..LC_LAYERS).rev() {
            if i + 1 < LC_LAYERS {
                g = self.relus[i].backward(g);
            }
            g = self.convs[i].backward(&g);
        }
        g
    }
}

#[derive(Clone, Debug)]
struct MultiScale {
    branches: Vec<ConvBnRelu>,
    fuse: Conv2d,
    width: usize,
}

impl MultiScale {
    fn new(w: usize) -> Self {
        Self {
            branches: MS_DILATIONS
                .iter()
                .map(|d| ConvBnRelu::new(1, w, 1, *d))
                .collect(),
            fuse: Conv2d::new(w * MS_DILATIONS.len(), 1, 1, 1, 1, true),
            width: w,
        }
    }

    fn forward(&mut self, x: &Tensor, mode: Mode) -> Tensor {
        let mut cat: Option<Tensor> = None;
        for b in &mut self.branches {
            let y = b.forward(x, mode);
            cat = Some(match cat {
                None => y,
                Some(c) => concat_channels(&c, &y),
            });
        }
        self.fuse.forward(&cat.expect("at least one branch"), mode)
    }

    fn backward(&mut self, grad: &Tensor) -> Tensor {
        let mut g_cat = self.fuse.backward(grad);
        let mut dx: Option<Tensor> = None;
        for b in self.branches.iter_mut().rev() {
            let (rest, mine) = split_channels(&g_cat, g_cat.c - self.width);
            let d = b.backward(mine);
            match &mut dx {
                None => dx = Some(d),
                Some(t) => t.add_assign(&d),
            }
            g_cat = rest;
        }
        dx.expect("at least one branch")
    }
}

#[derive(Clone, Debug)]
enum Body {
    Ours(EncoderDecoder),
    Lc(LocalStack),
    Ms(MultiScale),
}

/// A refinement module of any kind.
#[derive(Clone, Debug)]
pub struct RefinementModule {
    config: RrmConfig,
    body: Body,
}

impl RefinementModule {
    pub fn build(config: RrmConfig, rng: &mut impl Rng) -> Result<Self> {
        if config.width == 0 {
            return Err(Error::Config("refinement width must be positive".into()));
        }
        let w = config.width;
        let body = match config.kind {
            RrmKind::Ours => {
                let mut b = EncoderDecoder::new(w);
                b.init(rng);
                Body::Ours(b)
            }
            RrmKind::Lc => {
                let mut b = LocalStack::new(w);
                b.convs.iter_mut().for_each(|c| c.init_xavier(rng));
                Body::Lc(b)
            }
            RrmKind::Ms => {
                let mut b = MultiScale::new(w);
                b.branches.iter_mut().for_each(|l| l.init(rng));
                b.fuse.init_xavier(rng);
                Body::Ms(b)
            }
        };
        Ok(Self { config, body })
    }

    pub fn config(&self) -> RrmConfig {
        self.config
    }

    /// Required divisor of the input height and width.
    pub fn input_multiple(&self) -> usize {
        match self.config.kind {
            RrmKind::Ours => 1 << RRM_STAGES,
            _ => 1,
        }
    }

    /// Residual logits for the given coarse logits.
    pub fn residual(&mut self, coarse: &Tensor, mode: Mode) -> Result<Tensor> {
        if coarse.c != 1 {
            return Err(Error::Shape(format!(
                "refinement expects 1 channel, got {}",
                coarse.c
            )));
        }
        let m = self.input_multiple();
        if !coarse.h.is_multiple_of(m) || !coarse.w.is_multiple_of(m) {
            return Err(Error::Shape(format!(
                "refinement input {}x{} must be divisible by {m}",
                coarse.h, coarse.w
            )));
        }
        Ok(match &mut self.body {
            Body::Ours(b) => b.forward(coarse, mode),
            Body::Lc(b) => b.forward(coarse, mode),
            Body::Ms(b) => b.forward(coarse, mode),
        })
    }

    /// Refined logits `coarse + residual(coarse)`.
    pub fn forward(&mut self, coarse: &Tensor, mode: Mode) -> Result<Tensor> {
        let mut out = self.residual(coarse, mode)?;
        out.add_assign(coarse);
        Ok(out)
    }

    /// Gradient with respect to the coarse logits, through both the identity
    /// path and the residual branch.
    pub fn backward(&mut self, grad: &Tensor) -> Tensor {
        let mut g = match &mut self.body {
            Body::Ours(b) => b.backward(grad),
            Body::Lc(b) => b.backward(grad),
            Body::Ms(b) => b.backward(grad),
        };
        g.add_assign(grad);
        g
    }

    /// Zeros the final layer so the residual vanishes identically.
    pub fn zero_residual(&mut self) {
        let last = match &mut self.body {
            Body::Ours(b) => &mut b.output,
            Body::Lc(b) => b.convs.last_mut().expect("layers"),
            Body::Ms(b) => &mut b.fuse,
        };
        last.weight.value.fill(0.0);
        if let Some(bias) = &mut last.bias {
            bias.value.fill(0.0);
        }
    }

    /// Receptive field (pixels, one side) of one residual output pixel.
    pub fn receptive_field(&self) -> usize {
        receptive_field(&self.layer_ledger())
    }

    /// Spatial operators along the longest path from input to residual.
    pub fn layer_ledger(&self) -> Vec<SpatialOp> {
        match &self.body {
            Body::Ours(_) => {
                let mut ops = vec![SpatialOp::Conv {
                    kernel: 3,
                    dilation: 1,
                }];
                for _ in 0..RRM_STAGES {
                    ops.push(SpatialOp::Conv {
                        kernel: 3,
                        dilation: 1,
                    });
                    ops.push(SpatialOp::Pool2);
                }
                ops.push(SpatialOp::Conv {
                    kernel: 3,
                    dilation: 1,
                });
                for _ in 0..RRM_STAGES {
                    ops.push(SpatialOp::Upsample2);
                    ops.push(SpatialOp::Conv {
                        kernel: 3,
                        dilation: 1,
                    });
                }
                ops.push(SpatialOp::Conv {
                    kernel: 3,
                    dilation: 1,
                });
                ops
            }
            Body::Lc(_) => vec![
                SpatialOp::Conv {
                    kernel: 3,
                    dilation: 1
                };
                LC_LAYERS
            ],
            Body::Ms(_) => vec![
                SpatialOp::Conv {
                    kernel: 3,
                    dilation: *MS_DILATIONS.iter().max().expect("dilations"),
                },
                SpatialOp::Conv {
                    kernel: 1,
                    dilation: 1,
                },
            ],
        }
    }
}

/// A spatial operator for receptive-field bookkeeping.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SpatialOp {
    Conv { kernel: usize, dilation: usize },
    Pool2,
    Upsample2,
}

/// Classic receptive-field recurrence: `rf += (k_eff − 1) · jump`, where
/// the jump doubles after a 2× pool and halves after a 2× upsample. Bilinear
/// upsampling reads a 2-tap neighbourhood at the coarse scale.
pub fn receptive_field(ops: &[SpatialOp]) -> usize {
    let mut rf = 1.0f64;
    let mut jump = 1.0f64;
    for op in ops {
        match *op {
            SpatialOp::Conv { kernel, dilation } => rf += ((kernel - 1) * dilation) as f64 * jump,
            SpatialOp::Pool2 => {
                rf += jump;
                jump *= 2.0;
            }
            SpatialOp::Upsample2 => {
                rf += jump;
                jump /= 2.0;
            }
        }
    }
    rf as usize
}

impl Module for RefinementModule {
    fn visit(&mut self, prefix: &str, v: &mut dyn Visitor) {
        match &mut self.body {
            Body::Ours(b) => {
                b.input.visit(&child(prefix, "input"), v);
                for (i, l) in b.encoder.iter_mut().enumerate() {
                    l.visit(&child(prefix, &format!("encoder{}", i + 1)), v);
                }
                b.bridge.visit(&child(prefix, "bridge"), v);
                for (i, l) in b.decoder.iter_mut().enumerate() {
                    l.visit(&child(prefix, &format!("decoder{}", i + 1)), v);
                }
                b.output.visit(&child(prefix, "output"), v);
            }
            Body::Lc(b) => {
                for (i, c) in b.convs.iter_mut().enumerate() {
                    c.visit(&child(prefix, &format!("conv{i}")), v);
                }
            }
            Body::Ms(b) => {
                for (d, l) in MS_DILATIONS.iter().zip(&mut b.branches) {
                    l.visit(&child(prefix, &format!("dilation{d}")), v);
                }
                b.fuse.visit(&child(prefix, "fuse"), v);
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn coarse(h: usize, w: usize) -> Tensor {
        Tensor::from_vec(
            1,
            1,
            h,
            w,
            (0..h * w)
                .map(|i| ((i * 7919) % 13) as f32 / 3.0 - 2.0)
                .collect(),
        )
    }

    #[test]
    fn encoder_resolutions_at_288() {
        let mut m = RefinementModule::build(
            RrmConfig {
                kind: RrmKind::Ours,
                width: 4,
            },
            &mut ChaCha8Rng::seed_from_u64(0),
        )
        .unwrap();
        m.forward(&coarse(288, 288), Mode::Eval).unwrap();
        let Body::Ours(b) = &m.body else {
            unreachable!()
        };
        let res: Vec<usize> = b.sizes.iter().map(|s| s.0).collect();
        assert_eq!(res, vec![288, 144, 72, 36, 18]);
    }

    #[test]
    fn every_kind_preserves_shape() {
        for kind in [RrmKind::Ours, RrmKind::Lc, RrmKind::Ms] {
            let mut m = RefinementModule::build(
                RrmConfig { kind, width: 4 },
                &mut ChaCha8Rng::seed_from_u64(1),
            )
            .unwrap();
            let y = m.forward(&coarse(32, 48), Mode::Eval).unwrap();
            assert_eq!(y.shape(), [1, 1, 32, 48], "{kind}");
            assert!(y.data.iter().all(|v| v.is_finite()));
        }
    }

    #[test]
    fn zero_residual_gives_identity() {
        for kind in [RrmKind::Ours, RrmKind::Lc, RrmKind::Ms] {
            let mut m = RefinementModule::build(
                RrmConfig { kind, width: 4 },
                &mut ChaCha8Rng::seed_from_u64(2),
            )
            .unwrap();
            m.zero_residual();
            let x = coarse(32, 32);
            assert_eq!(m.forward(&x, Mode::Eval).unwrap(), x);
        }
    }

    #[test]
    fn local_receptive_field_is_much_smaller() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let lc = RefinementModule::build(RrmConfig::new(RrmKind::Lc), &mut rng).unwrap();
        let ours = RefinementModule::build(RrmConfig::new(RrmKind::Ours), &mut rng).unwrap();
        let ms = RefinementModule::build(RrmConfig::new(RrmKind::Ms), &mut rng).unwrap();
        assert_eq!(lc.receptive_field(), 9);
        assert_eq!(ms.receptive_field(), 17);
        assert!(
            ours.receptive_field() >= 8 * lc.receptive_field(),
            "{}",
            ours.receptive_field()
        );
    }

    #[test]
    fn multiscale_branches_share_input_resolution() {
        let mut m = RefinementModule::build(
            RrmConfig {
                kind: RrmKind::Ms,
                width: 2,
            },
            &mut ChaCha8Rng::seed_from_u64(4),
        )
        .unwrap();
        let Body::Ms(b) = &mut m.body else {
            unreachable!()
        };
        let x = coarse(20, 12);
        for br in &mut b.branches {
            let y = br.forward(&x, Mode::Eval);
            assert_eq!((y.h, y.w), (20, 12));
        }
    }

    #[test]
    fn rejects_multi_channel_input() {
        let mut m = RefinementModule::build(
            RrmConfig::new(RrmKind::Lc),
            &mut ChaCha8Rng::seed_from_u64(5),
        )
        .unwrap();
        assert!(m.forward(&Tensor::zeros(1, 2, 8, 8), Mode::Eval).is_err());
    }
}
