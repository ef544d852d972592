//! The densely supervised encoder-decoder prediction module.
//!
//! Encoder: a 3×3 stride-1 input layer (no pooling after it), four ResNet-34
//! stages, then two extra stages of three 512-filter basic blocks each behind
//! a 2×2 max pool. A bridge of three dilated convolutions sits at the deepest
//! resolution. Each of the six decoder stages takes the bilinearly upsampled
//! previous stage concatenated with its encoder counterpart. Side heads on the
//! bridge and every decoder stage emit 1-channel logits upsampled to the input
//! size.
//!
//! Parameter names inside the first four stages follow the torchvision
//! ResNet layout (`layer1.0.conv1.weight`, `layer2.0.downsample.1.bias`, ...)
//! so classification weights can be copied by name.

use std::fmt;

use rand::Rng;

use crate::checkpoint::TensorArchive;
use crate::error::{Error, Result};
use crate::nn::{
    child, concat_channels, split_channels, upsample_bilinear, upsample_bilinear_backward,
    BatchNorm2d, Conv2d, ConvBnRelu, MaxPool2, Mode, Module, Relu, Tensor, Visitor,
};

pub const BRIDGE_DILATION: usize = 2;
pub const BRIDGE_CONVS: usize = 3;
pub const DECODER_CONVS: usize = 3;
pub const SIDE_OUTPUTS: usize = 7;
pub const STAGES: usize = 6;
/// Total downsampling from input to bridge.
pub const INPUT_MULTIPLE: usize = 32;

/// Layer widths and depths of the prediction module.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PredNetConfig {
    pub input_conv_filters: usize,
    pub stage_blocks: [usize; STAGES],
    pub stage_filters: [usize; STAGES],
    pub bridge_filters: usize,
    /// All seven side heads when true; only the decoder-stage-1 head otherwise.
    pub deep_supervision: bool,
}

impl Default for PredNetConfig {
    fn default() -> Self {
        Self {
            input_conv_filters: 64,
            stage_blocks: [3, 4, 6, 3, 3, 3],
            stage_filters: [64, 128, 256, 512, 512, 512],
            bridge_filters: 512,
            deep_supervision: true,
        }
    }
}

impl PredNetConfig {
    /// Same topology with every filter count divided by `divisor`.
    pub fn with_width_divisor(mut self, divisor: usize) -> Self {
        let d = divisor.max(1);
        let div = |v: usize| (v / d).max(1);
        self.input_conv_filters = div(self.input_conv_filters);
        self.stage_filters = self.stage_filters.map(div);
        self.bridge_filters = div(self.bridge_filters);
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.input_conv_filters == 0 || self.bridge_filters == 0 {
            return Err(Error::Config(
                "prediction module widths must be positive".into(),
            ));
        }
        if self
            .stage_blocks
            .iter()
            .chain(&self.stage_filters)
            .any(|v| *v == 0)
        {
            return Err(Error::Config(
                "every encoder stage needs at least one block and one filter".into(),
            ));
        }
        Ok(())
    }

    /// Output width of decoder stage `i` (1-based), mirroring encoder stage `i`.
    pub fn decoder_filters(&self, stage: usize) -> usize {
        self.stage_filters[stage - 1]
    }
}

impl fmt::Display for PredNetConfig {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let list = |v: &[usize]| {
            v.iter()
                .map(|x| x.to_string())
                .collect::<Vec<_>>()
                .join(",")
        };
        write!(
            f,
            "input_conv_filters={} stage_blocks={} stage_filters={} bridge_filters={} deep_supervision={}",
            self.input_conv_filters,
            list(&self.stage_blocks),
            list(&self.stage_filters),
            self.bridge_filters,
            self.deep_supervision
        )
    }
}

/// Two 3×3 convolutions with batch norm, plus an identity or 1×1 projection shortcut.
#[derive(Clone, Debug)]
pub struct BasicBlock {
    conv1: Conv2d,
    bn1: BatchNorm2d,
    relu1: Relu,
    conv2: Conv2d,
    bn2: BatchNorm2d,
    downsample: Option<(Conv2d, BatchNorm2d)>,
    relu_out: Relu,
}

impl BasicBlock {
    pub fn new(cin: usize, cout: usize, stride: usize) -> Self {
        let downsample = (cin != cout || stride != 1).then(|| {
            (
                Conv2d::new(cin, cout, 1, stride, 1, false),
                BatchNorm2d::new(cout),
            )
        });
        Self {
            conv1: Conv2d::new(cin, cout, 3, stride, 1, false),
            bn1: BatchNorm2d::new(cout),
            relu1: Relu::default(),
            conv2: Conv2d::new(cout, cout, 3, 1, 1, false),
            bn2: BatchNorm2d::new(cout),
            downsample,
            relu_out: Relu::default(),
        }
    }

    fn init(&mut self, rng: &mut impl Rng) {
        self.conv1.init_xavier(rng);
        self.conv2.init_xavier(rng);
        if let Some((c, _)) = &mut self.downsample {
            c.init_xavier(rng);
        }
    }

    pub fn forward(&mut self, x: &Tensor, mode: Mode) -> Tensor {
        let y = self.conv1.forward(x, mode);
        let y = self.bn1.forward(&y, mode);
        let y = self.relu1.forward(y, mode);
        let y = self.conv2.forward(&y, mode);
        let mut y = self.bn2.forward(&y, mode);
        match &mut self.downsample {
            Some((conv, bn)) => {
                let s = conv.forward(x, mode);
                y.add_assign(&bn.forward(&s, mode));
            }
            None => y.add_assign(x),
        }
        self.relu_out.forward(y, mode)
    }

    pub fn backward(&mut self, grad: Tensor) -> Tensor {
        let g = self.relu_out.backward(grad);
        let shortcut = match &mut self.downsample {
            Some((conv, bn)) => conv.backward(&bn.backward(&g)),
            None => g.clone(),
        };
        let r = self.bn2.backward(&g);
        let r = self.conv2.backward(&r);
        let r = self.relu1.backward(r);
        let r = self.bn1.backward(&r);
        let mut dx = self.conv1.backward(&r);
        dx.add_assign(&shortcut);
        dx
    }
}

impl Module for BasicBlock {
    fn visit(&mut self, prefix: &str, v: &mut dyn Visitor) {
        self.conv1.visit(&child(prefix, "conv1"), v);
        self.bn1.visit(&child(prefix, "bn1"), v);
        self.conv2.visit(&child(prefix, "conv2"), v);
        self.bn2.visit(&child(prefix, "bn2"), v);
        if let Some((c, b)) = &mut self.downsample {
            c.visit(&child(prefix, "downsample.0"), v);
            b.visit(&child(prefix, "downsample.1"), v);
        }
    }
}

#[derive(Clone, Debug)]
struct EncoderStage {
    pool: Option<MaxPool2>,
    blocks: Vec<BasicBlock>,
}

impl EncoderStage {
    fn forward(&mut self, x: &Tensor, mode: Mode) -> Tensor {
        let mut h = match &mut self.pool {
            Some(p) => p.forward(x, mode),
            None => x.clone(),
        };
        for b in &mut self.blocks {
            h = b.forward(&h, mode);
        }
        h
    }

    fn backward(&mut self, grad: Tensor) -> Tensor {
        let mut g = grad;
        for b in self.blocks.iter_mut().rev() {
            g = b.backward(g);
        }
        match &mut self.pool {
            Some(p) => p.backward(&g),
            None => g,
        }
    }
}

/// A stack of ConvBnRelu layers applied in sequence.
#[derive(Clone, Debug)]
pub(crate) struct ConvStack(pub(crate) Vec<ConvBnRelu>);

impl ConvStack {
    pub(crate) fn new(cin: usize, cout: usize, depth: usize, dilation: usize) -> Self {
        Self(
            (0..depth)
                .map(|i| ConvBnRelu::new(if i == 0 { cin } else { cout }, cout, 1, dilation))
                .collect(),
        )
    }

    pub(crate) fn init(&mut self, rng: &mut impl Rng) {
        self.0.iter_mut().for_each(|l| l.init(rng));
    }

    pub(crate) fn forward(&mut self, x: &Tensor, mode: Mode) -> Tensor {
        let mut h = x.clone();
        for l in &mut self.0 {
            h = l.forward(&h, mode);
        }
        h
    }

    pub(crate) fn backward(&mut self, grad: Tensor) -> Tensor {
        let mut g = grad;
        for l in self.0.iter_mut().rev() {
            g = l.backward(g);
        }
        g
    }
}

impl Module for ConvStack {
    fn visit(&mut self, prefix: &str, v: &mut dyn Visitor) {
        for (i, l) in self.0.iter_mut().enumerate() {
            l.visit(&child(prefix, &i.to_string()), v);
        }
    }
}

#[derive(Clone, Debug, Default)]
struct ForwardSizes {
    input: (usize, usize),
    /// Encoder stage outputs, stage 1 first.
    stages: Vec<(usize, usize, usize)>,
    decoder: Vec<(usize, usize)>,
}

/// Copy report from a pretrained source.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct PretrainedReport {
    pub copied: Vec<String>,
    pub skipped: Vec<String>,
}

#[derive(Clone, Debug)]
pub struct PredictionModule {
    config: PredNetConfig,
    conv1: Conv2d,
    bn1: BatchNorm2d,
    relu1: Relu,
    stages: Vec<EncoderStage>,
    bridge: ConvStack,
    /// Decoder stages 1..=6 at indices 0..=5.
    decoder: Vec<ConvStack>,
    /// Heads for decoder stages 1..=6 (or only stage 1), then the bridge.
    heads: Vec<Conv2d>,
    sizes: ForwardSizes,
}

impl PredictionModule {
    /// Builds and Xavier-initializes the module, then copies shape-matching
    /// input-layer and stage 1–4 parameters from `pretrained` when given.
    pub fn build(
        config: &PredNetConfig,
        pretrained: Option<&TensorArchive>,
        rng: &mut impl Rng,
    ) -> Result<(Self, PretrainedReport)> {
        config.validate()?;
        let mut stages = Vec::with_capacity(STAGES);
        let mut cin = config.input_conv_filters;
        for s in 0..STAGES {
            let cout = config.stage_filters[s];
            let stride = if (1..4).contains(&s) { 2 } else { 1 };
            let blocks = (0..config.stage_blocks[s])
                .map(|b| {
                    if b == 0 {
                        BasicBlock::new(cin, cout, stride)
                    } else {
                        BasicBlock::new(cout, cout, 1)
                    }
                })
                .collect();
            stages.push(EncoderStage {
                pool: (s >= 4).then(MaxPool2::default),
                blocks,
            });
            cin = cout;
        }
        let bridge = ConvStack::new(
            config.stage_filters[5],
            config.bridge_filters,
            BRIDGE_CONVS,
            BRIDGE_DILATION,
        );
        let mut decoder = Vec::with_capacity(STAGES);
        for stage in 1..=STAGES {
            let from_below = if stage == STAGES {
                config.bridge_filters
            } else {
                config.decoder_filters(stage + 1)
            };
            let skip = config.stage_filters[stage - 1];
            decoder.push(ConvStack::new(
                from_below + skip,
                config.decoder_filters(stage),
                DECODER_CONVS,
                1,
            ));
        }
        let mut heads: Vec<Conv2d> = if config.deep_supervision {
            (1..=STAGES)
                .map(|s| Conv2d::new(config.decoder_filters(s), 1, 3, 1, 1, true))
                .collect()
        } else {
            vec![Conv2d::new(config.decoder_filters(1), 1, 3, 1, 1, true)]
        };
        if config.deep_supervision {
            heads.push(Conv2d::new(config.bridge_filters, 1, 3, 1, 1, true));
        }
        let mut module = Self {
            config: config.clone(),
            conv1: Conv2d::new(3, config.input_conv_filters, 3, 1, 1, false),
            bn1: BatchNorm2d::new(config.input_conv_filters),
            relu1: Relu::default(),
            stages,
            bridge,
            decoder,
            heads,
            sizes: ForwardSizes::default(),
        };
        module.conv1.init_xavier(rng);
        for s in &mut module.stages {
            s.blocks.iter_mut().for_each(|b| b.init(rng));
        }
        module.bridge.init(rng);
        module.decoder.iter_mut().for_each(|d| d.init(rng));
        module.heads.iter_mut().for_each(|h| h.init_xavier(rng));

        let report = match pretrained {
            Some(source) => module.load_pretrained(source)?,
            None => PretrainedReport::default(),
        };
        Ok((module, report))
    }

    fn load_pretrained(&mut self, source: &TensorArchive) -> Result<PretrainedReport> {
        struct Copier<'a> {
            source: &'a TensorArchive,
            report: PretrainedReport,
            mismatched: Vec<String>,
        }
        impl Copier<'_> {
            fn copy(&mut self, name: &str, shape: &[usize], dst: &mut [f32]) {
                let eligible = ["conv1.", "bn1.", "layer1.", "layer2.", "layer3.", "layer4."]
                    .iter()
                    .any(|p| name.starts_with(p));
                if !eligible {
                    return;
                }
                let found = self
                    .source
                    .get(&format!("prednet.{name}"))
                    .or_else(|| self.source.get(name));
                let Some(t) = found else { return };
                if t.shape == shape {
                    dst.copy_from_slice(&t.data);
                    self.report.copied.push(name.to_string());
                } else if name.starts_with("conv1.") {
                    // The input layer is 3×3 here, 7×7 in classification backbones.
                    self.report
                        .skipped
                        .push(format!("{name} {:?} vs {:?}", t.shape, shape));
                } else {
                    self.mismatched.push(format!(
                        "{name} (source {:?}, expected {:?})",
                        t.shape, shape
                    ));
                }
            }
        }
        impl Visitor for Copier<'_> {
            fn param(&mut self, name: &str, p: &mut crate::nn::Param) {
                let shape = p.shape.clone();
                self.copy(name, &shape, &mut p.value);
            }
            fn buffer(&mut self, name: &str, shape: &[usize], data: &mut Vec<f32>) {
                self.copy(name, shape, data);
            }
        }
        let mut copier = Copier {
            source,
            report: PretrainedReport::default(),
            mismatched: Vec::new(),
        };
        self.visit("", &mut copier);
        if !copier.mismatched.is_empty() {
            return Err(Error::PretrainedMismatch(copier.mismatched));
        }
        log::info!(
            "copied {} pretrained tensors, skipped {}",
            copier.report.copied.len(),
            copier.report.skipped.len()
        );
        Ok(copier.report)
    }

    pub fn config(&self) -> &PredNetConfig {
        &self.config
    }

    pub fn output_count(&self) -> usize {
        self.heads.len()
    }

    /// Logits of every side head at input resolution: decoder stages 1..=6
    /// then the bridge (or decoder stage 1 alone without deep supervision).
    pub fn forward(&mut self, x: &Tensor, mode: Mode) -> Result<Vec<Tensor>> {
        if x.c != 3 {
            return Err(Error::Shape(format!(
                "prediction module expects 3 channels, got {}",
                x.c
            )));
        }
        if !x.h.is_multiple_of(INPUT_MULTIPLE)
            || !x.w.is_multiple_of(INPUT_MULTIPLE)
            || x.h == 0
            || x.w == 0
        {
            return Err(Error::IndivisibleInput {
                height: x.h,
                width: x.w,
            });
        }
        let mut sizes = ForwardSizes {
            input: (x.h, x.w),
            ..Default::default()
        };
        let h = self.conv1.forward(x, mode);
        let h = self.bn1.forward(&h, mode);
        let mut h = self.relu1.forward(h, mode);
        let mut enc = Vec::with_capacity(STAGES);
        for s in &mut self.stages {
            h = s.forward(&h, mode);
            sizes.stages.push((h.c, h.h, h.w));
            enc.push(h.clone());
        }
        let bridge = self.bridge.forward(&h, mode);
        let mut dec: Vec<Tensor> = vec![Tensor::zeros(0, 0, 0, 0); STAGES];
        let mut below = bridge.clone();
        for stage in (1..=STAGES).rev() {
            let skip = &enc[stage - 1];
            let up = upsample_bilinear(&below, skip.h, skip.w);
            sizes.decoder.push((below.h, below.w));
            let out = self.decoder[stage - 1].forward(&concat_channels(&up, skip), mode);
            dec[stage - 1] = out.clone();
            below = out;
        }
        let mut outputs = Vec::with_capacity(self.heads.len());
        let (ih, iw) = sizes.input;
        let n_dec_heads = if self.config.deep_supervision {
            STAGES
        } else {
            1
        };
        for (i, head) in self.heads.iter_mut().enumerate() {
            let feature = if i < n_dec_heads { &dec[i] } else { &bridge };
            let logits = head.forward(feature, mode);
            outputs.push(upsample_bilinear(&logits, ih, iw));
        }
        self.sizes = sizes;
        Ok(outputs)
    }

    /// Backpropagates gradients of the loss with respect to each output logit map.
    pub fn backward(&mut self, grads: &[Tensor]) {
        assert_eq!(
            grads.len(),
            self.heads.len(),
            "one gradient per side output"
        );
        let sizes = std::mem::take(&mut self.sizes);
        let n_dec_heads = if self.config.deep_supervision {
            STAGES
        } else {
            1
        };
        let mut g_dec: Vec<Option<Tensor>> = vec![None; STAGES];
        let mut g_bridge: Option<Tensor> = None;
        for (i, (head, g)) in self.heads.iter_mut().zip(grads).enumerate() {
            let (fh, fw) = if i < n_dec_heads {
                let (_, h, w) = sizes.stages[i];
                (h, w)
            } else {
                let (_, h, w) = sizes.stages[STAGES - 1];
                (h, w)
            };
            let g_feat = head.backward(&upsample_bilinear_backward(g, fh, fw));
            let slot = if i < n_dec_heads {
                &mut g_dec[i]
            } else {
                &mut g_bridge
            };
            accumulate(slot, g_feat);
        }
        let mut g_enc: Vec<Option<Tensor>> = vec![None; STAGES];
        for stage in 1..=STAGES {
            let g = g_dec[stage - 1]
                .take()
                .expect("every decoder stage feeds a head or the stage above");
            let g_cat = self.decoder[stage - 1].backward(g);
            let below_c = if stage == STAGES {
                self.config.bridge_filters
            } else {
                self.config.decoder_filters(stage + 1)
            };
            let (g_up, g_skip) = split_channels(&g_cat, below_c);
            accumulate(&mut g_enc[stage - 1], g_skip);
            let (bh, bw) = sizes.decoder[STAGES - stage];
            let g_below = upsample_bilinear_backward(&g_up, bh, bw);
            if stage == STAGES {
                accumulate(&mut g_bridge, g_below);
            } else {
                accumulate(&mut g_dec[stage], g_below);
            }
        }
        let g = self.bridge.backward(g_bridge.expect("bridge gradient"));
        accumulate(&mut g_enc[STAGES - 1], g);
        let mut carry: Option<Tensor> = None;
        for s in (0..STAGES).rev() {
            let mut g = g_enc[s].take().expect("encoder stage gradient");
            if let Some(c) = carry.take() {
                g.add_assign(&c);
            }
            carry = Some(self.stages[s].backward(g));
        }
        let g = self.relu1.backward(carry.expect("input gradient"));
        let g = self.bn1.backward(&g);
        self.conv1.backward(&g);
    }
}

fn accumulate(slot: &mut Option<Tensor>, g: Tensor) {
    match slot {
        Some(t) => t.add_assign(&g),
        None => *slot = Some(g),
    }
}

impl Module for PredictionModule {
    fn visit(&mut self, prefix: &str, v: &mut dyn Visitor) {
        self.conv1.visit(&child(prefix, "conv1"), v);
        self.bn1.visit(&child(prefix, "bn1"), v);
        for (s, stage) in self.stages.iter_mut().enumerate() {
            for (b, block) in stage.blocks.iter_mut().enumerate() {
                block.visit(&child(prefix, &format!("layer{}.{b}", s + 1)), v);
            }
        }
        self.bridge.visit(&child(prefix, "bridge"), v);
        for (i, d) in self.decoder.iter_mut().enumerate() {
            d.visit(&child(prefix, &format!("decoder{}", i + 1)), v);
        }
        let n_dec_heads = if self.config.deep_supervision {
            STAGES
        } else {
            1
        };
        for (i, h) in self.heads.iter_mut().enumerate() {
            let name = if i < n_dec_heads {
                format!("side{}", i + 1)
            } else {
                "side_bridge".to_string()
            };
            h.visit(&child(prefix, &name), v);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::{for_each_param, parameter_count};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn tiny() -> PredNetConfig {
        PredNetConfig {
            stage_blocks: [1, 1, 1, 1, 1, 1],
            ..PredNetConfig::default()
        }
        .with_width_divisor(16)
    }

    /// ResNet-34 `layer1`..`layer4` parameter count from per-layer arithmetic:
    /// conv weights `cin·cout·9`, batch-norm `2·c`, projections `cin·cout + 2·cout`.
    fn resnet34_stage_params() -> usize {
        let mut total = 0;
        let mut cin = 64;
        for (blocks, cout) in [(3, 64), (4, 128), (6, 256), (3, 512)] {
            for b in 0..blocks {
                let ci = if b == 0 { cin } else { cout };
                total += ci * cout * 9 + 2 * cout + cout * cout * 9 + 2 * cout;
                if b == 0 && ci != cout {
                    total += ci * cout + 2 * cout;
                }
            }
            cin = cout;
        }
        total
    }

    #[test]
    fn stage_one_to_four_parameter_count_matches_resnet34() {
        // 21,797,672 total minus the 7×7 stem (9,408), its batch norm (128)
        // and the classifier (513,000).
        const GOLDEN: usize = 21_275_136;
        assert_eq!(resnet34_stage_params(), GOLDEN);
        let (mut m, _) = PredictionModule::build(
            &PredNetConfig::default(),
            None,
            &mut ChaCha8Rng::seed_from_u64(0),
        )
        .unwrap();
        let mut n = 0;
        for_each_param(&mut m, |name, p| {
            if ["layer1.", "layer2.", "layer3.", "layer4."]
                .iter()
                .any(|s| name.starts_with(s))
            {
                n += p.len();
            }
        });
        assert_eq!(n, GOLDEN);
    }

    #[test]
    fn stage_resolutions_and_head_count() {
        let (mut m, _) =
            PredictionModule::build(&tiny(), None, &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
        let x = Tensor::zeros(1, 3, 64, 96);
        let out = m.forward(&x, Mode::Eval).unwrap();
        assert_eq!(out.len(), SIDE_OUTPUTS);
        assert!(out.iter().all(|t| t.shape() == [1, 1, 64, 96]));
        let res: Vec<_> = m.sizes.stages.iter().map(|s| (s.1, s.2)).collect();
        assert_eq!(
            res,
            vec![(64, 96), (32, 48), (16, 24), (8, 12), (4, 6), (2, 3)]
        );
    }

    #[test]
    fn default_resolutions_at_288() {
        // Resolution arithmetic only: halving at stages 2–6.
        let mut r = 288;
        let mut seen = vec![r];
        for _ in 1..STAGES {
            r /= 2;
            seen.push(r);
        }
        assert_eq!(seen, vec![288, 144, 72, 36, 18, 9]);
    }

    #[test]
    fn rejects_indivisible_input() {
        let (mut m, _) =
            PredictionModule::build(&tiny(), None, &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
        let err = m
            .forward(&Tensor::zeros(1, 3, 40, 64), Mode::Eval)
            .unwrap_err();
        assert!(err.to_string().contains("divisible by 32"));
    }

    #[test]
    fn without_deep_supervision_one_head() {
        let cfg = PredNetConfig {
            deep_supervision: false,
            ..tiny()
        };
        let (mut m, _) =
            PredictionModule::build(&cfg, None, &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
        assert_eq!(
            m.forward(&Tensor::zeros(1, 3, 32, 32), Mode::Eval)
                .unwrap()
                .len(),
            1
        );
    }

    #[test]
    fn pretrained_copy_and_mismatch() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let (mut src, _) = PredictionModule::build(&tiny(), None, &mut rng).unwrap();
        let archive = TensorArchive::from_module(&mut src);
        let (mut dst, report) = PredictionModule::build(&tiny(), Some(&archive), &mut rng).unwrap();
        assert!(report.copied.iter().any(|n| n == "layer4.0.conv1.weight"));
        assert!(!report.copied.iter().any(|n| n.starts_with("layer5")));
        let mut a = Vec::new();
        for_each_param(&mut src, |n, p| {
            if n.starts_with("layer2") {
                a.push(p.value.clone())
            }
        });
        let mut b = Vec::new();
        for_each_param(&mut dst, |n, p| {
            if n.starts_with("layer2") {
                b.push(p.value.clone())
            }
        });
        assert_eq!(a, b);

        let wider = PredNetConfig {
            stage_blocks: [1, 1, 1, 1, 1, 1],
            ..PredNetConfig::default()
        }
        .with_width_divisor(8);
        let err = PredictionModule::build(&wider, Some(&archive), &mut rng).unwrap_err();
        match err {
            Error::PretrainedMismatch(names) => {
                assert!(names.iter().any(|n| n.starts_with("layer1.0.conv1.weight")))
            }
            other => panic!("unexpected {other}"),
        }
    }

    #[test]
    fn full_config_builds() {
        let (mut m, _) = PredictionModule::build(
            &PredNetConfig::default(),
            None,
            &mut ChaCha8Rng::seed_from_u64(0),
        )
        .unwrap();
        assert_eq!(m.output_count(), 7);
        assert!(parameter_count(&mut m) > 21_275_136);
    }
}
