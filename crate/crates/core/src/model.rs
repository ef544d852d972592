//! Whole networks: the ablation architectures behind one interface, plus
//! checkpoint save and verified load.

use std::fmt;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::checkpoint::{sha256_hex, write_atomic, Manifest, TensorArchive};
use crate::error::{Error, Result};
use crate::nn::{child, Mode, Module, Tensor, Visitor};
use crate::prednet::{
    PredNetConfig, PredictionModule, PretrainedReport, INPUT_MULTIPLE, SIDE_OUTPUTS,
};
use crate::rrm::{RefinementModule, RrmConfig, RrmKind};
use crate::types::LogitMap;
use crate::unet::UNet;

pub const MODEL_FILE: &str = "model.bin";
pub const MANIFEST_FILE: &str = "manifest.txt";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Architecture {
    UNet,
    /// Encoder-decoder supervised only at its last decoder stage.
    Ed,
    /// Encoder-decoder with all seven side outputs supervised.
    Eds,
    /// Deeply supervised encoder-decoder followed by a refinement module.
    EdsRrm(RrmKind),
}

impl Architecture {
    pub const ALL: [Architecture; 6] = [
        Self::UNet,
        Self::Ed,
        Self::Eds,
        Self::EdsRrm(RrmKind::Lc),
        Self::EdsRrm(RrmKind::Ms),
        Self::EdsRrm(RrmKind::Ours),
    ];

    /// Number of supervised output maps.
    pub fn output_count(self) -> usize {
        match self {
            Self::UNet | Self::Ed => 1,
            Self::Eds => SIDE_OUTPUTS,
            Self::EdsRrm(_) => SIDE_OUTPUTS + 1,
        }
    }

    /// Human-readable name as used in ablation tables.
    pub fn label(self) -> &'static str {
        match self {
            Self::UNet => "U-Net",
            Self::Ed => "ED",
            Self::Eds => "EDS",
            Self::EdsRrm(RrmKind::Lc) => "EDS+RRM_LC",
            Self::EdsRrm(RrmKind::Ms) => "EDS+RRM_MS",
            Self::EdsRrm(RrmKind::Ours) => "EDS+RRM_Ours",
        }
    }
}

impl fmt::Display for Architecture {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::UNet => f.write_str("unet"),
            Self::Ed => f.write_str("ed"),
            Self::Eds => f.write_str("eds"),
            Self::EdsRrm(k) => write!(f, "eds_rrm_{k}"),
        }
    }
}

impl FromStr for Architecture {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let key: String = s
            .trim()
            .to_ascii_lowercase()
            .chars()
            .map(|c| if c == '+' || c == '-' { '_' } else { c })
            .collect();
        match key.as_str() {
            "unet" | "u_net" => Ok(Self::UNet),
            "ed" => Ok(Self::Ed),
            "eds" => Ok(Self::Eds),
            "basnet" => Ok(Self::EdsRrm(RrmKind::Ours)),
            k => match k.strip_prefix("eds_rrm_") {
                Some(kind) => Ok(Self::EdsRrm(kind.parse()?)),
                None => Err(Error::Config(format!(
                    "unknown architecture {s:?} (expected unet, ed, eds, eds_rrm_lc, eds_rrm_ms, eds_rrm_ours)"
                ))),
            },
        }
    }
}

/// Everything needed to rebuild a network's parameter layout.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ModelConfig {
    pub architecture: Architecture,
    pub prednet: PredNetConfig,
    pub rrm_width: usize,
    pub unet_width: usize,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self::for_architecture(Architecture::EdsRrm(RrmKind::Ours))
    }
}

impl ModelConfig {
    pub fn for_architecture(architecture: Architecture) -> Self {
        let prednet = PredNetConfig {
            deep_supervision: architecture != Architecture::Ed,
            ..Default::default()
        };
        Self {
            architecture,
            prednet,
            rrm_width: 64,
            unet_width: 64,
        }
    }

    /// Swaps the architecture, keeping the configured widths.
    pub fn with_architecture(mut self, architecture: Architecture) -> Self {
        self.architecture = architecture;
        self.prednet.deep_supervision = architecture != Architecture::Ed;
        self
    }

    /// Divides every width by `divisor` (at least one filter each).
    pub fn with_width_divisor(mut self, divisor: usize) -> Self {
        let d = divisor.max(1);
        self.prednet = self.prednet.with_width_divisor(d);
        self.rrm_width = (self.rrm_width / d).max(1);
        self.unet_width = (self.unet_width / d).max(1);
        self
    }

    pub fn output_count(&self) -> usize {
        self.architecture.output_count()
    }

    pub fn input_multiple(&self) -> usize {
        match self.architecture {
            Architecture::UNet => 1 << crate::unet::UNET_DEPTH,
            _ => INPUT_MULTIPLE,
        }
    }

    /// Single-line `key=value` form stored in checkpoint manifests.
    pub fn canonical(&self) -> String {
        format!(
            "arch={} {} rrm_width={} unet_width={}",
            self.architecture, self.prednet, self.rrm_width, self.unet_width
        )
    }

    pub fn hash(&self) -> String {
        sha256_hex(self.canonical().as_bytes())
    }

    pub fn parse(text: &str) -> Result<Self> {
        let bad = |m: String| Error::Config(format!("model config: {m}"));
        let mut cfg = Self::default();
        let mut arch = None;
        for pair in text.split_whitespace() {
            let (k, v) = pair
                .split_once('=')
                .ok_or_else(|| bad(format!("expected key=value, got {pair:?}")))?;
            let num = |v: &str| {
                v.parse::<usize>()
                    .map_err(|_| bad(format!("{k}: not a count: {v:?}")))
            };
            let list = |v: &str| -> Result<[usize; 6]> {
                let items = v.split(',').map(num).collect::<Result<Vec<_>>>()?;
                items
                    .try_into()
                    .map_err(|_| bad(format!("{k}: expected six values")))
            };
            match k {
                "arch" => arch = Some(v.parse::<Architecture>()?),
                "input_conv_filters" => cfg.prednet.input_conv_filters = num(v)?,
                "stage_blocks" => cfg.prednet.stage_blocks = list(v)?,
                "stage_filters" => cfg.prednet.stage_filters = list(v)?,
                "bridge_filters" => cfg.prednet.bridge_filters = num(v)?,
                "deep_supervision" => {
                    cfg.prednet.deep_supervision = v
                        .parse()
                        .map_err(|_| bad(format!("{k}: expected true/false")))?
                }
                "rrm_width" => cfg.rrm_width = num(v)?,
                "unet_width" => cfg.unet_width = num(v)?,
                other => return Err(bad(format!("unknown key {other:?}"))),
            }
        }
        cfg.architecture = arch.ok_or_else(|| bad("missing arch".into()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        self.prednet.validate()?;
        let expect_ds = self.architecture != Architecture::Ed;
        if !matches!(self.architecture, Architecture::UNet)
            && self.prednet.deep_supervision != expect_ds
        {
            return Err(Error::Config(format!(
                "{} requires deep_supervision={expect_ds}",
                self.architecture.label()
            )));
        }
        if self.rrm_width == 0 || self.unet_width == 0 {
            return Err(Error::Config("widths must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Debug)]
enum Net {
    UNet(UNet),
    Pred {
        prednet: PredictionModule,
        rrm: Option<RefinementModule>,
    },
}

/// A network of any ablation architecture.
///
/// `forward` returns one logit tensor (N×1×H×W) per supervised output in
/// loss order: the refined map first when a refinement module is present,
/// then decoder stages 1 to 6, then the bridge.
#[derive(Clone, Debug)]
pub struct BasNet {
    config: ModelConfig,
    net: Net,
}

impl BasNet {
    /// Builds a freshly initialized network; the same `seed` always gives
    /// the same weights.
    pub fn new(config: &ModelConfig, seed: u64) -> Result<Self> {
        Self::with_pretrained(config, None, seed).map(|(m, _)| m)
    }

    /// As [`BasNet::new`], copying encoder weights from `pretrained`.
    pub fn with_pretrained(
        config: &ModelConfig,
        pretrained: Option<&TensorArchive>,
        seed: u64,
    ) -> Result<(Self, PretrainedReport)> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (net, report) = match config.architecture {
            Architecture::UNet => (
                Net::UNet(UNet::build(config.unet_width, &mut rng)?),
                PretrainedReport::default(),
            ),
            arch => {
                let (prednet, report) =
                    PredictionModule::build(&config.prednet, pretrained, &mut rng)?;
                let rrm = match arch {
                    Architecture::EdsRrm(kind) => Some(RefinementModule::build(
                        RrmConfig {
                            kind,
                            width: config.rrm_width,
                        },
                        &mut rng,
                    )?),
                    _ => None,
                };
                (Net::Pred { prednet, rrm }, report)
            }
        };
        Ok((
            Self {
                config: config.clone(),
                net,
            },
            report,
        ))
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn output_count(&self) -> usize {
        self.config.output_count()
    }

    pub fn refinement(&mut self) -> Option<&mut RefinementModule> {
        match &mut self.net {
            Net::Pred { rrm, .. } => rrm.as_mut(),
            Net::UNet(_) => None,
        }
    }

    /// Output logits; see the type-level docs for their order.
    pub fn forward(&mut self, x: &Tensor, mode: Mode) -> Result<Vec<Tensor>> {
        match &mut self.net {
            Net::UNet(u) => Ok(vec![u.forward(x, mode)?]),
            Net::Pred { prednet, rrm } => {
                let side = prednet.forward(x, mode)?;
                match rrm {
                    None => Ok(side),
                    Some(r) => {
                        let refined = r.forward(&side[0], mode)?;
                        let mut out = Vec::with_capacity(side.len() + 1);
                        out.push(refined);
                        out.extend(side);
                        Ok(out)
                    }
                }
            }
        }
    }

    /// Accumulates parameter gradients from per-output logit gradients.
    pub fn backward(&mut self, grads: &[Tensor]) {
        assert_eq!(grads.len(), self.output_count(), "one gradient per output");
        match &mut self.net {
            Net::UNet(u) => u.backward(&grads[0]),
            Net::Pred { prednet, rrm: None } => prednet.backward(grads),
            Net::Pred {
                prednet,
                rrm: Some(r),
            } => {
                let g_coarse = r.backward(&grads[0]);
                let mut side = grads[1..].to_vec();
                side[0].add_assign(&g_coarse);
                prednet.backward(&side);
            }
        }
    }

    /// Writes `model.bin` and `manifest.txt` into `dir`; returns the archive SHA-256.
    pub fn save(&mut self, dir: &Path) -> Result<String> {
        fs::create_dir_all(dir)?;
        let archive = TensorArchive::from_module(self);
        let sha = archive.write(&dir.join(MODEL_FILE))?;
        let manifest = Manifest::from_archive(&self.config.canonical(), &archive, &sha);
        write_atomic(&dir.join(MANIFEST_FILE), manifest.render().as_bytes())?;
        Ok(sha)
    }

    /// Rebuilds the architecture named in `dir/manifest.txt` and loads its
    /// weights. The manifest must match both the built layout and the archive
    /// bytes; any difference is reported entry by entry.
    pub fn load(dir: &Path) -> Result<(Self, String)> {
        let manifest = read_manifest(dir)?;
        let config = ModelConfig::parse(&manifest.config)?;
        if sha256_hex(manifest.config.as_bytes()) != manifest.config_hash {
            return Err(Error::ManifestMismatch(vec![format!(
                "config hash does not match config line {:?}",
                manifest.config
            )]));
        }
        let model = Self::new(&config, 0)?;
        model.load_weights(dir, Some(&manifest))
    }

    /// Loads the weights in `dir` into this already-built network.
    pub fn load_weights(
        mut self,
        dir: &Path,
        manifest: Option<&Manifest>,
    ) -> Result<(Self, String)> {
        let owned;
        let manifest = match manifest {
            Some(m) => m,
            None => {
                owned = read_manifest(dir)?;
                &owned
            }
        };
        let expected = Manifest {
            config: self.config.canonical(),
            config_hash: self.config.hash(),
            archive_sha256: manifest.archive_sha256.clone(),
            entries: crate::nn::layout(&mut self),
        };
        let diff = expected.diff(manifest);
        if !diff.is_empty() {
            return Err(Error::ManifestMismatch(diff));
        }
        let (archive, sha) = TensorArchive::read(&dir.join(MODEL_FILE))?;
        if sha != manifest.archive_sha256 {
            return Err(Error::ManifestMismatch(vec![format!(
                "archive sha256 {sha} does not match manifest {}",
                manifest.archive_sha256
            )]));
        }
        archive.load_into(&mut self)?;
        Ok((self, sha))
    }
}

fn read_manifest(dir: &Path) -> Result<Manifest> {
    let path = dir.join(MANIFEST_FILE);
    let text = fs::read_to_string(&path).map_err(|e| match e.kind() {
        std::io::ErrorKind::NotFound => Error::MissingPath(path.clone()),
        _ => e.into(),
    })?;
    Manifest::parse(&text).map_err(|e| match e {
        Error::Format { reason, .. } => Error::Format {
            path: path.display().to_string(),
            reason,
        },
        other => other,
    })
}

impl Module for BasNet {
    fn visit(&mut self, prefix: &str, v: &mut dyn Visitor) {
        match &mut self.net {
            Net::UNet(u) => u.visit(&child(prefix, "unet"), v),
            Net::Pred { prednet, rrm } => {
                prednet.visit(&child(prefix, "prednet"), v);
                if let Some(r) = rrm {
                    r.visit(&child(prefix, "rrm"), v);
                }
            }
        }
    }
}

/// Splits batch logits into per-sample maps: `result[n][k]` is output `k` of sample `n`.
pub fn split_logits(outputs: &[Tensor]) -> Vec<Vec<LogitMap>> {
    let n = outputs.first().map_or(0, |t| t.n);
    (0..n)
        .map(|i| {
            outputs
                .iter()
                .map(|t| LogitMap {
                    height: t.h,
                    width: t.w,
                    data: t.sample(i).iter().map(|v| *v as f64).collect(),
                })
                .collect()
        })
        .collect()
}

/// Stacks per-sample logit gradients back into batch tensors.
pub fn stack_grads(grads: &[Vec<Vec<f64>>], h: usize, w: usize) -> Vec<Tensor> {
    let n = grads.len();
    let k = grads.first().map_or(0, Vec::len);
    (0..k)
        .map(|out| {
            let mut t = Tensor::zeros(n, 1, h, w);
            for (i, g) in grads.iter().enumerate() {
                t.sample_mut(i)
                    .iter_mut()
                    .zip(&g[out])
                    .for_each(|(d, s)| *d = *s as f32);
            }
            t
        })
        .collect()
}
