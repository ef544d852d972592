use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use crate::data::{DatasetSpec, Normalization, Split, TrainTransform};
use crate::error::{Error, Result};
use crate::losses::LossVariant;
use crate::model::{Architecture, ModelConfig};
use crate::nn::AdamConfig;

use super::ablation::build_ablation_config;

/// Iteration count of the full-scale schedule.
pub const FULL_SCALE_ITERATIONS: u64 = 400_000;

/// Everything a training run needs besides the data itself.
#[derive(Clone, Debug, PartialEq)]
pub struct TrainConfig {
    pub model: ModelConfig,
    pub loss: LossVariant,
    pub adam: AdamConfig,
    pub batch_size: usize,
    pub max_iterations: u64,
    pub seed: u64,
    /// Checkpoint cadence in iterations; 0 writes only the final checkpoint.
    pub checkpoint_every: u64,
    pub transform: TrainTransform,
    pub normalization: Normalization,
    pub hflip: bool,
    pub dataset: Option<DatasetSpec>,
    pub out_dir: PathBuf,
    /// Archive with classification weights for the encoder.
    pub pretrained: Option<PathBuf>,
}

impl Default for TrainConfig {
    /// Published hyperparameters with a desk-scale iteration budget.
    fn default() -> Self {
        Self {
            model: ModelConfig::default(),
            loss: LossVariant::BSI,
            adam: AdamConfig::default(),
            batch_size: 8,
            max_iterations: 1000,
            seed: 0,
            checkpoint_every: 500,
            transform: TrainTransform::default(),
            normalization: Normalization::default(),
            hflip: true,
            dataset: None,
            out_dir: PathBuf::from("runs/basnet"),
            pretrained: None,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        self.model.validate()?;
        self.transform.validate()?;
        if self.batch_size == 0 {
            return Err(Error::Config("batch_size must be at least 1".into()));
        }
        if !self
            .transform
            .crop
            .is_multiple_of(self.model.input_multiple())
        {
            return Err(Error::Config(format!(
                "crop {} must be divisible by {} for {}",
                self.transform.crop,
                self.model.input_multiple(),
                self.model.architecture.label()
            )));
        }
        if !(self.adam.lr > 0.0)
            || !(0.0..1.0).contains(&self.adam.beta1)
            || !(0.0..1.0).contains(&self.adam.beta2)
        {
            return Err(Error::Config(format!(
                "invalid optimizer settings {:?}",
                self.adam
            )));
        }
        Ok(())
    }

    /// Parses a flat `key = value` run config. Blank lines and `#` comments
    /// are ignored; relative paths resolve against `base`.
    pub fn parse(text: &str, base: &Path) -> Result<Self> {
        let mut cfg = Self::default();
        let mut width_divisor = 1;
        let mut architecture = None;
        let mut image_dir = None;
        let mut mask_dir = None;
        let bad = |line: usize, m: String| Error::Config(format!("line {line}: {m}"));
        for (i, raw) in text.lines().enumerate() {
            let line = i + 1;
            let content = raw.split('#').next().unwrap_or("").trim();
            if content.is_empty() {
                continue;
            }
            let (key, value) = content
                .split_once('=')
                .map(|(k, v)| (k.trim(), v.trim().trim_matches('"')))
                .ok_or_else(|| bad(line, format!("expected key = value, got {content:?}")))?;
            let path = |v: &str| base.join(v);
            macro_rules! num {
                ($t:ty) => {
                    value
                        .parse::<$t>()
                        .map_err(|_| bad(line, format!("{key}: cannot parse {value:?}")))?
                };
            }
            match key {
                "row" => {
                    let row = build_ablation_config(value)?;
                    architecture = Some(row.model.architecture);
                    cfg.loss = row.loss;
                }
                "architecture" | "arch" => architecture = Some(value.parse::<Architecture>()?),
                "loss" => cfg.loss = value.parse()?,
                "lr" => cfg.adam.lr = num!(f32),
                "beta1" => cfg.adam.beta1 = num!(f32),
                "beta2" => cfg.adam.beta2 = num!(f32),
                "eps" => cfg.adam.eps = num!(f32),
                "weight_decay" => cfg.adam.weight_decay = num!(f32),
                "batch_size" => cfg.batch_size = num!(usize),
                "max_iterations" => cfg.max_iterations = num!(u64),
                "seed" => cfg.seed = num!(u64),
                "checkpoint_every" => cfg.checkpoint_every = num!(u64),
                "resize" => cfg.transform.resize = num!(usize),
                "crop" => cfg.transform.crop = num!(usize),
                "hflip" => cfg.hflip = num!(bool),
                "width_divisor" => width_divisor = num!(usize),
                "image_dir" => image_dir = Some(path(value)),
                "mask_dir" => mask_dir = Some(path(value)),
                "out_dir" => cfg.out_dir = path(value),
                "pretrained" => cfg.pretrained = Some(path(value)),
                "norm_mean" | "norm_std" => {
                    let parts: Vec<f32> = value
                        .split(',')
                        .map(|p| p.trim().parse::<f32>())
                        .collect::<std::result::Result<_, _>>()
                        .map_err(|_| bad(line, format!("{key}: expected three numbers")))?;
                    let triple: [f32; 3] = parts
                        .try_into()
                        .map_err(|_| bad(line, format!("{key}: expected three numbers")))?;
                    if key == "norm_mean" {
                        cfg.normalization.mean = triple;
                    } else {
                        cfg.normalization.std = triple;
                    }
                }
                other => return Err(bad(line, format!("unknown key {other:?}"))),
            }
        }
        if let Some(arch) = architecture {
            cfg.model = ModelConfig::for_architecture(arch);
        }
        cfg.model = cfg.model.with_width_divisor(width_divisor);
        cfg.dataset = match (image_dir, mask_dir) {
            (Some(image_dir), Some(mask_dir)) => Some(DatasetSpec {
                image_dir,
                mask_dir,
                split: Split::Train,
            }),
            (None, None) => None,
            _ => {
                return Err(Error::Config(
                    "image_dir and mask_dir must be given together".into(),
                ))
            }
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| match e.kind() {
            std::io::ErrorKind::NotFound => Error::MissingPath(path.to_path_buf()),
            _ => e.into(),
        })?;
        Self::parse(&text, path.parent().unwrap_or(Path::new(".")))
    }

    /// One-line summary written at the top of run directories.
    pub fn describe(&self) -> String {
        let mut s = String::new();
        let _ = write!(
            s,
            "{} loss={} lr={} batch_size={} max_iterations={} seed={} resize={} crop={} hflip={}",
            self.model.canonical(),
            self.loss,
            self.adam.lr,
            self.batch_size,
            self.max_iterations,
            self.seed,
            self.transform.resize,
            self.transform.crop,
            self.hflip
        );
        s
    }
}
