use std::fmt;
use std::fs::{self, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};

use rayon::prelude::*;

use crate::checkpoint::TensorArchive;
use crate::data::{BatchLoader, Dataset};
use crate::error::{Error, Result};
use crate::losses::{total_loss_from_logits, LossConfig};
use crate::model::{split_logits, stack_grads, BasNet};
use crate::nn::{zero_grad, Adam, Mode, Tensor};
use crate::types::{HybridTerms, Mask};

use super::TrainConfig;

pub const CHECKPOINT_DIR: &str = "checkpoints";
pub const OPTIMIZER_FILE: &str = "optimizer.bin";
pub const LOG_FILE: &str = "train.log";

/// One line of the training log.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StepRecord {
    /// Number of completed updates, counting this one.
    pub step: u64,
    pub lr: f32,
    /// α-weighted term sums, averaged over the batch.
    pub terms: HybridTerms,
    pub total: f64,
}

impl fmt::Display for StepRecord {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "step={} lr={:e} bce={:.6} ssim={:.6} iou={:.6} total={:.6}",
            self.step, self.lr, self.terms.bce, self.terms.ssim, self.terms.iou, self.total
        )
    }
}

/// Batch-mean objective over every supervised output and the matching
/// logit gradients, already divided by the batch size.
pub fn batch_objective(
    outputs: &[Tensor],
    masks: &[Mask],
    loss: &LossConfig,
) -> Result<(f64, HybridTerms, Vec<Tensor>)> {
    let per_sample = split_logits(outputs);
    if per_sample.len() != masks.len() {
        return Err(Error::Shape(format!(
            "{} predictions for {} masks",
            per_sample.len(),
            masks.len()
        )));
    }
    let results = per_sample
        .par_iter()
        .zip(masks)
        .map(|(logits, g)| total_loss_from_logits(logits, g, loss))
        .collect::<Result<Vec<_>>>()?;
    let scale = 1.0 / masks.len() as f64;
    let mut total = 0.0;
    let mut terms = HybridTerms::default();
    let mut grads = Vec::with_capacity(results.len());
    for (breakdown, g) in results {
        total += breakdown.total * scale;
        terms = terms.add(breakdown.weighted_terms(&loss.alpha).scaled(scale));
        grads.push(
            g.into_iter()
                .map(|v| v.into_iter().map(|d| d * scale).collect())
                .collect(),
        );
    }
    let (h, w) = (outputs[0].h, outputs[0].w);
    Ok((total, terms, stack_grads(&grads, h, w)))
}

/// Drives optimization of one configuration over one dataset.
pub struct Trainer {
    config: TrainConfig,
    model: BasNet,
    adam: Adam,
    loader: BatchLoader,
    loss: LossConfig,
    step: u64,
}

impl Trainer {
    /// Fresh model (seeded from the config, encoder copied from the
    /// pretrained archive when configured).
    pub fn new(config: TrainConfig, dataset: Dataset) -> Result<Self> {
        config.validate()?;
        if dataset.is_empty() {
            return Err(Error::Empty("training dataset is empty".into()));
        }
        let pretrained = match &config.pretrained {
            Some(p) => Some(TensorArchive::read(p)?.0),
            None => None,
        };
        let (model, report) =
            BasNet::with_pretrained(&config.model, pretrained.as_ref(), config.seed)?;
        if !report.skipped.is_empty() {
            log::warn!("pretrained tensors skipped: {}", report.skipped.join(", "));
        }
        let loader = BatchLoader {
            dataset,
            transform: config.transform,
            normalization: config.normalization,
            batch_size: config.batch_size,
            seed: config.seed,
        };
        let loss = LossConfig::uniform(config.loss, config.model.output_count());
        Ok(Self {
            adam: Adam::new(config.adam),
            config,
            model,
            loader,
            loss,
            step: 0,
        })
    }

    /// Continues from a checkpoint directory written by [`Trainer::save_checkpoint`].
    pub fn resume(config: TrainConfig, dataset: Dataset, checkpoint: &Path) -> Result<Self> {
        let mut t = Self::new(config, dataset)?;
        let (model, _) = t.model.clone().load_weights(checkpoint, None)?;
        t.model = model;
        t.adam = read_optimizer(&checkpoint.join(OPTIMIZER_FILE), t.config.adam)?;
        t.step = t.adam.step;
        log::info!("resumed from {} at step {}", checkpoint.display(), t.step);
        Ok(t)
    }

    pub fn step(&self) -> u64 {
        self.step
    }

    pub fn config(&self) -> &TrainConfig {
        &self.config
    }

    pub fn model(&mut self) -> &mut BasNet {
        &mut self.model
    }

    pub fn into_model(self) -> BasNet {
        self.model
    }

    pub fn optimizer(&self) -> &Adam {
        &self.adam
    }

    /// One forward, backward and Adam update.
    pub fn train_step(&mut self) -> Result<StepRecord> {
        let batch = self.loader.batch(self.step)?;
        zero_grad(&mut self.model);
        let outputs = self.model.forward(&batch.input, Mode::Train)?;
        let (total, terms, grads) = batch_objective(&outputs, &batch.masks, &self.loss)?;
        if !total.is_finite() {
            let dump = self
                .config
                .out_dir
                .join(format!("nonfinite-step-{:08}.txt", self.step + 1));
            if fs::create_dir_all(&self.config.out_dir).is_ok() {
                let _ = fs::write(&dump, batch.identifiers.join("\n") + "\n");
            }
            return Err(Error::NonFiniteLoss {
                step: self.step + 1,
                identifiers: batch.identifiers,
            });
        }
        self.model.backward(&grads);
        self.adam.step(&mut self.model);
        self.step += 1;
        Ok(StepRecord {
            step: self.step,
            lr: self.config.adam.lr,
            terms,
            total,
        })
    }

    /// Trains to `max_iterations`, appending to `train.log` and writing
    /// checkpoints at the configured cadence plus one at the end.
    pub fn run(&mut self, mut on_step: impl FnMut(&StepRecord)) -> Result<Vec<StepRecord>> {
        fs::create_dir_all(&self.config.out_dir)?;
        let mut log = OpenOptions::new()
            .create(true)
            .append(true)
            .open(self.config.out_dir.join(LOG_FILE))?;
        let mut records = Vec::new();
        let mut last_saved = None;
        while self.step < self.config.max_iterations {
            let rec = self.train_step()?;
            writeln!(log, "{rec}")?;
            on_step(&rec);
            records.push(rec);
            let every = self.config.checkpoint_every;
            if every > 0 && self.step.is_multiple_of(every) {
                self.save_checkpoint()?;
                last_saved = Some(self.step);
            }
        }
        if last_saved != Some(self.step) && !records.is_empty() {
            self.save_checkpoint()?;
        }
        Ok(records)
    }

    /// Writes model, manifest and optimizer state under
    /// `out_dir/checkpoints/step-NNNNNNNN/`.
    pub fn save_checkpoint(&mut self) -> Result<PathBuf> {
        let dir = checkpoint_dir(&self.config.out_dir, self.step);
        self.model.save(&dir)?;
        write_optimizer(&self.adam, &dir.join(OPTIMIZER_FILE))?;
        Ok(dir)
    }
}

pub fn checkpoint_dir(out_dir: &Path, step: u64) -> PathBuf {
    out_dir.join(CHECKPOINT_DIR).join(format!("step-{step:08}"))
}

/// Highest-step checkpoint under `out_dir`, if any.
pub fn latest_checkpoint(out_dir: &Path) -> Result<Option<PathBuf>> {
    let root = out_dir.join(CHECKPOINT_DIR);
    if !root.is_dir() {
        return Ok(None);
    }
    let mut best: Option<(u64, PathBuf)> = None;
    for entry in fs::read_dir(root)? {
        let path = entry?.path();
        let step = path
            .file_name()
            .and_then(|n| n.to_str())
            .and_then(|n| n.strip_prefix("step-"))
            .and_then(|n| n.parse::<u64>().ok());
        if let Some(step) = step {
            if best.as_ref().is_none_or(|(s, _)| step > *s) {
                best = Some((step, path));
            }
        }
    }
    Ok(best.map(|(_, p)| p))
}

/// The step counter travels bit-exactly as two u32 halves stored in f32 slots.
fn write_optimizer(adam: &Adam, path: &Path) -> Result<()> {
    let mut a = TensorArchive::new();
    for (name, (m, v)) in &adam.moments {
        a.insert(format!("adam.m.{name}"), vec![m.len()], m.clone(), false);
        a.insert(format!("adam.v.{name}"), vec![v.len()], v.clone(), false);
    }
    let bits = [
        f32::from_bits(adam.step as u32),
        f32::from_bits((adam.step >> 32) as u32),
    ];
    a.insert("adam.step", vec![2], bits.to_vec(), false);
    a.write(path)?;
    Ok(())
}

fn read_optimizer(path: &Path, config: crate::nn::AdamConfig) -> Result<Adam> {
    let (archive, _) = TensorArchive::read(path)?;
    let mut adam = Adam::new(config);
    let bad = |reason: String| Error::Format {
        path: path.display().to_string(),
        reason,
    };
    let step = archive
        .get("adam.step")
        .ok_or_else(|| bad("missing adam.step".into()))?;
    if step.data.len() != 2 {
        return Err(bad("adam.step must hold two words".into()));
    }
    adam.step = step.data[0].to_bits() as u64 | (step.data[1].to_bits() as u64) << 32;
    for (name, t) in archive.iter() {
        if let Some(p) = name.strip_prefix("adam.m.") {
            let v = archive
                .get(&format!("adam.v.{p}"))
                .ok_or_else(|| bad(format!("missing second moment for {p}")))?;
            adam.moments
                .insert(p.to_string(), (t.data.clone(), v.data.clone()));
        }
    }
    Ok(adam)
}
