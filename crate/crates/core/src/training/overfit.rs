use crate::data::Normalization;
use crate::error::{Error, Result};
use crate::imageops::{resize_image, resize_mask};
use crate::losses::{LossConfig, LossVariant};
use crate::metrics::{evaluate_pair, MetricConfig};
use crate::model::{split_logits, BasNet, ModelConfig};
use crate::nn::{zero_grad, Adam, AdamConfig, Mode, Tensor};
use crate::types::{BinaryMask, Image, Mask, MetricReport};

use super::trainer::batch_objective;

/// Stop once both targets hold on an eval-mode prediction.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EarlyStop {
    pub mae_below: f64,
    pub fw_beta_above: f64,
    pub check_every: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct OverfitConfig {
    pub model: ModelConfig,
    pub loss: LossVariant,
    pub adam: AdamConfig,
    /// Upper bound on optimizer steps.
    pub iterations: usize,
    /// Square training resolution; image and mask are resized to it.
    pub resolution: usize,
    /// Iterations at which the refined output is recorded (0 = before training).
    pub snapshots: Vec<usize>,
    pub seed: u64,
    pub normalization: Normalization,
    pub early_stop: Option<EarlyStop>,
}

impl OverfitConfig {
    pub fn new(
        model: ModelConfig,
        loss: LossVariant,
        iterations: usize,
        resolution: usize,
    ) -> Self {
        let snapshots = [0, 50, 200, 500, 1000, 2000]
            .into_iter()
            .filter(|s| *s <= iterations)
            .collect();
        Self {
            model,
            loss,
            adam: AdamConfig::default(),
            iterations,
            resolution,
            snapshots,
            seed: 0,
            normalization: Normalization::default(),
            early_stop: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Snapshot {
    pub iteration: usize,
    pub map: Mask,
}

#[derive(Clone, Debug)]
pub struct OverfitResult {
    /// Refined (final) output at each scheduled iteration and at the end.
    pub snapshots: Vec<Snapshot>,
    /// Training total loss per iteration.
    pub losses: Vec<f64>,
    pub iterations: usize,
    /// Metrics of the last snapshot against the resized, binarized mask.
    pub report: MetricReport,
    pub model: BasNet,
}

fn eval_map(model: &mut BasNet, input: &Tensor) -> Result<Mask> {
    let out = model.forward(input, Mode::Eval)?;
    Ok(split_logits(&out[..1])
        .pop()
        .expect("one sample")
        .swap_remove(0)
        .sigmoid())
}

/// Trains a fresh network on one image/mask pair, recording how the final
/// prediction evolves.
pub fn overfit_single_pair(
    image: &Image,
    mask: &Mask,
    config: &OverfitConfig,
) -> Result<OverfitResult> {
    if image.size() != mask.size() {
        return Err(Error::Shape(format!(
            "image {:?} vs mask {:?}",
            image.size(),
            mask.size()
        )));
    }
    let r = config.resolution;
    if r == 0 || !r.is_multiple_of(config.model.input_multiple()) {
        return Err(Error::Config(format!(
            "resolution {r} must be a multiple of {}",
            config.model.input_multiple()
        )));
    }
    let image = resize_image(image, r, r);
    let mask = resize_mask(mask, r, r);
    let gt = BinaryMask::threshold(&mask, 0.5);
    let input = config.normalization.batch(&[&image])?;
    let loss = LossConfig::uniform(config.loss, config.model.output_count());
    let mut model = BasNet::new(&config.model, config.seed)?;
    let mut adam = Adam::new(config.adam);
    let masks = [mask];
    let metrics = MetricConfig::default();

    let mut snapshots = Vec::new();
    let mut losses = Vec::with_capacity(config.iterations);
    let mut last: Option<Snapshot> = None;
    let mut it = 0;
    loop {
        let scheduled = config.snapshots.contains(&it);
        let check = config
            .early_stop
            .filter(|e| it > 0 && e.check_every > 0 && it % e.check_every == 0);
        if scheduled || check.is_some() || it == config.iterations {
            let snap = Snapshot {
                iteration: it,
                map: eval_map(&mut model, &input)?,
            };
            if scheduled {
                snapshots.push(snap.clone());
            }
            let stop = match check {
                Some(e) => {
                    let rep = evaluate_pair(&snap.map, &gt, &metrics)?;
                    rep.mae < e.mae_below && rep.fw_beta.is_some_and(|f| f > e.fw_beta_above)
                }
                None => false,
            };
            last = Some(snap);
            if stop {
                log::info!("targets met after {it} iterations");
                break;
            }
        }
        if it == config.iterations {
            break;
        }
        zero_grad(&mut model);
        let outputs = model.forward(&input, Mode::Train)?;
        let (total, _, grads) = batch_objective(&outputs, &masks, &loss)?;
        if !total.is_finite() {
            return Err(Error::NonFiniteLoss {
                step: it as u64 + 1,
                identifiers: vec!["single pair".into()],
            });
        }
        model.backward(&grads);
        adam.step(&mut model);
        losses.push(total);
        it += 1;
    }
    let last = last.expect("at least one evaluation");
    if snapshots.last().map(|s| s.iteration) != Some(last.iteration) {
        snapshots.push(last.clone());
    }
    let report = evaluate_pair(&last.map, &gt, &metrics)?;
    Ok(OverfitResult {
        snapshots,
        losses,
        iterations: it,
        report,
        model,
    })
}

/// Moving average with a trailing window, for trend checks on noisy losses.
pub fn smoothed(values: &[f64], window: usize) -> Vec<f64> {
    let w = window.max(1);
    values
        .windows(w.min(values.len().max(1)))
        .map(|win| win.iter().sum::<f64>() / win.len() as f64)
        .collect()
}
