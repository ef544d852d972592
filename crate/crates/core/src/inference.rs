//! Single-image prediction at the network resolution, mapped back to the
//! source size.

use crate::data::{eval_transform, Normalization};
use crate::error::{Error, Result};
use crate::metrics::{evaluate_dataset, DatasetEvaluation, MetricConfig};
use crate::model::{split_logits, BasNet};
use crate::nn::Mode;
use crate::types::{BinaryMask, Image, Mask, SideOutputSet};

pub const DEFAULT_INPUT_SIZE: usize = 320;

/// Probability maps of every output at the source resolution, in the
/// model's output order (refined first when present).
pub fn predict_side_outputs(
    model: &mut BasNet,
    image: &Image,
    input_size: usize,
    normalization: &Normalization,
) -> Result<SideOutputSet> {
    let multiple = model.config().input_multiple();
    if input_size == 0 || !input_size.is_multiple_of(multiple) {
        return Err(Error::Config(format!(
            "input size {input_size} must be a positive multiple of {multiple}"
        )));
    }
    let (resized, inverse) = eval_transform(image, input_size);
    let input = normalization.batch(&[&resized])?;
    let outputs = model.forward(&input, Mode::Eval)?;
    let maps = split_logits(&outputs)
        .pop()
        .expect("one sample")
        .into_iter()
        .map(|z| inverse.restore(&z.sigmoid()))
        .collect();
    SideOutputSet::new(maps)
}

/// The final probability map at the source resolution.
pub fn predict(
    model: &mut BasNet,
    image: &Image,
    input_size: usize,
    normalization: &Normalization,
) -> Result<Mask> {
    Ok(
        predict_side_outputs(model, image, input_size, normalization)?
            .into_maps()
            .swap_remove(0),
    )
}

/// Predicts every image and scores it against its mask (binarized at 0.5).
pub fn evaluate_model(
    model: &mut BasNet,
    samples: &[(Image, Mask)],
    attributes: Option<&[Vec<String>]>,
    input_size: usize,
    normalization: &Normalization,
    metrics: &MetricConfig,
) -> Result<DatasetEvaluation> {
    let mut pairs = Vec::with_capacity(samples.len());
    for (image, gt) in samples {
        let s = predict(model, image, input_size, normalization)?;
        pairs.push((s, BinaryMask::threshold(gt, 0.5)));
    }
    evaluate_dataset(&pairs, attributes, metrics)
}
