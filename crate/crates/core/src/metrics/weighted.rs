use super::check_sizes;
use super::distance::nearest_foreground;
use crate::error::Result;
use crate::imageops::{gaussian_kernel_1d, separable_filter, Border};
use crate::types::{BinaryMask, Mask};

const WINDOW: usize = 7;
const SIGMA: f64 = 5.0;
/// Distance at which the background error weight reaches 1.5.
const HALF_LIFE: f64 = 5.0;

/// Weighted F-measure with β² = 1. `None` when `g` has no foreground.
///
/// Background errors are first replaced by the error of their nearest
/// foreground pixel and smoothed; foreground pixels keep the smaller of the
/// raw and smoothed error; background errors grow with distance from the
/// object.
///
/// The smoothing replicates border pixels, so a constant error field stays
/// constant up to the image edge.
pub fn weighted_fbeta(s: &Mask, g: &BinaryMask) -> Result<Option<f64>> {
    check_sizes(s, g)?;
    let Some(nearest) = nearest_foreground(g) else {
        return Ok(None);
    };
    let (h, w) = g.size();
    let gt = g.data();
    let err: Vec<f64> = s
        .data()
        .iter()
        .zip(gt)
        .map(|(v, f)| (v - if *f { 1.0 } else { 0.0 }).abs())
        .collect();
    let propagated: Vec<f64> = (0..h * w)
        .map(|i| if gt[i] { err[i] } else { err[nearest[i].1] })
        .collect();
    let smoothed = separable_filter(
        &propagated,
        h,
        w,
        &gaussian_kernel_1d(WINDOW, SIGMA),
        Border::Replicate,
    );

    let decay = 0.5f64.ln() / HALF_LIFE;
    let (mut fg_err, mut fp, mut fg_count) = (0.0, 0.0, 0.0);
    for i in 0..h * w {
        if gt[i] {
            fg_err += err[i].min(smoothed[i]);
            fg_count += 1.0;
        } else {
            let dist = (nearest[i].0 as f64).sqrt();
            fp += err[i] * (2.0 - (decay * dist).exp());
        }
    }
    let tp = fg_count - fg_err;
    let recall = 1.0 - fg_err / fg_count;
    let precision = tp / (f64::EPSILON + tp + fp);
    Ok(Some(
        2.0 * recall * precision / (f64::EPSILON + recall + precision),
    ))
}
