//! Value types shared by every module: pictures, masks, side outputs and reports.

use crate::error::{Error, Result};

/// Log guard used by the probability-space BCE.
pub const PROBABILITY_EPSILON: f64 = 1e-7;

/// An RGB picture, row-major and channel-interleaved, values in `[0, 1]`.
#[derive(Clone, Debug, PartialEq)]
pub struct Image {
    height: usize,
    width: usize,
    data: Vec<f32>,
}

impl Image {
    pub const CHANNELS: usize = 3;

    pub fn new(height: usize, width: usize, data: Vec<f32>) -> Result<Self> {
        if data.len() != height * width * Self::CHANNELS {
            return Err(Error::Shape(format!(
                "image {height}x{width}x3 needs {} values, got {}",
                height * width * 3,
                data.len()
            )));
        }
        if let Some(v) = data
            .iter()
            .find(|v| !v.is_finite() || **v < 0.0 || **v > 1.0)
        {
            return Err(Error::NonFinite(format!("image value {v} outside [0,1]")));
        }
        Ok(Self {
            height,
            width,
            data,
        })
    }

    pub fn filled(height: usize, width: usize, rgb: [f32; 3]) -> Self {
        let data = (0..height * width).flat_map(|_| rgb).collect();
        Self {
            height,
            width,
            data,
        }
    }

    pub fn from_fn(
        height: usize,
        width: usize,
        mut f: impl FnMut(usize, usize) -> [f32; 3],
    ) -> Self {
        let mut data = Vec::with_capacity(height * width * 3);
        for r in 0..height {
            for c in 0..width {
                data.extend(f(r, c).map(|v| v.clamp(0.0, 1.0)));
            }
        }
        Self {
            height,
            width,
            data,
        }
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn size(&self) -> (usize, usize) {
        (self.height, self.width)
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn pixel(&self, r: usize, c: usize) -> [f32; 3] {
        let i = (r * self.width + c) * 3;
        [self.data[i], self.data[i + 1], self.data[i + 2]]
    }
}

/// A single-channel map in `[0, 1]`: ground truth `G` or prediction `S`.
#[derive(Clone, Debug, PartialEq)]
pub struct Mask {
    height: usize,
    width: usize,
    data: Vec<f64>,
}

impl Mask {
    pub fn new(height: usize, width: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != height * width {
            return Err(Error::Shape(format!(
                "mask {height}x{width} needs {} values, got {}",
                height * width,
                data.len()
            )));
        }
        if let Some(v) = data.iter().find(|v| !v.is_finite()) {
            return Err(Error::NonFinite(format!("mask value {v}")));
        }
        if let Some(v) = data.iter().find(|v| **v < 0.0 || **v > 1.0) {
            return Err(Error::Shape(format!("mask value {v} outside [0,1]")));
        }
        Ok(Self {
            height,
            width,
            data,
        })
    }

    pub fn filled(height: usize, width: usize, value: f64) -> Self {
        debug_assert!((0.0..=1.0).contains(&value));
        Self {
            height,
            width,
            data: vec![value; height * width],
        }
    }

    pub fn from_fn(height: usize, width: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut data = Vec::with_capacity(height * width);
        for r in 0..height {
            for c in 0..width {
                data.push(f(r, c).clamp(0.0, 1.0));
            }
        }
        Self {
            height,
            width,
            data,
        }
    }

    /// Builds a mask from values already known to lie in `[0, 1]`.
    pub(crate) fn from_vec_unchecked(height: usize, width: usize, data: Vec<f64>) -> Self {
        debug_assert_eq!(data.len(), height * width);
        debug_assert!(
            data.iter().all(|v| (0.0..=1.0).contains(v)),
            "mask left [0,1]"
        );
        Self {
            height,
            width,
            data,
        }
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn size(&self) -> (usize, usize) {
        (self.height, self.width)
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.width + c]
    }

    pub fn mean(&self) -> f64 {
        self.data.iter().sum::<f64>() / self.data.len() as f64
    }

    /// `1 - m` pointwise.
    pub fn complement(&self) -> Mask {
        Self::from_vec_unchecked(
            self.height,
            self.width,
            self.data.iter().map(|v| 1.0 - v).collect(),
        )
    }

    pub fn ensure_same_size(&self, other: &Mask) -> Result<()> {
        if self.size() != other.size() {
            return Err(Error::Shape(format!(
                "{}x{} vs {}x{}",
                self.height, self.width, other.height, other.width
            )));
        }
        Ok(())
    }
}

/// Clips a probability map to `[ε, 1 − ε]` so logarithms stay finite.
pub fn clamp_probability(map: &Mask) -> Result<Mask> {
    if let Some(v) = map.data.iter().find(|v| !v.is_finite()) {
        return Err(Error::NonFinite(format!("probability value {v}")));
    }
    let data = map
        .data
        .iter()
        .map(|v| v.clamp(PROBABILITY_EPSILON, 1.0 - PROBABILITY_EPSILON))
        .collect();
    Ok(Mask::from_vec_unchecked(map.height, map.width, data))
}

/// A strictly binary mask, the form metrics require of ground truth.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct BinaryMask {
    height: usize,
    width: usize,
    data: Vec<bool>,
}

impl BinaryMask {
    pub fn new(height: usize, width: usize, data: Vec<bool>) -> Result<Self> {
        if data.len() != height * width {
            return Err(Error::Shape(format!(
                "binary mask {height}x{width} vs {} values",
                data.len()
            )));
        }
        Ok(Self {
            height,
            width,
            data,
        })
    }

    /// Foreground where `value > threshold`.
    pub fn threshold(mask: &Mask, threshold: f64) -> Self {
        Self {
            height: mask.height,
            width: mask.width,
            data: mask.data.iter().map(|v| *v > threshold).collect(),
        }
    }

    /// Accepts only masks whose values are exactly 0 or 1.
    pub fn try_from_mask(mask: &Mask) -> Result<Self> {
        if let Some(v) = mask.data.iter().find(|v| **v != 0.0 && **v != 1.0) {
            return Err(Error::Shape(format!(
                "ground truth is not binary (found {v})"
            )));
        }
        Ok(Self::threshold(mask, 0.5))
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn size(&self) -> (usize, usize) {
        (self.height, self.width)
    }

    pub fn data(&self) -> &[bool] {
        &self.data
    }

    pub fn get(&self, r: usize, c: usize) -> bool {
        self.data[r * self.width + c]
    }

    pub fn count(&self) -> usize {
        self.data.iter().filter(|b| **b).count()
    }

    pub fn to_mask(&self) -> Mask {
        Mask::from_vec_unchecked(
            self.height,
            self.width,
            self.data
                .iter()
                .map(|b| if *b { 1.0 } else { 0.0 })
                .collect(),
        )
    }
}

/// Pre-sigmoid map with the spatial layout of a [`Mask`].
#[derive(Clone, Debug, PartialEq)]
pub struct LogitMap {
    pub height: usize,
    pub width: usize,
    pub data: Vec<f64>,
}

impl LogitMap {
    pub fn new(height: usize, width: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != height * width {
            return Err(Error::Shape(format!(
                "logits {height}x{width} vs {} values",
                data.len()
            )));
        }
        Ok(Self {
            height,
            width,
            data,
        })
    }

    pub fn sigmoid(&self) -> Mask {
        Mask::from_vec_unchecked(
            self.height,
            self.width,
            self.data.iter().map(|z| sigmoid(*z)).collect(),
        )
    }
}

pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// The deeply supervised outputs of one forward pass.
///
/// Index 0 is the final map (refined when a refinement module is present,
/// otherwise decoder stage 1). With a refinement module the remaining indices
/// are decoder stages 1..=6 followed by the bridge, giving 8 maps; without it
/// the prediction module's 7 maps (or just 1 for the plain encoder-decoder).
#[derive(Clone, Debug, PartialEq)]
pub struct SideOutputSet {
    maps: Vec<Mask>,
}

impl SideOutputSet {
    pub fn new(maps: Vec<Mask>) -> Result<Self> {
        if maps.is_empty() {
            return Err(Error::Empty("side output set".into()));
        }
        let size = maps[0].size();
        if maps.iter().any(|m| m.size() != size) {
            return Err(Error::Shape("side outputs differ in spatial size".into()));
        }
        Ok(Self { maps })
    }

    pub fn maps(&self) -> &[Mask] {
        &self.maps
    }

    pub fn len(&self) -> usize {
        self.maps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.maps.is_empty()
    }

    pub fn final_map(&self) -> &Mask {
        &self.maps[0]
    }

    pub fn into_maps(self) -> Vec<Mask> {
        self.maps
    }
}

/// Loss terms for one output.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct HybridTerms {
    pub bce: f64,
    pub ssim: f64,
    pub iou: f64,
    pub hybrid: f64,
}

impl HybridTerms {
    pub fn scaled(self, w: f64) -> Self {
        Self {
            bce: self.bce * w,
            ssim: self.ssim * w,
            iou: self.iou * w,
            hybrid: self.hybrid * w,
        }
    }

    pub fn add(self, o: Self) -> Self {
        Self {
            bce: self.bce + o.bce,
            ssim: self.ssim + o.ssim,
            iou: self.iou + o.iou,
            hybrid: self.hybrid + o.hybrid,
        }
    }
}

/// Per-output loss terms and their weighted total.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct LossBreakdown {
    pub per_output: Vec<HybridTerms>,
    pub total: f64,
}

impl LossBreakdown {
    /// Term sums over outputs, each weighted by its α.
    pub fn weighted_terms(&self, alpha: &[f64]) -> HybridTerms {
        self.per_output
            .iter()
            .zip(alpha)
            .fold(HybridTerms::default(), |acc, (t, a)| acc.add(t.scaled(*a)))
    }
}

/// One training/evaluation pair.
#[derive(Clone, Debug)]
pub struct Sample {
    pub image: Image,
    pub mask: Mask,
    pub identifier: String,
    pub original_size: (usize, usize),
}

impl Sample {
    pub fn new(image: Image, mask: Mask, identifier: impl Into<String>) -> Result<Self> {
        if image.size() != mask.size() {
            return Err(Error::Shape(format!(
                "image {:?} and mask {:?} differ",
                image.size(),
                mask.size()
            )));
        }
        let original_size = image.size();
        Ok(Self {
            image,
            mask,
            identifier: identifier.into(),
            original_size,
        })
    }
}

/// The five evaluation measures for one pair or one aggregate.
///
/// `fw_beta` is `None` when the ground truth has no foreground, in which case
/// aggregation skips it.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MetricReport {
    pub fw_beta: Option<f64>,
    pub fb_beta: f64,
    pub mae: f64,
    pub s_alpha: f64,
    pub e_phi: f64,
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn clamp_keeps_interior_values() {
        let m = Mask::filled(2, 2, 0.5);
        assert_eq!(clamp_probability(&m).unwrap(), m);
    }

    #[test]
    fn clamp_clips_boundaries() {
        let m = Mask::new(1, 2, vec![0.0, 1.0]).unwrap();
        let c = clamp_probability(&m).unwrap();
        assert_eq!(c.data(), &[1e-7, 1.0 - 1e-7]);
    }

    #[test]
    fn clamp_rejects_non_finite() {
        let m = Mask {
            height: 1,
            width: 1,
            data: vec![f64::NAN],
        };
        assert!(matches!(clamp_probability(&m), Err(Error::NonFinite(_))));
    }

    #[test]
    fn mask_rejects_out_of_range() {
        assert!(Mask::new(1, 1, vec![1.5]).is_err());
        assert!(Mask::new(1, 1, vec![f64::INFINITY]).is_err());
        assert!(Mask::new(1, 2, vec![0.5]).is_err());
    }

    #[test]
    fn binary_mask_requires_binary_values() {
        let soft = Mask::new(1, 2, vec![0.0, 0.4]).unwrap();
        assert!(BinaryMask::try_from_mask(&soft).is_err());
        let hard = Mask::new(1, 2, vec![0.0, 1.0]).unwrap();
        assert_eq!(BinaryMask::try_from_mask(&hard).unwrap().count(), 1);
    }

    #[test]
    fn sample_requires_matching_sizes() {
        let img = Image::filled(2, 3, [0.1, 0.2, 0.3]);
        assert!(Sample::new(img.clone(), Mask::filled(2, 2, 0.0), "a").is_err());
        let s = Sample::new(img, Mask::filled(2, 3, 0.0), "a").unwrap();
        assert_eq!(s.original_size, (2, 3));
    }

    #[test]
    fn sigmoid_is_stable_at_extremes() {
        assert_eq!(sigmoid(-1000.0), 0.0);
        assert_eq!(sigmoid(1000.0), 1.0);
        assert!((sigmoid(0.0) - 0.5).abs() < 1e-15);
    }
}
