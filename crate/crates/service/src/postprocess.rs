//! Mask clean-up before compositing: unsharp masking to steepen the
//! object boundary, then opening and closing of the thresholded support.

use basnet::imageops::{gaussian_kernel_1d, separable_filter, Border};
use basnet::types::Mask;
use basnet::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PostprocessParams {
    pub unsharp_sigma: f64,
    pub unsharp_amount: f64,
    /// Support is `m' > threshold`.
    pub threshold: f64,
    /// Structuring element radius; 1 gives the 3×3 ellipse (a plus sign).
    pub radius: usize,
}

impl Default for PostprocessParams {
    fn default() -> Self {
        Self {
            unsharp_sigma: 2.0,
            unsharp_amount: 0.5,
            threshold: 0.5,
            radius: 1,
        }
    }
}

impl PostprocessParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.unsharp_sigma > 0.0) {
            return Err(Error::Config(format!(
                "unsharp_sigma must be positive, got {}",
                self.unsharp_sigma
            )));
        }
        if !(self.unsharp_amount >= 0.0) {
            return Err(Error::Config(format!(
                "unsharp_amount must be non-negative, got {}",
                self.unsharp_amount
            )));
        }
        if !(0.0..1.0).contains(&self.threshold) {
            return Err(Error::Config(format!(
                "threshold must lie in [0, 1), got {}",
                self.threshold
            )));
        }
        Ok(())
    }
}

/// `clamp(m + amount·(m − blur(m)), 0, 1)` with a replicate-border Gaussian
/// of ±3σ support.
pub fn unsharp(mask: &Mask, sigma: f64, amount: f64) -> Mask {
    let radius = (3.0 * sigma).ceil() as usize;
    let kernel = gaussian_kernel_1d(2 * radius + 1, sigma);
    let blurred = separable_filter(
        mask.data(),
        mask.height(),
        mask.width(),
        &kernel,
        Border::Replicate,
    );
    let data = mask
        .data()
        .iter()
        .zip(&blurred)
        .map(|(m, b)| (m + amount * (m - b)).clamp(0.0, 1.0))
        .collect();
    Mask::new(mask.height(), mask.width(), data).expect("clamped to [0, 1]")
}

/// Offsets of the discrete ellipse of the given radius.
fn element(radius: usize) -> Vec<(isize, isize)> {
    let r = radius as isize;
    let lim = (radius * radius) as isize;
    let mut out = Vec::new();
    for dy in -r..=r {
        for dx in -r..=r {
            if dy * dy + dx * dx <= lim {
                out.push((dy, dx));
            }
        }
    }
    out
}

/// Erosion (`all`) or dilation (`any`) over in-image neighbours; pixels
/// beyond the border never take part.
fn morph(bits: &[bool], h: usize, w: usize, se: &[(isize, isize)], erode: bool) -> Vec<bool> {
    let mut out = vec![false; bits.len()];
    for r in 0..h {
        for c in 0..w {
            let mut neighbours = se.iter().filter_map(|(dy, dx)| {
                let (rr, cc) = (r as isize + dy, c as isize + dx);
                (rr >= 0 && cc >= 0 && (rr as usize) < h && (cc as usize) < w)
                    .then(|| bits[rr as usize * w + cc as usize])
            });
            out[r * w + c] = if erode {
                neighbours.all(|b| b)
            } else {
                neighbours.any(|b| b)
            };
        }
    }
    out
}

/// Opening then closing of a binary support.
pub fn open_close(bits: &[bool], h: usize, w: usize, radius: usize) -> Vec<bool> {
    let se = element(radius);
    let opened = morph(&morph(bits, h, w, &se, true), h, w, &se, false);
    morph(&morph(&opened, h, w, &se, false), h, w, &se, true)
}

/// Unsharp mask, then open/close the support. Pixels the morphology removes
/// become 0 and pixels it adds become 1; every other pixel keeps its
/// sharpened soft value.
pub fn postprocess_mask(mask: &Mask, params: &PostprocessParams) -> Mask {
    let sharp = unsharp(mask, params.unsharp_sigma, params.unsharp_amount);
    let (h, w) = sharp.size();
    let support: Vec<bool> = sharp.data().iter().map(|v| *v > params.threshold).collect();
    let cleaned = open_close(&support, h, w, params.radius);
    let data = sharp
        .data()
        .iter()
        .zip(support.iter().zip(&cleaned))
        .map(|(v, (before, after))| match (before, after) {
            (true, false) => 0.0,
            (false, true) => 1.0,
            _ => *v,
        })
        .collect();
    Mask::new(h, w, data).expect("values stay in [0, 1]")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn radius_one_element_is_a_plus() {
        let mut e = element(1);
        e.sort();
        assert_eq!(e, vec![(-1, 0), (0, -1), (0, 0), (0, 1), (1, 0)]);
    }

    #[test]
    fn invalid_params_are_rejected() {
        assert!(PostprocessParams {
            unsharp_sigma: 0.0,
            ..Default::default()
        }
        .validate()
        .is_err());
        assert!(PostprocessParams {
            unsharp_amount: -1.0,
            ..Default::default()
        }
        .validate()
        .is_err());
        assert!(PostprocessParams::default().validate().is_ok());
    }
}
