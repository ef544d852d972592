use super::check_sizes;
use crate::error::{Error, Result};
use crate::types::{BinaryMask, Mask};

/// Settings of the relaxed boundary F-measure.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BoundaryParams {
    /// Matching tolerance in pixels (Euclidean).
    pub rho: usize,
    /// Prediction binarization level; foreground is `S > threshold`.
    pub threshold: f64,
}

impl Default for BoundaryParams {
    fn default() -> Self {
        Self {
            rho: 3,
            threshold: 0.5,
        }
    }
}

/// Foreground pixels with at least one 4-neighbour outside the foreground;
/// pixels beyond the image count as background.
pub fn boundary(mask: &BinaryMask) -> BinaryMask {
    let (h, w) = mask.size();
    let on = |r: isize, c: isize| {
        r >= 0 && c >= 0 && (r as usize) < h && (c as usize) < w && mask.get(r as usize, c as usize)
    };
    let data = (0..h * w)
        .map(|i| {
            let (r, c) = ((i / w) as isize, (i % w) as isize);
            on(r, c) && !(on(r - 1, c) && on(r + 1, c) && on(r, c - 1) && on(r, c + 1))
        })
        .collect();
    BinaryMask::new(h, w, data).expect("same size")
}

/// Fraction of `from` boundary pixels with a `to` boundary pixel within `rho`.
fn matched_fraction(from: &BinaryMask, to: &BinaryMask, rho: usize) -> f64 {
    let (h, w) = from.size();
    let r2 = (rho * rho) as isize;
    let reach = rho as isize;
    let mut total = 0usize;
    let mut hit = 0usize;
    for r in 0..h as isize {
        for c in 0..w as isize {
            if !from.get(r as usize, c as usize) {
                continue;
            }
            total += 1;
            let found = (-reach..=reach).any(|dr| {
                (-reach..=reach).any(|dc| {
                    let (rr, cc) = (r + dr, c + dc);
                    dr * dr + dc * dc <= r2
                        && rr >= 0
                        && cc >= 0
                        && (rr as usize) < h
                        && (cc as usize) < w
                        && to.get(rr as usize, cc as usize)
                })
            });
            hit += usize::from(found);
        }
    }
    hit as f64 / total as f64
}

/// Relaxed boundary F-measure (β² = 1).
///
/// Both boundaries empty scores 1; exactly one empty scores 0.
pub fn relaxed_boundary_fbeta(s: &Mask, g: &BinaryMask, params: &BoundaryParams) -> Result<f64> {
    check_sizes(s, g)?;
    if !(params.threshold > 0.0 && params.threshold < 1.0) {
        return Err(Error::Config(format!(
            "boundary threshold must lie in (0,1), got {}",
            params.threshold
        )));
    }
    let bs = boundary(&BinaryMask::threshold(s, params.threshold));
    let bg = boundary(g);
    match (bs.count(), bg.count()) {
        (0, 0) => return Ok(1.0),
        (0, _) | (_, 0) => return Ok(0.0),
        _ => {}
    }
    let precision = matched_fraction(&bs, &bg, params.rho);
    let recall = matched_fraction(&bg, &bs, params.rho);
    Ok(if precision + recall == 0.0 {
        0.0
    } else {
        2.0 * precision * recall / (precision + recall)
    })
}
