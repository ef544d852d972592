//! Exact Euclidean nearest-feature transform.

use crate::types::BinaryMask;

/// Nearest `true` pixel for every pixel, as `(squared distance, flat index)`.
///
/// Ties are broken towards the smallest row, then the smallest column, so the
/// result is fully determined by the input. Returns `None` when the mask has
/// no foreground.
///
/// A per-column scan finds the nearest feature row in each column; a second
/// pass compares the per-column candidates. `O(H·W·W)`, exact.
pub fn nearest_foreground(mask: &BinaryMask) -> Option<Vec<(u64, usize)>> {
    let (h, w) = mask.size();
    if mask.count() == 0 {
        return None;
    }
    // column_nearest[r * w + c]: nearest feature row in column c, if any.
    let mut column_nearest = vec![None; h * w];
    for c in 0..w {
        let mut above: Option<usize> = None;
        let mut up = vec![None; h];
        for (r, slot) in up.iter_mut().enumerate() {
            if mask.get(r, c) {
                above = Some(r);
            }
            *slot = above;
        }
        let mut below: Option<usize> = None;
        for r in (0..h).rev() {
            if mask.get(r, c) {
                below = Some(r);
            }
            column_nearest[r * w + c] = match (up[r], below) {
                (Some(a), Some(b)) => Some(if r - a <= b - r { a } else { b }),
                (a, b) => a.or(b),
            };
        }
    }
    let mut out = Vec::with_capacity(h * w);
    for r in 0..h {
        for c in 0..w {
            let mut best: Option<(u64, usize, usize)> = None;
            for cc in 0..w {
                if let Some(rr) = column_nearest[r * w + cc] {
                    let d2 = (rr.abs_diff(r).pow(2) + cc.abs_diff(c).pow(2)) as u64;
                    let cand = (d2, rr, cc);
                    if best.is_none_or(|b| cand < b) {
                        best = Some(cand);
                    }
                }
            }
            let (d2, rr, cc) = best.expect("mask has foreground");
            out.push((d2, rr * w + cc));
        }
    }
    Some(out)
}
