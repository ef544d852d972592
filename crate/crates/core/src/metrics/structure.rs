use super::check_sizes;
use crate::error::{Error, Result};
use crate::types::{BinaryMask, Mask};

/// Weights of the structure measure.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StructureParams {
    /// Balance between the object-aware and region-aware terms.
    pub alpha: f64,
    /// Dispersion penalty in the object score `2x̄ / (x̄² + 1 + 2λσ)`.
    /// 0.5 reproduces the widely used evaluation code, which adds `σ` alone.
    pub lambda: f64,
}

impl Default for StructureParams {
    fn default() -> Self {
        Self {
            alpha: 0.5,
            lambda: 0.5,
        }
    }
}

fn mean_std(values: impl Iterator<Item = f64> + Clone) -> (f64, f64, usize) {
    let (n, sum) = values
        .clone()
        .fold((0usize, 0.0), |(n, s), v| (n + 1, s + v));
    if n == 0 {
        return (0.0, 0.0, 0);
    }
    let m = sum / n as f64;
    if n < 2 {
        return (m, 0.0, n);
    }
    let var = values.map(|v| (v - m) * (v - m)).sum::<f64>() / (n - 1) as f64;
    (m, var.sqrt(), n)
}

fn object_score(values: impl Iterator<Item = f64> + Clone, lambda: f64) -> f64 {
    let (x, sigma, _) = mean_std(values);
    2.0 * x / (x * x + 1.0 + 2.0 * lambda * sigma + f64::EPSILON)
}

/// Block SSIM with global statistics, as used by the region term.
fn block_ssim(s: &Mask, g: &BinaryMask, rows: (usize, usize), cols: (usize, usize)) -> f64 {
    let n = ((rows.1 - rows.0) * (cols.1 - cols.0)) as f64;
    let gv = |r, c| if g.get(r, c) { 1.0 } else { 0.0 };
    let (mut sx, mut sy) = (0.0, 0.0);
    for r in rows.0..rows.1 {
        for c in cols.0..cols.1 {
            sx += s.get(r, c);
            sy += gv(r, c);
        }
    }
    let (mx, my) = (sx / n, sy / n);
    let (mut vx, mut vy, mut cxy) = (0.0, 0.0, 0.0);
    for r in rows.0..rows.1 {
        for c in cols.0..cols.1 {
            let (dx, dy) = (s.get(r, c) - mx, gv(r, c) - my);
            vx += dx * dx;
            vy += dy * dy;
            cxy += dx * dy;
        }
    }
    let denom = n - 1.0 + f64::EPSILON;
    let (vx, vy, cxy) = (vx / denom, vy / denom, cxy / denom);
    let a = 4.0 * mx * my * cxy;
    let b = (mx * mx + my * my) * (vx + vy);
    if a != 0.0 {
        a / (b + f64::EPSILON)
    } else if b == 0.0 {
        1.0
    } else {
        0.0
    }
}

/// Structure measure `α·S_object + (1−α)·S_region`, clamped at 0.
///
/// An all-background `g` scores `1 − mean(S)`, an all-foreground one `mean(S)`.
pub fn s_measure(s: &Mask, g: &BinaryMask, params: &StructureParams) -> Result<f64> {
    check_sizes(s, g)?;
    if !(0.0..=1.0).contains(&params.alpha) || params.lambda < 0.0 {
        return Err(Error::Config(format!(
            "invalid structure weights {params:?}"
        )));
    }
    let (h, w) = g.size();
    let total = g.count();
    if total == 0 {
        return Ok(1.0 - s.mean());
    }
    if total == h * w {
        return Ok(s.mean());
    }
    let y = total as f64 / (h * w) as f64;
    let pairs = s.data().iter().zip(g.data());
    let fg = pairs.clone().filter(|(_, f)| **f).map(|(v, _)| *v);
    let bg = pairs.filter(|(_, f)| !**f).map(|(v, _)| 1.0 - *v);
    let object = y * object_score(fg, params.lambda) + (1.0 - y) * object_score(bg, params.lambda);

    // Centroid in 1-based pixel coordinates, rounded half away from zero;
    // it doubles as the count of rows/columns in the upper-left block.
    let (mut sum_c, mut sum_r) = (0usize, 0usize);
    for r in 0..h {
        for c in 0..w {
            if g.get(r, c) {
                sum_c += c + 1;
                sum_r += r + 1;
            }
        }
    }
    let cx = (sum_c as f64 / total as f64).round() as usize;
    let cy = (sum_r as f64 / total as f64).round() as usize;
    let area = (h * w) as f64;
    let mut region = 0.0;
    for (rows, cols) in [
        ((0, cy), (0, cx)),
        ((0, cy), (cx, w)),
        ((cy, h), (0, cx)),
        ((cy, h), (cx, w)),
    ] {
        let weight = ((rows.1 - rows.0) * (cols.1 - cols.0)) as f64 / area;
        if weight > 0.0 {
            region += weight * block_ssim(s, g, rows, cols);
        }
    }
    Ok((params.alpha * object + (1.0 - params.alpha) * region).max(0.0))
}
