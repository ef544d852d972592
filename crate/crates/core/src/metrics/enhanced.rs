use super::check_sizes;
use crate::error::Result;
use crate::types::{BinaryMask, Mask};

pub const E_THRESHOLDS: usize = 256;

/// Mean enhanced-alignment measure over the thresholds `k/255`, binarizing
/// with `S ≥ t`.
///
/// At `t = 0` every pixel is foreground whatever `S` is, so for a mixed `G`
/// that threshold always scores 1/4 and the mean tops out at
/// [`e_measure_max`] rather than 1.
pub fn e_measure_mean(s: &Mask, g: &BinaryMask) -> Result<f64> {
    Ok(e_measure_curve(s, g)?.iter().sum::<f64>() / E_THRESHOLDS as f64)
}

/// Largest value [`e_measure_mean`] can take for this ground truth.
pub fn e_measure_max(g: &BinaryMask) -> f64 {
    let n = g.count();
    if n == 0 || n == g.data().len() {
        1.0
    } else {
        1.0 - 0.75 / E_THRESHOLDS as f64
    }
}

/// `E(t)` for each threshold `t = k/255`, `k = 0..=255`.
///
/// With binary maps the alignment matrix takes at most four distinct values,
/// so each threshold needs only the four joint counts.
pub fn e_measure_curve(s: &Mask, g: &BinaryMask) -> Result<Vec<f64>> {
    check_sizes(s, g)?;
    let n = g.data().len() as f64;
    let mut fg: Vec<f64> = Vec::new();
    let mut bg: Vec<f64> = Vec::new();
    for (v, f) in s.data().iter().zip(g.data()) {
        if *f {
            fg.push(*v)
        } else {
            bg.push(*v)
        }
    }
    fg.sort_by(f64::total_cmp);
    bg.sort_by(f64::total_cmp);
    let at_least = |v: &[f64], t: f64| v.len() - v.partition_point(|x| *x < t);
    let n_fg = fg.len() as f64;
    let mean_g = n_fg / n;
    let mut curve = Vec::with_capacity(E_THRESHOLDS);
    for k in 0..E_THRESHOLDS {
        let t = k as f64 / (E_THRESHOLDS - 1) as f64;
        let on_fg = at_least(&fg, t) as f64;
        let on_bg = at_least(&bg, t) as f64;
        let score = if fg.is_empty() {
            (n - on_bg) / n
        } else if bg.is_empty() {
            on_fg / n
        } else {
            let mean_s = (on_fg + on_bg) / n;
            let cell = |sv: f64, gv: f64| {
                let (a, b) = (sv - mean_s, gv - mean_g);
                let xi = 2.0 * a * b / (a * a + b * b + f64::EPSILON);
                (xi + 1.0) * (xi + 1.0) / 4.0
            };
            (on_fg * cell(1.0, 1.0)
                + (n_fg - on_fg) * cell(0.0, 1.0)
                + on_bg * cell(1.0, 0.0)
                + (bg.len() as f64 - on_bg) * cell(0.0, 0.0))
                / n
        };
        curve.push(score);
    }
    Ok(curve)
}
