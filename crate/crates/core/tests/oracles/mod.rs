//! From-the-definition transcriptions of the five measures, deliberately
//! slow and free of the library's helpers. Shared by the metric tests and
//! the acceptance run.

#![allow(dead_code)]

use basnet::types::{BinaryMask, Mask};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const EPS: f64 = f64::EPSILON;

pub fn grid(h: usize, w: usize, bits: u32) -> BinaryMask {
    BinaryMask::new(h, w, (0..h * w).map(|i| bits >> i & 1 == 1).collect()).unwrap()
}

pub fn soft_suite(h: usize, w: usize, count: usize, seed: u64) -> Vec<Mask> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = vec![
        Mask::filled(h, w, 0.0),
        Mask::filled(h, w, 1.0),
        Mask::filled(h, w, 0.5),
    ];
    while out.len() < count {
        let quantized = out.len() % 3 == 0;
        out.push(Mask::from_fn(h, w, |_, _| {
            let v: f64 = rng.gen();
            if quantized {
                (v * 4.0).round() / 4.0
            } else {
                v
            }
        }));
    }
    out
}

pub fn all_grids() -> impl Iterator<Item = BinaryMask> {
    (1..(1u32 << 9) - 1).map(|b| grid(3, 3, b))
}

// ---- weighted F-measure -------------------------------------------------

pub fn oracle_weighted_fbeta(s: &Mask, g: &BinaryMask) -> Option<f64> {
    let (h, w) = g.size();
    let fg: Vec<(usize, usize)> = (0..h)
        .flat_map(|r| (0..w).map(move |c| (r, c)))
        .filter(|&(r, c)| g.get(r, c))
        .collect();
    if fg.is_empty() {
        return None;
    }
    let gv = |r: usize, c: usize| if g.get(r, c) { 1.0 } else { 0.0 };
    let e = |r: usize, c: usize| (s.get(r, c) - gv(r, c)).abs();
    // Nearest foreground pixel: smallest distance, then smallest row, then column.
    let nearest = |r: usize, c: usize| {
        *fg.iter()
            .min_by_key(|&&(fr, fc)| {
                let d2 = (fr as i64 - r as i64).pow(2) + (fc as i64 - c as i64).pow(2);
                (d2, fr, fc)
            })
            .unwrap()
    };
    let mut et = vec![vec![0.0; w]; h];
    for r in 0..h {
        for c in 0..w {
            let (nr, nc) = if g.get(r, c) { (r, c) } else { nearest(r, c) };
            et[r][c] = e(nr, nc);
        }
    }
    // 7×7 Gaussian, sigma 5, normalized over the full window, edge pixels replicated.
    let mut k = [[0.0; 7]; 7];
    let mut ksum = 0.0;
    for (i, row) in k.iter_mut().enumerate() {
        for (j, v) in row.iter_mut().enumerate() {
            let (y, x) = (i as f64 - 3.0, j as f64 - 3.0);
            *v = (-(x * x + y * y) / 50.0).exp();
            ksum += *v;
        }
    }
    let (mut tp, mut fp, mut fg_err) = (0.0, 0.0, 0.0);
    for r in 0..h {
        for c in 0..w {
            let mut ea = 0.0;
            for (i, row) in k.iter().enumerate() {
                for (j, kv) in row.iter().enumerate() {
                    let rr = (r as i64 + i as i64 - 3).clamp(0, h as i64 - 1) as usize;
                    let cc = (c as i64 + j as i64 - 3).clamp(0, w as i64 - 1) as usize;
                    ea += kv / ksum * et[rr][cc];
                }
            }
            if g.get(r, c) {
                let ew = e(r, c).min(ea);
                fg_err += ew;
            } else {
                let (nr, nc) = nearest(r, c);
                let dist =
                    (((nr as f64 - r as f64).powi(2)) + (nc as f64 - c as f64).powi(2)).sqrt();
                fp += e(r, c) * (2.0 - (0.5f64.ln() / 5.0 * dist).exp());
            }
        }
    }
    tp += fg.len() as f64 - fg_err;
    let recall = 1.0 - fg_err / fg.len() as f64;
    let precision = tp / (EPS + tp + fp);
    Some(2.0 * recall * precision / (EPS + recall + precision))
}

// ---- relaxed boundary F-measure -----------------------------------------

pub fn oracle_boundary(m: &BinaryMask) -> Vec<(i64, i64)> {
    let (h, w) = m.size();
    let on = |r: i64, c: i64| {
        r >= 0 && c >= 0 && (r as usize) < h && (c as usize) < w && m.get(r as usize, c as usize)
    };
    let mut out = Vec::new();
    for r in 0..h as i64 {
        for c in 0..w as i64 {
            if on(r, c)
                && [(r - 1, c), (r + 1, c), (r, c - 1), (r, c + 1)]
                    .iter()
                    .any(|&(a, b)| !on(a, b))
            {
                out.push((r, c));
            }
        }
    }
    out
}

pub fn oracle_relaxed(s: &Mask, g: &BinaryMask, rho: f64, threshold: f64) -> f64 {
    let sb = BinaryMask::threshold(s, threshold);
    let (bs, bg) = (oracle_boundary(&sb), oracle_boundary(g));
    match (bs.is_empty(), bg.is_empty()) {
        (true, true) => return 1.0,
        (true, false) | (false, true) => return 0.0,
        _ => {}
    }
    let near = |p: &(i64, i64), set: &[(i64, i64)]| {
        set.iter()
            .any(|q| (((p.0 - q.0).pow(2) + (p.1 - q.1).pow(2)) as f64).sqrt() <= rho)
    };
    let precision = bs.iter().filter(|p| near(p, &bg)).count() as f64 / bs.len() as f64;
    let recall = bg.iter().filter(|p| near(p, &bs)).count() as f64 / bg.len() as f64;
    if precision + recall == 0.0 {
        0.0
    } else {
        2.0 * precision * recall / (precision + recall)
    }
}

// ---- S-measure ------------------------------------------------------------

pub fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

pub fn sample_std(v: &[f64]) -> f64 {
    if v.len() < 2 {
        return 0.0;
    }
    let m = mean(v);
    (v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (v.len() - 1) as f64).sqrt()
}

pub fn object_score(values: &[f64], lambda: f64) -> f64 {
    let x = mean(values);
    2.0 * x / (x * x + 1.0 + 2.0 * lambda * sample_std(values) + EPS)
}

pub fn block_ssim(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let (mx, my) = (mean(x), mean(y));
    let sx = x.iter().map(|a| (a - mx).powi(2)).sum::<f64>() / (n - 1.0 + EPS);
    let sy = y.iter().map(|a| (a - my).powi(2)).sum::<f64>() / (n - 1.0 + EPS);
    let sxy = x
        .iter()
        .zip(y)
        .map(|(a, b)| (a - mx) * (b - my))
        .sum::<f64>()
        / (n - 1.0 + EPS);
    let a = 4.0 * mx * my * sxy;
    let b = (mx * mx + my * my) * (sx + sy);
    if a != 0.0 {
        a / (b + EPS)
    } else if b == 0.0 {
        1.0
    } else {
        0.0
    }
}

pub fn oracle_s_measure(s: &Mask, g: &BinaryMask, lambda: f64) -> f64 {
    let (h, w) = g.size();
    let gv: Vec<f64> = g
        .data()
        .iter()
        .map(|b| if *b { 1.0 } else { 0.0 })
        .collect();
    let y = mean(&gv);
    if y == 0.0 {
        return 1.0 - s.mean();
    }
    if y == 1.0 {
        return s.mean();
    }
    let fg: Vec<f64> = (0..h * w)
        .filter(|&i| g.data()[i])
        .map(|i| s.data()[i])
        .collect();
    let bg: Vec<f64> = (0..h * w)
        .filter(|&i| !g.data()[i])
        .map(|i| 1.0 - s.data()[i])
        .collect();
    let object = y * object_score(&fg, lambda) + (1.0 - y) * object_score(&bg, lambda);

    // Centroid as 1-based rounded means, round half away from zero.
    let total = g.count() as f64;
    let mut sx = 0.0;
    let mut sy = 0.0;
    for r in 0..h {
        for c in 0..w {
            if g.get(r, c) {
                sx += (c + 1) as f64;
                sy += (r + 1) as f64;
            }
        }
    }
    let cx = (sx / total).round() as usize;
    let cy = (sy / total).round() as usize;
    let area = (h * w) as f64;
    let mut region = 0.0;
    for (r0, r1, c0, c1) in [
        (0, cy, 0, cx),
        (0, cy, cx, w),
        (cy, h, 0, cx),
        (cy, h, cx, w),
    ] {
        let weight = ((r1 - r0) * (c1 - c0)) as f64 / area;
        if weight == 0.0 {
            continue;
        }
        let mut xs = Vec::new();
        let mut ys = Vec::new();
        for r in r0..r1 {
            for c in c0..c1 {
                xs.push(s.get(r, c));
                ys.push(gv[r * w + c]);
            }
        }
        region += weight * block_ssim(&xs, &ys);
    }
    (0.5 * object + 0.5 * region).max(0.0)
}

// ---- E-measure ------------------------------------------------------------

pub fn oracle_e_measure(s: &Mask, g: &BinaryMask) -> f64 {
    let gv: Vec<f64> = g
        .data()
        .iter()
        .map(|b| if *b { 1.0 } else { 0.0 })
        .collect();
    let n = gv.len() as f64;
    let mut acc = 0.0;
    for k in 0..=255 {
        let t = k as f64 / 255.0;
        let st: Vec<f64> = s
            .data()
            .iter()
            .map(|v| if *v >= t { 1.0 } else { 0.0 })
            .collect();
        let score = if g.count() == 0 {
            st.iter().map(|v| 1.0 - v).sum::<f64>() / n
        } else if g.count() == gv.len() {
            st.iter().sum::<f64>() / n
        } else {
            let (ms, mg) = (mean(&st), mean(&gv));
            st.iter()
                .zip(&gv)
                .map(|(a, b)| {
                    let (a, b) = (a - ms, b - mg);
                    let xi = 2.0 * a * b / (a * a + b * b + EPS);
                    (xi + 1.0).powi(2) / 4.0
                })
                .sum::<f64>()
                / n
        };
        acc += score;
    }
    acc / 256.0
}
