//! Resampling, flipping and separable filtering on plain row-major buffers.

use crate::types::{Image, Mask};

/// One output sample of a 1-D bilinear resampling: `lo + (hi - lo) * t`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Tap {
    pub lo: usize,
    pub hi: usize,
    pub t: f64,
}

/// Half-pixel-centre bilinear taps (the `align_corners = false` convention).
pub fn bilinear_taps(in_len: usize, out_len: usize) -> Vec<Tap> {
    assert!(in_len > 0 && out_len > 0, "cannot resample empty axis");
    let scale = in_len as f64 / out_len as f64;
    (0..out_len)
        .map(|o| {
            let src = ((o as f64 + 0.5) * scale - 0.5).max(0.0);
            let lo = (src.floor() as usize).min(in_len - 1);
            let hi = (lo + 1).min(in_len - 1);
            let t = if hi == lo { 0.0 } else { src - lo as f64 };
            Tap { lo, hi, t }
        })
        .collect()
}

#[inline]
fn lerp(a: f64, b: f64, t: f64) -> f64 {
    a + (b - a) * t
}

/// Bilinear resize of an interleaved `channels`-plane buffer.
pub fn resize_bilinear(
    data: &[f64],
    height: usize,
    width: usize,
    channels: usize,
    out_h: usize,
    out_w: usize,
) -> Vec<f64> {
    let rows = bilinear_taps(height, out_h);
    let cols = bilinear_taps(width, out_w);
    let mut out = vec![0.0; out_h * out_w * channels];
    for (r, rt) in rows.iter().enumerate() {
        for (c, ct) in cols.iter().enumerate() {
            for ch in 0..channels {
                let at = |y: usize, x: usize| data[(y * width + x) * channels + ch];
                let top = lerp(at(rt.lo, ct.lo), at(rt.lo, ct.hi), ct.t);
                let bottom = lerp(at(rt.hi, ct.lo), at(rt.hi, ct.hi), ct.t);
                out[(r * out_w + c) * channels + ch] = lerp(top, bottom, rt.t);
            }
        }
    }
    out
}

pub fn resize_mask(mask: &Mask, out_h: usize, out_w: usize) -> Mask {
    if mask.size() == (out_h, out_w) {
        return mask.clone();
    }
    let data = resize_bilinear(mask.data(), mask.height(), mask.width(), 1, out_h, out_w);
    // Convex combinations stay in range; the clamp only absorbs rounding.
    let data = data.into_iter().map(|v| v.clamp(0.0, 1.0)).collect();
    Mask::from_vec_unchecked(out_h, out_w, data)
}

pub fn resize_image(image: &Image, out_h: usize, out_w: usize) -> Image {
    if image.size() == (out_h, out_w) {
        return image.clone();
    }
    let src: Vec<f64> = image.data().iter().map(|v| *v as f64).collect();
    let data = resize_bilinear(&src, image.height(), image.width(), 3, out_h, out_w)
        .into_iter()
        .map(|v| (v as f32).clamp(0.0, 1.0))
        .collect();
    Image::new(out_h, out_w, data).expect("resized image keeps its invariants")
}

pub fn hflip_mask(mask: &Mask) -> Mask {
    let (h, w) = mask.size();
    let mut data = Vec::with_capacity(h * w);
    for r in 0..h {
        data.extend((0..w).rev().map(|c| mask.get(r, c)));
    }
    Mask::from_vec_unchecked(h, w, data)
}

pub fn hflip_image(image: &Image) -> Image {
    let (h, w) = image.size();
    let mut data = Vec::with_capacity(h * w * 3);
    for r in 0..h {
        for c in (0..w).rev() {
            data.extend(image.pixel(r, c));
        }
    }
    Image::new(h, w, data).expect("flip keeps image invariants")
}

pub fn crop_mask(mask: &Mask, top: usize, left: usize, h: usize, w: usize) -> Mask {
    let mut data = Vec::with_capacity(h * w);
    for r in top..top + h {
        data.extend((left..left + w).map(|c| mask.get(r, c)));
    }
    Mask::from_vec_unchecked(h, w, data)
}

pub fn crop_image(image: &Image, top: usize, left: usize, h: usize, w: usize) -> Image {
    let mut data = Vec::with_capacity(h * w * 3);
    for r in top..top + h {
        for c in left..left + w {
            data.extend(image.pixel(r, c));
        }
    }
    Image::new(h, w, data).expect("crop keeps image invariants")
}

/// Normalized 1-D Gaussian of `len` taps centred on the middle tap.
pub fn gaussian_kernel_1d(len: usize, sigma: f64) -> Vec<f64> {
    let centre = (len as f64 - 1.0) / 2.0;
    let raw: Vec<f64> = (0..len)
        .map(|i| {
            let x = i as f64 - centre;
            (-(x * x) / (2.0 * sigma * sigma)).exp()
        })
        .collect();
    let sum: f64 = raw.iter().sum();
    raw.into_iter().map(|v| v / sum).collect()
}

/// How samples beyond the border are synthesized.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Border {
    Zero,
    Replicate,
}

/// Same-size separable correlation with an odd-length symmetric kernel.
pub fn separable_filter(
    data: &[f64],
    height: usize,
    width: usize,
    kernel: &[f64],
    border: Border,
) -> Vec<f64> {
    assert!(kernel.len() % 2 == 1, "kernel length must be odd");
    let half = (kernel.len() / 2) as isize;
    let sample = |v: &[f64], len: usize, idx: isize, stride: usize, base: usize| -> f64 {
        if idx >= 0 && (idx as usize) < len {
            v[base + idx as usize * stride]
        } else {
            match border {
                Border::Zero => 0.0,
                Border::Replicate => v[base + idx.clamp(0, len as isize - 1) as usize * stride],
            }
        }
    };
    let mut tmp = vec![0.0; height * width];
    for r in 0..height {
        for c in 0..width {
            let mut acc = 0.0;
            for (k, w) in kernel.iter().enumerate() {
                acc += w * sample(data, width, c as isize + k as isize - half, 1, r * width);
            }
            tmp[r * width + c] = acc;
        }
    }
    let mut out = vec![0.0; height * width];
    for c in 0..width {
        for r in 0..height {
            let mut acc = 0.0;
            for (k, w) in kernel.iter().enumerate() {
                acc += w * sample(&tmp, height, r as isize + k as isize - half, width, c);
            }
            out[r * width + c] = acc;
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn taps_identity_when_sizes_match() {
        for t in bilinear_taps(7, 7).iter().enumerate() {
            assert_eq!(t.1.lo, t.0);
            assert_eq!(t.1.t, 0.0);
        }
    }

    #[test]
    fn upsample_by_two_matches_half_pixel_convention() {
        // [0, 1] upsampled to 4: sources -0.25(->0), 0.25, 0.75, 1.25(->1)
        let out = resize_bilinear(&[0.0, 1.0], 1, 2, 1, 1, 4);
        assert_eq!(out, vec![0.0, 0.25, 0.75, 1.0]);
    }

    #[test]
    fn constant_survives_resize_exactly() {
        let m = Mask::filled(13, 9, 0.3);
        let up = resize_mask(&m, 32, 32);
        assert!(up.data().iter().all(|v| *v == 0.3));
        let back = resize_mask(&up, 13, 9);
        assert_eq!(back, m);
    }

    #[test]
    fn flip_is_an_involution() {
        let m = Mask::from_fn(3, 5, |r, c| (r * 5 + c) as f64 / 15.0);
        assert_eq!(hflip_mask(&hflip_mask(&m)), m);
        assert_eq!(hflip_mask(&m).get(1, 0), m.get(1, 4));
        let img = Image::from_fn(2, 3, |r, c| [r as f32 / 2.0, c as f32 / 3.0, 0.5]);
        assert_eq!(hflip_image(&hflip_image(&img)), img);
    }

    #[test]
    fn gaussian_kernel_is_normalized_and_symmetric() {
        let k = gaussian_kernel_1d(11, 1.5);
        assert!((k.iter().sum::<f64>() - 1.0).abs() < 1e-15);
        for i in 0..5 {
            assert_eq!(k[i], k[10 - i]);
        }
    }

    #[test]
    fn replicate_filter_keeps_constants() {
        let data = vec![0.7; 6 * 5];
        let out = separable_filter(&data, 6, 5, &gaussian_kernel_1d(7, 2.0), Border::Replicate);
        assert!(out.iter().all(|v| (v - 0.7).abs() < 1e-14));
    }
}
