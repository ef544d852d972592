//! The hybrid training loss: binary cross-entropy, SSIM and soft IoU per
//! output, summed over all deeply supervised outputs with weights `α_k`.
//!
//! Every term is available both as a plain value and with its analytic
//! gradient. The training path works on logits so the BCE term can use the
//! stable `max(z, 0) - z·g + ln(1 + e^{-|z|})` form.

use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::imageops::{gaussian_kernel_1d, separable_filter, Border};
use crate::types::{
    clamp_probability, sigmoid, HybridTerms, LogitMap, LossBreakdown, Mask, SideOutputSet,
    PROBABILITY_EPSILON,
};

/// Gaussian-window SSIM settings.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SsimParams {
    pub window: usize,
    pub sigma: f64,
    pub c1: f64,
    pub c2: f64,
}

impl Default for SsimParams {
    fn default() -> Self {
        Self {
            window: 11,
            sigma: 1.5,
            c1: 0.01 * 0.01,
            c2: 0.03 * 0.03,
        }
    }
}

impl SsimParams {
    fn validate(&self) -> Result<()> {
        if self.window == 0 || self.window.is_multiple_of(2) {
            return Err(Error::Config(format!(
                "SSIM window must be odd, got {}",
                self.window
            )));
        }
        if !(self.sigma > 0.0) || !(self.c1 > 0.0) || !(self.c2 > 0.0) {
            return Err(Error::Config(
                "SSIM sigma, C1 and C2 must be positive".into(),
            ));
        }
        Ok(())
    }

    /// 2-D window weights, row-major, summing to one.
    pub fn window_weights(&self) -> Vec<f64> {
        let k = gaussian_kernel_1d(self.window, self.sigma);
        k.iter()
            .flat_map(|a| k.iter().map(move |b| a * b))
            .collect()
    }
}

/// Which of the three terms contribute.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum LossVariant {
    B,
    S,
    I,
    BS,
    BI,
    SI,
    BSI,
}

impl LossVariant {
    pub const ALL: [LossVariant; 7] = [
        LossVariant::B,
        LossVariant::S,
        LossVariant::I,
        LossVariant::BS,
        LossVariant::BI,
        LossVariant::SI,
        LossVariant::BSI,
    ];

    pub fn bce(self) -> bool {
        matches!(self, Self::B | Self::BS | Self::BI | Self::BSI)
    }

    pub fn ssim(self) -> bool {
        matches!(self, Self::S | Self::BS | Self::SI | Self::BSI)
    }

    pub fn iou(self) -> bool {
        matches!(self, Self::I | Self::BI | Self::SI | Self::BSI)
    }

    pub fn name(self) -> &'static str {
        match self {
            Self::B => "b",
            Self::S => "s",
            Self::I => "i",
            Self::BS => "bs",
            Self::BI => "bi",
            Self::SI => "si",
            Self::BSI => "bsi",
        }
    }
}

impl fmt::Display for LossVariant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for LossVariant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let key = s.trim().to_ascii_lowercase();
        let key = key.trim_start_matches("l_").trim_start_matches("ℓ_");
        Self::ALL
            .into_iter()
            .find(|v| v.name() == key)
            .ok_or_else(|| {
                Error::Config(format!(
                    "unknown loss variant {s:?} (expected one of b,s,i,bs,bi,si,bsi)"
                ))
            })
    }
}

/// Term selection, per-output weights and SSIM settings.
#[derive(Clone, Debug, PartialEq)]
pub struct LossConfig {
    pub variant: LossVariant,
    pub alpha: Vec<f64>,
    pub ssim: SsimParams,
}

impl LossConfig {
    /// Unit weights for `outputs` supervised maps.
    pub fn uniform(variant: LossVariant, outputs: usize) -> Self {
        Self {
            variant,
            alpha: vec![1.0; outputs],
            ssim: SsimParams::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.alpha.is_empty() {
            return Err(Error::Config(
                "loss needs at least one output weight".into(),
            ));
        }
        if let Some(a) = self.alpha.iter().find(|a| !(**a > 0.0)) {
            return Err(Error::Config(format!(
                "output weights must be positive, got {a}"
            )));
        }
        self.ssim.validate()
    }
}

fn check_pair(s: &Mask, g: &Mask) -> Result<()> {
    s.ensure_same_size(g)?;
    if s.is_empty() {
        return Err(Error::Empty("loss over an empty map".into()));
    }
    Ok(())
}

/// Mean binary cross-entropy. Each log argument (`S` and `1 − S`) is bounded
/// below by ε, so a saturated correct pixel costs exactly zero and a
/// saturated wrong one costs `−ln ε`.
pub fn bce_loss(s: &Mask, g: &Mask) -> Result<f64> {
    Ok(bce_loss_with_grad(s, g)?.0)
}

/// BCE value and its gradient with respect to `S`. A log term whose argument
/// sits at the ε floor contributes no gradient.
pub fn bce_loss_with_grad(s: &Mask, g: &Mask) -> Result<(f64, Vec<f64>)> {
    check_pair(s, g)?;
    // Rejects NaN and infinities before any logarithm is taken.
    clamp_probability(s)?;
    let eps = PROBABILITY_EPSILON;
    let n = s.len() as f64;
    let mut value = 0.0;
    let mut grad = Vec::with_capacity(s.len());
    for (&p, &y) in s.data().iter().zip(g.data()) {
        let (pos, neg) = (p.max(eps), (1.0 - p).max(eps));
        value -= y * pos.ln() + (1.0 - y) * neg.ln();
        let mut d = 0.0;
        if p > eps {
            d -= y / p;
        }
        if 1.0 - p > eps {
            d += (1.0 - y) / (1.0 - p);
        }
        grad.push(d / n);
    }
    Ok((value / n, grad))
}

/// BCE evaluated on logits; gradient is with respect to the logits.
pub fn bce_with_logits(z: &LogitMap, g: &Mask) -> Result<(f64, Vec<f64>)> {
    if (z.height, z.width) != g.size() {
        return Err(Error::Shape(format!(
            "logits {}x{} vs mask {:?}",
            z.height,
            z.width,
            g.size()
        )));
    }
    let n = g.len() as f64;
    let mut value = 0.0;
    let mut grad = Vec::with_capacity(g.len());
    for (&x, &y) in z.data.iter().zip(g.data()) {
        value += x.max(0.0) - x * y + (-x.abs()).exp().ln_1p();
        grad.push((sigmoid(x) - y) / n);
    }
    Ok((value / n, grad))
}

/// SSIM of one pair of equally sized patches under window weights `w`
/// (weights must sum to one). Moments are weighted; `σ` are standard deviations.
pub fn ssim_index(x: &[f64], y: &[f64], w: &[f64], params: &SsimParams) -> f64 {
    let mx: f64 = x.iter().zip(w).map(|(a, k)| a * k).sum();
    let my: f64 = y.iter().zip(w).map(|(a, k)| a * k).sum();
    let vx: f64 = x.iter().zip(w).map(|(a, k)| k * (a - mx) * (a - mx)).sum();
    let vy: f64 = y.iter().zip(w).map(|(a, k)| k * (a - my) * (a - my)).sum();
    let cxy: f64 = x
        .iter()
        .zip(y)
        .zip(w)
        .map(|((a, b), k)| k * (a - mx) * (b - my))
        .sum();
    ((2.0 * mx * my + params.c1) * (2.0 * cxy + params.c2))
        / ((mx * mx + my * my + params.c1) * (vx + vy + params.c2))
}

/// The closed form SSIM loss takes on a patch whose ground truth is all zero.
pub fn ssim_background_loss(x: &[f64], w: &[f64], params: &SsimParams) -> f64 {
    let mx: f64 = x.iter().zip(w).map(|(a, k)| a * k).sum();
    let vx: f64 = x.iter().zip(w).map(|(a, k)| k * (a - mx) * (a - mx)).sum();
    1.0 - params.c1 * params.c2 / ((mx * mx + params.c1) * (vx + params.c2))
}

struct SsimMaps {
    index: Vec<f64>,
    mu_x: Vec<f64>,
    mu_y: Vec<f64>,
    var_x: Vec<f64>,
    var_y: Vec<f64>,
    cov: Vec<f64>,
}

fn ssim_maps(s: &Mask, g: &Mask, params: &SsimParams, kernel: &[f64]) -> SsimMaps {
    let (h, w) = s.size();
    let filt = |v: &[f64]| separable_filter(v, h, w, kernel, Border::Zero);
    let x = s.data();
    let y = g.data();
    let mu_x = filt(x);
    let mu_y = filt(y);
    let xx: Vec<f64> = x.iter().map(|a| a * a).collect();
    let yy: Vec<f64> = y.iter().map(|a| a * a).collect();
    let xy: Vec<f64> = x.iter().zip(y).map(|(a, b)| a * b).collect();
    let var_x: Vec<f64> = filt(&xx)
        .iter()
        .zip(&mu_x)
        .map(|(e, m)| e - m * m)
        .collect();
    let var_y: Vec<f64> = filt(&yy)
        .iter()
        .zip(&mu_y)
        .map(|(e, m)| e - m * m)
        .collect();
    let cov: Vec<f64> = filt(&xy)
        .iter()
        .zip(mu_x.iter().zip(&mu_y))
        .map(|(e, (a, b))| e - a * b)
        .collect();
    let index = (0..h * w)
        .map(|i| {
            ((2.0 * mu_x[i] * mu_y[i] + params.c1) * (2.0 * cov[i] + params.c2))
                / ((mu_x[i] * mu_x[i] + mu_y[i] * mu_y[i] + params.c1)
                    * (var_x[i] + var_y[i] + params.c2))
        })
        .collect();
    SsimMaps {
        index,
        mu_x,
        mu_y,
        var_x,
        var_y,
        cov,
    }
}

/// `1 − mean SSIM`, with a window centred on every pixel. Windows reaching past
/// the border see zeros, so maps of any size are accepted.
pub fn ssim_loss(s: &Mask, g: &Mask, params: &SsimParams) -> Result<f64> {
    check_pair(s, g)?;
    params.validate()?;
    let kernel = gaussian_kernel_1d(params.window, params.sigma);
    let maps = ssim_maps(s, g, params, &kernel);
    Ok(1.0 - maps.index.iter().sum::<f64>() / s.len() as f64)
}

/// SSIM loss and its gradient with respect to `S`.
pub fn ssim_loss_with_grad(s: &Mask, g: &Mask, params: &SsimParams) -> Result<(f64, Vec<f64>)> {
    check_pair(s, g)?;
    params.validate()?;
    let (h, w) = s.size();
    let n = s.len();
    let kernel = gaussian_kernel_1d(params.window, params.sigma);
    let m = ssim_maps(s, g, params, &kernel);

    // Partials of each window's index with respect to its first moment of x,
    // raw second moment of x, and raw cross moment.
    let mut d_mu = vec![0.0; n];
    let mut d_xx = vec![0.0; n];
    let mut d_xy = vec![0.0; n];
    for i in 0..n {
        let a1 = 2.0 * m.mu_x[i] * m.mu_y[i] + params.c1;
        let a2 = 2.0 * m.cov[i] + params.c2;
        let b1 = m.mu_x[i] * m.mu_x[i] + m.mu_y[i] * m.mu_y[i] + params.c1;
        let b2 = m.var_x[i] + m.var_y[i] + params.c2;
        let f = m.index[i];
        let (ux, uy) = (m.mu_x[i], m.mu_y[i]);
        d_mu[i] = f * (2.0 * uy / a1 - 2.0 * uy / a2 - 2.0 * ux / b1 + 2.0 * ux / b2);
        d_xx[i] = -f / b2;
        d_xy[i] = 2.0 * f / a2;
    }
    // The zero-padded symmetric filter is self-adjoint.
    let back = |v: &[f64]| separable_filter(v, h, w, &kernel, Border::Zero);
    let (bm, bxx, bxy) = (back(&d_mu), back(&d_xx), back(&d_xy));
    let scale = -1.0 / n as f64;
    let grad = (0..n)
        .map(|j| scale * (bm[j] + 2.0 * s.data()[j] * bxx[j] + g.data()[j] * bxy[j]))
        .collect();
    Ok((1.0 - m.index.iter().sum::<f64>() / n as f64, grad))
}

/// Soft IoU loss. Two all-zero maps agree perfectly and give 0.
pub fn iou_loss(s: &Mask, g: &Mask) -> Result<f64> {
    Ok(iou_loss_with_grad(s, g)?.0)
}

pub fn iou_loss_with_grad(s: &Mask, g: &Mask) -> Result<(f64, Vec<f64>)> {
    check_pair(s, g)?;
    let mut inter = 0.0;
    let mut union = 0.0;
    for (a, b) in s.data().iter().zip(g.data()) {
        inter += a * b;
        union += a + b - a * b;
    }
    if union == 0.0 {
        log::debug!("IoU of two empty maps; reporting zero loss");
        return Ok((0.0, vec![0.0; s.len()]));
    }
    let grad = g
        .data()
        .iter()
        .map(|b| -(b * union - inter * (1.0 - b)) / (union * union))
        .collect();
    Ok((1.0 - inter / union, grad))
}

fn combine(variant: LossVariant, bce: f64, ssim: f64, iou: f64) -> HybridTerms {
    let bce = if variant.bce() { bce } else { 0.0 };
    let ssim = if variant.ssim() { ssim } else { 0.0 };
    let iou = if variant.iou() { iou } else { 0.0 };
    HybridTerms {
        bce,
        ssim,
        iou,
        hybrid: bce + ssim + iou,
    }
}

/// The enabled terms for one output; disabled terms read 0.
pub fn hybrid_loss(s: &Mask, g: &Mask, config: &LossConfig) -> Result<HybridTerms> {
    check_pair(s, g)?;
    let v = config.variant;
    let bce = if v.bce() { bce_loss(s, g)? } else { 0.0 };
    let ssim = if v.ssim() {
        ssim_loss(s, g, &config.ssim)?
    } else {
        0.0
    };
    let iou = if v.iou() { iou_loss(s, g)? } else { 0.0 };
    Ok(combine(v, bce, ssim, iou))
}

/// Hybrid terms and the gradient of their sum with respect to `S`.
pub fn hybrid_loss_with_grad(
    s: &Mask,
    g: &Mask,
    config: &LossConfig,
) -> Result<(HybridTerms, Vec<f64>)> {
    check_pair(s, g)?;
    let v = config.variant;
    let mut grad = vec![0.0; s.len()];
    let mut add = |(value, gr): (f64, Vec<f64>)| {
        grad.iter_mut().zip(gr).for_each(|(a, b)| *a += b);
        value
    };
    let bce = if v.bce() {
        add(bce_loss_with_grad(s, g)?)
    } else {
        0.0
    };
    let ssim = if v.ssim() {
        add(ssim_loss_with_grad(s, g, &config.ssim)?)
    } else {
        0.0
    };
    let iou = if v.iou() {
        add(iou_loss_with_grad(s, g)?)
    } else {
        0.0
    };
    Ok((combine(v, bce, ssim, iou), grad))
}

/// Hybrid terms from logits, gradient with respect to the logits. BCE uses the
/// stable logit form; SSIM and IoU are chained through the sigmoid.
pub fn hybrid_loss_from_logits(
    z: &LogitMap,
    g: &Mask,
    config: &LossConfig,
) -> Result<(HybridTerms, Vec<f64>)> {
    let v = config.variant;
    let s = z.sigmoid();
    check_pair(&s, g)?;
    let mut grad_s = vec![0.0; s.len()];
    let mut add = |(value, gr): (f64, Vec<f64>)| {
        grad_s.iter_mut().zip(gr).for_each(|(a, b)| *a += b);
        value
    };
    let ssim = if v.ssim() {
        add(ssim_loss_with_grad(&s, g, &config.ssim)?)
    } else {
        0.0
    };
    let iou = if v.iou() {
        add(iou_loss_with_grad(&s, g)?)
    } else {
        0.0
    };
    let mut grad: Vec<f64> = grad_s
        .iter()
        .zip(s.data())
        .map(|(d, p)| d * p * (1.0 - p))
        .collect();
    let bce = if v.bce() {
        let (value, gr) = bce_with_logits(z, g)?;
        grad.iter_mut().zip(gr).for_each(|(a, b)| *a += b);
        value
    } else {
        0.0
    };
    Ok((combine(v, bce, ssim, iou), grad))
}

fn check_count(outputs: usize, config: &LossConfig) -> Result<()> {
    config.validate()?;
    if outputs != config.alpha.len() {
        return Err(Error::Config(format!(
            "{outputs} outputs but {} output weights",
            config.alpha.len()
        )));
    }
    Ok(())
}

/// `Σ_k α_k · hybrid_k` over every supervised output.
pub fn total_loss(outputs: &SideOutputSet, g: &Mask, config: &LossConfig) -> Result<LossBreakdown> {
    check_count(outputs.len(), config)?;
    let per_output = outputs
        .maps()
        .iter()
        .map(|s| hybrid_loss(s, g, config))
        .collect::<Result<Vec<_>>>()?;
    let total = per_output
        .iter()
        .zip(&config.alpha)
        .map(|(t, a)| a * t.hybrid)
        .sum();
    Ok(LossBreakdown { per_output, total })
}

/// Total loss and its gradient with respect to each output map.
pub fn total_loss_with_grad(
    outputs: &SideOutputSet,
    g: &Mask,
    config: &LossConfig,
) -> Result<(LossBreakdown, Vec<Vec<f64>>)> {
    check_count(outputs.len(), config)?;
    let mut per_output = Vec::with_capacity(outputs.len());
    let mut grads = Vec::with_capacity(outputs.len());
    for (s, a) in outputs.maps().iter().zip(&config.alpha) {
        let (terms, grad) = hybrid_loss_with_grad(s, g, config)?;
        per_output.push(terms);
        grads.push(grad.into_iter().map(|d| a * d).collect());
    }
    let total = per_output
        .iter()
        .zip(&config.alpha)
        .map(|(t, a)| a * t.hybrid)
        .sum();
    Ok((LossBreakdown { per_output, total }, grads))
}

/// Total loss over output logits; gradients are with respect to the logits.
pub fn total_loss_from_logits(
    logits: &[LogitMap],
    g: &Mask,
    config: &LossConfig,
) -> Result<(LossBreakdown, Vec<Vec<f64>>)> {
    check_count(logits.len(), config)?;
    let mut per_output = Vec::with_capacity(logits.len());
    let mut grads = Vec::with_capacity(logits.len());
    for (z, a) in logits.iter().zip(&config.alpha) {
        let (terms, grad) = hybrid_loss_from_logits(z, g, config)?;
        per_output.push(terms);
        grads.push(grad.into_iter().map(|d| a * d).collect());
    }
    let total = per_output
        .iter()
        .zip(&config.alpha)
        .map(|(t, a)| a * t.hybrid)
        .sum();
    Ok((LossBreakdown { per_output, total }, grads))
}
