//! Saliency metrics and training losses.
//!
//! Threshold sweeps quantize predictions to `q = floor(255 * p)` and treat
//! `q >= t` as foreground for `t = 0..=255`. Ground truth is binarized at
//! 0.5. Structure and enhanced-alignment measures follow the usual
//! salient-object-detection toolkits, with two deliberate differences: the
//! E-measure normalizes by the pixel count `N` (not `N - 1`), and no epsilon
//! is added to denominators that cannot vanish, so perfect predictions score
//! exactly 1.

use serde::Serialize;

use crate::error::{dim_err, Error, Result};
use crate::nn::{pool2d, PoolMode};
use crate::tensor::SaliencyMap;

pub const THRESHOLDS: usize = 256;
pub const BETA_SQ: f64 = 0.3;
pub const S_ALPHA: f64 = 0.5;
pub const LOG_EPS: f64 = 1e-7;
pub const WEIGHT_WINDOW: usize = 31;
pub const WEIGHT_GAIN: f64 = 5.0;

fn check_pair(pred: &SaliencyMap, gt: &SaliencyMap) -> Result<()> {
    if !pred.same_size(gt) {
        return Err(dim_err!(
            "prediction {}x{} vs ground truth {}x{}",
            pred.height(),
            pred.width(),
            gt.height(),
            gt.width()
        ));
    }
    Ok(())
}

fn gt_mask(gt: &SaliencyMap) -> Vec<bool> {
    gt.values().iter().map(|&v| v >= 0.5).collect()
}

/// `floor(255 * p)`, saturating at 255.
pub fn quantize(p: f64) -> usize {
    ((p * 255.0).floor() as usize).min(255)
}

pub fn mae(pred: &SaliencyMap, gt: &SaliencyMap) -> Result<f64> {
    check_pair(pred, gt)?;
    Ok(pred
        .values()
        .iter()
        .zip(gt.values())
        .map(|(p, g)| (p - g).abs())
        .sum::<f64>()
        / pred.len() as f64)
}

/// Per-threshold counts of predicted-foreground pixels, split by ground truth.
struct Sweep {
    /// predicted fg and gt fg, indexed by threshold
    fg_fg: [usize; THRESHOLDS],
    /// predicted fg and gt bg
    fg_bg: [usize; THRESHOLDS],
    gt_fg: usize,
    n: usize,
}

fn sweep(pred: &SaliencyMap, gt: &SaliencyMap) -> Sweep {
    let mask = gt_mask(gt);
    let mut hist_fg = [0usize; THRESHOLDS];
    let mut hist_bg = [0usize; THRESHOLDS];
    for (&p, &g) in pred.values().iter().zip(&mask) {
        let q = quantize(p);
        if g {
            hist_fg[q] += 1;
        } else {
            hist_bg[q] += 1;
        }
    }
    let mut fg_fg = [0usize; THRESHOLDS];
    let mut fg_bg = [0usize; THRESHOLDS];
    let (mut a, mut b) = (0, 0);
    for t in (0..THRESHOLDS).rev() {
        a += hist_fg[t];
        b += hist_bg[t];
        fg_fg[t] = a;
        fg_bg[t] = b;
    }
    Sweep {
        fg_fg,
        fg_bg,
        gt_fg: mask.iter().filter(|m| **m).count(),
        n: mask.len(),
    }
}

/// `F_beta` at every threshold; thresholds with an empty prediction score 0.
pub fn f_measure_curve(pred: &SaliencyMap, gt: &SaliencyMap) -> Result<Vec<f64>> {
    check_pair(pred, gt)?;
    let s = sweep(pred, gt);
    if s.gt_fg == 0 {
        return Err(Error::Undefined("recall is undefined for an empty ground truth".into()));
    }
    Ok((0..THRESHOLDS)
        .map(|t| {
            let tp = s.fg_fg[t] as f64;
            let predicted = (s.fg_fg[t] + s.fg_bg[t]) as f64;
            if predicted == 0.0 || tp == 0.0 {
                return 0.0;
            }
            let p = tp / predicted;
            let r = tp / s.gt_fg as f64;
            (1.0 + BETA_SQ) * p * r / (BETA_SQ * p + r)
        })
        .collect())
}

pub fn f_measure_max(pred: &SaliencyMap, gt: &SaliencyMap) -> Result<f64> {
    Ok(f_measure_curve(pred, gt)?.into_iter().fold(0.0, f64::max))
}

fn enhanced(a: f64, b: f64) -> f64 {
    let den = a * a + b * b;
    let align = if den == 0.0 { 0.0 } else { 2.0 * a * b / den };
    (align + 1.0) * (align + 1.0) / 4.0
}

/// Enhanced-alignment measure at every threshold.
pub fn e_measure_curve(pred: &SaliencyMap, gt: &SaliencyMap) -> Result<Vec<f64>> {
    check_pair(pred, gt)?;
    let s = sweep(pred, gt);
    let n = s.n as f64;
    Ok((0..THRESHOLDS)
        .map(|t| {
            let pred_fg = s.fg_fg[t] + s.fg_bg[t];
            let total = if s.gt_fg == 0 {
                (s.n - pred_fg) as f64
            } else if s.gt_fg == s.n {
                pred_fg as f64
            } else {
                let fg_fg = s.fg_fg[t] as f64;
                let fg_bg = s.fg_bg[t] as f64;
                let bg_fg = (s.gt_fg - s.fg_fg[t]) as f64;
                let bg_bg = n - fg_fg - fg_bg - bg_fg;
                let mp = pred_fg as f64 / n;
                let mg = s.gt_fg as f64 / n;
                fg_fg * enhanced(1.0 - mp, 1.0 - mg)
                    + fg_bg * enhanced(1.0 - mp, -mg)
                    + bg_fg * enhanced(-mp, 1.0 - mg)
                    + bg_bg * enhanced(-mp, -mg)
            };
            total / n
        })
        .collect())
}

pub fn e_measure_max(pred: &SaliencyMap, gt: &SaliencyMap) -> Result<f64> {
    Ok(e_measure_curve(pred, gt)?.into_iter().fold(0.0, f64::max))
}

fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

fn object_similarity(values: &[f64]) -> f64 {
    if values.is_empty() {
        return 0.0;
    }
    let (x, sigma) = mean_std(values);
    2.0 * x / (x * x + 1.0 + sigma)
}

/// Region SSIM; sample statistics with `max(N - 1, 1)` in the denominators.
fn region_ssim(pred: &[f64], gt: &[f64]) -> f64 {
    let n = pred.len() as f64;
    let x = pred.iter().sum::<f64>() / n;
    let y = gt.iter().sum::<f64>() / n;
    let d = (n - 1.0).max(1.0);
    let sx = pred.iter().map(|p| (p - x) * (p - x)).sum::<f64>() / d;
    let sy = gt.iter().map(|g| (g - y) * (g - y)).sum::<f64>() / d;
    let sxy = pred.iter().zip(gt).map(|(p, g)| (p - x) * (g - y)).sum::<f64>() / d;
    let alpha = 4.0 * x * y * sxy;
    let beta = (x * x + y * y) * (sx + sy);
    if alpha != 0.0 {
        alpha / beta
    } else if beta == 0.0 {
        1.0
    } else {
        0.0
    }
}

/// Structure measure `alpha * S_object + (1 - alpha) * S_region`, clamped at 0.
pub fn s_measure(pred: &SaliencyMap, gt: &SaliencyMap) -> Result<f64> {
    check_pair(pred, gt)?;
    let mask = gt_mask(gt);
    let (h, w) = (gt.height(), gt.width());
    let n = mask.len() as f64;
    let fg_count = mask.iter().filter(|m| **m).count();
    let mean_pred = pred.values().iter().sum::<f64>() / n;
    if fg_count == 0 {
        return Ok(1.0 - mean_pred);
    }
    if fg_count == mask.len() {
        return Ok(mean_pred);
    }
    let u = fg_count as f64 / n;
    let fg: Vec<f64> = pred
        .values()
        .iter()
        .zip(&mask)
        .filter(|(_, m)| **m)
        .map(|(p, _)| *p)
        .collect();
    let bg: Vec<f64> = pred
        .values()
        .iter()
        .zip(&mask)
        .filter(|(_, m)| !**m)
        .map(|(p, _)| 1.0 - p)
        .collect();
    let object = u * object_similarity(&fg) + (1.0 - u) * object_similarity(&bg);

    // split about the rounded foreground centroid, shifted by one
    let (mut sum_r, mut sum_c) = (0.0, 0.0);
    for (i, _) in mask.iter().enumerate().filter(|(_, m)| **m) {
        sum_r += (i / w) as f64;
        sum_c += (i % w) as f64;
    }
    let cy = (sum_r / fg_count as f64).round_ties_even() as usize + 1;
    let cx = (sum_c / fg_count as f64).round_ties_even() as usize + 1;
    let area = n;
    let quadrants = [(0..cy, 0..cx), (0..cy, cx..w), (cy..h, 0..cx), (cy..h, cx..w)];
    let mut region = 0.0;
    for (rows, cols) in quadrants {
        let count = rows.len() * cols.len();
        if count == 0 {
            continue;
        }
        let mut p = Vec::with_capacity(count);
        let mut g = Vec::with_capacity(count);
        for r in rows {
            for c in cols.clone() {
                p.push(pred.get(r, c));
                g.push(if mask[r * w + c] { 1.0 } else { 0.0 });
            }
        }
        region += count as f64 / area * region_ssim(&p, &g);
    }
    Ok((S_ALPHA * object + (1.0 - S_ALPHA) * region).max(0.0))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MetricReport {
    pub s_measure: f64,
    pub f_measure_max: f64,
    pub e_measure_max: f64,
    pub mae: f64,
    /// `F_beta` per threshold `0..=255`
    pub f_curve: Vec<f64>,
    /// E-measure per threshold `0..=255`
    pub e_curve: Vec<f64>,
}

/// All four measures. An empty ground truth has no F-measure; its F curve is
/// reported as all zeros.
pub fn evaluate(pred: &SaliencyMap, gt: &SaliencyMap) -> Result<MetricReport> {
    let f_curve = match f_measure_curve(pred, gt) {
        Ok(c) => c,
        Err(Error::Undefined(_)) => vec![0.0; THRESHOLDS],
        Err(e) => return Err(e),
    };
    let e_curve = e_measure_curve(pred, gt)?;
    Ok(MetricReport {
        s_measure: s_measure(pred, gt)?,
        f_measure_max: f_curve.iter().copied().fold(0.0, f64::max),
        e_measure_max: e_curve.iter().copied().fold(0.0, f64::max),
        mae: mae(pred, gt)?,
        f_curve,
        e_curve,
    })
}

fn clamp_prob(p: f64) -> f64 {
    p.clamp(LOG_EPS, 1.0 - LOG_EPS)
}

fn bce(p: f64, g: f64) -> f64 {
    let p = clamp_prob(p);
    -(g * p.ln() + (1.0 - g) * (1.0 - p).ln())
}

fn weighted_bce_iou(s: &SaliencyMap, gt: &SaliencyMap, weights: &[f64]) -> f64 {
    let (mut wb, mut wsum, mut inter, mut ps, mut gs) = (0.0, 0.0, 0.0, 0.0, 0.0);
    for ((&p, &g), &w) in s.values().iter().zip(gt.values()).zip(weights) {
        wb += w * bce(p, g);
        wsum += w;
        let p = clamp_prob(p);
        inter += w * p * g;
        ps += w * p;
        gs += w * g;
    }
    wb / wsum + 1.0 - (inter + 1.0) / (ps + gs - inter + 1.0)
}

/// Mean binary cross-entropy plus `1 - IoU` with the soft, +1-smoothed IoU.
pub fn bce_iou_loss(s: &SaliencyMap, gt: &SaliencyMap) -> Result<f64> {
    check_pair(s, gt)?;
    Ok(weighted_bce_iou(s, gt, &vec![1.0; s.len()]))
}

/// Loss on the coarse and the final map.
pub fn total_loss(s_c: &SaliencyMap, s_f: &SaliencyMap, gt: &SaliencyMap) -> Result<f64> {
    Ok(bce_iou_loss(s_c, gt)? + bce_iou_loss(s_f, gt)?)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FocalParams {
    pub gamma: f64,
    pub alpha: f64,
}

impl Default for FocalParams {
    fn default() -> Self {
        Self {
            gamma: 2.0,
            alpha: 0.25,
        }
    }
}

/// `1 + 5 |avgpool_31(GT) - GT|`, averaging over in-image cells only.
pub fn structure_weights(gt: &SaliencyMap) -> Result<Vec<f64>> {
    let pooled = pool2d(&gt.to_tensor::<f64>(), WEIGHT_WINDOW, PoolMode::Avg)?;
    Ok(pooled
        .data()
        .iter()
        .zip(gt.values())
        .map(|(a, g)| 1.0 + WEIGHT_GAIN * (a - g).abs())
        .collect())
}

/// Mean of `-alpha_t (1 - p_t)^gamma ln p_t`.
pub fn focal_loss(s: &SaliencyMap, gt: &SaliencyMap, params: FocalParams) -> Result<f64> {
    check_pair(s, gt)?;
    let total: f64 = s
        .values()
        .iter()
        .zip(gt.values())
        .map(|(&p, &g)| {
            let p = clamp_prob(p);
            let pt = g * p + (1.0 - g) * (1.0 - p);
            let at = g * params.alpha + (1.0 - g) * (1.0 - params.alpha);
            -at * (1.0 - pt).powf(params.gamma) * pt.ln()
        })
        .sum();
    Ok(total / s.len() as f64)
}

/// Structure-weighted BCE and IoU plus focal loss.
pub fn weighted_focal_loss(s: &SaliencyMap, gt: &SaliencyMap) -> Result<f64> {
    weighted_focal_loss_with(s, gt, FocalParams::default())
}

pub fn weighted_focal_loss_with(s: &SaliencyMap, gt: &SaliencyMap, params: FocalParams) -> Result<f64> {
    check_pair(s, gt)?;
    let w = structure_weights(gt)?;
    Ok(weighted_bce_iou(s, gt, &w) + focal_loss(s, gt, params)?)
}
