//! Training losses and evaluation metrics.
//!
//! Losses build on a [`Tape`] so they differentiate with the rest of the
//! graph. Metrics work on plain cubes and report on a 0–255 scale: both
//! cubes are multiplied by `255 / max(truth)` first.

use serde::{Deserialize, Serialize};

use crate::autodiff::{Tape, Tensor, Var};
use crate::error::{Error, Result};
use crate::spectral::{SpectralCube, SpectralCurve};

/// Peak value metrics are reported against.
pub const METRIC_PEAK: f64 = 255.0;

/// Coefficients of the multi-task loss.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LossWeights {
    /// Weight decay on every parameter except the filter.
    pub alpha1: f64,
    /// Filter smoothness.
    pub alpha2: f64,
    /// Illumination supervision.
    pub alpha3: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        LossWeights {
            alpha1: 1e-4,
            alpha2: 1e-4,
            alpha3: 0.02,
        }
    }
}

impl LossWeights {
    pub fn new(alpha1: f64, alpha2: f64, alpha3: f64) -> Result<Self> {
        let w = LossWeights { alpha1, alpha2, alpha3 };
        w.validate()?;
        Ok(w)
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("alpha1", self.alpha1), ("alpha2", self.alpha2), ("alpha3", self.alpha3)] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(Error::domain(format!("{name} must be a finite value >= 0, got {v}")));
            }
        }
        Ok(())
    }
}

/// Mean squared reconstruction error plus `alpha1 * Σ θ²` over `decayed`.
pub fn loss_mse(tape: &mut Tape, pred: Var, truth: Var, decayed: &[Var], w: &LossWeights) -> Result<Var> {
    if tape.shape(pred) != tape.shape(truth) {
        return Err(Error::shape("loss_mse", &[tape.shape(pred), tape.shape(truth)]));
    }
    let diff = tape.sub(pred, truth)?;
    let sq = tape.square(diff)?;
    let mut loss = tape.mean(sq)?;
    if w.alpha1 > 0.0 && !decayed.is_empty() {
        let mut total: Option<Var> = None;
        for &theta in decayed {
            let sq = tape.square(theta)?;
            let s = tape.sum(sq)?;
            total = Some(match total {
                Some(t) => tape.add(t, s)?,
                None => s,
            });
        }
        let decay = tape.scale(total.expect("non-empty"), w.alpha1)?;
        loss = tape.add(loss, decay)?;
    }
    Ok(loss)
}

/// `alpha2 * Σ (C_i − C_{i−1})²` over a filter of any shape with M ≥ 2 entries.
pub fn loss_smooth(tape: &mut Tape, filter: Var, w: &LossWeights) -> Result<Var> {
    let m = tape.value(filter).len();
    if m < 2 {
        return Err(Error::domain(format!("smoothness needs at least 2 bands, got {m}")));
    }
    let row = tape.reshape(filter, &[1, m])?;
    let mut lag = vec![0.0; m * (m - 1)];
    for j in 0..m - 1 {
        lag[j * (m - 1) + j] = -1.0;
        lag[(j + 1) * (m - 1) + j] = 1.0;
    }
    let lag = tape.constant(Tensor::new(vec![m, m - 1], lag)?);
    let d = tape.matmul(row, lag)?;
    let sq = tape.square(d)?;
    let s = tape.sum(sq)?;
    tape.scale(s, w.alpha2)
}

/// `alpha3 * mean((L̂ − L)²)`. `pred` holds one SPD per curve in `truth`
/// (any shape with `truth.len() * M` entries, image-major).
pub fn loss_illum(tape: &mut Tape, pred: Var, truth: &[SpectralCurve], w: &LossWeights) -> Result<Var> {
    let values: Vec<f64> = truth.iter().flat_map(|c| c.values().iter().copied()).collect();
    let shape = tape.shape(pred).to_vec();
    if values.len() != tape.value(pred).len() || truth.windows(2).any(|p| p[0].grid() != p[1].grid()) {
        return Err(Error::shape("loss_illum", &[&shape, &[values.len()]]));
    }
    let t = tape.constant(Tensor::new(shape, values)?);
    let diff = tape.sub(pred, t)?;
    let sq = tape.square(diff)?;
    let m = tape.mean(sq)?;
    tape.scale(m, w.alpha3)
}

fn check_pair(pred: &SpectralCube, truth: &SpectralCube) -> Result<f64> {
    pred.grid().ensure_same(truth.grid())?;
    if (pred.height(), pred.width()) != (truth.height(), truth.width()) {
        return Err(Error::shape(
            "metric",
            &[&[pred.height(), pred.width()], &[truth.height(), truth.width()]],
        ));
    }
    let max = truth.max_value();
    if max <= 0.0 {
        return Err(Error::Degenerate("ground truth is all zero".into()));
    }
    Ok(METRIC_PEAK / max)
}

/// Root mean squared error on the 0–255 scale.
pub fn metric_rmse(pred: &SpectralCube, truth: &SpectralCube) -> Result<f64> {
    let k = check_pair(pred, truth)?;
    let n = pred.values().len() as f64;
    let sse: f64 = pred
        .values()
        .iter()
        .zip(truth.values())
        .map(|(p, t)| (k * (p - t)).powi(2))
        .sum();
    Ok((sse / n).sqrt())
}

/// `20 log10(255 / rmse)`; `+∞` when the RMSE is zero.
pub fn psnr_from_rmse(rmse: f64) -> f64 {
    if rmse == 0.0 {
        f64::INFINITY
    } else {
        20.0 * (METRIC_PEAK / rmse).log10()
    }
}

pub fn metric_psnr(pred: &SpectralCube, truth: &SpectralCube) -> Result<f64> {
    metric_rmse(pred, truth).map(psnr_from_rmse)
}

/// Side of the uniform SSIM window.
pub const SSIM_WINDOW: usize = 8;
const SSIM_K1: f64 = 0.01;
const SSIM_K2: f64 = 0.03;

/// Mean over bands of single-band SSIM with uniform 8×8 windows at stride 1.
///
/// Images smaller than the window use one window covering the smaller side.
/// Window statistics use the unbiased `1/(N−1)` (co)variance.
pub fn metric_ssim(pred: &SpectralCube, truth: &SpectralCube) -> Result<f64> {
    let k = check_pair(pred, truth)?;
    let (h, w, m) = (truth.height(), truth.width(), truth.bands());
    let win = SSIM_WINDOW.min(h).min(w);
    let c1 = (SSIM_K1 * METRIC_PEAK).powi(2);
    let c2 = (SSIM_K2 * METRIC_PEAK).powi(2);
    let n = (win * win) as f64;
    let norm = if win * win > 1 { n / (n - 1.0) } else { 1.0 };
    let mut total = 0.0;
    let mut a = vec![0.0; h * w];
    let mut b = vec![0.0; h * w];
    for band in 0..m {
        for (p, (x, y)) in pred.spectra().zip(truth.spectra()).enumerate() {
            a[p] = k * x[band];
            b[p] = k * y[band];
        }
        let mut acc = 0.0;
        let mut count = 0usize;
        for y0 in 0..=h - win {
            for x0 in 0..=w - win {
                let (mut sa, mut sb, mut saa, mut sbb, mut sab) = (0.0, 0.0, 0.0, 0.0, 0.0);
                for y in y0..y0 + win {
                    for x in x0..x0 + win {
                        let (u, v) = (a[y * w + x], b[y * w + x]);
                        sa += u;
                        sb += v;
                        saa += u * u;
                        sbb += v * v;
                        sab += u * v;
                    }
                }
                let (ma, mb) = (sa / n, sb / n);
                let va = norm * (saa / n - ma * ma);
                let vb = norm * (sbb / n - mb * mb);
                let cov = norm * (sab / n - ma * mb);
                acc += ((2.0 * ma * mb + c1) * (2.0 * cov + c2))
                    / ((ma * ma + mb * mb + c1) * (va + vb + c2));
                count += 1;
            }
        }
        total += acc / count as f64;
    }
    Ok(total / m as f64)
}

/// Angle in radians between two spectra; invariant to positive scaling.
pub fn metric_angular_error(pred: &[f64], truth: &[f64]) -> Result<f64> {
    if pred.len() != truth.len() {
        return Err(Error::shape("metric_angular_error", &[&[pred.len()], &[truth.len()]]));
    }
    let dot: f64 = pred.iter().zip(truth).map(|(p, t)| p * t).sum();
    let np = pred.iter().map(|v| v * v).sum::<f64>().sqrt();
    let nt = truth.iter().map(|v| v * v).sum::<f64>().sqrt();
    if np == 0.0 || nt == 0.0 {
        return Err(Error::Degenerate("angular error of a zero vector".into()));
    }
    Ok((dot / (np * nt)).clamp(-1.0, 1.0).acos())
}

/// Mean squared difference of two spectra after normalizing each to mean 1.
pub fn normalized_spd_mse(pred: &[f64], truth: &[f64]) -> Result<f64> {
    if pred.len() != truth.len() || pred.is_empty() {
        return Err(Error::shape("normalized_spd_mse", &[&[pred.len()], &[truth.len()]]));
    }
    let mp = pred.iter().sum::<f64>() / pred.len() as f64;
    let mt = truth.iter().sum::<f64>() / truth.len() as f64;
    if mp == 0.0 || mt == 0.0 {
        return Err(Error::Degenerate("spectrum with zero mean".into()));
    }
    Ok(pred
        .iter()
        .zip(truth)
        .map(|(p, t)| (p / mp - t / mt).powi(2))
        .sum::<f64>()
        / pred.len() as f64)
}

/// Per-image quality numbers.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ImageMetrics {
    pub rmse: f64,
    pub psnr: f64,
    pub ssim: f64,
}

pub fn image_metrics(pred: &SpectralCube, truth: &SpectralCube) -> Result<ImageMetrics> {
    let rmse = metric_rmse(pred, truth)?;
    Ok(ImageMetrics {
        rmse,
        psnr: psnr_from_rmse(rmse),
        ssim: metric_ssim(pred, truth)?,
    })
}
