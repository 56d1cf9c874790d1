//! Image-quality and acquisition metrics: PSNR, Fourier ring correlation
//! and the acquisition speed-up ratio.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::linops::{fft2, signed_bin, Image, Shape};

#[derive(Debug, Error, PartialEq)]
pub enum MetricsError {
    #[error("images have shapes {0:?} and {1:?}")]
    ShapeMismatch(Shape, Shape),
    #[error("FRC needs square images, got {0:?}")]
    NotSquare(Shape),
    #[error("FRC needs at least 2x2 images, got {0:?}")]
    TooSmall(Shape),
    #[error("peak must be positive and finite, got {0}")]
    InvalidPeak(f64),
    #[error("invalid pixel dimensions: {0}")]
    InvalidDims(String),
}

/// `10 log10(peak^2 / MSE)`; `f64::INFINITY` when the images are equal.
pub fn psnr(reference: &Image, test: &Image, peak: f64) -> Result<f64, MetricsError> {
    if reference.shape() != test.shape() {
        return Err(MetricsError::ShapeMismatch(reference.shape(), test.shape()));
    }
    if !(peak.is_finite() && peak > 0.0) {
        return Err(MetricsError::InvalidPeak(peak));
    }
    let sse: f64 = reference.data().iter().zip(test.data()).map(|(a, b)| (a - b) * (a - b)).sum();
    if sse == 0.0 {
        return Ok(f64::INFINITY);
    }
    let mse = sse / reference.len() as f64;
    Ok(10.0 * (peak * peak / mse).log10())
}

/// Threshold curve against which the FRC crossing is located.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum ThresholdKind {
    #[default]
    HalfBit,
    OneBit,
    Fixed(f64),
}

impl ThresholdKind {
    /// Threshold for a ring holding `pixels` Fourier coefficients.
    pub fn value(self, pixels: usize) -> f64 {
        let s = (pixels.max(1) as f64).sqrt();
        match self {
            Self::HalfBit => (0.2071 + 1.9102 / s) / (1.2071 + 0.9102 / s),
            Self::OneBit => (0.5 + 2.4142 / s) / (1.5 + 1.4142 / s),
            Self::Fixed(v) => v,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FrcCurve {
    /// Ring radius in cycles per pixel, `k / n` for `k = 1..=n/2`.
    pub ring_frequencies: Vec<f64>,
    pub correlations: Vec<f64>,
    pub threshold: Vec<f64>,
    /// Fourier coefficients per ring.
    pub ring_sizes: Vec<usize>,
    /// Where the correlation first drops below the threshold, in cycles per
    /// pixel, linearly interpolated between rings; `None` if it never does.
    pub crossing_frequency: Option<f64>,
}

impl FrcCurve {
    /// Crossing as a fraction of the Nyquist frequency (0.5 cycles/pixel).
    pub fn crossing_nyquist_fraction(&self) -> Option<f64> {
        self.crossing_frequency.map(|f| 2.0 * f)
    }

    /// Ring spacing in cycles per pixel.
    pub fn ring_width(&self) -> f64 {
        self.ring_frequencies.first().copied().unwrap_or(0.0)
    }

    /// CSV with header `frequency,correlation,threshold`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("frequency,correlation,threshold\n");
        for ((f, c), t) in self.ring_frequencies.iter().zip(&self.correlations).zip(&self.threshold) {
            let _ = writeln!(out, "{f},{c},{t}");
        }
        out
    }
}

/// Fourier ring correlation over integer-radius rings, DC excluded.
///
/// A ring where both images have zero energy counts as fully correlated; a
/// ring where only one does has correlation 0.
pub fn frc(img1: &Image, img2: &Image, threshold_kind: ThresholdKind) -> Result<FrcCurve, MetricsError> {
    if img1.shape() != img2.shape() {
        return Err(MetricsError::ShapeMismatch(img1.shape(), img2.shape()));
    }
    let (h, w) = img1.shape();
    if h != w {
        return Err(MetricsError::NotSquare(img1.shape()));
    }
    if h < 2 {
        return Err(MetricsError::TooSmall(img1.shape()));
    }
    let n = h;
    let f1 = fft2(img1);
    let f2 = fft2(img2);
    let rings = n / 2;
    let mut cross = vec![0.0; rings + 1];
    let mut e1 = vec![0.0; rings + 1];
    let mut e2 = vec![0.0; rings + 1];
    let mut count = vec![0usize; rings + 1];
    for i in 0..n {
        let fi = signed_bin(i, n);
        for j in 0..n {
            let fj = signed_bin(j, n);
            let k = (fi * fi + fj * fj).sqrt().round() as usize;
            if k == 0 || k > rings {
                continue;
            }
            let (a, b) = (f1[i * n + j], f2[i * n + j]);
            cross[k] += (a * b.conj()).re;
            e1[k] += a.norm_sqr();
            e2[k] += b.norm_sqr();
            count[k] += 1;
        }
    }
    let mut ring_frequencies = Vec::with_capacity(rings);
    let mut correlations = Vec::with_capacity(rings);
    let mut threshold = Vec::with_capacity(rings);
    let mut ring_sizes = Vec::with_capacity(rings);
    for k in 1..=rings {
        ring_frequencies.push(k as f64 / n as f64);
        let corr = match (e1[k] > 0.0, e2[k] > 0.0) {
            (true, true) => cross[k] / (e1[k] * e2[k]).sqrt(),
            (false, false) => 1.0,
            _ => 0.0,
        };
        correlations.push(corr);
        threshold.push(threshold_kind.value(count[k]));
        ring_sizes.push(count[k]);
    }
    let crossing_frequency = find_crossing(&ring_frequencies, &correlations, &threshold);
    Ok(FrcCurve {
        ring_frequencies,
        correlations,
        threshold,
        ring_sizes,
        crossing_frequency,
    })
}

fn find_crossing(freqs: &[f64], corr: &[f64], thr: &[f64]) -> Option<f64> {
    let k = (0..freqs.len()).find(|&k| corr[k] < thr[k])?;
    if k == 0 {
        return Some(freqs[0]);
    }
    let d0 = corr[k - 1] - thr[k - 1];
    let d1 = corr[k] - thr[k];
    let t = d0 / (d0 - d1);
    Some(freqs[k - 1] + t * (freqs[k] - freqs[k - 1]))
}

/// Pixel counts of one acquisition; dimensions are `(height, width)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SpeedupInput {
    pub lr_pixels: (u64, u64),
    /// May be `(0, 0)` when no training data is acquired.
    pub hr_train_pixels: (u64, u64),
    pub hr_recon_pixels: (u64, u64),
}

/// Reconstructed pixels over acquired (low-resolution plus training) pixels.
pub fn speedup(input: &SpeedupInput) -> Result<f64, MetricsError> {
    let area = |(h, w): (u64, u64)| h as u128 * w as u128;
    if area(input.lr_pixels) == 0 {
        return Err(MetricsError::InvalidDims(format!("LR dimensions {:?}", input.lr_pixels)));
    }
    if area(input.hr_recon_pixels) == 0 {
        return Err(MetricsError::InvalidDims(format!("reconstruction dimensions {:?}", input.hr_recon_pixels)));
    }
    let acquired = area(input.lr_pixels) + area(input.hr_train_pixels);
    Ok(area(input.hr_recon_pixels) as f64 / acquired as f64)
}
