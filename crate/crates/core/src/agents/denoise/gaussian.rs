use crate::linops::Image;

use super::reflect;
use crate::agents::AgentError;

/// Normalized 1-D Gaussian taps with radius `max(1, ceil(3 sigma))`.
pub fn gaussian_kernel(sigma: f64) -> Vec<f64> {
    let radius = ((3.0 * sigma).ceil() as usize).max(1);
    let mut taps: Vec<f64> = (0..=2 * radius)
        .map(|i| {
            let d = i as f64 - radius as f64;
            (-d * d / (2.0 * sigma * sigma)).exp()
        })
        .collect();
    let total: f64 = taps.iter().sum();
    taps.iter_mut().for_each(|t| *t /= total);
    taps
}

fn convolve_rows(data: &[f64], height: usize, width: usize, taps: &[f64]) -> Vec<f64> {
    let radius = (taps.len() / 2) as isize;
    let mut out = vec![0.0; data.len()];
    for r in 0..height {
        let row = &data[r * width..(r + 1) * width];
        let dst = &mut out[r * width..(r + 1) * width];
        for (c, o) in dst.iter_mut().enumerate() {
            *o = taps
                .iter()
                .enumerate()
                .map(|(k, t)| t * row[reflect(c as isize + k as isize - radius, width)])
                .sum();
        }
    }
    out
}

fn transpose(data: &[f64], height: usize, width: usize) -> Vec<f64> {
    let mut out = vec![0.0; data.len()];
    for r in 0..height {
        for c in 0..width {
            out[c * height + r] = data[r * width + c];
        }
    }
    out
}

/// Separable Gaussian blur.
///
/// Borders use half-sample symmetric extension (`c b a | a b c`), which
/// replicates the edge pixel for the first out-of-range tap and keeps the
/// blur matrix symmetric, so the image mean is preserved.
pub fn gaussian_denoise(x: &Image, sigma_blur: f64) -> Result<Image, AgentError> {
    if !(sigma_blur.is_finite() && sigma_blur > 0.0) {
        return Err(AgentError::InvalidParameter {
            name: "sigma_blur",
            value: sigma_blur,
        });
    }
    let taps = gaussian_kernel(sigma_blur);
    let (h, w) = x.shape();
    let horiz = convolve_rows(x.data(), h, w, &taps);
    let vert = convolve_rows(&transpose(&horiz, h, w), w, h, &taps);
    Ok(Image::from_raw((h, w), transpose(&vert, w, h)))
}
