use serde::{Deserialize, Serialize};

use super::{Image, LinopsError};

/// Out-of-range sample policy for the interpolation taps.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Boundary {
    /// Clamp tap indices to the nearest edge sample.
    #[default]
    Replicate,
}

/// Separable cubic-convolution upsampler.
///
/// Coarse pixel `j` is centred on the middle of its `factor x factor`
/// high-resolution block, matching the block-average geometry: fine pixel `i`
/// samples the coarse grid at `(i + 0.5) / factor - 0.5`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BicubicUpsampler {
    factor: usize,
    a: f64,
    boundary: Boundary,
}

/// Default cubic-convolution coefficient (Catmull-Rom).
pub const DEFAULT_CUBIC_A: f64 = -0.5;

impl BicubicUpsampler {
    pub fn new(factor: usize) -> Result<Self, LinopsError> {
        Self::with_kernel(factor, DEFAULT_CUBIC_A)
    }

    pub fn with_kernel(factor: usize, a: f64) -> Result<Self, LinopsError> {
        if factor == 0 {
            return Err(LinopsError::InvalidFactor(factor));
        }
        if !a.is_finite() {
            return Err(LinopsError::InvalidKernel(a));
        }
        Ok(Self {
            factor,
            a,
            boundary: Boundary::Replicate,
        })
    }

    #[inline]
    pub fn factor(&self) -> usize {
        self.factor
    }

    #[inline]
    pub fn kernel_a(&self) -> f64 {
        self.a
    }

    #[inline]
    pub fn boundary(&self) -> Boundary {
        self.boundary
    }

    /// Keys cubic convolution kernel.
    pub fn kernel(&self, s: f64) -> f64 {
        let a = self.a;
        let s = s.abs();
        if s <= 1.0 {
            ((a + 2.0) * s - (a + 3.0)) * s * s + 1.0
        } else if s < 2.0 {
            ((a * s - 5.0 * a) * s + 8.0 * a) * s - 4.0 * a
        } else {
            0.0
        }
    }

    /// Tap indices and weights along one axis, for `n_in` coarse samples.
    fn axis_taps(&self, n_in: usize) -> Vec<([usize; 4], [f64; 4])> {
        let l = self.factor as f64;
        let last = n_in as isize - 1;
        (0..n_in * self.factor)
            .map(|i| {
                let t = (i as f64 + 0.5) / l - 0.5;
                let base = t.floor();
                let frac = t - base;
                let base = base as isize;
                let mut idx = [0usize; 4];
                let mut wts = [0.0; 4];
                for k in 0..4 {
                    let tap = base - 1 + k as isize;
                    idx[k] = tap.clamp(0, last) as usize;
                    wts[k] = self.kernel(frac - (k as f64 - 1.0));
                }
                (idx, wts)
            })
            .collect()
    }

    /// Upsamples `z` by the configured factor in both directions.
    pub fn upsample(&self, z: &Image) -> Image {
        let (h, w) = z.shape();
        let l = self.factor;
        let col_taps = self.axis_taps(w);
        let row_taps = self.axis_taps(h);

        // Horizontal pass: h x (w*l)
        let wide = w * l;
        let mut tmp = vec![0.0; h * wide];
        for (r, out_row) in tmp.chunks_exact_mut(wide).enumerate() {
            let src = z.row(r);
            for (o, (idx, wts)) in out_row.iter_mut().zip(&col_taps) {
                *o = (0..4).map(|k| wts[k] * src[idx[k]]).sum();
            }
        }

        // Vertical pass: (h*l) x (w*l)
        let mut out = vec![0.0; h * l * wide];
        for (out_row, (idx, wts)) in out.chunks_exact_mut(wide).zip(&row_taps) {
            for k in 0..4 {
                let src = &tmp[idx[k] * wide..(idx[k] + 1) * wide];
                let wk = wts[k];
                for (o, &s) in out_row.iter_mut().zip(src) {
                    *o += wk * s;
                }
            }
        }
        Image::from_raw((h * l, wide), out)
    }
}

pub fn bicubic_upsample(z: &Image, factor: usize) -> Result<Image, LinopsError> {
    Ok(BicubicUpsampler::new(factor)?.upsample(z))
}
