use rayon::prelude::*;

use crate::agents::AgentError;
use crate::linops::Image;

use super::reflect;

/// Exact non-local means.
///
/// Each output pixel is the weighted mean of the pixels in its search window
/// (clipped to the image), with weight `exp(-d / h^2)` where `d` is the
/// summed squared difference between the two `(2 patch_radius + 1)^2`
/// patches. Patches reaching past the border read the half-sample symmetric
/// extension. Rows are processed in parallel; the result does not depend on
/// the thread count.
pub fn nlm_denoise(
    x: &Image,
    patch_radius: usize,
    search_radius: usize,
    bandwidth_h: f64,
) -> Result<Image, AgentError> {
    if patch_radius == 0 {
        return Err(AgentError::InvalidParameter { name: "patch_radius", value: 0.0 });
    }
    if search_radius == 0 {
        return Err(AgentError::InvalidParameter { name: "search_radius", value: 0.0 });
    }
    if !(bandwidth_h.is_finite() && bandwidth_h > 0.0) {
        return Err(AgentError::InvalidParameter { name: "bandwidth_h", value: bandwidth_h });
    }
    let (h, w) = x.shape();
    let patch = 2 * patch_radius + 1;
    if h < patch || w < patch {
        return Err(AgentError::ImageTooSmall {
            shape: (h, w),
            window: patch,
        });
    }

    // Padded copy so patch reads need no bounds logic in the hot loop.
    let p = patch_radius;
    let pw = w + 2 * p;
    let padded: Vec<f64> = (0..h + 2 * p)
        .flat_map(|r| {
            let src = reflect(r as isize - p as isize, h);
            (0..pw).map(move |c| x.get(src, reflect(c as isize - p as isize, w)))
        })
        .collect();

    let inv_h2 = 1.0 / (bandwidth_h * bandwidth_h);
    let s = search_radius;
    let patch_distance = |r0: usize, c0: usize, r1: usize, c1: usize| -> f64 {
        let mut d = 0.0;
        for dr in 0..patch {
            let a = &padded[(r0 + dr) * pw + c0..(r0 + dr) * pw + c0 + patch];
            let b = &padded[(r1 + dr) * pw + c1..(r1 + dr) * pw + c1 + patch];
            for (u, v) in a.iter().zip(b) {
                let diff = u - v;
                d += diff * diff;
            }
        }
        d
    };

    let mut out = vec![0.0; h * w];
    out.par_chunks_mut(w).enumerate().for_each(|(r, out_row)| {
        for (c, o) in out_row.iter_mut().enumerate() {
            let mut num = 0.0;
            let mut den = 0.0;
            for qr in r.saturating_sub(s)..=(r + s).min(h - 1) {
                for qc in c.saturating_sub(s)..=(c + s).min(w - 1) {
                    let wgt = (-patch_distance(r, c, qr, qc) * inv_h2).exp();
                    num += wgt * x.get(qr, qc);
                    den += wgt;
                }
            }
            *o = num / den;
        }
    });
    Ok(Image::from_raw((h, w), out))
}
