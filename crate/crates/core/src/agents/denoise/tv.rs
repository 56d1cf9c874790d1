use crate::agents::AgentError;
use crate::linops::Image;

const DUAL_STEP: f64 = 0.25;

/// Forward differences with Neumann boundary (zero past the last row/col).
fn gradient(u: &[f64], h: usize, w: usize, gx: &mut [f64], gy: &mut [f64]) {
    for r in 0..h {
        for c in 0..w {
            let i = r * w + c;
            gx[i] = if c + 1 < w { u[i + 1] - u[i] } else { 0.0 };
            gy[i] = if r + 1 < h { u[i + w] - u[i] } else { 0.0 };
        }
    }
}

/// Negative adjoint of [`gradient`].
fn divergence(px: &[f64], py: &[f64], h: usize, w: usize, out: &mut [f64]) {
    for r in 0..h {
        for c in 0..w {
            let i = r * w + c;
            let dx = match c {
                0 => px[i],
                _ if c + 1 == w => -px[i - 1],
                _ => px[i] - px[i - 1],
            };
            let dy = match r {
                0 => py[i],
                _ if r + 1 == h => -py[i - w],
                _ => py[i] - py[i - w],
            };
            out[i] = if w == 1 { 0.0 } else { dx } + if h == 1 { 0.0 } else { dy };
        }
    }
}

/// Isotropic total variation with forward differences.
pub fn total_variation(x: &Image) -> f64 {
    let (h, w) = x.shape();
    let mut gx = vec![0.0; h * w];
    let mut gy = vec![0.0; h * w];
    gradient(x.data(), h, w, &mut gx, &mut gy);
    gx.iter().zip(&gy).map(|(a, b)| a.hypot(*b)).sum()
}

/// `||out - x||^2 / 2 + weight * TV(out)`, the objective [`tv_denoise`] decreases.
pub fn tv_energy(out: &Image, x: &Image, weight: f64) -> f64 {
    let fidelity: f64 = out.data().iter().zip(x.data()).map(|(a, b)| (a - b) * (a - b)).sum();
    0.5 * fidelity + weight * total_variation(out)
}

/// Approximate proximal map of `weight * TV` by projected gradient on the dual.
///
/// Runs exactly `inner_iters` dual steps from a zero dual field, so the map is
/// deterministic for fixed parameters.
pub fn tv_denoise(x: &Image, weight: f64, inner_iters: usize) -> Result<Image, AgentError> {
    if !(weight.is_finite() && weight > 0.0) {
        return Err(AgentError::InvalidParameter { name: "weight", value: weight });
    }
    let (h, w) = x.shape();
    let n = h * w;
    let f = x.data();
    let mut px = vec![0.0; n];
    let mut py = vec![0.0; n];
    let mut div = vec![0.0; n];
    let mut gx = vec![0.0; n];
    let mut gy = vec![0.0; n];
    let mut arg = vec![0.0; n];
    let inv_w = 1.0 / weight;

    for _ in 0..inner_iters {
        divergence(&px, &py, h, w, &mut div);
        for i in 0..n {
            arg[i] = div[i] - f[i] * inv_w;
        }
        gradient(&arg, h, w, &mut gx, &mut gy);
        for i in 0..n {
            let qx = px[i] + DUAL_STEP * gx[i];
            let qy = py[i] + DUAL_STEP * gy[i];
            let scale = qx.hypot(qy).max(1.0);
            px[i] = qx / scale;
            py[i] = qy / scale;
        }
    }
    divergence(&px, &py, h, w, &mut div);
    let out = f.iter().zip(&div).map(|(fi, di)| fi - weight * di).collect();
    Ok(Image::from_raw((h, w), out))
}
