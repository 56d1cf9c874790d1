use rustfft::num_complex::Complex64;
use rustfft::{FftDirection, FftPlanner};

use super::Image;

/// Unnormalized 2-D DFT of a row-major `h x w` buffer, in place.
pub fn fft2_in_place(buf: &mut [Complex64], h: usize, w: usize, direction: FftDirection) {
    assert_eq!(buf.len(), h * w, "buffer does not match the shape");
    let mut planner = FftPlanner::new();
    planner.plan_fft(w, direction).process(buf);
    let mut t = transpose(buf, h, w);
    planner.plan_fft(h, direction).process(&mut t);
    buf.copy_from_slice(&transpose(&t, w, h));
}

fn transpose(buf: &[Complex64], h: usize, w: usize) -> Vec<Complex64> {
    let mut out = vec![Complex64::new(0.0, 0.0); h * w];
    for i in 0..h {
        for j in 0..w {
            out[j * h + i] = buf[i * w + j];
        }
    }
    out
}

/// Forward 2-D DFT of an image.
pub fn fft2(img: &Image) -> Vec<Complex64> {
    let mut buf: Vec<Complex64> = img.data().iter().map(|&v| Complex64::new(v, 0.0)).collect();
    fft2_in_place(&mut buf, img.height(), img.width(), FftDirection::Forward);
    buf
}

/// Signed frequency index of DFT bin `k` out of `n`.
pub fn signed_bin(k: usize, n: usize) -> f64 {
    if k <= n / 2 {
        k as f64
    } else {
        k as f64 - n as f64
    }
}
