use mdf::agents::NoiseParams;
use mdf::linops::{block_average, block_replicate, Image};

/// Projected gradient on `|y - A v / L^2|^2 / (2 sw^2) + |v - x|^2 / (2 sl^2)`
/// over `v >= 0`, run until the iterates stop moving.
pub fn projected_gradient(x: &Image, y: &Image, factor: usize, p: &NoiseParams) -> Image {
    let l2 = (factor * factor) as f64;
    let (sw2, sl2) = (p.sigma_w().powi(2), p.sigma_lambda().powi(2));
    let step = 1.0 / (1.0 / sl2 + 1.0 / (sw2 * l2));
    let mut v = x.clip_nonnegative();
    for _ in 0..100_000 {
        let r = y.sub(&block_average(&v, factor).unwrap()).unwrap();
        let back = block_replicate(&r, factor).unwrap();
        let next = Image::from_fn(v.shape(), |i, j| {
            let grad = -back.get(i, j) / (sw2 * l2) + (v.get(i, j) - x.get(i, j)) / sl2;
            (v.get(i, j) - step * grad).max(0.0)
        });
        let change = next.max_abs_diff(&v).unwrap();
        v = next;
        if change < 1e-13 {
            break;
        }
    }
    v
}
