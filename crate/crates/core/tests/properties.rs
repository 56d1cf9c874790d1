use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;

mod common;
use common::projected_gradient;

use mdf::agents::{
    data_fidelity_apply, gaussian_denoise, nlm_denoise, rap_apply, tv_denoise, tv_energy, Agent, FnAgent,
    NoiseParams,
};
use mdf::linops::{block_average, block_replicate, block_sum, materialize, BicubicUpsampler, Image};
use mdf::mace::{convergence_error, stack_f, stack_g, weighted_average, StackedState};

fn image(h: usize, w: usize, lo: f64, hi: f64) -> impl Strategy<Value = Image> {
    prop::collection::vec(lo..hi, h * w).prop_map(move |d| Image::new(h, w, d).unwrap())
}

/// LR shape, factor and an HR image of the matching size.
fn hr_case(max_lr: usize, max_factor: usize) -> impl Strategy<Value = (usize, Image)> {
    (1..=max_lr, 1..=max_lr, 1..=max_factor)
        .prop_flat_map(|(h, w, l)| (Just(l), image(h * l, w * l, -1.0, 1.0)))
}

fn params() -> impl Strategy<Value = NoiseParams> {
    (0.05..2.0f64, 0.05..2.0f64).prop_map(|(w, l)| NoiseParams::new(w, l).unwrap())
}

fn vec_of(img: &Image) -> DVector<f64> {
    DVector::from_column_slice(img.data())
}

/// Half-sample symmetric extension, written as a loop rather than modular arithmetic.
fn mirror(mut i: isize, n: usize) -> usize {
    let n = n as isize;
    loop {
        if i < 0 {
            i = -i - 1;
        } else if i >= n {
            i = 2 * n - 1 - i;
        } else {
            return i as usize;
        }
    }
}

fn naive_nlm(x: &Image, pr: usize, sr: usize, h: f64) -> Image {
    let (rows, cols) = x.shape();
    let at = |r: isize, c: isize| x.get(mirror(r, rows), mirror(c, cols));
    let p = pr as isize;
    Image::from_fn((rows, cols), |r, c| {
        let (mut num, mut den) = (0.0, 0.0);
        for qr in r.saturating_sub(sr)..=(r + sr).min(rows - 1) {
            for qc in c.saturating_sub(sr)..=(c + sr).min(cols - 1) {
                let mut d = 0.0;
                for dr in -p..=p {
                    for dc in -p..=p {
                        let diff = at(r as isize + dr, c as isize + dc) - at(qr as isize + dr, qc as isize + dc);
                        d += diff * diff;
                    }
                }
                let wgt = (-d / (h * h)).exp();
                num += wgt * x.get(qr, qc);
                den += wgt;
            }
        }
        num / den
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn replicate_then_sum_scales_by_factor_squared(
        (l, z) in (1usize..6).prop_flat_map(|l| (Just(l), (1usize..6, 1usize..6).prop_flat_map(|(h, w)| image(h, w, -5.0, 5.0))))
    ) {
        let back = block_sum(&block_replicate(&z, l).unwrap(), l).unwrap();
        let l2 = (l * l) as f64;
        for (a, b) in back.data().iter().zip(z.data()) {
            prop_assert!((a - l2 * b).abs() <= 1e-12 * l2 * b.abs().max(1.0));
        }
    }

    #[test]
    fn block_sum_and_replicate_are_adjoint((l, x) in hr_case(5, 4), seed in any::<u64>()) {
        let (h, w) = (x.height() / l, x.width() / l);
        let z = Image::from_fn((h, w), |i, j| ((seed.wrapping_add((i * 31 + j * 7) as u64) % 1000) as f64) / 500.0 - 1.0);
        let lhs = block_sum(&x, l).unwrap().dot(&z).unwrap();
        let rhs = x.dot(&block_replicate(&z, l).unwrap()).unwrap();
        prop_assert!((lhs - rhs).abs() < 1e-10);
    }

    #[test]
    fn dense_sum_is_transpose_of_dense_replicate(h in 1usize..4, w in 1usize..4, l in 1usize..4) {
        let a = materialize(|x| block_sum(x, l), (h * l, w * l)).unwrap();
        let at = materialize(|z| block_replicate(z, l), (h, w)).unwrap();
        prop_assert_eq!(a.transpose(), at);
    }

    #[test]
    fn bicubic_rows_sum_to_one(h in 1usize..5, w in 1usize..5, l in 1usize..5) {
        let up = BicubicUpsampler::new(l).unwrap();
        let b = materialize(|z| Ok(up.upsample(z)), (h, w)).unwrap();
        for row in b.row_iter() {
            prop_assert!((row.sum() - 1.0).abs() < 1e-10);
        }
    }

    #[test]
    fn data_update_jacobian_is_a_symmetric_contraction((l, x) in hr_case(3, 3), p in params()) {
        // Far from the clip the update is affine; recover its linear part column by column.
        let base = x.map(|v| v + 10.0);
        let y = block_average(&base, l).unwrap();
        let f0 = data_fidelity_apply(&base, &y, l, &p).unwrap();
        let n = base.len();
        let mut jac = DMatrix::zeros(n, n);
        for k in 0..n {
            let col = data_fidelity_apply(&base.add(&Image::basis(base.shape(), k)).unwrap(), &y, l, &p)
                .unwrap()
                .sub(&f0)
                .unwrap();
            jac.set_column(k, &vec_of(&col));
        }
        prop_assert!((&jac - jac.transpose()).amax() < 1e-12);
        let eig = jac.symmetric_eigenvalues();
        prop_assert!(eig.iter().all(|&e| e > 0.0 && e <= 1.0 + 1e-12), "{eig}");
    }

    #[test]
    fn standard_update_matches_its_formula((l, x) in hr_case(4, 3), p in params()) {
        let y = Image::from_fn((x.height() / l, x.width() / l), |i, j| 0.3 + 0.1 * ((i + 2 * j) % 3) as f64);
        let standard = data_fidelity_apply(&x, &y, l, &p).unwrap();
        let replicate_b = |z: &Image| block_replicate(z, l).unwrap();
        let r = y.sub(&block_average(&x, l).unwrap()).unwrap();
        let g = p.gain(l);
        let manual = x.add(&replicate_b(&r).scale(g)).unwrap().clip_nonnegative();
        prop_assert_eq!(standard, manual);
    }

    #[test]
    fn rap_matches_dense_oracle(x in image(8, 8, -0.5, 1.5), y in image(4, 4, 0.0, 1.0), p in params()) {
        let up = BicubicUpsampler::new(2).unwrap();
        let out = rap_apply(&x, &y, 2, &p, &up).unwrap();
        let b = materialize(|z| Ok(up.upsample(z)), (4, 4)).unwrap();
        let a = materialize(|v| block_sum(v, 2), (8, 8)).unwrap();
        let r = vec_of(&y) - &a * vec_of(&x) / 4.0;
        let expect = vec_of(&x) + p.gain(2) * &b * r;
        for (o, e) in out.data().iter().zip(expect.iter()) {
            prop_assert!((o - e.max(0.0)).abs() < 1e-10);
        }
    }

    #[test]
    fn data_update_matches_constrained_minimizer_when_clip_is_inactive(
        x in image(8, 8, 0.5, 1.0),
        y in image(4, 4, 0.25, 1.0),
        sw in 0.1..1.0f64,
        ratio in 0.2..1.0f64,
    ) {
        // ratio <= 1 keeps the gain at most 1/2, so no pixel can be pushed below zero.
        let p = NoiseParams::new(sw, ratio * sw * 2.0).unwrap();
        let closed = data_fidelity_apply(&x, &y, 2, &p).unwrap();
        prop_assert!(closed.min() > 0.0);
        let oracle = projected_gradient(&x, &y, 2, &p);
        prop_assert!(closed.max_abs_diff(&oracle).unwrap() < 1e-7);
    }

    #[test]
    fn nlm_matches_naive_reference(x in image(8, 8, 0.0, 1.0), pr in 1usize..3, sr in 1usize..3, h in 0.05..1.0f64) {
        let fast = nlm_denoise(&x, pr, sr, h).unwrap();
        let slow = naive_nlm(&x, pr, sr, h);
        prop_assert!(fast.max_abs_diff(&slow).unwrap() < 1e-14);
    }

    #[test]
    fn denoisers_keep_constants(c in -2.0..2.0f64, h in 5usize..12, w in 5usize..12) {
        let img = Image::constant((h, w), c);
        for out in [
            gaussian_denoise(&img, 1.3).unwrap(),
            nlm_denoise(&img, 1, 2, 0.2).unwrap(),
            tv_denoise(&img, 0.1, 20).unwrap(),
        ] {
            prop_assert!(out.data().iter().all(|v| (v - c).abs() < 1e-12));
        }
    }

    #[test]
    fn gaussian_preserves_mean(x in image(9, 13, -1.0, 1.0), s in 0.3..3.0f64) {
        let out = gaussian_denoise(&x, s).unwrap();
        prop_assert!((out.mean() - x.mean()).abs() < 1e-8);
    }

    #[test]
    fn tv_step_lowers_its_energy(x in image(10, 10, 0.0, 1.0), wgt in 0.01..0.5f64, iters in 1usize..60) {
        let out = tv_denoise(&x, wgt, iters).unwrap();
        prop_assert!(tv_energy(&out, &x, wgt) <= tv_energy(&x, &x, wgt) + 1e-12);
    }

    #[test]
    fn zero_error_state_is_a_consensus(x in image(4, 4, 0.0, 1.0), mu in 0.1..0.9f64) {
        // Agents that map everything to x have v = (x, x) as their equilibrium.
        let target = x.clone();
        let t2 = x.clone();
        let agents: Vec<Box<dyn Agent>> = vec![
            Box::new(FnAgent::new("a", move |_: &Image| target.clone())),
            Box::new(FnAgent::new("b", move |_: &Image| t2.clone())),
        ];
        let v = StackedState::replicated(&x, vec![mu, 1.0 - mu]).unwrap();
        if x.norm() > 0.0 {
            prop_assert!(convergence_error(&v, &agents, 0.1).unwrap() < 1e-12);
        }
        let f = stack_f(&v, &agents).unwrap();
        let g = stack_g(&v);
        let avg = weighted_average(&v);
        for (fi, gi) in f.components().iter().zip(g.components()) {
            prop_assert!(fi.max_abs_diff(&avg).unwrap() < 1e-15);
            prop_assert!(gi.max_abs_diff(&avg).unwrap() < 1e-15);
        }
    }
}
