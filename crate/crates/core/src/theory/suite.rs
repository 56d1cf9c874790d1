use std::fmt::Write as _;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::linops::Shape;

use super::affine::{AffineMap, MonotoneOperatorSpec};
use super::instance::{
    gaussian_matrix, gaussian_vector, random_instance, random_orthogonal, random_spd, random_unit_direction,
    MatrixInstance,
};
use super::lemmas::{build_phi_r, build_tilde_r, lipschitz_inverse_check, phi_r_slope, prox_two_forms_check};
use super::theorems::{theorem3_config, verify_theorem1, verify_theorem2, verify_theorem3, DiagonalizableAffine, Quadratic};
use super::TheoryError;

/// Outcome of one numerical check on one seeded instance.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CheckRecord {
    pub check: String,
    pub seed: u64,
    pub instance: String,
    pub measured: f64,
    pub threshold: f64,
    pub passed: bool,
}

impl CheckRecord {
    /// Passes when `measured <= threshold`.
    pub fn at_most(check: &str, seed: u64, instance: String, measured: f64, threshold: f64) -> Self {
        Self {
            check: check.to_string(),
            seed,
            instance,
            measured,
            threshold,
            passed: measured <= threshold,
        }
    }

    /// Passes when `measured >= threshold`.
    pub fn at_least(check: &str, seed: u64, instance: String, measured: f64, threshold: f64) -> Self {
        Self {
            passed: measured >= threshold,
            ..Self::at_most(check, seed, instance, measured, threshold)
        }
    }

    fn refused(check: &str, seed: u64, instance: String, threshold: f64, err: &TheoryError) -> Self {
        Self {
            check: check.to_string(),
            seed,
            instance: format!("{instance}; refused: {err}"),
            measured: f64::NAN,
            threshold,
            passed: false,
        }
    }
}

/// CSV with header `check,seed,instance,measured,threshold,passed`.
pub fn records_to_csv(records: &[CheckRecord]) -> String {
    let mut out = String::from("check,seed,instance,measured,threshold,passed\n");
    for r in records {
        let instance = r.instance.replace('"', "\"\"");
        let _ = writeln!(
            out,
            "{},{},\"{}\",{:e},{:e},{}",
            r.check, r.seed, instance, r.measured, r.threshold, r.passed
        );
    }
    out
}

pub fn rng_for(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Shapes and factors with `n <= 64` used across the suite.
pub const INSTANCE_SHAPES: [(Shape, usize); 6] = [
    ((2, 2), 2),
    ((2, 4), 2),
    ((4, 4), 2),
    ((4, 8), 2),
    ((8, 8), 2),
    ((8, 8), 4),
];

fn describe(inst: &MatrixInstance) -> String {
    format!(
        "shape={}x{} L={} sigma2={:.4} dev={:.3}",
        inst.shape().0,
        inst.shape().1,
        inst.factor(),
        inst.sigma2(),
        inst.r_deviation()
    )
}

/// `sigma2` drawn uniformly from `[0.1, 0.9] / L^2`.
pub fn admissible_sigma2<G: Rng + ?Sized>(rng: &mut G, factor: usize) -> f64 {
    rng.random_range(0.1..0.9) / (factor * factor) as f64
}

/// Strongly monotone affine operator with spectrum in `[0.5, 2]`.
pub fn random_monotone<G: Rng + ?Sized>(rng: &mut G, n: usize) -> MonotoneOperatorSpec {
    MonotoneOperatorSpec::new(random_spd(rng, n, 0.5, 2.0), gaussian_vector(rng, n))
        .expect("spectrum bounded away from zero")
}

/// `K` quadratics with spectra in `[0.5, 2]` and perturbations `R_i` with
/// `||R_i - I|| <= 0.1`.
pub fn random_theorem1_case<G: Rng + ?Sized>(rng: &mut G, n: usize, k: usize) -> (Vec<Quadratic>, Vec<DMatrix<f64>>) {
    let fs = (0..k)
        .map(|_| Quadratic::new(random_spd(rng, n, 0.5, 2.0), gaussian_vector(rng, n)).expect("valid quadratic"))
        .collect();
    let rs = (0..k)
        .map(|_| {
            let t = rng.random_range(0.0..0.1);
            DMatrix::identity(n, n) + random_unit_direction(rng, n) * t
        })
        .collect();
    (fs, rs)
}

/// Relaxed-update instance with `||R - I|| = r_dev` and a random monotone
/// prior operator.
pub fn random_theorem2_case<G: Rng + ?Sized>(
    rng: &mut G,
    shape: Shape,
    factor: usize,
    r_dev: f64,
) -> Result<(MatrixInstance, MonotoneOperatorSpec), TheoryError> {
    let sigma2 = admissible_sigma2(rng, factor);
    let inst = random_instance(rng, shape, factor, sigma2, r_dev)?;
    let phi = random_monotone(rng, inst.n());
    Ok((inst, phi))
}

/// `W = V diag(lambda) V^{-1}` with `cond(V) <= 4` and `lambda` in
/// `[0.1, 1]`; `H = V S V^{-1} x + h` with `S` symmetric, spectrum in
/// `[0, 0.9]`; random start.
pub fn random_theorem3_case<G: Rng + ?Sized>(
    rng: &mut G,
    n: usize,
) -> (DiagonalizableAffine, AffineMap, DVector<f64>) {
    let u = random_orthogonal(rng, n);
    let q = random_orthogonal(rng, n);
    let s = DVector::from_fn(n, |_, _| rng.random_range(0.5..2.0));
    let v = &u * DMatrix::from_diagonal(&s) * q.transpose();
    let lambda = (0..n).map(|_| rng.random_range(0.1..=1.0)).collect();
    let w = DiagonalizableAffine {
        v: v.clone(),
        lambda,
        offset: gaussian_vector(rng, n),
    };
    let hat_h = random_spd(rng, n, 0.0, 0.9);
    let v_inv = v.clone().lu().try_inverse().expect("well-conditioned V");
    let h = AffineMap::new(&v * hat_h * v_inv, gaussian_vector(rng, n));
    let x0 = gaussian_vector(rng, n);
    (w, h, x0)
}

/// Instance counts of the suite.
#[derive(Debug, Clone, Copy)]
pub struct SuiteConfig {
    pub seed: u64,
    pub prox_instances: usize,
    pub tilde_r_instances: usize,
    pub theorem1_instances: usize,
    pub theorem2_instances: usize,
    pub theorem3_instances: usize,
    pub theorem3_dim: usize,
    pub lipschitz_instances: usize,
}

impl Default for SuiteConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            prox_instances: 24,
            tilde_r_instances: 12,
            theorem1_instances: 50,
            theorem2_instances: 25,
            theorem3_instances: 25,
            theorem3_dim: 16,
            lipschitz_instances: 10,
        }
    }
}

fn seeds(base: u64, salt: u64, count: usize) -> Vec<u64> {
    (0..count as u64).map(|i| base.wrapping_mul(1_000_003).wrapping_add(salt * 100_000 + i)).collect()
}

pub fn prox_checks(seed: u64) -> CheckRecord {
    const CHECK: &str = "prox_two_forms";
    let mut rng = rng_for(seed);
    let (shape, factor) = INSTANCE_SHAPES[rng.random_range(0..INSTANCE_SHAPES.len())];
    let sigma2 = rng.random_range(0.0..2.0);
    match random_instance(&mut rng, shape, factor, sigma2, 0.0) {
        Ok(inst) => match prox_two_forms_check(&inst) {
            Ok(res) => CheckRecord::at_most(CHECK, seed, describe(&inst), res, 1e-10),
            Err(e) => CheckRecord::refused(CHECK, seed, describe(&inst), 1e-10, &e),
        },
        Err(e) => CheckRecord::refused(CHECK, seed, format!("shape={shape:?}"), 1e-10, &e),
    }
}

/// Identity case plus the resolvent identity at each deviation.
pub fn tilde_r_checks(seed: u64, deviations: &[f64]) -> Vec<CheckRecord> {
    let mut rng = rng_for(seed);
    let (shape, factor) = INSTANCE_SHAPES[rng.random_range(0..INSTANCE_SHAPES.len())];
    let sigma2 = admissible_sigma2(&mut rng, factor);
    let mut out = Vec::new();
    let base = match random_instance(&mut rng, shape, factor, sigma2, 0.0) {
        Ok(b) => b,
        Err(e) => return vec![CheckRecord::refused("tilde_r_identity", seed, format!("shape={shape:?}"), 1e-10, &e)],
    };
    match build_tilde_r(&base) {
        Ok(t) => out.push(CheckRecord::at_most("tilde_r_identity", seed, describe(&base), t.deviation, 1e-10)),
        Err(e) => out.push(CheckRecord::refused("tilde_r_identity", seed, describe(&base), 1e-10, &e)),
    }
    let direction = random_unit_direction(&mut rng, base.n());
    for &t in deviations {
        let r = DMatrix::identity(base.n(), base.n()) + &direction * t;
        let inst = match base.with_r_matrix(r) {
            Ok(i) => i,
            Err(e) => {
                out.push(CheckRecord::refused("tilde_r_resolvent", seed, describe(&base), 1e-8, &e));
                continue;
            }
        };
        match build_tilde_r(&inst) {
            Ok(tr) => {
                out.push(CheckRecord::at_most("tilde_r_resolvent", seed, describe(&inst), tr.resolvent_residual, 1e-8));
                out.push(CheckRecord::at_most(
                    "tilde_r_range_equation",
                    seed,
                    describe(&inst),
                    tr.range_equation_residual,
                    1e-8,
                ));
                out.push(CheckRecord::at_least(
                    "tilde_r_gram_spectrum",
                    seed,
                    describe(&inst),
                    tr.min_spectrum_real,
                    super::lemmas::PSD_TOL,
                ));
            }
            Err(e) => out.push(CheckRecord::refused("tilde_r_resolvent", seed, describe(&inst), 1e-8, &e)),
        }
    }
    out
}

/// Composition identity at `||R - I|| = 0.02` and slope of `Lip(Phi_R - I)`.
pub fn phi_r_checks(seed: u64) -> Vec<CheckRecord> {
    let mut rng = rng_for(seed);
    let (shape, factor) = ((4, 4), 2);
    let (inst, phi) = match random_theorem2_case(&mut rng, shape, factor, 0.02) {
        Ok(c) => c,
        Err(e) => return vec![CheckRecord::refused("phi_r_composition", seed, format!("shape={shape:?}"), 1e-8, &e)],
    };
    let mut out = Vec::new();
    match build_phi_r(&inst, &phi) {
        Ok(p) => out.push(CheckRecord::at_most("phi_r_composition", seed, describe(&inst), p.composition_residual, 1e-8)),
        Err(e) => out.push(CheckRecord::refused("phi_r_composition", seed, describe(&inst), 1e-8, &e)),
    }
    let direction = random_unit_direction(&mut rng, inst.n());
    match phi_r_slope(&inst, &direction, &phi, &[0.01, 0.02, 0.05]) {
        Ok(s) => out.push(CheckRecord::at_most(
            "phi_r_linear_growth",
            seed,
            format!("{}; slope={:.4}", describe(&inst), s.slope),
            s.ratio_spread,
            1.5,
        )),
        Err(e) => out.push(CheckRecord::refused("phi_r_linear_growth", seed, describe(&inst), 1.5, &e)),
    }
    out
}

pub fn theorem1_checks(seed: u64, k: usize) -> Vec<CheckRecord> {
    let mut rng = rng_for(seed);
    let n = rng.random_range(2..=12);
    let (fs, rs) = random_theorem1_case(&mut rng, n, k);
    let desc = format!("n={n} K={k}");
    let check = format!("theorem1_k{k}");
    match verify_theorem1(&fs, &rs) {
        Ok(r) => vec![
            CheckRecord::at_most(&check, seed, desc.clone(), r.difference, 1e-8),
            CheckRecord::at_most(&format!("{check}_stationarity"), seed, desc, r.stationarity_residual, 1e-8),
        ],
        Err(e) => vec![CheckRecord::refused(&check, seed, desc, 1e-8, &e)],
    }
}

pub fn theorem2_check(seed: u64) -> CheckRecord {
    let mut rng = rng_for(seed);
    let (shape, factor) = INSTANCE_SHAPES[rng.random_range(1..INSTANCE_SHAPES.len())];
    let r_dev = rng.random_range(0.01..0.1);
    match random_theorem2_case(&mut rng, shape, factor, r_dev) {
        Ok((inst, phi)) => match verify_theorem2(&inst, &phi) {
            Ok(r) => CheckRecord::at_most("theorem2", seed, describe(&inst), r.difference, 1e-8),
            Err(e) => CheckRecord::refused("theorem2", seed, describe(&inst), 1e-8, &e),
        },
        Err(e) => CheckRecord::refused("theorem2", seed, format!("shape={shape:?}"), 1e-8, &e),
    }
}

pub fn theorem3_check(seed: u64, n: usize) -> CheckRecord {
    let mut rng = rng_for(seed);
    let (w, h, x0) = random_theorem3_case(&mut rng, n);
    let cfg = theorem3_config();
    match verify_theorem3(&w, &h, &x0, &cfg) {
        Ok(r) => {
            let mut rec = CheckRecord::at_most(
                "theorem3",
                seed,
                format!("n={n} iterations={} hat_h_norm={:.3}", r.iterations, r.hat_h_norm),
                r.final_error,
                cfg.tol,
            );
            rec.passed = r.converged;
            rec
        }
        Err(e) => CheckRecord::refused("theorem3", seed, format!("n={n}"), cfg.tol, &e),
    }
}

/// Random `psi` with `Lip(psi) = 0.8`; measured is the larger ratio of a
/// Lipschitz constant to its bound.
pub fn lipschitz_check(seed: u64) -> CheckRecord {
    let mut rng = rng_for(seed);
    let n = rng.random_range(2..=16);
    let m = gaussian_matrix(&mut rng, n, n);
    let norm = super::affine::spectral_norm(&m);
    let psi = AffineMap::new(m * (0.8 / norm), gaussian_vector(&mut rng, n));
    match lipschitz_inverse_check(&psi) {
        Ok(r) => {
            let ratio = (r.inverse_lip / r.inverse_bound).max(r.complement_lip / r.complement_bound);
            CheckRecord::at_most("lipschitz_inverse", seed, format!("n={n} alpha=0.8"), ratio, 1.0 + 1e-12)
        }
        Err(e) => CheckRecord::refused("lipschitz_inverse", seed, format!("n={n}"), 1.0, &e),
    }
}

/// Runs every check over seeded random instances.
pub fn run_suite(cfg: &SuiteConfig) -> Vec<CheckRecord> {
    let mut out: Vec<CheckRecord> = seeds(cfg.seed, 1, cfg.prox_instances).into_par_iter().map(prox_checks).collect();
    out.extend(
        seeds(cfg.seed, 2, cfg.tilde_r_instances)
            .into_par_iter()
            .flat_map_iter(|s| tilde_r_checks(s, &[0.01, 0.05, 0.1]))
            .collect::<Vec<_>>(),
    );
    out.extend(
        seeds(cfg.seed, 3, cfg.tilde_r_instances).into_par_iter().flat_map_iter(phi_r_checks).collect::<Vec<_>>(),
    );
    for k in [2, 3] {
        out.extend(
            seeds(cfg.seed, 3 + k as u64, cfg.theorem1_instances)
                .into_par_iter()
                .flat_map_iter(|s| theorem1_checks(s, k))
                .collect::<Vec<_>>(),
        );
    }
    out.extend(seeds(cfg.seed, 7, cfg.theorem2_instances).into_par_iter().map(theorem2_check).collect::<Vec<_>>());
    out.extend(
        seeds(cfg.seed, 8, cfg.theorem3_instances)
            .into_par_iter()
            .map(|s| theorem3_check(s, cfg.theorem3_dim))
            .collect::<Vec<_>>(),
    );
    out.extend(seeds(cfg.seed, 9, cfg.lipschitz_instances).into_par_iter().map(lipschitz_check).collect::<Vec<_>>());
    out
}
