use nalgebra::{DMatrix, DVector};

use super::affine::{inverse, min_symmetric_eigenvalue, resolvent, resolvent_of, spectral_norm, AffineMap, MonotoneOperatorSpec};
use super::instance::MatrixInstance;
use super::TheoryError;

/// Eigenvalues with real part below this count as negative.
pub const PSD_TOL: f64 = -1e-10;

/// Both closed forms of the data-fidelity proximal map.
#[derive(Debug, Clone)]
pub struct ProxForms {
    /// `(I + grad f)^{-1}`.
    pub resolvent: AffineMap,
    /// `I - r grad f`.
    pub gradient_step: AffineMap,
    pub residual: f64,
}

/// Builds `(I + grad f)^{-1}` by inversion and `I - r grad f` directly and
/// reports their discrepancy.
pub fn prox_two_forms(instance: &MatrixInstance) -> Result<ProxForms, TheoryError> {
    let resolvent = resolvent_of(&instance.grad_f())?;
    let gradient_step = instance.standard_update();
    let residual = resolvent.discrepancy(&gradient_step);
    Ok(ProxForms {
        resolvent,
        gradient_step,
        residual,
    })
}

pub fn prox_two_forms_check(instance: &MatrixInstance) -> Result<f64, TheoryError> {
    Ok(prox_two_forms(instance)?.residual)
}

/// `R~` and the identities it was built to satisfy.
#[derive(Debug, Clone)]
pub struct TildeR {
    pub matrix: DMatrix<f64>,
    /// Discrepancy between `I - r R grad f` and `(I + R~ grad f)^{-1}`.
    pub resolvent_residual: f64,
    /// `||(R~ (I - r W R) - r R) P_range||`.
    pub range_equation_residual: f64,
    /// Smallest real part of the spectrum of `R~ A^T A`.
    pub min_spectrum_real: f64,
    /// Smallest eigenvalue of the symmetric part of `R~ A^T A`.
    ///
    /// Diagnostic only: it is negative whenever `R~` maps part of
    /// `range(A^T)` into `null(A)`.
    pub min_symmetric_eig: f64,
    /// `||R~ - I||`.
    pub deviation: f64,
    /// `||r W R||`.
    pub rwr_norm: f64,
}

/// Constructs `R~ = r R (I - r W R)^{-1}` on `range(A^T)` and `R` on
/// `null(A)`, so that `x - r R grad f(x) = (I + R~ grad f)^{-1}(x)`.
///
/// Refuses unless `sigma2 < 1 / L^2` and `||r W R|| < 1`.
pub fn build_tilde_r(instance: &MatrixInstance) -> Result<TildeR, TheoryError> {
    const CHECK: &str = "build_tilde_r";
    let l2 = (instance.factor() * instance.factor()) as f64;
    if !(instance.sigma2() < 1.0 / l2) {
        return Err(TheoryError::hypothesis(
            CHECK,
            format!("sigma2 = {:.6} is not below 1/L^2 = {:.6}", instance.sigma2(), 1.0 / l2),
        ));
    }
    let n = instance.n();
    let id = DMatrix::identity(n, n);
    let r = instance.r();
    let w = instance.w();
    let rm = instance.r_matrix();
    let rwr = &w * rm * r;
    let rwr_norm = spectral_norm(&rwr);
    if !(rwr_norm < 1.0) {
        return Err(TheoryError::hypothesis(CHECK, format!("||r W R|| = {rwr_norm:.6} is not below 1")));
    }
    let p_range = instance.range_projector();
    let p_null = instance.null_projector();
    let core = inverse(&(&id - &rwr), "I - r W R")?;
    let matrix = rm * r * core * &p_range + rm * &p_null;

    let ata = instance.a_mat().transpose() * instance.a_mat();
    let prod = &matrix * &ata;
    let min_spectrum_real = prod.complex_eigenvalues().iter().map(|z| z.re).fold(f64::INFINITY, f64::min);
    if min_spectrum_real < PSD_TOL * l2 {
        return Err(TheoryError::hypothesis(
            CHECK,
            format!("R~ A^T A has an eigenvalue with real part {min_spectrum_real:.3e}"),
        ));
    }
    let min_symmetric_eig = min_symmetric_eigenvalue(&prod);

    let tilde_grad = instance.grad_f().premultiply(&matrix);
    let resolvent_residual = resolvent_of(&tilde_grad)?.discrepancy(&instance.rap_update());
    let range_equation_residual = spectral_norm(&((&matrix * (&id - &rwr) - rm * r) * &p_range));
    let deviation = spectral_norm(&(&matrix - &id));

    Ok(TildeR {
        matrix,
        resolvent_residual,
        range_equation_residual,
        min_spectrum_real,
        min_symmetric_eig,
        deviation,
        rwr_norm,
    })
}

/// `Phi_R` and its diagnostics.
#[derive(Debug, Clone)]
pub struct PhiR {
    pub map: AffineMap,
    /// Discrepancy between `(I + phi)^{-1} ∘ Phi_R` and `(I + R~^{-1} phi)^{-1}`.
    pub composition_residual: f64,
    /// `Lip(Phi_R - I)`.
    pub lipschitz_deviation: f64,
    /// Smallest eigenvalue of the symmetric part of `R~^{-1} P`.
    pub monotonicity_margin: f64,
    pub tilde_r: TildeR,
}

/// `Phi_R = (I + phi)(I + R~^{-1} phi)^{-1}`.
///
/// Refuses when `R~^{-1} phi` is not strongly monotone.
pub fn build_phi_r(instance: &MatrixInstance, phi: &MonotoneOperatorSpec) -> Result<PhiR, TheoryError> {
    if phi.dim() != instance.n() {
        return Err(TheoryError::Dimension(format!(
            "operator has dimension {}, instance {}",
            phi.dim(),
            instance.n()
        )));
    }
    let tilde_r = build_tilde_r(instance)?;
    let tilde_inv = inverse(&tilde_r.matrix, "R~")?;
    let scaled_phi = phi.phi().premultiply(&tilde_inv);
    let monotonicity_margin = min_symmetric_eigenvalue(&scaled_phi.linear);
    if !(monotonicity_margin > 0.0) {
        return Err(TheoryError::hypothesis(
            "build_phi_r",
            format!("R~^{{-1}} phi is not strongly monotone (margin {monotonicity_margin:.3e})"),
        ));
    }
    let target = resolvent_of(&scaled_phi)?;
    let map = phi.phi().plus_identity().compose(&target);
    let composition_residual = resolvent(phi).compose(&map).discrepancy(&target);
    let n = instance.n();
    let lipschitz_deviation = spectral_norm(&(&map.linear - DMatrix::identity(n, n)));
    Ok(PhiR {
        map,
        composition_residual,
        lipschitz_deviation,
        monotonicity_margin,
        tilde_r,
    })
}

/// `Lip(Phi_R - I)` along `R = I + t E` for several `t`.
#[derive(Debug, Clone)]
pub struct SlopeReport {
    pub deviations: Vec<f64>,
    pub lipschitz: Vec<f64>,
    /// Least-squares slope through the origin.
    pub slope: f64,
    /// Largest over smallest `Lip / t` ratio; near 1 when the growth is linear.
    pub ratio_spread: f64,
}

pub fn phi_r_slope(
    base: &MatrixInstance,
    direction: &DMatrix<f64>,
    phi: &MonotoneOperatorSpec,
    deviations: &[f64],
) -> Result<SlopeReport, TheoryError> {
    let n = base.n();
    let unit = direction / spectral_norm(direction);
    let mut lipschitz = Vec::with_capacity(deviations.len());
    for &t in deviations {
        let inst = base.with_r_matrix(DMatrix::identity(n, n) + &unit * t)?;
        lipschitz.push(build_phi_r(&inst, phi)?.lipschitz_deviation);
    }
    let num: f64 = deviations.iter().zip(&lipschitz).map(|(t, l)| t * l).sum();
    let den: f64 = deviations.iter().map(|t| t * t).sum();
    let ratios: Vec<f64> = deviations.iter().zip(&lipschitz).map(|(t, l)| l / t).collect();
    let max = ratios.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let min = ratios.iter().cloned().fold(f64::INFINITY, f64::min);
    Ok(SlopeReport {
        deviations: deviations.to_vec(),
        lipschitz,
        slope: num / den,
        ratio_spread: max / min,
    })
}

/// Lipschitz bounds for `(I + psi)^{-1}` when `Lip(psi) = alpha < 1`.
#[derive(Debug, Clone, Copy)]
pub struct LipschitzInverseReport {
    pub alpha: f64,
    /// `Lip((I + psi)^{-1})` and its bound `1 / (1 - alpha)`.
    pub inverse_lip: f64,
    pub inverse_bound: f64,
    /// `Lip(I - (I + psi)^{-1})` and its bound `alpha / (1 - alpha)`.
    pub complement_lip: f64,
    pub complement_bound: f64,
}

impl LipschitzInverseReport {
    pub fn holds(&self) -> bool {
        let slack = 1e-12;
        self.inverse_lip <= self.inverse_bound + slack && self.complement_lip <= self.complement_bound + slack
    }
}

pub fn lipschitz_inverse_check(psi: &AffineMap) -> Result<LipschitzInverseReport, TheoryError> {
    let alpha = psi.lipschitz();
    if !(alpha < 1.0) {
        return Err(TheoryError::hypothesis(
            "lipschitz_inverse_check",
            format!("Lip(psi) = {alpha:.6} is not below 1"),
        ));
    }
    let n = psi.dim();
    let inv = inverse(&(&psi.linear + DMatrix::identity(n, n)), "I + psi")?;
    let complement = DMatrix::identity(n, n) - &inv;
    Ok(LipschitzInverseReport {
        alpha,
        inverse_lip: spectral_norm(&inv),
        inverse_bound: 1.0 / (1.0 - alpha),
        complement_lip: spectral_norm(&complement),
        complement_bound: alpha / (1.0 - alpha),
    })
}

/// Residual of `sum_i M_i g_i(x)` for affine `g_i`.
pub(crate) fn weighted_sum_residual(weights: &[&DMatrix<f64>], maps: &[&AffineMap], x: &DVector<f64>) -> f64 {
    let mut acc = DVector::zeros(x.len());
    for (m, g) in weights.iter().zip(maps) {
        acc += *m * g.apply(x);
    }
    acc.norm()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::theory::instance::{random_instance, random_perturbation, random_spd};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn rng(seed: u64) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(seed)
    }

    #[test]
    fn prox_forms_agree() {
        let mut g = rng(3);
        let inst = random_instance(&mut g, (2, 2), 2, 0.7, 0.0).unwrap();
        assert_eq!(inst.a_mat().nrows(), 1);
        assert!(prox_two_forms_check(&inst).unwrap() < 1e-10);
    }

    #[test]
    fn zero_sigma_gives_identity_forms() {
        let mut g = rng(4);
        let inst = random_instance(&mut g, (4, 4), 2, 0.0, 0.0).unwrap();
        let forms = prox_two_forms(&inst).unwrap();
        assert_eq!(forms.gradient_step, AffineMap::identity(16));
        assert!(forms.resolvent.discrepancy(&AffineMap::identity(16)) < 1e-15);
    }

    #[test]
    fn tilde_r_of_identity_is_identity() {
        let mut g = rng(5);
        let inst = random_instance(&mut g, (4, 4), 2, 0.2, 0.0).unwrap();
        let t = build_tilde_r(&inst).unwrap();
        assert!(t.deviation < 1e-10, "{}", t.deviation);
    }

    #[test]
    fn tilde_r_identities_on_small_instance() {
        let mut g = rng(6);
        let inst = random_instance(&mut g, (2, 4), 2, 0.2, 0.05).unwrap();
        let t = build_tilde_r(&inst).unwrap();
        assert!(t.resolvent_residual < 1e-8);
        assert!(t.range_equation_residual < 1e-10);
        assert!(t.min_spectrum_real > PSD_TOL);
    }

    #[test]
    fn symmetric_part_of_tilde_r_gram_is_indefinite_in_general() {
        // R~ sends part of range(A^T) into null(A), so the quadratic form of
        // R~ A^T A takes negative values on mixed vectors even though its
        // spectrum is non-negative.
        let mut g = rng(7);
        let inst = random_instance(&mut g, (4, 4), 2, 0.2, 0.1).unwrap();
        let t = build_tilde_r(&inst).unwrap();
        assert!(t.min_spectrum_real > PSD_TOL);
        assert!(t.min_symmetric_eig < -1e-3, "{}", t.min_symmetric_eig);
    }

    #[test]
    fn tilde_r_refuses_large_sigma() {
        let mut g = rng(8);
        let inst = random_instance(&mut g, (4, 4), 2, 0.25, 0.05).unwrap();
        assert!(matches!(build_tilde_r(&inst), Err(TheoryError::Hypothesis { .. })));
    }

    #[test]
    fn phi_r_is_identity_without_perturbation() {
        let mut g = rng(9);
        let inst = random_instance(&mut g, (4, 4), 2, 0.2, 0.0).unwrap();
        let phi = MonotoneOperatorSpec::new(random_spd(&mut g, 16, 0.5, 2.0), DVector::from_element(16, 0.3)).unwrap();
        let out = build_phi_r(&inst, &phi).unwrap();
        assert!(out.map.discrepancy(&AffineMap::identity(16)) < 1e-10);
    }

    #[test]
    fn phi_r_composition_identity() {
        let mut g = rng(10);
        let inst = random_instance(&mut g, (4, 4), 2, 0.2, 0.02).unwrap();
        let phi = MonotoneOperatorSpec::new(random_spd(&mut g, 16, 0.5, 2.0), DVector::from_element(16, -0.2)).unwrap();
        let out = build_phi_r(&inst, &phi).unwrap();
        assert!(out.composition_residual < 1e-8);
        assert!(out.lipschitz_deviation > 0.0);
    }

    #[test]
    fn phi_r_refuses_non_monotone_scaling() {
        let mut g = rng(11);
        let n = 16;
        let r = random_perturbation(&mut g, n, 0.9);
        let inst = MatrixInstance::new((4, 4), 2, r, 0.2, DVector::zeros(4)).unwrap();
        let mut diag = DVector::from_element(n, 1.0);
        diag[0] = 1e-4;
        let phi = MonotoneOperatorSpec::new(DMatrix::from_diagonal(&diag) * 100.0, DVector::zeros(n)).unwrap();
        let err = build_phi_r(&inst, &phi).unwrap_err();
        assert!(matches!(err, TheoryError::Hypothesis { .. }), "{err}");
    }

    #[test]
    fn lipschitz_inverse_bounds() {
        let zero = lipschitz_inverse_check(&AffineMap::linear_only(DMatrix::zeros(3, 3))).unwrap();
        assert_eq!((zero.inverse_lip, zero.complement_lip), (1.0, 0.0));
        let half = lipschitz_inverse_check(&AffineMap::linear_only(DMatrix::identity(3, 3) * 0.5)).unwrap();
        assert!((half.inverse_lip - 2.0 / 3.0).abs() < 1e-12);
        assert!((half.complement_lip - 1.0 / 3.0).abs() < 1e-12);
        assert!((half.inverse_bound - 2.0).abs() < 1e-12);
        assert!((half.complement_bound - 1.0).abs() < 1e-12);
        assert!(half.holds());
        assert!(lipschitz_inverse_check(&AffineMap::linear_only(DMatrix::identity(2, 2))).is_err());
    }
}
