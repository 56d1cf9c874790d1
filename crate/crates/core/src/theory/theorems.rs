use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::agents::{AffineAgent, Agent};
use crate::linops::Image;
use crate::mace::{mace_solve, MaceConfig};

use super::affine::{inverse, min_symmetric_eigenvalue, resolvent, resolvent_of, solve, spectral_norm, AffineMap, MonotoneOperatorSpec};
use super::instance::MatrixInstance;
use super::lemmas::{build_phi_r, weighted_sum_residual, PhiR};
use super::TheoryError;

/// Tolerance on hypotheses that hold with equality in exact arithmetic.
const HYPOTHESIS_TOL: f64 = 1e-12;

/// Solves `F_i(v_i) = sum_j C_j v_j` for all `i` as one dense linear system.
///
/// Returns the stacked solution and the consensus `sum_j C_j v_j`.
pub fn solve_equilibrium(
    maps: &[AffineMap],
    averaging: &[DMatrix<f64>],
) -> Result<(Vec<DVector<f64>>, DVector<f64>), TheoryError> {
    let k = maps.len();
    if k == 0 || averaging.len() != k {
        return Err(TheoryError::Dimension(format!("{k} maps with {} averaging blocks", averaging.len())));
    }
    let n = maps[0].dim();
    let mut system = DMatrix::zeros(k * n, k * n);
    let mut rhs = DVector::zeros(k * n);
    for (i, map) in maps.iter().enumerate() {
        if map.dim() != n || averaging[i].shape() != (n, n) {
            return Err(TheoryError::Dimension("maps and averaging blocks differ in dimension".into()));
        }
        for (j, c) in averaging.iter().enumerate() {
            let mut block = -c.clone();
            if i == j {
                block += &map.linear;
            }
            system.view_mut((i * n, j * n), (n, n)).copy_from(&block);
        }
        rhs.rows_mut(i * n, n).copy_from(&(-&map.offset));
    }
    let v = solve(&system, &rhs, "equilibrium system")?;
    let parts: Vec<DVector<f64>> = (0..k).map(|i| v.rows(i * n, n).into_owned()).collect();
    let mut x = DVector::zeros(n);
    for (c, vi) in averaging.iter().zip(&parts) {
        x += c * vi;
    }
    Ok((parts, x))
}

/// `f(x) = (x - a)^T Q (x - a) / 2` with `Q` symmetric positive semidefinite.
#[derive(Debug, Clone)]
pub struct Quadratic {
    q: DMatrix<f64>,
    center: DVector<f64>,
}

impl Quadratic {
    pub fn new(q: DMatrix<f64>, center: DVector<f64>) -> Result<Self, TheoryError> {
        if !q.is_square() || q.nrows() != center.len() {
            return Err(TheoryError::Dimension(format!("Q is {:?}, center has length {}", q.shape(), center.len())));
        }
        let asym = spectral_norm(&(&q - q.transpose()));
        if asym > HYPOTHESIS_TOL * (1.0 + spectral_norm(&q)) {
            return Err(TheoryError::hypothesis("quadratic", format!("Q is not symmetric (asymmetry {asym:.3e})")));
        }
        let m = min_symmetric_eigenvalue(&q);
        if m < -HYPOTHESIS_TOL {
            return Err(TheoryError::hypothesis("quadratic", format!("Q has eigenvalue {m:.3e}")));
        }
        Ok(Self { q, center })
    }

    pub fn q(&self) -> &DMatrix<f64> {
        &self.q
    }

    pub fn center(&self) -> &DVector<f64> {
        &self.center
    }

    /// `x -> Q (x - a)`.
    pub fn gradient(&self) -> AffineMap {
        AffineMap::new(self.q.clone(), -(&self.q * &self.center))
    }
}

#[derive(Debug, Clone)]
pub struct Theorem1Report {
    /// Consensus of `(F^R, G)`.
    pub x_plain_average: DVector<f64>,
    /// Consensus of `(F, G^R)`.
    pub x_matrix_average: DVector<f64>,
    pub difference: f64,
    /// Largest `||sum_i R_i grad f_i(x)||` over both consensus points.
    pub stationarity_residual: f64,
    /// Smallest symmetric-part eigenvalue over all `R_i Q_i`.
    pub monotonicity_margin: f64,
}

/// Solves `(F^R, G)` with `F^R_i = (I + R_i grad f_i)^{-1}` and plain
/// averaging, and `(F, G^R)` with `F_i = (I + grad f_i)^{-1}` and
/// `G^R = (sum R_i)^{-1} sum R_i v_i`, then compares the consensus points.
pub fn verify_theorem1(fs: &[Quadratic], rs: &[DMatrix<f64>]) -> Result<Theorem1Report, TheoryError> {
    const CHECK: &str = "theorem1";
    let k = fs.len();
    if k < 2 || rs.len() != k {
        return Err(TheoryError::Dimension(format!("{k} functions with {} matrices", rs.len())));
    }
    let n = fs[0].center.len();
    if fs.iter().any(|f| f.center.len() != n) || rs.iter().any(|r| r.shape() != (n, n)) {
        return Err(TheoryError::Dimension("functions and matrices differ in dimension".into()));
    }
    let grads: Vec<AffineMap> = fs.iter().map(Quadratic::gradient).collect();
    let mut monotonicity_margin = f64::INFINITY;
    for (r, f) in rs.iter().zip(fs) {
        let m = min_symmetric_eigenvalue(&(r * &f.q));
        monotonicity_margin = monotonicity_margin.min(m);
    }
    if monotonicity_margin < -HYPOTHESIS_TOL {
        return Err(TheoryError::hypothesis(CHECK, format!("some R_i grad f_i is not monotone (margin {monotonicity_margin:.3e})")));
    }
    let r_sum: DMatrix<f64> = rs.iter().fold(DMatrix::zeros(n, n), |acc, r| acc + r);
    let smallest_sv = r_sum.singular_values().min();
    if !(smallest_sv > 1e-10 * (1.0 + spectral_norm(&r_sum))) {
        return Err(TheoryError::hypothesis(CHECK, format!("sum R_i is singular (smallest singular value {smallest_sv:.3e})")));
    }
    let r_sum_inv = inverse(&r_sum, "sum R_i")?;

    let f_r: Vec<AffineMap> =
        grads.iter().zip(rs).map(|(g, r)| resolvent_of(&g.premultiply(r))).collect::<Result<_, _>>()?;
    let plain = vec![DMatrix::identity(n, n) / k as f64; k];
    let (_, x_plain_average) = solve_equilibrium(&f_r, &plain)?;

    let f: Vec<AffineMap> = grads.iter().map(resolvent_of).collect::<Result<_, _>>()?;
    let weighted: Vec<DMatrix<f64>> = rs.iter().map(|r| &r_sum_inv * r).collect();
    let (_, x_matrix_average) = solve_equilibrium(&f, &weighted)?;

    let rs_ref: Vec<&DMatrix<f64>> = rs.iter().collect();
    let grads_ref: Vec<&AffineMap> = grads.iter().collect();
    let stationarity_residual = weighted_sum_residual(&rs_ref, &grads_ref, &x_plain_average)
        .max(weighted_sum_residual(&rs_ref, &grads_ref, &x_matrix_average));

    Ok(Theorem1Report {
        difference: (&x_plain_average - &x_matrix_average).norm(),
        x_plain_average,
        x_matrix_average,
        stationarity_residual,
        monotonicity_margin,
    })
}

#[derive(Debug, Clone)]
pub struct Theorem2Report {
    /// Consensus of the relaxed update with `H = (I + phi)^{-1}`.
    pub x_rap: DVector<f64>,
    /// Consensus of the standard update with `H ∘ Phi_R`.
    pub x_standard: DVector<f64>,
    pub difference: f64,
    /// `||grad f(x) + R~^{-1} phi(x)||` at the relaxed consensus.
    pub stationarity_residual: f64,
    pub phi_r: PhiR,
}

/// Compares the two-agent equilibria (weights 1/2) of the relaxed update
/// with `H` and of the standard update with `H ∘ Phi_R`.
pub fn verify_theorem2(instance: &MatrixInstance, phi: &MonotoneOperatorSpec) -> Result<Theorem2Report, TheoryError> {
    let phi_r = build_phi_r(instance, phi)?;
    let n = instance.n();
    let h = resolvent(phi);
    let half = vec![DMatrix::identity(n, n) * 0.5; 2];

    let (_, x_rap) = solve_equilibrium(&[instance.rap_update(), h.clone()], &half)?;
    let (_, x_standard) = solve_equilibrium(&[instance.standard_update(), h.compose(&phi_r.map)], &half)?;

    let tilde_inv = inverse(&phi_r.tilde_r.matrix, "R~")?;
    let id = DMatrix::identity(n, n);
    let grad = instance.grad_f();
    let stationarity_residual = weighted_sum_residual(&[&id, &tilde_inv], &[&grad, phi.phi()], &x_rap);

    Ok(Theorem2Report {
        difference: (&x_rap - &x_standard).norm(),
        x_rap,
        x_standard,
        stationarity_residual,
        phi_r,
    })
}

/// `x -> V diag(lambda) V^{-1} x + q`.
#[derive(Debug, Clone)]
pub struct DiagonalizableAffine {
    pub v: DMatrix<f64>,
    pub lambda: Vec<f64>,
    pub offset: DVector<f64>,
}

impl DiagonalizableAffine {
    pub fn dim(&self) -> usize {
        self.lambda.len()
    }

    pub fn to_affine(&self) -> Result<AffineMap, TheoryError> {
        let v_inv = inverse(&self.v, "V")?;
        let lam = DMatrix::from_diagonal(&DVector::from_column_slice(&self.lambda));
        Ok(AffineMap::new(&self.v * lam * v_inv, self.offset.clone()))
    }
}

#[derive(Debug, Clone)]
pub struct Theorem3Report {
    /// `||V^{-1} W V - (V^{-1} W V)^T||`.
    pub hat_w_asymmetry: f64,
    pub hat_w_eig_min: f64,
    pub hat_w_eig_max: f64,
    /// `||V^{-1} H V||`, at most 1 by hypothesis.
    pub hat_h_norm: f64,
    /// Whether `2 V^{-1} H V - I` is also nonexpansive.
    pub hat_h_firmly_nonexpansive: bool,
    pub trace: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
    pub final_error: f64,
    /// First trace index from which the error decreases strictly.
    pub decreasing_from: usize,
    pub consensus: DVector<f64>,
}

/// Runs the Mann iteration with agents `F(x) = W x + q` and an affine `H`
/// after checking that `F` is a proximal map and `H` nonexpansive in the
/// coordinates `V^{-1} x`.
pub fn verify_theorem3(
    w_spec: &DiagonalizableAffine,
    h: &AffineMap,
    x0: &DVector<f64>,
    config: &MaceConfig,
) -> Result<Theorem3Report, TheoryError> {
    const CHECK: &str = "theorem3";
    let n = w_spec.dim();
    if w_spec.v.shape() != (n, n) || w_spec.offset.len() != n || h.dim() != n || x0.len() != n {
        return Err(TheoryError::Dimension("W, H and x0 differ in dimension".into()));
    }
    if let Some(l) = w_spec.lambda.iter().find(|l| !(**l > 0.0 && **l <= 1.0)) {
        return Err(TheoryError::hypothesis(CHECK, format!("eigenvalue {l} outside (0, 1]")));
    }
    let f = w_spec.to_affine()?;
    let v_inv = inverse(&w_spec.v, "V")?;

    let hat_w = &v_inv * &f.linear * &w_spec.v;
    let hat_w_asymmetry = spectral_norm(&(&hat_w - hat_w.transpose()));
    if hat_w_asymmetry > 1e-9 {
        return Err(TheoryError::hypothesis(CHECK, format!("V^-1 W V is not symmetric ({hat_w_asymmetry:.3e})")));
    }
    let eig = SymmetricEigen::new((&hat_w + hat_w.transpose()) * 0.5).eigenvalues;
    let (hat_w_eig_min, hat_w_eig_max) = (eig.min(), eig.max());
    if !(hat_w_eig_min > 0.0 && hat_w_eig_max <= 1.0 + 1e-9) {
        return Err(TheoryError::hypothesis(
            CHECK,
            format!("V^-1 W V has spectrum [{hat_w_eig_min:.3e}, {hat_w_eig_max:.3e}], not in (0, 1]"),
        ));
    }
    let hat_h = &v_inv * &h.linear * &w_spec.v;
    let hat_h_norm = spectral_norm(&hat_h);
    if hat_h_norm > 1.0 + 1e-9 {
        return Err(TheoryError::hypothesis(CHECK, format!("V^-1 H V has norm {hat_h_norm:.6}, not at most 1")));
    }
    let hat_h_firmly_nonexpansive = spectral_norm(&(&hat_h * 2.0 - DMatrix::identity(n, n))) <= 1.0 + 1e-9;

    let agents: Vec<Box<dyn Agent>> = vec![
        Box::new(AffineAgent::new("F", f.linear.clone(), f.offset.clone())),
        Box::new(AffineAgent::new("H", h.linear.clone(), h.offset.clone())),
    ];
    let start = Image::new(n, 1, x0.as_slice().to_vec())?;
    let report = mace_solve(&agents, &[0.5, 0.5], &start, config)?;
    let trace = report.convergence_trace;
    let decreasing_from = trace.windows(2).rposition(|w| w[1] >= w[0]).map_or(0, |i| i + 1);
    Ok(Theorem3Report {
        hat_w_asymmetry,
        hat_w_eig_min,
        hat_w_eig_max,
        hat_h_norm,
        hat_h_firmly_nonexpansive,
        final_error: trace.last().copied().unwrap_or(f64::NAN),
        iterations: report.iterations_run,
        converged: report.converged,
        decreasing_from,
        consensus: DVector::from_column_slice(report.final_image.data()),
        trace,
    })
}

/// Solver settings for the convergence check: `rho = 1/2`, error below
/// `1e-6` within 1000 iterations, unit noise scale.
pub fn theorem3_config() -> MaceConfig {
    MaceConfig {
        rho: 0.5,
        max_iters: 1000,
        tol: 1e-6,
        sigma_n: 1.0,
    }
}
