use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;

use crate::agents::NoiseParams;
use crate::linops::{block_sum, materialize, BicubicUpsampler, Image, Shape};

use super::affine::{spectral_norm, AffineMap};
use super::TheoryError;

/// Largest dimension a dense instance may have.
pub const MAX_INSTANCE_DIM: usize = 64;

const GRAM_TOL: f64 = 1e-10;

/// Dense quadratic data term `f(x) = (sigma2 / 2) ||y - A x||^2` with a
/// backprojection perturbation `R`.
///
/// `A` is the block-sum operator of an image of shape `shape`, so
/// `A A^T = L^2 I`. With `W = sigma2 A^T A` and `p = sigma2 A^T y`,
/// `grad f(x) = W x - p`.
#[derive(Debug, Clone)]
pub struct MatrixInstance {
    shape: Shape,
    factor: usize,
    a: DMatrix<f64>,
    r_matrix: DMatrix<f64>,
    sigma2: f64,
    y: DVector<f64>,
}

impl MatrixInstance {
    pub fn new(
        shape: Shape,
        factor: usize,
        r_matrix: DMatrix<f64>,
        sigma2: f64,
        y: DVector<f64>,
    ) -> Result<Self, TheoryError> {
        let n = shape.0 * shape.1;
        if n == 0 || n > MAX_INSTANCE_DIM {
            return Err(TheoryError::Dimension(format!("n = {n} outside 1..={MAX_INSTANCE_DIM}")));
        }
        let a = materialize(|x| block_sum(x, factor), shape)?;
        let l2 = (factor * factor) as f64;
        let gram = &a * a.transpose() - DMatrix::identity(a.nrows(), a.nrows()) * l2;
        let gram_err = gram.amax();
        if gram_err > GRAM_TOL {
            return Err(TheoryError::hypothesis("instance", format!("A A^T differs from L^2 I by {gram_err:.3e}")));
        }
        if r_matrix.shape() != (n, n) {
            return Err(TheoryError::Dimension(format!("R is {:?}, expected ({n}, {n})", r_matrix.shape())));
        }
        let dev = spectral_norm(&(&r_matrix - DMatrix::identity(n, n)));
        if !(dev < 1.0) {
            return Err(TheoryError::hypothesis("instance", format!("||R - I|| = {dev:.3e} is not below 1")));
        }
        if !(sigma2.is_finite() && sigma2 >= 0.0) {
            return Err(TheoryError::hypothesis("instance", format!("sigma2 = {sigma2} must be non-negative")));
        }
        if y.len() != a.nrows() {
            return Err(TheoryError::Dimension(format!("y has length {}, expected {}", y.len(), a.nrows())));
        }
        Ok(Self {
            shape,
            factor,
            a,
            r_matrix,
            sigma2,
            y,
        })
    }

    /// Instance matching the data-fidelity agent on block averages `y_avg`.
    ///
    /// The agent's update `x + g A^T (y_avg - A x / L^2)` equals
    /// `x - r grad f(x)` for `sigma2 = (sigma_lambda / sigma_w)^2 / L^4` and
    /// `y = L^2 y_avg`.
    pub fn from_agent_params(
        shape: Shape,
        factor: usize,
        params: &NoiseParams,
        y_avg: &Image,
        r_matrix: DMatrix<f64>,
    ) -> Result<Self, TheoryError> {
        let l2 = (factor * factor) as f64;
        let y = DVector::from_iterator(y_avg.len(), y_avg.data().iter().map(|v| v * l2));
        Self::new(shape, factor, r_matrix, params.sigma2() / (l2 * l2), y)
    }

    /// Perturbation with `R A^T = B` for the bicubic upsampler `B`:
    /// `R = I + (B - A^T) A / L^2`.
    pub fn bicubic_perturbation(shape: Shape, factor: usize) -> Result<DMatrix<f64>, TheoryError> {
        let a = materialize(|x| block_sum(x, factor), shape)?;
        let lr_shape = (shape.0 / factor, shape.1 / factor);
        let up = BicubicUpsampler::new(factor)?;
        let b = materialize(|z| Ok(up.upsample(z)), lr_shape)?;
        let n = shape.0 * shape.1;
        let l2 = (factor * factor) as f64;
        Ok(DMatrix::identity(n, n) + (b - a.transpose()) * &a / l2)
    }

    pub fn shape(&self) -> Shape {
        self.shape
    }

    pub fn factor(&self) -> usize {
        self.factor
    }

    pub fn n(&self) -> usize {
        self.a.ncols()
    }

    pub fn a_mat(&self) -> &DMatrix<f64> {
        &self.a
    }

    pub fn r_matrix(&self) -> &DMatrix<f64> {
        &self.r_matrix
    }

    pub fn sigma2(&self) -> f64 {
        self.sigma2
    }

    pub fn y(&self) -> &DVector<f64> {
        &self.y
    }

    fn l2(&self) -> f64 {
        (self.factor * self.factor) as f64
    }

    /// `1 / (1 + sigma2 L^2)`.
    pub fn r(&self) -> f64 {
        1.0 / (1.0 + self.sigma2 * self.l2())
    }

    /// `sigma2 A^T A`.
    pub fn w(&self) -> DMatrix<f64> {
        self.a.transpose() * &self.a * self.sigma2
    }

    /// `sigma2 A^T y`.
    pub fn p(&self) -> DVector<f64> {
        self.a.transpose() * &self.y * self.sigma2
    }

    /// `grad f` as the affine map `x -> W x - p`.
    pub fn grad_f(&self) -> AffineMap {
        AffineMap::new(self.w(), -self.p())
    }

    /// `||R - I||`.
    pub fn r_deviation(&self) -> f64 {
        spectral_norm(&(&self.r_matrix - DMatrix::identity(self.n(), self.n())))
    }

    /// Orthogonal projector onto `range(A^T)`: `A^T A / L^2`.
    pub fn range_projector(&self) -> DMatrix<f64> {
        self.a.transpose() * &self.a / self.l2()
    }

    /// Orthogonal projector onto `null(A)`.
    pub fn null_projector(&self) -> DMatrix<f64> {
        DMatrix::identity(self.n(), self.n()) - self.range_projector()
    }

    /// Standard update `x - r grad f(x)`.
    pub fn standard_update(&self) -> AffineMap {
        self.relaxed_update(&DMatrix::identity(self.n(), self.n()))
    }

    /// Relaxed update `x - r R grad f(x)`.
    pub fn rap_update(&self) -> AffineMap {
        self.relaxed_update(&self.r_matrix)
    }

    fn relaxed_update(&self, r_mat: &DMatrix<f64>) -> AffineMap {
        let n = self.n();
        let scaled = r_mat * self.r();
        AffineMap::new(DMatrix::identity(n, n) - &scaled * self.w(), &scaled * self.p())
    }

    /// Same instance with another perturbation matrix.
    pub fn with_r_matrix(&self, r_matrix: DMatrix<f64>) -> Result<Self, TheoryError> {
        Self::new(self.shape, self.factor, r_matrix, self.sigma2, self.y.clone())
    }
}

pub(crate) fn gaussian_matrix<G: Rng + ?Sized>(rng: &mut G, rows: usize, cols: usize) -> DMatrix<f64> {
    DMatrix::from_fn(rows, cols, |_, _| rng.sample(StandardNormal))
}

pub(crate) fn gaussian_vector<G: Rng + ?Sized>(rng: &mut G, n: usize) -> DVector<f64> {
    DVector::from_fn(n, |_, _| rng.sample(StandardNormal))
}

/// Random direction `E` with `||E|| = 1`.
pub fn random_unit_direction<G: Rng + ?Sized>(rng: &mut G, n: usize) -> DMatrix<f64> {
    let e = gaussian_matrix(rng, n, n);
    let norm = spectral_norm(&e);
    e / norm
}

/// `I + t E` for a random unit-norm direction `E`, so `||R - I|| = t`.
pub fn random_perturbation<G: Rng + ?Sized>(rng: &mut G, n: usize, t: f64) -> DMatrix<f64> {
    DMatrix::identity(n, n) + random_unit_direction(rng, n) * t
}

/// Random symmetric positive definite matrix with spectrum in `[lo, hi]`.
pub fn random_spd<G: Rng + ?Sized>(rng: &mut G, n: usize, lo: f64, hi: f64) -> DMatrix<f64> {
    let q = random_orthogonal(rng, n);
    let d = DVector::from_fn(n, |_, _| rng.random_range(lo..=hi));
    &q * DMatrix::from_diagonal(&d) * q.transpose()
}

pub fn random_orthogonal<G: Rng + ?Sized>(rng: &mut G, n: usize) -> DMatrix<f64> {
    gaussian_matrix(rng, n, n).qr().q()
}

/// Random instance with `||R - I|| = r_dev` and standard normal `y`.
pub fn random_instance<G: Rng + ?Sized>(
    rng: &mut G,
    shape: Shape,
    factor: usize,
    sigma2: f64,
    r_dev: f64,
) -> Result<MatrixInstance, TheoryError> {
    let n = shape.0 * shape.1;
    let m = n / (factor * factor).max(1);
    let r_matrix = random_perturbation(rng, n, r_dev);
    let y = gaussian_vector(rng, m);
    MatrixInstance::new(shape, factor, r_matrix, sigma2, y)
}
