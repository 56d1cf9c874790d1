use nalgebra::{DMatrix, DVector, SymmetricEigen};

use super::TheoryError;

/// Spectral norm (largest singular value).
pub fn spectral_norm(m: &DMatrix<f64>) -> f64 {
    if m.is_empty() {
        return 0.0;
    }
    m.singular_values().max()
}

/// Smallest eigenvalue of `(m + m^T) / 2`.
pub fn min_symmetric_eigenvalue(m: &DMatrix<f64>) -> f64 {
    let sym = (m + m.transpose()) * 0.5;
    SymmetricEigen::new(sym).eigenvalues.min()
}

pub(crate) fn inverse(m: &DMatrix<f64>, what: &'static str) -> Result<DMatrix<f64>, TheoryError> {
    m.clone().lu().try_inverse().ok_or(TheoryError::Singular(what))
}

pub(crate) fn solve(m: &DMatrix<f64>, b: &DVector<f64>, what: &'static str) -> Result<DVector<f64>, TheoryError> {
    m.clone().lu().solve(b).ok_or(TheoryError::Singular(what))
}

/// `x -> linear * x + offset` on R^n.
#[derive(Debug, Clone, PartialEq)]
pub struct AffineMap {
    pub linear: DMatrix<f64>,
    pub offset: DVector<f64>,
}

impl AffineMap {
    pub fn new(linear: DMatrix<f64>, offset: DVector<f64>) -> Self {
        assert!(linear.is_square(), "affine map needs a square matrix");
        assert_eq!(linear.nrows(), offset.len(), "offset length must match the matrix");
        Self { linear, offset }
    }

    pub fn identity(n: usize) -> Self {
        Self::new(DMatrix::identity(n, n), DVector::zeros(n))
    }

    pub fn linear_only(linear: DMatrix<f64>) -> Self {
        let n = linear.nrows();
        Self::new(linear, DVector::zeros(n))
    }

    pub fn dim(&self) -> usize {
        self.offset.len()
    }

    pub fn apply(&self, x: &DVector<f64>) -> DVector<f64> {
        &self.linear * x + &self.offset
    }

    /// `self ∘ inner`.
    pub fn compose(&self, inner: &AffineMap) -> AffineMap {
        AffineMap::new(&self.linear * &inner.linear, &self.linear * &inner.offset + &self.offset)
    }

    /// Inverse map; fails when the linear part is singular.
    pub fn inverse(&self) -> Result<AffineMap, TheoryError> {
        let inv = inverse(&self.linear, "affine map")?;
        let offset = -(&inv * &self.offset);
        Ok(AffineMap::new(inv, offset))
    }

    /// `I + self`.
    pub fn plus_identity(&self) -> AffineMap {
        let n = self.dim();
        AffineMap::new(&self.linear + DMatrix::identity(n, n), self.offset.clone())
    }

    /// `M ∘ self` for a matrix `M`.
    pub fn premultiply(&self, m: &DMatrix<f64>) -> AffineMap {
        AffineMap::new(m * &self.linear, m * &self.offset)
    }

    /// Largest of the spectral norm of the linear-part difference and the
    /// Euclidean norm of the offset difference.
    pub fn discrepancy(&self, other: &AffineMap) -> f64 {
        let lin = spectral_norm(&(&self.linear - &other.linear));
        let off = (&self.offset - &other.offset).norm();
        lin.max(off)
    }

    /// Lipschitz constant: spectral norm of the linear part.
    pub fn lipschitz(&self) -> f64 {
        spectral_norm(&self.linear)
    }
}

/// Affine operator `phi(x) = P x + c` with `P` symmetric positive definite.
#[derive(Debug, Clone, PartialEq)]
pub struct MonotoneOperatorSpec {
    phi: AffineMap,
    lipschitz_k: f64,
    strong_m: f64,
}

const SYMMETRY_TOL: f64 = 1e-12;

impl MonotoneOperatorSpec {
    pub fn new(p: DMatrix<f64>, c: DVector<f64>) -> Result<Self, TheoryError> {
        if !p.is_square() || p.nrows() != c.len() {
            return Err(TheoryError::Dimension(format!(
                "operator matrix {:?} with offset of length {}",
                p.shape(),
                c.len()
            )));
        }
        let asym = spectral_norm(&(&p - p.transpose()));
        if asym > SYMMETRY_TOL * (1.0 + spectral_norm(&p)) {
            return Err(TheoryError::hypothesis("monotone operator", format!("P is not symmetric (asymmetry {asym:.3e})")));
        }
        let eig = SymmetricEigen::new((&p + p.transpose()) * 0.5).eigenvalues;
        let (m, k) = (eig.min(), eig.max());
        if !(m > 0.0) {
            return Err(TheoryError::hypothesis(
                "monotone operator",
                format!("P is not positive definite (smallest eigenvalue {m:.3e})"),
            ));
        }
        Ok(Self {
            phi: AffineMap::new(p, c),
            lipschitz_k: k,
            strong_m: m,
        })
    }

    pub fn phi(&self) -> &AffineMap {
        &self.phi
    }

    pub fn lipschitz_k(&self) -> f64 {
        self.lipschitz_k
    }

    pub fn strong_m(&self) -> f64 {
        self.strong_m
    }

    pub fn dim(&self) -> usize {
        self.phi.dim()
    }
}

/// `(I + phi)^{-1}`, i.e. `x -> (I + P)^{-1} (x - c)`.
pub fn resolvent(spec: &MonotoneOperatorSpec) -> AffineMap {
    resolvent_of(spec.phi()).expect("I + P is invertible for positive definite P")
}

/// `(I + phi)^{-1}` for any affine `phi` with `I + P` invertible.
pub fn resolvent_of(phi: &AffineMap) -> Result<AffineMap, TheoryError> {
    phi.plus_identity().inverse()
}
