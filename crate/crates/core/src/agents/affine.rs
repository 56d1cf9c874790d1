use nalgebra::{DMatrix, DVector};

use crate::linops::Image;

use super::{Agent, AgentError, AgentKind};

/// `x -> W x + q` on row-major flattened images.
#[derive(Debug, Clone)]
pub struct AffineAgent {
    name: String,
    linear: DMatrix<f64>,
    offset: DVector<f64>,
}

impl AffineAgent {
    /// Panics if `linear` is not square or `offset` has the wrong length.
    pub fn new(name: impl Into<String>, linear: DMatrix<f64>, offset: DVector<f64>) -> Self {
        assert!(linear.is_square(), "affine agent needs a square matrix");
        assert_eq!(linear.nrows(), offset.len(), "offset length must match the matrix");
        Self {
            name: name.into(),
            linear,
            offset,
        }
    }

    pub fn identity(n: usize) -> Self {
        Self::new("identity", DMatrix::identity(n, n), DVector::zeros(n))
    }

    pub fn linear(&self) -> &DMatrix<f64> {
        &self.linear
    }

    pub fn offset(&self) -> &DVector<f64> {
        &self.offset
    }
}

impl Agent for AffineAgent {
    fn name(&self) -> &str {
        &self.name
    }

    fn kind(&self) -> AgentKind {
        AgentKind::Generic
    }

    fn apply(&self, x: &Image) -> Result<Image, AgentError> {
        if x.len() != self.offset.len() {
            return Err(AgentError::Custom {
                name: self.name.clone(),
                message: format!("expects {} pixels, got {}", self.offset.len(), x.len()),
            });
        }
        let v = DVector::from_column_slice(x.data());
        let out = &self.linear * v + &self.offset;
        Ok(Image::new(x.height(), x.width(), out.as_slice().to_vec())?)
    }
}

/// Wraps a closure as an agent.
pub struct FnAgent<F> {
    name: String,
    f: F,
}

impl<F> FnAgent<F>
where
    F: Fn(&Image) -> Image + Send + Sync,
{
    pub fn new(name: impl Into<String>, f: F) -> Self {
        Self { name: name.into(), f }
    }
}

impl<F> Agent for FnAgent<F>
where
    F: Fn(&Image) -> Image + Send + Sync,
{
    fn name(&self) -> &str {
        &self.name
    }

    fn kind(&self) -> AgentKind {
        AgentKind::Generic
    }

    fn apply(&self, x: &Image) -> Result<Image, AgentError> {
        let out = (self.f)(x);
        x.check_same_shape(&out)?;
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn affine_apply() {
        let w = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 0.0, 3.0]);
        let q = DVector::from_vec(vec![0.5, -1.0]);
        let agent = AffineAgent::new("a", w, q);
        let x = Image::from_rows(&[[1.0, 1.0]]).unwrap();
        assert_eq!(agent.apply(&x).unwrap().data(), &[3.5, 2.0]);
        assert!(agent.apply(&Image::zeros((1, 3))).is_err());
    }

    #[test]
    fn fn_agent_checks_shape() {
        let bad = FnAgent::new("bad", |_x: &Image| Image::zeros((1, 1)));
        assert!(bad.apply(&Image::zeros((2, 2))).is_err());
        let half = FnAgent::new("half", |x: &Image| x.scale(0.5));
        assert_eq!(half.apply(&Image::constant((2, 2), 1.0)).unwrap().data(), &[0.5; 4]);
    }
}
