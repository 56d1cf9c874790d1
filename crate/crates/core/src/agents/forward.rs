use crate::linops::{BicubicUpsampler, BlockOperator, Image};

use super::{Agent, AgentError, AgentKind, NoiseParams};

/// Operator that carries a low-resolution residual back to the fine grid.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Backprojector {
    /// Exact adjoint `A^T` (block replication).
    Replicate,
    /// Relaxed adjoint: cubic-convolution upsampling.
    Bicubic(BicubicUpsampler),
}

impl Backprojector {
    pub fn bicubic(factor: usize) -> Result<Self, AgentError> {
        Ok(Self::Bicubic(BicubicUpsampler::new(factor)?))
    }

    fn apply(&self, op: &BlockOperator, residual: &Image) -> Result<Image, AgentError> {
        match self {
            Self::Replicate => Ok(op.replicate(residual)?),
            Self::Bicubic(up) => {
                if up.factor() != op.factor() {
                    return Err(AgentError::FactorMismatch {
                        expected: op.factor(),
                        got: up.factor(),
                    });
                }
                Ok(up.upsample(residual))
            }
        }
    }
}

fn forward_update(
    x: &Image,
    y: &Image,
    factor: usize,
    params: &NoiseParams,
    backprojector: &Backprojector,
) -> Result<Image, AgentError> {
    let op = BlockOperator::new(factor, x.shape())?;
    if y.shape() != op.lr_shape() {
        return Err(AgentError::Shape {
            expected: op.lr_shape(),
            got: y.shape(),
        });
    }
    let residual = y.sub(&op.average(x)?)?;
    let correction = backprojector.apply(&op, &residual)?;
    let gain = params.gain(factor);
    Ok(x.zip_map(&correction, |xi, ci| (xi + gain * ci).max(0.0))?)
}

/// Closed-form nonnegative proximal map of the block-averaging likelihood:
/// `[x + g A^T (y - A x / L^2)]_+` with `g = sigma_lambda^2 / (sigma_lambda^2 + L^2 sigma_w^2)`.
pub fn data_fidelity_apply(
    x: &Image,
    y: &Image,
    factor: usize,
    params: &NoiseParams,
) -> Result<Image, AgentError> {
    forward_update(x, y, factor, params, &Backprojector::Replicate)
}

/// Relaxed adjoint projection update: the data-fidelity step with `A^T`
/// replaced by the upsampler `B`.
pub fn rap_apply(
    x: &Image,
    y: &Image,
    factor: usize,
    params: &NoiseParams,
    upsampler: &BicubicUpsampler,
) -> Result<Image, AgentError> {
    forward_update(x, y, factor, params, &Backprojector::Bicubic(*upsampler))
}

/// Forward agent bound to one set of measurements.
#[derive(Debug, Clone)]
pub struct ForwardAgent {
    name: String,
    measurements: Image,
    factor: usize,
    params: NoiseParams,
    backprojector: Backprojector,
}

impl ForwardAgent {
    pub fn new(
        measurements: Image,
        factor: usize,
        params: NoiseParams,
        backprojector: Backprojector,
    ) -> Result<Self, AgentError> {
        if factor == 0 {
            return Err(AgentError::InvalidParameter { name: "factor", value: 0.0 });
        }
        if let Backprojector::Bicubic(up) = &backprojector {
            if up.factor() != factor {
                return Err(AgentError::FactorMismatch {
                    expected: factor,
                    got: up.factor(),
                });
            }
        }
        let name = match backprojector {
            Backprojector::Replicate => "data-fidelity",
            Backprojector::Bicubic(_) => "rap",
        };
        Ok(Self {
            name: name.to_string(),
            measurements,
            factor,
            params,
            backprojector,
        })
    }

    /// Standard update using the exact adjoint.
    pub fn standard(measurements: Image, factor: usize, params: NoiseParams) -> Result<Self, AgentError> {
        Self::new(measurements, factor, params, Backprojector::Replicate)
    }

    /// Relaxed adjoint projection with default bicubic upsampling.
    pub fn rap(measurements: Image, factor: usize, params: NoiseParams) -> Result<Self, AgentError> {
        Self::new(measurements, factor, params, Backprojector::bicubic(factor)?)
    }

    pub fn measurements(&self) -> &Image {
        &self.measurements
    }

    pub fn factor(&self) -> usize {
        self.factor
    }

    pub fn params(&self) -> &NoiseParams {
        &self.params
    }

    pub fn backprojector(&self) -> &Backprojector {
        &self.backprojector
    }
}

impl Agent for ForwardAgent {
    fn name(&self) -> &str {
        &self.name
    }

    fn kind(&self) -> AgentKind {
        match self.backprojector {
            Backprojector::Replicate => AgentKind::DataFidelity,
            Backprojector::Bicubic(_) => AgentKind::Rap,
        }
    }

    fn apply(&self, x: &Image) -> Result<Image, AgentError> {
        forward_update(x, &self.measurements, self.factor, &self.params, &self.backprojector)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linops::block_average;

    fn unit_params() -> NoiseParams {
        NoiseParams::new(1.0, 1.0).unwrap()
    }

    #[test]
    fn zero_residual_is_fixed() {
        let x = Image::from_fn((4, 6), |r, c| 0.1 + 0.05 * (r * 6 + c) as f64);
        let y = block_average(&x, 2).unwrap();
        let p = NoiseParams::balanced(0.1, 2).unwrap();
        let out = data_fidelity_apply(&x, &y, 2, &p).unwrap();
        assert!(out.max_abs_diff(&x).unwrap() < 1e-15);
        let up = BicubicUpsampler::new(2).unwrap();
        let out = rap_apply(&x, &y, 2, &p, &up).unwrap();
        assert!(out.max_abs_diff(&x).unwrap() < 1e-15);
    }

    #[test]
    fn zero_start_single_block() {
        // gain = 1 / (1 + 4) and A^T y spreads 1 over the block
        let x = Image::zeros((2, 2));
        let y = Image::from_rows(&[[1.0]]).unwrap();
        let out = data_fidelity_apply(&x, &y, 2, &unit_params()).unwrap();
        for v in out.data() {
            assert!((v - 0.2).abs() < 1e-15);
        }
    }

    #[test]
    fn negative_update_is_clipped() {
        let x = Image::constant((2, 2), -1.0);
        let y = Image::from_rows(&[[0.0]]).unwrap();
        let out = data_fidelity_apply(&x, &y, 2, &unit_params()).unwrap();
        assert_eq!(out.data(), &[0.0; 4]);
    }

    #[test]
    fn binding_clip_differs_from_constrained_minimizer() {
        // One block with mean already equal to y: the unconstrained step is a
        // no-op, so clipping only zeroes the negative pixel. The constrained
        // minimizer of 0.5 (y - mean v)^2 + 0.5 |v - x|^2 instead lowers the
        // free pixels to 54/57 (stationarity 3(u - 1) = 0.75 (0.5 - 0.75 u)).
        let x = Image::from_rows(&[[-1.0, 1.0], [1.0, 1.0]]).unwrap();
        let y = Image::from_rows(&[[0.5]]).unwrap();
        let clipped = data_fidelity_apply(&x, &y, 2, &unit_params()).unwrap();
        assert_eq!(clipped.data(), &[0.0, 1.0, 1.0, 1.0]);

        let u = 54.0 / 57.0;
        let constrained = Image::from_rows(&[[0.0, u], [u, u]]).unwrap();
        let objective = |v: &Image| {
            let mean = v.mean();
            0.5 * (0.5 - mean).powi(2) + 0.5 * v.sub(&x).unwrap().norm().powi(2)
        };
        // KKT: the active pixel's gradient points into the constraint
        assert!(1.0 - 0.25 * (0.5 - 0.75 * u) > 0.0);
        assert!(objective(&constrained) < objective(&clipped) - 1e-3);
        assert!(clipped.max_abs_diff(&constrained).unwrap() > 0.05);
    }

    #[test]
    fn replicate_backprojector_matches_standard_update_bitwise() {
        let x = Image::from_fn((6, 4), |r, c| ((r * 7 + c * 3) % 5) as f64 * 0.2);
        let y = Image::from_fn((3, 2), |r, c| 0.3 + 0.1 * (r + c) as f64);
        let p = NoiseParams::new(0.05, 0.2).unwrap();
        let standard = data_fidelity_apply(&x, &y, 2, &p).unwrap();
        let agent = ForwardAgent::new(y.clone(), 2, p, Backprojector::Replicate).unwrap();
        assert_eq!(agent.apply(&x).unwrap(), standard);
        assert_eq!(agent.kind(), AgentKind::DataFidelity);
    }

    #[test]
    fn shape_errors() {
        let p = unit_params();
        let x = Image::zeros((4, 4));
        assert!(matches!(
            data_fidelity_apply(&x, &Image::zeros((3, 2)), 2, &p),
            Err(AgentError::Shape { expected: (2, 2), got: (3, 2) })
        ));
        assert!(data_fidelity_apply(&Image::zeros((5, 4)), &Image::zeros((2, 2)), 2, &p).is_err());
        let up = BicubicUpsampler::new(4).unwrap();
        assert!(matches!(
            rap_apply(&x, &Image::zeros((2, 2)), 2, &p, &up),
            Err(AgentError::FactorMismatch { expected: 2, got: 4 })
        ));
        assert!(ForwardAgent::new(Image::zeros((2, 2)), 2, p, Backprojector::Bicubic(up)).is_err());
    }
}
