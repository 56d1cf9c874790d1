use nalgebra::DMatrix;

use super::{Image, LinopsError, Shape};

/// Largest pixel count, on either side of an operator, that [`materialize`]
/// will turn into a dense matrix.
pub const MAX_DENSE_PIXELS: usize = 64 * 64;

/// Dense matrix of a linear image operator.
///
/// Column `j` is `op` applied to the `j`-th standard basis image of
/// `in_shape`, with images flattened row-major.
pub fn materialize<F>(op: F, in_shape: Shape) -> Result<DMatrix<f64>, LinopsError>
where
    F: Fn(&Image) -> Result<Image, LinopsError>,
{
    let n = in_shape.0 * in_shape.1;
    if n == 0 || n > MAX_DENSE_PIXELS {
        return Err(LinopsError::TooLargeForDense { pixels: n, limit: MAX_DENSE_PIXELS });
    }
    let first = op(&Image::basis(in_shape, 0))?;
    let m = first.len();
    if m > MAX_DENSE_PIXELS {
        return Err(LinopsError::TooLargeForDense { pixels: m, limit: MAX_DENSE_PIXELS });
    }
    let mut mat = DMatrix::zeros(m, n);
    mat.column_mut(0).copy_from_slice(first.data());
    for j in 1..n {
        let col = op(&Image::basis(in_shape, j))?;
        if col.len() != m {
            return Err(LinopsError::DataLength { expected: m, got: col.len() });
        }
        mat.column_mut(j).copy_from_slice(col.data());
    }
    Ok(mat)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linops::{bicubic_upsample, block_replicate, block_sum};

    #[test]
    fn block_sum_2x2_is_all_ones_row() {
        let a = materialize(|x| block_sum(x, 2), (2, 2)).unwrap();
        assert_eq!(a.shape(), (1, 4));
        assert!(a.iter().all(|&v| v == 1.0));
    }

    #[test]
    fn replicate_1x1_is_all_ones_column() {
        let at = materialize(|z| block_replicate(z, 2), (1, 1)).unwrap();
        assert_eq!(at.shape(), (4, 1));
        assert!(at.iter().all(|&v| v == 1.0));
    }

    #[test]
    fn bicubic_rows_sum_to_one() {
        let b = materialize(|z| bicubic_upsample(z, 2), (4, 4)).unwrap();
        assert_eq!(b.shape(), (64, 16));
        for row in b.row_iter() {
            assert!((row.sum() - 1.0).abs() < 1e-10);
        }
    }

    #[test]
    fn refuses_oversized_operators() {
        let err = materialize(|x| Ok(x.clone()), (65, 64)).unwrap_err();
        assert!(matches!(err, LinopsError::TooLargeForDense { pixels: 4160, .. }));
        let err = materialize(|z| bicubic_upsample(z, 2), (64, 64)).unwrap_err();
        assert!(matches!(err, LinopsError::TooLargeForDense { .. }));
    }
}
