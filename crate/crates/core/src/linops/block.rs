use super::{Image, LinopsError, Shape};

/// Block operators between a high-resolution grid and its `factor`-times
/// coarser partner.
///
/// `A` sums each `factor x factor` block, `A^T` replicates each coarse pixel
/// into a block and the block average `A / factor^2` is the forward model.
/// The high-resolution shape must be an exact multiple of the factor so that
/// `A A^T = factor^2 I` holds without padding.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BlockOperator {
    factor: usize,
    hr_shape: Shape,
}

impl BlockOperator {
    pub fn new(factor: usize, hr_shape: Shape) -> Result<Self, LinopsError> {
        if factor == 0 {
            return Err(LinopsError::InvalidFactor(factor));
        }
        let (h, w) = hr_shape;
        if h == 0 || w == 0 || h % factor != 0 || w % factor != 0 {
            return Err(LinopsError::NotDivisible { shape: hr_shape, factor });
        }
        Ok(Self { factor, hr_shape })
    }

    /// Operator whose high-resolution side is `factor` times `lr_shape`.
    pub fn from_lr_shape(factor: usize, lr_shape: Shape) -> Result<Self, LinopsError> {
        if factor == 0 {
            return Err(LinopsError::InvalidFactor(factor));
        }
        Self::new(factor, (lr_shape.0 * factor, lr_shape.1 * factor))
    }

    #[inline]
    pub fn factor(&self) -> usize {
        self.factor
    }

    #[inline]
    pub fn hr_shape(&self) -> Shape {
        self.hr_shape
    }

    #[inline]
    pub fn lr_shape(&self) -> Shape {
        (self.hr_shape.0 / self.factor, self.hr_shape.1 / self.factor)
    }

    fn check_input(&self, img: &Image, expected: Shape) -> Result<(), LinopsError> {
        if img.shape() != expected {
            return Err(LinopsError::ShapeMismatch {
                expected,
                got: img.shape(),
            });
        }
        Ok(())
    }

    /// `A x`: sum over each block.
    pub fn sum(&self, x: &Image) -> Result<Image, LinopsError> {
        self.check_input(x, self.hr_shape)?;
        let l = self.factor;
        let (lh, lw) = self.lr_shape();
        let w = self.hr_shape.1;
        let mut out = vec![0.0; lh * lw];
        let src = x.data();
        for (br, out_row) in out.chunks_exact_mut(lw).enumerate() {
            for r in br * l..(br + 1) * l {
                let row = &src[r * w..(r + 1) * w];
                for (acc, block) in out_row.iter_mut().zip(row.chunks_exact(l)) {
                    *acc += block.iter().sum::<f64>();
                }
            }
        }
        Ok(Image::from_raw((lh, lw), out))
    }

    /// `A^T z`: replicate each coarse pixel into its block.
    pub fn replicate(&self, z: &Image) -> Result<Image, LinopsError> {
        self.check_input(z, self.lr_shape())?;
        let l = self.factor;
        let (h, w) = self.hr_shape;
        let mut out = Vec::with_capacity(h * w);
        for r in 0..h {
            for &v in z.row(r / l) {
                out.extend(std::iter::repeat_n(v, l));
            }
        }
        Ok(Image::from_raw((h, w), out))
    }

    /// `A x / factor^2`: mean over each block.
    pub fn average(&self, x: &Image) -> Result<Image, LinopsError> {
        let norm = 1.0 / (self.factor * self.factor) as f64;
        Ok(self.sum(x)?.scale(norm))
    }
}

pub fn block_sum(x: &Image, factor: usize) -> Result<Image, LinopsError> {
    BlockOperator::new(factor, x.shape())?.sum(x)
}

pub fn block_replicate(z: &Image, factor: usize) -> Result<Image, LinopsError> {
    BlockOperator::from_lr_shape(factor, z.shape())?.replicate(z)
}

pub fn block_average(x: &Image, factor: usize) -> Result<Image, LinopsError> {
    BlockOperator::new(factor, x.shape())?.average(x)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sum_of_small_block() {
        let x = Image::from_rows(&[[1.0, 2.0], [3.0, 5.0]]).unwrap();
        assert_eq!(block_sum(&x, 2).unwrap().data(), &[11.0]);
        assert_eq!(block_average(&x, 2).unwrap().data(), &[2.75]);
        assert_eq!(block_sum(&x, 1).unwrap(), x);
    }

    #[test]
    fn replicate_single_pixel() {
        let z = Image::from_rows(&[[2.0]]).unwrap();
        let up = block_replicate(&z, 2).unwrap();
        assert_eq!(up.shape(), (2, 2));
        assert_eq!(up.data(), &[2.0; 4]);
        assert_eq!(block_replicate(&z, 1).unwrap(), z);
    }

    #[test]
    fn replicate_then_sum_scales_by_factor_squared() {
        let z = Image::from_fn((3, 3), |r, c| (r * 3 + c) as f64 * 0.37 - 1.0);
        let back = block_sum(&block_replicate(&z, 2).unwrap(), 2).unwrap();
        assert_eq!(back, z.scale(4.0));
    }

    #[test]
    fn sum_layout_non_square() {
        let x = Image::from_fn((2, 6), |r, c| (10 * r + c) as f64);
        let s = block_sum(&x, 2).unwrap();
        assert_eq!(s.shape(), (1, 3));
        assert_eq!(s.data(), &[0.0 + 1.0 + 10.0 + 11.0, 2.0 + 3.0 + 12.0 + 13.0, 4.0 + 5.0 + 14.0 + 15.0]);
    }

    #[test]
    fn rejects_indivisible_shapes() {
        let x = Image::zeros((5, 4));
        assert!(matches!(
            block_sum(&x, 2),
            Err(LinopsError::NotDivisible { shape: (5, 4), factor: 2 })
        ));
        assert!(matches!(block_average(&x, 0), Err(LinopsError::InvalidFactor(0))));
        let op = BlockOperator::new(2, (4, 4)).unwrap();
        assert!(matches!(op.replicate(&Image::zeros((3, 2))), Err(LinopsError::ShapeMismatch { .. })));
    }
}
