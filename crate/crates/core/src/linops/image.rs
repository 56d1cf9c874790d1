use std::fmt;

use super::LinopsError;

/// (height, width) of an image in pixels.
pub type Shape = (usize, usize);

/// A 2-D grid of real intensities stored row-major.
///
/// Every constructor checks that the buffer length matches the shape and that
/// all values are finite, so downstream code never has to.
#[derive(Clone, PartialEq)]
pub struct Image {
    height: usize,
    width: usize,
    data: Vec<f64>,
}

impl Image {
    pub fn new(height: usize, width: usize, data: Vec<f64>) -> Result<Self, LinopsError> {
        if height == 0 || width == 0 {
            return Err(LinopsError::EmptyImage);
        }
        if data.len() != height * width {
            return Err(LinopsError::DataLength {
                expected: height * width,
                got: data.len(),
            });
        }
        if let Some(index) = data.iter().position(|v| !v.is_finite()) {
            return Err(LinopsError::NonFinite { index });
        }
        Ok(Self { height, width, data })
    }

    /// Builds an image from rows of equal length.
    pub fn from_rows<R: AsRef<[f64]>>(rows: &[R]) -> Result<Self, LinopsError> {
        let height = rows.len();
        let width = rows.first().map_or(0, |r| r.as_ref().len());
        let mut data = Vec::with_capacity(height * width);
        for row in rows {
            let row = row.as_ref();
            if row.len() != width {
                return Err(LinopsError::RaggedRows);
            }
            data.extend_from_slice(row);
        }
        Self::new(height, width, data)
    }

    pub fn zeros(shape: Shape) -> Self {
        Self::constant(shape, 0.0)
    }

    /// Panics if `shape` has a zero dimension or `value` is not finite.
    pub fn constant(shape: Shape, value: f64) -> Self {
        assert!(shape.0 > 0 && shape.1 > 0, "image dimensions must be positive");
        assert!(value.is_finite(), "image values must be finite");
        Self {
            height: shape.0,
            width: shape.1,
            data: vec![value; shape.0 * shape.1],
        }
    }

    /// Builds an image by evaluating `f(row, col)` at every pixel.
    ///
    /// Panics on a zero dimension or a non-finite value.
    pub fn from_fn(shape: Shape, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let (height, width) = shape;
        let mut data = Vec::with_capacity(height * width);
        for r in 0..height {
            for c in 0..width {
                data.push(f(r, c));
            }
        }
        Self::new(height, width, data).expect("from_fn produced an invalid image")
    }

    /// Standard basis image: zero everywhere except a one at flat index `index`.
    pub fn basis(shape: Shape, index: usize) -> Self {
        let mut img = Self::zeros(shape);
        img.data[index] = 1.0;
        img
    }

    pub(crate) fn from_raw(shape: Shape, data: Vec<f64>) -> Self {
        debug_assert_eq!(data.len(), shape.0 * shape.1);
        Self {
            height: shape.0,
            width: shape.1,
            data,
        }
    }

    #[inline]
    pub fn height(&self) -> usize {
        self.height
    }

    #[inline]
    pub fn width(&self) -> usize {
        self.width
    }

    #[inline]
    pub fn shape(&self) -> Shape {
        (self.height, self.width)
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.data.len()
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    #[inline]
    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.data[row * self.width + col]
    }

    pub fn row(&self, row: usize) -> &[f64] {
        &self.data[row * self.width..(row + 1) * self.width]
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn sum(&self) -> f64 {
        self.data.iter().sum()
    }

    pub fn mean(&self) -> f64 {
        self.sum() / self.len() as f64
    }

    pub fn min(&self) -> f64 {
        self.data.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max(&self) -> f64 {
        self.data.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    /// Euclidean norm of the flattened image.
    pub fn norm(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn dot(&self, other: &Image) -> Result<f64, LinopsError> {
        self.check_same_shape(other)?;
        Ok(self.data.iter().zip(&other.data).map(|(a, b)| a * b).sum())
    }

    /// Largest absolute elementwise difference.
    pub fn max_abs_diff(&self, other: &Image) -> Result<f64, LinopsError> {
        self.check_same_shape(other)?;
        Ok(self
            .data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max))
    }

    pub fn check_same_shape(&self, other: &Image) -> Result<(), LinopsError> {
        if self.shape() == other.shape() {
            Ok(())
        } else {
            Err(LinopsError::ShapeMismatch {
                expected: self.shape(),
                got: other.shape(),
            })
        }
    }

    /// Applies `f` to every pixel. The caller guarantees `f` keeps values finite.
    pub fn map(&self, f: impl Fn(f64) -> f64) -> Image {
        Image::from_raw(self.shape(), self.data.iter().map(|&v| f(v)).collect())
    }

    /// Combines two same-shape images pixelwise.
    pub fn zip_map(&self, other: &Image, f: impl Fn(f64, f64) -> f64) -> Result<Image, LinopsError> {
        self.check_same_shape(other)?;
        Ok(Image::from_raw(
            self.shape(),
            self.data.iter().zip(&other.data).map(|(&a, &b)| f(a, b)).collect(),
        ))
    }

    pub fn scale(&self, factor: f64) -> Image {
        self.map(|v| v * factor)
    }

    pub fn add(&self, other: &Image) -> Result<Image, LinopsError> {
        self.zip_map(other, |a, b| a + b)
    }

    pub fn sub(&self, other: &Image) -> Result<Image, LinopsError> {
        self.zip_map(other, |a, b| a - b)
    }

    /// Elementwise `max(v, 0)`.
    pub fn clip_nonnegative(&self) -> Image {
        self.map(|v| v.max(0.0))
    }

    pub fn clip(&self, lo: f64, hi: f64) -> Image {
        self.map(|v| v.clamp(lo, hi))
    }
}

impl fmt::Debug for Image {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.len() <= 64 {
            f.debug_struct("Image")
                .field("shape", &self.shape())
                .field("data", &self.data)
                .finish()
        } else {
            f.debug_struct("Image")
                .field("shape", &self.shape())
                .field("mean", &self.mean())
                .finish_non_exhaustive()
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_bad_buffers() {
        assert!(matches!(
            Image::new(2, 2, vec![0.0; 3]),
            Err(LinopsError::DataLength { expected: 4, got: 3 })
        ));
        assert!(matches!(
            Image::new(1, 2, vec![0.0, f64::NAN]),
            Err(LinopsError::NonFinite { index: 1 })
        ));
        assert!(matches!(Image::new(0, 3, vec![]), Err(LinopsError::EmptyImage)));
        assert!(matches!(
            Image::from_rows(&[vec![1.0, 2.0], vec![3.0]]),
            Err(LinopsError::RaggedRows)
        ));
    }

    #[test]
    fn row_major_layout() {
        let img = Image::from_rows(&[[1.0, 2.0, 3.0], [4.0, 5.0, 6.0]]).unwrap();
        assert_eq!(img.shape(), (2, 3));
        assert_eq!(img.get(1, 0), 4.0);
        assert_eq!(img.row(1), &[4.0, 5.0, 6.0]);
        assert_eq!(img.sum(), 21.0);
    }
}
