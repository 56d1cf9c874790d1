use std::io::{Cursor, ErrorKind};
use std::path::Path;

use image::{DynamicImage, ImageBuffer, ImageError, ImageFormat, ImageReader, Luma};

use crate::linops::Image;

use super::PipelineError;

const PNG_SIGNATURE: &[u8] = b"\x89PNG\r\n\x1a\n";

/// Reads a PNG as a grayscale image in `[0, 1]`.
///
/// 8-bit samples are divided by 255 and 16-bit samples by 65535; color
/// inputs are reduced to the mean of their color channels (alpha ignored).
pub fn load_image(path: &Path) -> Result<Image, PipelineError> {
    let bytes = std::fs::read(path).map_err(|source| PipelineError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    if !bytes.starts_with(PNG_SIGNATURE) {
        return Err(PipelineError::UnsupportedFormat {
            path: path.to_path_buf(),
            detail: match image::guess_format(&bytes) {
                Ok(f) => format!("{f:?} images are not supported"),
                Err(_) => "not a PNG file".to_string(),
            },
        });
    }
    let reader = ImageReader::with_format(Cursor::new(bytes), ImageFormat::Png);
    let decoded = reader.decode().map_err(|e| classify(path, e))?;
    to_gray(path, decoded)
}

fn classify(path: &Path, err: ImageError) -> PipelineError {
    match err {
        ImageError::Unsupported(e) => PipelineError::UnsupportedFormat {
            path: path.to_path_buf(),
            detail: e.to_string(),
        },
        ImageError::IoError(e) if e.kind() != ErrorKind::UnexpectedEof => PipelineError::Io {
            path: path.to_path_buf(),
            source: e,
        },
        other => PipelineError::CorruptImage {
            path: path.to_path_buf(),
            detail: other.to_string(),
        },
    }
}

fn to_gray(path: &Path, img: DynamicImage) -> Result<Image, PipelineError> {
    let (w, h) = (img.width() as usize, img.height() as usize);
    let data: Vec<f64> = match img {
        DynamicImage::ImageLuma8(b) => b.into_raw().into_iter().map(|v| v as f64 / 255.0).collect(),
        DynamicImage::ImageLuma16(b) => b.into_raw().into_iter().map(|v| v as f64 / 65535.0).collect(),
        DynamicImage::ImageLumaA8(b) => b.pixels().map(|p| p.0[0] as f64 / 255.0).collect(),
        DynamicImage::ImageLumaA16(b) => b.pixels().map(|p| p.0[0] as f64 / 65535.0).collect(),
        DynamicImage::ImageRgb8(b) => b.pixels().map(|p| mean3(p.0.map(f64::from)) / 255.0).collect(),
        DynamicImage::ImageRgba8(b) => b.pixels().map(|p| mean3([p.0[0], p.0[1], p.0[2]].map(f64::from)) / 255.0).collect(),
        DynamicImage::ImageRgb16(b) => b.pixels().map(|p| mean3(p.0.map(f64::from)) / 65535.0).collect(),
        DynamicImage::ImageRgba16(b) => {
            b.pixels().map(|p| mean3([p.0[0], p.0[1], p.0[2]].map(f64::from)) / 65535.0).collect()
        }
        other => {
            return Err(PipelineError::UnsupportedFormat {
                path: path.to_path_buf(),
                detail: format!("pixel layout {:?}", other.color()),
            })
        }
    };
    Image::new(h, w, data).map_err(|e| PipelineError::CorruptImage {
        path: path.to_path_buf(),
        detail: e.to_string(),
    })
}

fn mean3(c: [f64; 3]) -> f64 {
    (c[0] + c[1] + c[2]) / 3.0
}

/// Writes a 16-bit grayscale PNG after clipping to `[0, 1]`.
pub fn save_image(img: &Image, path: &Path) -> Result<(), PipelineError> {
    let data: Vec<u16> = img.data().iter().map(|v| (v.clamp(0.0, 1.0) * 65535.0).round() as u16).collect();
    let buf: ImageBuffer<Luma<u16>, Vec<u16>> =
        ImageBuffer::from_raw(img.width() as u32, img.height() as u32, data).expect("buffer matches dimensions");
    buf.save_with_format(path, ImageFormat::Png).map_err(|e| match e {
        ImageError::IoError(source) => PipelineError::Io {
            path: path.to_path_buf(),
            source,
        },
        other => PipelineError::Encode {
            path: path.to_path_buf(),
            detail: other.to_string(),
        },
    })
}
