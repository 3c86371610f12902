//! Binary (P5) 8-bit PGM output for display-stage images.

use std::path::Path;

use crate::error::{Error, Result};
use crate::model::{BmodeImage, Stage};
use crate::scalar::Real;

/// Display value in `[0, 1]` to a gray level, rounding half up.
#[inline]
pub fn gray_level(v: f64) -> u8 {
    (v.clamp(0.0, 1.0) * 255.0 + 0.5).floor() as u8
}

/// Encodes a display image; rows are depths, columns lateral positions.
pub fn encode_pgm<T: Real>(img: &BmodeImage<T>) -> Result<Vec<u8>> {
    if img.stage() != Stage::Display {
        return Err(Error::WrongStage {
            expected: Stage::Display.name(),
            found: img.stage().name(),
        });
    }
    let (rows, cols) = img.shape();
    let mut out = format!("P5\n{cols} {rows}\n255\n").into_bytes();
    out.reserve(rows * cols);
    out.extend(img.data().iter().map(|&v| gray_level(v.as_f64())));
    Ok(out)
}

pub fn write_pgm<T: Real>(img: &BmodeImage<T>, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let bytes = encode_pgm(img)?;
    std::fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::ImageGrid;
    use ndarray::Array2;

    fn display(values: &[f64], rows: usize, cols: usize) -> BmodeImage<f64> {
        let x = (0..cols).map(|i| i as f64).collect();
        let z = (0..rows).map(|i| i as f64).collect();
        let data = Array2::from_shape_vec((rows, cols), values.to_vec()).unwrap();
        BmodeImage::new(data, Stage::Display, ImageGrid::new(x, z).unwrap()).unwrap()
    }

    fn payload(bytes: &[u8]) -> &[u8] {
        // header has exactly three newline-terminated fields
        let mut seen = 0;
        let start = bytes
            .iter()
            .position(|&b| {
                seen += (b == b'\n') as usize;
                seen == 3
            })
            .unwrap();
        &bytes[start + 1..]
    }

    #[test]
    fn single_white_pixel() {
        let bytes = encode_pgm(&display(&[1.0], 1, 1)).unwrap();
        assert_eq!(bytes, b"P5\n1 1\n255\n\xff");
    }

    #[test]
    fn half_rounds_up() {
        let bytes = encode_pgm(&display(&[0.0, 0.5], 1, 2)).unwrap();
        assert!(bytes.starts_with(b"P5\n2 1\n255\n"));
        assert_eq!(payload(&bytes), &[0, 128]);
    }

    #[test]
    fn rows_are_depth() {
        let bytes = encode_pgm(&display(&[0.0, 1.0, 1.0, 0.0, 0.0, 0.0], 3, 2)).unwrap();
        assert!(bytes.starts_with(b"P5\n2 3\n255\n"));
        assert_eq!(payload(&bytes), &[0, 255, 255, 0, 0, 0]);
    }

    #[test]
    fn envelope_stage_is_rejected() {
        let grid = ImageGrid::new(vec![0.0], vec![0.0]).unwrap();
        let img = BmodeImage::new(Array2::from_elem((1, 1), 0.3), Stage::Envelope, grid).unwrap();
        assert!(matches!(encode_pgm(&img), Err(Error::WrongStage { .. })));
    }
}
