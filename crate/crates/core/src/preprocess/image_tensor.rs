use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Planar RGB image (`3 x height x width`, channel-major).
///
/// Raw images hold values in `[0, 1]`; after normalisation values are
/// arbitrary reals.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImageTensor {
    pub height: usize,
    pub width: usize,
    pub data: Vec<f64>,
}

impl ImageTensor {
    pub const CHANNELS: usize = 3;

    pub fn new(height: usize, width: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != Self::CHANNELS * height * width {
            return Err(Error::ShapeMismatch {
                expected: format!("3x{height}x{width} = {}", 3 * height * width),
                actual: data.len().to_string(),
            });
        }
        Ok(ImageTensor {
            height,
            width,
            data,
        })
    }

    pub fn filled(height: usize, width: usize, value: f64) -> Self {
        ImageTensor {
            height,
            width,
            data: vec![value; Self::CHANNELS * height * width],
        }
    }

    pub fn is_empty(&self) -> bool {
        self.height == 0 || self.width == 0
    }

    #[inline]
    pub fn at(&self, c: usize, y: usize, x: usize) -> f64 {
        self.data[(c * self.height + y) * self.width + x]
    }

    #[inline]
    pub fn at_mut(&mut self, c: usize, y: usize, x: usize) -> &mut f64 {
        &mut self.data[(c * self.height + y) * self.width + x]
    }

    pub fn channel(&self, c: usize) -> &[f64] {
        let n = self.height * self.width;
        &self.data[c * n..(c + 1) * n]
    }

    pub fn from_rgb8(img: &image::RgbImage) -> Self {
        let (w, h) = (img.width() as usize, img.height() as usize);
        let mut t = ImageTensor::filled(h, w, 0.0);
        for (x, y, px) in img.enumerate_pixels() {
            for c in 0..3 {
                *t.at_mut(c, y as usize, x as usize) = f64::from(px[c]) / 255.0;
            }
        }
        t
    }

    /// Quantises `[0, 1]` values to 8-bit RGB (values are clamped).
    pub fn to_rgb8(&self) -> image::RgbImage {
        image::RgbImage::from_fn(self.width as u32, self.height as u32, |x, y| {
            let mut px = [0u8; 3];
            for (c, p) in px.iter_mut().enumerate() {
                let v = self.at(c, y as usize, x as usize).clamp(0.0, 1.0);
                *p = (v * 255.0).round() as u8;
            }
            image::Rgb(px)
        })
    }

    pub fn load_png(path: &Path) -> Result<Self> {
        let img = image::open(path).map_err(|e| Error::Image {
            path: path.to_path_buf(),
            message: e.to_string(),
        })?;
        Ok(Self::from_rgb8(&img.to_rgb8()))
    }

    pub fn mean(&self) -> f64 {
        self.data.iter().sum::<f64>() / self.data.len() as f64
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn png_round_trip_is_exact_on_8bit_values() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("x.png");
        let mut t = ImageTensor::filled(3, 5, 0.0);
        for (i, v) in t.data.iter_mut().enumerate() {
            *v = (i % 256) as f64 / 255.0;
        }
        t.to_rgb8().save(&path).unwrap();
        let back = ImageTensor::load_png(&path).unwrap();
        assert_eq!(back.height, 3);
        assert_eq!(back.width, 5);
        for (a, b) in t.data.iter().zip(&back.data) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn rejects_wrong_length() {
        assert!(ImageTensor::new(2, 2, vec![0.0; 11]).is_err());
    }
}
