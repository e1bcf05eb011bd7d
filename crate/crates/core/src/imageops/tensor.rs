use std::path::Path;

use crate::error::{Error, Result};

/// Row-major, interleaved 8-bit RGB raster.
#[derive(Clone, PartialEq, Eq)]
pub struct ImageTensor {
    width: usize,
    height: usize,
    data: Vec<u8>,
}

impl std::fmt::Debug for ImageTensor {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("ImageTensor")
            .field("width", &self.width)
            .field("height", &self.height)
            .finish_non_exhaustive()
    }
}

impl ImageTensor {
    pub const CHANNELS: usize = 3;

    pub fn new(width: usize, height: usize, data: Vec<u8>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::InvalidArgument(format!(
                "image dimensions must be non-zero, got {width}x{height}"
            )));
        }
        if data.len() != width * height * Self::CHANNELS {
            return Err(Error::InvalidArgument(format!(
                "image data length {} does not match {width}x{height}x3",
                data.len()
            )));
        }
        Ok(Self {
            width,
            height,
            data,
        })
    }

    pub fn filled(width: usize, height: usize, rgb: [u8; 3]) -> Self {
        assert!(width > 0 && height > 0, "image dimensions must be non-zero");
        let data = rgb
            .iter()
            .copied()
            .cycle()
            .take(width * height * Self::CHANNELS)
            .collect();
        Self {
            width,
            height,
            data,
        }
    }

    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> [u8; 3]) -> Self {
        assert!(width > 0 && height > 0, "image dimensions must be non-zero");
        let mut data = Vec::with_capacity(width * height * Self::CHANNELS);
        for y in 0..height {
            for x in 0..width {
                data.extend_from_slice(&f(x, y));
            }
        }
        Self {
            width,
            height,
            data,
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn data(&self) -> &[u8] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [u8] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<u8> {
        self.data
    }

    #[inline]
    pub fn pixel(&self, x: usize, y: usize) -> [u8; 3] {
        let i = (y * self.width + x) * 3;
        [self.data[i], self.data[i + 1], self.data[i + 2]]
    }

    #[inline]
    pub fn set_pixel(&mut self, x: usize, y: usize, rgb: [u8; 3]) {
        let i = (y * self.width + x) * 3;
        self.data[i..i + 3].copy_from_slice(&rgb);
    }

    /// Planar CHW floats scaled by 1/255, appended to `out`.
    pub fn write_chw_normalized<T: num_traits::Float>(&self, out: &mut Vec<T>) {
        let plane = self.width * self.height;
        let start = out.len();
        out.resize(start + plane * 3, T::zero());
        let scale = T::from(1.0 / 255.0).unwrap();
        for (p, px) in self.data.chunks_exact(3).enumerate() {
            for c in 0..3 {
                out[start + c * plane + p] = T::from(px[c]).unwrap() * scale;
            }
        }
    }

    pub fn load_png(path: &Path) -> Result<Self> {
        let img = image::open(path).map_err(|source| Error::Image {
            path: path.to_path_buf(),
            source,
        })?;
        let rgb = img.to_rgb8();
        let (w, h) = rgb.dimensions();
        Self::new(w as usize, h as usize, rgb.into_raw())
    }

    pub fn save_png(&self, path: &Path) -> Result<()> {
        let buf = image::RgbImage::from_raw(self.width as u32, self.height as u32, self.data.clone())
            .expect("length checked at construction");
        buf.save_with_format(path, image::ImageFormat::Png)
            .map_err(|source| Error::Image {
                path: path.to_path_buf(),
                source,
            })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_bad_lengths() {
        assert!(ImageTensor::new(2, 2, vec![0; 11]).is_err());
        assert!(ImageTensor::new(0, 2, vec![]).is_err());
        assert!(ImageTensor::new(2, 2, vec![0; 12]).is_ok());
    }

    #[test]
    fn chw_layout() {
        let img = ImageTensor::new(2, 1, vec![255, 0, 51, 0, 255, 102]).unwrap();
        let mut out: Vec<f64> = Vec::new();
        img.write_chw_normalized(&mut out);
        assert_eq!(out, vec![1.0, 0.0, 0.0, 1.0, 0.2, 0.4]);
    }

    #[test]
    fn png_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("a.png");
        let img = ImageTensor::from_fn(5, 3, |x, y| [x as u8 * 40, y as u8 * 60, 7]);
        img.save_png(&path).unwrap();
        assert_eq!(ImageTensor::load_png(&path).unwrap(), img);
    }
}
