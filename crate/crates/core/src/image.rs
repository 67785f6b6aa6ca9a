//! Dense floating-point images.

use crate::error::{Error, Result};

/// ITU-R BT.601 luma weights.
pub const LUMA_WEIGHTS: [f64; 3] = [0.299, 0.587, 0.114];

/// A planar image with intensities in `[0, 1]`.
///
/// Pixels are stored plane by plane, each plane row-major, so a gray image is
/// simply `width * height` values.
#[derive(Clone, Debug, PartialEq)]
pub struct Image {
    width: usize,
    height: usize,
    channels: usize,
    pixels: Vec<f64>,
}

impl Image {
    pub fn new(width: usize, height: usize, channels: usize, pixels: Vec<f64>) -> Result<Self> {
        if channels != 1 && channels != 3 {
            return Err(Error::config(format!("unsupported channel count {channels}")));
        }
        if width == 0 || height == 0 {
            return Err(Error::sizing("image must have nonzero width and height"));
        }
        if pixels.len() != width * height * channels {
            return Err(Error::sizing(format!(
                "pixel buffer has {} values, expected {}x{}x{}",
                pixels.len(),
                width,
                height,
                channels
            )));
        }
        if let Some(i) = pixels.iter().position(|p| !p.is_finite() || *p < 0.0 || *p > 1.0) {
            return Err(Error::Numerical(format!(
                "pixel {i} has value {} outside [0, 1]",
                pixels[i]
            )));
        }
        Ok(Self {
            width,
            height,
            channels,
            pixels,
        })
    }

    /// Builds a gray image, clamping every value produced by `f(x, y)` into `[0, 1]`.
    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut pixels = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                pixels.push(f(x, y).clamp(0.0, 1.0));
            }
        }
        Self {
            width,
            height,
            channels: 1,
            pixels,
        }
    }

    pub fn constant(width: usize, height: usize, channels: usize, value: f64) -> Self {
        Self {
            width,
            height,
            channels,
            pixels: vec![value.clamp(0.0, 1.0); width * height * channels],
        }
    }

    /// Stacks gray planes into one image; all planes must share a size.
    pub fn from_planes(planes: &[Image]) -> Result<Self> {
        let first = planes
            .first()
            .ok_or_else(|| Error::config("no planes given"))?;
        let mut pixels = Vec::with_capacity(first.plane_len() * planes.len());
        for p in planes {
            if p.width != first.width || p.height != first.height || p.channels != 1 {
                return Err(Error::sizing("planes must be gray and share one size"));
            }
            pixels.extend_from_slice(&p.pixels);
        }
        Image::new(first.width, first.height, planes.len(), pixels)
    }

    pub(crate) fn from_raw(width: usize, height: usize, channels: usize, pixels: Vec<f64>) -> Self {
        debug_assert_eq!(pixels.len(), width * height * channels);
        Self {
            width,
            height,
            channels,
            pixels,
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn pixels(&self) -> &[f64] {
        &self.pixels
    }

    fn plane_len(&self) -> usize {
        self.width * self.height
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize, c: usize) -> f64 {
        self.pixels[c * self.plane_len() + y * self.width + x]
    }

    pub fn plane(&self, c: usize) -> Image {
        let n = self.plane_len();
        Image::from_raw(
            self.width,
            self.height,
            1,
            self.pixels[c * n..(c + 1) * n].to_vec(),
        )
    }

    pub fn planes(&self) -> Vec<Image> {
        (0..self.channels).map(|c| self.plane(c)).collect()
    }

    /// Rotates the image by 90 degrees counter-clockwise.
    pub fn rotate90(&self) -> Image {
        let (w, h) = (self.width, self.height);
        let mut pixels = vec![0.0; self.pixels.len()];
        for c in 0..self.channels {
            for y in 0..h {
                for x in 0..w {
                    // (x, y) -> (y, w - 1 - x) in a h-wide, w-tall image
                    let (nx, ny) = (y, w - 1 - x);
                    pixels[c * w * h + ny * h + nx] = self.get(x, y, c);
                }
            }
        }
        Image::from_raw(h, w, self.channels, pixels)
    }

    pub fn mean(&self) -> f64 {
        self.pixels.iter().sum::<f64>() / self.pixels.len() as f64
    }

    pub fn variance(&self) -> f64 {
        let m = self.mean();
        self.pixels.iter().map(|p| (p - m) * (p - m)).sum::<f64>() / self.pixels.len() as f64
    }
}

/// Converts an RGB image to a single luma plane. Gray input is returned as is.
pub fn to_grayscale(img: &Image) -> Image {
    if img.channels() == 1 {
        return img.clone();
    }
    let n = img.width * img.height;
    let pixels = (0..n)
        .map(|i| {
            let v = LUMA_WEIGHTS[0] * img.pixels[i]
                + LUMA_WEIGHTS[1] * img.pixels[n + i]
                + LUMA_WEIGHTS[2] * img.pixels[2 * n + i];
            v.clamp(0.0, 1.0)
        })
        .collect();
    Image::from_raw(img.width, img.height, 1, pixels)
}
