//! Gaussian blurring, pyramids and multi-scale patch assembly.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::image::Image;
use crate::patch::{normalize_patch, Patch, DEFAULT_EPS};

pub const DEFAULT_SIGMAS: [f64; 3] = [0.0, 1.0, 2.0];
pub const DEFAULT_LEVELS: usize = 3;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "mode")]
pub enum ScaleConfig {
    BlurStack { sigmas: Vec<f64> },
    Pyramid { levels: usize },
}

impl ScaleConfig {
    pub fn blur_stack(sigmas: Vec<f64>) -> Result<Self> {
        if sigmas.is_empty() {
            return Err(Error::config("at least one blur width is required"));
        }
        if sigmas.iter().any(|s| !s.is_finite() || *s < 0.0) {
            return Err(Error::config("blur widths must be finite and nonnegative"));
        }
        if sigmas.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::config("blur widths must be strictly increasing"));
        }
        Ok(ScaleConfig::BlurStack { sigmas })
    }

    pub fn pyramid(levels: usize) -> Result<Self> {
        if levels == 0 {
            return Err(Error::config("pyramid needs at least one level"));
        }
        Ok(ScaleConfig::Pyramid { levels })
    }

    /// Number of scales `M`.
    pub fn scales(&self) -> usize {
        match self {
            ScaleConfig::BlurStack { sigmas } => sigmas.len(),
            ScaleConfig::Pyramid { levels } => *levels,
        }
    }
}

/// Normalized 1-D Gaussian taps over `[-r, r]` with `r = ceil(3 sigma)`.
pub fn gaussian_kernel(sigma: f64) -> Vec<f64> {
    if sigma <= 0.0 {
        return vec![1.0];
    }
    let r = (3.0 * sigma).ceil() as i64;
    let taps: Vec<f64> = (-r..=r)
        .map(|x| (-(x * x) as f64 / (2.0 * sigma * sigma)).exp())
        .collect();
    let s: f64 = taps.iter().sum();
    taps.into_iter().map(|t| t / s).collect()
}

/// Half-sample symmetric reflection of index `i` into `0..n`.
#[inline]
pub(crate) fn reflect(i: i64, n: usize) -> usize {
    let n = n as i64;
    let period = 2 * n;
    let m = i.rem_euclid(period);
    (if m < n { m } else { period - 1 - m }) as usize
}

fn convolve_rows(src: &[f64], w: usize, h: usize, k: &[f64]) -> Vec<f64> {
    let r = (k.len() / 2) as i64;
    let mut out = vec![0.0; w * h];
    for y in 0..h {
        let row = &src[y * w..(y + 1) * w];
        for x in 0..w {
            let mut acc = 0.0;
            for (t, kv) in k.iter().enumerate() {
                acc += kv * row[reflect(x as i64 + t as i64 - r, w)];
            }
            out[y * w + x] = acc;
        }
    }
    out
}

fn convolve_cols(src: &[f64], w: usize, h: usize, k: &[f64]) -> Vec<f64> {
    let r = (k.len() / 2) as i64;
    let mut out = vec![0.0; w * h];
    for y in 0..h {
        for (t, kv) in k.iter().enumerate() {
            let sy = reflect(y as i64 + t as i64 - r, h);
            let src_row = &src[sy * w..(sy + 1) * w];
            for (o, s) in out[y * w..(y + 1) * w].iter_mut().zip(src_row) {
                *o += kv * s;
            }
        }
    }
    out
}

/// Separable Gaussian blur with reflected borders; `sigma == 0` is the identity.
pub fn gaussian_blur(img: &Image, sigma: f64) -> Image {
    if sigma <= 0.0 {
        return img.clone();
    }
    let k = gaussian_kernel(sigma);
    let (w, h) = (img.width(), img.height());
    let mut pixels = Vec::with_capacity(img.pixels().len());
    for c in 0..img.channels() {
        let plane = &img.pixels()[c * w * h..(c + 1) * w * h];
        let tmp = convolve_rows(plane, w, h, &k);
        pixels.extend(convolve_cols(&tmp, w, h, &k).into_iter().map(|v| v.clamp(0.0, 1.0)));
    }
    Image::from_raw(w, h, img.channels(), pixels)
}

fn downsample(img: &Image) -> Image {
    let (w, h) = (img.width(), img.height());
    let (nw, nh) = (w.div_ceil(2), h.div_ceil(2));
    let mut pixels = Vec::with_capacity(nw * nh * img.channels());
    for c in 0..img.channels() {
        for y in 0..nh {
            for x in 0..nw {
                pixels.push(img.get(2 * x, 2 * y, c));
            }
        }
    }
    Image::from_raw(nw, nh, img.channels(), pixels)
}

/// Gaussian pyramid: each level blurs the previous one with sigma 1 and keeps
/// every second pixel. Level `k` has sides `ceil(side / 2^k)`.
pub fn build_pyramid(img: &Image, levels: usize) -> Result<Vec<Image>> {
    if levels == 0 {
        return Err(Error::config("pyramid needs at least one level"));
    }
    let mut out = Vec::with_capacity(levels);
    out.push(img.clone());
    for k in 1..levels {
        let prev = &out[k - 1];
        if prev.width() < 2 || prev.height() < 2 {
            return Err(Error::sizing(format!(
                "{}x{} image cannot hold {levels} pyramid levels",
                img.width(),
                img.height()
            )));
        }
        out.push(downsample(&gaussian_blur(prev, 1.0)));
    }
    Ok(out)
}

/// Center of level `k` corresponding to level-0 coordinate `c`, rounded half up.
#[inline]
pub fn level_center(c: usize, k: usize) -> usize {
    if k == 0 {
        c
    } else {
        (c + (1 << (k - 1))) >> k
    }
}

/// Level-`k` window origin for a patch of side `p` centered on level-0 `c`.
/// Returns `None` when the window leaves a level of length `len`.
pub(crate) fn level_origin(c: usize, k: usize, p: usize, len: usize) -> Option<usize> {
    let ck = level_center(c, k);
    let o = ck.checked_sub(p / 2)?;
    (o + p <= len).then_some(o)
}

/// Joint patch across pyramid levels, each level standardized independently.
#[derive(Clone, Debug, PartialEq)]
pub struct MultiScalePatch {
    pub side: usize,
    pub levels: Vec<Patch>,
}

impl MultiScalePatch {
    pub fn joint(&self) -> Vec<f64> {
        self.levels.iter().flat_map(|p| p.v.iter().copied()).collect()
    }

    pub fn dim(&self) -> usize {
        self.levels.iter().map(Patch::dim).sum()
    }
}

/// Raw (unstandardized) windows across the pyramid around `center`; coarse
/// windows are shifted back inside their level when `clamp` is set.
pub(crate) fn pyramid_windows(
    pyr: &[Image],
    center: (usize, usize),
    p: usize,
    clamp: bool,
) -> Result<Vec<Patch>> {
    let mut out = Vec::with_capacity(pyr.len());
    for (k, level) in pyr.iter().enumerate() {
        if level.width() < p || level.height() < p {
            return Err(Error::sizing(format!(
                "pyramid level {k} is {}x{}, smaller than patch side {p}",
                level.width(),
                level.height()
            )));
        }
        let pick = |c: usize, len: usize| -> Option<usize> {
            match level_origin(c, k, p, len) {
                Some(o) => Some(o),
                None if clamp => {
                    let ck = level_center(c, k) as i64 - (p / 2) as i64;
                    Some(ck.clamp(0, (len - p) as i64) as usize)
                }
                None => None,
            }
        };
        let (ox, oy) = match (pick(center.0, level.width()), pick(center.1, level.height())) {
            (Some(x), Some(y)) => (x, y),
            _ => {
                return Err(Error::sizing(format!(
                    "patch of side {p} centered at {:?} leaves pyramid level {k}",
                    center
                )))
            }
        };
        out.push(Patch::from_window(level, ox, oy, p));
    }
    Ok(out)
}

/// Extracts the multi-scale patch centered on level-0 coordinates `center`.
pub fn multiscale_patch(pyr: &[Image], center: (usize, usize), p: usize) -> Result<MultiScalePatch> {
    let raw = pyramid_windows(pyr, center, p, false)?;
    Ok(MultiScalePatch {
        side: p,
        levels: raw
            .into_iter()
            .map(|mut patch| {
                patch.v = normalize_patch(&patch.v, DEFAULT_EPS);
                patch
            })
            .collect(),
    })
}

/// Level-0 origins along an axis of length `len` whose centered windows fit
/// at every level of a pyramid with `levels` levels.
pub(crate) fn admissible_origins(len: usize, p: usize, levels: usize) -> Vec<usize> {
    if len < p {
        return Vec::new();
    }
    let mut lens = vec![len];
    for _ in 1..levels {
        let last = *lens.last().unwrap();
        lens.push(last.div_ceil(2));
    }
    (0..=len - p)
        .filter(|&o| {
            let c = o + p / 2;
            lens.iter()
                .enumerate()
                .all(|(k, &l)| level_origin(c, k, p, l).is_some())
        })
        .collect()
}
