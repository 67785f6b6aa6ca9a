//! Patch extraction and per-patch preprocessing.

use nalgebra::{DMatrix, SymmetricEigen};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::image::Image;
use crate::rng::seeded;

/// Default variance floor for [`normalize_patch`].
pub const DEFAULT_EPS: f64 = 1e-8;

/// A square patch flattened channel-major, then row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct Patch {
    pub side: usize,
    pub channels: usize,
    pub v: Vec<f64>,
}

impl Patch {
    pub fn dim(&self) -> usize {
        self.v.len()
    }

    /// Copies the `side`-wide window at `(x0, y0)` out of `img`.
    pub fn from_window(img: &Image, x0: usize, y0: usize, side: usize) -> Patch {
        let mut v = Vec::with_capacity(side * side * img.channels());
        for c in 0..img.channels() {
            for y in y0..y0 + side {
                for x in x0..x0 + side {
                    v.push(img.get(x, y, c));
                }
            }
        }
        Patch {
            side,
            channels: img.channels(),
            v,
        }
    }
}

/// Patches taken on a regular grid of origins.
#[derive(Clone, Debug)]
pub struct PatchGrid {
    pub stride: usize,
    pub rows: usize,
    pub cols: usize,
    /// `(x, y)` of each patch's top-left corner, row-major.
    pub origins: Vec<(usize, usize)>,
    pub patches: Vec<Patch>,
}

fn check_fits(img: &Image, p: usize, what: &str) -> Result<()> {
    if p == 0 {
        return Err(Error::config("patch side must be positive"));
    }
    if img.width() < p || img.height() < p {
        return Err(Error::sizing(format!(
            "{what} is {}x{}, smaller than patch side {p}",
            img.width(),
            img.height()
        )));
    }
    Ok(())
}

/// Origins `0, stride, 2*stride, ...` that keep a patch of side `p` inside `len`.
pub fn grid_positions(len: usize, p: usize, stride: usize) -> Vec<usize> {
    (0..=(len - p)).step_by(stride).collect()
}

pub fn extract_grid(img: &Image, p: usize, stride: usize) -> Result<PatchGrid> {
    if stride == 0 {
        return Err(Error::config("stride must be at least 1"));
    }
    check_fits(img, p, "image")?;
    let xs = grid_positions(img.width(), p, stride);
    let ys = grid_positions(img.height(), p, stride);
    let mut origins = Vec::with_capacity(xs.len() * ys.len());
    let mut patches = Vec::with_capacity(xs.len() * ys.len());
    for &y in &ys {
        for &x in &xs {
            origins.push((x, y));
            patches.push(Patch::from_window(img, x, y, p));
        }
    }
    Ok(PatchGrid {
        stride,
        rows: ys.len(),
        cols: xs.len(),
        origins,
        patches,
    })
}

/// Draws `n` patches uniformly over images and then over valid origins.
pub fn sample_random_patches(images: &[Image], p: usize, n: usize, seed: u64) -> Result<Vec<Patch>> {
    let origins = sample_origins(images, n, seed, |img| {
        let xs: Vec<usize> = (0..=img.width().saturating_sub(p)).collect();
        let ys: Vec<usize> = (0..=img.height().saturating_sub(p)).collect();
        (xs, ys)
    }, p)?;
    Ok(origins
        .into_iter()
        .map(|(i, x, y)| Patch::from_window(&images[i], x, y, p))
        .collect())
}

/// Shared sampler: picks an image, then an index into that image's list of
/// admissible x and y origins. Returns `(image index, x, y)`.
pub(crate) fn sample_origins(
    images: &[Image],
    n: usize,
    seed: u64,
    admissible: impl Fn(&Image) -> (Vec<usize>, Vec<usize>),
    p: usize,
) -> Result<Vec<(usize, usize, usize)>> {
    if n == 0 {
        return Err(Error::config("must request at least one patch"));
    }
    if images.is_empty() {
        return Err(Error::config("no images to sample patches from"));
    }
    let mut ranges = Vec::with_capacity(images.len());
    for (i, img) in images.iter().enumerate() {
        check_fits(img, p, &format!("image {i}"))?;
        let (xs, ys) = admissible(img);
        if xs.is_empty() || ys.is_empty() {
            return Err(Error::sizing(format!(
                "image {i} ({}x{}) has no admissible origin for patch side {p}",
                img.width(),
                img.height()
            )));
        }
        ranges.push((xs, ys));
    }
    let mut rng = seeded(seed);
    Ok((0..n)
        .map(|_| {
            let i = rng.random_range(0..images.len());
            let (xs, ys) = &ranges[i];
            let x = xs[rng.random_range(0..xs.len())];
            let y = ys[rng.random_range(0..ys.len())];
            (i, x, y)
        })
        .collect())
}

/// Standardizes `v` to zero mean and unit (population) standard deviation.
/// Patches whose standard deviation is at most `eps` become all-zero.
pub fn normalize_patch(v: &[f64], eps: f64) -> Vec<f64> {
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    let var = v.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n;
    let sd = var.sqrt();
    if sd <= eps {
        return vec![0.0; v.len()];
    }
    v.iter().map(|x| (x - mean) / sd).collect()
}

/// ZCA whitening transform fitted on standardized patches.
#[derive(Clone, Debug, PartialEq)]
pub struct Zca {
    pub mean: Vec<f64>,
    /// Row-major `D x D` symmetric whitening matrix.
    pub matrix: Vec<f64>,
}

impl Zca {
    pub fn fit(patches: &[Vec<f64>], reg: f64) -> Result<Zca> {
        let d = patches
            .first()
            .map(Vec::len)
            .ok_or_else(|| Error::config("cannot fit whitening on zero patches"))?;
        let n = patches.len() as f64;
        let mut mean = vec![0.0; d];
        for p in patches {
            for (m, x) in mean.iter_mut().zip(p) {
                *m += x / n;
            }
        }
        let mut cov = DMatrix::<f64>::zeros(d, d);
        for p in patches {
            let c: Vec<f64> = p.iter().zip(&mean).map(|(x, m)| x - m).collect();
            for i in 0..d {
                for j in i..d {
                    cov[(i, j)] += c[i] * c[j] / n;
                }
            }
        }
        for i in 0..d {
            for j in 0..i {
                cov[(i, j)] = cov[(j, i)];
            }
        }
        let eig = SymmetricEigen::new(cov);
        let scale = eig.eigenvalues.map(|l| 1.0 / (l.max(0.0) + reg).sqrt());
        let m = &eig.eigenvectors * DMatrix::from_diagonal(&scale) * eig.eigenvectors.transpose();
        let matrix = (0..d)
            .flat_map(|i| (0..d).map(move |j| (i, j)))
            .map(|(i, j)| m[(i, j)])
            .collect();
        Ok(Zca { mean, matrix })
    }

    pub fn apply(&self, v: &[f64]) -> Vec<f64> {
        let d = self.mean.len();
        let c: Vec<f64> = v.iter().zip(&self.mean).map(|(x, m)| x - m).collect();
        (0..d)
            .map(|i| {
                self.matrix[i * d..(i + 1) * d]
                    .iter()
                    .zip(&c)
                    .map(|(a, b)| a * b)
                    .sum()
            })
            .collect()
    }
}

/// Preprocessing applied to every raw patch before a model sees it.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Preprocess {
    pub zca: Option<Zca>,
}

/// Tunables for [`Preprocess`]; serialized in run configs.
#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct PreprocessConfig {
    pub whiten: bool,
    pub zca_reg: f64,
}

impl Default for PreprocessConfig {
    fn default() -> Self {
        Self {
            whiten: false,
            zca_reg: 0.1,
        }
    }
}

impl Preprocess {
    /// Standardizes the patches and, when requested, fits whitening on them.
    /// Returns the transform together with the processed patches.
    pub fn fit(raw: &[Vec<f64>], cfg: &PreprocessConfig) -> Result<(Preprocess, Vec<Vec<f64>>)> {
        let std: Vec<Vec<f64>> = raw.iter().map(|v| normalize_patch(v, DEFAULT_EPS)).collect();
        if !cfg.whiten {
            return Ok((Preprocess::default(), std));
        }
        let zca = Zca::fit(&std, cfg.zca_reg)?;
        let out = std.iter().map(|v| zca.apply(v)).collect();
        Ok((Preprocess { zca: Some(zca) }, out))
    }

    pub fn apply(&self, raw: &[f64]) -> Vec<f64> {
        let v = normalize_patch(raw, DEFAULT_EPS);
        match &self.zca {
            Some(z) => z.apply(&v),
            None => v,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::Rng;

    fn ramp(w: usize, h: usize) -> Image {
        Image::from_fn(w, h, |x, y| ((x * 7 + y * 13) % 17) as f64 / 16.0)
    }

    #[test]
    fn single_origin_sampling_returns_whole_image() {
        let img = ramp(6, 6);
        let ps = sample_random_patches(std::slice::from_ref(&img), 6, 3, 9).unwrap();
        assert_eq!(ps.len(), 3);
        for p in &ps {
            assert_eq!(p.v, img.pixels());
        }
    }

    #[test]
    fn sampling_is_deterministic() {
        let imgs = vec![ramp(30, 20), ramp(16, 40)];
        let a = sample_random_patches(&imgs, 12, 50, 42).unwrap();
        let b = sample_random_patches(&imgs, 12, 50, 42).unwrap();
        assert_eq!(a, b);
        let c = sample_random_patches(&imgs, 12, 50, 43).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn sampling_rejects_small_image_by_index() {
        let imgs = vec![ramp(30, 30), ramp(10, 30)];
        let err = sample_random_patches(&imgs, 12, 5, 0).unwrap_err();
        assert!(matches!(&err, Error::Sizing(m) if m.contains("image 1")), "{err}");
    }

    #[test]
    fn grid_counts() {
        let img = ramp(24, 24);
        assert_eq!(extract_grid(&img, 12, 12).unwrap().patches.len(), 4);
        assert_eq!(extract_grid(&img, 12, 4).unwrap().patches.len(), 16);
        assert_eq!(extract_grid(&ramp(12, 12), 12, 1).unwrap().patches.len(), 1);
        assert!(matches!(extract_grid(&img, 25, 1), Err(Error::Sizing(_))));
        assert!(matches!(extract_grid(&img, 4, 0), Err(Error::Config(_))));
    }

    #[test]
    fn normalize_examples() {
        assert_eq!(normalize_patch(&[0.3; 9], 1e-8), vec![0.0; 9]);
        let v = normalize_patch(&[0.0, 1.0], 1e-8);
        assert!((v[0] + 1.0).abs() < 1e-15 && (v[1] - 1.0).abs() < 1e-15);
    }

    #[test]
    fn whitening_gives_projection_covariance() {
        let mut rng = seeded(3);
        let raw: Vec<Vec<f64>> = (0..4000)
            .map(|_| {
                let z: Vec<f64> = (0..6).map(|_| rng.random::<f64>()).collect();
                vec![z[0], z[0] + 0.3 * z[1], z[2], z[3] + z[4], z[5], 0.5 * z[1] + z[2]]
            })
            .collect();
        let (pre, out) = Preprocess::fit(
            &raw,
            &PreprocessConfig {
                whiten: true,
                zca_reg: 1e-6,
            },
        )
        .unwrap();
        assert!(pre.zca.is_some());
        let n = out.len() as f64;
        let mut cov = DMatrix::<f64>::zeros(6, 6);
        for v in &out {
            for i in 0..6 {
                for j in 0..6 {
                    cov[(i, j)] += v[i] * v[j] / n;
                }
            }
        }
        // whitened covariance is a projection: eigenvalues are 0 or 1, with
        // five independent inputs minus the mean direction left at 1
        let ev = SymmetricEigen::new(cov).eigenvalues;
        assert!(ev.iter().all(|l| l.abs() < 1e-3 || (l - 1.0).abs() < 1e-3), "{ev:?}");
        assert_eq!(ev.iter().filter(|l| (**l - 1.0).abs() < 1e-3).count(), 4);
        assert_eq!(pre.apply(&raw[0]), out[0]);
    }

    proptest! {
        #[test]
        fn grid_count_and_content(w in 1usize..40, h in 1usize..40, p in 1usize..20, stride in 1usize..9) {
            prop_assume!(p <= w && p <= h);
            let img = ramp(w, h);
            let g = extract_grid(&img, p, stride).unwrap();
            let expected = ((w - p) / stride + 1) * ((h - p) / stride + 1);
            prop_assert_eq!(g.patches.len(), expected);
            // enumerate origins independently
            let mut n = 0;
            for y in 0..=(h - p) {
                for x in 0..=(w - p) {
                    if x % stride == 0 && y % stride == 0 {
                        prop_assert_eq!(g.origins[n], (x, y));
                        n += 1;
                    }
                }
            }
            prop_assert_eq!(n, expected);
            for (patch, &(x0, y0)) in g.patches.iter().zip(&g.origins) {
                for dy in 0..p {
                    for dx in 0..p {
                        prop_assert_eq!(patch.v[dy * p + dx].to_bits(), img.get(x0 + dx, y0 + dy, 0).to_bits());
                    }
                }
            }
        }

        #[test]
        fn normalize_standardizes(v in prop::collection::vec(-10.0f64..10.0, 2..64)) {
            let n = v.len() as f64;
            let m = v.iter().sum::<f64>() / n;
            let sd = (v.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / n).sqrt();
            prop_assume!(sd > 1e-3);
            let out = normalize_patch(&v, 1e-8);
            let om = out.iter().sum::<f64>() / n;
            let osd = (out.iter().map(|x| (x - om) * (x - om)).sum::<f64>() / n).sqrt();
            prop_assert!(om.abs() < 1e-10);
            prop_assert!((osd - 1.0).abs() < 1e-10);
            let again = normalize_patch(&out, 1e-8);
            for (a, b) in again.iter().zip(&out) {
                prop_assert!((a - b).abs() < 1e-12);
            }
        }
    }
}
