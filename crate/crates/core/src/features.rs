//! Dense encoding of whole images and spatial pooling of the codes.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::image::Image;
use crate::registry::FeatureModel;

/// Codes on a regular grid of patch origins, row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct CodeGrid {
    pub rows: usize,
    pub cols: usize,
    pub dim: usize,
    pub codes: Vec<f64>,
}

impl CodeGrid {
    pub fn new(rows: usize, cols: usize, dim: usize, codes: Vec<Vec<f64>>) -> Result<Self> {
        if codes.len() != rows * cols || codes.iter().any(|c| c.len() != dim) {
            return Err(Error::config("code grid shape disagrees with its codes"));
        }
        Ok(Self {
            rows,
            cols,
            dim,
            codes: codes.concat(),
        })
    }

    pub fn code(&self, r: usize, c: usize) -> &[f64] {
        let i = (r * self.cols + c) * self.dim;
        &self.codes[i..i + self.dim]
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Reducer {
    #[default]
    Mean,
    Max,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PoolingConfig {
    /// Cells per side: 1, 2 or 3.
    pub grid: usize,
    pub reducer: Reducer,
    /// Patch stride in pixels; half the patch side when unset.
    pub stride: Option<usize>,
    pub l2_normalize: bool,
}

impl Default for PoolingConfig {
    fn default() -> Self {
        Self {
            grid: 2,
            reducer: Reducer::Mean,
            stride: None,
            l2_normalize: true,
        }
    }
}

impl PoolingConfig {
    pub fn stride_for(&self, p: usize) -> usize {
        self.stride.unwrap_or((p / 2).max(1))
    }

    pub fn validate(&self) -> Result<()> {
        if !(1..=3).contains(&self.grid) {
            return Err(Error::config(format!("pooling grid must be 1, 2 or 3, got {}", self.grid)));
        }
        if self.stride == Some(0) {
            return Err(Error::config("stride must be at least 1"));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct FeatureVector {
    pub values: Vec<f64>,
    pub model: String,
    pub pooling: PoolingConfig,
    pub side: usize,
}

/// Codes of every grid patch of `img`.
pub fn encode_image(model: &dyn FeatureModel, img: &Image, p: usize, stride: usize) -> Result<CodeGrid> {
    let g = model.geometry();
    let got = p * p * model.input_channels() * g.scales.max(1);
    if got != g.dim || p != g.side {
        return Err(Error::config(format!(
            "{} model expects D = {}, patch geometry gives D = {got}",
            model.kind(),
            g.dim
        )));
    }
    if stride == 0 {
        return Err(Error::config("stride must be at least 1"));
    }
    model.encode_grid(img, stride)
}

/// Cell of row `r` among `rows` when split into `g` bands.
fn band(r: usize, rows: usize, g: usize) -> usize {
    r * g / rows
}

/// Reduces the codes of each of `grid x grid` cells and concatenates the
/// cells row-major.
pub fn pool(codes: &CodeGrid, cfg: &PoolingConfig) -> Result<Vec<f64>> {
    cfg.validate()?;
    let g = cfg.grid;
    if codes.rows == 0 || codes.cols == 0 {
        return Err(Error::config("cannot pool an empty code grid"));
    }
    if g > codes.rows || g > codes.cols {
        return Err(Error::config(format!(
            "{g}x{g} pooling needs at least {g} patch rows and columns, got {}x{}",
            codes.rows, codes.cols
        )));
    }
    let n = codes.dim;
    let init = match cfg.reducer {
        Reducer::Mean => 0.0,
        Reducer::Max => f64::NEG_INFINITY,
    };
    let mut out = vec![init; g * g * n];
    let mut counts = vec![0usize; g * g];
    for r in 0..codes.rows {
        for c in 0..codes.cols {
            let cell = band(r, codes.rows, g) * g + band(c, codes.cols, g);
            counts[cell] += 1;
            let dst = &mut out[cell * n..(cell + 1) * n];
            for (d, x) in dst.iter_mut().zip(codes.code(r, c)) {
                match cfg.reducer {
                    Reducer::Mean => *d += x,
                    Reducer::Max => *d = d.max(*x),
                }
            }
        }
    }
    if cfg.reducer == Reducer::Mean {
        for (cell, &k) in counts.iter().enumerate() {
            for d in &mut out[cell * n..(cell + 1) * n] {
                *d /= k as f64;
            }
        }
    }
    if cfg.l2_normalize {
        let norm = out.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > 0.0 {
            out.iter_mut().for_each(|x| *x /= norm);
        }
    }
    Ok(out)
}

/// Encodes and pools one image.
pub fn extract_features(model: &dyn FeatureModel, img: &Image, cfg: &PoolingConfig) -> Result<FeatureVector> {
    let p = model.geometry().side;
    let grid = encode_image(model, img, p, cfg.stride_for(p))?;
    Ok(FeatureVector {
        values: pool(&grid, cfg)?,
        model: model.kind().name().to_string(),
        pooling: cfg.clone(),
        side: p,
    })
}
