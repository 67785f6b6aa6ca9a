//! Multi-scale spike-and-slab coding.
//!
//! S4C stacks independent S3C codes of Gaussian-blurred copies of a patch.
//! MS4C trains one S3C over the concatenation of a patch and its
//! counterparts on coarser pyramid levels, so each filter spans all levels.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::image::{to_grayscale, Image};
use crate::patch::{normalize_patch, sample_origins, sample_random_patches, Patch, DEFAULT_EPS};
use crate::rng::derive;
use crate::s3c::{s3c_encode, s3c_learn, EStepOptions, S3cCode, S3cLearnOptions, S3cParams};
use crate::scalespace::{
    admissible_origins, build_pyramid, gaussian_blur, multiscale_patch, pyramid_windows, ScaleConfig,
    DEFAULT_LEVELS, DEFAULT_SIGMAS,
};

/// Training knobs shared by the S3C-based models.
#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
#[serde(default)]
pub struct S3cTraining {
    pub patches: usize,
    pub epochs: usize,
    pub learn: S3cLearnOptions,
    pub code: S3cCode,
    pub encode_sweeps: usize,
    pub encode_tol: f64,
}

impl Default for S3cTraining {
    fn default() -> Self {
        Self {
            patches: 10_000,
            epochs: 20,
            learn: S3cLearnOptions::default(),
            code: S3cCode::Spikes,
            encode_sweeps: 50,
            encode_tol: 1e-4,
        }
    }
}

impl S3cTraining {
    pub fn encode_options(&self) -> EStepOptions {
        EStepOptions {
            max_sweeps: self.encode_sweeps,
            tol: self.encode_tol,
            trace: false,
        }
    }
}

/// How a model turns a standardized patch into a code.
#[derive(Clone, Debug, PartialEq)]
pub struct S3cCoder {
    pub params: S3cParams,
    pub code: S3cCode,
    pub e_opts: EStepOptionsRepr,
}

/// Serializable mirror of [`EStepOptions`] without the trace flag.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EStepOptionsRepr {
    pub max_sweeps: usize,
    pub tol: f64,
}

impl From<EStepOptionsRepr> for EStepOptions {
    fn from(r: EStepOptionsRepr) -> Self {
        EStepOptions {
            max_sweeps: r.max_sweeps,
            tol: r.tol,
            trace: false,
        }
    }
}

impl S3cCoder {
    pub fn new(params: S3cParams, train: &S3cTraining) -> Self {
        Self {
            params,
            code: train.code,
            e_opts: EStepOptionsRepr {
                max_sweeps: train.encode_sweeps,
                tol: train.encode_tol,
            },
        }
    }

    pub fn encode(&self, v: &[f64]) -> Result<Vec<f64>> {
        s3c_encode(&self.params, v, self.code, &self.e_opts.into())
    }
}

fn standardized(patches: Vec<Patch>) -> Vec<Vec<f64>> {
    patches
        .into_iter()
        .map(|p| normalize_patch(&p.v, DEFAULT_EPS))
        .collect()
}

fn gray_all(images: &[Image]) -> Vec<Image> {
    images.iter().map(to_grayscale).collect()
}

/// Trains a single-scale S3C exactly as the plain pipeline does.
pub fn train_single_scale(images: &[Image], p: usize, n: usize, seed: u64, train: &S3cTraining) -> Result<S3cParams> {
    let patches = standardized(sample_random_patches(images, p, train.patches, seed)?);
    Ok(s3c_learn(&patches, n, train.epochs, seed, &train.learn)?.params)
}

#[derive(Clone, Debug, PartialEq)]
pub struct S4cModel {
    pub side: usize,
    pub sigmas: Vec<f64>,
    /// One coder per blur width, or a single shared coder when tied.
    pub coders: Vec<S3cCoder>,
    pub tied: bool,
}

impl S4cModel {
    pub fn scales(&self) -> usize {
        self.sigmas.len()
    }

    pub fn units(&self) -> usize {
        self.coders[0].params.units()
    }

    fn coder(&self, j: usize) -> &S3cCoder {
        if self.tied {
            &self.coders[0]
        } else {
            &self.coders[j]
        }
    }

    /// Blurred gray copies of `img`, one per blur width.
    pub fn blur_stack(&self, img: &Image) -> Vec<Image> {
        let gray = to_grayscale(img);
        self.sigmas.iter().map(|&s| gaussian_blur(&gray, s)).collect()
    }

    /// Code of the patch at `origin`, given the precomputed blur stack.
    pub fn encode_stacked(&self, stack: &[Image], origin: (usize, usize)) -> Result<Vec<f64>> {
        let mut out = Vec::with_capacity(self.scales() * self.units());
        for (j, img) in stack.iter().enumerate() {
            let patch = Patch::from_window(img, origin.0, origin.1, self.side);
            out.extend(self.coder(j).encode(&normalize_patch(&patch.v, DEFAULT_EPS))?);
        }
        Ok(out)
    }
}

pub fn s4c_learn(
    images: &[Image],
    p: usize,
    n: usize,
    sigmas: &[f64],
    seed: u64,
    tied: bool,
    train: &S3cTraining,
) -> Result<S4cModel> {
    let ScaleConfig::BlurStack { sigmas } = ScaleConfig::blur_stack(sigmas.to_vec())? else {
        unreachable!()
    };
    let gray = gray_all(images);
    let stacks: Vec<Vec<Image>> = sigmas
        .iter()
        .map(|&s| gray.iter().map(|g| gaussian_blur(g, s)).collect())
        .collect();
    let coders = if tied {
        let mut pooled = Vec::new();
        for (j, blurred) in stacks.iter().enumerate() {
            pooled.extend(standardized(sample_random_patches(
                blurred,
                p,
                train.patches.div_ceil(sigmas.len()),
                derive(seed, j as u64),
            )?));
        }
        let params = s3c_learn(&pooled, n, train.epochs, seed, &train.learn)?.params;
        vec![S3cCoder::new(params, train)]
    } else {
        stacks
            .par_iter()
            .enumerate()
            .map(|(j, blurred)| {
                let params = train_single_scale(blurred, p, n, derive(seed, j as u64), train)?;
                Ok(S3cCoder::new(params, train))
            })
            .collect::<Result<Vec<_>>>()?
    };
    Ok(S4cModel {
        side: p,
        sigmas,
        coders,
        tied,
    })
}

fn origin_of(center: (usize, usize), p: usize) -> Result<(usize, usize)> {
    let h = p / 2;
    match (center.0.checked_sub(h), center.1.checked_sub(h)) {
        (Some(x), Some(y)) => Ok((x, y)),
        _ => Err(Error::sizing(format!("patch of side {p} centered at {center:?} leaves the image"))),
    }
}

fn check_window(img: &Image, origin: (usize, usize), p: usize) -> Result<()> {
    if origin.0 + p > img.width() || origin.1 + p > img.height() {
        return Err(Error::sizing(format!(
            "patch of side {p} at {origin:?} leaves the {}x{} image",
            img.width(),
            img.height()
        )));
    }
    Ok(())
}

/// Stacked code (`M * N` values) of the patch of side `p` centered at `center`.
pub fn s4c_encode(model: &S4cModel, img: &Image, center: (usize, usize), p: usize) -> Result<Vec<f64>> {
    if p != model.side {
        return Err(Error::config(format!("model patch side is {}, got {p}", model.side)));
    }
    let origin = origin_of(center, p)?;
    check_window(img, origin, p)?;
    model.encode_stacked(&model.blur_stack(img), origin)
}

#[derive(Clone, Debug, PartialEq)]
pub struct Ms4cModel {
    pub side: usize,
    pub levels: usize,
    pub joint: S3cCoder,
    /// Base-scale RGB coder concatenated when present.
    pub color: Option<S3cCoder>,
}

impl Ms4cModel {
    pub fn units(&self) -> usize {
        self.joint.params.units()
    }

    pub fn code_dim(&self) -> usize {
        self.units() * if self.color.is_some() { 2 } else { 1 }
    }

    /// Joint code for a level-0 window origin. Coarse windows are shifted
    /// back inside their level when `clamp` is set.
    pub(crate) fn encode_at(
        &self,
        pyr: &[Image],
        color_img: Option<&Image>,
        origin: (usize, usize),
        clamp: bool,
    ) -> Result<Vec<f64>> {
        let p = self.side;
        let center = (origin.0 + p / 2, origin.1 + p / 2);
        let joint: Vec<f64> = pyramid_windows(pyr, center, p, clamp)?
            .into_iter()
            .flat_map(|w| normalize_patch(&w.v, DEFAULT_EPS))
            .collect();
        let mut code = self.joint.encode(&joint)?;
        if let Some(img) = color_img {
            let coder = self
                .color
                .as_ref()
                .ok_or_else(|| Error::config("color encoding requested but the model has no color coder"))?;
            let patch = Patch::from_window(img, origin.0, origin.1, p);
            code.extend(coder.encode(&normalize_patch(&patch.v, DEFAULT_EPS))?);
        }
        Ok(code)
    }
}

/// Samples `count` standardized joint vectors from gray images.
pub fn sample_joint_patches(images: &[Image], p: usize, levels: usize, count: usize, seed: u64) -> Result<Vec<Vec<f64>>> {
    let gray = gray_all(images);
    let pyramids: Vec<Vec<Image>> = gray
        .iter()
        .map(|g| build_pyramid(g, levels))
        .collect::<Result<_>>()?;
    let picks = sample_origins(
        &gray,
        count,
        seed,
        |img| {
            (
                admissible_origins(img.width(), p, levels),
                admissible_origins(img.height(), p, levels),
            )
        },
        p,
    )?;
    picks
        .into_iter()
        .map(|(i, x, y)| Ok(multiscale_patch(&pyramids[i], (x + p / 2, y + p / 2), p)?.joint()))
        .collect()
}

/// Fits the joint model on already assembled joint vectors.
pub fn ms4c_fit_joint(joint: &[Vec<f64>], n: usize, seed: u64, train: &S3cTraining) -> Result<S3cParams> {
    Ok(s3c_learn(joint, n, train.epochs, seed, &train.learn)?.params)
}

pub fn ms4c_learn(
    images: &[Image],
    p: usize,
    n: usize,
    levels: usize,
    seed: u64,
    with_color: bool,
    train: &S3cTraining,
) -> Result<Ms4cModel> {
    ScaleConfig::pyramid(levels)?;
    let joint = sample_joint_patches(images, p, levels, train.patches, seed)?;
    let params = ms4c_fit_joint(&joint, n, seed, train)?;
    let color = if with_color {
        if images.iter().any(|img| img.channels() != 3) {
            return Err(Error::config("the color coder needs RGB training images"));
        }
        Some(S3cCoder::new(
            train_single_scale(images, p, n, derive(seed, 1), train)?,
            train,
        ))
    } else {
        None
    };
    Ok(Ms4cModel {
        side: p,
        levels,
        joint: S3cCoder::new(params, train),
        color,
    })
}

/// Joint code (`N` values, or `2N` with the color coder) of the patch
/// centered at `center`.
pub fn ms4c_encode(
    model: &Ms4cModel,
    img: &Image,
    center: (usize, usize),
    p: usize,
    with_color: bool,
) -> Result<Vec<f64>> {
    if p != model.side {
        return Err(Error::config(format!("model patch side is {}, got {p}", model.side)));
    }
    if with_color && model.color.is_none() {
        return Err(Error::config("color encoding requested but the model has no color coder"));
    }
    if with_color && img.channels() != 3 {
        return Err(Error::config("color encoding needs an RGB image"));
    }
    let origin = origin_of(center, p)?;
    check_window(img, origin, p)?;
    let pyr = build_pyramid(&to_grayscale(img), model.levels)?;
    model.encode_at(&pyr, with_color.then_some(img), origin, false)
}

pub fn default_sigmas() -> Vec<f64> {
    DEFAULT_SIGMAS.to_vec()
}

pub fn default_levels() -> usize {
    DEFAULT_LEVELS
}
