//! Runtime selection of feature models and classifiers by name.

use std::collections::BTreeMap;
use std::fmt::Debug;
use std::sync::Arc;

use ndarray::{Array1, Array2};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::classify::{Classifier, ClassifierFactory, KnnFactory, LinearSvmFactory, Chi2SvmFactory};
use crate::dict::{ae_encode, ae_learn, kmeans_encode, kmeans_learn, sc_encode, sc_learn, AeParams, Dictionary, KmEncoding, LassoOptions};
use crate::error::{Error, Result};
use crate::features::CodeGrid;
use crate::image::{to_grayscale, Image};
use crate::io::viz::FilterBank;
use crate::io::{Geometry, ModelFile, ModelKind};
use crate::multiscale::{ms4c_learn, s4c_learn, EStepOptionsRepr, Ms4cModel, S3cCoder, S3cTraining, S4cModel};
use crate::patch::{extract_grid, grid_positions, sample_random_patches, Preprocess, PreprocessConfig, Zca};
use crate::s3c::{s3c_learn, BetaMode, S3cCode, S3cParams};
use crate::scalespace::{build_pyramid, DEFAULT_LEVELS, DEFAULT_SIGMAS};

/// A learned model that turns images into grids of codes.
pub trait FeatureModel: Send + Sync + Debug {
    fn kind(&self) -> ModelKind;
    fn geometry(&self) -> Geometry;
    /// Channels of each input window (3 for color single-scale models).
    fn input_channels(&self) -> usize;
    fn code_dim(&self) -> usize;
    /// Codes of the patches on a grid with the given stride, row-major.
    fn encode_grid(&self, img: &Image, stride: usize) -> Result<CodeGrid>;
    fn filters(&self) -> FilterBank;
    fn to_file(&self) -> Result<ModelFile>;
}

/// Hyperparameters of every model; each model reads the fields it needs.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LearnConfig {
    pub patch: usize,
    pub dict_size: usize,
    pub patches: usize,
    pub seed: u64,
    /// Learn single-scale models on RGB patches.
    pub color: bool,
    pub preprocess: PreprocessConfig,
    pub km: KmConfig,
    pub sc: ScConfig,
    pub ae: AeConfig,
    pub s3c: S3cTraining,
    pub multiscale: MultiScaleConfig,
}

impl Default for LearnConfig {
    fn default() -> Self {
        Self {
            patch: 12,
            dict_size: 64,
            patches: 10_000,
            seed: 0,
            color: false,
            preprocess: PreprocessConfig::default(),
            km: KmConfig::default(),
            sc: ScConfig::default(),
            ae: AeConfig::default(),
            s3c: S3cTraining::default(),
            multiscale: MultiScaleConfig::default(),
        }
    }
}

impl LearnConfig {
    fn s3c_training(&self) -> S3cTraining {
        S3cTraining {
            patches: self.patches,
            ..self.s3c.clone()
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct KmConfig {
    pub iters: usize,
    pub encoding: KmEncoding,
}

impl Default for KmConfig {
    fn default() -> Self {
        Self {
            iters: 50,
            encoding: KmEncoding::Triangle,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ScConfig {
    pub beta: f64,
    pub iters: usize,
}

impl Default for ScConfig {
    fn default() -> Self {
        Self { beta: 1.0, iters: 10 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AeConfig {
    pub lr: f64,
    pub epochs: usize,
}

impl Default for AeConfig {
    fn default() -> Self {
        Self { lr: 0.1, epochs: 20 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MultiScaleConfig {
    /// Blur widths of the stacked model.
    pub sigmas: Vec<f64>,
    /// Pyramid levels of the joint model.
    pub levels: usize,
    pub tied: bool,
    /// Add a base-scale RGB coder to the joint model.
    pub color: bool,
}

impl Default for MultiScaleConfig {
    fn default() -> Self {
        Self {
            sigmas: DEFAULT_SIGMAS.to_vec(),
            levels: DEFAULT_LEVELS,
            tied: false,
            color: false,
        }
    }
}

/// Learns and loads one kind of model.
pub trait ModelFactory: Send + Sync {
    fn name(&self) -> &'static str;
    fn learn(&self, images: &[Image], cfg: &LearnConfig) -> Result<Box<dyn FeatureModel>>;
    fn load(&self, file: &ModelFile) -> Result<Box<dyn FeatureModel>>;
}

pub struct ModelRegistry {
    factories: BTreeMap<&'static str, Arc<dyn ModelFactory>>,
}

impl ModelRegistry {
    pub fn empty() -> Self {
        Self {
            factories: BTreeMap::new(),
        }
    }

    /// km, sc, ae, s3c, s4c and ms4c.
    pub fn with_builtin() -> Self {
        let mut r = Self::empty();
        r.register(Arc::new(PatchFactory(ModelKind::Km)));
        r.register(Arc::new(PatchFactory(ModelKind::Sc)));
        r.register(Arc::new(PatchFactory(ModelKind::Ae)));
        r.register(Arc::new(PatchFactory(ModelKind::S3c)));
        r.register(Arc::new(S4cFactory));
        r.register(Arc::new(Ms4cFactory));
        r
    }

    pub fn register(&mut self, factory: Arc<dyn ModelFactory>) {
        self.factories.insert(factory.name(), factory);
    }

    pub fn names(&self) -> Vec<&'static str> {
        self.factories.keys().copied().collect()
    }

    pub fn get(&self, name: &str) -> Result<&dyn ModelFactory> {
        self.factories.get(name).map(|f| f.as_ref()).ok_or_else(|| {
            Error::config(format!("unknown model '{name}' (known: {})", self.names().join(", ")))
        })
    }

    pub fn learn(&self, name: &str, images: &[Image], cfg: &LearnConfig) -> Result<Box<dyn FeatureModel>> {
        self.get(name)?.learn(images, cfg)
    }

    pub fn load(&self, file: &ModelFile) -> Result<Box<dyn FeatureModel>> {
        self.get(file.kind.name())?.load(file)
    }
}

/// How a single-scale model maps a preprocessed patch to a code.
pub trait PatchCoder: Send + Sync + Debug {
    fn kind(&self) -> ModelKind;
    fn dim(&self) -> usize;
    fn code_dim(&self) -> usize;
    fn encode(&self, v: &[f64]) -> Result<Vec<f64>>;
    /// Templates in input space, one per code dimension.
    fn atoms(&self) -> Vec<Vec<f64>>;
    fn write(&self, file: &mut ModelFile) -> Result<()>;
}

#[derive(Debug)]
pub struct KmCoder {
    pub centers: Array2<f64>,
    pub encoding: KmEncoding,
}

impl PatchCoder for KmCoder {
    fn kind(&self) -> ModelKind {
        ModelKind::Km
    }
    fn dim(&self) -> usize {
        self.centers.ncols()
    }
    fn code_dim(&self) -> usize {
        self.centers.nrows()
    }
    fn encode(&self, v: &[f64]) -> Result<Vec<f64>> {
        Ok(kmeans_encode(&self.centers, v, self.encoding))
    }
    fn atoms(&self) -> Vec<Vec<f64>> {
        rows(&self.centers)
    }
    fn write(&self, file: &mut ModelFile) -> Result<()> {
        push_matrix(file, "centers", &self.centers)?;
        file.push_scalar("hard", (self.encoding == KmEncoding::Hard) as u8 as f64)
    }
}

#[derive(Debug)]
pub struct ScCoder {
    pub dict: Dictionary,
    pub beta: f64,
}

impl PatchCoder for ScCoder {
    fn kind(&self) -> ModelKind {
        ModelKind::Sc
    }
    fn dim(&self) -> usize {
        self.dict.dim()
    }
    fn code_dim(&self) -> usize {
        self.dict.size()
    }
    fn encode(&self, v: &[f64]) -> Result<Vec<f64>> {
        sc_encode(&self.dict, v, self.beta, &LassoOptions::default())
    }
    fn atoms(&self) -> Vec<Vec<f64>> {
        rows(self.dict.atoms())
    }
    fn write(&self, file: &mut ModelFile) -> Result<()> {
        push_matrix(file, "atoms", self.dict.atoms())?;
        file.push_scalar("beta", self.beta)
    }
}

#[derive(Debug)]
pub struct AeCoder {
    pub params: AeParams,
}

impl PatchCoder for AeCoder {
    fn kind(&self) -> ModelKind {
        ModelKind::Ae
    }
    fn dim(&self) -> usize {
        self.params.input_dim()
    }
    fn code_dim(&self) -> usize {
        self.params.code_dim()
    }
    fn encode(&self, v: &[f64]) -> Result<Vec<f64>> {
        Ok(ae_encode(&self.params, v))
    }
    fn atoms(&self) -> Vec<Vec<f64>> {
        rows(&self.params.w)
    }
    fn write(&self, file: &mut ModelFile) -> Result<()> {
        push_matrix(file, "w", &self.params.w)?;
        file.push("b", &[self.params.b.len()], self.params.b.to_vec())?;
        push_matrix(file, "w_dec", &self.params.w_dec)?;
        file.push("b_dec", &[self.params.b_dec.len()], self.params.b_dec.to_vec())
    }
}

impl PatchCoder for S3cCoder {
    fn kind(&self) -> ModelKind {
        ModelKind::S3c
    }
    fn dim(&self) -> usize {
        self.params.dim()
    }
    fn code_dim(&self) -> usize {
        self.params.units()
    }
    fn encode(&self, v: &[f64]) -> Result<Vec<f64>> {
        S3cCoder::encode(self, v)
    }
    fn atoms(&self) -> Vec<Vec<f64>> {
        rows(&self.params.w)
    }
    fn write(&self, file: &mut ModelFile) -> Result<()> {
        write_s3c(file, "", self)
    }
}

fn rows(m: &Array2<f64>) -> Vec<Vec<f64>> {
    m.rows().into_iter().map(|r| r.to_vec()).collect()
}

fn push_matrix(file: &mut ModelFile, name: &str, m: &Array2<f64>) -> Result<()> {
    file.push(name, &[m.nrows(), m.ncols()], m.iter().copied().collect())
}

fn read_matrix(file: &ModelFile, name: &str, r: usize, c: usize) -> Result<Array2<f64>> {
    let data = file.array(name, &[r, c])?;
    Ok(Array2::from_shape_vec((r, c), data.to_vec()).expect("shape checked"))
}

fn read_vector(file: &ModelFile, name: &str, n: usize) -> Result<Array1<f64>> {
    Ok(Array1::from(file.array(name, &[n])?.to_vec()))
}

fn write_s3c(file: &mut ModelFile, prefix: &str, coder: &S3cCoder) -> Result<()> {
    let p = &coder.params;
    let n = p.units();
    push_matrix(file, &format!("{prefix}w"), &p.w)?;
    file.push(format!("{prefix}b"), &[n], p.b.to_vec())?;
    file.push(format!("{prefix}mu"), &[n], p.mu.to_vec())?;
    file.push(format!("{prefix}alpha"), &[n], p.alpha.to_vec())?;
    file.push(format!("{prefix}beta"), &[p.dim()], p.beta.to_vec())?;
    file.push_scalar(format!("{prefix}beta_diagonal"), (p.beta_mode == BetaMode::Diagonal) as u8 as f64)?;
    file.push_scalar(format!("{prefix}code_spike_slab"), (coder.code == S3cCode::SpikeSlab) as u8 as f64)?;
    file.push_scalar(format!("{prefix}encode_sweeps"), coder.e_opts.max_sweeps as f64)?;
    file.push_scalar(format!("{prefix}encode_tol"), coder.e_opts.tol)
}

fn read_s3c(file: &ModelFile, prefix: &str) -> Result<S3cCoder> {
    let w = file.get(&format!("{prefix}w"))?;
    let [n, d] = w.shape[..] else {
        return Err(Error::Format("weight matrix must be two-dimensional".into()));
    };
    let params = S3cParams {
        w: read_matrix(file, &format!("{prefix}w"), n, d)?,
        b: read_vector(file, &format!("{prefix}b"), n)?,
        mu: read_vector(file, &format!("{prefix}mu"), n)?,
        alpha: read_vector(file, &format!("{prefix}alpha"), n)?,
        beta: read_vector(file, &format!("{prefix}beta"), d)?,
        beta_mode: if file.scalar(&format!("{prefix}beta_diagonal"))? != 0.0 {
            BetaMode::Diagonal
        } else {
            BetaMode::Scalar
        },
    };
    params.validate()?;
    Ok(S3cCoder {
        params,
        code: if file.scalar(&format!("{prefix}code_spike_slab"))? != 0.0 {
            S3cCode::SpikeSlab
        } else {
            S3cCode::Spikes
        },
        e_opts: EStepOptionsRepr {
            max_sweeps: file.scalar(&format!("{prefix}encode_sweeps"))? as usize,
            tol: file.scalar(&format!("{prefix}encode_tol"))?,
        },
    })
}

/// Preprocessing followed by a [`PatchCoder`] on single-scale windows.
#[derive(Debug)]
pub struct PatchModel {
    pub side: usize,
    pub channels: usize,
    pub prep: Preprocess,
    pub coder: Box<dyn PatchCoder>,
}

impl PatchModel {
    fn input(&self, img: &Image) -> Result<Image> {
        match (self.channels, img.channels()) {
            (1, _) => Ok(to_grayscale(img)),
            (3, 3) => Ok(img.clone()),
            _ => Err(Error::config(format!(
                "{} model expects D = {}, a gray image gives D = {}",
                self.coder.kind(),
                self.coder.dim(),
                self.side * self.side
            ))),
        }
    }

    pub fn encode_patch(&self, raw: &[f64]) -> Result<Vec<f64>> {
        self.coder.encode(&self.prep.apply(raw))
    }
}

impl FeatureModel for PatchModel {
    fn kind(&self) -> ModelKind {
        self.coder.kind()
    }
    fn geometry(&self) -> Geometry {
        Geometry {
            dim: self.coder.dim(),
            units: self.coder.code_dim(),
            side: self.side,
            scales: 1,
            color: self.channels == 3,
        }
    }
    fn input_channels(&self) -> usize {
        self.channels
    }
    fn code_dim(&self) -> usize {
        self.coder.code_dim()
    }
    fn encode_grid(&self, img: &Image, stride: usize) -> Result<CodeGrid> {
        let grid = extract_grid(&self.input(img)?, self.side, stride)?;
        let codes = grid
            .patches
            .par_iter()
            .map(|p| self.encode_patch(&p.v))
            .collect::<Result<Vec<_>>>()?;
        CodeGrid::new(grid.rows, grid.cols, self.code_dim(), codes)
    }
    fn filters(&self) -> FilterBank {
        FilterBank {
            side: self.side,
            channels: self.channels,
            tiles: 1,
            atoms: self.coder.atoms(),
        }
    }
    fn to_file(&self) -> Result<ModelFile> {
        let mut file = ModelFile::new(self.kind(), self.geometry());
        if let Some(z) = &self.prep.zca {
            let d = z.mean.len();
            file.push("zca_mean", &[d], z.mean.clone())?;
            file.push("zca_matrix", &[d, d], z.matrix.clone())?;
        }
        self.coder.write(&mut file)?;
        Ok(file)
    }
}

fn training_images(images: &[Image], color: bool) -> Result<Vec<Image>> {
    if images.is_empty() {
        return Err(Error::config("no training images"));
    }
    if color {
        if images.iter().any(|i| i.channels() != 3) {
            return Err(Error::config("color learning needs RGB images"));
        }
        Ok(images.to_vec())
    } else {
        Ok(images.iter().map(to_grayscale).collect())
    }
}

struct PatchFactory(ModelKind);

impl ModelFactory for PatchFactory {
    fn name(&self) -> &'static str {
        self.0.name()
    }

    fn learn(&self, images: &[Image], cfg: &LearnConfig) -> Result<Box<dyn FeatureModel>> {
        let images = training_images(images, cfg.color)?;
        let (p, n, seed) = (cfg.patch, cfg.dict_size, cfg.seed);
        let raw: Vec<Vec<f64>> = sample_random_patches(&images, p, cfg.patches, seed)?
            .into_iter()
            .map(|x| x.v)
            .collect();
        let (prep, data) = Preprocess::fit(&raw, &cfg.preprocess)?;
        log::info!("learning {} with {} patches of side {p}, N = {n}", self.0, data.len());
        let coder: Box<dyn PatchCoder> = match self.0 {
            ModelKind::Km => {
                let fit = kmeans_learn(&data, n, cfg.km.iters, seed)?;
                Box::new(KmCoder {
                    centers: fit.centers,
                    encoding: cfg.km.encoding,
                })
            }
            ModelKind::Sc => {
                let fit = sc_learn(&data, n, cfg.sc.beta, cfg.sc.iters, seed)?;
                Box::new(ScCoder {
                    dict: fit.dict,
                    beta: cfg.sc.beta,
                })
            }
            ModelKind::Ae => Box::new(AeCoder {
                params: ae_learn(&data, n, cfg.ae.lr, cfg.ae.epochs, seed)?.params,
            }),
            _ => {
                let train = cfg.s3c_training();
                let fit = s3c_learn(&data, n, train.epochs, seed, &train.learn)?;
                Box::new(S3cCoder::new(fit.params, &train))
            }
        };
        Ok(Box::new(PatchModel {
            side: p,
            channels: images[0].channels(),
            prep,
            coder,
        }))
    }

    fn load(&self, file: &ModelFile) -> Result<Box<dyn FeatureModel>> {
        file.expect_kind(self.0)?;
        let g = file.geometry;
        let channels = if g.color { 3 } else { 1 };
        if g.side == 0 || g.dim != g.side * g.side * channels {
            return Err(Error::Format(format!("inconsistent geometry {g:?}")));
        }
        let (d, n) = (g.dim, g.units);
        let zca = if file.has("zca_mean") {
            Some(Zca {
                mean: file.array("zca_mean", &[d])?.to_vec(),
                matrix: file.array("zca_matrix", &[d, d])?.to_vec(),
            })
        } else {
            None
        };
        let coder: Box<dyn PatchCoder> = match self.0 {
            ModelKind::Km => Box::new(KmCoder {
                centers: read_matrix(file, "centers", n, d)?,
                encoding: if file.scalar("hard")? != 0.0 {
                    KmEncoding::Hard
                } else {
                    KmEncoding::Triangle
                },
            }),
            ModelKind::Sc => Box::new(ScCoder {
                dict: Dictionary::new(read_matrix(file, "atoms", n, d)?),
                beta: file.scalar("beta")?,
            }),
            ModelKind::Ae => Box::new(AeCoder {
                params: AeParams {
                    w: read_matrix(file, "w", n, d)?,
                    b: read_vector(file, "b", n)?,
                    w_dec: read_matrix(file, "w_dec", d, n)?,
                    b_dec: read_vector(file, "b_dec", d)?,
                },
            }),
            _ => Box::new(read_s3c(file, "")?),
        };
        if coder.dim() != d || coder.code_dim() != n {
            return Err(Error::Format("stored arrays disagree with the geometry".into()));
        }
        Ok(Box::new(PatchModel {
            side: g.side,
            channels,
            prep: Preprocess { zca },
            coder,
        }))
    }
}

fn grid_origins(img: &Image, p: usize, stride: usize) -> Result<(usize, usize, Vec<(usize, usize)>)> {
    if img.width() < p || img.height() < p {
        return Err(Error::sizing(format!(
            "image is {}x{}, smaller than patch side {p}",
            img.width(),
            img.height()
        )));
    }
    let xs = grid_positions(img.width(), p, stride);
    let ys = grid_positions(img.height(), p, stride);
    let origins = ys.iter().flat_map(|&y| xs.iter().map(move |&x| (x, y))).collect();
    Ok((ys.len(), xs.len(), origins))
}

impl FeatureModel for S4cModel {
    fn kind(&self) -> ModelKind {
        ModelKind::S4c
    }
    fn geometry(&self) -> Geometry {
        Geometry {
            dim: self.scales() * self.side * self.side,
            units: self.units(),
            side: self.side,
            scales: self.scales(),
            color: false,
        }
    }
    fn input_channels(&self) -> usize {
        1
    }
    fn code_dim(&self) -> usize {
        self.scales() * self.units()
    }
    fn encode_grid(&self, img: &Image, stride: usize) -> Result<CodeGrid> {
        let (rows, cols, origins) = grid_origins(img, self.side, stride)?;
        let stack = self.blur_stack(img);
        let codes = origins
            .par_iter()
            .map(|&o| self.encode_stacked(&stack, o))
            .collect::<Result<Vec<_>>>()?;
        CodeGrid::new(rows, cols, self.code_dim(), codes)
    }
    fn filters(&self) -> FilterBank {
        let atoms = (0..self.units())
            .map(|i| {
                (0..self.scales())
                    .flat_map(|j| {
                        let c = &self.coders[if self.tied { 0 } else { j }];
                        c.params.w.row(i).to_vec()
                    })
                    .collect()
            })
            .collect();
        FilterBank {
            side: self.side,
            channels: 1,
            tiles: self.scales(),
            atoms,
        }
    }
    fn to_file(&self) -> Result<ModelFile> {
        let mut file = ModelFile::new(ModelKind::S4c, self.geometry());
        file.push("sigmas", &[self.sigmas.len()], self.sigmas.clone())?;
        file.push_scalar("tied", self.tied as u8 as f64)?;
        for (j, c) in self.coders.iter().enumerate() {
            write_s3c(&mut file, &format!("scale{j}."), c)?;
        }
        Ok(file)
    }
}

struct S4cFactory;

impl ModelFactory for S4cFactory {
    fn name(&self) -> &'static str {
        "s4c"
    }
    fn learn(&self, images: &[Image], cfg: &LearnConfig) -> Result<Box<dyn FeatureModel>> {
        let ms = &cfg.multiscale;
        Ok(Box::new(s4c_learn(
            images,
            cfg.patch,
            cfg.dict_size,
            &ms.sigmas,
            cfg.seed,
            ms.tied,
            &cfg.s3c_training(),
        )?))
    }
    fn load(&self, file: &ModelFile) -> Result<Box<dyn FeatureModel>> {
        file.expect_kind(ModelKind::S4c)?;
        let g = file.geometry;
        let sigmas = file.array("sigmas", &[g.scales])?.to_vec();
        let tied = file.scalar("tied")? != 0.0;
        let coders = (0..if tied { 1 } else { g.scales })
            .map(|j| read_s3c(file, &format!("scale{j}.")))
            .collect::<Result<Vec<_>>>()?;
        if coders.iter().any(|c| c.params.dim() != g.side * g.side || c.params.units() != g.units) {
            return Err(Error::Format("stored arrays disagree with the geometry".into()));
        }
        Ok(Box::new(S4cModel {
            side: g.side,
            sigmas,
            coders,
            tied,
        }))
    }
}

impl FeatureModel for Ms4cModel {
    fn kind(&self) -> ModelKind {
        ModelKind::Ms4c
    }
    fn geometry(&self) -> Geometry {
        Geometry {
            dim: self.levels * self.side * self.side,
            units: self.units(),
            side: self.side,
            scales: self.levels,
            color: self.color.is_some(),
        }
    }
    fn input_channels(&self) -> usize {
        1
    }
    fn code_dim(&self) -> usize {
        Ms4cModel::code_dim(self)
    }
    fn encode_grid(&self, img: &Image, stride: usize) -> Result<CodeGrid> {
        let (rows, cols, origins) = grid_origins(img, self.side, stride)?;
        let pyr = build_pyramid(&to_grayscale(img), self.levels)?;
        let color = match (&self.color, img.channels()) {
            (None, _) => None,
            (Some(_), 3) => Some(img),
            (Some(_), _) => return Err(Error::config("a model with a color coder needs RGB images")),
        };
        let codes = origins
            .par_iter()
            .map(|&o| self.encode_at(&pyr, color, o, true))
            .collect::<Result<Vec<_>>>()?;
        CodeGrid::new(rows, cols, FeatureModel::code_dim(self), codes)
    }
    fn filters(&self) -> FilterBank {
        FilterBank {
            side: self.side,
            channels: 1,
            tiles: self.levels,
            atoms: rows(&self.joint.params.w),
        }
    }
    fn to_file(&self) -> Result<ModelFile> {
        let mut file = ModelFile::new(ModelKind::Ms4c, self.geometry());
        write_s3c(&mut file, "joint.", &self.joint)?;
        if let Some(c) = &self.color {
            write_s3c(&mut file, "color.", c)?;
        }
        Ok(file)
    }
}

struct Ms4cFactory;

impl ModelFactory for Ms4cFactory {
    fn name(&self) -> &'static str {
        "ms4c"
    }
    fn learn(&self, images: &[Image], cfg: &LearnConfig) -> Result<Box<dyn FeatureModel>> {
        let ms = &cfg.multiscale;
        Ok(Box::new(ms4c_learn(
            images,
            cfg.patch,
            cfg.dict_size,
            ms.levels,
            cfg.seed,
            ms.color,
            &cfg.s3c_training(),
        )?))
    }
    fn load(&self, file: &ModelFile) -> Result<Box<dyn FeatureModel>> {
        file.expect_kind(ModelKind::Ms4c)?;
        let g = file.geometry;
        let joint = read_s3c(file, "joint.")?;
        let color = if g.color { Some(read_s3c(file, "color.")?) } else { None };
        if joint.params.dim() != g.dim || g.dim != g.scales * g.side * g.side || joint.params.units() != g.units {
            return Err(Error::Format("stored arrays disagree with the geometry".into()));
        }
        Ok(Box::new(Ms4cModel {
            side: g.side,
            levels: g.scales,
            joint,
            color,
        }))
    }
}

/// Classifiers by name: linear, exp-chi2 and knn3.
pub struct ClassifierRegistry {
    factories: BTreeMap<&'static str, Arc<dyn ClassifierFactory>>,
}

impl ClassifierRegistry {
    pub fn with_builtin() -> Self {
        let mut r = Self {
            factories: BTreeMap::new(),
        };
        r.register(Arc::new(LinearSvmFactory));
        r.register(Arc::new(Chi2SvmFactory));
        r.register(Arc::new(KnnFactory));
        r
    }

    pub fn register(&mut self, factory: Arc<dyn ClassifierFactory>) {
        self.factories.insert(factory.name(), factory);
    }

    pub fn names(&self) -> Vec<&'static str> {
        self.factories.keys().copied().collect()
    }

    pub fn get(&self, name: &str) -> Result<&dyn ClassifierFactory> {
        self.factories.get(name).map(|f| f.as_ref()).ok_or_else(|| {
            Error::config(format!("unknown classifier '{name}' (known: {})", self.names().join(", ")))
        })
    }

    /// Loads any classifier file, dispatching on its kind.
    pub fn load(&self, file: &ModelFile) -> Result<Box<dyn Classifier>> {
        let f = self
            .factories
            .values()
            .find(|f| f.kind() == file.kind)
            .ok_or_else(|| Error::KindMismatch {
                expected: "a classifier".into(),
                found: file.kind.name().into(),
            })?;
        f.load(file)
    }
}
