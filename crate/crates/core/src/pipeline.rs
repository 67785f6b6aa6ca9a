//! End-to-end helpers: learn, encode a set of images, train and score.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::classify::{evaluate, train_classifier, Classifier, Evaluation, TrainConfig};
use crate::error::{Error, Result};
use crate::features::{extract_features, PoolingConfig};
use crate::image::Image;
use crate::io::{Geometry, ModelFile, ModelKind};
use crate::lbp::{lbp_histogram, LbpConfig};
use crate::registry::{ClassifierRegistry, FeatureModel, LearnConfig, ModelRegistry};

/// Pooled features of `images`, in order.
pub fn encode_images(model: &dyn FeatureModel, images: &[Image], pooling: &PoolingConfig) -> Result<Vec<Vec<f64>>> {
    images
        .par_iter()
        .map(|img| Ok(extract_features(model, img, pooling)?.values))
        .collect()
}

pub fn lbp_features(images: &[Image], cfg: &LbpConfig) -> Result<Vec<Vec<f64>>> {
    images.par_iter().map(|img| lbp_histogram(img, cfg)).collect()
}

/// A feature matrix with labels, stored in the model container format.
#[derive(Clone, Debug, PartialEq)]
pub struct FeatureSet {
    pub features: Vec<Vec<f64>>,
    pub labels: Vec<usize>,
    pub classes: usize,
}

impl FeatureSet {
    pub fn new(features: Vec<Vec<f64>>, labels: Vec<usize>, classes: usize) -> Result<Self> {
        if features.len() != labels.len() {
            return Err(Error::config(format!("{} features for {} labels", features.len(), labels.len())));
        }
        let d = features.first().map_or(0, Vec::len);
        if features.iter().any(|f| f.len() != d) {
            return Err(Error::config("feature vectors differ in length"));
        }
        Ok(Self {
            features,
            labels,
            classes,
        })
    }

    pub fn dim(&self) -> usize {
        self.features.first().map_or(0, Vec::len)
    }

    pub fn to_file(&self) -> Result<ModelFile> {
        let (n, d) = (self.features.len(), self.dim());
        let mut f = ModelFile::new(
            ModelKind::Features,
            Geometry {
                dim: d,
                units: self.classes,
                ..Default::default()
            },
        );
        f.push("features", &[n, d], self.features.concat())?;
        f.push("labels", &[n], self.labels.iter().map(|&l| l as f64).collect())?;
        Ok(f)
    }

    pub fn from_file(file: &ModelFile) -> Result<Self> {
        file.expect_kind(ModelKind::Features)?;
        let d = file.geometry.dim;
        let n = file.get("labels")?.shape.first().copied().unwrap_or(0);
        let data = file.array("features", &[n, d])?;
        Self::new(
            (0..n).map(|i| data[i * d..(i + 1) * d].to_vec()).collect(),
            file.array("labels", &[n])?.iter().map(|&l| l as usize).collect(),
            file.geometry.units,
        )
    }
}

/// Everything one experiment needs besides its data.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExperimentConfig {
    pub model: String,
    pub learn: LearnConfig,
    pub pooling: PoolingConfig,
    pub classifier: String,
    pub train: TrainConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            model: "s3c".into(),
            learn: LearnConfig::default(),
            pooling: PoolingConfig::default(),
            classifier: "linear".into(),
            train: TrainConfig::default(),
        }
    }
}

#[derive(Debug)]
pub struct ExperimentResult {
    pub model: Box<dyn FeatureModel>,
    pub classifier: Box<dyn Classifier>,
    pub train: Evaluation,
    pub test: Evaluation,
}

/// Labeled images of one split.
pub struct Split<'a> {
    pub images: &'a [Image],
    pub labels: &'a [usize],
}

/// Trains a classifier on features of `model` and scores both splits.
pub fn fit_and_score(
    model: Box<dyn FeatureModel>,
    train: Split<'_>,
    test: Split<'_>,
    cfg: &ExperimentConfig,
) -> Result<ExperimentResult> {
    let classifiers = ClassifierRegistry::with_builtin();
    let factory = classifiers.get(&cfg.classifier)?;
    let xtr = encode_images(model.as_ref(), train.images, &cfg.pooling)?;
    let xte = encode_images(model.as_ref(), test.images, &cfg.pooling)?;
    let classifier = train_classifier(factory, &xtr, train.labels, &cfg.train)?;
    Ok(ExperimentResult {
        train: evaluate(classifier.as_ref(), &xtr, train.labels)?,
        test: evaluate(classifier.as_ref(), &xte, test.labels)?,
        model,
        classifier,
    })
}

/// Learns the feature model on the training images, then [`fit_and_score`].
pub fn run_experiment(train: Split<'_>, test: Split<'_>, cfg: &ExperimentConfig) -> Result<ExperimentResult> {
    let model = ModelRegistry::with_builtin().learn(&cfg.model, train.images, &cfg.learn)?;
    fit_and_score(model, train, test, cfg)
}
