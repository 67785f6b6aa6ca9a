//! One-vs-rest SVMs (linear and exp-chi2 kernel), a 3-NN classifier and
//! evaluation helpers.

mod kernel;
mod knn;
mod linear;

pub use kernel::{chi2_distance, chi2_gram, chi2_kernel, clip_negative, default_gamma, smo_binary, Chi2Svm, Chi2SvmFactory, SmoResult, CHI2_EPS};
pub use knn::{Knn, KnnFactory};
pub use linear::{dcd_binary, DcdResult, LinearSvm, LinearSvmFactory};

use std::fmt::Debug;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::io::{ModelFile, ModelKind};
use crate::rng::seeded;

pub trait Classifier: Send + Sync + Debug {
    fn kind(&self) -> ModelKind;
    fn classes(&self) -> usize;
    fn dim(&self) -> usize;
    /// One score per class; the prediction is the largest.
    fn decision_values(&self, x: &[f64]) -> Result<Vec<f64>>;
    fn to_file(&self) -> Result<ModelFile>;

    fn predict(&self, x: &[f64]) -> Result<usize> {
        Ok(argmax(&self.decision_values(x)?))
    }
}

pub trait ClassifierFactory: Send + Sync {
    fn name(&self) -> &'static str;
    fn kind(&self) -> ModelKind;
    fn train(&self, x: &[Vec<f64>], y: &[usize], cfg: &TrainConfig) -> Result<Box<dyn Classifier>>;
    fn load(&self, file: &ModelFile) -> Result<Box<dyn Classifier>>;
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub c: f64,
    /// Kernel width; derived from the training set when unset.
    pub gamma: Option<f64>,
    /// Neighbors of the nearest-neighbor classifier.
    pub k: usize,
    pub seed: u64,
    /// Pick `c` from `c_grid` by cross-validation before the final fit.
    pub cross_validate: bool,
    pub c_grid: Vec<f64>,
    pub folds: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            c: 1.0,
            gamma: None,
            k: 3,
            seed: 0,
            cross_validate: false,
            c_grid: vec![0.1, 1.0, 10.0],
            folds: 3,
        }
    }
}

pub(crate) fn argmax(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, x) in v.iter().enumerate() {
        if *x > v[best] {
            best = i;
        }
    }
    best
}

/// Checks a training set and returns the number of classes.
pub(crate) fn check_training(x: &[Vec<f64>], y: &[usize]) -> Result<usize> {
    if x.len() != y.len() || x.is_empty() {
        return Err(Error::config(format!("{} feature vectors for {} labels", x.len(), y.len())));
    }
    let d = x[0].len();
    if let Some(i) = x.iter().position(|v| v.len() != d) {
        return Err(Error::config(format!("feature {i} has dimension {}, expected {d}", x[i].len())));
    }
    if x.iter().flatten().any(|v| !v.is_finite()) {
        return Err(Error::Numerical("training features must be finite".into()));
    }
    let k = y.iter().max().unwrap() + 1;
    let mut seen = vec![false; k];
    y.iter().for_each(|&c| seen[c] = true);
    if seen.iter().filter(|s| **s).count() < 2 {
        return Err(Error::config("training needs at least two classes"));
    }
    Ok(k)
}

pub(crate) fn check_dim(x: &[f64], d: usize) -> Result<()> {
    if x.len() != d {
        return Err(Error::config(format!("feature has dimension {}, model expects {d}", x.len())));
    }
    Ok(())
}

/// `+1` for `class`, `-1` otherwise.
pub(crate) fn one_vs_rest(y: &[usize], class: usize) -> Vec<f64> {
    y.iter().map(|&c| if c == class { 1.0 } else { -1.0 }).collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Evaluation {
    pub accuracy: f64,
    /// `confusion[true][predicted]`.
    pub confusion: Vec<Vec<usize>>,
}

pub fn evaluate_predictions(pred: &[usize], y: &[usize], classes: usize) -> Evaluation {
    let mut confusion = vec![vec![0; classes]; classes];
    let mut correct = 0;
    for (&p, &t) in pred.iter().zip(y) {
        if t < classes && p < classes {
            confusion[t][p] += 1;
        }
        correct += (p == t) as usize;
    }
    Evaluation {
        accuracy: if y.is_empty() { 0.0 } else { correct as f64 / y.len() as f64 },
        confusion,
    }
}

pub fn evaluate(model: &dyn Classifier, x: &[Vec<f64>], y: &[usize]) -> Result<Evaluation> {
    if x.len() != y.len() {
        return Err(Error::config(format!("{} feature vectors for {} labels", x.len(), y.len())));
    }
    let pred = x.iter().map(|v| model.predict(v)).collect::<Result<Vec<_>>>()?;
    let k = model.classes().max(y.iter().max().map_or(0, |m| m + 1));
    Ok(evaluate_predictions(&pred, y, k))
}

/// Stratified fold index of every sample.
fn folds(y: &[usize], k: usize, seed: u64) -> Vec<usize> {
    let mut out = vec![0; y.len()];
    let classes = y.iter().max().map_or(0, |m| m + 1);
    let mut rng = seeded(seed);
    for c in 0..classes {
        let mut idx: Vec<usize> = (0..y.len()).filter(|&i| y[i] == c).collect();
        idx.shuffle(&mut rng);
        for (j, i) in idx.into_iter().enumerate() {
            out[i] = j % k;
        }
    }
    out
}

/// Mean cross-validated accuracy of each `C` in the grid; returns the best
/// (the smallest on ties) with every score.
pub fn select_c(factory: &dyn ClassifierFactory, x: &[Vec<f64>], y: &[usize], cfg: &TrainConfig) -> Result<(f64, Vec<(f64, f64)>)> {
    check_training(x, y)?;
    if cfg.folds < 2 || cfg.c_grid.is_empty() {
        return Err(Error::config("cross-validation needs two folds and a nonempty C grid"));
    }
    let fold = folds(y, cfg.folds, cfg.seed);
    let mut scores = Vec::new();
    for &c in &cfg.c_grid {
        let mut acc = 0.0;
        for f in 0..cfg.folds {
            let (mut tx, mut ty, mut vx, mut vy) = (vec![], vec![], vec![], vec![]);
            for i in 0..x.len() {
                if fold[i] == f {
                    vx.push(x[i].clone());
                    vy.push(y[i]);
                } else {
                    tx.push(x[i].clone());
                    ty.push(y[i]);
                }
            }
            let sub = TrainConfig {
                c,
                cross_validate: false,
                ..cfg.clone()
            };
            let model = factory.train(&tx, &ty, &sub)?;
            acc += evaluate(model.as_ref(), &vx, &vy)?.accuracy / cfg.folds as f64;
        }
        scores.push((c, acc));
    }
    let mut best = scores[0];
    for &s in &scores[1..] {
        if s.1 > best.1 || (s.1 == best.1 && s.0 < best.0) {
            best = s;
        }
    }
    Ok((best.0, scores))
}

/// Trains with `factory`, choosing `C` by cross-validation when asked.
pub fn train_classifier(factory: &dyn ClassifierFactory, x: &[Vec<f64>], y: &[usize], cfg: &TrainConfig) -> Result<Box<dyn Classifier>> {
    if cfg.cross_validate {
        let (c, scores) = select_c(factory, x, y, cfg)?;
        log::info!("cross-validated C scores {scores:?}, using C = {c}");
        factory.train(x, y, &TrainConfig { c, ..cfg.clone() })
    } else {
        factory.train(x, y, cfg)
    }
}
