use rand::seq::SliceRandom;

use super::{check_dim, check_training, one_vs_rest, Classifier, ClassifierFactory, TrainConfig};
use crate::error::{Error, Result};
use crate::io::{Geometry, ModelFile, ModelKind};
use crate::rng::{derive, seeded};

/// Relative duality gap at which the solver stops.
pub const GAP_TOL: f64 = 1e-4;
pub const MAX_EPOCHS: usize = 200_000;

#[derive(Clone, Debug)]
pub struct DcdResult {
    pub w: Vec<f64>,
    pub bias: f64,
    pub alpha: Vec<f64>,
    pub primal: f64,
    pub dual: f64,
    pub epochs: usize,
}

impl DcdResult {
    pub fn gap(&self) -> f64 {
        self.primal - self.dual
    }
}

fn dot_aug(w: &[f64], bias: f64, x: &[f64]) -> f64 {
    w.iter().zip(x).map(|(a, b)| a * b).sum::<f64>() + bias
}

/// Hinge-loss SVM `min 1/2 |w|^2 + C sum max(0, 1 - y (w.x + b))` with the
/// bias folded in as a constant feature, by dual coordinate descent.
pub fn dcd_binary(x: &[Vec<f64>], y: &[f64], c: f64, seed: u64) -> Result<DcdResult> {
    if !(c > 0.0) {
        return Err(Error::config(format!("C must be positive, got {c}")));
    }
    let n = x.len();
    let d = x[0].len();
    let qii: Vec<f64> = x.iter().map(|v| v.iter().map(|a| a * a).sum::<f64>() + 1.0).collect();
    let mut alpha = vec![0.0; n];
    let mut w = vec![0.0; d];
    let mut bias = 0.0;
    let mut order: Vec<usize> = (0..n).collect();
    let mut rng = seeded(seed);
    let objectives = |w: &[f64], bias: f64, alpha: &[f64]| {
        let half = 0.5 * (w.iter().map(|a| a * a).sum::<f64>() + bias * bias);
        let loss: f64 = (0..n).map(|i| (1.0 - y[i] * dot_aug(w, bias, &x[i])).max(0.0)).sum();
        (half + c * loss, alpha.iter().sum::<f64>() - half)
    };
    for epoch in 1..=MAX_EPOCHS {
        order.shuffle(&mut rng);
        for &i in &order {
            let g = y[i] * dot_aug(&w, bias, &x[i]) - 1.0;
            let a = alpha[i];
            let pg = if a <= 0.0 {
                g.min(0.0)
            } else if a >= c {
                g.max(0.0)
            } else {
                g
            };
            if pg == 0.0 {
                continue;
            }
            let new = (a - g / qii[i]).clamp(0.0, c);
            let step = (new - a) * y[i];
            if step != 0.0 {
                for (wk, xk) in w.iter_mut().zip(&x[i]) {
                    *wk += step * xk;
                }
                bias += step;
                alpha[i] = new;
            }
        }
        let (primal, dual) = objectives(&w, bias, &alpha);
        if primal - dual <= GAP_TOL * primal.abs() {
            return Ok(DcdResult {
                w,
                bias,
                alpha,
                primal,
                dual,
                epochs: epoch,
            });
        }
    }
    let (primal, dual) = objectives(&w, bias, &alpha);
    Err(Error::NonConvergence {
        what: "linear SVM dual coordinate descent".into(),
        residual: (primal - dual) / primal.abs().max(f64::MIN_POSITIVE),
    })
}

#[derive(Clone, Debug, PartialEq)]
pub struct LinearSvm {
    /// One weight vector per class.
    pub w: Vec<Vec<f64>>,
    pub bias: Vec<f64>,
    pub c: f64,
}

impl LinearSvm {
    pub fn train(x: &[Vec<f64>], y: &[usize], c: f64, seed: u64) -> Result<Self> {
        let k = check_training(x, y)?;
        let (mut w, mut bias) = (Vec::with_capacity(k), Vec::with_capacity(k));
        for class in 0..k {
            let r = dcd_binary(x, &one_vs_rest(y, class), c, derive(seed, class as u64))?;
            w.push(r.w);
            bias.push(r.bias);
        }
        Ok(Self { w, bias, c })
    }
}

impl Classifier for LinearSvm {
    fn kind(&self) -> ModelKind {
        ModelKind::SvmLinear
    }
    fn classes(&self) -> usize {
        self.w.len()
    }
    fn dim(&self) -> usize {
        self.w[0].len()
    }
    fn decision_values(&self, x: &[f64]) -> Result<Vec<f64>> {
        check_dim(x, self.dim())?;
        Ok(self.w.iter().zip(&self.bias).map(|(w, &b)| dot_aug(w, b, x)).collect())
    }
    fn to_file(&self) -> Result<ModelFile> {
        let (k, d) = (self.classes(), self.dim());
        let mut f = ModelFile::new(
            ModelKind::SvmLinear,
            Geometry {
                dim: d,
                units: k,
                ..Default::default()
            },
        );
        f.push("w", &[k, d], self.w.concat())?;
        f.push("bias", &[k], self.bias.clone())?;
        f.push_scalar("c", self.c)?;
        Ok(f)
    }
}

pub struct LinearSvmFactory;

impl ClassifierFactory for LinearSvmFactory {
    fn name(&self) -> &'static str {
        "linear"
    }
    fn kind(&self) -> ModelKind {
        ModelKind::SvmLinear
    }
    fn train(&self, x: &[Vec<f64>], y: &[usize], cfg: &TrainConfig) -> Result<Box<dyn Classifier>> {
        Ok(Box::new(LinearSvm::train(x, y, cfg.c, cfg.seed)?))
    }
    fn load(&self, file: &ModelFile) -> Result<Box<dyn Classifier>> {
        file.expect_kind(ModelKind::SvmLinear)?;
        let (k, d) = (file.geometry.units, file.geometry.dim);
        let w = file.array("w", &[k, d])?;
        Ok(Box::new(LinearSvm {
            w: (0..k).map(|i| w[i * d..(i + 1) * d].to_vec()).collect(),
            bias: file.array("bias", &[k])?.to_vec(),
            c: file.scalar("c")?,
        }))
    }
}
