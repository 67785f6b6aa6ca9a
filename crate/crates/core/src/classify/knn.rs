use super::{check_dim, check_training, Classifier, ClassifierFactory, TrainConfig};
use crate::error::{Error, Result};
use crate::io::{Geometry, ModelFile, ModelKind};

/// Majority vote among the `k` nearest training features (Euclidean);
/// ties go to the class holding the nearest of the tied neighbors.
#[derive(Clone, Debug, PartialEq)]
pub struct Knn {
    pub k: usize,
    pub features: Vec<Vec<f64>>,
    pub labels: Vec<usize>,
    pub classes: usize,
}

impl Knn {
    pub fn train(x: &[Vec<f64>], y: &[usize], k: usize) -> Result<Self> {
        let classes = check_training(x, y)?;
        if k == 0 {
            return Err(Error::config("k must be at least 1"));
        }
        Ok(Self {
            k,
            features: x.to_vec(),
            labels: y.to_vec(),
            classes,
        })
    }
}

impl Classifier for Knn {
    fn kind(&self) -> ModelKind {
        ModelKind::Knn
    }
    fn classes(&self) -> usize {
        self.classes
    }
    fn dim(&self) -> usize {
        self.features[0].len()
    }
    /// Votes per class plus a tie-break bonus below one vote.
    fn decision_values(&self, x: &[f64]) -> Result<Vec<f64>> {
        check_dim(x, self.dim())?;
        let mut d: Vec<(f64, usize)> = self
            .features
            .iter()
            .zip(&self.labels)
            .map(|(f, &l)| (f.iter().zip(x).map(|(a, b)| (a - b) * (a - b)).sum(), l))
            .collect();
        d.sort_by(|a, b| a.0.total_cmp(&b.0));
        let k = self.k.min(d.len());
        let mut votes = vec![0.0; self.classes];
        for (rank, &(_, l)) in d[..k].iter().enumerate() {
            if votes[l] == 0.0 {
                votes[l] += 0.5 * (k - rank) as f64 / k as f64;
            }
            votes[l] += 1.0;
        }
        Ok(votes)
    }
    fn to_file(&self) -> Result<ModelFile> {
        let (n, d) = (self.features.len(), self.dim());
        let mut f = ModelFile::new(
            ModelKind::Knn,
            Geometry {
                dim: d,
                units: self.classes,
                ..Default::default()
            },
        );
        f.push("features", &[n, d], self.features.concat())?;
        f.push("labels", &[n], self.labels.iter().map(|&l| l as f64).collect())?;
        f.push_scalar("k", self.k as f64)?;
        Ok(f)
    }
}

pub struct KnnFactory;

impl ClassifierFactory for KnnFactory {
    fn name(&self) -> &'static str {
        "knn3"
    }
    fn kind(&self) -> ModelKind {
        ModelKind::Knn
    }
    fn train(&self, x: &[Vec<f64>], y: &[usize], cfg: &TrainConfig) -> Result<Box<dyn Classifier>> {
        Ok(Box::new(Knn::train(x, y, cfg.k)?))
    }
    fn load(&self, file: &ModelFile) -> Result<Box<dyn Classifier>> {
        file.expect_kind(ModelKind::Knn)?;
        let d = file.geometry.dim;
        let n = file.get("labels")?.shape.first().copied().unwrap_or(0);
        let feats = file.array("features", &[n, d])?;
        Ok(Box::new(Knn {
            k: file.scalar("k")? as usize,
            features: (0..n).map(|i| feats[i * d..(i + 1) * d].to_vec()).collect(),
            labels: file.array("labels", &[n])?.iter().map(|&l| l as usize).collect(),
            classes: file.geometry.units,
        }))
    }
}
