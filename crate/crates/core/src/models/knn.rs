use std::cmp::Ordering;
use std::collections::HashMap;

use crate::data::{check_dim, Label, LabeledDataset};
use crate::error::{invalid, Error, Result};

use super::euclidean;

/// Inverse-distance weights use `1 / max(d, DISTANCE_FLOOR)`.
pub const DISTANCE_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Metric {
    #[default]
    Euclidean,
    /// `1 - cos(a, b)`; a zero vector is at distance 1 from everything.
    Cosine,
}

impl Metric {
    fn distance(self, a: &[f64], b: &[f64], norm_a: f64, norm_b: f64) -> f64 {
        match self {
            Metric::Euclidean => euclidean(a, b),
            Metric::Cosine => {
                if norm_a == 0.0 || norm_b == 0.0 {
                    return 1.0;
                }
                let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
                (1.0 - dot / (norm_a * norm_b)).max(0.0)
            }
        }
    }
}

fn norm(x: &[f64]) -> f64 {
    x.iter().map(|v| v * v).sum::<f64>().sqrt()
}

/// Probabilistic k-NN classifier with inverse-distance neighbor weights.
#[derive(Debug, Clone)]
pub struct KnnClassifier {
    k: usize,
    metric: Metric,
    dim: usize,
    features: Vec<f64>,
    norms: Vec<f64>,
    targets: Vec<usize>,
    classes: Vec<Label>,
    n_singleton: usize,
}

impl KnnClassifier {
    pub fn fit(train: &LabeledDataset, k: usize, metric: Metric) -> Result<Self> {
        if train.is_empty() {
            return Err(Error::EmptyTrainingData);
        }
        if k == 0 {
            return Err(invalid("k", "neighbor count must be at least 1"));
        }
        let mut classes: Vec<Label> = train.labels().to_vec();
        classes.sort_unstable();
        classes.dedup();
        let index: HashMap<Label, usize> =
            classes.iter().enumerate().map(|(i, &y)| (y, i)).collect();
        let targets: Vec<usize> = train.labels().iter().map(|y| index[y]).collect();

        let mut per_class = vec![0usize; classes.len()];
        for &t in &targets {
            per_class[t] += 1;
        }
        let n_singleton = per_class.iter().filter(|&&c| c == 1).count();

        let norms = match metric {
            Metric::Euclidean => Vec::new(),
            Metric::Cosine => train.rows().map(norm).collect(),
        };
        Ok(Self {
            k: k.min(train.len()),
            metric,
            dim: train.dim(),
            features: train.features().to_vec(),
            norms,
            targets,
            classes,
            n_singleton,
        })
    }

    /// Effective neighbor count, `min(k, n_train)`.
    pub fn k(&self) -> usize {
        self.k
    }

    pub fn metric(&self) -> Metric {
        self.metric
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Sorted distinct training labels; probability vectors follow this order.
    pub fn classes(&self) -> &[Label] {
        &self.classes
    }

    pub fn n_train(&self) -> usize {
        self.targets.len()
    }

    /// Number of labels that occur exactly once in the training data.
    pub fn n_singleton(&self) -> usize {
        self.n_singleton
    }

    pub fn predict_proba(&self, x: &[f64]) -> Result<Vec<f64>> {
        check_dim(self.dim, x)?;
        let norm_x = match self.metric {
            Metric::Euclidean => 0.0,
            Metric::Cosine => norm(x),
        };
        let mut dists: Vec<(f64, usize)> = self
            .features
            .chunks_exact(self.dim)
            .enumerate()
            .map(|(i, row)| {
                let norm_row = self.norms.get(i).copied().unwrap_or(0.0);
                (self.metric.distance(x, row, norm_x, norm_row), i)
            })
            .collect();
        let by_distance =
            |a: &(f64, usize), b: &(f64, usize)| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1));
        if self.k < dists.len() {
            dists.select_nth_unstable_by(self.k - 1, by_distance);
            dists.truncate(self.k);
        }

        let mut probs = vec![0.0; self.classes.len()];
        for &(d, i) in &dists {
            probs[self.targets[i]] += 1.0 / d.max(DISTANCE_FLOOR);
        }
        let total: f64 = probs.iter().sum();
        for p in &mut probs {
            *p /= total;
        }
        Ok(probs)
    }

    /// Index of the most probable class (lowest index on ties).
    pub fn predict(&self, x: &[f64]) -> Result<Label> {
        let probs = self.predict_proba(x)?;
        let best = probs
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.partial_cmp(b.1).unwrap_or(Ordering::Equal).then(b.0.cmp(&a.0)))
            .map(|(i, _)| i)
            .unwrap_or(0);
        Ok(self.classes[best])
    }
}

pub fn knn_fit(train: &LabeledDataset, k: usize, metric: Metric) -> Result<KnnClassifier> {
    KnnClassifier::fit(train, k, metric)
}

pub fn knn_predict_proba(model: &KnnClassifier, x: &[f64]) -> Result<Vec<f64>> {
    model.predict_proba(x)
}
