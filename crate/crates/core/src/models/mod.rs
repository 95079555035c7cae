//! In-tree predictive models: a distance-weighted k-nearest-neighbor
//! classifier and a local-outlier-factor one-class scorer.

mod knn;
mod lof;

pub use knn::{knn_fit, knn_predict_proba, KnnClassifier, Metric, DISTANCE_FLOOR};
pub use lof::{lof_fit, lof_score, LofScorer, DEFAULT_LOF_NEIGHBORS};

pub(crate) fn euclidean(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}
