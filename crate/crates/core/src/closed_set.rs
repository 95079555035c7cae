//! Split-conformal classification over a finite label space with
//! generalized inverse-quantile (APS) nonconformity scores.

use std::collections::{BTreeSet, HashMap};

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::data::{check_dim, observed_label_space, Label, LabeledDataset, PredictionSet};
use crate::error::{invalid, Error, Result};
use crate::models::{KnnClassifier, Metric};
use crate::selective_split::SplitAssignment;

/// APS score options. The randomized form subtracts `U * p(label)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ApsConfig {
    pub randomized: bool,
}

impl Default for ApsConfig {
    fn default() -> Self {
        Self { randomized: true }
    }
}

impl ApsConfig {
    pub fn deterministic() -> Self {
        Self { randomized: false }
    }

    fn draw<R: Rng + ?Sized>(&self, rng: &mut R) -> Option<f64> {
        self.randomized.then(|| rng.random::<f64>())
    }
}

/// Scores of every label for one probability vector.
///
/// Labels are ranked by decreasing probability, ties broken by ascending
/// index; a label's score is the cumulative mass through its rank, minus
/// `u * p` when `u` is given. Cumulative sums are divided by the total mass,
/// so every label at or below the last positive entry scores exactly 1.
pub fn aps_scores(probs: &[f64], u: Option<f64>) -> Vec<f64> {
    let mut order: Vec<usize> = (0..probs.len()).collect();
    order.sort_by(|&a, &b| probs[b].total_cmp(&probs[a]).then(a.cmp(&b)));
    let mut cum = vec![0.0; probs.len()];
    let mut acc = 0.0;
    for &i in &order {
        acc += probs[i];
        cum[i] = acc;
    }
    let total = acc;
    probs
        .iter()
        .zip(&cum)
        .map(|(&p, &c)| {
            let c = match u {
                Some(u) => c - u * p,
                None => c,
            };
            if total > 0.0 {
                c / total
            } else {
                1.0
            }
        })
        .collect()
}

pub fn aps_score<R: Rng + ?Sized>(
    probs: &[f64],
    label_index: usize,
    cfg: ApsConfig,
    rng: &mut R,
) -> Result<f64> {
    if label_index >= probs.len() {
        return Err(Error::InvalidLabelIndex {
            index: label_index,
            len: probs.len(),
        });
    }
    let u = cfg.draw(rng);
    Ok(aps_scores(probs, u)[label_index])
}

fn check_alpha(alpha: f64) -> Result<()> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(invalid("alpha", format!("must lie in (0, 1), got {alpha}")));
    }
    Ok(())
}

/// `ceil((1 + n)(1 - alpha))`-th smallest score, or `+inf` when that rank
/// exceeds `n`.
pub fn calibrate_threshold(scores: &[f64], alpha: f64) -> Result<f64> {
    check_alpha(alpha)?;
    if scores.is_empty() {
        return Err(Error::EmptyScores);
    }
    let n = scores.len();
    let rank = ((1.0 + n as f64) * (1.0 - alpha) - 1e-9).ceil() as usize;
    if rank > n {
        return Ok(f64::INFINITY);
    }
    let mut sorted = scores.to_vec();
    sorted.sort_by(f64::total_cmp);
    Ok(sorted[rank.max(1) - 1])
}

/// `(1 + #{i : S_i >= S_test}) / (1 + n)`.
pub fn conformal_pvalue(test_score: f64, cal_scores: &[f64]) -> f64 {
    let geq = cal_scores.iter().filter(|&&s| s >= test_score).count();
    (1 + geq) as f64 / (1 + cal_scores.len()) as f64
}

/// Same as [`conformal_pvalue`] on ascending-sorted scores.
pub(crate) fn sorted_pvalue(test_score: f64, sorted: &[f64]) -> f64 {
    let below = sorted.partition_point(|&s| s < test_score);
    (1 + sorted.len() - below) as f64 / (1 + sorted.len()) as f64
}

/// Probability mass given to calibration labels that the model never saw:
/// the Good-Turing unseen mass spread evenly over them, plus uniform noise on
/// `[0, noise_fraction * base]`, followed by renormalization.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UnseenSmoothing {
    pub n_train: usize,
    pub n_singleton: usize,
    pub n_unseen: usize,
    pub noise_fraction: f64,
}

impl UnseenSmoothing {
    pub fn base_probability(&self) -> f64 {
        (1 + self.n_singleton) as f64 / ((1 + self.n_train) as f64 * self.n_unseen as f64)
    }

    pub fn apply<R: Rng + ?Sized>(&self, probs: &[f64], rng: &mut R) -> Vec<f64> {
        if self.n_unseen == 0 {
            return probs.to_vec();
        }
        let base = self.base_probability();
        let mut out = Vec::with_capacity(probs.len() + self.n_unseen);
        out.extend_from_slice(probs);
        for _ in 0..self.n_unseen {
            let noise = if self.noise_fraction > 0.0 {
                rng.random::<f64>() * self.noise_fraction * base
            } else {
                0.0
            };
            out.push(base + noise);
        }
        let total: f64 = out.iter().sum();
        for p in &mut out {
            *p /= total;
        }
        out
    }
}

pub const DEFAULT_NOISE_FRACTION: f64 = 0.1;

pub fn smooth_unseen_probs<R: Rng + ?Sized>(
    probs: &[f64],
    n_unseen: usize,
    n_train: usize,
    n_singleton: usize,
    rng: &mut R,
) -> Vec<f64> {
    UnseenSmoothing {
        n_train,
        n_singleton,
        n_unseen,
        noise_fraction: DEFAULT_NOISE_FRACTION,
    }
    .apply(probs, rng)
}

/// Calibration score with the label it was computed for.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CalibrationRecord {
    pub score: f64,
    pub label: Label,
}

/// Conformal p-values of every candidate label at one test point.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct LabelPValues(pub Vec<(Label, f64)>);

impl LabelPValues {
    /// `{ y : p(y) > alpha }`.
    pub fn set_at(&self, alpha: f64) -> BTreeSet<Label> {
        self.0.iter().filter(|&&(_, p)| p > alpha).map(|&(y, _)| y).collect()
    }

    pub fn get(&self, y: Label) -> Option<f64> {
        self.0.iter().find(|&&(l, _)| l == y).map(|&(_, p)| p)
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

/// A closed-set conformal predictor: anything that produces a conformal
/// p-value per candidate label.
pub trait ClosedSetPredictor: Send + Sync {
    fn label_pvalues(&self, x: &[f64], rng: &mut crate::data::Rng) -> Result<LabelPValues>;

    fn predict(&self, x: &[f64], alpha: f64, rng: &mut crate::data::Rng) -> Result<PredictionSet> {
        Ok(PredictionSet::new(self.label_pvalues(x, rng)?.set_at(alpha), false))
    }
}

/// Model settings shared by the split-conformal predictors.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClosedSetConfig {
    pub knn_k: usize,
    pub metric: Metric,
    pub aps: ApsConfig,
    pub noise_fraction: f64,
}

impl Default for ClosedSetConfig {
    fn default() -> Self {
        Self {
            knn_k: 5,
            metric: Metric::Euclidean,
            aps: ApsConfig::default(),
            noise_fraction: DEFAULT_NOISE_FRACTION,
        }
    }
}

/// Split-conformal predictor with APS scores over a fixed label space.
#[derive(Debug, Clone)]
pub struct SplitConformal {
    model: KnnClassifier,
    cfg: ApsConfig,
    smoothing: UnseenSmoothing,
    /// Candidate labels and their position in the probability vector
    /// (model classes first, then smoothed labels).
    candidates: Vec<(Label, usize)>,
    records: Vec<CalibrationRecord>,
    sorted: Vec<f64>,
}

impl SplitConformal {
    /// Scores the calibration data. Labels of `label_space` (and of the
    /// calibration data) missing from the model get smoothed probabilities.
    pub fn calibrate<R: Rng + ?Sized>(
        model: KnnClassifier,
        calibration: &LabeledDataset,
        label_space: &BTreeSet<Label>,
        cfg: ApsConfig,
        noise_fraction: f64,
        rng: &mut R,
    ) -> Result<Self> {
        if !calibration.is_empty() {
            check_dim(model.dim(), calibration.row(0))?;
        }
        let known: BTreeSet<Label> = model.classes().iter().copied().collect();
        let unseen: BTreeSet<Label> = label_space
            .iter()
            .chain(calibration.labels())
            .filter(|y| !known.contains(y))
            .copied()
            .collect();
        let mut extended = model.classes().to_vec();
        extended.extend(unseen.iter().copied());
        let position: HashMap<Label, usize> =
            extended.iter().enumerate().map(|(i, &y)| (y, i)).collect();
        let candidates = label_space.iter().map(|&y| (y, position[&y])).collect();
        let smoothing = UnseenSmoothing {
            n_train: model.n_train(),
            n_singleton: model.n_singleton(),
            n_unseen: unseen.len(),
            noise_fraction,
        };

        let mut predictor = Self {
            model,
            cfg,
            smoothing,
            candidates,
            records: Vec::with_capacity(calibration.len()),
            sorted: Vec::new(),
        };
        for (i, x) in calibration.rows().enumerate() {
            let y = calibration.label(i);
            let scores = predictor.scores(x, rng)?;
            predictor.records.push(CalibrationRecord {
                score: scores[position[&y]],
                label: y,
            });
        }
        predictor.sorted = predictor.records.iter().map(|r| r.score).collect();
        predictor.sorted.sort_by(f64::total_cmp);
        Ok(predictor)
    }

    /// APS scores of all labels in probability-vector order.
    fn scores<R: Rng + ?Sized>(&self, x: &[f64], rng: &mut R) -> Result<Vec<f64>> {
        let probs = self.model.predict_proba(x)?;
        let probs = self.smoothing.apply(&probs, rng);
        Ok(aps_scores(&probs, self.cfg.draw(rng)))
    }

    /// Test scores `S_{n+1}(y)` for every candidate label, in label order.
    pub fn test_scores<R: Rng + ?Sized>(&self, x: &[f64], rng: &mut R) -> Result<Vec<(Label, f64)>> {
        let scores = self.scores(x, rng)?;
        Ok(self.candidates.iter().map(|&(y, i)| (y, scores[i])).collect())
    }

    pub fn records(&self) -> &[CalibrationRecord] {
        &self.records
    }

    pub fn model(&self) -> &KnnClassifier {
        &self.model
    }

    pub fn label_space(&self) -> impl Iterator<Item = Label> + '_ {
        self.candidates.iter().map(|&(y, _)| y)
    }

    pub fn threshold(&self, alpha: f64) -> Result<f64> {
        calibrate_threshold(&self.sorted, alpha)
    }
}

impl ClosedSetPredictor for SplitConformal {
    fn label_pvalues(&self, x: &[f64], rng: &mut crate::data::Rng) -> Result<LabelPValues> {
        let scores = self.test_scores(x, rng)?;
        Ok(LabelPValues(
            scores
                .into_iter()
                .map(|(y, s)| (y, sorted_pvalue(s, &self.sorted)))
                .collect(),
        ))
    }
}

/// `{ y in label_space : p(y) > alpha }`; never contains the joker.
pub fn closed_set_predict(
    predictor: &SplitConformal,
    x: &[f64],
    alpha: f64,
    rng: &mut crate::data::Rng,
) -> Result<PredictionSet> {
    check_alpha(alpha)?;
    predictor.predict(x, alpha, rng)
}

/// Trains on the split's training part, calibrates on its calibration part,
/// and uses every observed label as the label space.
pub fn plug_in_predictor<R: Rng + ?Sized>(
    data: &LabeledDataset,
    split: &SplitAssignment,
    cfg: &ClosedSetConfig,
    rng: &mut R,
) -> Result<SplitConformal> {
    let train = data.subset(split.training());
    let cal = data.subset(split.calibration());
    let model = KnnClassifier::fit(&train, cfg.knn_k, cfg.metric)?;
    let space = observed_label_space(data.labels());
    SplitConformal::calibrate(model, &cal, &space, cfg.aps, cfg.noise_fraction, rng)
}

pub fn plug_in_predict(
    data: &LabeledDataset,
    x: &[f64],
    alpha: f64,
    split: &SplitAssignment,
    cfg: &ClosedSetConfig,
    rng: &mut crate::data::Rng,
) -> Result<PredictionSet> {
    let predictor = plug_in_predictor(data, split, cfg, rng)?;
    closed_set_predict(&predictor, x, alpha, rng)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::RandomSource;

    fn rng() -> crate::data::Rng {
        RandomSource::new(11).rng()
    }

    #[test]
    fn aps_deterministic_examples() {
        let mut r = rng();
        let det = ApsConfig::deterministic();
        assert_eq!(aps_score(&[1.0], 0, det, &mut r).unwrap(), 1.0);
        let p = [0.6, 0.3, 0.1];
        assert!((aps_score(&p, 1, det, &mut r).unwrap() - 0.9).abs() < 1e-12);
        assert!((aps_score(&p, 0, det, &mut r).unwrap() - 0.6).abs() < 1e-12);
        assert!((aps_score(&p, 2, det, &mut r).unwrap() - 1.0).abs() < 1e-12);
        assert!(matches!(
            aps_score(&p, 3, det, &mut r),
            Err(Error::InvalidLabelIndex { index: 3, len: 3 })
        ));
    }

    #[test]
    fn aps_ties_follow_index_order() {
        let s = aps_scores(&[0.25, 0.5, 0.25], None);
        assert_eq!(s, vec![0.75, 0.5, 1.0]);
        // zero-probability labels share the top score exactly
        let s = aps_scores(&[0.7, 0.0, 0.3, 0.0], None);
        assert_eq!(s[1], 1.0);
        assert_eq!(s[3], 1.0);
    }

    #[test]
    fn randomized_aps_stays_in_band() {
        let mut r = rng();
        let p = [0.6, 0.3, 0.1];
        for _ in 0..200 {
            let s = aps_score(&p, 1, ApsConfig::default(), &mut r).unwrap();
            assert!((0.6 - 1e-12..=0.9 + 1e-12).contains(&s));
        }
    }

    #[test]
    fn threshold_order_statistic() {
        let scores: Vec<f64> = (1..=9).map(|i| i as f64 / 10.0).collect();
        assert_eq!(calibrate_threshold(&scores, 0.1).unwrap(), 0.9);
        assert_eq!(calibrate_threshold(&[0.42], 0.6).unwrap(), 0.42);
        assert_eq!(
            calibrate_threshold(&[0.1, 0.2, 0.3, 0.4], 0.1).unwrap(),
            f64::INFINITY
        );
        assert!(matches!(calibrate_threshold(&[], 0.1), Err(Error::EmptyScores)));
        assert!(calibrate_threshold(&[0.1], 1.0).is_err());
    }

    #[test]
    fn pvalue_extremes_and_ties() {
        let cal: Vec<f64> = (1..=9).map(|i| i as f64).collect();
        assert_eq!(conformal_pvalue(100.0, &cal), 0.1);
        assert_eq!(conformal_pvalue(-1.0, &cal), 1.0);
        // ties count: cal = [1,2,2,2,3,4,5,6,7], test 2 -> (1 + 3 + 5) / 10
        let cal = [1.0, 2.0, 2.0, 2.0, 3.0, 4.0, 5.0, 6.0, 7.0];
        assert_eq!(conformal_pvalue(2.0, &cal), 0.9);
        let mut sorted = cal.to_vec();
        sorted.sort_by(f64::total_cmp);
        for t in [0.0, 2.0, 2.5, 7.0, 8.0] {
            assert_eq!(sorted_pvalue(t, &sorted), conformal_pvalue(t, &cal));
        }
    }

    #[test]
    fn smoothing_formula() {
        let mut r = rng();
        let p = vec![0.5, 0.5];
        assert_eq!(smooth_unseen_probs(&p, 0, 99, 9, &mut r), p);
        let s = UnseenSmoothing {
            n_train: 99,
            n_singleton: 9,
            n_unseen: 2,
            noise_fraction: 0.0,
        };
        assert!((s.base_probability() - 0.05).abs() < 1e-15);
        let out = s.apply(&p, &mut r);
        assert_eq!(out.len(), 4);
        assert!((out[2] - 0.05 / 1.1).abs() < 1e-12);
        let noisy = smooth_unseen_probs(&p, 3, 99, 9, &mut r);
        assert!((noisy.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn threshold_and_pvalue_characterizations_agree() {
        // p(y) > alpha  <=>  S(y) <= tau when scores are distinct
        let cal: Vec<f64> = (0..40).map(|i| ((i * 37) % 40) as f64 / 40.0 + 0.001).collect();
        for &alpha in &[0.05, 0.1, 0.2, 0.5] {
            let tau = calibrate_threshold(&cal, alpha).unwrap();
            for t in 0..100 {
                let s = t as f64 / 100.0;
                assert_eq!(conformal_pvalue(s, &cal) > alpha, s <= tau, "alpha {alpha} s {s}");
            }
        }
    }
}
