//! Frequency-dependent calibration splitting and the conformalization weights
//! that restore closed-set validity under it.

use std::collections::{BTreeSet, HashMap};

use rand::Rng;

use crate::closed_set::{ClosedSetPredictor, LabelPValues, SplitConformal};
use crate::data::{FrequencyProfile, Label, LabeledDataset, PredictionSet};
use crate::error::{invalid, Error, Result};

/// Calibration inclusion probability as a function of label frequency.
#[derive(Debug, Clone, PartialEq)]
pub struct InclusionPolicy {
    /// `pi(k)` for `k < table.len()`.
    table: Vec<f64>,
    /// `pi(k)` for every larger `k`.
    tail: f64,
    n_cal: usize,
    p1: f64,
}

impl InclusionPolicy {
    /// `pi(0) = pi(1) = 0`, `pi(k >= 2) = min(n_cal / (n (1 - p1)), 1)` with
    /// `p1 = M_1 / n` clamped to `[0, 1 - 1/n]`.
    pub fn recommended(profile: &FrequencyProfile, n_cal: usize) -> Result<Self> {
        let n = profile.n();
        if n_cal < 1 || n_cal > n {
            return Err(invalid("n_cal", format!("must lie in [1, {n}], got {n_cal}")));
        }
        let nf = n as f64;
        let p1 = (profile.m(1) as f64 / nf).clamp(0.0, 1.0 - 1.0 / nf);
        let tail = (n_cal as f64 / (nf * (1.0 - p1))).min(1.0);
        Ok(Self {
            table: vec![0.0, 0.0],
            tail,
            n_cal,
            p1,
        })
    }

    /// `pi(k) = p` for every `k`.
    pub fn constant(p: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&p) {
            return Err(invalid("pi", format!("must lie in [0, 1], got {p}")));
        }
        Ok(Self {
            table: Vec::new(),
            tail: p,
            n_cal: 0,
            p1: 0.0,
        })
    }

    /// Arbitrary table `pi(0), pi(1), ...`, constant beyond its end.
    pub fn from_table(table: Vec<f64>, tail: f64) -> Result<Self> {
        if table.iter().chain([&tail]).any(|p| !(0.0..=1.0).contains(p)) {
            return Err(invalid("pi", "probabilities must lie in [0, 1]"));
        }
        Ok(Self {
            table,
            tail,
            n_cal: 0,
            p1: 0.0,
        })
    }

    pub fn pi(&self, k: usize) -> f64 {
        self.table.get(k).copied().unwrap_or(self.tail)
    }

    pub fn n_cal(&self) -> usize {
        self.n_cal
    }

    pub fn p1(&self) -> f64 {
        self.p1
    }

    pub fn is_constant(&self) -> bool {
        self.table.iter().all(|&p| p == self.tail)
    }

    fn ln_pi(&self, k: usize) -> f64 {
        self.pi(k).ln()
    }

    fn ln_not_pi(&self, k: usize) -> f64 {
        (1.0 - self.pi(k)).ln()
    }
}

pub fn make_policy(n: usize, profile: &FrequencyProfile, n_cal: usize) -> Result<InclusionPolicy> {
    if n != profile.n() {
        return Err(invalid("n", format!("profile has {} labels, got n={n}", profile.n())));
    }
    InclusionPolicy::recommended(profile, n_cal)
}

/// Partition of `0..n` into calibration and training indices, both ascending.
#[derive(Debug, Clone, PartialEq)]
pub struct SplitAssignment {
    calibration: Vec<usize>,
    training: Vec<usize>,
    policy: Option<InclusionPolicy>,
}

impl SplitAssignment {
    pub fn from_calibration(n: usize, calibration: impl IntoIterator<Item = usize>) -> Result<Self> {
        let cal: BTreeSet<usize> = calibration.into_iter().collect();
        if let Some(&last) = cal.iter().next_back() {
            if last >= n {
                return Err(Error::InvalidLabelIndex { index: last, len: n });
            }
        }
        let training = (0..n).filter(|i| !cal.contains(i)).collect();
        Ok(Self {
            calibration: cal.into_iter().collect(),
            training,
            policy: None,
        })
    }

    pub fn calibration(&self) -> &[usize] {
        &self.calibration
    }

    pub fn training(&self) -> &[usize] {
        &self.training
    }

    pub fn policy(&self) -> Option<&InclusionPolicy> {
        self.policy.as_ref()
    }

    pub fn len(&self) -> usize {
        self.calibration.len() + self.training.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn in_calibration(&self) -> Vec<bool> {
        let mut flags = vec![false; self.len()];
        for &i in &self.calibration {
            flags[i] = true;
        }
        flags
    }
}

/// Independent `Bernoulli(pi(N(Y_i)))` calibration indicators.
pub fn selective_split<R: Rng + ?Sized>(
    labels: &[Label],
    policy: &InclusionPolicy,
    rng: &mut R,
) -> SplitAssignment {
    let profile = FrequencyProfile::from_labels(labels);
    let mut calibration = Vec::new();
    let mut training = Vec::new();
    for (i, &y) in labels.iter().enumerate() {
        if rng.random::<f64>() < policy.pi(profile.count(y)) {
            calibration.push(i);
        } else {
            training.push(i);
        }
    }
    SplitAssignment {
        calibration,
        training,
        policy: Some(policy.clone()),
    }
}

/// Uniformly random calibration set of exactly `n_cal` indices.
pub fn random_split<R: Rng + ?Sized>(n: usize, n_cal: usize, rng: &mut R) -> Result<SplitAssignment> {
    if n_cal > n {
        return Err(invalid("n_cal", format!("must not exceed n={n}, got {n_cal}")));
    }
    let picked = rand::seq::index::sample(rng, n, n_cal);
    SplitAssignment::from_calibration(n, picked.iter())
}

/// Weights over `D_cal ∪ {n+1}`, kept as unnormalized masses so that the
/// weighted p-value can be formed without an extra rounding step.
#[derive(Debug, Clone, PartialEq)]
pub struct ConformalizationWeights {
    calibration: Vec<usize>,
    mass: Vec<f64>,
    test_mass: f64,
    total: f64,
}

impl ConformalizationWeights {
    fn from_masses(calibration: Vec<usize>, mass: Vec<f64>, test_mass: f64) -> Self {
        let total = test_mass + mass.iter().sum::<f64>();
        Self {
            calibration,
            mass,
            test_mass,
            total,
        }
    }

    /// Calibration indices, aligned with [`Self::calibration_weights`].
    pub fn calibration(&self) -> &[usize] {
        &self.calibration
    }

    pub fn calibration_weights(&self) -> Vec<f64> {
        self.mass.iter().map(|m| m / self.total).collect()
    }

    pub fn test_weight(&self) -> f64 {
        self.test_mass / self.total
    }

    pub fn sum(&self) -> f64 {
        self.test_weight() + self.calibration_weights().iter().sum::<f64>()
    }

    /// `w_{n+1} + sum_j w_j 1{S_j >= s}`, with `scores` aligned to the
    /// calibration indices.
    pub fn pvalue(&self, scores: &[f64], s: f64) -> f64 {
        let hit: f64 = scores
            .iter()
            .zip(&self.mass)
            .filter(|(&sj, _)| sj >= s)
            .map(|(_, m)| m)
            .sum();
        (self.test_mass + hit) / self.total
    }
}

fn label_counts(labels: &[Label]) -> HashMap<Label, usize> {
    let mut counts = HashMap::new();
    for &y in labels {
        *counts.entry(y).or_insert(0usize) += 1;
    }
    counts
}

fn check_split(labels: &[Label], split: &SplitAssignment) -> Result<()> {
    if split.len() != labels.len() {
        return Err(Error::DimensionMismatch {
            expected: labels.len(),
            found: split.len(),
        });
    }
    Ok(())
}

/// Direct evaluation: for every `j in D_cal ∪ {n+1}`, the log of the full
/// product over all `n` positions of the swapped label sequence.
pub fn weights_naive(
    y: Label,
    labels: &[Label],
    split: &SplitAssignment,
    policy: &InclusionPolicy,
) -> Result<ConformalizationWeights> {
    check_split(labels, split)?;
    let counts = label_counts(labels);
    let in_cal = split.in_calibration();
    let count = |l: Label| counts.get(&l).copied().unwrap_or(0);

    let log_p = |swap: Option<usize>| -> f64 {
        let (plus, minus) = match swap {
            Some(j) if labels[j] != y => (Some(y), Some(labels[j])),
            _ => (None, None),
        };
        let swapped_count = |l: Label| {
            let mut c = count(l);
            if plus == Some(l) {
                c += 1;
            }
            if minus == Some(l) {
                c -= 1;
            }
            c
        };
        let mut acc = 0.0;
        for i in 0..labels.len() {
            let li = if swap == Some(i) { y } else { labels[i] };
            let c = swapped_count(li);
            acc += if in_cal[i] { policy.ln_pi(c) } else { policy.ln_not_pi(c) };
            if acc == f64::NEG_INFINITY {
                break;
            }
        }
        acc
    };

    let logs: Vec<f64> = split.calibration().iter().map(|&j| log_p(Some(j))).collect();
    let log_test = log_p(None);
    let top = logs.iter().copied().fold(log_test, f64::max);
    if top == f64::NEG_INFINITY {
        return Err(Error::DegeneratePolicy);
    }
    let mass = logs.iter().map(|&l| (l - top).exp()).collect();
    Ok(ConformalizationWeights::from_masses(
        split.calibration().to_vec(),
        mass,
        (log_test - top).exp(),
    ))
}

/// `exponent * (ln num - ln den)`, zero when the exponent is zero.
fn log_bracket(exponent: usize, ln_num: f64, ln_den: f64) -> f64 {
    if exponent == 0 {
        0.0
    } else {
        exponent as f64 * (ln_num - ln_den)
    }
}

/// Per-split counts shared by every candidate label.
#[derive(Debug, Clone)]
pub struct SwapRatios {
    counts: HashMap<Label, usize>,
    f_cal: HashMap<Label, usize>,
    f_train: HashMap<Label, usize>,
    /// Distinct calibration labels, ascending.
    cal_labels: Vec<Label>,
    baseline_feasible: bool,
}

impl SwapRatios {
    pub fn new(labels: &[Label], split: &SplitAssignment, policy: &InclusionPolicy) -> Result<Self> {
        check_split(labels, split)?;
        let counts = label_counts(labels);
        let mut f_cal: HashMap<Label, usize> = HashMap::new();
        for &i in split.calibration() {
            *f_cal.entry(labels[i]).or_default() += 1;
        }
        let mut f_train: HashMap<Label, usize> = HashMap::new();
        for &i in split.training() {
            *f_train.entry(labels[i]).or_default() += 1;
        }
        let mut cal_labels: Vec<Label> = f_cal.keys().copied().collect();
        cal_labels.sort_unstable();
        let baseline_feasible = counts.iter().all(|(l, &c)| {
            let fc = f_cal.get(l).copied().unwrap_or(0);
            let ft = f_train.get(l).copied().unwrap_or(0);
            (fc == 0 || policy.pi(c) > 0.0) && (ft == 0 || policy.pi(c) < 1.0)
        });
        Ok(Self {
            counts,
            f_cal,
            f_train,
            cal_labels,
            baseline_feasible,
        })
    }

    /// False when the observed split has probability zero under the policy.
    pub fn baseline_feasible(&self) -> bool {
        self.baseline_feasible
    }

    fn get(map: &HashMap<Label, usize>, l: Label) -> usize {
        map.get(&l).copied().unwrap_or(0)
    }

    /// `ln (p^(j)(y) / p^(n+1)(y))` for a calibration point labeled `l`.
    fn log_ratio(&self, y: Label, l: Label, policy: &InclusionPolicy) -> f64 {
        if y == l {
            return 0.0;
        }
        let nl = Self::get(&self.counts, l);
        let fcl = Self::get(&self.f_cal, l);
        let ftl = Self::get(&self.f_train, l);
        let ny = Self::get(&self.counts, y);
        let fcy = Self::get(&self.f_cal, y);
        let fty = Self::get(&self.f_train, y);
        log_bracket(fcl - 1, policy.ln_pi(nl - 1), policy.ln_pi(nl))
            + log_bracket(ftl, policy.ln_not_pi(nl - 1), policy.ln_not_pi(nl))
            + log_bracket(1, policy.ln_pi(ny + 1), policy.ln_pi(nl))
            + log_bracket(fcy, policy.ln_pi(ny + 1), policy.ln_pi(ny))
            + log_bracket(fty, policy.ln_not_pi(ny + 1), policy.ln_not_pi(ny))
    }

    /// Ratio mass per distinct calibration label, plus the test mass.
    fn masses(&self, y: Label, policy: &InclusionPolicy) -> (HashMap<Label, f64>, f64) {
        let logs: Vec<(Label, f64)> = self
            .cal_labels
            .iter()
            .map(|&l| (l, self.log_ratio(y, l, policy)))
            .collect();
        let shift = logs.iter().map(|&(_, v)| v).fold(0.0, f64::max);
        let masses = logs.into_iter().map(|(l, v)| (l, (v - shift).exp())).collect();
        (masses, (-shift).exp())
    }
}

/// Ratio form: only the factors of `y` and `Y_j` change under a swap.
pub fn weights_fast(
    y: Label,
    labels: &[Label],
    split: &SplitAssignment,
    policy: &InclusionPolicy,
) -> Result<ConformalizationWeights> {
    let ratios = SwapRatios::new(labels, split, policy)?;
    weights_from_ratios(&ratios, y, labels, split, policy)
}

fn weights_from_ratios(
    ratios: &SwapRatios,
    y: Label,
    labels: &[Label],
    split: &SplitAssignment,
    policy: &InclusionPolicy,
) -> Result<ConformalizationWeights> {
    if !ratios.baseline_feasible() {
        log::info!("unswapped split has zero probability under the policy; using direct weights");
        return weights_naive(y, labels, split, policy);
    }
    let (masses, test_mass) = ratios.masses(y, policy);
    let mass = split.calibration().iter().map(|&j| masses[&labels[j]]).collect();
    Ok(ConformalizationWeights::from_masses(
        split.calibration().to_vec(),
        mass,
        test_mass,
    ))
}

/// Weighted split-conformal predictor over the observed label space.
#[derive(Debug, Clone)]
pub struct WeightedSplitConformal {
    inner: SplitConformal,
    /// Calibration scores, ascending, and for each candidate the suffix sums
    /// of the aligned masses.
    sorted: Vec<f64>,
    suffix: HashMap<Label, (Vec<f64>, f64, f64)>,
}

impl WeightedSplitConformal {
    /// `inner` must have been calibrated on `split.calibration()`, in order.
    pub fn new(
        inner: SplitConformal,
        labels: &[Label],
        split: &SplitAssignment,
        policy: &InclusionPolicy,
    ) -> Result<Self> {
        let records = inner.records();
        if records.len() != split.calibration().len() {
            return Err(Error::DimensionMismatch {
                expected: split.calibration().len(),
                found: records.len(),
            });
        }
        let mut order: Vec<usize> = (0..records.len()).collect();
        order.sort_by(|&a, &b| records[a].score.total_cmp(&records[b].score));
        let sorted: Vec<f64> = order.iter().map(|&i| records[i].score).collect();

        let ratios = SwapRatios::new(labels, split, policy)?;
        let mut suffix = HashMap::new();
        for y in inner.label_space().collect::<Vec<_>>() {
            let w = weights_from_ratios(&ratios, y, labels, split, policy)?;
            let mut sums = vec![0.0; order.len() + 1];
            for (pos, &i) in order.iter().enumerate().rev() {
                sums[pos] = sums[pos + 1] + w.mass[i];
            }
            suffix.insert(y, (sums, w.test_mass, w.total));
        }
        Ok(Self {
            inner,
            sorted,
            suffix,
        })
    }

    pub fn inner(&self) -> &SplitConformal {
        &self.inner
    }

    fn weighted_pvalue(&self, y: Label, s: f64) -> f64 {
        let (sums, test_mass, total) = &self.suffix[&y];
        let first = self.sorted.partition_point(|&t| t < s);
        (test_mass + sums[first]) / total
    }
}

impl ClosedSetPredictor for WeightedSplitConformal {
    fn label_pvalues(&self, x: &[f64], rng: &mut crate::data::Rng) -> Result<LabelPValues> {
        let scores = self.inner.test_scores(x, rng)?;
        Ok(LabelPValues(
            scores
                .into_iter()
                .map(|(y, s)| (y, self.weighted_pvalue(y, s)))
                .collect(),
        ))
    }
}

/// `{ y in Y_n : w_{n+1}(y) + sum_j w_j(y) 1{S_j >= S_{n+1}(y)} > alpha }`.
pub fn weighted_predict(
    predictor: &WeightedSplitConformal,
    x: &[f64],
    alpha: f64,
    rng: &mut crate::data::Rng,
) -> Result<PredictionSet> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(invalid("alpha", format!("must lie in (0, 1), got {alpha}")));
    }
    predictor.predict(x, alpha, rng)
}

/// Trains on the split's training rows and calibrates with weights.
pub fn weighted_predictor<R: Rng + ?Sized>(
    data: &LabeledDataset,
    split: &SplitAssignment,
    policy: &InclusionPolicy,
    cfg: &crate::closed_set::ClosedSetConfig,
    rng: &mut R,
) -> Result<WeightedSplitConformal> {
    let inner = crate::closed_set::plug_in_predictor(data, split, cfg, rng)?;
    WeightedSplitConformal::new(inner, data.labels(), split, policy)
}
