//! The open-set classifier: closed-set conformal sets combined with the
//! Good-Turing tests through a three-way significance budget, plus the
//! cross-validated budget allocator.

use std::collections::BTreeSet;

use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::closed_set::{plug_in_predictor, ClosedSetConfig, ClosedSetPredictor, LabelPValues, SplitConformal};
use crate::data::{
    observed_label_space, FrequencyProfile, Label, LabeledDataset, PredictionSet, RandomSource, Stream,
};
use crate::error::{invalid, Error, Result};
use crate::good_turing::{GoodTuringTests, GtConfig};
use crate::selective_split::{
    make_policy, random_split, selective_split, SplitAssignment, WeightedSplitConformal,
};

const SUM_TOLERANCE: f64 = 1e-12;

/// Split of the total budget `alpha` into its three parts.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AlphaAllocation {
    pub alpha_class: f64,
    pub alpha_unseen: f64,
    pub alpha_seen: f64,
}

impl AlphaAllocation {
    pub fn new(alpha_class: f64, alpha_unseen: f64, alpha_seen: f64, alpha: f64) -> Result<Self> {
        let a = Self {
            alpha_class,
            alpha_unseen,
            alpha_seen,
        };
        a.validate(alpha)?;
        Ok(a)
    }

    /// `alpha / 3` each, with the rounding remainder on `alpha_seen`.
    pub fn even(alpha: f64) -> Result<Self> {
        let third = alpha / 3.0;
        Self::new(third, third, alpha - 2.0 * third, alpha)
    }

    pub fn total(&self) -> f64 {
        self.alpha_class + self.alpha_unseen + self.alpha_seen
    }

    pub fn validate(&self, alpha: f64) -> Result<()> {
        for (name, v) in [
            ("alpha_class", self.alpha_class),
            ("alpha_unseen", self.alpha_unseen),
            ("alpha_seen", self.alpha_seen),
        ] {
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::InvalidAllocation(format!("{name} = {v} outside [0, 1]")));
            }
        }
        if (self.total() - alpha).abs() > SUM_TOLERANCE {
            return Err(Error::InvalidAllocation(format!(
                "parts sum to {}, expected {alpha}",
                self.total()
            )));
        }
        Ok(())
    }
}

/// Which of the three joker rules fired.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Branch {
    /// Evidence against a new label, none against a seen one.
    ClosedOnly,
    /// Evidence against every seen label, none against a new one.
    JokerOnly,
    Both,
}

pub fn branch(psi_unseen: f64, psi_seen: f64, alloc: &AlphaAllocation) -> Branch {
    let reject_unseen = psi_unseen <= alloc.alpha_unseen;
    let reject_seen = psi_seen <= alloc.alpha_seen;
    match (reject_unseen, reject_seen) {
        (true, false) => Branch::ClosedOnly,
        (false, true) => Branch::JokerOnly,
        _ => Branch::Both,
    }
}

pub fn assemble(closed: BTreeSet<Label>, psi_unseen: f64, psi_seen: f64, alloc: &AlphaAllocation) -> PredictionSet {
    match branch(psi_unseen, psi_seen, alloc) {
        Branch::ClosedOnly => PredictionSet::new(closed, false),
        Branch::JokerOnly => PredictionSet::joker_only(),
        Branch::Both => PredictionSet::new(closed, true),
    }
}

/// `|seen| + 1{joker}`.
pub fn cardinality(set: &PredictionSet) -> usize {
    set.cardinality()
}

/// `lambda |set| / baseline + (1 - lambda) 1{joker in set, y_true seen}`.
pub fn allocation_loss(
    set: &PredictionSet,
    y_true: Label,
    baseline_size: usize,
    seen_space: &BTreeSet<Label>,
    lambda: f64,
) -> Result<f64> {
    if baseline_size == 0 {
        return Err(Error::EmptyBaseline);
    }
    Ok(loss_value(
        set.cardinality(),
        set.joker,
        seen_space.contains(&y_true),
        baseline_size,
        lambda,
    ))
}

fn loss_value(size: usize, joker: bool, seen: bool, baseline: usize, lambda: f64) -> f64 {
    let wasted = if joker && seen { 1.0 } else { 0.0 };
    lambda * size as f64 / baseline as f64 + (1.0 - lambda) * wasted
}

/// Everything needed to form the set at any allocation for one test point.
#[derive(Debug, Clone, PartialEq)]
pub struct CgtcEvaluation {
    pub label_pvalues: LabelPValues,
    pub psi_unseen: f64,
    pub psi_seen: f64,
}

impl CgtcEvaluation {
    pub fn closed_set(&self, alpha: f64) -> BTreeSet<Label> {
        self.label_pvalues.set_at(alpha)
    }

    pub fn assemble(&self, alloc: &AlphaAllocation) -> PredictionSet {
        assemble(self.closed_set(alloc.alpha_class), self.psi_unseen, self.psi_seen, alloc)
    }

    pub fn branch(&self, alloc: &AlphaAllocation) -> Branch {
        branch(self.psi_unseen, self.psi_seen, alloc)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SplitStrategy {
    #[default]
    Random,
    Selective,
}

impl SplitStrategy {
    pub fn name(self) -> &'static str {
        match self {
            SplitStrategy::Random => "random",
            SplitStrategy::Selective => "selective",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PipelineConfig {
    pub split: SplitStrategy,
    /// Calibration share: exact for random splits, the target for selective ones.
    pub cal_fraction: f64,
    pub closed: ClosedSetConfig,
    pub gt: GtConfig,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            split: SplitStrategy::Random,
            cal_fraction: 0.1,
            closed: ClosedSetConfig::default(),
            gt: GtConfig::default(),
        }
    }
}

impl PipelineConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.cal_fraction > 0.0 && self.cal_fraction < 1.0) {
            return Err(invalid("cal_fraction", format!("must lie in (0, 1), got {}", self.cal_fraction)));
        }
        if self.closed.knn_k == 0 {
            return Err(invalid("knn_k", "must be at least 1"));
        }
        if self.gt.beta.is_nan() || self.gt.beta <= 0.0 {
            return Err(invalid("beta", "must be positive"));
        }
        if self.gt.lof_neighbors == 0 {
            return Err(invalid("lof_neighbors", "must be at least 1"));
        }
        Ok(())
    }

    /// Calibration size for `n` reference points, kept in `[1, n - 1]`.
    pub fn n_cal(&self, n: usize) -> usize {
        ((self.cal_fraction * n as f64).round() as usize).clamp(1, n.saturating_sub(1).max(1))
    }
}

#[derive(Debug, Clone)]
enum ClosedModel {
    Plain(SplitConformal),
    Weighted(WeightedSplitConformal),
}

impl ClosedModel {
    fn predictor(&self) -> &dyn ClosedSetPredictor {
        match self {
            ClosedModel::Plain(p) => p,
            ClosedModel::Weighted(p) => p,
        }
    }
}

/// A fitted reference set: split, closed-set predictor and Good-Turing tests.
#[derive(Debug, Clone)]
pub struct CgtcModel {
    closed: ClosedModel,
    tests: GoodTuringTests,
    split: SplitAssignment,
    seen: BTreeSet<Label>,
}

impl CgtcModel {
    pub fn fit(data: &LabeledDataset, cfg: &PipelineConfig, src: &RandomSource) -> Result<Self> {
        cfg.validate()?;
        if data.len() < 2 {
            return Err(Error::InsufficientReferenceData {
                needed: 2,
                got: data.len(),
            });
        }
        let n = data.len();
        let n_cal = cfg.n_cal(n);
        let mut split_rng = src.named(Stream::Split).rng();
        let mut cal_rng = src.named(Stream::Smoothing).rng();
        let (split, closed) = match cfg.split {
            SplitStrategy::Random => {
                let split = random_split(n, n_cal, &mut split_rng)?;
                let p = plug_in_predictor(data, &split, &cfg.closed, &mut cal_rng)?;
                (split, ClosedModel::Plain(p))
            }
            SplitStrategy::Selective => {
                let profile = FrequencyProfile::from_labels(data.labels());
                let policy = make_policy(n, &profile, n_cal)?;
                let split = selective_split(data.labels(), &policy, &mut split_rng);
                let p = plug_in_predictor(data, &split, &cfg.closed, &mut cal_rng)?;
                let p = WeightedSplitConformal::new(p, data.labels(), &split, &policy)?;
                (split, ClosedModel::Weighted(p))
            }
        };
        let tests = GoodTuringTests::fit(data, cfg.gt)?;
        Ok(Self {
            closed,
            tests,
            split,
            seen: observed_label_space(data.labels()),
        })
    }

    pub fn split(&self) -> &SplitAssignment {
        &self.split
    }

    pub fn seen_space(&self) -> &BTreeSet<Label> {
        &self.seen
    }

    pub fn tests(&self) -> &GoodTuringTests {
        &self.tests
    }

    pub fn closed_predictor(&self) -> &dyn ClosedSetPredictor {
        self.closed.predictor()
    }

    /// Label p-values and both Good-Turing statistics at `x`. APS and RGT
    /// randomness come from separate streams of `src`.
    pub fn evaluate(&self, x: &[f64], src: &RandomSource) -> Result<CgtcEvaluation> {
        let mut aps = src.named(Stream::Aps).rng();
        let mut rgt = src.named(Stream::Rgt).rng();
        let label_pvalues = self.closed.predictor().label_pvalues(x, &mut aps)?;
        let psi_unseen = self.tests.psi_unseen(x, &mut rgt)?;
        let psi_seen = self.tests.psi_seen(x, &mut rgt)?;
        Ok(CgtcEvaluation {
            label_pvalues,
            psi_unseen,
            psi_seen,
        })
    }

    pub fn predict(&self, x: &[f64], alloc: &AlphaAllocation, src: &RandomSource) -> Result<PredictionSet> {
        Ok(self.evaluate(x, src)?.assemble(alloc))
    }
}

pub fn cgtc_predict(
    x: &[f64],
    model: &CgtcModel,
    alloc: &AlphaAllocation,
    src: &RandomSource,
) -> Result<PredictionSet> {
    model.predict(x, alloc, src)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TuningConfig {
    pub lambda: f64,
    pub folds: usize,
    pub min_fold_size: usize,
    pub seen_candidates: Vec<f64>,
    pub class_start: f64,
    pub class_step: f64,
}

impl Default for TuningConfig {
    fn default() -> Self {
        Self {
            lambda: 0.5,
            folds: 10,
            min_fold_size: 10,
            seen_candidates: vec![0.0, 0.01, 0.02, 0.05, 0.1],
            class_start: 0.01,
            class_step: 0.005,
        }
    }
}

impl TuningConfig {
    /// Candidate allocations in search order.
    pub fn grid(&self, alpha: f64) -> Result<Vec<AlphaAllocation>> {
        if !(0.0..=1.0).contains(&self.lambda) {
            return Err(invalid("lambda", format!("must lie in [0, 1], got {}", self.lambda)));
        }
        if self.class_step.is_nan() || self.class_step <= 0.0 {
            return Err(invalid("class_step", "must be positive"));
        }
        let mut grid = Vec::new();
        for &seen in self.seen_candidates.iter().filter(|&&s| (0.0..alpha).contains(&s)) {
            let remaining = alpha - seen;
            let mut i = 0usize;
            loop {
                let class = self.class_start + i as f64 * self.class_step;
                if class > remaining + 1e-12 {
                    break;
                }
                let class = class.min(remaining);
                let unseen = (remaining - class).max(0.0);
                if let Ok(a) = AlphaAllocation::new(class, unseen, seen, alpha) {
                    grid.push(a);
                }
                i += 1;
            }
        }
        if grid.is_empty() {
            return Err(Error::InfeasibleGrid(format!(
                "no allocation for alpha={alpha} with class grid starting at {}",
                self.class_start
            )));
        }
        Ok(grid)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TuningResult {
    pub allocation: AlphaAllocation,
    pub loss: f64,
    pub folds: usize,
}

/// Held-out point summary: sorted label p-values plus the two statistics.
struct FoldPoint {
    pvalues: Vec<f64>,
    psi_unseen: f64,
    psi_seen: f64,
    seen: bool,
}

impl FoldPoint {
    fn closed_size(&self, alpha: f64) -> usize {
        self.pvalues.len() - self.pvalues.partition_point(|&p| p <= alpha)
    }

    fn loss(&self, alpha: f64, alloc: &AlphaAllocation, lambda: f64) -> f64 {
        let mut baseline = self.closed_size(alpha);
        if baseline == 0 {
            log::debug!("empty full-budget closed set; baseline size taken as 1");
            baseline = 1;
        }
        let closed = self.closed_size(alloc.alpha_class);
        let (size, joker) = match branch(self.psi_unseen, self.psi_seen, alloc) {
            Branch::ClosedOnly => (closed, false),
            Branch::JokerOnly => (1, true),
            Branch::Both => (closed + 1, true),
        };
        loss_value(size, joker, self.seen, baseline, lambda)
    }
}

/// Grid search over allocations scored by K-fold cross-validated loss.
pub fn tune_allocation(
    data: &LabeledDataset,
    alpha: f64,
    pipeline: &PipelineConfig,
    cfg: &TuningConfig,
    src: &RandomSource,
) -> Result<TuningResult> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(invalid("alpha", format!("must lie in (0, 1), got {alpha}")));
    }
    let grid = cfg.grid(alpha)?;
    let n = data.len();
    let min_fold = cfg.min_fold_size.max(1);
    let mut k = cfg.folds.max(2);
    if n / k < min_fold {
        k = n / min_fold;
        log::info!("reducing tuning folds from {} to {k} for n={n}", cfg.folds);
    }
    if k < 2 {
        return Err(Error::InsufficientReferenceData {
            needed: 2 * min_fold,
            got: n,
        });
    }

    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut src.named(Stream::Folds).rng());
    let folds: Vec<Vec<usize>> = (0..k)
        .map(|f| order.iter().copied().skip(f).step_by(k).collect())
        .collect();

    let evaluated: Vec<Vec<FoldPoint>> = folds
        .par_iter()
        .enumerate()
        .map(|(f, val)| {
            let fold_src = src.named(Stream::Folds).fork(f as u64 + 1);
            let held: BTreeSet<usize> = val.iter().copied().collect();
            let reference: Vec<usize> = (0..n).filter(|i| !held.contains(i)).collect();
            let reference = data.subset(&reference);
            let model = CgtcModel::fit(&reference, pipeline, &fold_src)?;
            val.iter()
                .map(|&i| {
                    let e = model.evaluate(data.row(i), &fold_src.fork(i as u64 + 1_000_003))?;
                    let mut pvalues: Vec<f64> = e.label_pvalues.0.iter().map(|&(_, p)| p).collect();
                    pvalues.sort_by(f64::total_cmp);
                    Ok(FoldPoint {
                        pvalues,
                        psi_unseen: e.psi_unseen,
                        psi_seen: e.psi_seen,
                        seen: model.seen_space().contains(&data.label(i)),
                    })
                })
                .collect()
        })
        .collect::<Result<_>>()?;

    let mut best: Option<(f64, AlphaAllocation)> = None;
    for alloc in grid {
        let loss = evaluated
            .iter()
            .map(|points| points.iter().map(|p| p.loss(alpha, &alloc, cfg.lambda)).sum::<f64>() / points.len() as f64)
            .sum::<f64>()
            / k as f64;
        let better = match &best {
            None => true,
            Some((bl, ba)) => {
                loss < *bl
                    || (loss == *bl
                        && (alloc.alpha_class > ba.alpha_class
                            || (alloc.alpha_class == ba.alpha_class && alloc.alpha_unseen > ba.alpha_unseen)))
            }
        };
        if better {
            best = Some((loss, alloc));
        }
    }
    let (loss, allocation) = best.expect("grid is nonempty");
    Ok(TuningResult {
        allocation,
        loss,
        folds: k,
    })
}
