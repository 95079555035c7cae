//! Dirichlet-process data, a finite-label generator, and the repeated
//! experiment harness with its coverage and informativeness metrics.

use std::collections::{BTreeSet, HashMap};
use std::sync::Arc;

use rand::Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{FrequencyProfile, Label, LabeledDataset, PredictionSet, RandomSource, Stream};
use crate::error::{invalid, Error, Result};
use crate::good_turing::PValueVariant;
use crate::open_set::{tune_allocation, AlphaAllocation, CgtcModel, PipelineConfig, SplitStrategy, TuningConfig};

/// `theta / (theta + n)`.
pub fn new_label_probability(theta: f64, n: usize) -> Result<f64> {
    if !(theta >= 0.0 && theta.is_finite()) {
        return Err(invalid("theta", format!("must be finite and nonnegative, got {theta}")));
    }
    if theta == 0.0 && n == 0 {
        return Err(invalid("theta", "theta and n cannot both be zero"));
    }
    Ok(theta / (theta + n as f64))
}

fn gaussian_row<R: Rng + ?Sized>(center: f64, noise: &Normal<f64>, dim: usize, rng: &mut R) -> Vec<f64> {
    (0..dim).map(|_| center + noise.sample(rng)).collect()
}

/// Chinese-restaurant labels with `Uniform(0, 1)` atoms; every feature
/// coordinate is `N(atom, sigma2)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DpConfig {
    pub theta: f64,
    #[serde(default = "default_sigma2")]
    pub sigma2: f64,
    #[serde(default = "default_dim")]
    pub dim: usize,
    pub n: usize,
}

fn default_sigma2() -> f64 {
    5e-6
}

fn default_dim() -> usize {
    3
}

impl DpConfig {
    pub fn new(theta: f64, n: usize) -> Self {
        Self {
            theta,
            sigma2: default_sigma2(),
            dim: default_dim(),
            n,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.theta >= 0.0 && self.theta.is_finite()) {
            return Err(invalid("theta", format!("must be finite and nonnegative, got {}", self.theta)));
        }
        if !(self.sigma2 > 0.0 && self.sigma2.is_finite()) {
            return Err(invalid("sigma2", format!("must be positive, got {}", self.sigma2)));
        }
        if self.dim == 0 {
            return Err(invalid("dim", "must be at least 1"));
        }
        Ok(())
    }
}

/// A test point drawn from the predictive distribution of a sample.
#[derive(Debug, Clone, PartialEq)]
pub struct TestPoint {
    pub x: Vec<f64>,
    pub label: Label,
    pub is_new: bool,
}

/// A Dirichlet-process sample together with its atoms.
#[derive(Debug, Clone)]
pub struct DpSample {
    cfg: DpConfig,
    data: LabeledDataset,
    atoms: Vec<f64>,
}

impl DpSample {
    pub fn data(&self) -> &LabeledDataset {
        &self.data
    }

    pub fn into_data(self) -> LabeledDataset {
        self.data
    }

    /// Atom (base draw) of every label id in the sample.
    pub fn atoms(&self) -> &[f64] {
        &self.atoms
    }

    pub fn distinct(&self) -> usize {
        self.atoms.len()
    }

    /// Independent predictive draws given the sample; new labels get fresh
    /// ids that are never reused.
    pub fn draw_tests<R: Rng + ?Sized>(&self, count: usize, rng: &mut R) -> Result<Vec<TestPoint>> {
        let p_new = new_label_probability(self.cfg.theta, self.data.len())?;
        let noise = Normal::new(0.0, self.cfg.sigma2.sqrt()).map_err(|e| invalid("sigma2", e.to_string()))?;
        let mut next_id = self.atoms.len() as u32;
        (0..count)
            .map(|_| {
                if rng.random::<f64>() < p_new {
                    let atom: f64 = rng.random();
                    let label = Label(next_id);
                    next_id += 1;
                    Ok(TestPoint {
                        x: gaussian_row(atom, &noise, self.cfg.dim, rng),
                        label,
                        is_new: true,
                    })
                } else {
                    let i = rng.random_range(0..self.data.len());
                    let label = self.data.label(i);
                    Ok(TestPoint {
                        x: gaussian_row(self.atoms[label.0 as usize], &noise, self.cfg.dim, rng),
                        label,
                        is_new: false,
                    })
                }
            })
            .collect()
    }
}

pub fn dp_sample<R: Rng + ?Sized>(cfg: &DpConfig, rng: &mut R) -> Result<DpSample> {
    cfg.validate()?;
    let noise = Normal::new(0.0, cfg.sigma2.sqrt()).map_err(|e| invalid("sigma2", e.to_string()))?;
    let mut atoms: Vec<f64> = Vec::new();
    let mut labels: Vec<Label> = Vec::with_capacity(cfg.n);
    let mut features = Vec::with_capacity(cfg.n * cfg.dim);
    for i in 0..cfg.n {
        let fresh = i == 0 || rng.random::<f64>() < cfg.theta / (cfg.theta + i as f64);
        let label = if fresh {
            atoms.push(rng.random());
            Label(atoms.len() as u32 - 1)
        } else {
            labels[rng.random_range(0..i)]
        };
        labels.push(label);
        features.extend(gaussian_row(atoms[label.0 as usize], &noise, cfg.dim, rng));
    }
    let dim = cfg.dim;
    Ok(DpSample {
        cfg: *cfg,
        data: LabeledDataset::new(dim, features, labels)?,
        atoms,
    })
}

/// `K` equiprobable labels with centers `(k + 1) / (K + 1)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FiniteConfig {
    pub labels: usize,
    pub n: usize,
    #[serde(default = "default_sigma2")]
    pub sigma2: f64,
    #[serde(default = "default_dim")]
    pub dim: usize,
}

impl FiniteConfig {
    pub fn validate(&self) -> Result<()> {
        if self.labels == 0 {
            return Err(invalid("labels", "must be at least 1"));
        }
        DpConfig {
            theta: 0.0,
            sigma2: self.sigma2,
            dim: self.dim,
            n: self.n,
        }
        .validate()
    }

    fn center(&self, label: Label) -> f64 {
        (label.0 as f64 + 1.0) / (self.labels as f64 + 1.0)
    }

    pub fn draw<R: Rng + ?Sized>(&self, count: usize, rng: &mut R) -> Result<Vec<TestPoint>> {
        self.validate()?;
        let noise = Normal::new(0.0, self.sigma2.sqrt()).map_err(|e| invalid("sigma2", e.to_string()))?;
        Ok((0..count)
            .map(|_| {
                let label = Label(rng.random_range(0..self.labels as u32));
                TestPoint {
                    x: gaussian_row(self.center(label), &noise, self.dim, rng),
                    label,
                    is_new: false,
                }
            })
            .collect())
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<LabeledDataset> {
        let points = self.draw(self.n, rng)?;
        let features = points.iter().flat_map(|p| p.x.iter().copied()).collect();
        LabeledDataset::new(self.dim, features, points.iter().map(|p| p.label).collect())
    }
}

/// Covered when the label is in the set, or is new and the joker is present.
pub fn evaluate_prediction(set: &PredictionSet, y_true: Label, seen_space: &BTreeSet<Label>) -> bool {
    set.contains(y_true) || (!seen_space.contains(&y_true) && set.joker)
}

/// Bins of reference-set label counts. Bin 0 holds counts up to
/// `upper[0]`, bin `i` counts in `(upper[i-1], upper[i]]`, the last bin the rest.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FrequencyBins {
    pub upper: Vec<usize>,
}

impl Default for FrequencyBins {
    fn default() -> Self {
        Self { upper: vec![1, 5, 20] }
    }
}

impl FrequencyBins {
    pub fn len(&self) -> usize {
        self.upper.len() + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn bin(&self, count: usize) -> usize {
        self.upper.iter().position(|&u| count <= u).unwrap_or(self.upper.len())
    }

    pub fn name(&self, bin: usize) -> String {
        if bin == 0 {
            return "very-rare".into();
        }
        let lo = self.upper[bin - 1] + 1;
        match self.upper.get(bin) {
            Some(hi) => format!("{lo}-{hi}"),
            None => format!("{lo}+"),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.upper.is_empty() || self.upper.windows(2).any(|w| w[0] >= w[1]) {
            return Err(invalid("bins", "bounds must be nonempty and strictly increasing"));
        }
        Ok(())
    }
}

pub fn frequency_bin(y_true: Label, profile: &FrequencyProfile, bins: &FrequencyBins) -> usize {
    bins.bin(profile.count(y_true))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    StandardRandom,
    StandardSelective,
    CgtcRandom,
    CgtcSelective,
}

impl Method {
    pub const ALL: [Method; 4] = [
        Method::StandardRandom,
        Method::StandardSelective,
        Method::CgtcRandom,
        Method::CgtcSelective,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Method::StandardRandom => "standard-random",
            Method::StandardSelective => "standard-selective",
            Method::CgtcRandom => "cgtc-random",
            Method::CgtcSelective => "cgtc-selective",
        }
    }

    pub fn split(self) -> SplitStrategy {
        match self {
            Method::StandardRandom | Method::CgtcRandom => SplitStrategy::Random,
            Method::StandardSelective | Method::CgtcSelective => SplitStrategy::Selective,
        }
    }

    pub fn uses_joker(self) -> bool {
        matches!(self, Method::CgtcRandom | Method::CgtcSelective)
    }
}

impl std::str::FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Method::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| {
                let names: Vec<&str> = Method::ALL.iter().map(|m| m.name()).collect();
                invalid("method", format!("unknown `{s}`; expected one of {}", names.join(", ")))
            })
    }
}

impl std::fmt::Display for Method {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone)]
pub enum DataSource {
    Dp(DpConfig),
    Finite(FiniteConfig),
    /// Each repetition draws `n` reference rows and the test rows, without
    /// replacement, from this pool.
    Pool { data: Arc<LabeledDataset>, n: usize },
}

impl DataSource {
    pub fn n(&self) -> usize {
        match self {
            DataSource::Dp(c) => c.n,
            DataSource::Finite(c) => c.n,
            DataSource::Pool { n, .. } => *n,
        }
    }

    pub fn theta(&self) -> Option<f64> {
        match self {
            DataSource::Dp(c) => Some(c.theta),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum AllocationMode {
    Fixed(AlphaAllocation),
    Tuned(TuningConfig),
}

#[derive(Debug, Clone)]
pub struct ExperimentSpec {
    pub source: DataSource,
    pub method: Method,
    /// Statistic used for `psi_unseen`.
    pub variant: PValueVariant,
    pub alpha: f64,
    pub allocation: AllocationMode,
    pub reps: usize,
    pub tests: usize,
    pub seed: u64,
    pub pipeline: PipelineConfig,
    pub bins: FrequencyBins,
}

impl ExperimentSpec {
    pub fn new(source: DataSource, method: Method, alpha: f64) -> Self {
        Self {
            source,
            method,
            variant: PValueVariant::Xgt,
            alpha,
            allocation: AllocationMode::Fixed(AlphaAllocation {
                alpha_class: alpha / 3.0,
                alpha_unseen: alpha / 3.0,
                alpha_seen: alpha - 2.0 * (alpha / 3.0),
            }),
            reps: 20,
            tests: 200,
            seed: 0,
            pipeline: PipelineConfig::default(),
            bins: FrequencyBins::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let spec_err = |field: &str, e: Error| Error::InvalidSpec {
            field: field.to_string(),
            reason: e.to_string(),
        };
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(Error::InvalidSpec {
                field: "alpha".into(),
                reason: format!("must lie in (0, 1), got {}", self.alpha),
            });
        }
        if self.reps == 0 {
            return Err(Error::InvalidSpec {
                field: "reps".into(),
                reason: "must be at least 1".into(),
            });
        }
        if self.tests == 0 {
            return Err(Error::InvalidSpec {
                field: "tests".into(),
                reason: "must be at least 1".into(),
            });
        }
        match &self.source {
            DataSource::Dp(c) => c.validate().map_err(|e| spec_err("data", e))?,
            DataSource::Finite(c) => c.validate().map_err(|e| spec_err("data", e))?,
            DataSource::Pool { data, n } => {
                if n + self.tests > data.len() {
                    return Err(Error::InvalidSpec {
                        field: "data.n".into(),
                        reason: format!(
                            "n + tests = {} exceeds the {} rows available",
                            n + self.tests,
                            data.len()
                        ),
                    });
                }
            }
        }
        if self.source.n() < 2 {
            return Err(Error::InvalidSpec {
                field: "data.n".into(),
                reason: "need at least 2 reference points".into(),
            });
        }
        if let AllocationMode::Fixed(a) = &self.allocation {
            a.validate(self.alpha).map_err(|e| spec_err("allocation", e))?;
        }
        self.pipeline.validate().map_err(|e| spec_err("pipeline", e))?;
        self.bins.validate().map_err(|e| spec_err("bins", e))?;
        Ok(())
    }

    fn effective_pipeline(&self) -> PipelineConfig {
        let mut p = self.pipeline;
        p.split = self.method.split();
        p.gt.unseen = self.variant;
        p
    }
}

/// Mean and standard error across repetitions.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Estimate {
    pub mean: f64,
    pub se: f64,
}

fn pairwise_sum(v: &[f64]) -> f64 {
    if v.len() <= 8 {
        return v.iter().sum();
    }
    let (a, b) = v.split_at(v.len() / 2);
    pairwise_sum(a) + pairwise_sum(b)
}

impl Estimate {
    /// Sample mean and `sd / sqrt(count)`; zero SE for a single value.
    pub fn from_values(v: &[f64]) -> Self {
        if v.is_empty() {
            return Self {
                mean: f64::NAN,
                se: f64::NAN,
            };
        }
        let m = v.len() as f64;
        let mean = pairwise_sum(v) / m;
        if v.len() == 1 {
            return Self { mean, se: 0.0 };
        }
        let dev: Vec<f64> = v.iter().map(|x| (x - mean) * (x - mean)).collect();
        let var = pairwise_sum(&dev) / (m - 1.0);
        Self {
            mean,
            se: (var / m).sqrt(),
        }
    }
}

/// Per-repetition rates.
#[derive(Debug, Clone, PartialEq)]
pub struct RepMetrics {
    pub coverage: f64,
    pub avg_cardinality: f64,
    pub joker_rate: f64,
    /// `P(Y not in set, Y seen)`.
    pub seen_miscoverage: f64,
    pub new_label_rate: f64,
    /// Coverage and point count per frequency bin.
    pub bins: Vec<(f64, usize)>,
    pub allocation: Option<AlphaAllocation>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BinMetrics {
    pub name: String,
    pub coverage: Estimate,
    pub points: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentMetrics {
    pub method: Method,
    pub variant: PValueVariant,
    pub theta: Option<f64>,
    pub n: usize,
    pub alpha: f64,
    pub coverage: Estimate,
    pub avg_cardinality: Estimate,
    pub joker_rate: Estimate,
    pub seen_miscoverage: Estimate,
    pub new_label_rate: Estimate,
    pub stratified: Vec<BinMetrics>,
    pub reps: Vec<RepMetrics>,
}

struct RepData {
    reference: LabeledDataset,
    tests: Vec<TestPoint>,
}

fn rep_data(spec: &ExperimentSpec, src: &RandomSource) -> Result<RepData> {
    match &spec.source {
        DataSource::Dp(cfg) => {
            let sample = dp_sample(cfg, &mut src.named(Stream::Dp).rng())?;
            let tests = sample.draw_tests(spec.tests, &mut src.named(Stream::Tests).rng())?;
            Ok(RepData {
                reference: sample.into_data(),
                tests,
            })
        }
        DataSource::Finite(cfg) => Ok(RepData {
            reference: cfg.sample(&mut src.named(Stream::Dp).rng())?,
            tests: cfg.draw(spec.tests, &mut src.named(Stream::Tests).rng())?,
        }),
        DataSource::Pool { data, n } => {
            let picked = rand::seq::index::sample(&mut src.named(Stream::Dp).rng(), data.len(), n + spec.tests);
            let picked = picked.into_vec();
            let reference = data.subset(&picked[..*n]);
            let seen: BTreeSet<Label> = reference.labels().iter().copied().collect();
            let tests = picked[*n..]
                .iter()
                .map(|&i| TestPoint {
                    x: data.row(i).to_vec(),
                    label: data.label(i),
                    is_new: !seen.contains(&data.label(i)),
                })
                .collect();
            Ok(RepData { reference, tests })
        }
    }
}

fn run_rep(spec: &ExperimentSpec, rep: usize) -> Result<RepMetrics> {
    let src = RandomSource::new(spec.seed).fork(rep as u64 + 1);
    let RepData { reference, tests } = rep_data(spec, &src)?;
    let pipeline = spec.effective_pipeline();
    let allocation = match &spec.allocation {
        AllocationMode::Fixed(a) => *a,
        AllocationMode::Tuned(cfg) => {
            tune_allocation(&reference, spec.alpha, &pipeline, cfg, &src.named(Stream::Folds))?.allocation
        }
    };
    let model = CgtcModel::fit(&reference, &pipeline, &src)?;
    let profile = FrequencyProfile::from_labels(reference.labels());
    let seen = model.seen_space();

    let mut covered = 0usize;
    let mut size = 0usize;
    let mut jokers = 0usize;
    let mut seen_miss = 0usize;
    let mut new = 0usize;
    let mut bins = vec![(0usize, 0usize); spec.bins.len()];
    let test_src = src.named(Stream::Tests);
    for (t, point) in tests.iter().enumerate() {
        let e = model.evaluate(&point.x, &test_src.fork(t as u64 + 1))?;
        let set = if spec.method.uses_joker() {
            e.assemble(&allocation)
        } else {
            PredictionSet::new(e.closed_set(spec.alpha), false)
        };
        let ok = evaluate_prediction(&set, point.label, seen);
        let is_seen = seen.contains(&point.label);
        covered += usize::from(ok);
        size += set.cardinality();
        jokers += usize::from(set.joker);
        seen_miss += usize::from(is_seen && !set.contains(point.label));
        new += usize::from(!is_seen);
        let b = frequency_bin(point.label, &profile, &spec.bins);
        bins[b].0 += usize::from(ok);
        bins[b].1 += 1;
    }
    let m = tests.len() as f64;
    Ok(RepMetrics {
        coverage: covered as f64 / m,
        avg_cardinality: size as f64 / m,
        joker_rate: jokers as f64 / m,
        seen_miscoverage: seen_miss as f64 / m,
        new_label_rate: new as f64 / m,
        bins: bins
            .into_iter()
            .map(|(c, total)| (if total > 0 { c as f64 / total as f64 } else { f64::NAN }, total))
            .collect(),
        allocation: spec.method.uses_joker().then_some(allocation),
    })
}

/// Runs `spec.reps` independent repetitions in parallel; results are
/// aggregated in repetition order.
pub fn run_experiment(spec: &ExperimentSpec) -> Result<ExperimentMetrics> {
    spec.validate()?;
    let reps: Vec<RepMetrics> = (0..spec.reps)
        .into_par_iter()
        .map(|r| run_rep(spec, r))
        .collect::<Result<_>>()?;
    let field = |f: fn(&RepMetrics) -> f64| Estimate::from_values(&reps.iter().map(f).collect::<Vec<_>>());
    let stratified = (0..spec.bins.len())
        .map(|b| {
            let vals: Vec<f64> = reps.iter().filter(|r| r.bins[b].1 > 0).map(|r| r.bins[b].0).collect();
            BinMetrics {
                name: spec.bins.name(b),
                coverage: Estimate::from_values(&vals),
                points: reps.iter().map(|r| r.bins[b].1).sum(),
            }
        })
        .collect();
    Ok(ExperimentMetrics {
        method: spec.method,
        variant: spec.variant,
        theta: spec.source.theta(),
        n: spec.source.n(),
        alpha: spec.alpha,
        coverage: field(|r| r.coverage),
        avg_cardinality: field(|r| r.avg_cardinality),
        joker_rate: field(|r| r.joker_rate),
        seen_miscoverage: field(|r| r.seen_miscoverage),
        new_label_rate: field(|r| r.new_label_rate),
        stratified,
        reps,
    })
}

/// Label counts of a sample, keyed by label.
pub fn label_histogram(labels: &[Label]) -> HashMap<Label, usize> {
    FrequencyProfile::from_labels(labels).counts().clone()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn new_label_probability_examples() {
        assert_eq!(new_label_probability(100.0, 100).unwrap(), 0.5);
        assert_eq!(new_label_probability(0.0, 10).unwrap(), 0.0);
        assert_eq!(new_label_probability(10.0, 0).unwrap(), 1.0);
        assert!(new_label_probability(0.0, 0).is_err());
    }

    #[test]
    fn dp_extremes() {
        let mut rng = RandomSource::new(5).rng();
        let s = dp_sample(&DpConfig::new(0.0, 50), &mut rng).unwrap();
        assert_eq!(s.distinct(), 1);
        assert_eq!(s.data().len(), 50);
        let s = dp_sample(&DpConfig::new(1e12, 50), &mut rng).unwrap();
        assert_eq!(s.distinct(), 50);
    }

    #[test]
    fn dp_features_center_on_atoms() {
        let mut rng = RandomSource::new(6).rng();
        let s = dp_sample(&DpConfig::new(5.0, 200), &mut rng).unwrap();
        for (i, row) in s.data().rows().enumerate() {
            let atom = s.atoms()[s.data().label(i).0 as usize];
            assert!(row.iter().all(|v| (v - atom).abs() < 0.02));
        }
        let tests = s.draw_tests(100, &mut rng).unwrap();
        let new_ids: BTreeSet<Label> = tests.iter().filter(|t| t.is_new).map(|t| t.label).collect();
        assert_eq!(new_ids.len(), tests.iter().filter(|t| t.is_new).count());
        assert!(new_ids.iter().all(|l| l.0 as usize >= s.distinct()));
    }

    #[test]
    fn coverage_rule() {
        let seen = BTreeSet::from([Label(1), Label(2)]);
        let set = PredictionSet::new(BTreeSet::from([Label(1)]), false);
        assert!(evaluate_prediction(&set, Label(1), &seen));
        assert!(!evaluate_prediction(&set, Label(9), &seen));
        assert!(evaluate_prediction(&PredictionSet::joker_only(), Label(9), &seen));
        assert!(!evaluate_prediction(&PredictionSet::joker_only(), Label(2), &seen));
    }

    #[test]
    fn bins() {
        let b = FrequencyBins::default();
        let p = FrequencyProfile::from_labels(&[Label(1), Label(2), Label(2)]);
        assert_eq!(frequency_bin(Label(7), &p, &b), 0);
        assert_eq!(frequency_bin(Label(1), &p, &b), 0);
        assert_eq!(frequency_bin(Label(2), &p, &b), 1);
        assert_eq!(b.bin(10), 2);
        assert_eq!(b.bin(21), 3);
        assert_eq!(b.name(0), "very-rare");
        assert_eq!(b.name(1), "2-5");
        assert_eq!(b.name(3), "21+");
    }

    #[test]
    fn estimate_aggregation() {
        let e = Estimate::from_values(&[1.0]);
        assert_eq!((e.mean, e.se), (1.0, 0.0));
        let e = Estimate::from_values(&[0.0, 1.0, 0.0, 1.0]);
        assert_eq!(e.mean, 0.5);
        assert!((e.se - (1.0f64 / 3.0 / 4.0).sqrt()).abs() < 1e-12);
    }
}
