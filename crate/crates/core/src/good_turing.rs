//! Conformal Good-Turing p-values for the frequency hypotheses
//! `H_k : N(Y_{n+1}; Y_{1:n}) = k`, and the composite all-seen test.

use std::collections::HashMap;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::data::{check_dim, FrequencyProfile, Label, LabeledDataset};
use crate::error::{invalid, Error, Result};
use crate::models::{LofScorer, DEFAULT_LOF_NEIGHBORS};

pub const DEFAULT_BETA: f64 = 1.6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PValueVariant {
    Gt,
    #[default]
    Rgt,
    Xgt,
}

impl PValueVariant {
    pub const ALL: [PValueVariant; 3] = [PValueVariant::Gt, PValueVariant::Rgt, PValueVariant::Xgt];

    pub fn name(self) -> &'static str {
        match self {
            PValueVariant::Gt => "gt",
            PValueVariant::Rgt => "rgt",
            PValueVariant::Xgt => "xgt",
        }
    }
}

impl std::str::FromStr for PValueVariant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "gt" => Ok(PValueVariant::Gt),
            "rgt" => Ok(PValueVariant::Rgt),
            "xgt" => Ok(PValueVariant::Xgt),
            _ => Err(invalid("variant", format!("unknown `{s}`; expected one of gt, rgt, xgt"))),
        }
    }
}

impl std::fmt::Display for PValueVariant {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

fn check_k(k: usize, profile: &FrequencyProfile) -> Result<()> {
    if k > profile.n() {
        return Err(Error::FrequencyOutOfRange { k, n: profile.n() });
    }
    Ok(())
}

/// Number of integer atoms `(k + 1) M_{k+1} + k + 1` in the support of the
/// randomized statistic.
fn gt_numerator(k: usize, profile: &FrequencyProfile) -> usize {
    (k + 1) * profile.m(k + 1) + k + 1
}

/// `((k + 1) M_{k+1} + k + 1) / (n + 1)`.
pub fn gt_pvalue(k: usize, profile: &FrequencyProfile) -> Result<f64> {
    check_k(k, profile)?;
    Ok(gt_numerator(k, profile) as f64 / (profile.n() + 1) as f64)
}

/// `(U + 1) / (n + 1)` with `U` uniform on `{0, ..., (k + 1) M_{k+1} + k}`.
pub fn rgt_pvalue<R: Rng + ?Sized>(k: usize, profile: &FrequencyProfile, rng: &mut R) -> Result<f64> {
    check_k(k, profile)?;
    let top = gt_numerator(k, profile);
    let u = rng.random_range(0..top);
    Ok((u + 1) as f64 / (profile.n() + 1) as f64)
}

/// One-class conformity scorer for `H_k`, trained on the rows whose label
/// frequency is neither `k` nor `k + 1`. When fewer than two such rows exist
/// every point gets the same score, which makes XGT coincide with GT.
#[derive(Debug, Clone)]
pub struct FrequencyScorer {
    k: usize,
    dim: usize,
    training: Vec<usize>,
    lof: Option<LofScorer>,
}

impl FrequencyScorer {
    pub fn fit(k: usize, data: &LabeledDataset, neighbors: usize) -> Result<Self> {
        let profile = FrequencyProfile::from_labels(data.labels());
        check_k(k, &profile)?;
        let training: Vec<usize> = (0..data.len())
            .filter(|&i| {
                let c = profile.count(data.label(i));
                c != k && c != k + 1
            })
            .collect();
        let lof = if training.len() >= 2 {
            Some(LofScorer::fit_rows(
                training.iter().map(|&i| data.row(i)),
                data.dim(),
                neighbors,
            )?)
        } else {
            log::info!(
                "frequency scorer for k={k}: {} rows left after exclusion, using feature-blind scores",
                training.len()
            );
            None
        };
        Ok(Self {
            k,
            dim: data.dim(),
            training,
            lof,
        })
    }

    pub fn k(&self) -> usize {
        self.k
    }

    /// True when the scorer fell back to a constant score.
    pub fn feature_blind(&self) -> bool {
        self.lof.is_none()
    }

    /// Rows used for fitting, ascending.
    pub fn training_indices(&self) -> &[usize] {
        &self.training
    }

    /// `s_k(x)`; larger means more typical of the excluded-frequency rows.
    pub fn score(&self, x: &[f64]) -> Result<f64> {
        check_dim(self.dim, x)?;
        match &self.lof {
            Some(lof) => lof.score(x),
            None => Ok(0.0),
        }
    }
}

pub fn fit_frequency_scorer(k: usize, data: &LabeledDataset) -> Result<FrequencyScorer> {
    FrequencyScorer::fit(k, data, DEFAULT_LOF_NEIGHBORS)
}

/// XGT value and whether `H_k` can be tested at all (`M_k > 0` or `k = 0`).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct XgtPValue {
    pub value: f64,
    pub testable: bool,
}

/// Feature-based Good-Turing p-value for `H_k`.
pub fn xgt_pvalue(
    k: usize,
    data: &LabeledDataset,
    x_test: &[f64],
    scorer: &FrequencyScorer,
) -> Result<XgtPValue> {
    if scorer.k() != k {
        return Err(invalid("scorer", format!("fitted for k={}, asked for k={k}", scorer.k())));
    }
    XgtTester::with_scorer(scorer.clone(), data)?.pvalue(x_test)
}

/// Precomputed reference scores for repeated XGT evaluation at one `k`.
#[derive(Debug, Clone)]
pub struct XgtTester {
    scorer: FrequencyScorer,
    n: usize,
    /// Sorted scores of rows whose label occurs `k + 1` times.
    next: Vec<f64>,
    /// Sorted scores per distinct label occurring `k` times.
    groups: Vec<Vec<f64>>,
}

impl XgtTester {
    pub fn fit(k: usize, data: &LabeledDataset, neighbors: usize) -> Result<Self> {
        Self::with_scorer(FrequencyScorer::fit(k, data, neighbors)?, data)
    }

    pub fn with_scorer(scorer: FrequencyScorer, data: &LabeledDataset) -> Result<Self> {
        let k = scorer.k();
        let profile = FrequencyProfile::from_labels(data.labels());
        let mut next = Vec::new();
        let mut groups: HashMap<Label, Vec<f64>> = HashMap::new();
        for (i, x) in data.rows().enumerate() {
            let y = data.label(i);
            let c = profile.count(y);
            if c == k + 1 {
                next.push(scorer.score(x)?);
            } else if k > 0 && c == k {
                groups.entry(y).or_default().push(scorer.score(x)?);
            }
        }
        next.sort_by(f64::total_cmp);
        let mut groups: Vec<(Label, Vec<f64>)> = groups.into_iter().collect();
        groups.sort_by_key(|(y, _)| *y);
        let groups = groups
            .into_iter()
            .map(|(_, mut v)| {
                v.sort_by(f64::total_cmp);
                v
            })
            .collect();
        Ok(Self {
            scorer,
            n: data.len(),
            next,
            groups,
        })
    }

    pub fn k(&self) -> usize {
        self.scorer.k()
    }

    pub fn scorer(&self) -> &FrequencyScorer {
        &self.scorer
    }

    pub fn testable(&self) -> bool {
        self.k() == 0 || !self.groups.is_empty()
    }

    pub fn pvalue(&self, x: &[f64]) -> Result<XgtPValue> {
        let s = self.scorer.score(x)?;
        let geq = |v: &[f64]| v.len() - v.partition_point(|&t| t < s);
        let best = self.groups.iter().map(|g| geq(g)).max().unwrap_or(0);
        Ok(XgtPValue {
            value: (1 + geq(&self.next) + best) as f64 / (self.n + 1) as f64,
            testable: self.testable(),
        })
    }
}

/// Normalized power-law constants `c_k = k^-beta / sum_j j^-beta`, `k = 1..=n`.
#[derive(Debug, Clone, PartialEq)]
pub struct PowerLawWeights {
    beta: f64,
    c: Vec<f64>,
}

impl PowerLawWeights {
    pub fn new(n: usize, beta: f64) -> Result<Self> {
        if n == 0 {
            return Err(invalid("n", "must be at least 1"));
        }
        if !(beta > 0.0 && beta.is_finite()) {
            return Err(invalid("beta", format!("must be positive, got {beta}")));
        }
        let raw: Vec<f64> = (1..=n).map(|k| (k as f64).powf(-beta)).collect();
        let total: f64 = raw.iter().sum();
        Ok(Self {
            beta,
            c: raw.into_iter().map(|v| v / total).collect(),
        })
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    pub fn n(&self) -> usize {
        self.c.len()
    }

    /// `c_k` for `1 <= k <= n`.
    pub fn c(&self, k: usize) -> f64 {
        self.c[k - 1]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.c
    }
}

pub fn power_law_weights(n: usize, beta: f64) -> Result<PowerLawWeights> {
    PowerLawWeights::new(n, beta)
}

/// `max_{k in K_n} psi_k / c_k`. Not clamped to 1.
pub fn seen_pvalue(pvals: &[(usize, f64)], weights: &PowerLawWeights) -> Result<f64> {
    if pvals.is_empty() {
        return Err(Error::NoObservedLabels);
    }
    let mut best = f64::NEG_INFINITY;
    for &(k, psi) in pvals {
        if k == 0 || k > weights.n() {
            return Err(Error::FrequencyOutOfRange { k, n: weights.n() });
        }
        best = best.max(psi / weights.c(k));
    }
    Ok(best)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GtConfig {
    pub unseen: PValueVariant,
    pub seen: PValueVariant,
    pub beta: f64,
    pub lof_neighbors: usize,
}

impl Default for GtConfig {
    fn default() -> Self {
        Self {
            unseen: PValueVariant::Xgt,
            seen: PValueVariant::Rgt,
            beta: DEFAULT_BETA,
            lof_neighbors: DEFAULT_LOF_NEIGHBORS,
        }
    }
}

/// The two open-set evidence statistics computed against one reference set:
/// `psi_unseen` tests `H_0`, `psi_seen` tests that the label was seen.
#[derive(Debug, Clone)]
pub struct GoodTuringTests {
    cfg: GtConfig,
    profile: FrequencyProfile,
    weights: PowerLawWeights,
    frequencies: Vec<usize>,
    unseen: Option<XgtTester>,
    seen: Vec<XgtTester>,
}

impl GoodTuringTests {
    pub fn fit(data: &LabeledDataset, cfg: GtConfig) -> Result<Self> {
        if data.is_empty() {
            return Err(Error::EmptyTrainingData);
        }
        let profile = FrequencyProfile::from_labels(data.labels());
        let weights = PowerLawWeights::new(profile.n(), cfg.beta)?;
        let frequencies = profile.observed_frequencies();
        let unseen = match cfg.unseen {
            PValueVariant::Xgt => Some(XgtTester::fit(0, data, cfg.lof_neighbors)?),
            _ => None,
        };
        let seen = match cfg.seen {
            PValueVariant::Xgt => frequencies
                .iter()
                .map(|&k| XgtTester::fit(k, data, cfg.lof_neighbors))
                .collect::<Result<_>>()?,
            _ => Vec::new(),
        };
        Ok(Self {
            cfg,
            profile,
            weights,
            frequencies,
            unseen,
            seen,
        })
    }

    pub fn config(&self) -> &GtConfig {
        &self.cfg
    }

    pub fn profile(&self) -> &FrequencyProfile {
        &self.profile
    }

    pub fn weights(&self) -> &PowerLawWeights {
        &self.weights
    }

    pub fn psi_unseen<R: Rng + ?Sized>(&self, x: &[f64], rng: &mut R) -> Result<f64> {
        match (&self.unseen, self.cfg.unseen) {
            (Some(t), _) => Ok(t.pvalue(x)?.value),
            (None, PValueVariant::Rgt) => rgt_pvalue(0, &self.profile, rng),
            (None, _) => gt_pvalue(0, &self.profile),
        }
    }

    /// `psi_k` for every `k in K_n`.
    pub fn seen_components<R: Rng + ?Sized>(&self, x: &[f64], rng: &mut R) -> Result<Vec<(usize, f64)>> {
        match self.cfg.seen {
            PValueVariant::Xgt => self
                .seen
                .iter()
                .map(|t| Ok((t.k(), t.pvalue(x)?.value)))
                .collect(),
            PValueVariant::Rgt => self
                .frequencies
                .iter()
                .map(|&k| Ok((k, rgt_pvalue(k, &self.profile, rng)?)))
                .collect(),
            PValueVariant::Gt => self
                .frequencies
                .iter()
                .map(|&k| Ok((k, gt_pvalue(k, &self.profile)?)))
                .collect(),
        }
    }

    pub fn psi_seen<R: Rng + ?Sized>(&self, x: &[f64], rng: &mut R) -> Result<f64> {
        seen_pvalue(&self.seen_components(x, rng)?, &self.weights)
    }
}
