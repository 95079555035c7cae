//! Core containers: interned labels, labeled datasets, label frequency
//! accounting, prediction sets and the seeded randomness contract.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;

use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;

use crate::error::{Error, Result};

/// Opaque categorical label. Only equality carries meaning; the ordering is
/// used for deterministic iteration and never enters the statistics.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Label(pub u32);

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "#{}", self.0)
    }
}

/// Side table mapping interned labels back to their display strings.
#[derive(Debug, Clone, Default)]
pub struct LabelTable {
    names: Vec<String>,
    index: HashMap<String, Label>,
}

impl LabelTable {
    pub fn new() -> Self {
        Self::default()
    }

    /// Returns the label for `name`, allocating a fresh id on first sight.
    pub fn intern(&mut self, name: &str) -> Label {
        if let Some(&label) = self.index.get(name) {
            return label;
        }
        let label = Label(self.names.len() as u32);
        self.names.push(name.to_owned());
        self.index.insert(name.to_owned(), label);
        label
    }

    pub fn get(&self, name: &str) -> Option<Label> {
        self.index.get(name).copied()
    }

    pub fn name(&self, label: Label) -> Option<&str> {
        self.names.get(label.0 as usize).map(String::as_str)
    }

    /// Display string for `label`, falling back to its numeric id.
    pub fn display(&self, label: Label) -> String {
        self.name(label)
            .map(str::to_owned)
            .unwrap_or_else(|| label.to_string())
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }
}

/// Feature matrix (row-major, fixed dimension) paired with one label per row.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledDataset {
    dim: usize,
    features: Vec<f64>,
    labels: Vec<Label>,
}

impl LabeledDataset {
    /// Builds a dataset from a flat row-major feature buffer.
    pub fn new(dim: usize, features: Vec<f64>, labels: Vec<Label>) -> Result<Self> {
        if dim == 0 {
            return Err(crate::error::invalid("dim", "feature dimension must be at least 1"));
        }
        if features.len() != dim * labels.len() {
            return Err(Error::DimensionMismatch {
                expected: dim * labels.len(),
                found: features.len(),
            });
        }
        Ok(Self {
            dim,
            features,
            labels,
        })
    }

    pub fn from_rows<R: AsRef<[f64]>>(rows: &[R], labels: Vec<Label>) -> Result<Self> {
        let dim = rows.first().map_or(1, |r| r.as_ref().len());
        if rows.len() != labels.len() {
            return Err(Error::DimensionMismatch {
                expected: rows.len(),
                found: labels.len(),
            });
        }
        let mut features = Vec::with_capacity(dim * rows.len());
        for row in rows {
            let row = row.as_ref();
            if row.len() != dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    found: row.len(),
                });
            }
            features.extend_from_slice(row);
        }
        Self::new(dim, features, labels)
    }

    pub fn empty(dim: usize) -> Self {
        Self {
            dim: dim.max(1),
            features: Vec::new(),
            labels: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.features[i * self.dim..(i + 1) * self.dim]
    }

    pub fn label(&self, i: usize) -> Label {
        self.labels[i]
    }

    pub fn labels(&self) -> &[Label] {
        &self.labels
    }

    pub fn features(&self) -> &[f64] {
        &self.features
    }

    pub fn rows(&self) -> impl ExactSizeIterator<Item = &[f64]> + '_ {
        self.features.chunks_exact(self.dim)
    }

    /// Copies the rows at `indices`, in the given order.
    pub fn subset(&self, indices: &[usize]) -> Self {
        let mut features = Vec::with_capacity(indices.len() * self.dim);
        let mut labels = Vec::with_capacity(indices.len());
        for &i in indices {
            features.extend_from_slice(self.row(i));
            labels.push(self.labels[i]);
        }
        Self {
            dim: self.dim,
            features,
            labels,
        }
    }

    pub fn push(&mut self, x: &[f64], label: Label) -> Result<()> {
        check_dim(self.dim, x)?;
        self.features.extend_from_slice(x);
        self.labels.push(label);
        Ok(())
    }
}

pub(crate) fn check_dim(expected: usize, x: &[f64]) -> Result<()> {
    if x.len() != expected {
        return Err(Error::DimensionMismatch {
            expected,
            found: x.len(),
        });
    }
    Ok(())
}

/// Sample frequency profile: `M_k` (distinct labels seen exactly `k` times)
/// together with the per-label counts `N(y)`.
///
/// `M_0` is always reported as zero: the number of unseen labels cannot be
/// read off the data.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FrequencyProfile {
    n: usize,
    counts: HashMap<Label, usize>,
    m: BTreeMap<usize, usize>,
}

impl FrequencyProfile {
    pub fn from_labels(labels: &[Label]) -> Self {
        let mut counts: HashMap<Label, usize> = HashMap::new();
        for &y in labels {
            *counts.entry(y).or_default() += 1;
        }
        let mut m = BTreeMap::new();
        for &c in counts.values() {
            *m.entry(c).or_default() += 1;
        }
        Self {
            n: labels.len(),
            counts,
            m,
        }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    /// `M_k`.
    pub fn m(&self, k: usize) -> usize {
        if k == 0 {
            return 0;
        }
        self.m.get(&k).copied().unwrap_or(0)
    }

    /// `N(y; Y_{1:n})`, zero when `y` was never observed.
    pub fn count(&self, y: Label) -> usize {
        self.counts.get(&y).copied().unwrap_or(0)
    }

    pub fn counts(&self) -> &HashMap<Label, usize> {
        &self.counts
    }

    /// Nonzero entries of the profile as `(k, M_k)` in increasing `k`.
    pub fn nonzero(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.m.iter().map(|(&k, &mk)| (k, mk))
    }

    /// `K_n = {k >= 1 : M_k > 0}`.
    pub fn observed_frequencies(&self) -> Vec<usize> {
        self.m.keys().copied().collect()
    }

    pub fn distinct(&self) -> usize {
        self.counts.len()
    }

    pub fn max_count(&self) -> usize {
        self.m.keys().next_back().copied().unwrap_or(0)
    }

    /// Distinct labels observed exactly `k` times, in label order.
    pub fn labels_with_count(&self, k: usize) -> Vec<Label> {
        let mut out: Vec<Label> = self
            .counts
            .iter()
            .filter(|&(_, &c)| c == k)
            .map(|(&y, _)| y)
            .collect();
        out.sort_unstable();
        out
    }
}

pub fn frequency_profile(labels: &[Label]) -> FrequencyProfile {
    FrequencyProfile::from_labels(labels)
}

pub fn label_count(y: Label, profile: &FrequencyProfile) -> usize {
    profile.count(y)
}

/// `unique(Y_1, ..., Y_n)`.
pub fn observed_label_space(labels: &[Label]) -> BTreeSet<Label> {
    labels.iter().copied().collect()
}

/// A finite set of seen labels, optionally augmented with the joker that
/// stands for every label absent from the reference data.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct PredictionSet {
    pub seen: BTreeSet<Label>,
    pub joker: bool,
}

impl PredictionSet {
    pub fn new(seen: BTreeSet<Label>, joker: bool) -> Self {
        Self { seen, joker }
    }

    pub fn joker_only() -> Self {
        Self {
            seen: BTreeSet::new(),
            joker: true,
        }
    }

    pub fn contains(&self, y: Label) -> bool {
        self.seen.contains(&y)
    }

    /// Number of seen labels plus one for the joker.
    pub fn cardinality(&self) -> usize {
        self.seen.len() + usize::from(self.joker)
    }
}

/// Named random streams derived from a single experiment seed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Stream {
    Dp,
    Tests,
    Split,
    Aps,
    Smoothing,
    Rgt,
    Folds,
}

impl Stream {
    fn key(self) -> u64 {
        match self {
            Stream::Dp => 1,
            Stream::Tests => 2,
            Stream::Split => 3,
            Stream::Aps => 4,
            Stream::Smoothing => 5,
            Stream::Rgt => 6,
            Stream::Folds => 7,
        }
    }
}

/// The generator every stochastic operation draws from.
pub type Rng = ChaCha12Rng;

/// Seed plus stream id. Identical `(seed, stream)` pairs reproduce identical
/// draws; streams are ChaCha stream ids, so forks never share keystream.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct RandomSource {
    seed: u64,
    stream: u64,
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

impl RandomSource {
    pub fn new(seed: u64) -> Self {
        Self { seed, stream: 0 }
    }

    pub fn with_stream(seed: u64, stream: u64) -> Self {
        Self { seed, stream }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn stream(&self) -> u64 {
        self.stream
    }

    /// Child source keyed by `key`. Order of forking matters.
    pub fn fork(&self, key: u64) -> Self {
        Self {
            seed: self.seed,
            stream: splitmix64(self.stream ^ splitmix64(key)),
        }
    }

    pub fn named(&self, stream: Stream) -> Self {
        self.fork(stream.key())
    }

    pub fn rng(&self) -> Rng {
        let mut rng = ChaCha12Rng::seed_from_u64(self.seed);
        rng.set_stream(self.stream);
        rng
    }
}
