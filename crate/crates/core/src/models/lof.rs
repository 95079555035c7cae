use crate::data::check_dim;
use crate::error::{invalid, Error, Result};

use super::euclidean;

/// Neighborhood size used when none is configured.
pub const DEFAULT_LOF_NEIGHBORS: usize = 20;

// Added to mean reachability distances so duplicated points keep a finite density.
const REACH_EPS: f64 = 1e-10;

/// Local-outlier-factor scorer in novelty mode: densities are precomputed on
/// the reference points and queries are scored against them.
///
/// [`LofScorer::score`] returns the conformity value `-LOF(x)`; larger means
/// more typical of the reference distribution. Inliers sit near `-1`.
#[derive(Debug, Clone)]
pub struct LofScorer {
    k: usize,
    dim: usize,
    points: Vec<f64>,
    k_distance: Vec<f64>,
    lrd: Vec<f64>,
}

impl LofScorer {
    pub fn fit(points: &[f64], dim: usize, k: usize) -> Result<Self> {
        if dim == 0 || !points.len().is_multiple_of(dim) {
            return Err(invalid("dim", "feature buffer does not divide into rows"));
        }
        let m = points.len() / dim;
        if m < 2 {
            return Err(Error::InsufficientReferenceData { needed: 2, got: m });
        }
        if k == 0 {
            return Err(invalid("k", "neighbor count must be at least 1"));
        }
        let k = k.min(m - 1);
        let row = |i: usize| &points[i * dim..(i + 1) * dim];

        let mut k_distance = vec![0.0; m];
        let mut neighbors: Vec<Vec<(usize, f64)>> = Vec::with_capacity(m);
        let mut dists: Vec<f64> = Vec::with_capacity(m);
        for (p, kd_slot) in k_distance.iter_mut().enumerate() {
            dists.clear();
            dists.extend((0..m).map(|o| if o == p { f64::INFINITY } else { euclidean(row(p), row(o)) }));
            let kd = kth_smallest(&dists, k);
            *kd_slot = kd;
            neighbors.push(
                dists
                    .iter()
                    .enumerate()
                    .filter(|&(o, &d)| o != p && d <= kd)
                    .map(|(o, &d)| (o, d))
                    .collect(),
            );
        }
        let lrd = neighbors
            .iter()
            .map(|nbrs| local_density(nbrs.iter().map(|&(o, d)| d.max(k_distance[o]))))
            .collect();

        Ok(Self {
            k,
            dim,
            points: points.to_vec(),
            k_distance,
            lrd,
        })
    }

    pub fn fit_rows<'a>(rows: impl IntoIterator<Item = &'a [f64]>, dim: usize, k: usize) -> Result<Self> {
        let mut flat = Vec::new();
        for r in rows {
            check_dim(dim, r)?;
            flat.extend_from_slice(r);
        }
        Self::fit(&flat, dim, k)
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn len(&self) -> usize {
        self.lrd.len()
    }

    pub fn is_empty(&self) -> bool {
        self.lrd.is_empty()
    }

    pub fn k_distances(&self) -> &[f64] {
        &self.k_distance
    }

    /// Raw local outlier factor of a query point.
    pub fn lof(&self, x: &[f64]) -> Result<f64> {
        check_dim(self.dim, x)?;
        let dists: Vec<f64> = self.points.chunks_exact(self.dim).map(|r| euclidean(x, r)).collect();
        let kd = kth_smallest(&dists, self.k);
        let mut lrd_sum = 0.0;
        let mut count = 0usize;
        let lrd_x = local_density(dists.iter().enumerate().filter(|&(_, &d)| d <= kd).map(|(o, &d)| {
            lrd_sum += self.lrd[o];
            count += 1;
            d.max(self.k_distance[o])
        }));
        Ok(lrd_sum / count as f64 / lrd_x)
    }

    /// Conformity score `-LOF(x)`.
    pub fn score(&self, x: &[f64]) -> Result<f64> {
        self.lof(x).map(|v| -v)
    }
}

fn local_density(reach: impl Iterator<Item = f64>) -> f64 {
    let (sum, count) = reach.fold((0.0, 0usize), |(s, c), r| (s + r, c + 1));
    1.0 / (sum / count as f64 + REACH_EPS)
}

/// k-th smallest value (1-based) of `values`.
fn kth_smallest(values: &[f64], k: usize) -> f64 {
    let mut buf = values.to_vec();
    let (_, kth, _) = buf.select_nth_unstable_by(k - 1, f64::total_cmp);
    *kth
}

pub fn lof_fit(points: &[f64], dim: usize, k: usize) -> Result<LofScorer> {
    LofScorer::fit(points, dim, k)
}

pub fn lof_score(scorer: &LofScorer, x: &[f64]) -> Result<f64> {
    scorer.score(x)
}
