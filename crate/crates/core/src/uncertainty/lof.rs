//! Local Outlier Factor as a novelty detector: densities are fitted on the
//! training set only and new points are scored against it.

use serde::{Deserialize, Serialize};

use super::trust::neighbours_excluding_self;
use crate::error::{Error, Result};
use crate::neighbors::{Metric, PointIndex, DEFAULT_LEAF_SIZE};

/// Added to mean reachability distances so duplicate-heavy data keeps a
/// finite density.
pub const LOF_EPSILON: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LofConfig {
    pub k: usize,
    /// Scores above this are flagged as outliers.
    pub threshold: f64,
    pub leaf_size: usize,
    pub metric: Metric,
}

impl Default for LofConfig {
    fn default() -> Self {
        Self {
            k: 10,
            threshold: 1.5,
            leaf_size: DEFAULT_LEAF_SIZE,
            metric: Metric::L2,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LofScore {
    pub lof: f64,
    pub is_outlier: bool,
}

#[derive(Debug, Clone)]
pub struct LofModel {
    index: PointIndex,
    k: usize,
    threshold: f64,
    k_distance: Vec<f64>,
    lrd: Vec<f64>,
    neighbours: Vec<Vec<usize>>,
}

impl LofModel {
    pub fn fit(features: &[f64], dim: usize, config: &LofConfig) -> Result<Self> {
        if config.k == 0 {
            return Err(Error::Config("LOF k must be >= 1".into()));
        }
        let index = PointIndex::build(features, dim, config.leaf_size, config.metric)?;
        let n = index.len();
        if n <= config.k {
            return Err(Error::TooFewPoints { n, k: config.k });
        }
        let k = config.k;
        let nbrs: Vec<Vec<crate::neighbors::Neighbor>> =
            (0..n).map(|i| neighbours_excluding_self(&index, i, k)).collect();
        let k_distance: Vec<f64> = nbrs.iter().map(|nn| nn[k - 1].distance).collect();
        let lrd = nbrs
            .iter()
            .map(|nn| {
                let reach = nn
                    .iter()
                    .map(|o| k_distance[o.id].max(o.distance))
                    .sum::<f64>()
                    / k as f64;
                1.0 / (reach + LOF_EPSILON)
            })
            .collect();
        Ok(Self {
            index,
            k,
            threshold: config.threshold,
            k_distance,
            lrd,
            neighbours: nbrs.into_iter().map(|nn| nn.into_iter().map(|o| o.id).collect()).collect(),
        })
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn threshold(&self) -> f64 {
        self.threshold
    }

    pub fn set_threshold(&mut self, threshold: f64) {
        self.threshold = threshold;
    }

    pub fn dim(&self) -> usize {
        self.index.dim()
    }

    pub fn k_distances(&self) -> &[f64] {
        &self.k_distance
    }

    /// Local reachability density of each training point.
    pub fn lrd(&self) -> &[f64] {
        &self.lrd
    }

    /// LOF of training point `i` among the other training points.
    pub fn training_lof(&self, i: usize) -> f64 {
        let nn = &self.neighbours[i];
        nn.iter().map(|&o| self.lrd[o]).sum::<f64>() / nn.len() as f64 / self.lrd[i]
    }

    pub fn score(&self, x: &[f64]) -> Result<LofScore> {
        if x.len() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                found: x.len(),
            });
        }
        let nn = self.index.knn(x, self.k);
        let reach = nn
            .iter()
            .map(|o| self.k_distance[o.id].max(o.distance))
            .sum::<f64>()
            / self.k as f64;
        let lrd_x = 1.0 / (reach + LOF_EPSILON);
        let mean_lrd = nn.iter().map(|o| self.lrd[o.id]).sum::<f64>() / self.k as f64;
        let lof = mean_lrd / lrd_x;
        Ok(LofScore {
            lof,
            is_outlier: lof > self.threshold,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid(n: usize) -> Vec<f64> {
        let mut f = Vec::new();
        for i in 0..n {
            for j in 0..n {
                f.extend_from_slice(&[i as f64, j as f64]);
            }
        }
        f
    }

    #[test]
    fn homogeneous_grid_interior_is_near_one() {
        let m = LofModel::fit(&grid(20), 2, &LofConfig::default()).unwrap();
        for i in 3..17 {
            for j in 3..17 {
                let lof = m.training_lof(i * 20 + j);
                assert!((0.9..=1.1).contains(&lof), "({i},{j}) lof {lof}");
            }
        }
    }

    #[test]
    fn identical_points_stay_finite() {
        let f = vec![0.25; 2 * 30];
        let m = LofModel::fit(&f, 2, &LofConfig::default()).unwrap();
        assert!(m.lrd().iter().all(|v| v.is_finite() && *v > 0.0));
        let s = m.score(&[0.25, 0.25]).unwrap();
        assert!((s.lof - 1.0).abs() < 1e-9);
    }

    #[test]
    fn far_point_is_an_outlier_and_infinite_threshold_never_flags() {
        let mut m = LofModel::fit(&grid(20), 2, &LofConfig::default()).unwrap();
        let s = m.score(&[2000.0, 2000.0]).unwrap();
        assert!(s.lof > 100.0 && s.is_outlier);
        m.set_threshold(f64::INFINITY);
        assert!(!m.score(&[2000.0, 2000.0]).unwrap().is_outlier);
    }

    #[test]
    fn needs_more_than_k_points() {
        assert!(matches!(
            LofModel::fit(&grid(3), 2, &LofConfig::default()),
            Err(Error::TooFewPoints { n: 9, k: 10 })
        ));
    }
}
