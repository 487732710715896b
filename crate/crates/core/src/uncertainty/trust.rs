//! Trust scores: distance to the closest class other than the predicted
//! one, divided by the distance to the predicted class, both measured
//! against per-class neighbour indexes over (optionally filtered)
//! training points.

use std::cmp::Ordering;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::neighbors::{Metric, PointIndex, DEFAULT_LEAF_SIZE};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DistType {
    /// Distance to the k-th nearest neighbour of the class.
    #[default]
    Point,
    /// Mean distance to the k nearest neighbours of the class.
    Mean,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrustScoreConfig {
    pub k: usize,
    /// Fraction of each class removed before indexing, densest kept.
    pub alpha: f64,
    pub dist_type: DistType,
    pub leaf_size: usize,
    /// Added to the predicted-class distance.
    pub epsilon: f64,
    pub metric: Metric,
}

impl Default for TrustScoreConfig {
    fn default() -> Self {
        Self {
            k: 10,
            alpha: 0.0,
            dist_type: DistType::Point,
            leaf_size: DEFAULT_LEAF_SIZE,
            epsilon: 1e-12,
            metric: Metric::L2,
        }
    }
}

#[derive(Debug, Clone)]
struct ClassIndex {
    class: usize,
    index: PointIndex,
    /// Neighbour count used for this class (shrunk for small classes).
    k: usize,
    /// Original row ids of the kept points, in index order.
    kept: Vec<usize>,
}

#[derive(Debug, Clone)]
pub struct TrustScoreModel {
    config: TrustScoreConfig,
    classes: Vec<ClassIndex>,
    warnings: Vec<String>,
}

/// A trust score with the distances it was formed from.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrustDetail {
    pub score: f64,
    pub predicted_distance: f64,
    pub other_distance: f64,
    pub other_class: usize,
}

fn lexicographic(a: &[f64], b: &[f64]) -> Ordering {
    a.iter()
        .zip(b)
        .map(|(x, y)| x.total_cmp(y))
        .find(|o| o.is_ne())
        .unwrap_or(Ordering::Equal)
}

impl TrustScoreModel {
    /// Fit on a row-major `features` matrix of width `dim`.
    ///
    /// Each class's points are put in lexicographic coordinate order before
    /// indexing, which makes scores independent of training-row order.
    pub fn fit(features: &[f64], dim: usize, labels: &[usize], config: &TrustScoreConfig) -> Result<Self> {
        if config.k == 0 {
            return Err(Error::Config("trust score k must be >= 1".into()));
        }
        if !(0.0..1.0).contains(&config.alpha) {
            return Err(Error::Config(format!("alpha {} outside [0, 1)", config.alpha)));
        }
        if dim == 0 || features.len() != labels.len() * dim {
            return Err(Error::DimensionMismatch {
                expected: labels.len() * dim,
                found: features.len(),
            });
        }
        let mut present: Vec<usize> = labels.to_vec();
        present.sort_unstable();
        present.dedup();
        if present.len() < 2 {
            return Err(Error::SingleClass(present.len()));
        }
        let row = |i: usize| &features[i * dim..(i + 1) * dim];
        let mut warnings = Vec::new();
        let mut classes = Vec::with_capacity(present.len());
        for &class in &present {
            let mut ids: Vec<usize> = (0..labels.len()).filter(|&i| labels[i] == class).collect();
            ids.sort_by(|&a, &b| lexicographic(row(a), row(b)).then(a.cmp(&b)));
            let ids = filter_sparsest(&ids, &row, dim, config, class, &mut warnings)?;
            let flat: Vec<f64> = ids.iter().flat_map(|&i| row(i).iter().copied()).collect();
            let index = PointIndex::build(&flat, dim, config.leaf_size, config.metric)?;
            let k = config.k.min(ids.len());
            if ids.len() <= config.k {
                let msg = format!(
                    "class {class} keeps {} points, not more than k={}; using k={k}",
                    ids.len(),
                    config.k
                );
                log::warn!("{msg}");
                warnings.push(msg);
            }
            classes.push(ClassIndex {
                class,
                index,
                k,
                kept: ids,
            });
        }
        Ok(Self {
            config: config.clone(),
            classes,
            warnings,
        })
    }

    pub fn config(&self) -> &TrustScoreConfig {
        &self.config
    }

    pub fn warnings(&self) -> &[String] {
        &self.warnings
    }

    pub fn classes(&self) -> Vec<usize> {
        self.classes.iter().map(|c| c.class).collect()
    }

    pub fn dim(&self) -> usize {
        self.classes[0].index.dim()
    }

    /// Original row ids kept for `class` after filtering.
    pub fn kept(&self, class: usize) -> Option<&[usize]> {
        self.find(class).map(|c| c.kept.as_slice())
    }

    fn find(&self, class: usize) -> Option<&ClassIndex> {
        self.classes.iter().find(|c| c.class == class)
    }

    fn class_distance_of(&self, ci: &ClassIndex, x: &[f64]) -> f64 {
        let nn = ci.index.knn(x, ci.k);
        match self.config.dist_type {
            DistType::Point => nn[ci.k - 1].distance,
            DistType::Mean => nn.iter().map(|n| n.distance).sum::<f64>() / ci.k as f64,
        }
    }

    /// Distance from `x` to `class` under the configured distance type.
    pub fn class_distance(&self, x: &[f64], class: usize) -> Result<f64> {
        self.check_dim(x)?;
        let ci = self.find(class).ok_or(Error::UnknownClass(class))?;
        Ok(self.class_distance_of(ci, x))
    }

    pub fn score(&self, x: &[f64], predicted: usize) -> Result<f64> {
        self.detail(x, predicted).map(|d| d.score)
    }

    pub fn detail(&self, x: &[f64], predicted: usize) -> Result<TrustDetail> {
        self.check_dim(x)?;
        let pred = self.find(predicted).ok_or(Error::UnknownClass(predicted))?;
        let d_pred = self.class_distance_of(pred, x);
        let (other_class, d_other) = self
            .classes
            .iter()
            .filter(|c| c.class != predicted)
            .map(|c| (c.class, self.class_distance_of(c, x)))
            .fold((usize::MAX, f64::INFINITY), |best, cur| if cur.1 < best.1 { cur } else { best });
        Ok(TrustDetail {
            score: d_other / (d_pred + self.config.epsilon),
            predicted_distance: d_pred,
            other_distance: d_other,
            other_class,
        })
    }

    fn check_dim(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                found: x.len(),
            });
        }
        Ok(())
    }
}

/// Drop the `ceil(alpha * n)` points of one class whose within-class k-NN
/// radius is largest. Among equal radii the later points (in canonical
/// order) go first. At least one point is always kept.
fn filter_sparsest<'a>(
    ids: &[usize],
    row: &impl Fn(usize) -> &'a [f64],
    dim: usize,
    config: &TrustScoreConfig,
    class: usize,
    warnings: &mut Vec<String>,
) -> Result<Vec<usize>> {
    let n = ids.len();
    let mut remove = (config.alpha * n as f64 - 1e-9).ceil().max(0.0) as usize;
    if remove == 0 || n < 2 {
        return Ok(ids.to_vec());
    }
    if remove >= n {
        remove = n - 1;
        let msg = format!("alpha would empty class {class}; keeping one point");
        log::warn!("{msg}");
        warnings.push(msg);
    }
    let flat: Vec<f64> = ids.iter().flat_map(|&i| row(i).iter().copied()).collect();
    let index = PointIndex::build(&flat, dim, config.leaf_size, config.metric)?;
    let radius = radii_excluding_self(&index, config.k.min(n - 1));
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| radius[a].total_cmp(&radius[b]).then(a.cmp(&b)));
    let mut keep: Vec<usize> = order[..n - remove].to_vec();
    keep.sort_unstable();
    Ok(keep.into_iter().map(|i| ids[i]).collect())
}

/// Distance from each indexed point to its `k`-th nearest other point.
pub(crate) fn radii_excluding_self(index: &PointIndex, k: usize) -> Vec<f64> {
    (0..index.len())
        .map(|i| {
            let nn = neighbours_excluding_self(index, i, k);
            nn.last().map_or(0.0, |n| n.distance)
        })
        .collect()
}

/// The `k` nearest neighbours of indexed point `i`, without `i` itself.
pub(crate) fn neighbours_excluding_self(
    index: &PointIndex,
    i: usize,
    k: usize,
) -> Vec<crate::neighbors::Neighbor> {
    let mut nn = index.knn(index.point(i), k + 1);
    match nn.iter().position(|n| n.id == i) {
        Some(pos) => {
            nn.remove(pos);
        }
        None => {
            nn.truncate(k);
        }
    }
    nn.truncate(k);
    nn
}

#[cfg(test)]
mod tests {
    use super::*;

    fn two_lines() -> (Vec<f64>, Vec<usize>) {
        // class 0 on x = 0, class 1 on x = 2
        let mut f = Vec::new();
        let mut l = Vec::new();
        for i in 0..5 {
            f.extend_from_slice(&[0.0, i as f64]);
            l.push(0);
            f.extend_from_slice(&[2.0, i as f64]);
            l.push(1);
        }
        (f, l)
    }

    #[test]
    fn equidistant_query_scores_one() {
        let (f, l) = two_lines();
        let cfg = TrustScoreConfig { k: 1, ..Default::default() };
        let m = TrustScoreModel::fit(&f, 2, &l, &cfg).unwrap();
        let s = m.score(&[1.0, 2.0], 0).unwrap();
        assert!((s - 1.0).abs() < 1e-9);
    }

    #[test]
    fn ratio_of_distances() {
        let (f, l) = two_lines();
        let cfg = TrustScoreConfig { k: 1, epsilon: 0.0, ..Default::default() };
        let m = TrustScoreModel::fit(&f, 2, &l, &cfg).unwrap();
        // distance 1 to class 0, 3 to class 1 ... use x = -1
        let d = m.detail(&[-1.0, 0.0], 0).unwrap();
        assert_eq!(d.predicted_distance, 1.0);
        assert_eq!(d.other_distance, 3.0);
        assert_eq!(d.score, 3.0);
        let d = m.detail(&[0.5, 0.0], 1).unwrap();
        assert_eq!(d.score, 0.5 / 1.5);
    }

    #[test]
    fn exact_training_match_is_epsilon_guarded() {
        let (f, l) = two_lines();
        let cfg = TrustScoreConfig { k: 1, ..Default::default() };
        let m = TrustScoreModel::fit(&f, 2, &l, &cfg).unwrap();
        assert!(m.score(&[0.0, 3.0], 0).unwrap() > 1e6);
    }

    #[test]
    fn alpha_zero_keeps_everything_and_half_keeps_half() {
        let (f, l) = two_lines();
        let m = TrustScoreModel::fit(&f, 2, &l, &TrustScoreConfig::default()).unwrap();
        assert_eq!(m.kept(0).unwrap().len(), 5);
        let mut f10 = Vec::new();
        let mut l10 = Vec::new();
        for i in 0..10 {
            f10.push((i * i) as f64);
            l10.push(0);
        }
        f10.push(100.0);
        l10.push(1);
        let cfg = TrustScoreConfig { k: 1, alpha: 0.5, ..Default::default() };
        let m = TrustScoreModel::fit(&f10, 1, &l10, &cfg).unwrap();
        // spacing grows with i, so the five tightest are 0,1,4,9,16
        let mut kept: Vec<usize> = m.kept(0).unwrap().to_vec();
        kept.sort_unstable();
        assert_eq!(kept, vec![0, 1, 2, 3, 4]);
        assert!(!m.warnings().is_empty());
    }

    #[test]
    fn single_class_rejected() {
        assert!(matches!(
            TrustScoreModel::fit(&[0.0, 1.0], 1, &[0, 0], &TrustScoreConfig::default()),
            Err(Error::SingleClass(1))
        ));
    }

    #[test]
    fn unknown_class_rejected() {
        let (f, l) = two_lines();
        let m = TrustScoreModel::fit(&f, 2, &l, &TrustScoreConfig::default()).unwrap();
        assert!(matches!(m.score(&[0.0, 0.0], 7), Err(Error::UnknownClass(7))));
    }
}
