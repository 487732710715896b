use super::{CfMethod, CounterfactualResult, LossTerms};
use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::neighbors::{Metric, PointIndex, DEFAULT_LEAF_SIZE};
use crate::nn::{predict, Network};
use crate::tensor::{l1_distance, l2_distance};

/// Per-class Euclidean indexes over a training set for repeated nearest
/// unlike neighbour queries.
#[derive(Debug, Clone)]
pub struct NunSearcher {
    /// `(class, original row ids in increasing order, index over them)`.
    classes: Vec<(usize, Vec<usize>, PointIndex)>,
    dim: usize,
}

impl NunSearcher {
    pub fn new(train: &Dataset) -> Result<Self> {
        if train.is_empty() {
            return Err(Error::Empty("training set".into()));
        }
        let mut classes = Vec::new();
        for class in 0..train.n_classes() {
            let ids: Vec<usize> = (0..train.len()).filter(|&i| train.labels()[i] == class).collect();
            if ids.is_empty() {
                continue;
            }
            let rows: Vec<&[f64]> = ids.iter().map(|&i| train.row(i)).collect();
            let index = PointIndex::from_rows(&rows, DEFAULT_LEAF_SIZE, Metric::L2)?;
            classes.push((class, ids, index));
        }
        Ok(Self {
            classes,
            dim: train.dim(),
        })
    }

    /// Nearest training row (by L2, ties to the lower row id) whose label is
    /// `target`, or any label other than `predicted` when no target is given.
    /// Returns `(row id, label, distance)`.
    pub fn nearest(&self, x: &[f64], predicted: usize, target: Option<usize>) -> Result<(usize, usize, f64)> {
        if x.len() != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                found: x.len(),
            });
        }
        let mut best: Option<(f64, usize, usize)> = None;
        for (class, ids, index) in &self.classes {
            let eligible = match target {
                Some(t) => *class == t,
                None => *class != predicted,
            };
            if !eligible {
                continue;
            }
            let hit = index.knn(x, 1)[0];
            let cand = (hit.distance, ids[hit.id], *class);
            best = match best {
                Some(b) if (b.0, b.1) <= (cand.0, cand.1) => Some(b),
                _ => Some(cand),
            };
        }
        let (distance, id, class) = best.ok_or_else(|| {
            Error::NoCandidates(match target {
                Some(t) => format!("no training points of class {t}"),
                None => format!("no training points outside class {predicted}"),
            })
        })?;
        Ok((id, class, distance))
    }

    /// Nearest unlike neighbour as a counterfactual. Valid when the
    /// classifier's prediction on it differs from `predicted` (or equals
    /// `target` when fixed).
    pub fn search(
        &self,
        net: &Network,
        train: &Dataset,
        x: &[f64],
        predicted: usize,
        target: Option<usize>,
    ) -> Result<CounterfactualResult> {
        let (id, class, _) = self.nearest(x, predicted, target)?;
        let x_cf = train.row(id).to_vec();
        let new_class = predict(net, &x_cf)?;
        let valid = match target {
            Some(t) => new_class == t,
            None => new_class != predicted,
        };
        let l2 = l2_distance(x, &x_cf);
        Ok(CounterfactualResult {
            method: CfMethod::Nun,
            loss: LossTerms {
                l1: Some(l1_distance(x, &x_cf)),
                l2: Some(l2 * l2),
                ..LossTerms::default()
            },
            x_cf,
            original_class: predicted,
            target: class,
            valid,
            iterations: 0,
            loss_trace: Vec::new(),
            weight: None,
            source_id: Some(id),
            metrics: None,
        })
    }
}

/// One-off nearest unlike neighbour search; see [`NunSearcher`].
pub fn nun_cf(
    net: &Network,
    train: &Dataset,
    x: &[f64],
    predicted: usize,
    target: Option<usize>,
) -> Result<CounterfactualResult> {
    NunSearcher::new(train)?.search(net, train, x, predicted, target)
}
