//! Feature matrices with integer labels: IDX and CSV ingestion,
//! normalization onto a declared range, and seeded synthetic data.

mod idx;
mod normalize;
mod synth;
mod tabular;

use serde::{Deserialize, Serialize};

pub use idx::{load_idx, read_idx_images, read_idx_labels, write_idx_images, write_idx_labels, IdxImages};
pub use normalize::{normalize, Normalization, DEFAULT_RANGE};
pub use synth::{synth_shift_pair, ShiftSplits, SynthConfig};
pub use tabular::{load_csv, read_feature_rows};

use crate::error::{Error, Result};

/// Closed interval every feature is expected to lie in.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FeatureRange {
    pub lo: f64,
    pub hi: f64,
}

impl FeatureRange {
    pub const fn new(lo: f64, hi: f64) -> Self {
        Self { lo, hi }
    }

    pub fn clamp(&self, v: f64) -> f64 {
        v.clamp(self.lo, self.hi)
    }

    pub fn clamp_all(&self, values: &mut [f64]) {
        for v in values {
            *v = self.clamp(*v);
        }
    }

    pub fn contains(&self, v: f64) -> bool {
        (self.lo..=self.hi).contains(&v)
    }

    pub fn width(&self) -> f64 {
        self.hi - self.lo
    }
}

/// Row-major feature matrix with labels in `[0, n_classes)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    features: Vec<f64>,
    dim: usize,
    feature_shape: Vec<usize>,
    labels: Vec<usize>,
    n_classes: usize,
    range: Option<FeatureRange>,
    provenance: String,
    normalization: Option<Normalization>,
    warnings: Vec<String>,
}

impl Dataset {
    /// Flat feature shape `[dim]`.
    pub fn new(
        features: Vec<f64>,
        dim: usize,
        labels: Vec<usize>,
        n_classes: usize,
        range: Option<FeatureRange>,
        provenance: impl Into<String>,
    ) -> Result<Self> {
        Self::with_shape(features, vec![dim], labels, n_classes, range, provenance)
    }

    pub fn with_shape(
        features: Vec<f64>,
        feature_shape: Vec<usize>,
        labels: Vec<usize>,
        n_classes: usize,
        range: Option<FeatureRange>,
        provenance: impl Into<String>,
    ) -> Result<Self> {
        let dim: usize = feature_shape.iter().product();
        if dim == 0 {
            return Err(Error::Empty("feature dimension".into()));
        }
        if labels.is_empty() {
            return Err(Error::Empty("dataset has no rows".into()));
        }
        if features.len() != labels.len() * dim {
            return Err(Error::DimensionMismatch {
                expected: labels.len() * dim,
                found: features.len(),
            });
        }
        if features.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("dataset features".into()));
        }
        if let Some(&label) = labels.iter().find(|&&l| l >= n_classes) {
            return Err(Error::LabelOutOfRange {
                label,
                classes: n_classes,
            });
        }
        Ok(Self {
            features,
            dim,
            feature_shape,
            labels,
            n_classes,
            range,
            provenance: provenance.into(),
            normalization: None,
            warnings: Vec::new(),
        })
    }

    /// Declare `n` classes (at least the current count), e.g. when a test
    /// split lacks some of the training classes.
    pub fn with_classes(mut self, n: usize) -> Result<Self> {
        if n < self.n_classes {
            return Err(Error::LabelOutOfRange {
                label: self.n_classes - 1,
                classes: n,
            });
        }
        self.n_classes = n;
        Ok(self)
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

    pub fn feature_shape(&self) -> &[usize] {
        &self.feature_shape
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.features[i * self.dim..(i + 1) * self.dim]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        self.features.chunks_exact(self.dim)
    }

    pub fn features(&self) -> &[f64] {
        &self.features
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn n_classes(&self) -> usize {
        self.n_classes
    }

    pub fn range(&self) -> Option<FeatureRange> {
        self.range
    }

    pub fn provenance(&self) -> &str {
        &self.provenance
    }

    pub fn normalization(&self) -> Option<&Normalization> {
        self.normalization.as_ref()
    }

    pub fn warnings(&self) -> &[String] {
        &self.warnings
    }

    /// Rows at `indices`, in that order.
    pub fn subset(&self, indices: &[usize]) -> Result<Self> {
        let mut features = Vec::with_capacity(indices.len() * self.dim);
        let mut labels = Vec::with_capacity(indices.len());
        for &i in indices {
            features.extend_from_slice(self.row(i));
            labels.push(self.labels[i]);
        }
        let mut out = Self::with_shape(
            features,
            self.feature_shape.clone(),
            labels,
            self.n_classes,
            self.range,
            self.provenance.clone(),
        )?;
        out.normalization = self.normalization.clone();
        Ok(out)
    }

    pub(crate) fn set_normalized(
        mut self,
        features: Vec<f64>,
        range: FeatureRange,
        normalization: Normalization,
        warnings: Vec<String>,
    ) -> Self {
        self.features = features;
        self.range = Some(range);
        self.normalization = Some(normalization);
        self.warnings.extend(warnings);
        self
    }

    pub fn summary(&self, name: &str) -> SplitInfo {
        SplitInfo {
            name: name.to_string(),
            provenance: self.provenance.clone(),
            rows: self.len(),
            dim: self.dim,
            classes: self.n_classes,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitInfo {
    pub name: String,
    pub provenance: String,
    pub rows: usize,
    pub dim: usize,
    pub classes: usize,
}

/// JSON manifest naming the splits of an experiment and the normalization
/// applied to them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub splits: Vec<SplitInfo>,
    pub range: Option<FeatureRange>,
    pub normalization: Option<Normalization>,
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_bad_rows() {
        assert!(Dataset::new(vec![], 2, vec![], 2, None, "t").is_err());
        assert!(Dataset::new(vec![0.0, f64::NAN], 2, vec![0], 2, None, "t").is_err());
        assert!(Dataset::new(vec![0.0, 1.0], 2, vec![2], 2, None, "t").is_err());
        assert!(Dataset::new(vec![0.0, 1.0, 2.0], 2, vec![0], 2, None, "t").is_err());
    }

    #[test]
    fn subset_keeps_order() {
        let d = Dataset::new(vec![0.0, 1.0, 2.0, 3.0, 4.0, 5.0], 2, vec![0, 1, 0], 2, None, "t").unwrap();
        let s = d.subset(&[2, 0]).unwrap();
        assert_eq!(s.row(0), &[4.0, 5.0]);
        assert_eq!(s.labels(), &[0, 0]);
    }
}
