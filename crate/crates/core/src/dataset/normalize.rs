use serde::{Deserialize, Serialize};

use super::{Dataset, FeatureRange};
use crate::error::{Error, Result};

pub const DEFAULT_RANGE: FeatureRange = FeatureRange::new(-0.5, 0.5);

/// Per-feature affine map `y = offset + scale * x`, clamped to `target`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Normalization {
    pub target: FeatureRange,
    pub scale: Vec<f64>,
    pub offset: Vec<f64>,
}

impl Normalization {
    pub fn apply(&self, row: &[f64]) -> Vec<f64> {
        row.iter()
            .zip(self.scale.iter().zip(&self.offset))
            .map(|(&x, (&s, &o))| self.target.clamp(o + x * s))
            .collect()
    }

    /// Map back to the source space. Constant features (scale 0) have no
    /// inverse and come back as NaN.
    pub fn invert(&self, row: &[f64]) -> Vec<f64> {
        row.iter()
            .zip(self.scale.iter().zip(&self.offset))
            .map(|(&y, (&s, &o))| if s == 0.0 { f64::NAN } else { (y - o) / s })
            .collect()
    }

    /// Apply this transform to another split of the same feature space.
    pub fn apply_dataset(&self, data: &Dataset) -> Result<Dataset> {
        if data.dim() != self.scale.len() {
            return Err(Error::DimensionMismatch {
                expected: self.scale.len(),
                found: data.dim(),
            });
        }
        let features = data.rows().flat_map(|r| self.apply(r)).collect();
        Ok(data
            .clone()
            .set_normalized(features, self.target, self.clone(), Vec::new()))
    }
}

/// Map features onto `target`.
///
/// Data with a declared range (images in `[0, 1]`) is mapped with one affine
/// transform shared by all features; data without one (tabular) is min-max
/// scaled per feature. Data already declared in `target` is returned as is.
pub fn normalize(data: &Dataset, target: FeatureRange) -> Result<Dataset> {
    if !(target.lo < target.hi) {
        return Err(Error::Config(format!(
            "empty normalization range [{}, {}]",
            target.lo, target.hi
        )));
    }
    if data.range() == Some(target) {
        return Ok(data.clone());
    }
    let dim = data.dim();
    let mut warnings = Vec::new();
    let (scale, offset) = match data.range() {
        Some(src) => {
            let s = target.width() / src.width();
            (vec![s; dim], vec![target.lo - src.lo * s; dim])
        }
        None => {
            let mut lo = vec![f64::INFINITY; dim];
            let mut hi = vec![f64::NEG_INFINITY; dim];
            for row in data.rows() {
                for j in 0..dim {
                    lo[j] = lo[j].min(row[j]);
                    hi[j] = hi[j].max(row[j]);
                }
            }
            let mut scale = vec![0.0; dim];
            let mut offset = vec![0.0; dim];
            for j in 0..dim {
                if hi[j] > lo[j] {
                    scale[j] = target.width() / (hi[j] - lo[j]);
                    offset[j] = target.lo - lo[j] * scale[j];
                } else {
                    offset[j] = 0.5 * (target.lo + target.hi);
                    let msg = format!("feature {j} is constant; mapped to range midpoint");
                    log::warn!("{msg}");
                    warnings.push(msg);
                }
            }
            (scale, offset)
        }
    };
    let norm = Normalization {
        target,
        scale,
        offset,
    };
    let features = match data.range() {
        // shift by the range origin so that [0,1] pixels map as `x - 0.5`
        Some(src) => data
            .features()
            .iter()
            .map(|&x| target.clamp(target.lo + (x - src.lo) * norm.scale[0]))
            .collect(),
        None => data.rows().flat_map(|r| norm.apply(r)).collect(),
    };
    Ok(data.clone().set_normalized(features, target, norm, warnings))
}
