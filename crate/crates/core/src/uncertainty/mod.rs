//! Evaluation instruments: softmax confidence, Monte Carlo dropout
//! statistics, trust scores and Local Outlier Factor novelty scores.

mod lof;
mod mc;
mod trust;

pub use lof::{LofConfig, LofModel, LofScore, LOF_EPSILON};
pub use mc::{mc_dropout, mc_dropout_for, ClassStats, McDropoutConfig, PredictiveSummary};
pub use trust::{DistType, TrustDetail, TrustScoreConfig, TrustScoreModel};

use crate::error::Result;
use crate::nn::{Mode, Network};
use crate::tensor::argmax;

/// Deterministic prediction and its softmax probability.
/// Ties go to the lowest class id.
pub fn softmax_confidence(net: &Network, x: &[f64]) -> Result<(usize, f64)> {
    let trace = net.trace(x, Mode::Eval, None)?;
    let p = trace.output();
    let c = argmax(p);
    Ok((c, p[c]))
}
