//! Counterfactual generators (nearest unlike neighbour retrieval, the
//! λ-weighted probability search, prototype-guided search), the autoencoder
//! and prototype machinery they rely on, and per-explanation metrics.

mod autoencoder;
mod descent;
mod nun;
mod proto;
mod wachter;

pub use autoencoder::{train_autoencoder, AeReport, Autoencoder, AutoencoderConfig};
pub use nun::{nun_cf, NunSearcher};
pub use proto::{class_prototypes, proto_cf, ClassPrototype, LatentIndex, ProtoCfConfig, Prototypes};
pub use wachter::{runner_up, wachter_cf, WachterConfig};

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::nn::Network;
use crate::tensor::{l1_distance, l2_distance};
use crate::uncertainty::{mc_dropout_for, McDropoutConfig, PredictiveSummary, TrustScoreModel};

/// Coordinates closer than this count as unchanged for sparsity.
pub const SPARSITY_TOLERANCE: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CfMethod {
    Nun,
    Wachter,
    Proto,
}

impl CfMethod {
    pub fn name(self) -> &'static str {
        match self {
            CfMethod::Nun => "nun",
            CfMethod::Wachter => "wachter",
            CfMethod::Proto => "proto",
        }
    }
}

/// How the class a search aims for is chosen.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TargetPolicy {
    /// Runner-up class of the original prediction.
    #[default]
    Other,
    Fixed(usize),
}

/// Unweighted loss components at the returned point; absent terms do not
/// apply to the method.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct LossTerms {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub total: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub l_pred: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub l1: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub l2: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub l_ae: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub l_proto: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub l_dist: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CfMetrics {
    /// Number of coordinates changed by more than [`SPARSITY_TOLERANCE`].
    pub sparsity: usize,
    pub l1: f64,
    /// Euclidean distance (not squared).
    pub l2: f64,
    /// Trust score of the counterfactual taking the target as its label.
    pub trust: f64,
    /// Monte Carlo summary designated at the target class.
    pub summary: PredictiveSummary,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CounterfactualResult {
    pub method: CfMethod,
    pub x_cf: Vec<f64>,
    /// Deterministic prediction on the query.
    pub original_class: usize,
    pub target: usize,
    pub valid: bool,
    /// Gradient steps taken over all outer rounds (0 for retrieval).
    pub iterations: usize,
    pub loss: LossTerms,
    /// Accepted loss values of the round that produced `x_cf`.
    pub loss_trace: Vec<f64>,
    /// λ or c of the round that produced `x_cf`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub weight: Option<f64>,
    /// Training row returned by retrieval.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub source_id: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub metrics: Option<CfMetrics>,
}

/// Sparsity, proximity, trust and Monte Carlo statistics of `result`
/// relative to the query `x`.
pub fn evaluate_cf(
    x: &[f64],
    result: &CounterfactualResult,
    net: &Network,
    trust: &TrustScoreModel,
    mc: &McDropoutConfig,
) -> Result<CfMetrics> {
    let x_cf = &result.x_cf;
    let sparsity = x
        .iter()
        .zip(x_cf)
        .filter(|(a, b)| (*a - *b).abs() > SPARSITY_TOLERANCE)
        .count();
    Ok(CfMetrics {
        sparsity,
        l1: l1_distance(x, x_cf),
        l2: l2_distance(x, x_cf),
        trust: trust.score(x_cf, result.target)?,
        summary: mc_dropout_for(net, x_cf, mc, Some(result.target))?,
    })
}

/// [`evaluate_cf`] stored into the result.
pub fn attach_metrics(
    x: &[f64],
    result: &mut CounterfactualResult,
    net: &Network,
    trust: &TrustScoreModel,
    mc: &McDropoutConfig,
) -> Result<()> {
    result.metrics = Some(evaluate_cf(x, result, net, trust, mc)?);
    Ok(())
}
