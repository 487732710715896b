//! Counterfactual explanations for small neural classifiers, with the
//! uncertainty and out-of-distribution instruments used to assess them:
//! softmax confidence, Monte Carlo dropout, trust scores and Local Outlier
//! Factor.

pub mod counterfactual;
pub mod dataset;
mod error;
pub mod neighbors;
pub mod nn;
pub mod rng;
pub mod stats;
pub mod tensor;
pub mod uncertainty;

pub use counterfactual::{CfMethod, CounterfactualResult};
pub use dataset::{Dataset, FeatureRange};
pub use error::{Error, Result};
pub use neighbors::{Metric, Neighbor, PointIndex};
pub use nn::{Mode, Network, TrainConfig};
pub use tensor::Tensor;
pub use uncertainty::{PredictiveSummary, TrustScoreModel};
