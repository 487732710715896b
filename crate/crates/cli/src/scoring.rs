use cfu_core::dataset::Dataset;
use cfu_core::nn::Network;
use cfu_core::rng::mix_seed;
use cfu_core::uncertainty::{mc_dropout, LofModel, McDropoutConfig, TrustScoreModel};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::ExperimentConfig;
use crate::error::Result;

/// One row of a score dump.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreRow {
    pub id: usize,
    pub softmax: f64,
    pub mc_mean: f64,
    pub mc_std: f64,
    pub epistemic: f64,
    pub aleatoric: f64,
    pub trust: f64,
    pub lof: f64,
    pub lof_flag: bool,
}

/// Classifier plus the neighbour-based instruments fitted on its training set.
pub struct Instruments<'a> {
    pub net: &'a Network,
    pub trust: TrustScoreModel,
    pub lof: LofModel,
    pub mc: McDropoutConfig,
}

impl<'a> Instruments<'a> {
    pub fn fit(cfg: &ExperimentConfig, net: &'a Network, train: &Dataset) -> Result<Self> {
        let trust = TrustScoreModel::fit(train.features(), train.dim(), train.labels(), &cfg.trust)?;
        let lof = LofModel::fit(train.features(), train.dim(), &cfg.lof)?;
        Ok(Self {
            net,
            trust,
            lof,
            mc: cfg.mc.clone(),
        })
    }

    /// Score one row. `stream` separates the Monte Carlo seeds of different
    /// row sets.
    pub fn score(&self, id: usize, x: &[f64], stream: u64) -> Result<ScoreRow> {
        let mc = McDropoutConfig {
            passes: self.mc.passes,
            seed: mix_seed(self.mc.seed, (stream << 32) | id as u64),
        };
        let summary = mc_dropout(self.net, x, &mc)?;
        let predicted = summary.predicted;
        let stats = summary.designated_stats();
        let lof = self.lof.score(x)?;
        Ok(ScoreRow {
            id,
            softmax: stats.softmax,
            mc_mean: stats.mc_mean,
            mc_std: stats.mc_std,
            epistemic: stats.epistemic,
            aleatoric: stats.aleatoric,
            trust: self.trust.score(x, predicted)?,
            lof: lof.lof,
            lof_flag: lof.is_outlier,
        })
    }

    pub fn score_rows(&self, rows: &[&[f64]], stream: u64) -> Result<Vec<ScoreRow>> {
        rows.par_iter()
            .enumerate()
            .map(|(id, x)| self.score(id, x, stream))
            .collect()
    }
}
