use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::{Mode, Network};
use crate::rng::substream;
use crate::tensor::argmax;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct McDropoutConfig {
    /// Number of stochastic forward passes.
    pub passes: usize,
    pub seed: u64,
}

impl Default for McDropoutConfig {
    fn default() -> Self {
        Self { passes: 100, seed: 0 }
    }
}

/// Per-class Monte Carlo statistics for one input.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassStats {
    /// Deterministic (dropout off) probability.
    pub softmax: f64,
    pub mc_mean: f64,
    /// Population standard deviation over passes.
    pub mc_std: f64,
    /// Variance of the per-pass probability.
    pub epistemic: f64,
    /// Mean per-pass Bernoulli variance `p (1 - p)`.
    pub aleatoric: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictiveSummary {
    pub classes: Vec<ClassStats>,
    /// Deterministic argmax class.
    pub predicted: usize,
    /// Class the scalar `mc_mean` / `mc_std` refer to.
    pub designated: usize,
    pub mc_mean: f64,
    pub mc_std: f64,
    pub passes: usize,
}

impl PredictiveSummary {
    pub fn designate(&mut self, class: usize) {
        self.designated = class;
        self.mc_mean = self.classes[class].mc_mean;
        self.mc_std = self.classes[class].mc_std;
    }

    pub fn designated_stats(&self) -> &ClassStats {
        &self.classes[self.designated]
    }
}

/// Monte Carlo dropout summary, designated at the deterministic argmax.
pub fn mc_dropout(net: &Network, x: &[f64], cfg: &McDropoutConfig) -> Result<PredictiveSummary> {
    mc_dropout_for(net, x, cfg, None)
}

/// Monte Carlo dropout summary designated at `class` (argmax when `None`).
///
/// Pass `t` draws its masks from the stream `(cfg.seed, t)`, so the result
/// depends only on the seed. Without an active dropout layer every pass
/// equals the deterministic forward pass and the spread is zero.
pub fn mc_dropout_for(
    net: &Network,
    x: &[f64],
    cfg: &McDropoutConfig,
    class: Option<usize>,
) -> Result<PredictiveSummary> {
    if cfg.passes < 2 {
        return Err(Error::Config(format!(
            "MC dropout needs at least 2 passes, got {}",
            cfg.passes
        )));
    }
    let det = net.trace(x, Mode::Eval, None)?.output().to_vec();
    let c = det.len();
    if let Some(k) = class {
        if k >= c {
            return Err(Error::UnknownClass(k));
        }
    }
    let samples: Vec<Vec<f64>> = if net.has_active_dropout() {
        (0..cfg.passes)
            .map(|t| {
                let mut rng = substream(cfg.seed, t as u64);
                net.trace(x, Mode::McDropout, Some(&mut rng))
                    .map(|tr| tr.output().to_vec())
            })
            .collect::<Result<_>>()?
    } else {
        vec![det.clone()]
    };
    let t = samples.len() as f64;
    let classes = (0..c)
        .map(|k| {
            let mean = samples.iter().map(|s| s[k]).sum::<f64>() / t;
            let epistemic = samples.iter().map(|s| (s[k] - mean).powi(2)).sum::<f64>() / t;
            let aleatoric = samples.iter().map(|s| s[k] * (1.0 - s[k])).sum::<f64>() / t;
            ClassStats {
                softmax: det[k],
                mc_mean: mean,
                mc_std: epistemic.sqrt(),
                epistemic,
                aleatoric,
            }
        })
        .collect();
    let predicted = argmax(&det);
    let mut summary = PredictiveSummary {
        classes,
        predicted,
        designated: predicted,
        mc_mean: 0.0,
        mc_std: 0.0,
        passes: cfg.passes,
    };
    summary.designate(class.unwrap_or(predicted));
    Ok(summary)
}
