use serde::{Deserialize, Serialize};

use super::descent::descend;
use super::{CfMethod, CounterfactualResult, LossTerms, TargetPolicy};
use crate::dataset::FeatureRange;
use crate::error::{Error, Result};
use crate::nn::{input_loss_value, InputLoss, LossTerm, Mode, Network};
use crate::tensor::argmax;

/// λ is treated as unbounded above until a failing value is seen.
const LAMBDA_CEILING: f64 = 1e10;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct WachterConfig {
    pub target_proba: f64,
    pub tol: f64,
    pub lambda_init: f64,
    pub lambda_steps: usize,
    pub max_iter: usize,
    pub learning_rate: f64,
    pub target: TargetPolicy,
}

impl Default for WachterConfig {
    fn default() -> Self {
        Self {
            target_proba: 0.5,
            tol: 0.01,
            lambda_init: 0.1,
            lambda_steps: 10,
            max_iter: 1000,
            learning_rate: 1e-2,
            target: TargetPolicy::Other,
        }
    }
}

impl WachterConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.target_proba > 0.0 && self.target_proba <= 1.0) {
            return Err(Error::Config(format!("target_proba {} outside (0, 1]", self.target_proba)));
        }
        if !(self.tol > 0.0) {
            return Err(Error::Config("tol must be positive".into()));
        }
        if !(self.lambda_init > 0.0) || !(self.learning_rate > 0.0) {
            return Err(Error::Config("lambda_init and learning_rate must be positive".into()));
        }
        if self.lambda_steps == 0 {
            return Err(Error::Config("lambda_steps must be at least 1".into()));
        }
        Ok(())
    }

    fn accepts(&self, p_target: f64) -> bool {
        (p_target - self.target_proba).abs() <= self.tol || p_target > self.target_proba
    }
}

/// Second most probable class, ties to the lower id.
pub fn runner_up(probs: &[f64]) -> usize {
    let top = argmax(probs);
    let mut best: Option<usize> = None;
    for (i, &p) in probs.iter().enumerate() {
        if i != top && best.is_none_or(|b| p > probs[b]) {
            best = Some(i);
        }
    }
    best.unwrap_or(top)
}

struct Candidate {
    x: Vec<f64>,
    l1: f64,
    gap: f64,
    trace: Vec<f64>,
    lambda: f64,
}

/// Minimise `(p_t(x') - target_proba)^2 + λ ||x' - x||_1` over `x'`,
/// adjusting λ by bisection between rounds: raised after a round that found
/// a valid point, lowered otherwise. Returns the valid point with the
/// smallest L1 distance, or the attempt closest to validity.
pub fn wachter_cf(
    net: &Network,
    x: &[f64],
    range: Option<FeatureRange>,
    cfg: &WachterConfig,
) -> Result<CounterfactualResult> {
    cfg.validate()?;
    let probs = net.trace(x, Mode::Eval, None)?.output().to_vec();
    let original = argmax(&probs);
    let target = match cfg.target {
        TargetPolicy::Other => runner_up(&probs),
        TargetPolicy::Fixed(c) => {
            if c >= probs.len() {
                return Err(Error::UnknownClass(c));
            }
            c
        }
    };

    let finish = |x_cf: Vec<f64>, valid, iterations, trace, weight| -> Result<CounterfactualResult> {
        let loss = InputLoss::new()
            .term(1.0, LossTerm::ProbSquared { class: target, target: cfg.target_proba })
            .term(weight, LossTerm::L1 { reference: x });
        let eval = input_loss_value(net, &x_cf, &loss)?;
        Ok(CounterfactualResult {
            method: CfMethod::Wachter,
            loss: LossTerms {
                total: Some(eval.value),
                l_pred: Some(eval.term_values[0]),
                l_dist: Some(eval.term_values[1]),
                ..LossTerms::default()
            },
            x_cf,
            original_class: original,
            target,
            valid,
            iterations,
            loss_trace: trace,
            weight: Some(weight),
            source_id: None,
            metrics: None,
        })
    };

    if cfg.accepts(probs[target]) {
        return finish(x.to_vec(), true, 0, Vec::new(), cfg.lambda_init);
    }

    let (mut lower, mut upper) = (0.0f64, LAMBDA_CEILING);
    let mut lambda = cfg.lambda_init;
    let mut best_valid: Option<Candidate> = None;
    let mut best_attempt: Option<Candidate> = None;
    let mut iterations = 0;
    for _ in 0..cfg.lambda_steps {
        let loss = InputLoss::new()
            .term(1.0, LossTerm::ProbSquared { class: target, target: cfg.target_proba })
            .term(lambda, LossTerm::L1 { reference: x });
        let mut round_valid: Option<(Vec<f64>, f64)> = None;
        let mut round_closest: Option<(Vec<f64>, f64, f64)> = None;
        let run = descend(net, x, &loss, range, cfg.learning_rate, cfg.max_iter, |point, eval| {
            let p_t = eval.probs.as_ref().expect("probability term present")[target];
            let l1 = eval.term_values[1];
            if cfg.accepts(p_t) {
                if round_valid.as_ref().is_none_or(|(_, d)| l1 < *d) {
                    round_valid = Some((point.to_vec(), l1));
                }
            } else {
                let gap = (p_t - cfg.target_proba).abs();
                if round_closest.as_ref().is_none_or(|(_, g, _)| gap < *g) {
                    round_closest = Some((point.to_vec(), gap, l1));
                }
            }
        })?;
        iterations += run.steps;
        let found = round_valid.is_some();
        if let Some((point, l1)) = round_valid {
            if best_valid.as_ref().is_none_or(|b| l1 < b.l1) {
                best_valid = Some(Candidate {
                    x: point,
                    l1,
                    gap: 0.0,
                    trace: run.trace,
                    lambda,
                });
            }
        } else if let Some((point, gap, l1)) = round_closest {
            if best_attempt.as_ref().is_none_or(|b| gap < b.gap) {
                best_attempt = Some(Candidate {
                    x: point,
                    l1,
                    gap,
                    trace: run.trace,
                    lambda,
                });
            }
        }
        log::debug!("lambda {lambda:.4e}: valid={found}");
        if found {
            lower = lower.max(lambda);
            lambda = if upper < LAMBDA_CEILING { 0.5 * (lower + upper) } else { lambda * 10.0 };
        } else {
            upper = upper.min(lambda);
            lambda = if lower > 0.0 { 0.5 * (lower + upper) } else { lambda / 10.0 };
        }
    }

    match (best_valid, best_attempt) {
        (Some(c), _) => finish(c.x, true, iterations, c.trace, c.lambda),
        (None, Some(c)) => finish(c.x, false, iterations, c.trace, c.lambda),
        (None, None) => finish(x.to_vec(), false, iterations, Vec::new(), cfg.lambda_init),
    }
}
