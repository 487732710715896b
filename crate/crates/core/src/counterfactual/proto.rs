use serde::{Deserialize, Serialize};

use super::autoencoder::Autoencoder;
use super::descent::descend;
use super::{CfMethod, CounterfactualResult, LossTerms};
use crate::dataset::{Dataset, FeatureRange};
use crate::error::{Error, Result};
use crate::neighbors::{Metric, PointIndex, DEFAULT_LEAF_SIZE};
use crate::nn::{input_loss_value, InputLoss, LossTerm, Mode, Network};
use crate::tensor::{argmax, squared_l2};

/// c is treated as unbounded above until a succeeding value is seen.
const C_CEILING: f64 = 1e10;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ProtoCfConfig {
    pub c_init: f64,
    pub c_steps: usize,
    pub beta: f64,
    /// Weight of the reconstruction term.
    pub gamma: f64,
    /// Weight of the prototype term.
    pub theta: f64,
    pub kappa: f64,
    pub k_proto: usize,
    pub max_iter: usize,
    pub learning_rate: f64,
    /// Class to aim for; the nearest prototype's class when absent.
    pub target: Option<usize>,
}

impl Default for ProtoCfConfig {
    fn default() -> Self {
        Self {
            c_init: 1.0,
            c_steps: 2,
            beta: 0.1,
            gamma: 100.0,
            theta: 100.0,
            kappa: 0.0,
            k_proto: 10,
            max_iter: 1000,
            learning_rate: 1e-2,
            target: None,
        }
    }
}

impl ProtoCfConfig {
    pub fn validate(&self) -> Result<()> {
        let weights = [self.c_init, self.beta, self.gamma, self.theta, self.kappa];
        if weights.iter().any(|w| !(w.is_finite() && *w >= 0.0)) {
            return Err(Error::Config("loss weights must be finite and non-negative".into()));
        }
        if self.c_steps == 0 || self.k_proto == 0 {
            return Err(Error::Config("c_steps and k_proto must be at least 1".into()));
        }
        if !(self.learning_rate > 0.0) {
            return Err(Error::Config("learning_rate must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassPrototype {
    pub class: usize,
    pub latent: Vec<f64>,
    /// Training rows averaged into the prototype.
    pub members: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Prototypes {
    /// Class whose prototype is nearest to the query's encoding, excluding
    /// the predicted class.
    pub target: usize,
    pub prototypes: Vec<ClassPrototype>,
}

impl Prototypes {
    pub fn get(&self, class: usize) -> Option<&ClassPrototype> {
        self.prototypes.iter().find(|p| p.class == class)
    }
}

/// Training encodings indexed per class for repeated prototype queries.
#[derive(Debug, Clone)]
pub struct LatentIndex {
    classes: Vec<(usize, Vec<usize>, PointIndex)>,
}

impl LatentIndex {
    pub fn new(ae: &Autoencoder, train: &Dataset) -> Result<Self> {
        if train.dim() != ae.input_dim() {
            return Err(Error::DimensionMismatch {
                expected: ae.input_dim(),
                found: train.dim(),
            });
        }
        let codes = train.rows().map(|r| ae.encode(r)).collect::<Result<Vec<_>>>()?;
        let mut classes = Vec::new();
        for class in 0..train.n_classes() {
            let ids: Vec<usize> = (0..train.len()).filter(|&i| train.labels()[i] == class).collect();
            if ids.is_empty() {
                continue;
            }
            let rows: Vec<&[f64]> = ids.iter().map(|&i| codes[i].as_slice()).collect();
            let index = PointIndex::from_rows(&rows, DEFAULT_LEAF_SIZE, Metric::L2)?;
            classes.push((class, ids, index));
        }
        if classes.len() < 2 {
            return Err(Error::SingleClass(classes.len()));
        }
        Ok(Self { classes })
    }

    /// Prototypes around the encoding `z` of a query predicted as `predicted`.
    pub fn prototypes(&self, z: &[f64], predicted: usize, k_proto: usize) -> Result<Prototypes> {
        if k_proto == 0 {
            return Err(Error::Config("k_proto must be at least 1".into()));
        }
        let mut prototypes = Vec::with_capacity(self.classes.len());
        let mut target: Option<(f64, usize)> = None;
        for (class, ids, index) in &self.classes {
            let hits = index.knn(z, k_proto);
            let mut latent = vec![0.0; z.len()];
            for h in &hits {
                for (acc, v) in latent.iter_mut().zip(index.point(h.id)) {
                    *acc += v;
                }
            }
            latent.iter_mut().for_each(|v| *v /= hits.len() as f64);
            if *class != predicted {
                let d = squared_l2(z, &latent);
                if target.is_none_or(|(best, _)| d < best) {
                    target = Some((d, *class));
                }
            }
            prototypes.push(ClassPrototype {
                class: *class,
                latent,
                members: hits.iter().map(|h| ids[h.id]).collect(),
            });
        }
        let (_, target) = target.ok_or(Error::SingleClass(1))?;
        Ok(Prototypes { target, prototypes })
    }
}

/// Per-class prototypes for the query `x`: each is the mean encoding of the
/// `k_proto` training points of that class nearest to `encode(x)`.
pub fn class_prototypes(
    ae: &Autoencoder,
    train: &Dataset,
    x: &[f64],
    predicted: usize,
    k_proto: usize,
) -> Result<Prototypes> {
    LatentIndex::new(ae, train)?.prototypes(&ae.encode(x)?, predicted, k_proto)
}

/// Minimise `c·max(p_pred - p_target, -κ) + β||δ||_1 + ||δ||_2^2
/// + γ·||x' - ae(x')||^2 + θ·||enc(x') - proto||^2` with `δ = x' - x`.
///
/// c is raised (doubled, or bisected once an upper bound is known) after a
/// round with no valid point and bisected down after a round with one. A
/// point is valid when its deterministic argmax is the target. Returns the
/// valid point with the smallest `||δ||_1 + ||δ||_2^2`, or the attempt with
/// the largest target margin.
pub fn proto_cf(
    net: &Network,
    ae: &Autoencoder,
    prototypes: &Prototypes,
    x: &[f64],
    range: Option<FeatureRange>,
    cfg: &ProtoCfConfig,
) -> Result<CounterfactualResult> {
    cfg.validate()?;
    let probs = net.trace(x, Mode::Eval, None)?.output().to_vec();
    let original = argmax(&probs);
    let target = match cfg.target {
        Some(t) if t >= probs.len() => return Err(Error::UnknownClass(t)),
        Some(t) => t,
        None => prototypes.target,
    };
    if target == original {
        return Err(Error::Config(format!("target class {target} is already predicted")));
    }
    let proto = prototypes
        .get(target)
        .ok_or(Error::UnknownClass(target))?
        .latent
        .clone();
    if proto.len() != ae.latent_dim() {
        return Err(Error::DimensionMismatch {
            expected: ae.latent_dim(),
            found: proto.len(),
        });
    }

    let build = |c: f64| {
        let mut loss = InputLoss::new()
            .term(
                c,
                LossTerm::ProbHinge {
                    predicted: original,
                    target,
                    kappa: cfg.kappa,
                },
            )
            .term(cfg.beta, LossTerm::L1 { reference: x })
            .term(1.0, LossTerm::SquaredL2 { reference: x });
        if cfg.gamma > 0.0 {
            loss = loss.term(
                cfg.gamma,
                LossTerm::Reconstruction {
                    encoder: &ae.encoder,
                    decoder: &ae.decoder,
                },
            );
        }
        if cfg.theta > 0.0 {
            loss = loss.term(
                cfg.theta,
                LossTerm::LatentSquaredL2 {
                    encoder: &ae.encoder,
                    reference: &proto,
                },
            );
        }
        loss
    };

    // (point, distance or margin, trace, c)
    let mut best_valid: Option<(Vec<f64>, f64, Vec<f64>, f64)> = None;
    let mut best_attempt: Option<(Vec<f64>, f64, Vec<f64>, f64)> = None;
    let (mut lower, mut upper) = (0.0f64, C_CEILING);
    let mut c = cfg.c_init;
    let mut iterations = 0;
    for _ in 0..cfg.c_steps {
        let loss = build(c);
        let mut round_valid: Option<(Vec<f64>, f64)> = None;
        let mut round_attempt: Option<(Vec<f64>, f64)> = None;
        let run = descend(net, x, &loss, range, cfg.learning_rate, cfg.max_iter, |point, eval| {
            let p = eval.probs.as_ref().expect("probability term present");
            if argmax(p) == target {
                let dist = eval.term_values[1] + eval.term_values[2];
                if round_valid.as_ref().is_none_or(|(_, d)| dist < *d) {
                    round_valid = Some((point.to_vec(), dist));
                }
            } else {
                let margin = p[target] - p[original];
                if round_attempt.as_ref().is_none_or(|(_, m)| margin > *m) {
                    round_attempt = Some((point.to_vec(), margin));
                }
            }
        })?;
        iterations += run.steps;
        let found = round_valid.is_some();
        if let Some((point, dist)) = round_valid {
            if best_valid.as_ref().is_none_or(|b| dist < b.1) {
                best_valid = Some((point, dist, run.trace, c));
            }
        } else if let Some((point, margin)) = round_attempt {
            if best_attempt.as_ref().is_none_or(|b| margin > b.1) {
                best_attempt = Some((point, margin, run.trace, c));
            }
        }
        log::debug!("c {c:.4e}: valid={found}");
        if found {
            upper = upper.min(c);
            c = 0.5 * (lower + upper);
        } else {
            lower = lower.max(c);
            c = if upper < C_CEILING { 0.5 * (lower + upper) } else { c * 2.0 };
        }
    }

    let (x_cf, valid, trace, weight) = match (best_valid, best_attempt) {
        (Some((p, _, t, c)), _) => (p, true, t, c),
        (None, Some((p, _, t, c))) => (p, false, t, c),
        (None, None) => (x.to_vec(), false, Vec::new(), cfg.c_init),
    };
    let report = InputLoss::new()
        .term(weight, LossTerm::ProbHinge { predicted: original, target, kappa: cfg.kappa })
        .term(cfg.beta, LossTerm::L1 { reference: x })
        .term(1.0, LossTerm::SquaredL2 { reference: x })
        .term(cfg.gamma, LossTerm::Reconstruction { encoder: &ae.encoder, decoder: &ae.decoder })
        .term(cfg.theta, LossTerm::LatentSquaredL2 { encoder: &ae.encoder, reference: &proto });
    let eval = input_loss_value(net, &x_cf, &report)?;
    Ok(CounterfactualResult {
        method: CfMethod::Proto,
        loss: LossTerms {
            total: Some(eval.value),
            l_pred: Some(eval.term_values[0]),
            l1: Some(eval.term_values[1]),
            l2: Some(eval.term_values[2]),
            l_ae: Some(eval.term_values[3]),
            l_proto: Some(eval.term_values[4]),
            l_dist: None,
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
}
