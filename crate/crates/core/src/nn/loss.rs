//! Losses and their gradients, with respect to parameters (training) and
//! with respect to the input (counterfactual search).

use super::network::{Head, Mode, Network};
use crate::error::{Error, Result};
use crate::rng::RngStream;

/// Summed cross-entropy loss and parameter gradient over a batch.
#[derive(Debug, Clone)]
pub struct BatchGradient {
    pub loss_sum: f64,
    pub grad_sum: Vec<f64>,
    pub count: usize,
}

impl BatchGradient {
    pub fn mean_loss(&self) -> f64 {
        self.loss_sum / self.count as f64
    }

    pub fn mean_grad(&self) -> Vec<f64> {
        let n = self.count as f64;
        self.grad_sum.iter().map(|g| g / n).collect()
    }
}

/// `-ln softmax(logits)[label]`, computed from the logits.
pub fn cross_entropy(logits: &[f64], label: usize) -> f64 {
    let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let lse = max + logits.iter().map(|z| (z - max).exp()).sum::<f64>().ln();
    lse - logits[label]
}

/// Softmax cross-entropy gradient with respect to every parameter, summed
/// over `rows` (flat inputs) and `labels`. Uses the network's mode, so a
/// training-mode network needs `rng` for its dropout masks.
pub fn grad_params(
    net: &Network,
    rows: &[&[f64]],
    labels: &[usize],
    rng: Option<&mut RngStream>,
) -> Result<BatchGradient> {
    if rows.is_empty() {
        return Err(Error::Empty("batch".into()));
    }
    if rows.len() != labels.len() {
        return Err(Error::DimensionMismatch {
            expected: rows.len(),
            found: labels.len(),
        });
    }
    if net.head() != Head::Softmax {
        return Err(Error::NotDifferentiable(
            "cross-entropy needs a softmax head".into(),
        ));
    }
    let classes = net.output_len();
    if let Some(&label) = labels.iter().find(|&&l| l >= classes) {
        return Err(Error::LabelOutOfRange { label, classes });
    }
    let mut rng = rng;
    let mut grad_sum = vec![0.0; net.param_count()];
    let mut loss_sum = 0.0;
    for (row, &label) in rows.iter().zip(labels) {
        let trace = net.trace(row, net.mode(), rng.as_deref_mut())?;
        loss_sum += cross_entropy(trace.logits(), label);
        let mut d = trace.output().to_vec();
        d[label] -= 1.0;
        net.backward_from_logits(&trace, &d, Some(&mut grad_sum));
    }
    if !loss_sum.is_finite() {
        return Err(Error::NonFinite("cross-entropy loss".into()));
    }
    Ok(BatchGradient {
        loss_sum,
        grad_sum,
        count: rows.len(),
    })
}

/// A differentiable scalar function of the input `x`.
#[derive(Debug, Clone, Copy)]
pub enum LossTerm<'a> {
    /// `(p_class(x) - target)^2` on the classifier's probabilities.
    ProbSquared { class: usize, target: f64 },
    /// `max(p_predicted(x) - p_target(x), -kappa)`.
    ProbHinge {
        predicted: usize,
        target: usize,
        kappa: f64,
    },
    /// `||x - reference||_1`; subgradient 0 where coordinates coincide.
    L1 { reference: &'a [f64] },
    /// `||x - reference||_2^2`.
    SquaredL2 { reference: &'a [f64] },
    /// `||x - decoder(encoder(x))||_2^2`.
    Reconstruction {
        encoder: &'a Network,
        decoder: &'a Network,
    },
    /// `||encoder(x) - reference||_2^2`.
    LatentSquaredL2 {
        encoder: &'a Network,
        reference: &'a [f64],
    },
}

/// Weighted sum of [`LossTerm`]s.
#[derive(Debug, Clone, Default)]
pub struct InputLoss<'a> {
    terms: Vec<(f64, LossTerm<'a>)>,
}

impl<'a> InputLoss<'a> {
    pub fn new() -> Self {
        Self { terms: Vec::new() }
    }

    pub fn term(mut self, weight: f64, term: LossTerm<'a>) -> Self {
        self.terms.push((weight, term));
        self
    }

    pub fn terms(&self) -> &[(f64, LossTerm<'a>)] {
        &self.terms
    }
}

/// Loss value, unweighted per-term values, and gradient with respect to `x`.
#[derive(Debug, Clone)]
pub struct InputGradient {
    pub value: f64,
    pub term_values: Vec<f64>,
    pub grad: Vec<f64>,
    /// Deterministic classifier probabilities at `x`, when a term needed them.
    pub probs: Option<Vec<f64>>,
}

/// Gradient of `loss` at `x`. The classifier is always evaluated in
/// deterministic mode.
pub fn grad_input(net: &Network, x: &[f64], loss: &InputLoss<'_>) -> Result<InputGradient> {
    evaluate(net, x, loss, true)
}

/// Loss value only (gradient left empty).
pub fn input_loss_value(net: &Network, x: &[f64], loss: &InputLoss<'_>) -> Result<InputGradient> {
    evaluate(net, x, loss, false)
}

fn evaluate(net: &Network, x: &[f64], loss: &InputLoss<'_>, with_grad: bool) -> Result<InputGradient> {
    if x.len() != net.input_len() {
        return Err(Error::DimensionMismatch {
            expected: net.input_len(),
            found: x.len(),
        });
    }
    let classes = net.output_len();
    let needs_probs = loss
        .terms
        .iter()
        .any(|(_, t)| matches!(t, LossTerm::ProbSquared { .. } | LossTerm::ProbHinge { .. }));
    let trace = if needs_probs {
        if net.head() != Head::Softmax {
            return Err(Error::NotDifferentiable(
                "probability terms need a softmax head".into(),
            ));
        }
        Some(net.trace(x, Mode::Eval, None)?)
    } else {
        None
    };
    let probs = trace.as_ref().map(|t| t.output().to_vec());

    let mut value = 0.0;
    let mut term_values = Vec::with_capacity(loss.terms.len());
    let mut grad = vec![0.0; if with_grad { x.len() } else { 0 }];
    let mut d_probs = vec![0.0; classes];
    let mut any_prob_grad = false;

    for &(weight, term) in &loss.terms {
        if !weight.is_finite() {
            return Err(Error::LossDescriptor(format!("non-finite weight {weight}")));
        }
        let v = match term {
            LossTerm::ProbSquared { class, target } => {
                check_class(class, classes)?;
                let p = probs.as_ref().unwrap()[class];
                d_probs[class] += weight * 2.0 * (p - target);
                any_prob_grad = true;
                (p - target).powi(2)
            }
            LossTerm::ProbHinge {
                predicted,
                target,
                kappa,
            } => {
                check_class(predicted, classes)?;
                check_class(target, classes)?;
                let p = probs.as_ref().unwrap();
                let diff = p[predicted] - p[target];
                if diff > -kappa {
                    d_probs[predicted] += weight;
                    d_probs[target] -= weight;
                    any_prob_grad = true;
                    diff
                } else {
                    -kappa
                }
            }
            LossTerm::L1 { reference } => {
                check_reference(reference, x.len())?;
                if with_grad {
                    for ((g, a), b) in grad.iter_mut().zip(x).zip(reference) {
                        let d = a - b;
                        if d > 0.0 {
                            *g += weight;
                        } else if d < 0.0 {
                            *g -= weight;
                        }
                    }
                }
                x.iter().zip(reference).map(|(a, b)| (a - b).abs()).sum()
            }
            LossTerm::SquaredL2 { reference } => {
                check_reference(reference, x.len())?;
                if with_grad {
                    for ((g, a), b) in grad.iter_mut().zip(x).zip(reference) {
                        *g += weight * 2.0 * (a - b);
                    }
                }
                x.iter().zip(reference).map(|(a, b)| (a - b).powi(2)).sum()
            }
            LossTerm::Reconstruction { encoder, decoder } => {
                if encoder.input_len() != x.len() || decoder.output_len() != x.len() {
                    return Err(Error::LossDescriptor(
                        "autoencoder does not map the input space onto itself".into(),
                    ));
                }
                let enc = encoder.trace(x, Mode::Eval, None)?;
                let dec = decoder.trace(enc.output(), Mode::Eval, None)?;
                let resid: Vec<f64> = x.iter().zip(dec.output()).map(|(a, r)| a - r).collect();
                if with_grad {
                    // d/dx ||x - D(E(x))||^2 = 2r - J_E^T J_D^T 2r
                    let up: Vec<f64> = resid.iter().map(|r| -2.0 * weight * r).collect();
                    let d_latent = decoder.backward(&dec, &up, None);
                    let d_x = encoder.backward(&enc, &d_latent, None);
                    for ((g, r), dx) in grad.iter_mut().zip(&resid).zip(&d_x) {
                        *g += 2.0 * weight * r + dx;
                    }
                }
                resid.iter().map(|r| r * r).sum()
            }
            LossTerm::LatentSquaredL2 { encoder, reference } => {
                if encoder.input_len() != x.len() {
                    return Err(Error::LossDescriptor("encoder input size differs".into()));
                }
                check_reference(reference, encoder.output_len())?;
                let enc = encoder.trace(x, Mode::Eval, None)?;
                let diff: Vec<f64> = enc.output().iter().zip(reference).map(|(a, b)| a - b).collect();
                if with_grad {
                    let up: Vec<f64> = diff.iter().map(|d| 2.0 * weight * d).collect();
                    let d_x = encoder.backward(&enc, &up, None);
                    for (g, dx) in grad.iter_mut().zip(&d_x) {
                        *g += dx;
                    }
                }
                diff.iter().map(|d| d * d).sum()
            }
        };
        value += weight * v;
        term_values.push(v);
    }

    if with_grad && any_prob_grad {
        let d_x = net.backward(trace.as_ref().unwrap(), &d_probs, None);
        for (g, dx) in grad.iter_mut().zip(&d_x) {
            *g += dx;
        }
    }
    if !value.is_finite() || grad.iter().any(|g| !g.is_finite()) {
        return Err(Error::NonFinite("input loss".into()));
    }
    Ok(InputGradient {
        value,
        term_values,
        grad,
        probs,
    })
}

fn check_class(class: usize, classes: usize) -> Result<()> {
    if class >= classes {
        return Err(Error::LossDescriptor(format!(
            "class {class} out of range for {classes} outputs"
        )));
    }
    Ok(())
}

fn check_reference(reference: &[f64], len: usize) -> Result<()> {
    if reference.len() != len {
        return Err(Error::LossDescriptor(format!(
            "reference has {} entries, expected {len}",
            reference.len()
        )));
    }
    Ok(())
}
