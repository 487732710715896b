use crate::dataset::FeatureRange;
use crate::error::Result;
use crate::nn::{grad_input, Adam, AdamConfig, InputGradient, InputLoss, Network};

const MAX_HALVINGS: usize = 12;

pub(crate) struct Descent {
    /// Loss after each accepted step, starting with the initial point.
    pub trace: Vec<f64>,
    pub steps: usize,
}

/// Adam descent on the input, started at `x0`. A step that raises the loss
/// is halved until it does not; if no halving helps the run stops.
/// `on_point` sees every accepted point including the start.
pub(crate) fn descend(
    net: &Network,
    x0: &[f64],
    loss: &InputLoss<'_>,
    range: Option<FeatureRange>,
    learning_rate: f64,
    max_iter: usize,
    mut on_point: impl FnMut(&[f64], &InputGradient),
) -> Result<Descent> {
    let mut x = x0.to_vec();
    if let Some(r) = range {
        r.clamp_all(&mut x);
    }
    let mut current = grad_input(net, &x, loss)?;
    on_point(&x, &current);
    let mut trace = vec![current.value];
    let mut adam = Adam::new(x.len(), AdamConfig::with_lr(learning_rate));
    let mut steps = 0;
    'outer: while steps < max_iter {
        steps += 1;
        let mut delta = adam.update(&current.grad);
        let mut halvings = 0;
        loop {
            let mut candidate: Vec<f64> = x.iter().zip(&delta).map(|(a, d)| a - d).collect();
            if let Some(r) = range {
                r.clamp_all(&mut candidate);
            }
            let eval = grad_input(net, &candidate, loss)?;
            if eval.value <= current.value {
                x = candidate;
                current = eval;
                break;
            }
            halvings += 1;
            if halvings > MAX_HALVINGS {
                break 'outer;
            }
            delta.iter_mut().for_each(|d| *d *= 0.5);
        }
        on_point(&x, &current);
        trace.push(current.value);
    }
    Ok(Descent { trace, steps })
}
