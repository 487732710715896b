use std::ops::Range;

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::layer::{self, LayerCache, LayerIo, LayerSpec, Sampling};
use crate::error::{Error, Result};
use crate::rng::{self, RngStream};
use crate::tensor::Tensor;

/// How dropout behaves on a forward pass.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    /// Masks sampled; used while fitting parameters.
    Train,
    /// Dropout is the identity.
    #[default]
    Eval,
    /// Masks resampled on every pass, for Monte Carlo posterior sampling.
    McDropout,
}

impl Mode {
    fn sampling(self) -> Sampling {
        match self {
            Mode::Eval => Sampling::Off,
            Mode::Train | Mode::McDropout => Sampling::On,
        }
    }
}

/// Output transform applied after the last layer.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Head {
    Softmax,
    Identity,
}

#[derive(Debug, Clone)]
struct ParamSlot {
    weight: Range<usize>,
    bias: Range<usize>,
}

/// A feed-forward stack of layers with a flat parameter store.
#[derive(Debug, Clone)]
pub struct Network {
    input_shape: Vec<usize>,
    layers: Vec<LayerSpec>,
    head: Head,
    params: Vec<f64>,
    slots: Vec<Option<ParamSlot>>,
    /// `shapes[i]` is the input shape of layer `i`; the last entry is the output.
    shapes: Vec<Vec<usize>>,
    mode: Mode,
}

/// Activations recorded by a forward pass.
#[derive(Debug, Clone)]
pub struct ForwardTrace {
    activations: Vec<Vec<f64>>,
    caches: Vec<LayerCache>,
    output: Vec<f64>,
}

impl ForwardTrace {
    /// Pre-head output of the last layer.
    pub fn logits(&self) -> &[f64] {
        self.activations.last().expect("trace holds the input")
    }

    /// Head output (probabilities for a softmax head).
    pub fn output(&self) -> &[f64] {
        &self.output
    }

    pub fn input(&self) -> &[f64] {
        &self.activations[0]
    }
}

impl Network {
    /// Build a network with Kaiming-uniform weights (bound `sqrt(6 / fan_in)`)
    /// and zero biases, drawn from a stream seeded by `seed`.
    pub fn new(input_shape: Vec<usize>, layers: Vec<LayerSpec>, head: Head, seed: u64) -> Result<Self> {
        let mut net = Self::with_zero_params(input_shape, layers, head)?;
        let mut rng = rng::stream(seed);
        for (spec, slot) in net.layers.iter().zip(&net.slots) {
            if let (Some((_, _, fan_in)), Some(slot)) = (spec.param_layout(), slot) {
                let bound = (6.0 / fan_in as f64).sqrt();
                for w in &mut net.params[slot.weight.clone()] {
                    *w = rng.random_range(-bound..bound);
                }
            }
        }
        Ok(net)
    }

    /// Same architecture with every parameter set to zero.
    pub fn with_zero_params(input_shape: Vec<usize>, layers: Vec<LayerSpec>, head: Head) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::Architecture("network has no layers".into()));
        }
        if input_shape.is_empty() || input_shape.contains(&0) {
            return Err(Error::Architecture(format!("invalid input shape {input_shape:?}")));
        }
        let mut shapes = vec![input_shape.clone()];
        let mut slots = Vec::with_capacity(layers.len());
        let mut offset = 0;
        for spec in &layers {
            let next = spec.output_shape(shapes.last().unwrap())?;
            shapes.push(next);
            slots.push(spec.param_layout().map(|(nw, nb, _)| {
                let slot = ParamSlot {
                    weight: offset..offset + nw,
                    bias: offset + nw..offset + nw + nb,
                };
                offset += nw + nb;
                slot
            }));
        }
        if head == Head::Softmax && shapes.last().unwrap().len() != 1 {
            return Err(Error::Architecture(
                "softmax head needs a flat final activation".into(),
            ));
        }
        Ok(Self {
            input_shape,
            layers,
            head,
            params: vec![0.0; offset],
            slots,
            shapes,
            mode: Mode::Eval,
        })
    }

    /// Rebuild from stored parts; `params` must match the architecture.
    pub fn from_parts(
        input_shape: Vec<usize>,
        layers: Vec<LayerSpec>,
        head: Head,
        params: Vec<f64>,
    ) -> Result<Self> {
        let mut net = Self::with_zero_params(input_shape, layers, head)?;
        if params.len() != net.params.len() {
            return Err(Error::DimensionMismatch {
                expected: net.params.len(),
                found: params.len(),
            });
        }
        net.params = params;
        Ok(net)
    }

    pub fn input_shape(&self) -> &[usize] {
        &self.input_shape
    }

    pub fn input_len(&self) -> usize {
        self.input_shape.iter().product()
    }

    pub fn output_len(&self) -> usize {
        self.shapes.last().unwrap().iter().product()
    }

    pub fn layers(&self) -> &[LayerSpec] {
        &self.layers
    }

    pub fn head(&self) -> Head {
        self.head
    }

    pub fn mode(&self) -> Mode {
        self.mode
    }

    pub fn set_mode(&mut self, mode: Mode) {
        self.mode = mode;
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    pub fn param_count(&self) -> usize {
        self.params.len()
    }

    /// True when some dropout layer has a non-zero rate.
    pub fn has_active_dropout(&self) -> bool {
        self.layers
            .iter()
            .any(|l| matches!(l, LayerSpec::Dropout { rate } if *rate > 0.0))
    }

    /// Weight and bias slices of layer `index`, if it has parameters.
    pub fn layer_params(&self, index: usize) -> Option<(&[f64], &[f64])> {
        self.slots[index]
            .as_ref()
            .map(|s| (&self.params[s.weight.clone()], &self.params[s.bias.clone()]))
    }

    pub fn layer_params_mut(&mut self, index: usize) -> Option<(&mut [f64], &mut [f64])> {
        let slot = self.slots[index].as_ref()?;
        let (w, b) = (slot.weight.clone(), slot.bias.clone());
        let (head, tail) = self.params.split_at_mut(b.start);
        Some((&mut head[w], &mut tail[..b.len()]))
    }

    /// Forward pass in the network's own mode.
    ///
    /// A stochastic mode with an active dropout layer needs `rng`.
    pub fn forward(&self, x: &Tensor, rng: Option<&mut RngStream>) -> Result<Tensor> {
        self.forward_in(x, self.mode, rng)
    }

    pub fn forward_in(&self, x: &Tensor, mode: Mode, rng: Option<&mut RngStream>) -> Result<Tensor> {
        if x.shape() != self.input_shape.as_slice() {
            return Err(Error::ShapeMismatch {
                expected: self.input_shape.clone(),
                found: x.shape().to_vec(),
            });
        }
        let trace = self.trace(x.data(), mode, rng)?;
        Ok(Tensor::vector(trace.output))
    }

    /// Forward pass on a flat input, keeping everything backprop needs.
    pub fn trace(&self, x: &[f64], mode: Mode, rng: Option<&mut RngStream>) -> Result<ForwardTrace> {
        if x.len() != self.input_len() {
            return Err(Error::DimensionMismatch {
                expected: self.input_len(),
                found: x.len(),
            });
        }
        let mut rng = rng;
        let mut activations = Vec::with_capacity(self.layers.len() + 1);
        let mut caches = Vec::with_capacity(self.layers.len());
        activations.push(x.to_vec());
        for i in 0..self.layers.len() {
            let io = self.io(i);
            let (y, cache) = layer::forward(&io, &activations[i], mode.sampling(), &mut rng)?;
            if y.iter().any(|v| !v.is_finite()) {
                return Err(Error::NonFinite(format!("layer {i}")));
            }
            activations.push(y);
            caches.push(cache);
        }
        let last = activations.last().unwrap();
        let output = match self.head {
            Head::Softmax => softmax(last),
            Head::Identity => last.clone(),
        };
        Ok(ForwardTrace {
            activations,
            caches,
            output,
        })
    }

    /// Gradient of `<d_output, head output>` with respect to the input.
    /// Parameter gradients are accumulated into `param_grad` when given.
    pub fn backward(&self, trace: &ForwardTrace, d_output: &[f64], param_grad: Option<&mut [f64]>) -> Vec<f64> {
        let d_logits = match self.head {
            Head::Softmax => softmax_vjp(&trace.output, d_output),
            Head::Identity => d_output.to_vec(),
        };
        self.backward_from_logits(trace, &d_logits, param_grad)
    }

    /// As [`Network::backward`] but starting from the gradient with respect
    /// to the pre-head output.
    pub fn backward_from_logits(
        &self,
        trace: &ForwardTrace,
        d_logits: &[f64],
        mut param_grad: Option<&mut [f64]>,
    ) -> Vec<f64> {
        let mut grad = d_logits.to_vec();
        for i in (0..self.layers.len()).rev() {
            let io = self.io(i);
            let slot_grads = match (&self.slots[i], param_grad.as_deref_mut()) {
                (Some(slot), Some(g)) => {
                    let (head, tail) = g.split_at_mut(slot.bias.start);
                    Some((&mut head[slot.weight.clone()], &mut tail[..slot.bias.len()]))
                }
                _ => None,
            };
            grad = layer::backward(&io, &trace.activations[i], &trace.caches[i], &grad, slot_grads);
        }
        grad
    }

    fn io(&self, i: usize) -> LayerIo<'_> {
        let (weight, bias) = match &self.slots[i] {
            Some(s) => (&self.params[s.weight.clone()], &self.params[s.bias.clone()]),
            None => (&[][..], &[][..]),
        };
        LayerIo {
            spec: &self.layers[i],
            in_shape: &self.shapes[i],
            out_shape: &self.shapes[i + 1],
            weight,
            bias,
        }
    }
}

/// Numerically stable softmax.
pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|z| (z - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / sum).collect()
}

/// Vector-Jacobian product of softmax: `p * (g - <g, p>)`.
pub fn softmax_vjp(p: &[f64], g: &[f64]) -> Vec<f64> {
    let dot: f64 = p.iter().zip(g).map(|(a, b)| a * b).sum();
    p.iter().zip(g).map(|(pi, gi)| pi * (gi - dot)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn mlp(dropout: f64) -> Network {
        Network::new(
            vec![4],
            vec![
                LayerSpec::dense(4, 8),
                LayerSpec::Relu,
                LayerSpec::dropout(dropout),
                LayerSpec::dense(8, 3),
            ],
            Head::Softmax,
            11,
        )
        .unwrap()
    }

    #[test]
    fn zero_weights_give_uniform_output() {
        let net = Network::with_zero_params(vec![3], vec![LayerSpec::dense(3, 4)], Head::Softmax).unwrap();
        let p = net.forward(&Tensor::from_slice(&[0.3, -0.2, 0.1]), None).unwrap();
        for v in p.data() {
            assert_eq!(*v, 0.25);
        }
    }

    #[test]
    fn hand_set_two_class_net_matches_manual_softmax() {
        let mut net = Network::with_zero_params(vec![2], vec![LayerSpec::dense(2, 2)], Head::Softmax).unwrap();
        let (w, b) = net.layer_params_mut(0).unwrap();
        w.copy_from_slice(&[1.0, -2.0, 0.5, 0.25]);
        b.copy_from_slice(&[0.1, -0.3]);
        let p = net.forward(&Tensor::from_slice(&[0.4, -0.6]), None).unwrap();
        // z0 = 0.4 + 1.2 + 0.1 = 1.7, z1 = 0.2 - 0.15 - 0.3 = -0.25
        let p1 = 1.0 / (1.0 + (1.7f64 - -0.25).exp());
        assert!((p.data()[1] - p1).abs() < 1e-12);
        assert!((p.data()[0] - (1.0 - p1)).abs() < 1e-12);
    }

    #[test]
    fn rate_zero_dropout_is_identity_in_every_mode() {
        let net = mlp(0.0);
        let x = Tensor::from_slice(&[0.1, -0.4, 0.3, 0.2]);
        let det = net.forward_in(&x, Mode::Eval, None).unwrap();
        let mut r = rng::stream(3);
        let mc = net.forward_in(&x, Mode::McDropout, Some(&mut r)).unwrap();
        let tr = net.forward_in(&x, Mode::Train, None).unwrap();
        assert_eq!(det, mc);
        assert_eq!(det, tr);
    }

    #[test]
    fn eval_dropout_equals_network_without_dropout() {
        let net = mlp(0.5);
        let stripped = Network::from_parts(
            vec![4],
            vec![LayerSpec::dense(4, 8), LayerSpec::Relu, LayerSpec::dense(8, 3)],
            Head::Softmax,
            net.params().to_vec(),
        )
        .unwrap();
        let x = Tensor::from_slice(&[0.5, 0.1, -0.3, 0.9]);
        assert_eq!(net.forward(&x, None).unwrap(), stripped.forward(&x, None).unwrap());
    }

    #[test]
    fn stochastic_mode_requires_rng() {
        let net = mlp(0.2);
        let x = Tensor::from_slice(&[0.0; 4]);
        assert!(matches!(
            net.forward_in(&x, Mode::McDropout, None),
            Err(Error::MissingRng)
        ));
    }

    #[test]
    fn inverted_dropout_is_unbiased_on_a_linear_probe() {
        // identity probe: dense(3,3) with W = I, no softmax
        let mut net = Network::with_zero_params(
            vec![3],
            vec![LayerSpec::dropout(0.3), LayerSpec::dense(3, 3)],
            Head::Identity,
        )
        .unwrap();
        let (w, _) = net.layer_params_mut(1).unwrap();
        for i in 0..3 {
            w[i * 3 + i] = 1.0;
        }
        let x = Tensor::from_slice(&[0.7, -1.2, 2.0]);
        let det = net.forward_in(&x, Mode::Eval, None).unwrap();
        let n = 20_000;
        let mut r = rng::stream(99);
        let mut sum = [0.0; 3];
        let mut sq = [0.0; 3];
        for _ in 0..n {
            let y = net.forward_in(&x, Mode::McDropout, Some(&mut r)).unwrap();
            for j in 0..3 {
                sum[j] += y.data()[j];
                sq[j] += y.data()[j] * y.data()[j];
            }
        }
        for j in 0..3 {
            let mean = sum[j] / n as f64;
            let var = sq[j] / n as f64 - mean * mean;
            let se = (var / n as f64).sqrt();
            assert!((mean - det.data()[j]).abs() < 3.0 * se, "unit {j}: {mean} vs {}", det.data()[j]);
        }
    }

    #[test]
    fn rejects_inconsistent_stacks() {
        assert!(Network::new(vec![4], vec![LayerSpec::dense(5, 2)], Head::Softmax, 0).is_err());
        assert!(Network::new(vec![4], vec![LayerSpec::dropout(1.0)], Head::Identity, 0).is_err());
        assert!(Network::new(
            vec![1, 5, 5],
            vec![LayerSpec::Conv2d { in_channels: 2, out_channels: 1, kernel: 3, stride: 1 }],
            Head::Identity,
            0
        )
        .is_err());
    }

    #[test]
    fn softmax_sums_to_one() {
        let p = softmax(&[1000.0, -1000.0, 3.0]);
        assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        assert!(p.iter().all(|v| (0.0..=1.0).contains(v)));
    }
}
