use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::RngStream;

/// One stage of a layered network.
///
/// Image-shaped activations are `[channels, height, width]`; dense layers
/// accept any activation whose element count equals `input`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LayerSpec {
    Dense {
        input: usize,
        output: usize,
    },
    Relu,
    Dropout {
        rate: f64,
    },
    Conv2d {
        in_channels: usize,
        out_channels: usize,
        kernel: usize,
        stride: usize,
    },
    MaxPool {
        size: usize,
    },
    Flatten,
}

impl LayerSpec {
    pub fn dense(input: usize, output: usize) -> Self {
        LayerSpec::Dense { input, output }
    }

    pub fn dropout(rate: f64) -> Self {
        LayerSpec::Dropout { rate }
    }

    /// (weight count, bias count, fan-in) for parameterised layers.
    pub(crate) fn param_layout(&self) -> Option<(usize, usize, usize)> {
        match *self {
            LayerSpec::Dense { input, output } => Some((input * output, output, input)),
            LayerSpec::Conv2d {
                in_channels,
                out_channels,
                kernel,
                ..
            } => {
                let fan_in = in_channels * kernel * kernel;
                Some((out_channels * fan_in, out_channels, fan_in))
            }
            _ => None,
        }
    }

    pub(crate) fn output_shape(&self, input: &[usize]) -> Result<Vec<usize>> {
        let numel: usize = input.iter().product();
        match *self {
            LayerSpec::Dense { input: n_in, output } => {
                if n_in == 0 || output == 0 {
                    return Err(Error::Architecture("dense layer with zero width".into()));
                }
                if numel != n_in {
                    return Err(Error::Architecture(format!(
                        "dense layer expects {n_in} inputs, previous stage yields {input:?}"
                    )));
                }
                Ok(vec![output])
            }
            LayerSpec::Relu => Ok(input.to_vec()),
            LayerSpec::Dropout { rate } => {
                if !(0.0..1.0).contains(&rate) {
                    return Err(Error::Architecture(format!(
                        "dropout rate {rate} outside [0, 1)"
                    )));
                }
                Ok(input.to_vec())
            }
            LayerSpec::Conv2d {
                in_channels,
                out_channels,
                kernel,
                stride,
            } => {
                let [c, h, w] = image_dims(input, "conv2d")?;
                if c != in_channels {
                    return Err(Error::Architecture(format!(
                        "conv2d expects {in_channels} channels, got {c}"
                    )));
                }
                if kernel == 0 || stride == 0 || out_channels == 0 {
                    return Err(Error::Architecture("conv2d with zero size".into()));
                }
                if h < kernel || w < kernel {
                    return Err(Error::Architecture(format!(
                        "conv2d kernel {kernel} larger than input {h}x{w}"
                    )));
                }
                Ok(vec![
                    out_channels,
                    (h - kernel) / stride + 1,
                    (w - kernel) / stride + 1,
                ])
            }
            LayerSpec::MaxPool { size } => {
                let [c, h, w] = image_dims(input, "maxpool")?;
                if size == 0 || h < size || w < size {
                    return Err(Error::Architecture(format!(
                        "maxpool size {size} does not fit {h}x{w}"
                    )));
                }
                Ok(vec![c, h / size, w / size])
            }
            LayerSpec::Flatten => Ok(vec![numel]),
        }
    }
}

fn image_dims(shape: &[usize], what: &str) -> Result<[usize; 3]> {
    match shape {
        &[c, h, w] => Ok([c, h, w]),
        _ => Err(Error::Architecture(format!(
            "{what} expects a [channels, height, width] input, got {shape:?}"
        ))),
    }
}

/// Per-layer state recorded during a forward pass and consumed by backprop.
#[derive(Debug, Clone)]
pub(crate) enum LayerCache {
    None,
    /// Scaled keep mask (0 or 1/(1-rate)).
    Mask(Vec<f64>),
    /// Flat input index of each pooled maximum.
    Argmax(Vec<usize>),
}

/// Whether dropout masks are sampled on this pass.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum Sampling {
    Off,
    On,
}

pub(crate) struct LayerIo<'a> {
    pub spec: &'a LayerSpec,
    pub in_shape: &'a [usize],
    pub out_shape: &'a [usize],
    pub weight: &'a [f64],
    pub bias: &'a [f64],
}

pub(crate) fn forward(
    io: &LayerIo<'_>,
    x: &[f64],
    sampling: Sampling,
    rng: &mut Option<&mut RngStream>,
) -> Result<(Vec<f64>, LayerCache)> {
    match *io.spec {
        LayerSpec::Dense { input, output } => {
            let mut y = io.bias.to_vec();
            for (o, yo) in y.iter_mut().enumerate().take(output) {
                let row = &io.weight[o * input..(o + 1) * input];
                *yo += row.iter().zip(x).map(|(w, v)| w * v).sum::<f64>();
            }
            Ok((y, LayerCache::None))
        }
        LayerSpec::Relu => Ok((x.iter().map(|&v| v.max(0.0)).collect(), LayerCache::None)),
        LayerSpec::Dropout { rate } => {
            if sampling == Sampling::Off || rate == 0.0 {
                return Ok((x.to_vec(), LayerCache::None));
            }
            let rng = rng.as_deref_mut().ok_or(Error::MissingRng)?;
            let scale = 1.0 / (1.0 - rate);
            let mask: Vec<f64> = (0..x.len())
                .map(|_| {
                    if rng.random::<f64>() < rate {
                        0.0
                    } else {
                        scale
                    }
                })
                .collect();
            let y = x.iter().zip(&mask).map(|(v, m)| v * m).collect();
            Ok((y, LayerCache::Mask(mask)))
        }
        LayerSpec::Conv2d {
            in_channels,
            out_channels,
            kernel,
            stride,
        } => {
            let (h, w) = (io.in_shape[1], io.in_shape[2]);
            let (oh, ow) = (io.out_shape[1], io.out_shape[2]);
            let mut y = vec![0.0; out_channels * oh * ow];
            for oc in 0..out_channels {
                for oy in 0..oh {
                    for ox in 0..ow {
                        let mut acc = io.bias[oc];
                        for ic in 0..in_channels {
                            for ky in 0..kernel {
                                for kx in 0..kernel {
                                    let wi = ((oc * in_channels + ic) * kernel + ky) * kernel + kx;
                                    let xi = (ic * h + oy * stride + ky) * w + ox * stride + kx;
                                    acc += io.weight[wi] * x[xi];
                                }
                            }
                        }
                        y[(oc * oh + oy) * ow + ox] = acc;
                    }
                }
            }
            Ok((y, LayerCache::None))
        }
        LayerSpec::MaxPool { size } => {
            let (c, h, w) = (io.in_shape[0], io.in_shape[1], io.in_shape[2]);
            let (oh, ow) = (io.out_shape[1], io.out_shape[2]);
            let mut y = Vec::with_capacity(c * oh * ow);
            let mut arg = Vec::with_capacity(c * oh * ow);
            for ch in 0..c {
                for oy in 0..oh {
                    for ox in 0..ow {
                        let mut best = (ch * h + oy * size) * w + ox * size;
                        for dy in 0..size {
                            for dx in 0..size {
                                let i = (ch * h + oy * size + dy) * w + ox * size + dx;
                                if x[i] > x[best] {
                                    best = i;
                                }
                            }
                        }
                        y.push(x[best]);
                        arg.push(best);
                    }
                }
            }
            Ok((y, LayerCache::Argmax(arg)))
        }
        LayerSpec::Flatten => Ok((x.to_vec(), LayerCache::None)),
    }
}

/// Backpropagate `d_out` through one layer. Parameter gradients are
/// accumulated into `d_weight`/`d_bias` when given.
pub(crate) fn backward(
    io: &LayerIo<'_>,
    x: &[f64],
    cache: &LayerCache,
    d_out: &[f64],
    params: Option<(&mut [f64], &mut [f64])>,
) -> Vec<f64> {
    match *io.spec {
        LayerSpec::Dense { input, output } => {
            let mut dx = vec![0.0; input];
            for o in 0..output {
                let row = &io.weight[o * input..(o + 1) * input];
                let d = d_out[o];
                for (dxi, w) in dx.iter_mut().zip(row) {
                    *dxi += w * d;
                }
            }
            if let Some((dw, db)) = params {
                for o in 0..output {
                    let d = d_out[o];
                    db[o] += d;
                    for (g, v) in dw[o * input..(o + 1) * input].iter_mut().zip(x) {
                        *g += d * v;
                    }
                }
            }
            dx
        }
        LayerSpec::Relu => x
            .iter()
            .zip(d_out)
            .map(|(&v, &d)| if v > 0.0 { d } else { 0.0 })
            .collect(),
        LayerSpec::Dropout { .. } => match cache {
            LayerCache::Mask(mask) => d_out.iter().zip(mask).map(|(d, m)| d * m).collect(),
            _ => d_out.to_vec(),
        },
        LayerSpec::Conv2d {
            in_channels,
            out_channels,
            kernel,
            stride,
        } => {
            let (h, w) = (io.in_shape[1], io.in_shape[2]);
            let (oh, ow) = (io.out_shape[1], io.out_shape[2]);
            let mut dx = vec![0.0; x.len()];
            let mut params = params;
            for oc in 0..out_channels {
                for oy in 0..oh {
                    for ox in 0..ow {
                        let d = d_out[(oc * oh + oy) * ow + ox];
                        if let Some((_, db)) = params.as_mut() {
                            db[oc] += d;
                        }
                        for ic in 0..in_channels {
                            for ky in 0..kernel {
                                for kx in 0..kernel {
                                    let wi = ((oc * in_channels + ic) * kernel + ky) * kernel + kx;
                                    let xi = (ic * h + oy * stride + ky) * w + ox * stride + kx;
                                    dx[xi] += io.weight[wi] * d;
                                    if let Some((dw, _)) = params.as_mut() {
                                        dw[wi] += x[xi] * d;
                                    }
                                }
                            }
                        }
                    }
                }
            }
            dx
        }
        LayerSpec::MaxPool { .. } => {
            let mut dx = vec![0.0; x.len()];
            if let LayerCache::Argmax(arg) = cache {
                for (&i, &d) in arg.iter().zip(d_out) {
                    dx[i] += d;
                }
            }
            dx
        }
        LayerSpec::Flatten => d_out.to_vec(),
    }
}
