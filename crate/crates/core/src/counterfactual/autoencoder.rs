use log::debug;
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::nn::{Adam, AdamConfig, Head, LayerSpec, Mode, Network};
use crate::rng;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AutoencoderConfig {
    pub latent_dim: usize,
    /// Encoder hidden widths; the decoder mirrors them.
    pub hidden: Vec<usize>,
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub seed: u64,
    /// Training fails if the final mean squared reconstruction error is above this.
    pub mse_ceiling: f64,
}

impl Default for AutoencoderConfig {
    fn default() -> Self {
        Self {
            latent_dim: 8,
            hidden: vec![32],
            epochs: 60,
            batch_size: 64,
            learning_rate: 1e-3,
            seed: 0,
            mse_ceiling: 0.05,
        }
    }
}

/// Dense encoder/decoder pair with linear outputs.
#[derive(Debug, Clone)]
pub struct Autoencoder {
    pub encoder: Network,
    pub decoder: Network,
}

fn dense_stack(widths: &[usize]) -> Vec<LayerSpec> {
    let mut layers = Vec::new();
    for (i, pair) in widths.windows(2).enumerate() {
        layers.push(LayerSpec::dense(pair[0], pair[1]));
        if i + 2 < widths.len() {
            layers.push(LayerSpec::Relu);
        }
    }
    layers
}

impl Autoencoder {
    /// Randomly initialised autoencoder for `input_dim` features.
    pub fn new(input_dim: usize, cfg: &AutoencoderConfig) -> Result<Self> {
        if input_dim == 0 || cfg.latent_dim == 0 {
            return Err(Error::Architecture("autoencoder dims must be positive".into()));
        }
        let mut widths = vec![input_dim];
        widths.extend(&cfg.hidden);
        widths.push(cfg.latent_dim);
        let encoder = Network::new(vec![input_dim], dense_stack(&widths), Head::Identity, rng::mix_seed(cfg.seed, 1))?;
        widths.reverse();
        let decoder = Network::new(
            vec![cfg.latent_dim],
            dense_stack(&widths),
            Head::Identity,
            rng::mix_seed(cfg.seed, 2),
        )?;
        Ok(Self { encoder, decoder })
    }

    /// Exact identity map with latent space equal to the input space.
    pub fn identity(dim: usize) -> Result<Self> {
        let make = || -> Result<Network> {
            let mut net = Network::with_zero_params(vec![dim], vec![LayerSpec::dense(dim, dim)], Head::Identity)?;
            let (w, _) = net.layer_params_mut(0).expect("dense layer");
            for i in 0..dim {
                w[i * dim + i] = 1.0;
            }
            Ok(net)
        };
        Ok(Self {
            encoder: make()?,
            decoder: make()?,
        })
    }

    pub fn from_parts(encoder: Network, decoder: Network) -> Result<Self> {
        if encoder.output_len() != decoder.input_len() || decoder.output_len() != encoder.input_len() {
            return Err(Error::Architecture("encoder and decoder do not compose".into()));
        }
        Ok(Self { encoder, decoder })
    }

    pub fn input_dim(&self) -> usize {
        self.encoder.input_len()
    }

    pub fn latent_dim(&self) -> usize {
        self.encoder.output_len()
    }

    pub fn encode(&self, x: &[f64]) -> Result<Vec<f64>> {
        Ok(self.encoder.trace(x, Mode::Eval, None)?.output().to_vec())
    }

    pub fn decode(&self, z: &[f64]) -> Result<Vec<f64>> {
        Ok(self.decoder.trace(z, Mode::Eval, None)?.output().to_vec())
    }

    pub fn reconstruct(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.decode(&self.encode(x)?)
    }

    /// `||x - decode(encode(x))||_2^2`.
    pub fn reconstruction_error(&self, x: &[f64]) -> Result<f64> {
        let r = self.reconstruct(x)?;
        Ok(x.iter().zip(&r).map(|(a, b)| (a - b).powi(2)).sum())
    }

    /// Mean squared error per feature over the dataset.
    pub fn mse(&self, data: &Dataset) -> Result<f64> {
        let mut total = 0.0;
        for row in data.rows() {
            total += self.reconstruction_error(row)?;
        }
        Ok(total / (data.len() * data.dim()) as f64)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AeReport {
    pub initial_mse: f64,
    /// Per-feature mean squared error after each epoch.
    pub loss_history: Vec<f64>,
}

impl AeReport {
    pub fn final_mse(&self) -> f64 {
        self.loss_history.last().copied().unwrap_or(self.initial_mse)
    }
}

/// Fit a fresh autoencoder to `data` by mini-batch Adam on the mean
/// squared reconstruction error.
pub fn train_autoencoder(data: &Dataset, cfg: &AutoencoderConfig) -> Result<(Autoencoder, AeReport)> {
    if data.is_empty() {
        return Err(Error::Empty("autoencoder training set".into()));
    }
    if cfg.batch_size == 0 || cfg.epochs == 0 {
        return Err(Error::Config("autoencoder epochs and batch_size must be at least 1".into()));
    }
    let mut ae = Autoencoder::new(data.dim(), cfg)?;
    let initial_mse = ae.mse(data)?;
    let dim = data.dim();
    let adam_cfg = AdamConfig::with_lr(cfg.learning_rate);
    let mut enc_adam = Adam::new(ae.encoder.param_count(), adam_cfg);
    let mut dec_adam = Adam::new(ae.decoder.param_count(), adam_cfg);
    let mut rng = rng::stream(rng::mix_seed(cfg.seed, 3));
    let mut order: Vec<usize> = (0..data.len()).collect();
    let mut history = Vec::with_capacity(cfg.epochs);
    for epoch in 0..cfg.epochs {
        order.shuffle(&mut rng);
        for chunk in order.chunks(cfg.batch_size) {
            let mut enc_grad = vec![0.0; ae.encoder.param_count()];
            let mut dec_grad = vec![0.0; ae.decoder.param_count()];
            let scale = 2.0 / (chunk.len() * dim) as f64;
            for &i in chunk {
                let x = data.row(i);
                let enc = ae.encoder.trace(x, Mode::Eval, None)?;
                let dec = ae.decoder.trace(enc.output(), Mode::Eval, None)?;
                let d_out: Vec<f64> = dec.output().iter().zip(x).map(|(r, a)| scale * (r - a)).collect();
                let d_latent = ae.decoder.backward(&dec, &d_out, Some(&mut dec_grad));
                ae.encoder.backward(&enc, &d_latent, Some(&mut enc_grad));
            }
            if enc_grad.iter().chain(&dec_grad).any(|g| !g.is_finite()) {
                return Err(Error::Diverged { epoch, loss: f64::NAN });
            }
            enc_adam.step(ae.encoder.params_mut(), &enc_grad);
            dec_adam.step(ae.decoder.params_mut(), &dec_grad);
        }
        let mse = ae.mse(data).map_err(|_| Error::Diverged { epoch, loss: f64::NAN })?;
        if !mse.is_finite() {
            return Err(Error::Diverged { epoch, loss: mse });
        }
        debug!("autoencoder epoch {epoch}: mse {mse:.6}");
        history.push(mse);
    }
    let report = AeReport {
        initial_mse,
        loss_history: history,
    };
    if report.final_mse() > cfg.mse_ceiling {
        return Err(Error::ReconstructionCeiling {
            mse: report.final_mse(),
            ceiling: cfg.mse_ceiling,
        });
    }
    Ok((ae, report))
}
