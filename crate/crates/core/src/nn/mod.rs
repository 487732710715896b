//! Small differentiable network engine: layered forward passes, reverse-mode
//! gradients with respect to parameters and inputs, Adam, and dropout.

pub mod checkpoint;
mod layer;
mod loss;
mod network;
mod optim;
mod train;

pub use layer::LayerSpec;
pub use loss::{
    cross_entropy, grad_input, grad_params, input_loss_value, BatchGradient, InputGradient,
    InputLoss, LossTerm,
};
pub use network::{softmax, softmax_vjp, ForwardTrace, Head, Mode, Network};
pub use optim::{Adam, AdamConfig};
pub use train::{accuracy, mean_loss, predict, train, TrainConfig, TrainReport};

/// Dense ReLU classifier `input -> hidden... -> classes` with a dropout
/// layer of `dropout` rate after every hidden activation.
pub fn mlp_classifier(
    input: usize,
    hidden: &[usize],
    classes: usize,
    dropout: f64,
    seed: u64,
) -> crate::Result<Network> {
    let mut layers = Vec::new();
    let mut width = input;
    for &h in hidden {
        layers.push(LayerSpec::dense(width, h));
        layers.push(LayerSpec::Relu);
        layers.push(LayerSpec::dropout(dropout));
        width = h;
    }
    layers.push(LayerSpec::dense(width, classes));
    Network::new(vec![input], layers, Head::Softmax, seed)
}
