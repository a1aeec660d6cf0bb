use rayon::prelude::*;

use super::{backward, forward, Gradients, SrNetwork};
use crate::error::{Error, Result};
use crate::image::Luma;
use crate::rng::SplitMix64;

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    /// Per-layer SGD step sizes; 0 freezes a layer.
    pub learning_rates: [f64; 3],
    pub epochs: usize,
    pub batch_size: usize,
    /// Side of the square training crops.
    pub sub_image: usize,
    /// Crop stride used when cutting training pairs.
    pub stride: usize,
    pub seed: u64,
    pub init_std: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rates: [1e-4, 1e-4, 1e-5],
            epochs: 10,
            batch_size: 16,
            sub_image: 33,
            stride: 14,
            seed: 0x5EED,
            init_std: 0.001,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self, net: &SrNetwork) -> Result<()> {
        if self
            .learning_rates
            .iter()
            .any(|r| !(*r >= 0.0) || !r.is_finite())
        {
            return Err(Error::InvalidArgument(format!(
                "learning rates must be finite and >= 0, got {:?}",
                self.learning_rates
            )));
        }
        if self.batch_size == 0 || self.stride == 0 {
            return Err(Error::InvalidArgument(
                "batch_size and stride must be positive".into(),
            ));
        }
        if self.sub_image <= net.shrink() + 1 {
            return Err(Error::InvalidArgument(format!(
                "sub_image {} too small for receptive field {}",
                self.sub_image,
                net.shrink() + 1
            )));
        }
        Ok(())
    }
}

/// Mean squared error over all pixels.
pub fn mse_loss(pred: &Luma, target: &Luma) -> Result<f64> {
    if pred.dims() != target.dims() {
        return Err(Error::DimensionMismatch(format!(
            "prediction {:?} vs target {:?}",
            pred.dims(),
            target.dims()
        )));
    }
    let n = pred.data().len() as f64;
    Ok(pred
        .data()
        .iter()
        .zip(target.data())
        .map(|(a, b)| (a - b) * (a - b))
        .sum::<f64>()
        / n)
}

/// Plain SGD: `w -= rate_l * g` per layer.
pub fn sgd_step(net: &SrNetwork, grads: &Gradients, config: &TrainConfig) -> Result<SrNetwork> {
    if !grads.matches(net) {
        return Err(Error::ShapeMismatch(
            "gradient shapes do not match the network".into(),
        ));
    }
    let mut out = net.clone();
    for (l, layer) in out.layers.iter_mut().enumerate() {
        let rate = config.learning_rates[l];
        if rate == 0.0 {
            continue;
        }
        for (w, g) in layer.weights.iter_mut().zip(&grads.weights[l]) {
            *w -= rate * g;
        }
        for (b, g) in layer.biases.iter_mut().zip(&grads.biases[l]) {
            *b -= rate * g;
        }
    }
    Ok(out)
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub net: SrNetwork,
    /// Mean loss of the untrained network over the whole dataset.
    pub initial_loss: f64,
    /// Mean per-sample loss seen during each epoch.
    pub epoch_losses: Vec<f64>,
    pub steps: usize,
}

impl TrainOutcome {
    pub fn final_loss(&self) -> f64 {
        self.epoch_losses.last().copied().unwrap_or(self.initial_loss)
    }
}

fn target_view(net: &SrNetwork, target: &Luma) -> Result<Luma> {
    let s = net.shrink();
    target.center_window(target.height() - s, target.width() - s)
}

/// Mini-batch SGD over `pairs` of equally sized `(input, target)` crops.
///
/// Targets are centre-cropped to the network output size. Each epoch visits
/// the pairs in a Fisher-Yates order drawn from `SplitMix64(config.seed)`; the
/// batch gradient is the mean of per-sample gradients, summed in sample order.
pub fn train(net: &SrNetwork, pairs: &[(Luma, Luma)], config: &TrainConfig) -> Result<TrainOutcome> {
    config.validate(net)?;
    if pairs.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let side = config.sub_image;
    for (i, (x, y)) in pairs.iter().enumerate() {
        if x.dims() != (side, side) || y.dims() != (side, side) {
            return Err(Error::CropSizeMismatch(format!(
                "pair {i}: input {:?}, target {:?}, expected {side}x{side}",
                x.dims(),
                y.dims()
            )));
        }
    }
    let targets: Vec<Luma> = pairs
        .iter()
        .map(|(_, y)| target_view(net, y))
        .collect::<Result<_>>()?;

    let initial: Vec<f64> = pairs
        .par_iter()
        .zip(&targets)
        .map(|((x, _), y)| mse_loss(&forward(net, x)?, y))
        .collect::<Result<_>>()?;
    let initial_loss = initial.iter().sum::<f64>() / initial.len() as f64;

    let mut net = net.clone();
    let mut rng = SplitMix64::new(config.seed);
    let mut order: Vec<usize> = (0..pairs.len()).collect();
    let mut epoch_losses = Vec::with_capacity(config.epochs);
    let mut steps = 0;
    for _ in 0..config.epochs {
        rng.shuffle(&mut order);
        let mut epoch_loss = 0.0;
        for batch in order.chunks(config.batch_size) {
            let per_sample: Vec<(Gradients, f64)> = batch
                .par_iter()
                .map(|&i| backward(&net, &pairs[i].0, &targets[i]))
                .collect::<Result<_>>()?;
            let mut grads = Gradients::zeros_like(&net);
            let scale = 1.0 / batch.len() as f64;
            for (g, loss) in &per_sample {
                grads.add_scaled(g, scale);
                epoch_loss += loss;
            }
            net = sgd_step(&net, &grads, config)?;
            steps += 1;
        }
        epoch_losses.push(epoch_loss / pairs.len() as f64);
    }
    Ok(TrainOutcome {
        net,
        initial_loss,
        epoch_losses,
        steps,
    })
}
