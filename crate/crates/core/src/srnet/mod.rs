//! Three-layer convolutional refinement network.
//!
//! Each layer is a valid (unpadded) cross-correlation followed by ReLU:
//! `F_i(x) = max(0, W_i * x + B_i)` for all three layers. The final output is
//! additionally capped at 1. `final_relu = false` trains the last layer as a
//! linear map; inference still clamps its output to `[0, 1]`.

mod model_io;
mod train;

pub use model_io::{load_model, read_model, save_model, write_model, MODEL_MAGIC};
pub use train::{mse_loss, sgd_step, train, TrainConfig, TrainOutcome};

use crate::error::{Error, Result};
use crate::image::Luma;
use crate::rng::SplitMix64;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LayerSpec {
    pub n_in: usize,
    pub n_out: usize,
    pub kernel: usize,
}

impl LayerSpec {
    pub fn new(n_in: usize, n_out: usize, kernel: usize) -> Self {
        Self {
            n_in,
            n_out,
            kernel,
        }
    }

    pub fn weight_len(&self) -> usize {
        self.n_out * self.n_in * self.kernel * self.kernel
    }
}

/// Default architecture `9-1-5/16-8`.
pub const DEFAULT_ARCH: [LayerSpec; 3] = [
    LayerSpec {
        n_in: 1,
        n_out: 16,
        kernel: 9,
    },
    LayerSpec {
        n_in: 16,
        n_out: 8,
        kernel: 1,
    },
    LayerSpec {
        n_in: 8,
        n_out: 1,
        kernel: 5,
    },
];

pub fn validate_arch(arch: &[LayerSpec; 3]) -> Result<()> {
    for (i, l) in arch.iter().enumerate() {
        if l.n_in == 0 || l.n_out == 0 || l.kernel == 0 || l.kernel % 2 == 0 {
            return Err(Error::InvalidArch(format!(
                "layer {}: channels must be positive and kernel odd, got {l:?}",
                i + 1
            )));
        }
    }
    if arch[0].n_in != 1 || arch[2].n_out != 1 {
        return Err(Error::InvalidArch(
            "network must map 1 channel to 1 channel".into(),
        ));
    }
    for i in 0..2 {
        if arch[i].n_out != arch[i + 1].n_in {
            return Err(Error::InvalidArch(format!(
                "layer {} outputs {} channels but layer {} takes {}",
                i + 1,
                arch[i].n_out,
                i + 2,
                arch[i + 1].n_in
            )));
        }
    }
    Ok(())
}

/// Parse an architecture tag such as `9-1-5/16-8`.
pub fn parse_arch(tag: &str) -> Result<[LayerSpec; 3]> {
    let bad = || Error::InvalidArch(format!("malformed architecture tag {tag:?}"));
    let (k, n) = tag.split_once('/').ok_or_else(bad)?;
    let k: Vec<usize> = k
        .split('-')
        .map(|v| v.parse().map_err(|_| bad()))
        .collect::<Result<_>>()?;
    let n: Vec<usize> = n
        .split('-')
        .map(|v| v.parse().map_err(|_| bad()))
        .collect::<Result<_>>()?;
    if k.len() != 3 || n.len() != 2 {
        return Err(bad());
    }
    let arch = [
        LayerSpec::new(1, n[0], k[0]),
        LayerSpec::new(n[0], n[1], k[1]),
        LayerSpec::new(n[1], 1, k[2]),
    ];
    validate_arch(&arch)?;
    Ok(arch)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConvLayer {
    pub spec: LayerSpec,
    /// `n_out x n_in x kernel x kernel`, row-major.
    pub weights: Vec<f64>,
    pub biases: Vec<f64>,
}

impl ConvLayer {
    pub fn zeros(spec: LayerSpec) -> Self {
        Self {
            spec,
            weights: vec![0.0; spec.weight_len()],
            biases: vec![0.0; spec.n_out],
        }
    }

    fn check(&self) -> Result<()> {
        if self.weights.len() != self.spec.weight_len() || self.biases.len() != self.spec.n_out {
            return Err(Error::ShapeMismatch(format!(
                "layer {:?} holds {} weights and {} biases",
                self.spec,
                self.weights.len(),
                self.biases.len()
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SrNetwork {
    pub layers: [ConvLayer; 3],
    /// Apply ReLU after the third layer too.
    pub final_relu: bool,
}

impl SrNetwork {
    pub fn from_layers(layers: [ConvLayer; 3]) -> Result<Self> {
        let arch = [layers[0].spec, layers[1].spec, layers[2].spec];
        validate_arch(&arch)?;
        for l in &layers {
            l.check()?;
        }
        Ok(Self {
            layers,
            final_relu: true,
        })
    }

    pub fn arch(&self) -> [LayerSpec; 3] {
        [
            self.layers[0].spec,
            self.layers[1].spec,
            self.layers[2].spec,
        ]
    }

    /// Tag such as `9-1-5/16-8`.
    pub fn arch_id(&self) -> String {
        arch_id(&self.arch())
    }

    /// Pixels lost per axis by the three valid convolutions.
    pub fn shrink(&self) -> usize {
        self.layers.iter().map(|l| l.spec.kernel - 1).sum()
    }

    pub fn param_count(&self) -> usize {
        self.layers
            .iter()
            .map(|l| l.weights.len() + l.biases.len())
            .sum()
    }
}

pub fn arch_id(arch: &[LayerSpec; 3]) -> String {
    format!(
        "{}-{}-{}/{}-{}",
        arch[0].kernel, arch[1].kernel, arch[2].kernel, arch[0].n_out, arch[1].n_out
    )
}

/// Gaussian(0, init_std^2) weights from SplitMix64(seed), layer by layer in
/// storage order; zero biases.
pub fn init_network(arch: &[LayerSpec; 3], seed: u64, init_std: f64) -> Result<SrNetwork> {
    validate_arch(arch)?;
    if !(init_std >= 0.0) || !init_std.is_finite() {
        return Err(Error::InvalidArgument(format!("init_std {init_std}")));
    }
    let mut rng = SplitMix64::new(seed);
    let mut make = |spec: LayerSpec| {
        let mut l = ConvLayer::zeros(spec);
        for w in &mut l.weights {
            *w = init_std * rng.next_gaussian();
        }
        l
    };
    let layers = [make(arch[0]), make(arch[1]), make(arch[2])];
    SrNetwork::from_layers(layers)
}

/// Gradients shaped like a network's parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub weights: [Vec<f64>; 3],
    pub biases: [Vec<f64>; 3],
}

impl Gradients {
    pub fn zeros_like(net: &SrNetwork) -> Self {
        let w = |i: usize| vec![0.0; net.layers[i].weights.len()];
        let b = |i: usize| vec![0.0; net.layers[i].biases.len()];
        Self {
            weights: [w(0), w(1), w(2)],
            biases: [b(0), b(1), b(2)],
        }
    }

    pub fn add_scaled(&mut self, other: &Gradients, scale: f64) {
        for l in 0..3 {
            for (a, b) in self.weights[l].iter_mut().zip(&other.weights[l]) {
                *a += scale * b;
            }
            for (a, b) in self.biases[l].iter_mut().zip(&other.biases[l]) {
                *a += scale * b;
            }
        }
    }

    pub fn matches(&self, net: &SrNetwork) -> bool {
        (0..3).all(|l| {
            self.weights[l].len() == net.layers[l].weights.len()
                && self.biases[l].len() == net.layers[l].biases.len()
        })
    }
}

/// Stack of same-size channel planes.
#[derive(Debug, Clone)]
struct Maps {
    channels: usize,
    height: usize,
    width: usize,
    data: Vec<f64>,
}

impl Maps {
    fn zeros(channels: usize, height: usize, width: usize) -> Self {
        Self {
            channels,
            height,
            width,
            data: vec![0.0; channels * height * width],
        }
    }

    fn plane(&self, c: usize) -> &[f64] {
        debug_assert!(c < self.channels);
        let n = self.height * self.width;
        &self.data[c * n..(c + 1) * n]
    }

    fn plane_mut(&mut self, c: usize) -> &mut [f64] {
        let n = self.height * self.width;
        &mut self.data[c * n..(c + 1) * n]
    }
}

/// Valid cross-correlation plus bias.
fn conv_forward(input: &Maps, layer: &ConvLayer) -> Maps {
    let s = layer.spec;
    let k = s.kernel;
    let (oh, ow) = (input.height - k + 1, input.width - k + 1);
    let iw = input.width;
    let mut out = Maps::zeros(s.n_out, oh, ow);
    for o in 0..s.n_out {
        let dst = out.plane_mut(o);
        dst.fill(layer.biases[o]);
        for i in 0..s.n_in {
            let src = input.plane(i);
            let wbase = (o * s.n_in + i) * k * k;
            for ky in 0..k {
                for kx in 0..k {
                    let wv = layer.weights[wbase + ky * k + kx];
                    if wv == 0.0 {
                        continue;
                    }
                    for y in 0..oh {
                        let srow = &src[(y + ky) * iw + kx..(y + ky) * iw + kx + ow];
                        let drow = &mut dst[y * ow..(y + 1) * ow];
                        for (d, &v) in drow.iter_mut().zip(srow) {
                            *d += wv * v;
                        }
                    }
                }
            }
        }
    }
    out
}

/// Given dL/d(pre-activation output), accumulate weight/bias gradients and
/// optionally return dL/d(input).
fn conv_backward(
    input: &Maps,
    layer: &ConvLayer,
    grad_out: &Maps,
    grad_w: &mut [f64],
    grad_b: &mut [f64],
    need_input_grad: bool,
) -> Option<Maps> {
    let s = layer.spec;
    let k = s.kernel;
    let (oh, ow) = (grad_out.height, grad_out.width);
    let iw = input.width;
    let mut grad_in = need_input_grad.then(|| Maps::zeros(s.n_in, input.height, input.width));
    for o in 0..s.n_out {
        let g = grad_out.plane(o);
        grad_b[o] += g.iter().sum::<f64>();
        for i in 0..s.n_in {
            let src = input.plane(i);
            let wbase = (o * s.n_in + i) * k * k;
            for ky in 0..k {
                for kx in 0..k {
                    let mut acc = 0.0;
                    for y in 0..oh {
                        let srow = &src[(y + ky) * iw + kx..(y + ky) * iw + kx + ow];
                        let grow = &g[y * ow..(y + 1) * ow];
                        acc += srow.iter().zip(grow).map(|(a, b)| a * b).sum::<f64>();
                    }
                    grad_w[wbase + ky * k + kx] += acc;
                    if let Some(gi) = grad_in.as_mut() {
                        let wv = layer.weights[wbase + ky * k + kx];
                        if wv == 0.0 {
                            continue;
                        }
                        let dst = gi.plane_mut(i);
                        for y in 0..oh {
                            let drow = &mut dst[(y + ky) * iw + kx..(y + ky) * iw + kx + ow];
                            let grow = &g[y * ow..(y + 1) * ow];
                            for (d, &v) in drow.iter_mut().zip(grow) {
                                *d += wv * v;
                            }
                        }
                    }
                }
            }
        }
    }
    grad_in
}

fn relu_in_place(m: &mut Maps) {
    for v in &mut m.data {
        if *v < 0.0 {
            *v = 0.0;
        }
    }
}

/// Activations kept for backpropagation.
struct Trace {
    input: Maps,
    hidden1: Maps,
    hidden2: Maps,
    /// third-layer pre-activation
    pre_out: Maps,
}

fn check_input(net: &SrNetwork, input: &Luma) -> Result<()> {
    let field = net.shrink() + 1;
    if input.height() <= field || input.width() <= field {
        return Err(Error::ImageTooSmall(format!(
            "{}x{} input, network receptive field is {field}",
            input.height(),
            input.width()
        )));
    }
    Ok(())
}

fn run(net: &SrNetwork, input: &Luma) -> Trace {
    let input = Maps {
        channels: 1,
        height: input.height(),
        width: input.width(),
        data: input.data().to_vec(),
    };
    let mut hidden1 = conv_forward(&input, &net.layers[0]);
    relu_in_place(&mut hidden1);
    let mut hidden2 = conv_forward(&hidden1, &net.layers[1]);
    relu_in_place(&mut hidden2);
    let pre_out = conv_forward(&hidden2, &net.layers[2]);
    Trace {
        input,
        hidden1,
        hidden2,
        pre_out,
    }
}

/// Final activation: ReLU (or nothing) followed by the cap at 1; both variants
/// land in `[0, 1]`.
#[inline]
fn output_activation(z: f64) -> f64 {
    z.clamp(0.0, 1.0)
}

/// Network inference; output is smaller than the input by [`SrNetwork::shrink`].
pub fn forward(net: &SrNetwork, input: &Luma) -> Result<Luma> {
    check_input(net, input)?;
    let t = run(net, input);
    let data = t.pre_out.data.iter().map(|&z| output_activation(z)).collect();
    Luma::new(t.pre_out.height, t.pre_out.width, data)
}

/// Analytic gradients of `mse_loss(forward(net, input), target)`, plus the loss.
///
/// ReLU and the output cap pass gradient only where strictly inside their
/// linear range (`0 < z`, `z < 1`); the derivative at a kink is 0. With
/// `final_relu` off the loss is taken on the linear third-layer output, before
/// the inference-time clamp.
pub fn backward(net: &SrNetwork, input: &Luma, target: &Luma) -> Result<(Gradients, f64)> {
    check_input(net, input)?;
    let t = run(net, input);
    let (oh, ow) = (t.pre_out.height, t.pre_out.width);
    if target.dims() != (oh, ow) {
        return Err(Error::DimensionMismatch(format!(
            "target {}x{} but network output is {oh}x{ow}",
            target.height(),
            target.width()
        )));
    }
    let n = (oh * ow) as f64;
    let mut loss = 0.0;
    let mut g3 = Maps::zeros(1, oh, ow);
    for ((g, &z), &y) in g3.data.iter_mut().zip(&t.pre_out.data).zip(target.data()) {
        let (pred, pass) = if net.final_relu {
            (output_activation(z), z > 0.0 && z < 1.0)
        } else {
            (z, true)
        };
        let diff = pred - y;
        loss += diff * diff;
        if pass {
            *g = 2.0 * diff / n;
        }
    }
    loss /= n;

    let mut grads = Gradients::zeros_like(net);
    let [gw0, gw1, gw2] = &mut grads.weights;
    let [gb0, gb1, gb2] = &mut grads.biases;

    let mut g2 = conv_backward(&t.hidden2, &net.layers[2], &g3, gw2, gb2, true)
        .expect("input gradient requested");
    mask_relu(&mut g2, &t.hidden2);
    let mut g1 = conv_backward(&t.hidden1, &net.layers[1], &g2, gw1, gb1, true)
        .expect("input gradient requested");
    mask_relu(&mut g1, &t.hidden1);
    conv_backward(&t.input, &net.layers[0], &g1, gw0, gb0, false);
    Ok((grads, loss))
}

/// Zero gradient where the activation was clamped (activation value 0).
fn mask_relu(grad: &mut Maps, activation: &Maps) {
    for (g, &a) in grad.data.iter_mut().zip(&activation.data) {
        if a <= 0.0 {
            *g = 0.0;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn one_by_one(biases: [f64; 3], weight: f64) -> SrNetwork {
        let mk = |b: f64| ConvLayer {
            spec: LayerSpec::new(1, 1, 1),
            weights: vec![weight],
            biases: vec![b],
        };
        SrNetwork::from_layers([mk(biases[0]), mk(biases[1]), mk(biases[2])]).unwrap()
    }

    #[test]
    fn bias_only_network() {
        let net = one_by_one([0.3, 0.3, 0.3], 0.0);
        let out = forward(&net, &Luma::filled(4, 4, 0.8)).unwrap();
        assert!(out.data().iter().all(|&v| v == 0.3));
        let neg = one_by_one([0.0, 0.0, -0.5], 0.0);
        let out = forward(&neg, &Luma::filled(4, 4, 0.8)).unwrap();
        assert!(out.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn identity_network() {
        let net = one_by_one([0.0; 3], 1.0);
        let input = Luma::from_fn(5, 6, |r, c| (r * 6 + c) as f64 / 30.0);
        assert_eq!(forward(&net, &input).unwrap(), input);
    }

    #[test]
    fn output_shrinks_by_kernels() {
        let net = init_network(&DEFAULT_ARCH, 1, 0.01).unwrap();
        assert_eq!(net.shrink(), 12);
        let out = forward(&net, &Luma::filled(33, 40, 0.5)).unwrap();
        assert_eq!(out.dims(), (21, 28));
        assert!(matches!(
            forward(&net, &Luma::filled(12, 40, 0.5)),
            Err(Error::ImageTooSmall(_))
        ));
    }

    #[test]
    fn init_contract() {
        let a = init_network(&DEFAULT_ARCH, 42, 0.001).unwrap();
        let b = init_network(&DEFAULT_ARCH, 42, 0.001).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.arch_id(), "9-1-5/16-8");
        assert!(a.layers.iter().all(|l| l.biases.iter().all(|&b| b == 0.0)));
        let z = init_network(&DEFAULT_ARCH, 42, 0.0).unwrap();
        assert!(z.layers.iter().all(|l| l.weights.iter().all(|&w| w == 0.0)));
        let bad = [
            LayerSpec::new(1, 4, 3),
            LayerSpec::new(5, 2, 1),
            LayerSpec::new(2, 1, 3),
        ];
        assert!(matches!(
            init_network(&bad, 1, 0.1),
            Err(Error::InvalidArch(_))
        ));
    }

    #[test]
    fn arch_tag_round_trip() {
        assert_eq!(parse_arch("9-1-5/16-8").unwrap(), DEFAULT_ARCH);
        assert!(parse_arch("9-1/16-8").is_err());
        assert!(parse_arch("9-2-5/16-8").is_err());
    }

    #[test]
    fn perfect_prediction_has_zero_gradient() {
        let net = init_network(&parse_arch("3-1-3/2-2").unwrap(), 5, 0.5).unwrap();
        let input = Luma::from_fn(10, 10, |r, c| ((r * 3 + c * 5) % 7) as f64 / 7.0);
        let target = forward(&net, &input).unwrap();
        let (g, loss) = backward(&net, &input, &target).unwrap();
        assert_eq!(loss, 0.0);
        assert!(g.weights.iter().chain(&g.biases).flatten().all(|&v| v == 0.0));
    }

    #[test]
    fn zero_input_kills_first_layer_weight_gradients() {
        let mut net = init_network(&parse_arch("3-1-3/2-2").unwrap(), 9, 0.5).unwrap();
        for l in &mut net.layers {
            l.weights.iter_mut().for_each(|w| *w = 0.01);
            l.biases.iter_mut().for_each(|b| *b = 0.2);
        }
        let input = Luma::filled(10, 10, 0.0);
        let target = Luma::filled(6, 6, 0.9);
        let (g, _) = backward(&net, &input, &target).unwrap();
        assert!(g.weights[0].iter().all(|&v| v == 0.0));
        assert!(g.biases[2].iter().any(|&v| v != 0.0));
    }

    #[test]
    fn backward_rejects_bad_target() {
        let net = init_network(&DEFAULT_ARCH, 1, 0.01).unwrap();
        let err = backward(&net, &Luma::filled(20, 20, 0.1), &Luma::filled(20, 20, 0.1));
        assert!(matches!(err, Err(Error::DimensionMismatch(_))));
    }
}
