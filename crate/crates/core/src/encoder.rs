//! Dense-block convolutional image encoder.
//!
//! Topology per block: pre-activation BN -> ReLU -> 1x1 conv (4x growth
//! bottleneck) -> BN -> ReLU -> 3x3 conv (growth channels), concatenated onto
//! the running feature stack. Transitions compress with a 1x1 conv and halve
//! the spatial dims with 2x2 average pooling. The stem is a 7x7 stride-2
//! convolution followed by a 3x3 stride-2 max pool, so the full network
//! reduces spatial dims by 32.

use rand::Rng;

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensor::nn::{
    batch_norm, conv2d, pool2d_strided, BatchNormState, Padding, PoolMode,
};
use crate::tensor::{ops, Tape, TensorBase};

#[derive(Debug, Clone, PartialEq)]
pub struct EncoderConfig {
    pub growth_rate: usize,
    pub block_lengths: [usize; 4],
    pub initial_channels: usize,
    pub compression: f64,
    pub input_height: usize,
    pub input_width: usize,
}

impl EncoderConfig {
    /// DenseNet-121 dimensions; 192x256 inputs yield a 6x8x1024 volume.
    pub fn full_scale() -> Self {
        EncoderConfig {
            growth_rate: 32,
            block_lengths: [6, 12, 24, 16],
            initial_channels: 64,
            compression: 0.5,
            input_height: 192,
            input_width: 256,
        }
    }

    /// Small config that exercises every layer type but trains on a CPU.
    pub fn desk() -> Self {
        EncoderConfig {
            growth_rate: 8,
            block_lengths: [2, 2, 2, 2],
            initial_channels: 16,
            compression: 0.5,
            input_height: 64,
            input_width: 64,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.growth_rate == 0 || self.initial_channels == 0 {
            return Err(Error::config("growth rate and initial channels must be positive"));
        }
        if self.block_lengths.iter().any(|&l| l == 0) {
            return Err(Error::config("every dense block needs at least one layer"));
        }
        if !(self.compression > 0.0 && self.compression <= 1.0) {
            return Err(Error::config("compression must lie in (0, 1]"));
        }
        if self.input_height % 32 != 0 || self.input_width % 32 != 0 {
            return Err(Error::config(format!(
                "input dims {}x{} must be divisible by 32",
                self.input_height, self.input_width
            )));
        }
        Ok(())
    }

    /// Channel count entering each of the four blocks, and the final count.
    pub fn channel_trace(&self) -> ([usize; 4], usize) {
        let mut c = self.initial_channels;
        let mut entering = [0usize; 4];
        for (i, &len) in self.block_lengths.iter().enumerate() {
            entering[i] = c;
            c += len * self.growth_rate;
            if i < 3 {
                c = (c as f64 * self.compression).floor() as usize;
            }
        }
        (entering, c)
    }

    pub fn output_channels(&self) -> usize {
        self.channel_trace().1
    }

    pub fn output_spatial(&self) -> (usize, usize) {
        (self.input_height / 32, self.input_width / 32)
    }
}

/// One BN -> ReLU -> conv unit.
struct ConvUnit<S: Scalar> {
    gamma: TensorBase<S>,
    beta: TensorBase<S>,
    state: BatchNormState<S>,
    kernel: TensorBase<S>,
}

impl<S: Scalar> ConvUnit<S> {
    fn init<R: Rng>(rng: &mut R, cin: usize, k: usize, cout: usize) -> Self {
        ConvUnit {
            gamma: TensorBase::full(&[cin], S::one()).requires_grad(true),
            beta: TensorBase::zeros(&[cin]).requires_grad(true),
            state: BatchNormState::new(cin),
            kernel: he_uniform(rng, cin, k, cout),
        }
    }

    fn forward(
        &self,
        tape: &Tape<S>,
        x: &TensorBase<S>,
        stride: usize,
        train: bool,
    ) -> Result<TensorBase<S>> {
        let y = batch_norm(
            tape,
            x,
            &self.gamma,
            &self.beta,
            &self.state,
            S::c(BN_EPS),
            S::c(BN_MOMENTUM),
            train,
        )?;
        let y = ops::relu(tape, &y);
        conv2d(tape, &y, &self.kernel, stride, Padding::Same)
    }

    fn named(&self, out: &mut Vec<(String, TensorBase<S>)>, prefix: &str) {
        out.push((format!("{prefix}.gamma"), self.gamma.clone()));
        out.push((format!("{prefix}.beta"), self.beta.clone()));
        out.push((format!("{prefix}.kernel"), self.kernel.clone()));
    }

    fn named_states(&self, out: &mut Vec<(String, TensorBase<S>)>, prefix: &str) {
        out.push((format!("{prefix}.running_mean"), self.state.running_mean.clone()));
        out.push((format!("{prefix}.running_var"), self.state.running_var.clone()));
    }
}

const BN_EPS: f64 = 1e-5;
const BN_MOMENTUM: f64 = 0.9;

/// He-style uniform initialization over fan-in = cin * k * k.
fn he_uniform<S: Scalar, R: Rng>(rng: &mut R, cin: usize, k: usize, cout: usize) -> TensorBase<S> {
    let fan_in = (cin * k * k) as f64;
    let bound = (6.0 / fan_in).sqrt();
    let n = cin * k * k * cout;
    let data: Vec<S> = (0..n).map(|_| S::c(rng.random_range(-bound..bound))).collect();
    TensorBase::from_vec(&[cin, k, k, cout], data)
        .expect("kernel shape consistent")
        .requires_grad(true)
}

struct DenseLayer<S: Scalar> {
    bottleneck: ConvUnit<S>, // 1x1 -> 4 * growth
    conv: ConvUnit<S>,       // 3x3 -> growth
}

struct Transition<S: Scalar> {
    conv: ConvUnit<S>, // 1x1 -> floor(C * compression)
}

/// All trainable state of the encoder.
pub struct EncoderParams<S: Scalar> {
    config: EncoderConfig,
    stem: ConvUnit<S>, // conv applied first, BN/ReLU after (stem order differs)
    blocks: Vec<Vec<DenseLayer<S>>>,
    transitions: Vec<Transition<S>>,
    final_gamma: TensorBase<S>,
    final_beta: TensorBase<S>,
    final_state: BatchNormState<S>,
    out_channels: usize,
}

impl<S: Scalar> EncoderParams<S> {
    pub fn init<R: Rng>(config: &EncoderConfig, rng: &mut R) -> Result<Self> {
        config.validate()?;
        let g = config.growth_rate;
        let (entering, final_c) = config.channel_trace();

        // stem BN params normalize the stem conv's *output*
        let stem = ConvUnit {
            gamma: TensorBase::full(&[config.initial_channels], S::one()).requires_grad(true),
            beta: TensorBase::zeros(&[config.initial_channels]).requires_grad(true),
            state: BatchNormState::new(config.initial_channels),
            kernel: he_uniform(rng, 3, 7, config.initial_channels),
        };

        let mut blocks = Vec::with_capacity(4);
        let mut transitions = Vec::with_capacity(3);
        for (i, &len) in config.block_lengths.iter().enumerate() {
            let mut layers = Vec::with_capacity(len);
            let mut c = entering[i];
            for _ in 0..len {
                layers.push(DenseLayer {
                    bottleneck: ConvUnit::init(rng, c, 1, 4 * g),
                    conv: ConvUnit::init(rng, 4 * g, 3, g),
                });
                c += g;
            }
            blocks.push(layers);
            if i < 3 {
                let compressed = (c as f64 * config.compression).floor() as usize;
                transitions.push(Transition {
                    conv: ConvUnit::init(rng, c, 1, compressed),
                });
            }
        }

        Ok(EncoderParams {
            config: config.clone(),
            stem,
            blocks,
            transitions,
            final_gamma: TensorBase::full(&[final_c], S::one()).requires_grad(true),
            final_beta: TensorBase::zeros(&[final_c]).requires_grad(true),
            final_state: BatchNormState::new(final_c),
            out_channels: final_c,
        })
    }

    pub fn config(&self) -> &EncoderConfig {
        &self.config
    }

    pub fn out_channels(&self) -> usize {
        self.out_channels
    }

    /// Flattened output length for the configured input size.
    pub fn out_features(&self) -> usize {
        let (h, w) = self.config.output_spatial();
        h * w * self.out_channels
    }

    /// N x H x W x 3 -> N x H/32 x W/32 x C_end.
    pub fn forward(
        &self,
        tape: &Tape<S>,
        image: &TensorBase<S>,
        train: bool,
    ) -> Result<TensorBase<S>> {
        let shape = image.shape();
        if shape.len() != 4 || shape[3] != 3 {
            return Err(Error::dim(format!("encoder expects NHWC with C=3, got {shape:?}")));
        }
        if shape[1] % 32 != 0 || shape[2] % 32 != 0 {
            return Err(Error::config(format!(
                "input dims {}x{} must be divisible by 32",
                shape[1], shape[2]
            )));
        }

        // stem: conv -> BN -> ReLU -> max pool
        let y = conv2d(tape, image, &self.stem.kernel, 2, Padding::Same)?;
        let y = batch_norm(
            tape,
            &y,
            &self.stem.gamma,
            &self.stem.beta,
            &self.stem.state,
            S::c(BN_EPS),
            S::c(BN_MOMENTUM),
            train,
        )?;
        let y = ops::relu(tape, &y);
        let mut y = pool2d_strided(tape, &y, 3, 2, PoolMode::Max, Padding::Same)?;

        for (i, layers) in self.blocks.iter().enumerate() {
            for layer in layers {
                let b = layer.bottleneck.forward(tape, &y, 1, train)?;
                let f = layer.conv.forward(tape, &b, 1, train)?;
                y = ops::concat_last(tape, &[y, f])?;
            }
            if i < 3 {
                let t = self.transitions[i].conv.forward(tape, &y, 1, train)?;
                y = pool2d_strided(tape, &t, 2, 2, PoolMode::Average, Padding::Valid)?;
            }
        }

        let y = batch_norm(
            tape,
            &y,
            &self.final_gamma,
            &self.final_beta,
            &self.final_state,
            S::c(BN_EPS),
            S::c(BN_MOMENTUM),
            train,
        )?;
        Ok(ops::relu(tape, &y))
    }

    /// Trainable tensors, stably named for checkpointing and SGD.
    pub fn named_parameters(&self, prefix: &str) -> Vec<(String, TensorBase<S>)> {
        let mut out = Vec::new();
        self.stem.named(&mut out, &format!("{prefix}.stem"));
        for (i, layers) in self.blocks.iter().enumerate() {
            for (j, layer) in layers.iter().enumerate() {
                layer
                    .bottleneck
                    .named(&mut out, &format!("{prefix}.block{i}.layer{j}.bottleneck"));
                layer
                    .conv
                    .named(&mut out, &format!("{prefix}.block{i}.layer{j}.conv"));
            }
        }
        for (i, t) in self.transitions.iter().enumerate() {
            t.conv.named(&mut out, &format!("{prefix}.transition{i}"));
        }
        out.push((format!("{prefix}.final.gamma"), self.final_gamma.clone()));
        out.push((format!("{prefix}.final.beta"), self.final_beta.clone()));
        out
    }

    /// Batch-norm running statistics (saved with checkpoints, not trained).
    pub fn named_states(&self, prefix: &str) -> Vec<(String, TensorBase<S>)> {
        let mut out = Vec::new();
        self.stem.named_states(&mut out, &format!("{prefix}.stem"));
        for (i, layers) in self.blocks.iter().enumerate() {
            for (j, layer) in layers.iter().enumerate() {
                layer
                    .bottleneck
                    .named_states(&mut out, &format!("{prefix}.block{i}.layer{j}.bottleneck"));
                layer
                    .conv
                    .named_states(&mut out, &format!("{prefix}.block{i}.layer{j}.conv"));
            }
        }
        for (i, t) in self.transitions.iter().enumerate() {
            t.conv
                .named_states(&mut out, &format!("{prefix}.transition{i}"));
        }
        out.push((format!("{prefix}.final.running_mean"), self.final_state.running_mean.clone()));
        out.push((format!("{prefix}.final.running_var"), self.final_state.running_var.clone()));
        out
    }
}
