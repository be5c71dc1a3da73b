//! End-to-end network: image encoder -> fully-connected bridge -> spectral
//! graph-convolutional mesh decoder over a precomputed sampling hierarchy.

use std::rc::Rc;

use rand::Rng;

use crate::encoder::{EncoderConfig, EncoderParams};
use crate::error::{Error, Result};
use crate::mesh::MeshBase;
use crate::sampling::{upsample, SamplingHierarchy};
use crate::scalar::Scalar;
use crate::spectral::{cheb_conv, ChebConvLayer};
use crate::tensor::nn::tile_channels;
use crate::tensor::{ops, Tape, TensorBase};

/// Width of the fully connected bottleneck between encoder and decoder at
/// full scale.
pub const BRIDGE_DIM: usize = 8;

#[derive(Debug, Clone, PartialEq)]
pub struct ModelConfig {
    pub encoder: EncoderConfig,
    /// Feature channels F carried through the decoder.
    pub feature_channels: usize,
    /// Chebyshev order K.
    pub cheb_order: usize,
    /// Hierarchy stride S (level-l count = ceil of the previous over S).
    pub stride: usize,
    /// Width of the FC bottleneck between encoder and decoder.
    pub bridge_dim: usize,
}

impl ModelConfig {
    /// F=64, S=4, K=3 with the full-scale encoder.
    pub fn full_scale() -> Self {
        ModelConfig {
            encoder: EncoderConfig::full_scale(),
            feature_channels: 64,
            cheb_order: 3,
            stride: 4,
            bridge_dim: BRIDGE_DIM,
        }
    }

    /// F=16, S=3, K=3 with the desk encoder.
    pub fn desk() -> Self {
        ModelConfig {
            encoder: EncoderConfig::desk(),
            feature_channels: 16,
            cheb_order: 3,
            stride: 3,
            bridge_dim: BRIDGE_DIM,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.encoder.validate()?;
        if self.feature_channels == 0 {
            return Err(Error::config("feature channels must be positive"));
        }
        if self.cheb_order == 0 {
            return Err(Error::config("Chebyshev order must be >= 1"));
        }
        if self.stride < 2 {
            return Err(Error::config("hierarchy stride must be >= 2"));
        }
        if self.bridge_dim == 0 {
            return Err(Error::config("bridge width must be positive"));
        }
        Ok(())
    }
}

fn uniform_init<S: Scalar, R: Rng>(rng: &mut R, shape: &[usize], fan_in: usize) -> TensorBase<S> {
    let bound = (6.0 / fan_in as f64).sqrt();
    let n: usize = shape.iter().product();
    let data: Vec<S> = (0..n).map(|_| S::c(rng.random_range(-bound..bound))).collect();
    TensorBase::from_vec(shape, data)
        .expect("shape consistent")
        .requires_grad(true)
}

/// All trainable state plus the (frozen) hierarchy it decodes over.
pub struct ModelParams<S: Scalar> {
    pub config: ModelConfig,
    pub encoder: EncoderParams<S>,
    pub fc1_w: TensorBase<S>,
    pub fc1_b: TensorBase<S>,
    pub fc2_w: TensorBase<S>,
    pub fc2_b: TensorBase<S>,
    /// Decoder layers ordered coarse-to-fine; the last maps F -> 3.
    pub gcn: Vec<ChebConvLayer<S>>,
    pub hierarchy: Rc<SamplingHierarchy<S>>,
}

impl<S: Scalar> ModelParams<S> {
    pub fn init<R: Rng>(
        config: &ModelConfig,
        hierarchy: Rc<SamplingHierarchy<S>>,
        rng: &mut R,
    ) -> Result<Self> {
        config.validate()?;
        if hierarchy.stride() != config.stride {
            return Err(Error::config(format!(
                "hierarchy stride {} does not match model stride {}",
                hierarchy.stride(),
                config.stride
            )));
        }
        let levels = hierarchy.depth() - 1;
        if levels != 4 {
            return Err(Error::config(format!(
                "decoder expects a 4-stage hierarchy, got {levels}"
            )));
        }

        let encoder = EncoderParams::init(&config.encoder, rng)?;
        let enc_features = encoder.out_features();
        let f = config.feature_channels;
        let k = config.cheb_order;
        let m4 = hierarchy.levels().last().unwrap().vertex_count();

        let fc1_w = uniform_init(rng, &[enc_features, config.bridge_dim], enc_features);
        let fc1_b = TensorBase::zeros(&[config.bridge_dim]).requires_grad(true);
        let fc2_w = uniform_init(rng, &[config.bridge_dim, m4 * f], config.bridge_dim);
        let fc2_b = TensorBase::zeros(&[m4 * f]).requires_grad(true);

        // four convolutions at levels 3, 2, 1, 0; the last outputs (x, y, z)
        let mut gcn = Vec::with_capacity(4);
        for stage in 0..4 {
            let fout = if stage == 3 { 3 } else { f };
            let theta = uniform_init(rng, &[k, f, fout], k * f);
            let bias = TensorBase::zeros(&[fout]).requires_grad(true);
            gcn.push(ChebConvLayer::new(theta, bias)?);
        }

        Ok(ModelParams {
            config: config.clone(),
            encoder,
            fc1_w,
            fc1_b,
            fc2_w,
            fc2_b,
            gcn,
            hierarchy,
        })
    }

    /// Template mesh whose connectivity every prediction inherits.
    pub fn template(&self) -> &MeshBase<S> {
        &self.hierarchy.levels()[0]
    }

    /// H x W x 1 (or 1 x H x W x 1) image -> M x 3 vertex coordinates.
    pub fn forward(
        &self,
        tape: &Tape<S>,
        image: &TensorBase<S>,
        train: bool,
    ) -> Result<TensorBase<S>> {
        let image = match image.shape().len() {
            3 => {
                let s = image.shape();
                ops::reshape(tape, image, &[1, s[0], s[1], s[2]])?
            }
            4 => image.clone(),
            other => {
                return Err(Error::dim(format!(
                    "model input must be HxWx1 or 1xHxWx1, got {other} dims"
                )))
            }
        };
        let tiled = tile_channels(tape, &image)?;
        let feat = self.encoder.forward(tape, &tiled, train)?;
        let flat = ops::reshape(tape, &feat, &[1, feat.numel()])?;
        if flat.shape()[1] != self.fc1_w.shape()[0] {
            return Err(Error::config(format!(
                "encoder produced {} features but fc1 expects {}",
                flat.shape()[1],
                self.fc1_w.shape()[0]
            )));
        }
        let bridge = ops::fully_connected(tape, &flat, &self.fc1_w, &self.fc1_b)?;
        let coarse = ops::fully_connected(tape, &bridge, &self.fc2_w, &self.fc2_b)?;

        let f = self.config.feature_channels;
        let m4 = self.hierarchy.levels().last().unwrap().vertex_count();
        // row-major vertex-major reshape: vertex index varies slowest
        let mut x = ops::reshape(tape, &coarse, &[m4, f])?;

        for (stage, layer) in self.gcn.iter().enumerate() {
            let level = 3 - stage; // convolve at the finer level after upsampling
            x = upsample(tape, self.hierarchy.up_map(level), &x)?;
            let bundle = self.hierarchy.laplacian(level).ok_or_else(|| {
                Error::config(format!("no Laplacian at hierarchy level {level}"))
            })?;
            x = cheb_conv(tape, layer, bundle, &x)?;
            if stage < 3 {
                x = ops::relu(tape, &x);
            }
        }
        Ok(x)
    }

    /// Prediction paired with the template connectivity.
    pub fn infer_mesh(&self, image: &TensorBase<S>) -> Result<MeshBase<S>> {
        let tape = Tape::inference();
        let coords = self.forward(&tape, image, false)?;
        let data = coords.to_vec();
        let verts: Vec<[S; 3]> = data.chunks_exact(3).map(|c| [c[0], c[1], c[2]]).collect();
        self.template().with_vertices(verts)
    }

    pub fn named_parameters(&self) -> Vec<(String, TensorBase<S>)> {
        let mut out = self.encoder.named_parameters("encoder");
        out.push(("fc1.weight".into(), self.fc1_w.clone()));
        out.push(("fc1.bias".into(), self.fc1_b.clone()));
        out.push(("fc2.weight".into(), self.fc2_w.clone()));
        out.push(("fc2.bias".into(), self.fc2_b.clone()));
        for (i, layer) in self.gcn.iter().enumerate() {
            out.push((format!("gcn{i}.theta"), layer.theta.clone()));
            out.push((format!("gcn{i}.bias"), layer.bias.clone()));
        }
        out
    }

    pub fn named_states(&self) -> Vec<(String, TensorBase<S>)> {
        self.encoder.named_states("encoder")
    }

    /// Per-layer parameter counts as (name, weights, biases).
    pub fn count_parameters(&self) -> ParameterReport {
        let mut layers = Vec::new();
        for (name, t) in self.encoder.named_parameters("encoder") {
            if name.ends_with(".beta") || name.ends_with(".bias") {
                layers.push((name, 0, t.numel()));
            } else {
                layers.push((name, t.numel(), 0));
            }
        }
        layers.push((
            "fc1".into(),
            self.fc1_w.numel(),
            self.fc1_b.numel(),
        ));
        layers.push((
            "fc2".into(),
            self.fc2_w.numel(),
            self.fc2_b.numel(),
        ));
        for (i, layer) in self.gcn.iter().enumerate() {
            layers.push((
                format!("gcn{i}"),
                layer.filter_param_count(),
                layer.bias.numel(),
            ));
        }
        let total = layers.iter().map(|(_, w, b)| w + b).sum();
        ParameterReport { layers, total }
    }
}

pub struct ParameterReport {
    /// (layer name, weight count, bias count)
    pub layers: Vec<(String, usize, usize)>,
    pub total: usize,
}
