//! Flat key=value experiment configuration. Unknown keys are rejected and
//! every value is validated before any computation starts.

use std::path::{Path, PathBuf};

use super::parse_err;
use crate::encoder::EncoderConfig;
use crate::error::{Error, Result};
use crate::model::ModelConfig;
use crate::synthetic::ShapeCycleSpec;
use crate::train::TrainConfig;

#[derive(Debug, Clone)]
pub struct ExperimentConfig {
    pub dataset_dir: PathBuf,
    pub output_dir: PathBuf,
    // synthetic cycle
    pub frames: usize,
    pub subdivision: usize,
    pub scale_amplitude: f64,
    pub bulge_amplitude: f64,
    pub noise_sigma: f64,
    pub image_height: usize,
    pub image_width: usize,
    pub frustum_half_width: f64,
    // encoder
    pub growth_rate: usize,
    pub block_lengths: [usize; 4],
    pub initial_channels: usize,
    pub compression: f64,
    // decoder
    pub feature_channels: usize,
    pub cheb_order: usize,
    pub stride: usize,
    pub bridge_dim: usize,
    // trainer
    pub lr0: f64,
    pub decay: f64,
    pub momentum: f64,
    pub max_epochs: usize,
    pub warmup_iters: usize,
}

impl Default for ExperimentConfig {
    /// Desk-scale defaults: 162-vertex icosphere cycle, 64x64 images,
    /// F=16 / S=3 decoder, small dense blocks.
    fn default() -> Self {
        ExperimentConfig {
            dataset_dir: PathBuf::from("data"),
            output_dir: PathBuf::from("out"),
            frames: 20,
            subdivision: 2,
            scale_amplitude: 0.25,
            bulge_amplitude: 0.1,
            noise_sigma: 0.0,
            image_height: 64,
            image_width: 64,
            frustum_half_width: 2.0,
            growth_rate: 8,
            block_lengths: [2, 2, 2, 2],
            initial_channels: 16,
            compression: 0.5,
            feature_channels: 16,
            cheb_order: 3,
            stride: 3,
            bridge_dim: 8,
            lr0: 5e-3,
            decay: 0.97,
            momentum: 0.9,
            max_epochs: 1200,
            warmup_iters: 0,
        }
    }
}

impl ExperimentConfig {
    pub fn parse_str(text: &str, path: &Path) -> Result<Self> {
        let mut cfg = ExperimentConfig::default();
        for (i, raw) in text.lines().enumerate() {
            let ln = i + 1;
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| parse_err(path, ln, format!("expected key=value, got {line:?}")))?;
            cfg.set(key.trim(), value.trim())
                .map_err(|e| parse_err(path, ln, e.to_string()))?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::parse_str(&text, path)
    }

    /// Apply one `key=value` override (CLI flags and environment variables
    /// funnel through here too).
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        fn num<T: std::str::FromStr>(key: &str, v: &str) -> Result<T>
        where
            T::Err: std::fmt::Display,
        {
            v.parse()
                .map_err(|e| Error::config(format!("bad value for {key}: {e}")))
        }
        match key {
            "dataset_dir" => self.dataset_dir = PathBuf::from(value),
            "output_dir" => self.output_dir = PathBuf::from(value),
            "frames" => self.frames = num(key, value)?,
            "subdivision" => self.subdivision = num(key, value)?,
            "scale_amplitude" => self.scale_amplitude = num(key, value)?,
            "bulge_amplitude" => self.bulge_amplitude = num(key, value)?,
            "noise_sigma" => self.noise_sigma = num(key, value)?,
            "image_height" => self.image_height = num(key, value)?,
            "image_width" => self.image_width = num(key, value)?,
            "frustum_half_width" => self.frustum_half_width = num(key, value)?,
            "growth_rate" => self.growth_rate = num(key, value)?,
            "block_lengths" => {
                let parts: Vec<usize> = value
                    .split(',')
                    .map(|t| num("block_lengths", t.trim()))
                    .collect::<Result<_>>()?;
                self.block_lengths = parts
                    .try_into()
                    .map_err(|_| Error::config("block_lengths needs exactly 4 entries"))?;
            }
            "initial_channels" => self.initial_channels = num(key, value)?,
            "compression" => self.compression = num(key, value)?,
            "feature_channels" => self.feature_channels = num(key, value)?,
            "cheb_order" => self.cheb_order = num(key, value)?,
            "stride" => self.stride = num(key, value)?,
            "bridge_dim" => self.bridge_dim = num(key, value)?,
            "lr0" => self.lr0 = num(key, value)?,
            "decay" => self.decay = num(key, value)?,
            "momentum" => self.momentum = num(key, value)?,
            "max_epochs" => self.max_epochs = num(key, value)?,
            "warmup_iters" => self.warmup_iters = num(key, value)?,
            other => return Err(Error::config(format!("unknown config key {other:?}"))),
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        self.model_config().validate()?;
        self.shape_spec().validate()?;
        self.train_config(0).validate()
    }

    pub fn shape_spec(&self) -> ShapeCycleSpec {
        ShapeCycleSpec {
            subdivision: self.subdivision,
            radius: 1.0,
            frames: self.frames,
            scale_amplitude: self.scale_amplitude,
            scale_axis: Some(2),
            bulge_amplitude: self.bulge_amplitude,
            noise_sigma: self.noise_sigma,
            image_height: self.image_height,
            image_width: self.image_width,
            frustum_half_width: self.frustum_half_width,
        }
    }

    pub fn model_config(&self) -> ModelConfig {
        ModelConfig {
            encoder: EncoderConfig {
                growth_rate: self.growth_rate,
                block_lengths: self.block_lengths,
                initial_channels: self.initial_channels,
                compression: self.compression,
                input_height: self.image_height,
                input_width: self.image_width,
            },
            feature_channels: self.feature_channels,
            cheb_order: self.cheb_order,
            stride: self.stride,
            bridge_dim: self.bridge_dim,
        }
    }

    pub fn train_config(&self, seed: u64) -> TrainConfig {
        TrainConfig {
            lr0: self.lr0,
            decay: self.decay,
            decay_every: 5 * self.frames.max(1),
            momentum: self.momentum,
            max_epochs: self.max_epochs,
            warmup_iters: self.warmup_iters,
            seed,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_are_valid() {
        ExperimentConfig::default().validate().unwrap();
    }

    #[test]
    fn parse_overrides_and_comments() {
        let text = "# comment\nframes = 10\nblock_lengths = 1,1,1,1\nmax_epochs=50\n";
        let cfg = ExperimentConfig::parse_str(text, Path::new("exp.cfg")).unwrap();
        assert_eq!(cfg.frames, 10);
        assert_eq!(cfg.block_lengths, [1, 1, 1, 1]);
        assert_eq!(cfg.max_epochs, 50);
        assert_eq!(cfg.stride, 3); // untouched default
    }

    #[test]
    fn unknown_key_rejected_with_line() {
        let err =
            ExperimentConfig::parse_str("frames=10\nlr_zero=1\n", Path::new("exp.cfg")).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("line 2") && msg.contains("lr_zero"), "{msg}");
    }

    #[test]
    fn invalid_values_rejected_before_use() {
        // indivisible image dims surface as a config error at parse time
        let err = ExperimentConfig::parse_str("image_height=100\n", Path::new("e")).unwrap_err();
        assert!(err.to_string().contains("divisible"));
        assert!(ExperimentConfig::parse_str("decay=1.5\n", Path::new("e")).is_err());
        assert!(ExperimentConfig::parse_str("frames=abc\n", Path::new("e")).is_err());
    }
}
