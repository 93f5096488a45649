use serde::{Deserialize, Serialize};

use crate::dsp::FramingConfig;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    #[default]
    None,
    Tanh,
}

/// Hyperparameters of the dual-path network.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    pub n_blocks: usize,
    pub channels: usize,
    pub hidden: usize,
    pub freq_compress: usize,
    /// (time, frequency) kernel of the input convolution.
    pub enc_kernel: (usize, usize),
    /// (time, frequency) kernel of the output deconvolution.
    pub dec_kernel: (usize, usize),
    #[serde(default)]
    pub encoder_activation: Activation,
    #[serde(default = "default_true")]
    pub pre_emphasis: bool,
    #[serde(default)]
    pub framing: FramingConfig,
}

fn default_true() -> bool {
    true
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            n_blocks: 6,
            channels: 32,
            hidden: 32,
            freq_compress: 4,
            enc_kernel: (3, 3),
            dec_kernel: (3, 3),
            encoder_activation: Activation::None,
            pre_emphasis: true,
            framing: FramingConfig::default(),
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        self.framing.validate()?;
        let positive = [
            ("n_blocks", self.n_blocks),
            ("channels", self.channels),
            ("hidden", self.hidden),
            ("freq_compress", self.freq_compress),
            ("enc_kernel.time", self.enc_kernel.0),
            ("dec_kernel.time", self.dec_kernel.0),
        ];
        if let Some((name, _)) = positive.iter().find(|(_, v)| *v == 0) {
            return Err(Error::config(format!("{name} must be at least 1")));
        }
        for (name, k) in [("enc_kernel", self.enc_kernel.1), ("dec_kernel", self.dec_kernel.1)] {
            if k % 2 == 0 {
                return Err(Error::config(format!(
                    "{name} frequency size {k} must be odd for symmetric padding"
                )));
            }
        }
        Ok(())
    }

    #[inline]
    pub fn n_bins(&self) -> usize {
        self.framing.n_bins()
    }

    /// Frequency length after compression: `ceil(F / q)`.
    #[inline]
    pub fn compressed_bins(&self) -> usize {
        self.n_bins().div_ceil(self.freq_compress)
    }

    #[inline]
    pub fn padded_bins(&self) -> usize {
        self.compressed_bins() * self.freq_compress
    }

    /// Dense layer paths in execution order.
    pub fn layer_paths(&self) -> Vec<String> {
        let mut paths = vec!["encoder".to_string()];
        for b in 0..self.n_blocks {
            paths.extend(
                [
                    "spectral.conv",
                    "spectral.gru.fwd.ih",
                    "spectral.gru.fwd.hh",
                    "spectral.gru.bwd.ih",
                    "spectral.gru.bwd.hh",
                    "spectral.deconv",
                    "temporal.lstm.ih",
                    "temporal.lstm.hh",
                    "temporal.proj",
                ]
                .iter()
                .map(|s| format!("block.{b}.{s}")),
            );
        }
        paths.push("decoder".to_string());
        paths
    }

    /// Weight shape of every dense layer, output channel first, input last.
    pub fn weight_shape(&self, path: &str) -> Option<Vec<usize>> {
        let (d, h, q) = (self.channels, self.hidden, self.freq_compress);
        let (ekt, ekf) = self.enc_kernel;
        let (dkt, dkf) = self.dec_kernel;
        if path == "encoder" {
            return Some(vec![d, ekt, ekf, 2]);
        }
        if path == "decoder" {
            return Some(vec![2, dkt, dkf, d]);
        }
        let rest = path.strip_prefix("block.")?;
        let (b, leaf) = rest.split_once('.')?;
        if b.parse::<usize>().ok()? >= self.n_blocks {
            return None;
        }
        Some(match leaf {
            "spectral.conv" => vec![d, q, d],
            "spectral.gru.fwd.ih" | "spectral.gru.bwd.ih" => vec![3 * h, d],
            "spectral.gru.fwd.hh" | "spectral.gru.bwd.hh" => vec![3 * h, h],
            "spectral.deconv" => vec![d, q, 2 * h],
            "temporal.lstm.ih" => vec![4 * h, d],
            "temporal.lstm.hh" => vec![4 * h, h],
            "temporal.proj" => vec![d, h],
            _ => return None,
        })
    }

    /// Total parameter count (weights and biases).
    pub fn parameter_count(&self) -> usize {
        self.layer_paths()
            .iter()
            .map(|p| {
                let shape = self.weight_shape(p).expect("known layer");
                shape.iter().product::<usize>() + shape[0]
            })
            .sum()
    }
}
