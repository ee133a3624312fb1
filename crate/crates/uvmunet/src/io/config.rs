//! JSON run configuration.
//!
//! Every key has a default mirroring the reference model (channels
//! `[8,16,24,32,48,64]`, quadruple parallelism, 256×256 input); unknown keys
//! are rejected so typos fail loudly instead of silently falling back.

use crate::accounting::FlopConvention;
use crate::blocks::VmKind;
use crate::error::Result;
use crate::net::NetConfig;
use serde::{Deserialize, Serialize};
use std::path::Path;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub enum InnerKind {
    #[serde(rename = "mamba-1d")]
    #[default]
    Mamba1d,
    #[serde(rename = "ss2d")]
    Ss2d,
}

impl From<InnerKind> for VmKind {
    fn from(k: InnerKind) -> VmKind {
        match k {
            InnerKind::Mamba1d => VmKind::Mamba1d,
            InnerKind::Ss2d => VmKind::Ss2d,
        }
    }
}

fn default_channels() -> [usize; 6] {
    [8, 16, 24, 32, 48, 64]
}

fn default_parallelism() -> usize {
    4
}

fn default_input_size() -> [usize; 2] {
    [256, 256]
}

fn default_bridge() -> bool {
    true
}

fn default_theta() -> f32 {
    1.0
}

/// The on-disk run configuration.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default = "default_channels")]
    pub channels: [usize; 6],
    #[serde(default = "default_parallelism")]
    pub parallelism: usize,
    #[serde(default)]
    pub inner_kind: InnerKind,
    /// `[H, W]`.
    #[serde(default = "default_input_size")]
    pub input_size: [usize; 2],
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_bridge")]
    pub bridge_enabled: bool,
    #[serde(default)]
    pub flop_convention: FlopConvention,
    #[serde(default = "default_theta")]
    pub theta_init: f32,
}

impl Default for RunConfig {
    fn default() -> Self {
        serde_json::from_str("{}").expect("empty config is valid")
    }
}

impl RunConfig {
    pub fn from_json(json: &str) -> Result<Self> {
        Ok(serde_json::from_str(json)?)
    }

    pub fn from_path(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    /// Validated network configuration.
    pub fn net_config(&self) -> Result<NetConfig> {
        let cfg = NetConfig {
            channels: self.channels,
            input_size: (self.input_size[0], self.input_size[1]),
            in_channels: 3,
            parallelism: self.parallelism,
            inner_kind: self.inner_kind.into(),
            bridge_enabled: self.bridge_enabled,
            theta_init: self.theta_init,
        };
        cfg.validate()?;
        Ok(cfg)
    }
}
