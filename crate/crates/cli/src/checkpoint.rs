//! On-disk model format: a JSON document with a readable architecture
//! header and base64 little-endian `f64` parameter blocks.

use std::fs;
use std::path::Path;

use base64::engine::general_purpose::STANDARD;
use base64::Engine;
use fex_core::{Activation, MlpNetwork};
use serde::{Deserialize, Serialize};

use crate::error::{CliError, CliResult};

pub const FORMAT_TAG: &str = "fex-ckpt";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    Predictor,
    Explainer,
    Value,
}

impl ModelKind {
    pub fn as_str(self) -> &'static str {
        match self {
            ModelKind::Predictor => "predictor",
            ModelKind::Explainer => "explainer",
            ModelKind::Value => "value",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Architecture {
    pub layer_sizes: Vec<usize>,
    pub hidden_activation: String,
    pub output_activation: Activation,
    pub n_classes: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Params {
    /// One block per layer, row-major `out x in`.
    pub weights: Vec<String>,
    pub biases: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Checkpoint {
    pub format: String,
    pub version: u32,
    pub kind: ModelKind,
    pub architecture: Architecture,
    pub params: Params,
    /// Effective training configuration, echoed for provenance.
    pub config: serde_json::Value,
    pub seed: u64,
}

pub fn encode_block(values: &[f64]) -> String {
    let bytes: Vec<u8> = values.iter().flat_map(|v| v.to_le_bytes()).collect();
    STANDARD.encode(bytes)
}

pub fn decode_block(block: &str) -> CliResult<Vec<f64>> {
    let bytes = STANDARD
        .decode(block)
        .map_err(|e| CliError::Checkpoint(format!("bad parameter block: {e}")))?;
    if bytes.len() % 8 != 0 {
        return Err(CliError::Checkpoint(format!(
            "parameter block of {} bytes is not a whole number of f64",
            bytes.len()
        )));
    }
    Ok(bytes
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("chunk of 8")))
        .collect())
}

impl Checkpoint {
    pub fn new(kind: ModelKind, net: &MlpNetwork, n_classes: usize, config: serde_json::Value, seed: u64) -> Self {
        Checkpoint {
            format: FORMAT_TAG.into(),
            version: FORMAT_VERSION,
            kind,
            architecture: Architecture {
                layer_sizes: net.layer_sizes().to_vec(),
                hidden_activation: Activation::Tanh.as_str().into(),
                output_activation: net.output_activation(),
                n_classes,
            },
            params: Params {
                weights: net.weights().iter().map(|w| encode_block(w)).collect(),
                biases: net.biases().iter().map(|b| encode_block(b)).collect(),
            },
            config,
            seed,
        }
    }

    pub fn network(&self) -> CliResult<MlpNetwork> {
        if self.architecture.hidden_activation != Activation::Tanh.as_str() {
            return Err(CliError::Checkpoint(format!(
                "unsupported hidden activation {:?}",
                self.architecture.hidden_activation
            )));
        }
        let weights = self.params.weights.iter().map(|b| decode_block(b)).collect::<CliResult<_>>()?;
        let biases = self.params.biases.iter().map(|b| decode_block(b)).collect::<CliResult<_>>()?;
        Ok(MlpNetwork::from_parts(
            self.architecture.layer_sizes.clone(),
            weights,
            biases,
            self.architecture.output_activation,
        )?)
    }

    pub fn save(&self, path: &Path) -> CliResult<()> {
        let text = serde_json::to_string_pretty(self).expect("checkpoint serializes");
        fs::write(path, text + "\n").map_err(|e| CliError::io(path, e))
    }

    pub fn load(path: &Path) -> CliResult<Self> {
        let text = fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        let ckpt: Checkpoint = serde_json::from_str(&text)
            .map_err(|e| CliError::Checkpoint(format!("{}: {e}", path.display())))?;
        if ckpt.format != FORMAT_TAG || ckpt.version != FORMAT_VERSION {
            return Err(CliError::Checkpoint(format!(
                "{}: expected {FORMAT_TAG} version {FORMAT_VERSION}, found {} version {}",
                path.display(),
                ckpt.format,
                ckpt.version
            )));
        }
        Ok(ckpt)
    }

    /// Loads and checks the model kind.
    pub fn load_kind(path: &Path, kind: ModelKind) -> CliResult<Self> {
        let ckpt = Self::load(path)?;
        if ckpt.kind != kind {
            return Err(CliError::Checkpoint(format!(
                "{}: expected a {} checkpoint, found {}",
                path.display(),
                kind.as_str(),
                ckpt.kind.as_str()
            )));
        }
        Ok(ckpt)
    }
}
