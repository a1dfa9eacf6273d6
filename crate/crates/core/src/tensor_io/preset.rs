use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PresetMatrix {
    pub label: String,
    pub rows: usize,
    pub cols: usize,
}

impl PresetMatrix {
    pub fn params(&self) -> u64 {
        self.rows as u64 * self.cols as u64
    }
}

/// Shapes of the adapted linear layers of a model (attention q/k/v/o and MLP
/// gate/up/down). Embeddings and norms are not included.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelPreset {
    pub name: String,
    pub matrices: Vec<PresetMatrix>,
}

impl ModelPreset {
    pub fn total_params(&self) -> u64 {
        self.matrices.iter().map(PresetMatrix::params).sum()
    }
}

pub const PRESET_NAMES: &[&str] = &["llama2-7b-linear", "llama2-70b-linear"];

fn repeat_layers(name: &str, layers: usize, block: &[(&str, usize, usize)]) -> ModelPreset {
    let matrices = (0..layers)
        .flat_map(|l| {
            block.iter().map(move |&(label, rows, cols)| PresetMatrix {
                label: format!("layers.{l}.{label}"),
                rows,
                cols,
            })
        })
        .collect();
    ModelPreset {
        name: name.to_string(),
        matrices,
    }
}

pub fn preset(name: &str) -> Result<ModelPreset> {
    match name {
        "llama2-7b-linear" => Ok(repeat_layers(
            name,
            32,
            &[
                ("self_attn.q_proj", 4096, 4096),
                ("self_attn.k_proj", 4096, 4096),
                ("self_attn.v_proj", 4096, 4096),
                ("self_attn.o_proj", 4096, 4096),
                ("mlp.gate_proj", 4096, 11008),
                ("mlp.up_proj", 4096, 11008),
                ("mlp.down_proj", 11008, 4096),
            ],
        )),
        "llama2-70b-linear" => Ok(repeat_layers(
            name,
            80,
            &[
                ("self_attn.q_proj", 8192, 8192),
                ("self_attn.o_proj", 8192, 8192),
                ("self_attn.k_proj", 8192, 1024),
                ("self_attn.v_proj", 8192, 1024),
                ("mlp.gate_proj", 8192, 28672),
                ("mlp.up_proj", 8192, 28672),
                ("mlp.down_proj", 28672, 8192),
            ],
        )),
        other => Err(Error::arg(format!(
            "unknown preset {other:?}; known presets: {}",
            PRESET_NAMES.join(", ")
        ))),
    }
}
