use std::collections::HashSet;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::quant::{FloatFormat, QuantConfig};

/// Ordered, duplicate-free list of candidate configurations.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<QuantConfig>", into = "Vec<QuantConfig>")]
pub struct ConfigGrid {
    configs: Vec<QuantConfig>,
}

impl TryFrom<Vec<QuantConfig>> for ConfigGrid {
    type Error = Error;

    fn try_from(configs: Vec<QuantConfig>) -> Result<Self> {
        ConfigGrid::new(configs)
    }
}

impl From<ConfigGrid> for Vec<QuantConfig> {
    fn from(g: ConfigGrid) -> Self {
        g.configs
    }
}

impl ConfigGrid {
    pub fn new(configs: Vec<QuantConfig>) -> Result<Self> {
        if configs.is_empty() {
            return Err(Error::arg("configuration grid is empty"));
        }
        let mut seen = HashSet::new();
        for c in &configs {
            c.validate()?;
            if !seen.insert(*c) {
                return Err(Error::arg(format!("duplicate configuration {c}")));
            }
        }
        Ok(Self { configs })
    }

    /// The 3^5 = 243 combinations of b0, b1 ∈ {2,3,4}, b2 ∈ {bf16, fp16, fp32},
    /// B0 ∈ {16,32,64}, B1 ∈ {16,64,256}.
    pub fn default_grid() -> Self {
        let mut configs = Vec::with_capacity(243);
        for b0 in [2, 3, 4] {
            for b1 in [2, 3, 4] {
                for b2 in [FloatFormat::Bf16, FloatFormat::Fp16, FloatFormat::Fp32] {
                    for block in [16, 32, 64] {
                        for group in [16, 64, 256] {
                            configs.push(QuantConfig {
                                b0,
                                b1,
                                b2,
                                block_size: block,
                                group_size: group,
                            });
                        }
                    }
                }
            }
        }
        Self { configs }
    }

    /// `default` or a JSON file holding `[[b0,b1,"b2",B0,B1], ...]`.
    pub fn from_arg(arg: &str) -> Result<Self> {
        if arg == "default" {
            return Ok(Self::default_grid());
        }
        let path = Path::new(arg);
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text)
            .map_err(|e| Error::from(e).in_file(path))
    }

    pub fn configs(&self) -> &[QuantConfig] {
        &self.configs
    }

    pub fn len(&self) -> usize {
        self.configs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.configs.is_empty()
    }
}
