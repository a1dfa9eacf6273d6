use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Bit widths accepted for both quantization levels.
pub const SUPPORTED_BITS: [u8; 4] = [2, 3, 4, 8];

/// Storage format of the second-level group scales.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FloatFormat {
    Fp32,
    Fp16,
    Bf16,
}

impl FloatFormat {
    pub fn bits(self) -> u32 {
        match self {
            FloatFormat::Fp32 => 32,
            FloatFormat::Fp16 | FloatFormat::Bf16 => 16,
        }
    }

    pub fn bytes(self) -> usize {
        self.bits() as usize / 8
    }

    /// Tag byte used in the `LQQ1` header.
    pub fn tag(self) -> u8 {
        match self {
            FloatFormat::Fp32 => 0,
            FloatFormat::Fp16 => 1,
            FloatFormat::Bf16 => 2,
        }
    }

    pub fn from_tag(tag: u8) -> Result<Self> {
        match tag {
            0 => Ok(FloatFormat::Fp32),
            1 => Ok(FloatFormat::Fp16),
            2 => Ok(FloatFormat::Bf16),
            t => Err(Error::format(format!("unknown scale format tag {t}"))),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            FloatFormat::Fp32 => "fp32",
            FloatFormat::Fp16 => "fp16",
            FloatFormat::Bf16 => "bf16",
        }
    }
}

impl fmt::Display for FloatFormat {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for FloatFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "fp32" => Ok(FloatFormat::Fp32),
            "fp16" => Ok(FloatFormat::Fp16),
            "bf16" => Ok(FloatFormat::Bf16),
            other => Err(Error::arg(format!("unknown float format {other:?}"))),
        }
    }
}

/// A quantization scheme `(b0, b1, b2, B0, B1)`.
///
/// Serialized as the JSON array `[b0, b1, "fp32", B0, B1]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "ConfigTuple", into = "ConfigTuple")]
pub struct QuantConfig {
    /// Bits per first-level NormalFloat code.
    pub b0: u8,
    /// Bits per second-level scale code.
    pub b1: u8,
    /// Format of the group scales.
    pub b2: FloatFormat,
    /// Entries per first-level block (`B0`).
    pub block_size: u32,
    /// Blocks per second-level group (`B1`).
    pub group_size: u32,
}

#[derive(Serialize, Deserialize)]
struct ConfigTuple(u8, u8, FloatFormat, u32, u32);

impl TryFrom<ConfigTuple> for QuantConfig {
    type Error = Error;

    fn try_from(t: ConfigTuple) -> Result<Self> {
        QuantConfig::new(t.0, t.1, t.2, t.3, t.4)
    }
}

impl From<QuantConfig> for ConfigTuple {
    fn from(c: QuantConfig) -> Self {
        ConfigTuple(c.b0, c.b1, c.b2, c.block_size, c.group_size)
    }
}

impl QuantConfig {
    /// NF-4 with the original double-quantization settings.
    pub const NF4: QuantConfig = QuantConfig {
        b0: 4,
        b1: 8,
        b2: FloatFormat::Fp32,
        block_size: 64,
        group_size: 256,
    };

    /// NF-8: NF-4 with an 8-bit first level.
    pub const NF8: QuantConfig = QuantConfig {
        b0: 8,
        ..QuantConfig::NF4
    };

    pub fn new(b0: u8, b1: u8, b2: FloatFormat, block_size: u32, group_size: u32) -> Result<Self> {
        let cfg = QuantConfig {
            b0,
            b1,
            b2,
            block_size,
            group_size,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if !SUPPORTED_BITS.contains(&self.b0) {
            return Err(Error::arg(format!("b0 = {} not in {{2,3,4,8}}", self.b0)));
        }
        if !SUPPORTED_BITS.contains(&self.b1) {
            return Err(Error::arg(format!("b1 = {} not in {{2,3,4,8}}", self.b1)));
        }
        if self.block_size == 0 || self.group_size == 0 {
            return Err(Error::arg("block and group sizes must be at least 1"));
        }
        Ok(())
    }

    /// Number of first-level blocks for `n` entries.
    pub fn num_blocks(&self, n: usize) -> usize {
        n.div_ceil(self.block_size as usize)
    }

    /// Number of second-level groups for `n` entries.
    pub fn num_groups(&self, n: usize) -> usize {
        self.num_blocks(n).div_ceil(self.group_size as usize)
    }
}

impl fmt::Display for QuantConfig {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{},{},{},{},{}",
            self.b0, self.b1, self.b2, self.block_size, self.group_size
        )
    }
}

impl FromStr for QuantConfig {
    type Err = Error;

    /// Parses `b0,b1,b2,B0,B1`, e.g. `4,8,fp32,64,256`.
    fn from_str(s: &str) -> Result<Self> {
        let parts: Vec<&str> = s.split(',').map(str::trim).collect();
        if parts.len() != 5 {
            return Err(Error::arg(format!(
                "config {s:?} must have the form b0,b1,b2,B0,B1"
            )));
        }
        let int = |p: &str, name: &str| -> Result<u32> {
            p.parse::<u32>()
                .map_err(|_| Error::arg(format!("config {s:?}: bad {name} {p:?}")))
        };
        let b0 = int(parts[0], "b0")?;
        let b1 = int(parts[1], "b1")?;
        let narrow = |v: u32, name: &str| {
            u8::try_from(v).map_err(|_| Error::arg(format!("config {s:?}: {name} too large")))
        };
        QuantConfig::new(
            narrow(b0, "b0")?,
            narrow(b1, "b1")?,
            parts[2].parse()?,
            int(parts[3], "B0")?,
            int(parts[4], "B1")?,
        )
    }
}
