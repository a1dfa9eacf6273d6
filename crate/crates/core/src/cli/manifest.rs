use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::{Error, Result};

/// Record of one command run, written next to its outputs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    pub version: String,
    pub inputs: Vec<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub config: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub grid: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub rank: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub budget: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    /// Remaining command-specific options.
    pub options: Value,
    pub outputs: Vec<String>,
    pub wall_seconds: f64,
}

pub(crate) struct ManifestBuilder {
    manifest: RunManifest,
    started: Instant,
}

fn path_string(p: &Path) -> String {
    p.display().to_string()
}

impl ManifestBuilder {
    pub fn new(command: &str) -> Self {
        Self {
            manifest: RunManifest {
                command: command.to_string(),
                version: env!("CARGO_PKG_VERSION").to_string(),
                inputs: Vec::new(),
                config: None,
                grid: None,
                rank: None,
                budget: None,
                seed: None,
                options: Value::Object(Default::default()),
                outputs: Vec::new(),
                wall_seconds: 0.0,
            },
            started: Instant::now(),
        }
    }

    pub fn inputs<'a>(mut self, paths: impl IntoIterator<Item = &'a PathBuf>) -> Self {
        self.manifest.inputs.extend(paths.into_iter().map(|p| path_string(p)));
        self
    }

    pub fn config(mut self, c: impl ToString) -> Self {
        self.manifest.config = Some(c.to_string());
        self
    }

    pub fn grid(mut self, g: &str) -> Self {
        self.manifest.grid = Some(g.to_string());
        self
    }

    pub fn rank(mut self, r: usize) -> Self {
        self.manifest.rank = Some(r);
        self
    }

    pub fn budget(mut self, b: f64) -> Self {
        self.manifest.budget = Some(b);
        self
    }

    pub fn seed(mut self, s: u64) -> Self {
        self.manifest.seed = Some(s);
        self
    }

    pub fn option(mut self, key: &str, value: impl Serialize) -> Self {
        let v = serde_json::to_value(value).expect("serializable option");
        if let Value::Object(map) = &mut self.manifest.options {
            map.insert(key.to_string(), v);
        }
        self
    }

    pub fn output(&mut self, p: &Path) {
        self.manifest.outputs.push(path_string(p));
    }

    /// Writes the manifest to `path` and returns it.
    pub fn finish(mut self, path: &Path) -> Result<RunManifest> {
        self.manifest.wall_seconds = self.started.elapsed().as_secs_f64();
        write_json(path, &self.manifest)?;
        Ok(self.manifest)
    }
}

/// `<file>.manifest.json` for single-file outputs.
pub(crate) fn sidecar(out: &Path) -> PathBuf {
    let mut name = out.as_os_str().to_owned();
    name.push(".manifest.json");
    PathBuf::from(name)
}

pub(crate) fn write_json(path: &Path, value: &impl Serialize) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}
