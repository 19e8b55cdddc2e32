//! `head.json`: describes a head by reference to weight files or to an
//! adapter command. Relative paths resolve against the file's directory.
//!
//! ```json
//! {"type": "affine", "W": "W.npy", "b": "b.npy", "target": 0}
//! {"type": "stack", "layers": [{"W": "W1.npy", "b": "b1.npy"}, ...], "target": 0}
//! {"type": "external", "cmd": ["python", "adapter.py"], "target": 0}
//! ```

use std::path::{Path, PathBuf};
use std::time::Duration;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::head::{AffineLayer, Head};
use crate::io::npy::{read_matrix, read_vector};
use crate::io::protocol::{ExternalHead, HeadSession, DEFAULT_BATCH_SIZE, DEFAULT_TIMEOUT};
use crate::io::read_json;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LayerSpec {
    #[serde(rename = "W")]
    pub weights: PathBuf,
    pub b: PathBuf,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase")]
pub enum HeadSpec {
    Affine {
        #[serde(flatten)]
        layer: LayerSpec,
        target: usize,
    },
    Stack {
        layers: Vec<LayerSpec>,
        target: usize,
    },
    External {
        cmd: Vec<String>,
        target: usize,
        #[serde(default, rename = "batch-size")]
        batch_size: Option<usize>,
        #[serde(default, rename = "timeout-secs")]
        timeout_secs: Option<f64>,
    },
}

impl HeadSpec {
    pub fn target(&self) -> usize {
        match self {
            Self::Affine { target, .. } | Self::Stack { target, .. } | Self::External { target, .. } => *target,
        }
    }
}

fn resolve(base: &Path, p: &Path) -> PathBuf {
    if p.is_absolute() {
        p.to_path_buf()
    } else {
        base.join(p)
    }
}

fn load_layer(base: &Path, spec: &LayerSpec) -> Result<AffineLayer<f64>> {
    AffineLayer::new(
        read_matrix(resolve(base, &spec.weights))?,
        read_vector(resolve(base, &spec.b))?,
    )
}

/// Builds the head described by `spec`. `base` anchors relative paths;
/// `expected_dim` is checked against an adapter's handshake.
pub fn build_head(spec: &HeadSpec, base: &Path, expected_dim: Option<usize>) -> Result<Head<f64>> {
    match spec {
        HeadSpec::Affine { layer, target } => Head::affine(load_layer(base, layer)?, *target),
        HeadSpec::Stack { layers, target } => Head::stack(
            layers.iter().map(|l| load_layer(base, l)).collect::<Result<_>>()?,
            *target,
        ),
        HeadSpec::External {
            cmd,
            target,
            batch_size,
            timeout_secs,
        } => {
            let mut command = cmd.clone();
            // a relative program path (one with a separator) is relative to head.json
            if let Some(program) = command.first_mut() {
                let path = Path::new(program.as_str());
                if path.is_relative() && path.components().count() > 1 {
                    *program = base.join(path).to_string_lossy().into_owned();
                }
            }
            let timeout = match timeout_secs {
                Some(s) if s.is_finite() && *s > 0.0 => Duration::from_secs_f64(*s),
                Some(s) => return Err(Error::invalid(format!("timeout-secs must be positive, got {s}"))),
                None => DEFAULT_TIMEOUT,
            };
            let session = HeadSession::spawn(&command, expected_dim, timeout)?;
            Head::external(ExternalHead::new(session, batch_size.unwrap_or(DEFAULT_BATCH_SIZE)), *target)
        }
    }
}

/// Reads `head.json` at `path` and builds the head.
pub fn load_head(path: impl AsRef<Path>, expected_dim: Option<usize>) -> Result<Head<f64>> {
    let path = path.as_ref();
    let spec: HeadSpec = read_json(path)?;
    let base = path.parent().unwrap_or_else(|| Path::new("."));
    build_head(&spec, base, expected_dim)
}
