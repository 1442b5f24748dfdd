//! Run configuration: the JSON layout every subcommand consumes, semantic
//! validation with field-level diagnostics, and the content hash embedded in
//! every report.  `docs/config.schema.json` publishes the same layout as a
//! JSON Schema.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use glpin_core::domain::DomainSpec;
use glpin_core::london::GaussianWell;
use glpin_core::pinning::PinningSpec;

use crate::error::CliError;

/// One run: geometry, resolution, pinning medium, and the applied field
/// (single value or sweep range).
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub domain: DomainSpec,
    /// Nodes along the longer side of the bounding box.
    pub resolution: usize,
    pub pinning: PinningSpec,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub h_ex: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sweep: Option<SweepSpec>,
    #[serde(default)]
    pub seeds: Seeds,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output_dir: Option<PathBuf>,
    /// Replace the computed London potential by superposed Gaussian wells;
    /// for exercising multi-well logic on single-well domains.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub synthetic_xi0: Option<Vec<GaussianWell>>,
}

/// Inclusive applied-field range `from..=to` sampled at `steps` points.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSpec {
    pub from: f64,
    pub to: f64,
    pub steps: usize,
}

impl SweepSpec {
    /// The sampled field values, evenly spaced and increasing.
    #[must_use]
    pub fn values(&self) -> Vec<f64> {
        if self.steps <= 1 {
            return vec![self.from];
        }
        (0..self.steps)
            .map(|i| {
                self.from + (self.to - self.from) * i as f64 / (self.steps - 1) as f64
            })
            .collect()
    }
}

/// Named RNG seeds; every randomized step draws from exactly one of these,
/// so identical configs reproduce identical artifacts.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Seeds {
    /// Multistart seed for mesoscopic cluster minimizations.
    #[serde(default = "default_meso_seed")]
    pub meso: u64,
}

fn default_meso_seed() -> u64 {
    0x5EED
}

impl Default for Seeds {
    fn default() -> Self {
        Seeds { meso: default_meso_seed() }
    }
}

/// A parsed config plus the hash of the bytes it came from.
pub struct LoadedConfig {
    pub config: RunConfig,
    pub sha256: String,
}

/// Reads, parses, and validates a config file.  Parse failures carry the
/// file, line, and column; semantic failures name the offending field.
pub fn load(path: &Path) -> Result<LoadedConfig, CliError> {
    let raw = std::fs::read(path)
        .map_err(|e| CliError::config(format!("{}: {e}", path.display())))?;
    let config: RunConfig = serde_json::from_slice(&raw).map_err(|e| {
        CliError::config(format!("{}:{}:{}: {e}", path.display(), e.line(), e.column()))
    })?;
    validate(&config).map_err(|msg| CliError::config(format!("{}: {msg}", path.display())))?;
    Ok(LoadedConfig { config, sha256: sha256_hex(&raw) })
}

fn validate(cfg: &RunConfig) -> Result<(), String> {
    cfg.domain
        .validate()
        .map_err(|e| format!("field `domain`: {e}"))?;
    if !(16..=4096).contains(&cfg.resolution) {
        return Err(format!(
            "field `resolution`: {} outside the supported range 16..=4096",
            cfg.resolution
        ));
    }
    cfg.pinning
        .validate()
        .map_err(|e| format!("field `pinning`: {e}"))?;
    if let Some(h) = cfg.h_ex {
        if !(h > 0.0 && h.is_finite()) {
            return Err(format!("field `h_ex`: {h} must be positive and finite"));
        }
    }
    if let Some(s) = &cfg.sweep {
        if !(s.from > 0.0 && s.from.is_finite()) {
            return Err(format!(
                "field `sweep.from`: {} must be positive and finite",
                s.from
            ));
        }
        if !(s.to >= s.from && s.to.is_finite()) {
            return Err(format!(
                "field `sweep.to`: {} must be finite and at least sweep.from",
                s.to
            ));
        }
        if s.steps == 0 {
            return Err("field `sweep.steps`: must be at least 1".into());
        }
    }
    if let Some(wells) = &cfg.synthetic_xi0 {
        if wells.is_empty() {
            return Err("field `synthetic_xi0`: needs at least one well".into());
        }
        for (i, w) in wells.iter().enumerate() {
            if !(w.depth > 0.0 && w.depth.is_finite()) {
                return Err(format!(
                    "field `synthetic_xi0[{i}].depth`: must be positive and finite"
                ));
            }
            if !(w.width > 0.0 && w.width.is_finite()) {
                return Err(format!(
                    "field `synthetic_xi0[{i}].width`: must be positive and finite"
                ));
            }
            if !(w.center.x.is_finite() && w.center.y.is_finite())
                || !cfg.domain.contains(w.center)
            {
                return Err(format!(
                    "field `synthetic_xi0[{i}].center`: must lie inside the domain"
                ));
            }
        }
    }
    Ok(())
}

/// Lowercase hex SHA-256 of a byte string.
#[must_use]
pub fn sha256_hex(bytes: &[u8]) -> String {
    use sha2::{Digest, Sha256};
    let digest = Sha256::digest(bytes);
    let mut s = String::with_capacity(64);
    for b in digest {
        let _ = write!(s, "{b:02x}");
    }
    s
}
