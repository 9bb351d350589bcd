//! Shared certificate schema. Every pipeline emits the same JSON shape:
//! a `certificate` object whose bytes are deterministic given config and
//! seed, plus a `metadata` sibling (timestamp, tool version) excluded from
//! determinism comparisons. Reals are decimal strings with 30 significant
//! digits so the file diffs cleanly and parses losslessly back to f64.

use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CertificateError {
    #[error("certificate i/o failed: {0}")]
    Io(#[from] std::io::Error),
    #[error("certificate is not valid JSON: {0}")]
    Json(#[from] serde_json::Error),
    #[error("recorded field {field} does not recompute: recorded {recorded}, got {recomputed}")]
    Mismatch {
        field: String,
        recorded: String,
        recomputed: String,
    },
}

/// 30 significant digits; round-trips any f64 exactly.
pub fn dec(x: f64) -> String {
    format!("{:.29e}", x)
}

pub fn parse_dec(s: &str) -> Option<f64> {
    s.parse().ok()
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AnalyticBlock {
    pub entropy: String,
    pub hd: String,
    pub lip: String,
    pub product: String,
    pub bound: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub eta: Option<String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub gammas: Vec<String>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FitBlock {
    pub scales: Vec<String>,
    pub counts: Vec<usize>,
    pub slope: String,
    pub residual: String,
    /// box-counting upper-bounds Hausdorff dimension; evidence, not proof
    pub kind: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EmpiricalBlock {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lip: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub skew: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub boxdim: Option<FitBlock>,
    pub samples: usize,
    pub pairs: usize,
    pub seed: u64,
    /// named consistency checks, all of which feed the verdict
    pub checks: Vec<(String, bool)>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Certificate {
    /// system description with all defaults materialized
    pub system: Value,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub char_poly: Option<Vec<String>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub spectrum: Option<Vec<SpectrumEntry>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub blocks: Option<Vec<BlockEntry>>,
    pub analytic: AnalyticBlock,
    pub empirical: EmpiricalBlock,
    pub epsilon: String,
    pub seed: u64,
    pub verdict: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SpectrumEntry {
    pub re: String,
    pub im: String,
    pub modulus: String,
    pub multiplicity: usize,
    pub class: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BlockEntry {
    pub real: bool,
    pub re: String,
    pub im: String,
    pub modulus: String,
    pub size: usize,
    pub class: String,
    pub gamma: String,
    pub lip: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Metadata {
    pub timestamp: String,
    pub tool_version: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CertificateFile {
    pub certificate: Certificate,
    pub metadata: Metadata,
}

impl CertificateFile {
    pub fn new(certificate: Certificate) -> Self {
        let timestamp = std::time::SystemTime::now()
            .duration_since(std::time::UNIX_EPOCH)
            .map(|d| d.as_secs().to_string())
            .unwrap_or_default();
        CertificateFile {
            certificate,
            metadata: Metadata {
                timestamp,
                tool_version: env!("CARGO_PKG_VERSION").to_string(),
            },
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("certificate serializes")
    }

    /// The determinism-relevant bytes: the certificate object alone.
    pub fn certificate_json(&self) -> String {
        serde_json::to_string_pretty(&self.certificate).expect("certificate serializes")
    }

    pub fn from_json(s: &str) -> Result<Self, CertificateError> {
        Ok(serde_json::from_str(s)?)
    }

    pub fn write(&self, path: &std::path::Path) -> Result<(), CertificateError> {
        std::fs::write(path, self.to_json())?;
        Ok(())
    }

    pub fn read(path: &std::path::Path) -> Result<Self, CertificateError> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }
}

/// Compare a recorded decimal field against a recomputed value.
pub fn check_field(field: &str, recorded: &str, recomputed: f64, tol: f64) -> Result<(), CertificateError> {
    let rec = parse_dec(recorded).ok_or_else(|| CertificateError::Mismatch {
        field: field.to_string(),
        recorded: recorded.to_string(),
        recomputed: dec(recomputed),
    })?;
    if (rec - recomputed).abs() > tol * rec.abs().max(1.0) {
        return Err(CertificateError::Mismatch {
            field: field.to_string(),
            recorded: recorded.to_string(),
            recomputed: dec(recomputed),
        });
    }
    Ok(())
}
