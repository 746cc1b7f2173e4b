//! Deterministic file emission: RFC-4180 CSV (CRLF records, 17 significant
//! digits), pretty JSON, and the run manifest with per-file content digests.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;
use sha2::{Digest, Sha256};

use optomech::model::{AlphaConvention, SystemParams};
use optomech::selectivity::SelectivityReport;

use crate::CliError;

/// Formats a float with 17 significant digits, locale-independent.
pub fn fmt_f64(x: f64) -> String {
    format!("{x:.16e}")
}

#[derive(Debug, Serialize)]
pub struct FileEntry {
    pub path: String,
    pub sha256: String,
    pub bytes: usize,
}

/// Tracks files written for one scenario so that a failure can remove the
/// partial outputs, and so the manifest can list every file with its digest.
pub struct OutputTracker {
    dir: PathBuf,
    pub files: Vec<FileEntry>,
}

impl OutputTracker {
    pub fn new(dir: &Path) -> Result<Self, CliError> {
        fs::create_dir_all(dir)?;
        Ok(Self {
            dir: dir.to_path_buf(),
            files: Vec::new(),
        })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn write(&mut self, name: &str, bytes: &[u8]) -> Result<(), CliError> {
        let path = self.dir.join(name);
        fs::write(&path, bytes)?;
        let digest = Sha256::digest(bytes);
        let hex: String = digest.iter().map(|b| format!("{b:02x}")).collect();
        self.files.push(FileEntry {
            path: name.to_string(),
            sha256: hex,
            bytes: bytes.len(),
        });
        Ok(())
    }

    pub fn write_json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<(), CliError> {
        let mut bytes = serde_json::to_vec_pretty(value)
            .map_err(|e| CliError::Numerical(format!("serialization failed: {e}")))?;
        bytes.push(b'\n');
        self.write(name, &bytes)
    }

    /// Removes everything written so far (failure cleanup).
    pub fn remove_partial(&mut self) {
        for entry in self.files.drain(..) {
            let _ = fs::remove_file(self.dir.join(&entry.path));
        }
    }
}

/// RFC-4180 record assembly: comma-separated fields, CRLF terminators.
pub struct Csv {
    buf: Vec<u8>,
}

impl Csv {
    pub fn new(header: &[&str]) -> Self {
        let mut csv = Self { buf: Vec::new() };
        csv.row(header.iter().map(|s| s.to_string()));
        csv
    }

    pub fn row(&mut self, fields: impl IntoIterator<Item = String>) {
        let mut first = true;
        for field in fields {
            if !first {
                self.buf.push(b',');
            }
            first = false;
            // numeric payloads never need quoting; sanitize just in case
            let clean = field.replace([',', '\r', '\n'], ";");
            self.buf.extend_from_slice(clean.as_bytes());
        }
        self.buf.extend_from_slice(b"\r\n");
    }

    pub fn into_bytes(self) -> Vec<u8> {
        self.buf
    }
}

/// Per-convention scalar metrics of the stationary state.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct ConventionMetrics {
    pub alpha_j: f64,
    pub big_gamma_j: f64,
    pub eps_j: f64,
    pub omega_j: f64,
    pub nbar: f64,
    pub g2: f64,
    pub delta_fock: f64,
    pub delta_hs: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct MetricsFile {
    pub target_j: usize,
    pub delta_a: f64,
    pub eta: f64,
    pub alpha_convention_active: AlphaConvention,
    pub derived: ConventionMetrics,
    pub literal: ConventionMetrics,
}

#[derive(Debug, Serialize)]
pub struct ReferenceEntry {
    pub reference: f64,
    pub derived: f64,
    pub literal: f64,
    pub best_abs_deviation: f64,
    pub within_tolerance: bool,
}

/// Comparison against the tabulated benchmark values for the four standard
/// operating points, recorded whenever a scenario matches one.
#[derive(Debug, Serialize)]
pub struct ReferenceComparison {
    pub eta: f64,
    pub target_j: usize,
    pub reference_delta_a: f64,
    pub delta_a_used: f64,
    pub tolerance: f64,
    pub g2: ReferenceEntry,
    pub delta_fock: ReferenceEntry,
}

#[derive(Debug, Serialize)]
pub struct ToolInfo {
    pub name: &'static str,
    pub version: &'static str,
}

#[derive(Debug, Serialize)]
pub struct ScenarioEcho {
    pub params: SystemParams,
    pub eta: f64,
    pub target_j: usize,
    pub detuning_mode: crate::config::DetuningMode,
    pub kappa_a_defaulted: bool,
}

#[derive(Debug, Serialize)]
pub struct ResolvedValues {
    pub delta_a: f64,
    pub alpha_j_derived: f64,
    pub alpha_j_literal: f64,
}

#[derive(Debug, Serialize)]
pub struct RunManifest {
    pub tool: ToolInfo,
    pub scenario: ScenarioEcho,
    pub resolved: ResolvedValues,
    pub condition_audit: Option<SelectivityReport>,
    pub reference_comparison: Option<ReferenceComparison>,
    pub notes: Vec<String>,
    pub files: Vec<FileEntry>,
    pub timings_ms: BTreeMap<String, u128>,
}
