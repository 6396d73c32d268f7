//! JSON artifacts: provenance block, model files, sidecars for CSV outputs.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use super::io::{read_bytes, sha256_hex, write_bytes};
use super::CliError;
use crate::penalty::{GroupStructure, PenaltyFamily};
use crate::solver::FittedModel;
use crate::survival::BaselineHazardTable;

pub const TOOL: &str = "excox";
pub const VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InputDigest {
    pub role: String,
    pub path: String,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub tool: String,
    pub version: String,
    pub command: String,
    pub seed: Option<u64>,
    pub config: Value,
    pub inputs: Vec<InputDigest>,
}

impl Provenance {
    pub fn new(command: &str, seed: Option<u64>, config: Value) -> Self {
        Self {
            tool: TOOL.into(),
            version: VERSION.into(),
            command: command.into(),
            seed,
            config,
            inputs: Vec::new(),
        }
    }

    /// Records the digest of a file already read as `bytes`.
    pub fn add_input(&mut self, role: &str, path: &Path, bytes: &[u8]) {
        self.inputs.push(InputDigest {
            role: role.into(),
            path: path.display().to_string(),
            sha256: sha256_hex(bytes),
        });
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelArtifact {
    pub family: PenaltyFamily,
    pub lambda: f64,
    pub alpha: f64,
    pub group_factors: Vec<f64>,
    /// Variable name to coefficient, in data column order.
    pub coefficients: Map<String, Value>,
    /// Variable name to group label, in data column order.
    pub groups: Map<String, Value>,
    pub converged: bool,
    pub sweeps_used: usize,
    pub final_change: f64,
    pub objective_trace: Vec<f64>,
    pub baseline_hazard: BaselineHazardTable,
    pub provenance: Provenance,
}

impl ModelArtifact {
    pub fn new(model: &FittedModel, names: &[String], groups: &GroupStructure, provenance: Provenance) -> Self {
        let coefficients = names
            .iter()
            .zip(&model.beta)
            .map(|(n, &b)| (n.clone(), Value::from(b)))
            .collect();
        let group_map = names
            .iter()
            .enumerate()
            .map(|(j, n)| (n.clone(), Value::from(groups.names()[groups.group_of(j)].clone())))
            .collect();
        Self {
            family: model.spec.family,
            lambda: model.spec.lambda,
            alpha: model.spec.alpha,
            group_factors: model.spec.group_factors.clone(),
            coefficients,
            groups: group_map,
            converged: model.converged,
            sweeps_used: model.sweeps_used,
            final_change: model.final_change,
            objective_trace: model.objective_trace.clone(),
            baseline_hazard: model.baseline.clone(),
            provenance,
        }
    }

    /// Variable names and coefficients in stored order.
    pub fn coefficient_vector(&self) -> Result<(Vec<String>, Vec<f64>), CliError> {
        let mut names = Vec::with_capacity(self.coefficients.len());
        let mut beta = Vec::with_capacity(self.coefficients.len());
        for (k, v) in &self.coefficients {
            let b = v
                .as_f64()
                .ok_or_else(|| CliError::Schema(format!("coefficient of `{k}` is not a number")))?;
            names.push(k.clone());
            beta.push(b);
        }
        Ok((names, beta))
    }
}

/// Writes pretty JSON and reads it back to confirm it parses.
pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), CliError> {
    let mut bytes = serde_json::to_vec_pretty(value).map_err(|e| CliError::Io(e.to_string()))?;
    bytes.push(b'\n');
    write_bytes(path, &bytes)?;
    let back = read_bytes(path)?;
    serde_json::from_slice::<Value>(&back)
        .map_err(|e| CliError::Io(format!("{} did not validate: {e}", path.display())))?;
    Ok(())
}

/// Path of the provenance sidecar of a CSV artifact.
pub fn meta_path(path: &Path) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".meta.json");
    PathBuf::from(s)
}

/// Writes a CSV artifact, checks it parses with the expected row count,
/// then writes its provenance sidecar.
pub fn write_csv_artifact(
    path: &Path,
    bytes: &[u8],
    expected_rows: usize,
    provenance: &Provenance,
) -> Result<(), CliError> {
    write_bytes(path, bytes)?;
    let back = read_bytes(path)?;
    let mut reader = csv::Reader::from_reader(back.as_slice());
    let mut rows = 0;
    for record in reader.records() {
        record.map_err(|e| CliError::Io(format!("{} did not validate: {e}", path.display())))?;
        rows += 1;
    }
    if rows != expected_rows {
        return Err(CliError::Io(format!(
            "{} has {rows} rows, expected {expected_rows}",
            path.display()
        )));
    }
    write_json(&meta_path(path), provenance)
}
