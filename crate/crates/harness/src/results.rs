//! Results tables and artifact emission.
//!
//! A table is rows of (principal, train spec, K) against columns of test
//! specs; each cell is a mean with its standard error over evaluation
//! seeds. Emission is deterministic: per-cell files named
//! `<experiment>/<principal>/<train_spec>__<test_spec>.csv`, a combined
//! CSV/JSON pair, and a manifest (written last) listing every artifact
//! together with the config hash.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use steer_core::error::{Error, Result};

pub const RESULTS_CSV_HEADER: &str = "experiment,principal,train_spec,k,test_spec,mean,se,n_seeds";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultsCell {
    pub test_spec: String,
    pub mean: f64,
    pub se: f64,
    pub n_seeds: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultsRow {
    pub principal: String,
    pub train_spec: String,
    pub k: usize,
    pub cells: Vec<ResultsCell>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultsTable {
    pub experiment: String,
    pub rows: Vec<ResultsRow>,
}

impl ResultsTable {
    pub fn new(experiment: impl Into<String>) -> Self {
        ResultsTable { experiment: experiment.into(), rows: Vec::new() }
    }

    pub fn cell(&self, principal: &str, k: usize, test_spec: &str) -> Option<&ResultsCell> {
        self.rows
            .iter()
            .find(|r| r.principal == principal && r.k == k)
            .and_then(|r| r.cells.iter().find(|c| c.test_spec == test_spec))
    }

    /// Flat CSV, one line per cell. Floats use shortest round-trip
    /// formatting, so parsing the output reproduces the table bitwise.
    pub fn to_csv(&self) -> String {
        let mut out = String::from(RESULTS_CSV_HEADER);
        out.push('\n');
        for row in &self.rows {
            for cell in &row.cells {
                out.push_str(&format!(
                    "{},{},{},{},{},{},{},{}\n",
                    self.experiment,
                    row.principal,
                    row.train_spec,
                    row.k,
                    cell.test_spec,
                    cell.mean,
                    cell.se,
                    cell.n_seeds
                ));
            }
        }
        out
    }

    pub fn from_csv(text: &str) -> Result<Self> {
        let mut lines = text.lines();
        match lines.next() {
            Some(RESULTS_CSV_HEADER) => {}
            other => {
                return Err(Error::Serde(format!(
                    "bad results header: {:?}",
                    other.unwrap_or_default()
                )))
            }
        }
        let mut table: Option<ResultsTable> = None;
        for line in lines {
            if line.is_empty() {
                continue;
            }
            let fields: Vec<&str> = line.split(',').collect();
            if fields.len() != 8 {
                return Err(Error::Serde(format!("expected 8 fields, got {line:?}")));
            }
            let parse = |i: usize| -> Result<f64> {
                fields[i]
                    .parse::<f64>()
                    .map_err(|e| Error::Serde(format!("bad float {:?}: {e}", fields[i])))
            };
            let k: usize = fields[3]
                .parse()
                .map_err(|e| Error::Serde(format!("bad k {:?}: {e}", fields[3])))?;
            let n_seeds: usize = fields[7]
                .parse()
                .map_err(|e| Error::Serde(format!("bad n_seeds {:?}: {e}", fields[7])))?;
            let cell = ResultsCell {
                test_spec: fields[4].to_string(),
                mean: parse(5)?,
                se: parse(6)?,
                n_seeds,
            };
            let table = table.get_or_insert_with(|| ResultsTable::new(fields[0]));
            if table.experiment != fields[0] {
                return Err(Error::Serde("mixed experiments in one table".to_string()));
            }
            let same_row = table
                .rows
                .last()
                .is_some_and(|r| r.principal == fields[1] && r.train_spec == fields[2] && r.k == k);
            if same_row {
                table.rows.last_mut().unwrap().cells.push(cell);
            } else {
                table.rows.push(ResultsRow {
                    principal: fields[1].to_string(),
                    train_spec: fields[2].to_string(),
                    k,
                    cells: vec![cell],
                });
            }
        }
        table.ok_or_else(|| Error::Serde("empty results table".to_string()))
    }

    /// Hex SHA-256 of the CSV rendering. Equal checksums imply identical
    /// cell values, row order, and labels.
    pub fn checksum(&self) -> String {
        sha256_hex(self.to_csv().as_bytes())
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    let mut hasher = Sha256::new();
    hasher.update(bytes);
    hasher.finalize().iter().map(|b| format!("{b:02x}")).collect()
}

/// One file to emit, named relative to the experiment directory.
#[derive(Debug, Clone, PartialEq)]
pub struct Artifact {
    pub rel_path: String,
    pub content: String,
}

impl Artifact {
    pub fn new(rel_path: impl Into<String>, content: impl Into<String>) -> Self {
        Artifact { rel_path: rel_path.into(), content: content.into() }
    }

    /// The contractual cell-file name for a grid cell.
    pub fn cell_path(principal: &str, train_spec: &str, test_spec: &str) -> String {
        format!("{principal}/{train_spec}__{test_spec}.csv")
    }
}

/// Artifact listing written alongside the results; paths are relative to
/// the manifest's own directory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub experiment: String,
    pub config_hash: String,
    /// Checksum of the combined results CSV; absent for an empty table.
    pub results_checksum: Option<String>,
    pub artifacts: Vec<String>,
}

/// Write the table (unless empty), every artifact, and finally the
/// manifest. Returns the manifest and the experiment directory.
pub fn emit_results(
    out_root: &Path,
    table: &ResultsTable,
    config_hash: &str,
    artifacts: &[Artifact],
) -> Result<(Manifest, PathBuf)> {
    let dir = out_root.join(&table.experiment);
    fs::create_dir_all(&dir).map_err(|e| Error::io(dir.display().to_string(), e))?;

    let mut listed = Vec::new();
    let mut results_checksum = None;
    if !table.rows.is_empty() {
        let csv = table.to_csv();
        results_checksum = Some(sha256_hex(csv.as_bytes()));
        write_file(&dir.join("results.csv"), &csv)?;
        let json = serde_json::to_string_pretty(table).map_err(|e| Error::Serde(e.to_string()))?;
        write_file(&dir.join("results.json"), &json)?;
        listed.push("results.csv".to_string());
        listed.push("results.json".to_string());
        for artifact in artifacts {
            write_file(&dir.join(&artifact.rel_path), &artifact.content)?;
            listed.push(artifact.rel_path.clone());
        }
    }

    let manifest = Manifest {
        experiment: table.experiment.clone(),
        config_hash: config_hash.to_string(),
        results_checksum,
        artifacts: listed,
    };
    let json = serde_json::to_string_pretty(&manifest).map_err(|e| Error::Serde(e.to_string()))?;
    write_file(&dir.join("manifest.json"), &json)?;
    Ok((manifest, dir))
}

pub fn write_file(path: &Path, content: &str) -> Result<()> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent).map_err(|e| Error::io(parent.display().to_string(), e))?;
    }
    fs::write(path, content).map_err(|e| Error::io(path.display().to_string(), e))
}

pub fn read_file(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::io(path.display().to_string(), e))
}
