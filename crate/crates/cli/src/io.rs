//! Files written by a run: profile CSVs with JSON sidecars, curve CSVs,
//! binary lattice snapshots and the run summary.

use std::fs;
use std::io::{BufRead, BufReader, Read, Write};
use std::path::{Path, PathBuf};

use logkdv_core::harness::{Curve, ExperimentReport};
use logkdv_core::lattice::LatticeState;
use logkdv_core::{Parity, SpectralGrid, VariableTag, WaveProfile};
use serde::{Deserialize, Serialize};

use crate::config::{Command, RunConfig};
use crate::CliError;

/// Grid metadata stored next to a profile CSV.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProfileMeta {
    pub n_points: usize,
    pub half_width: f64,
    pub variable_tag: VariableTag,
    pub parity: Parity,
}

fn io_err(path: &Path, e: impl std::fmt::Display) -> CliError {
    CliError::Io(format!("{}: {e}", path.display()))
}

fn data_err(path: &Path, e: impl std::fmt::Display) -> CliError {
    CliError::Validation(format!("{}: {e}", path.display()))
}

pub fn sidecar_path(csv: &Path) -> PathBuf {
    csv.with_extension("json")
}

pub fn write_text(path: &Path, text: &str) -> Result<(), CliError> {
    fs::write(path, text).map_err(|e| io_err(path, e))
}

/// `position,value` CSV plus a JSON sidecar with the grid.
pub fn write_profile(path: &Path, profile: &WaveProfile) -> Result<(), CliError> {
    let mut c = Curve::new("profile", &["position", "value"]);
    for (j, &v) in profile.values.iter().enumerate() {
        c.push(vec![profile.grid.node(j), v]);
    }
    write_text(path, &c.to_csv())?;
    let meta = ProfileMeta {
        n_points: profile.grid.n_points(),
        half_width: profile.grid.half_width(),
        variable_tag: profile.tag,
        parity: profile.parity,
    };
    write_text(&sidecar_path(path), &(serde_json::to_string_pretty(&meta).expect("metadata serializes") + "\n"))
}

pub fn read_profile(path: &Path) -> Result<WaveProfile, CliError> {
    let side = sidecar_path(path);
    let meta: ProfileMeta = serde_json::from_str(&fs::read_to_string(&side).map_err(|e| io_err(&side, e))?)
        .map_err(|e| data_err(&side, e))?;
    let grid = SpectralGrid::new(meta.n_points, meta.half_width).map_err(|e| data_err(&side, e))?;
    let mut reader = csv::Reader::from_path(path).map_err(|e| io_err(path, e))?;
    let header = reader.headers().map_err(|e| data_err(path, e))?.clone();
    if header.iter().collect::<Vec<_>>() != ["position", "value"] {
        return Err(data_err(path, "expected header position,value"));
    }
    let mut values = Vec::with_capacity(meta.n_points);
    let tol = 1e-12 * meta.half_width;
    for (j, rec) in reader.records().enumerate() {
        let rec = rec.map_err(|e| data_err(path, e))?;
        let parse = |i: usize| -> Result<f64, CliError> {
            rec.get(i).unwrap_or("").parse::<f64>().map_err(|e| data_err(path, format!("row {}: {e}", j + 2)))
        };
        let (x, v) = (parse(0)?, parse(1)?);
        if j >= meta.n_points || (x - grid.node(j)).abs() > tol {
            return Err(data_err(path, format!("row {} does not match the grid in the sidecar", j + 2)));
        }
        values.push(v);
    }
    if values.len() != meta.n_points {
        return Err(data_err(path, format!("expected {} rows, found {}", meta.n_points, values.len())));
    }
    WaveProfile::new(grid, values, meta.variable_tag, meta.parity).map_err(|e| data_err(path, e))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct SnapshotHeader {
    format: String,
    n_sites: usize,
    t: f64,
    arrays: Vec<String>,
}

const SNAPSHOT_FORMAT: &str = "f64-le";

/// One JSON header line, then `w` and `p` as little-endian f64.
pub fn write_snapshot(path: &Path, state: &LatticeState) -> Result<(), CliError> {
    let header = SnapshotHeader {
        format: SNAPSHOT_FORMAT.into(),
        n_sites: state.n_sites(),
        t: state.t,
        arrays: vec!["w".into(), "p".into()],
    };
    let mut bytes = serde_json::to_vec(&header).expect("header serializes");
    bytes.push(b'\n');
    for x in state.w.iter().chain(&state.p) {
        bytes.extend_from_slice(&x.to_le_bytes());
    }
    let mut f = fs::File::create(path).map_err(|e| io_err(path, e))?;
    f.write_all(&bytes).map_err(|e| io_err(path, e))
}

/// Snapshots of aborted runs hold the state at the guard violation, so the
/// strain is not checked against the domain here.
pub fn read_snapshot(path: &Path) -> Result<LatticeState, CliError> {
    let mut reader = BufReader::new(fs::File::open(path).map_err(|e| io_err(path, e))?);
    let mut line = String::new();
    reader.read_line(&mut line).map_err(|e| io_err(path, e))?;
    let header: SnapshotHeader = serde_json::from_str(line.trim_end()).map_err(|e| data_err(path, e))?;
    if header.format != SNAPSHOT_FORMAT || header.arrays != ["w", "p"] || header.n_sites < 2 {
        return Err(data_err(path, "unsupported snapshot layout"));
    }
    let mut raw = Vec::new();
    reader.read_to_end(&mut raw).map_err(|e| io_err(path, e))?;
    if raw.len() != 16 * header.n_sites {
        return Err(data_err(path, format!("expected {} bytes of data, found {}", 16 * header.n_sites, raw.len())));
    }
    let floats: Vec<f64> = raw.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes"))).collect();
    let (w, p) = floats.split_at(header.n_sites);
    Ok(LatticeState { w: w.to_vec(), p: p.to_vec(), t: header.t })
}

/// Contents of `summary.json`. Contains no timestamps, so identical
/// configurations give identical bytes.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Summary {
    pub command: Command,
    pub config_hash: String,
    pub config: RunConfig,
    pub passed: bool,
    pub aborted: bool,
    pub reports: Vec<ExperimentReport>,
}

pub const SUMMARY_FILE: &str = "summary.json";
pub const ABORTED_FILE: &str = "ABORTED";

pub fn write_summary(dir: &Path, summary: &Summary) -> Result<(), CliError> {
    let text = serde_json::to_string_pretty(summary).expect("summary serializes") + "\n";
    write_text(&dir.join(SUMMARY_FILE), &text)
}

pub fn read_summary(dir: &Path) -> Result<Summary, CliError> {
    let path = dir.join(SUMMARY_FILE);
    let text = fs::read_to_string(&path).map_err(|e| io_err(&path, e))?;
    serde_json::from_str(&text).map_err(|e| data_err(&path, e))
}
