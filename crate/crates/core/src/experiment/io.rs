//! On-disk formats.
//!
//! Binary matrix files hold an 8-byte magic, `r` and `n` as little-endian
//! `u64`, then `r * n` little-endian `f64` in column-major order. Estimates
//! use magic `RFICAEST` with `n = n_k` and an `r x r` payload; observations use
//! `RFICAOBS` with an `r x n_k` payload.

use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::config::Axis;
use super::trial::{SweepResult, TrialResult};
use crate::local_solver::{EstimateStatus, LocalEstimate};
use crate::model_gen::{ClientDataset, ExperimentScenario, MixingMatrix, Scenario};
use crate::{Error, Matrix, Result};

pub const ESTIMATE_MAGIC: &[u8; 8] = b"RFICAEST";
pub const OBSERVATION_MAGIC: &[u8; 8] = b"RFICAOBS";

/// Column order of the trial CSV.
pub const TRIAL_HEADER: [&str; 16] = [
    "method",
    "K",
    "corrupt_fraction",
    "corrupt_n",
    "trial",
    "seed",
    "frob_error",
    "runtime_ms",
    "eps_total",
    "delta",
    "snr_ok",
    "lemma31_ok",
    "lemma33_ok",
    "lemma34_ok",
    "thm35_ok",
    "thm35_bound",
];

fn create(path: &Path) -> Result<BufWriter<File>> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    File::create(path).map(BufWriter::new).map_err(|e| Error::io(path, e))
}

fn csv_err(path: &Path, e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::io(path, io),
        other => Error::format(path, format!("{other:?}")),
    }
}

fn write_records<T: Serialize>(path: &Path, header: &[&str], rows: &[T]) -> Result<()> {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(create(path)?);
    w.write_record(header).map_err(|e| csv_err(path, e))?;
    for row in rows {
        w.serialize(row).map_err(|e| csv_err(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

fn read_records<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<Vec<T>> {
    let mut r = csv::Reader::from_path(path).map_err(|e| csv_err(path, e))?;
    r.deserialize().map(|rec| rec.map_err(|e| csv_err(path, e))).collect()
}

/// Writes trial rows under [`TRIAL_HEADER`]; an empty slice gives a
/// header-only file.
pub fn emit_csv(rows: &[TrialResult], path: &Path) -> Result<()> {
    write_records(path, &TRIAL_HEADER, rows)
}

pub fn read_csv(path: &Path) -> Result<Vec<TrialResult>> {
    read_records(path)
}

/// Writes one long-format `x,method,mean,stderr` file per panel, named
/// `plot_<axis>.csv` inside `dir`. Returns the written paths.
pub fn emit_plot_data(result: &SweepResult, dir: &Path) -> Result<Vec<PathBuf>> {
    result
        .panels
        .iter()
        .map(|(axis, points)| {
            let path = dir.join(plot_file_name(*axis));
            write_records(&path, &["x", "method", "mean", "stderr"], points)?;
            Ok(path)
        })
        .collect()
}

pub fn plot_file_name(axis: Axis) -> String {
    format!("plot_{}.csv", axis.name())
}

/// Writes `trials.csv`, `summary.csv`, the panel files and, when anything
/// failed, `failures.txt`.
pub fn write_sweep(result: &SweepResult, dir: &Path) -> Result<Vec<PathBuf>> {
    let trials = dir.join("trials.csv");
    emit_csv(&result.rows, &trials)?;
    let summary = dir.join("summary.csv");
    write_records(
        &summary,
        &["K", "corrupt_fraction", "corrupt_n", "method", "mean", "stderr", "trials", "failures"],
        &result.summaries,
    )?;
    let mut written = vec![trials, summary];
    written.extend(emit_plot_data(result, dir)?);
    let failures = dir.join("failures.txt");
    if result.has_failures() {
        let mut w = create(&failures)?;
        for line in &result.failures {
            writeln!(w, "{line}").map_err(|e| Error::io(&failures, e))?;
        }
        w.flush().map_err(|e| Error::io(&failures, e))?;
        written.push(failures);
    } else if failures.exists() {
        fs::remove_file(&failures).map_err(|e| Error::io(&failures, e))?;
    }
    Ok(written)
}

/// Writes a binary matrix file with the given magic.
pub fn write_matrix_bin(path: &Path, magic: &[u8; 8], m: &Matrix, n_header: usize) -> Result<()> {
    let mut w = create(path)?;
    let io = |e| Error::io(path, e);
    w.write_all(magic).map_err(io)?;
    w.write_all(&(m.nrows() as u64).to_le_bytes()).map_err(io)?;
    w.write_all(&(n_header as u64).to_le_bytes()).map_err(io)?;
    for x in m.as_slice() {
        w.write_all(&x.to_le_bytes()).map_err(io)?;
    }
    w.flush().map_err(io)
}

/// Reads a binary matrix file; returns `(matrix, n from header)`. The payload
/// has `ncols` columns, which is `r` for estimates and `n` for observations.
pub fn read_matrix_bin(path: &Path, magic: &[u8; 8]) -> Result<(Matrix, usize)> {
    let mut bytes = Vec::new();
    BufReader::new(File::open(path).map_err(|e| Error::io(path, e))?)
        .read_to_end(&mut bytes)
        .map_err(|e| Error::io(path, e))?;
    if bytes.len() < 24 || &bytes[..8] != magic {
        return Err(Error::format(
            path,
            format!("expected magic {:?}", String::from_utf8_lossy(magic)),
        ));
    }
    let word = |i: usize| u64::from_le_bytes(bytes[i..i + 8].try_into().expect("8 bytes")) as usize;
    let (r, n) = (word(8), word(16));
    let ncols = if magic == ESTIMATE_MAGIC { r } else { n };
    let payload = &bytes[24..];
    let expected = r.checked_mul(ncols).and_then(|c| c.checked_mul(8));
    if expected != Some(payload.len()) {
        return Err(Error::format(
            path,
            format!("header says {r} x {ncols} doubles, payload has {} bytes", payload.len()),
        ));
    }
    let data = payload
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
        .collect();
    Ok((Matrix::from_vec(r, ncols, data), n))
}

pub fn estimate_file_name(client_id: usize) -> String {
    format!("client_{client_id:04}.est")
}

pub fn observation_file_name(client_id: usize) -> String {
    format!("client_{client_id:04}.obs")
}

/// Writes a dense matrix as plain CSV rows at shortest round-trip precision.
pub fn write_matrix_csv(path: &Path, m: &Matrix) -> Result<()> {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(create(path)?);
    for row in m.row_iter() {
        w.write_record(row.iter().map(|x| x.to_string())).map_err(|e| csv_err(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn read_matrix_csv(path: &Path) -> Result<Matrix> {
    let mut r = csv::ReaderBuilder::new()
        .has_headers(false)
        .from_path(path)
        .map_err(|e| csv_err(path, e))?;
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for rec in r.records() {
        let rec = rec.map_err(|e| csv_err(path, e))?;
        let row = rec
            .iter()
            .map(|s| s.trim().parse::<f64>().map_err(|e| Error::format(path, e.to_string())))
            .collect::<Result<Vec<_>>>()?;
        rows.push(row);
    }
    let ncols = rows.first().map_or(0, Vec::len);
    if rows.is_empty() || rows.iter().any(|r| r.len() != ncols) {
        return Err(Error::format(path, "empty or ragged matrix"));
    }
    Ok(Matrix::from_fn(rows.len(), ncols, |i, j| rows[i][j]))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct ClientEntry {
    client_id: usize,
    n_k: usize,
    corrupted: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct EstimateEntry {
    client_id: usize,
    n_k: usize,
    converged: bool,
    iters_used: usize,
    failure: Option<String>,
}

/// Scenario directory: `scenario.toml`, `mixing.csv`, `manifest.csv` and one
/// observation file per client.
pub fn write_scenario(dir: &Path, params: &ExperimentScenario, scenario: &Scenario) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let toml_path = dir.join("scenario.toml");
    let text = toml::to_string(params).map_err(|e| Error::format(&toml_path, e.to_string()))?;
    fs::write(&toml_path, text).map_err(|e| Error::io(&toml_path, e))?;
    write_matrix_csv(&dir.join("mixing.csv"), scenario.mixing.matrix())?;
    let entries: Vec<ClientEntry> = scenario
        .clients
        .iter()
        .map(|c| ClientEntry {
            client_id: c.client_id,
            n_k: c.n_k,
            corrupted: c.corrupted,
        })
        .collect();
    write_records(&dir.join("manifest.csv"), &["client_id", "n_k", "corrupted"], &entries)?;
    for c in &scenario.clients {
        write_matrix_bin(&dir.join(observation_file_name(c.client_id)), OBSERVATION_MAGIC, &c.observations, c.n_k)?;
    }
    Ok(())
}

/// Reads the mixing matrix of a scenario directory.
pub fn read_mixing(dir: &Path) -> Result<MixingMatrix> {
    MixingMatrix::new(read_matrix_csv(&dir.join("mixing.csv"))?)
}

/// Reads a scenario directory. Sources are not stored, so the returned
/// datasets carry an empty source matrix.
pub fn read_scenario(dir: &Path) -> Result<(ExperimentScenario, Scenario)> {
    let toml_path = dir.join("scenario.toml");
    let text = fs::read_to_string(&toml_path).map_err(|e| Error::io(&toml_path, e))?;
    let params: ExperimentScenario = toml::from_str(&text).map_err(|e| Error::format(&toml_path, e.to_string()))?;
    let mixing = read_mixing(dir)?;
    let entries: Vec<ClientEntry> = read_records(&dir.join("manifest.csv"))?;
    let clients = entries
        .into_iter()
        .map(|e| {
            let path = dir.join(observation_file_name(e.client_id));
            let (observations, n_k) = read_matrix_bin(&path, OBSERVATION_MAGIC)?;
            if n_k != e.n_k {
                return Err(Error::format(&path, format!("n_k {n_k} disagrees with manifest {}", e.n_k)));
            }
            Ok(ClientDataset {
                client_id: e.client_id,
                sources: Matrix::zeros(observations.nrows(), 0),
                observations,
                n_k,
                corrupted: e.corrupted,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok((params, Scenario { mixing, clients }))
}

/// Estimate directory: one `.est` file per client plus `estimates.csv` with
/// convergence metadata.
pub fn write_estimates(dir: &Path, estimates: &[LocalEstimate]) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    for est in estimates {
        write_matrix_bin(&dir.join(estimate_file_name(est.client_id)), ESTIMATE_MAGIC, &est.a_tilde, est.n_k)?;
    }
    let entries: Vec<EstimateEntry> = estimates
        .iter()
        .map(|e| EstimateEntry {
            client_id: e.client_id,
            n_k: e.n_k,
            converged: e.converged,
            iters_used: e.iters_used,
            failure: match &e.status {
                EstimateStatus::Ok => None,
                EstimateStatus::Failed(reason) => Some(reason.clone()),
            },
        })
        .collect();
    write_records(
        &dir.join("estimates.csv"),
        &["client_id", "n_k", "converged", "iters_used", "failure"],
        &entries,
    )
}

/// Reads every `.est` file in `dir`, sorted by client id. Metadata from
/// `estimates.csv` is applied when present.
pub fn read_estimates(dir: &Path) -> Result<Vec<LocalEstimate>> {
    let mut files: Vec<(usize, PathBuf)> = Vec::new();
    for entry in fs::read_dir(dir).map_err(|e| Error::io(dir, e))? {
        let path = entry.map_err(|e| Error::io(dir, e))?.path();
        let Some(name) = path.file_name().and_then(|n| n.to_str()) else {
            continue;
        };
        if let Some(id) = name.strip_prefix("client_").and_then(|s| s.strip_suffix(".est")) {
            let id = id
                .parse()
                .map_err(|_| Error::format(&path, "client id is not an integer"))?;
            files.push((id, path));
        }
    }
    files.sort();
    if files.is_empty() {
        return Err(Error::Empty(format!("no .est files in {}", dir.display())));
    }
    let meta_path = dir.join("estimates.csv");
    let meta: Vec<EstimateEntry> = if meta_path.exists() {
        read_records(&meta_path)?
    } else {
        Vec::new()
    };
    files
        .into_iter()
        .map(|(id, path)| {
            let (m, n_k) = read_matrix_bin(&path, ESTIMATE_MAGIC)?;
            let mut est = LocalEstimate::from_matrix(id, m, n_k);
            if let Some(entry) = meta.iter().find(|e| e.client_id == id) {
                est.converged = entry.converged;
                est.iters_used = entry.iters_used;
                if let Some(reason) = &entry.failure {
                    est.status = EstimateStatus::Failed(reason.clone());
                }
            }
            Ok(est)
        })
        .collect()
}
