//! File formats: matrix and counts CSVs, sweep and model CSVs, and the
//! JSON run configuration. All writes go through a temp file plus rename.
//!
//! Formats are documented in `docs/formats.md`.

use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::experiment::{Averaging, EmpiricalPoint, Side, SweepPoint, SweepResult};
use crate::matrix::{MatrixError, ODShareMatrix};
use crate::noise::NoiseSpec;
use crate::regress::LowessModel;

#[derive(Debug, Error)]
pub enum IoError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}:{line}: {message}")]
    Parse { path: PathBuf, line: usize, message: String },
    #[error("{path}: {source}")]
    Json {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },
    #[error(transparent)]
    Matrix(#[from] MatrixError),
    #[error("{path}: matrix entries are negative; not a share or count matrix")]
    NegativeEntries { path: PathBuf },
    #[error("{path}: {column} shares sum to {sum}, expected 1 within 1e-6")]
    CountsNotNormalized { path: PathBuf, column: &'static str, sum: f64 },
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> IoError + '_ {
    move |source| IoError::Io { path: path.to_path_buf(), source }
}

fn parse_err(path: &Path, line: usize, message: impl Into<String>) -> IoError {
    IoError::Parse { path: path.to_path_buf(), line, message: message.into() }
}

/// Write via a sibling temp file and rename, so readers never see a
/// partial file.
pub fn write_atomic(path: &Path, contents: &str) -> Result<(), IoError> {
    let tmp = path.with_extension(format!(
        "{}.tmp",
        path.extension().and_then(|e| e.to_str()).unwrap_or("out")
    ));
    {
        let mut f = fs::File::create(&tmp).map_err(io_err(&tmp))?;
        f.write_all(contents.as_bytes()).map_err(io_err(&tmp))?;
        f.sync_all().map_err(io_err(&tmp))?;
    }
    fs::rename(&tmp, path).map_err(io_err(path))?;
    Ok(())
}

fn parse_f64(path: &Path, line: usize, field: &str) -> Result<f64, IoError> {
    field
        .trim()
        .parse::<f64>()
        .map_err(|_| parse_err(path, line, format!("not a number: {field:?}")))
}

/// A matrix loaded from disk, with a flag telling whether raw counts were
/// auto-normalized to shares.
#[derive(Debug, Clone)]
pub struct LoadedMatrix {
    pub matrix: ODShareMatrix,
    pub normalized: bool,
}

/// Read a matrix CSV: header `stop,<label>,...`; each row a stop label
/// followed by the N shares boarding there. Matrices whose entries do not
/// sum to 1 (raw counts) are normalized, flagged in the result.
pub fn read_matrix(path: &Path) -> Result<LoadedMatrix, IoError> {
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    let mut lines = text.lines().enumerate();
    let (_, header) = lines
        .next()
        .ok_or_else(|| parse_err(path, 1, "empty file"))?;
    let labels: Vec<String> = header.split(',').skip(1).map(|s| s.trim().to_string()).collect();
    let n = labels.len();
    if n < 2 {
        return Err(parse_err(path, 1, format!("header names {n} stops, need at least 2")));
    }
    let mut values = Vec::with_capacity(n * n);
    let mut rows = 0usize;
    for (idx, line) in lines {
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != n + 1 {
            return Err(parse_err(
                path,
                idx + 1,
                format!("expected {} fields, got {}", n + 1, fields.len()),
            ));
        }
        for field in &fields[1..] {
            values.push(parse_f64(path, idx + 1, field)?);
        }
        rows += 1;
    }
    if rows != n {
        return Err(parse_err(path, rows + 1, format!("expected {n} data rows, got {rows}")));
    }
    let sum: f64 = values.iter().sum();
    let has_negative = values.iter().any(|&v| v < 0.0);
    let normalized = (sum - 1.0).abs() > 1e-9;
    if normalized {
        // Raw counts: must be nonnegative to normalize meaningfully.
        if has_negative {
            return Err(IoError::NegativeEntries { path: path.to_path_buf() });
        }
        if sum <= 0.0 {
            return Err(parse_err(path, 1, "matrix entries sum to 0; cannot normalize"));
        }
        values.iter_mut().for_each(|v| *v /= sum);
    }
    let matrix = if has_negative {
        // Unit-sum matrix with negative cells: an unclamped perturbed
        // estimate. Labels are dropped from the relaxed path.
        ODShareMatrix::new_perturbed(n, values)?
    } else {
        ODShareMatrix::with_labels(n, values, Some(labels))?
    };
    Ok(LoadedMatrix { matrix, normalized })
}

/// Write a matrix CSV; floats use the shortest representation that parses
/// back to the same value, so round trips are lossless.
pub fn write_matrix(path: &Path, matrix: &ODShareMatrix) -> Result<(), IoError> {
    let n = matrix.n_stops();
    let labels: Vec<String> = match matrix.labels() {
        Some(l) => l.to_vec(),
        None => (1..=n).map(|i| format!("S{i}")).collect(),
    };
    let mut out = String::from("stop");
    for l in &labels {
        out.push(',');
        out.push_str(l);
    }
    out.push('\n');
    for i in 0..n {
        out.push_str(&labels[i]);
        for o in 0..n {
            out.push(',');
            out.push_str(&format!("{}", matrix.get(i, o)));
        }
        out.push('\n');
    }
    write_atomic(path, &out)
}

/// Per-stop boarding and alighting shares.
#[derive(Debug, Clone, PartialEq)]
pub struct StopCounts {
    pub labels: Vec<String>,
    pub boarding: Vec<f64>,
    pub alighting: Vec<f64>,
}

/// Read a counts CSV with columns `stop,boarding_share,alighting_share`.
/// Each share column must sum to 1 within 1e-6.
pub fn read_counts(path: &Path) -> Result<StopCounts, IoError> {
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    let mut labels = Vec::new();
    let mut boarding = Vec::new();
    let mut alighting = Vec::new();
    for (idx, line) in text.lines().enumerate().skip(1) {
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 3 {
            return Err(parse_err(path, idx + 1, format!("expected 3 fields, got {}", fields.len())));
        }
        labels.push(fields[0].trim().to_string());
        boarding.push(parse_f64(path, idx + 1, fields[1])?);
        alighting.push(parse_f64(path, idx + 1, fields[2])?);
    }
    for (column, values) in [("boarding_share", &boarding), ("alighting_share", &alighting)] {
        let sum: f64 = values.iter().sum();
        if (sum - 1.0).abs() > 1e-6 {
            return Err(IoError::CountsNotNormalized { path: path.to_path_buf(), column, sum });
        }
    }
    Ok(StopCounts { labels, boarding, alighting })
}

const SWEEP_HEADER: &str = "n,mean_ratio_in,mean_ratio_out,sd_ratio_in,sd_ratio_out,mean_err_od";

pub fn write_sweep(path: &Path, result: &SweepResult) -> Result<(), IoError> {
    let mut out = String::from(SWEEP_HEADER);
    out.push('\n');
    for p in &result.points {
        out.push_str(&format!(
            "{},{},{},{},{},{}\n",
            p.n_stops, p.mean_ratio_in, p.mean_ratio_out, p.sd_ratio_in, p.sd_ratio_out, p.mean_err_od
        ));
    }
    write_atomic(path, &out)
}

pub fn read_sweep_points(path: &Path) -> Result<Vec<SweepPoint>, IoError> {
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    let mut points = Vec::new();
    for (idx, line) in text.lines().enumerate() {
        if idx == 0 || line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 6 {
            return Err(parse_err(path, idx + 1, format!("expected 6 fields, got {}", fields.len())));
        }
        points.push(SweepPoint {
            n_stops: fields[0]
                .trim()
                .parse()
                .map_err(|_| parse_err(path, idx + 1, format!("not a stop count: {:?}", fields[0])))?,
            mean_ratio_in: parse_f64(path, idx + 1, fields[1])?,
            mean_ratio_out: parse_f64(path, idx + 1, fields[2])?,
            sd_ratio_in: parse_f64(path, idx + 1, fields[3])?,
            sd_ratio_out: parse_f64(path, idx + 1, fields[4])?,
            mean_err_od: parse_f64(path, idx + 1, fields[5])?,
        });
    }
    Ok(points)
}

pub fn write_empirical(path: &Path, points: &[EmpiricalPoint]) -> Result<(), IoError> {
    let mut out = String::from("n,ratio_in,ratio_out\n");
    for p in points {
        let fmt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
        out.push_str(&format!("{},{},{}\n", p.n_stops, fmt(p.ratio_in), fmt(p.ratio_out)));
    }
    write_atomic(path, &out)
}

pub fn read_empirical(path: &Path) -> Result<Vec<EmpiricalPoint>, IoError> {
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    let mut points = Vec::new();
    for (idx, line) in text.lines().enumerate() {
        if idx == 0 || line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 3 {
            return Err(parse_err(path, idx + 1, format!("expected 3 fields, got {}", fields.len())));
        }
        let opt = |f: &str, line: usize| -> Result<Option<f64>, IoError> {
            if f.trim().is_empty() {
                Ok(None)
            } else {
                parse_f64(path, line, f).map(Some)
            }
        };
        points.push(EmpiricalPoint {
            n_stops: fields[0]
                .trim()
                .parse()
                .map_err(|_| parse_err(path, idx + 1, format!("not a stop count: {:?}", fields[0])))?,
            ratio_in: opt(fields[1], idx + 1)?,
            ratio_out: opt(fields[2], idx + 1)?,
        });
    }
    Ok(points)
}

/// Model CSV: one comment header carrying frac and side, then (N, fitted
/// ratio) rows.
pub fn write_model(path: &Path, model: &LowessModel) -> Result<(), IoError> {
    let side = match model.side {
        Side::Boarding => "boarding",
        Side::Alighting => "alighting",
    };
    let mut out = format!("# frac={} side={side}\nn,ratio\n", model.frac);
    for (x, y) in &model.knots {
        out.push_str(&format!("{x},{y}\n"));
    }
    write_atomic(path, &out)
}

pub fn read_model(path: &Path) -> Result<LowessModel, IoError> {
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    let mut lines = text.lines().enumerate();
    let (_, meta) = lines.next().ok_or_else(|| parse_err(path, 1, "empty file"))?;
    let meta = meta
        .strip_prefix('#')
        .ok_or_else(|| parse_err(path, 1, "missing '# frac=.. side=..' header"))?;
    let mut frac = None;
    let mut side = None;
    for token in meta.split_whitespace() {
        if let Some(v) = token.strip_prefix("frac=") {
            frac = v.parse::<f64>().ok();
        } else if let Some(v) = token.strip_prefix("side=") {
            side = match v {
                "boarding" => Some(Side::Boarding),
                "alighting" => Some(Side::Alighting),
                _ => None,
            };
        }
    }
    let frac = frac.ok_or_else(|| parse_err(path, 1, "missing or invalid frac"))?;
    let side = side.ok_or_else(|| parse_err(path, 1, "missing or invalid side"))?;
    let mut knots = Vec::new();
    for (idx, line) in lines {
        if idx == 1 || line.trim().is_empty() {
            continue; // column header
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 2 {
            return Err(parse_err(path, idx + 1, format!("expected 2 fields, got {}", fields.len())));
        }
        knots.push((parse_f64(path, idx + 1, fields[0])?, parse_f64(path, idx + 1, fields[1])?));
    }
    if knots.is_empty() {
        return Err(parse_err(path, 2, "model has no knots"));
    }
    Ok(LowessModel { knots, frac, side })
}

/// Sweep settings as they appear in the JSON run configuration; the noise
/// spec lives alongside in [`RunConfig`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSettings {
    pub n_values: Vec<usize>,
    pub replicates: usize,
    pub reference_seed: u64,
    #[serde(default)]
    pub averaging: Averaging,
    #[serde(default)]
    pub fresh_reference_per_replicate: bool,
}

impl Default for SweepSettings {
    fn default() -> Self {
        Self {
            n_values: (2..=100).collect(),
            replicates: 10,
            reference_seed: 0,
            averaging: Averaging::default(),
            fresh_reference_per_replicate: false,
        }
    }
}

/// JSON run configuration: a noise spec plus optional sweep settings and
/// output path. Unknown keys are rejected.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub noise: NoiseSpec,
    #[serde(default)]
    pub sweep: Option<SweepSettings>,
    #[serde(default)]
    pub output: Option<PathBuf>,
}

pub fn read_run_config(path: &Path) -> Result<RunConfig, IoError> {
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    serde_json::from_str(&text).map_err(|source| IoError::Json { path: path.to_path_buf(), source })
}

pub fn write_run_config(path: &Path, config: &RunConfig) -> Result<(), IoError> {
    let text = serde_json::to_string_pretty(config).expect("run config serializes");
    write_atomic(path, &text)
}
