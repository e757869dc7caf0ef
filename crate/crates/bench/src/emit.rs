//! Result files.
//!
//! `results.csv` columns: run_id, scheme, m, n, l, j, k, delta_max_m,
//! objective_bps_hz, min_sensor, iterations, wall_ms, design_variables,
//! status, error. Counts that do not apply to a scheme are left empty.
//!
//! Per run, `<run_id>_trajectory.csv` (index, x_m, y_m, z_m, duration_s;
//! the last waypoint has no duration) and `<run_id>_schedule.csv`
//! (segment, sensor, alpha). `records.jsonl` holds one full record per line.

use std::fs::{self, File};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use pathdisc_core::solver::Scheme;
use serde::{Deserialize, Serialize};

use crate::config::AxisValue;
use crate::run::RunRecord;
use crate::BenchError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Format {
    #[default]
    Csv,
    Jsonl,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultRow {
    pub run_id: String,
    pub scheme: String,
    pub m: Option<usize>,
    pub n: Option<usize>,
    pub l: Option<usize>,
    pub j: Option<usize>,
    pub k: Option<usize>,
    pub delta_max_m: Option<f64>,
    pub objective_bps_hz: Option<f64>,
    pub min_sensor: Option<usize>,
    pub iterations: Option<usize>,
    pub wall_ms: Option<f64>,
    pub design_variables: Option<usize>,
    pub status: String,
    pub error: String,
}

impl ResultRow {
    pub fn new(r: &RunRecord) -> Self {
        let scheme = r.scheme.or_else(|| r.solution.as_ref().map(|s| s.scheme));
        let (mut m, mut n, mut l, mut j, mut k) = (None, None, None, None, None);
        match scheme {
            Some(Scheme::Td { m: v }) => m = Some(v),
            Some(Scheme::Cpd { n: v }) => n = Some(v),
            Some(Scheme::Fpd { l: a, j: b }) => (l, j) = (Some(a), Some(b)),
            Some(Scheme::FpdPc { l: a, j: b, k: c, .. }) => (l, j, k) = (Some(a), Some(b), Some(c)),
            None => {}
        }
        let sol = r.solution.as_ref();
        Self {
            run_id: r.run_id.clone(),
            scheme: scheme.map_or_else(|| "-".into(), |s| s.to_string()),
            m,
            n,
            l,
            j,
            k,
            delta_max_m: r.derived.as_ref().map(|d| d.delta_max_m),
            objective_bps_hz: sol.map(|s| s.objective),
            min_sensor: sol.map(|s| s.min_sensor()),
            iterations: sol.map(|s| s.iterations),
            wall_ms: sol.map(|s| s.wall_time_s * 1e3),
            design_variables: scheme.map(|s| s.design_variables()),
            status: r.status(),
            error: r.error.clone().unwrap_or_default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub axis: String,
    pub value: String,
    pub repetition: usize,
    pub run_id: String,
    pub objective_bps_hz: Option<f64>,
    pub wall_ms: Option<f64>,
    pub waypoint_block_ms: Option<f64>,
    pub iterations: Option<usize>,
    pub design_variables: Option<usize>,
    pub status: String,
    pub error: String,
}

fn prepare(dir: &Path) -> Result<(), BenchError> {
    fs::create_dir_all(dir).map_err(|e| BenchError::io(dir, e))
}

fn csv_writer(path: &Path) -> Result<csv::Writer<File>, BenchError> {
    csv::Writer::from_path(path).map_err(|source| BenchError::Csv {
        path: path.into(),
        source,
    })
}

fn write_rows<T: Serialize>(path: &Path, rows: &[T]) -> Result<(), BenchError> {
    let csv_err = |source| BenchError::Csv {
        path: path.into(),
        source,
    };
    let mut w = csv_writer(path)?;
    for row in rows {
        w.serialize(row).map_err(csv_err)?;
    }
    w.flush().map_err(|e| BenchError::io(path, e))
}

#[derive(Serialize)]
struct TrajectoryRow {
    index: usize,
    x_m: f64,
    y_m: f64,
    z_m: f64,
    duration_s: Option<f64>,
}

#[derive(Serialize)]
struct ScheduleRow {
    segment: usize,
    sensor: usize,
    alpha: f64,
}

/// Writes the per-run trajectory and schedule files of a solved record.
pub fn write_run_files(dir: &Path, record: &RunRecord) -> Result<Vec<PathBuf>, BenchError> {
    let Some(sol) = &record.solution else {
        return Ok(Vec::new());
    };
    let traj = &sol.trajectory;
    let rows: Vec<TrajectoryRow> = traj
        .waypoints
        .iter()
        .enumerate()
        .map(|(index, q)| TrajectoryRow {
            index,
            x_m: q.x,
            y_m: q.y,
            z_m: q.z,
            duration_s: traj.durations.get(index).copied(),
        })
        .collect();
    let tpath = dir.join(format!("{}_trajectory.csv", record.run_id));
    write_rows(&tpath, &rows)?;
    let alpha = &sol.schedule.alpha;
    let rows: Vec<ScheduleRow> = (0..sol.schedule.num_segments())
        .flat_map(|segment| {
            (0..alpha.len()).map(move |sensor| ScheduleRow {
                segment,
                sensor,
                alpha: alpha[sensor][segment],
            })
        })
        .collect();
    let spath = dir.join(format!("{}_schedule.csv", record.run_id));
    write_rows(&spath, &rows)?;
    Ok(vec![tpath, spath])
}

/// Writes the records in `format` under `dir` and returns the files made.
pub fn emit(records: &[RunRecord], format: Format, dir: &Path) -> Result<Vec<PathBuf>, BenchError> {
    if records.is_empty() {
        return Err(BenchError::Empty);
    }
    prepare(dir)?;
    match format {
        Format::Csv => {
            let path = dir.join("results.csv");
            let rows: Vec<ResultRow> = records.iter().map(ResultRow::new).collect();
            write_rows(&path, &rows)?;
            let mut files = vec![path];
            for r in records {
                files.extend(write_run_files(dir, r)?);
            }
            Ok(files)
        }
        Format::Jsonl => {
            let path = dir.join("records.jsonl");
            write_jsonl(&path, records)?;
            Ok(vec![path])
        }
    }
}

pub fn write_jsonl(path: &Path, records: &[RunRecord]) -> Result<(), BenchError> {
    let file = File::create(path).map_err(|e| BenchError::io(path, e))?;
    let mut w = BufWriter::new(file);
    for r in records {
        let line = serde_json::to_string(r).map_err(|e| BenchError::Json(e.to_string()))?;
        writeln!(w, "{line}").map_err(|e| BenchError::io(path, e))?;
    }
    w.flush().map_err(|e| BenchError::io(path, e))
}

pub fn read_jsonl(path: &Path) -> Result<Vec<RunRecord>, BenchError> {
    let file = File::open(path).map_err(|e| BenchError::io(path, e))?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| BenchError::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let record = serde_json::from_str(&line)
            .map_err(|e| BenchError::Json(format!("{}:{}: {e}", path.display(), i + 1)))?;
        out.push(record);
    }
    Ok(out)
}

/// Writes `summary.csv` of a sweep, one row per record in sweep order.
pub fn write_summary(
    dir: &Path,
    axis: &str,
    records: &[(AxisValue, RunRecord)],
) -> Result<PathBuf, BenchError> {
    if records.is_empty() {
        return Err(BenchError::Empty);
    }
    prepare(dir)?;
    let rows: Vec<SummaryRow> = records
        .iter()
        .map(|(value, r)| {
            let sol = r.solution.as_ref();
            SummaryRow {
                axis: axis.into(),
                value: value.to_string(),
                repetition: r.repetition,
                run_id: r.run_id.clone(),
                objective_bps_hz: sol.map(|s| s.objective),
                wall_ms: sol.map(|s| s.wall_time_s * 1e3),
                waypoint_block_ms: sol.map(|s| s.waypoint_block_time_s * 1e3),
                iterations: sol.map(|s| s.iterations),
                design_variables: r.scheme.map(|s| s.design_variables()),
                status: r.status(),
                error: r.error.clone().unwrap_or_default(),
            }
        })
        .collect();
    let path = dir.join("summary.csv");
    write_rows(&path, &rows)?;
    Ok(path)
}
