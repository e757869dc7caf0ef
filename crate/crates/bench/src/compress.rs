//! Standalone compression of a trajectory file onto basis paths.

use std::path::{Path, PathBuf};

use nalgebra::DMatrix;
use pathdisc_core::basis::{
    compress_with, fourier_basis, relative_error, shifted_sine_basis, BasisKind, FitMode,
    Selection,
};
use serde::{Deserialize, Serialize};

use crate::BenchError;

/// One waypoint of a trajectory file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WaypointRow {
    pub index: usize,
    pub x_m: f64,
    pub y_m: f64,
    pub z_m: f64,
    pub duration_s: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct CoeffRow {
    basis_index: usize,
    x: f64,
    y: f64,
    z: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CompressReport {
    pub l: usize,
    pub k: usize,
    pub basis: BasisKind,
    pub selection: Selection,
    pub selected_indices: Vec<usize>,
    pub rho_comp: f64,
    /// Frobenius error of the reconstruction relative to the input.
    pub relative_error: f64,
    pub coefficients_file: PathBuf,
    pub reconstruction_file: PathBuf,
}

pub fn read_trajectory(path: &Path) -> Result<Vec<WaypointRow>, BenchError> {
    let csv_err = |source| BenchError::Csv {
        path: path.into(),
        source,
    };
    let mut reader = csv::Reader::from_path(path).map_err(csv_err)?;
    let rows = reader
        .deserialize()
        .collect::<Result<Vec<WaypointRow>, _>>()
        .map_err(csv_err)?;
    if rows.len() < 2 {
        return Err(BenchError::Config(format!(
            "{}: a trajectory needs at least two waypoints",
            path.display()
        )));
    }
    Ok(rows)
}

fn write<T: Serialize>(path: &Path, rows: &[T]) -> Result<(), BenchError> {
    let csv_err = |source| BenchError::Csv {
        path: path.into(),
        source,
    };
    let mut w = csv::Writer::from_path(path).map_err(csv_err)?;
    for r in rows {
        w.serialize(r).map_err(csv_err)?;
    }
    w.flush().map_err(|e| BenchError::io(path, e))
}

/// Compresses the waypoints of `input` onto `k` paths and writes the
/// coefficients and the reconstructed trajectory to `out_dir`.
pub fn compress_file(
    input: &Path,
    k: usize,
    basis: BasisKind,
    selection: Selection,
    fit: FitMode,
    out_dir: &Path,
) -> Result<CompressReport, BenchError> {
    let rows = read_trajectory(input)?;
    let l = rows.len() - 1;
    let q = DMatrix::from_fn(3, l + 1, |d, i| match d {
        0 => rows[i].x_m,
        1 => rows[i].y_m,
        _ => rows[i].z_m,
    });
    let matrix = match basis {
        BasisKind::Fourier => fourier_basis(l)?,
        BasisKind::ShiftedSine => shifted_sine_basis(l)?,
        BasisKind::Custom => {
            return Err(BenchError::Config("compress needs a fourier or shifted-sine basis".into()))
        }
    };
    let comp = compress_with(&q, &matrix, k, selection, fit)?;
    let approx = comp.reconstruct();

    std::fs::create_dir_all(out_dir).map_err(|e| BenchError::io(out_dir, e))?;
    let coefficients_file = out_dir.join("coefficients.csv");
    let coeff_rows: Vec<CoeffRow> = comp
        .selected_indices
        .iter()
        .enumerate()
        .map(|(c, &basis_index)| CoeffRow {
            basis_index,
            x: comp.coeffs.get(0, c),
            y: comp.coeffs.get(1, c),
            z: comp.coeffs.get(2, c),
        })
        .collect();
    write(&coefficients_file, &coeff_rows)?;
    let reconstruction_file = out_dir.join("reconstructed_trajectory.csv");
    let out_rows: Vec<WaypointRow> = rows
        .iter()
        .enumerate()
        .map(|(i, r)| WaypointRow {
            index: r.index,
            x_m: approx[(0, i)],
            y_m: approx[(1, i)],
            z_m: approx[(2, i)],
            duration_s: r.duration_s,
        })
        .collect();
    write(&reconstruction_file, &out_rows)?;

    Ok(CompressReport {
        l,
        k,
        basis,
        selection,
        rho_comp: comp.rho_comp(),
        relative_error: relative_error(&q, &approx),
        selected_indices: comp.selected_indices,
        coefficients_file,
        reconstruction_file,
    })
}
