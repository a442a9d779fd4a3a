//! Output files.
//!
//! `records.csv` has one row per measurement instant with the columns of
//! [`record_columns`]; matrices are flattened row-major (`truth_c00` … `truth_c22`,
//! `p00` … `p55`). Floats are written in shortest round-trip form, so reading
//! a file back reproduces the in-memory values exactly. `fusion_wall_time_s`
//! is empty unless timing was requested.
//!
//! `summary.json` holds a [`RunSummary`](crate::run::RunSummary).
//!
//! `trajectory.csv` (from `simulate`) has columns `step, time_s, c00..c22,
//! omega_x, omega_y, omega_z`.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::Path;

use ellipsoid_attitude_core::dynamics::AttitudeState;
use ellipsoid_attitude_core::{Mat6, SpdMatrix};

use crate::run::{RunRecord, RunSummary};
use crate::SimError;

fn matrix_columns(prefix: &str, n: usize) -> impl Iterator<Item = String> + '_ {
    (0..n * n).map(move |k| format!("{prefix}{}{}", k / n, k % n))
}

/// Header of `records.csv`, in order.
pub fn record_columns() -> Vec<String> {
    let mut cols: Vec<String> = vec!["instant".into(), "step".into(), "time_s".into()];
    cols.extend(matrix_columns("truth_c", 3));
    cols.extend(["truth_omega_x", "truth_omega_y", "truth_omega_z"].map(String::from));
    cols.extend(matrix_columns("estimate_c", 3));
    cols.extend(["estimate_omega_x", "estimate_omega_y", "estimate_omega_z"].map(String::from));
    cols.extend(
        [
            "trace_p",
            "trace_p_flow",
            "trace_p_measured",
            "attitude_error_rad",
            "omega_error_rad_s",
            "quadratic_form",
            "contained",
            "conv_lhs",
            "conv_rhs",
            "conv_lambda_min",
            "conv_kappa",
            "conv_chi",
            "conv_c",
            "conv_q",
            "conv_satisfied",
            "q_star",
            "fusion_wall_time_s",
        ]
        .map(String::from),
    );
    cols.extend(matrix_columns("p", 6));
    cols
}

/// Number of columns of `records.csv`.
pub const RECORD_COLUMN_COUNT: usize = 3 + 9 + 3 + 9 + 3 + 17 + 36;

fn float(x: f64) -> String {
    format!("{x:?}")
}

fn state_fields(s: &AttitudeState, out: &mut Vec<String>) {
    out.extend(s.c.matrix().transpose().iter().map(|x| float(*x)));
    out.extend(s.omega.iter().map(|x| float(*x)));
}

fn record_row(r: &RunRecord) -> Vec<String> {
    let mut row = vec![r.instant.to_string(), r.step.to_string(), float(r.time_s)];
    state_fields(&r.truth, &mut row);
    state_fields(&r.estimate, &mut row);
    let c = &r.report;
    row.extend([
        float(r.trace_p),
        float(r.trace_p_flow),
        float(r.trace_p_measured),
        float(r.attitude_error_rad),
        float(r.omega_error_rad_s),
        float(r.quadratic_form),
        r.contained.to_string(),
        float(c.lhs),
        float(c.rhs),
        float(c.lambda_min),
        float(c.kappa),
        float(c.chi),
        float(c.c),
        float(c.q),
        c.satisfied.to_string(),
        float(r.q_star),
        r.fusion_wall_time_s.map(float).unwrap_or_default(),
    ]);
    // Transposing a column-major matrix makes its storage order row-major.
    row.extend(r.p.transpose().iter().map(|x| float(*x)));
    row
}

fn csv_error(e: csv::Error) -> SimError {
    SimError::Runtime(format!("csv: {e}"))
}

pub fn write_records(path: &Path, records: &[RunRecord]) -> Result<(), SimError> {
    let mut w = csv::Writer::from_path(path).map_err(csv_error)?;
    w.write_record(record_columns()).map_err(csv_error)?;
    for r in records {
        w.write_record(record_row(r)).map_err(csv_error)?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_summary(path: &Path, summary: &RunSummary) -> Result<(), SimError> {
    let mut w = BufWriter::new(File::create(path)?);
    serde_json::to_writer_pretty(&mut w, summary).map_err(|e| SimError::Runtime(e.to_string()))?;
    writeln!(w)?;
    w.flush()?;
    Ok(())
}

/// Writes `records.csv` and `summary.json` into `dir`, creating it if needed.
pub fn write_run(dir: &Path, records: &[RunRecord], summary: &RunSummary) -> Result<(), SimError> {
    fs::create_dir_all(dir)?;
    write_records(&dir.join("records.csv"), records)?;
    write_summary(&dir.join("summary.json"), summary)
}

pub fn write_trajectory(path: &Path, trajectory: &[AttitudeState], h: f64) -> Result<(), SimError> {
    let mut w = csv::Writer::from_path(path).map_err(csv_error)?;
    let mut header = vec!["step".to_string(), "time_s".to_string()];
    header.extend(matrix_columns("c", 3));
    header.extend(["omega_x", "omega_y", "omega_z"].map(String::from));
    w.write_record(&header).map_err(csv_error)?;
    for (k, s) in trajectory.iter().enumerate() {
        let mut row = vec![k.to_string(), float(k as f64 * h)];
        state_fields(s, &mut row);
        w.write_record(&row).map_err(csv_error)?;
    }
    w.flush()?;
    Ok(())
}

/// Reads the `p00..p55` columns of every row of a `records.csv`.
pub fn read_record_matrices(path: &Path) -> Result<Vec<Mat6>, SimError> {
    let mut r = csv::Reader::from_path(path).map_err(csv_error)?;
    let headers = r.headers().map_err(csv_error)?.clone();
    let first = headers
        .iter()
        .position(|h| h == "p00")
        .ok_or_else(|| SimError::Validation(format!("{}: no p00 column", path.display())))?;
    let mut out = Vec::new();
    for row in r.records() {
        let row = row.map_err(csv_error)?;
        let mut values = [0.0; 36];
        for (k, v) in values.iter_mut().enumerate() {
            let field = row.get(first + k).unwrap_or("");
            *v = field
                .parse()
                .map_err(|_| SimError::Parse(format!("{}: bad matrix entry {field:?}", path.display())))?;
        }
        out.push(Mat6::from_row_slice(&values));
    }
    Ok(out)
}

/// Reads a 6×6 matrix stored as a JSON array of six rows.
pub fn read_matrix6(path: &Path) -> Result<Mat6, SimError> {
    let text = fs::read_to_string(path)
        .map_err(|e| SimError::Validation(format!("cannot read {}: {e}", path.display())))?;
    let rows: [[f64; 6]; 6] =
        serde_json::from_str(&text).map_err(|e| SimError::Parse(format!("{}: {e}", path.display())))?;
    Ok(Mat6::from_fn(|i, j| rows[i][j]))
}

/// Reads a 6×6 SPD matrix; `name` labels validation errors.
pub fn read_spd6(path: &Path, name: &str) -> Result<SpdMatrix<6>, SimError> {
    SpdMatrix::new(read_matrix6(path)?)
        .map_err(|e| SimError::Invalid { field: name.to_string(), message: e.to_string() })
}

pub fn write_matrix6(path: &Path, m: &Mat6) -> Result<(), SimError> {
    let rows: Vec<Vec<f64>> = m.row_iter().map(|r| r.iter().copied().collect()).collect();
    fs::write(path, serde_json::to_string(&rows).map_err(|e| SimError::Runtime(e.to_string()))?)?;
    Ok(())
}
