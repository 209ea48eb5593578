//! CSV/JSON grid export shared by correlation surfaces and block matrices.
//!
//! JSON is `{x, y, z, params}` with `z[j][i]` the value at `(x[i], y[j])`.
//! CSV is long format with columns `x,y,z`, preceded by `# key: value`
//! metadata lines.

use std::io::Write;

use crate::error::{MaternError, Result};

pub fn write_grid_csv<W: Write>(
    mut out: W,
    metadata: &[(String, String)],
    x: &[f64],
    y: &[f64],
    z: &[Vec<f64>],
) -> Result<()> {
    for (key, value) in metadata {
        writeln!(out, "# {key}: {value}").map_err(io_error)?;
    }
    let mut writer = csv::Writer::from_writer(out);
    writer.write_record(["x", "y", "z"]).map_err(csv_error)?;
    for (row, &yj) in z.iter().zip(y) {
        for (&value, &xi) in row.iter().zip(x) {
            writer.serialize((xi, yj, value)).map_err(csv_error)?;
        }
    }
    writer.flush().map_err(io_error)
}

fn io_error(e: std::io::Error) -> MaternError {
    MaternError::Internal(format!("write failed: {e}"))
}

fn csv_error(e: csv::Error) -> MaternError {
    MaternError::Internal(format!("csv write failed: {e}"))
}
