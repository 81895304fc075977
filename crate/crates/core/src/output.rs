//! Field and series writers.
//!
//! Numbers are printed like C's `%.17g`, which round-trips every double.
//! Files are written to a temporary sibling and renamed into place, so a
//! failed write never leaves a partial file behind.

use std::io::Write;
use std::path::Path;

use crate::error::{Error, Result};
use crate::grid::{Grid, ScalarField};

/// `%.17g` formatting: 17 significant digits, trailing zeros stripped,
/// scientific notation outside `1e-4 <= |x| < 1e17`.
pub fn fmt_g17(x: f64) -> String {
    if x.is_nan() {
        return "nan".into();
    }
    if x.is_infinite() {
        return if x > 0.0 { "inf".into() } else { "-inf".into() };
    }
    if x == 0.0 {
        return if x.is_sign_negative() {
            "-0".into()
        } else {
            "0".into()
        };
    }
    let sci = format!("{:.16e}", x);
    let (mantissa, exp) = sci.split_once('e').expect("exponent present");
    let exp: i32 = exp.parse().expect("integer exponent");
    if (-4..17).contains(&exp) {
        let decimals = (16 - exp) as usize;
        let fixed = format!("{:.*}", decimals, x);
        strip_zeros(&fixed).to_string()
    } else {
        let sign = if exp < 0 { '-' } else { '+' };
        format!("{}e{}{:02}", strip_zeros(mantissa), sign, exp.abs())
    }
}

fn strip_zeros(s: &str) -> &str {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.')
    } else {
        s
    }
}

/// Writes `contents` to `path` through a temporary file in the same
/// directory followed by a rename.
pub fn write_atomic(path: &Path, contents: &[u8]) -> Result<()> {
    let dir = match path.parent() {
        Some(d) if !d.as_os_str().is_empty() => d,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(|e| Error::io(path, e))?;
    tmp.write_all(contents).map_err(|e| Error::io(path, e))?;
    tmp.flush().map_err(|e| Error::io(path, e))?;
    tmp.persist(path).map_err(|e| Error::io(path, e.error))?;
    Ok(())
}

/// Legacy-VTK ASCII `STRUCTURED_POINTS` with one cell-data block `value`.
pub fn render_field_vtk(grid: &Grid, field: &ScalarField) -> Result<String> {
    grid.check(field)?;
    let mut out = String::new();
    out.push_str("# vtk DataFile Version 3.0\n");
    out.push_str("chemoopt field\n");
    out.push_str("ASCII\n");
    out.push_str("DATASET STRUCTURED_POINTS\n");
    out.push_str(&format!(
        "DIMENSIONS {} {} 1\n",
        grid.nx() + 1,
        grid.ny() + 1
    ));
    out.push_str("ORIGIN 0 0 0\n");
    out.push_str(&format!(
        "SPACING {} {} 1\n",
        fmt_g17(grid.hx()),
        fmt_g17(grid.hy())
    ));
    out.push_str(&format!("CELL_DATA {}\n", grid.n_cells()));
    out.push_str("SCALARS value double 1\n");
    out.push_str("LOOKUP_TABLE default\n");
    for x in field.values() {
        out.push_str(&fmt_g17(*x));
        out.push('\n');
    }
    Ok(out)
}

pub fn write_field_vtk(grid: &Grid, field: &ScalarField, path: &Path) -> Result<()> {
    write_atomic(path, render_field_vtk(grid, field)?.as_bytes())
}

/// Reads back the cell values of a file produced by [`write_field_vtk`].
pub fn read_field_vtk(text: &str) -> Result<(usize, usize, Vec<f64>)> {
    let bad = |m: &str| Error::InvalidArgument(format!("malformed VTK: {m}"));
    let mut lines = text.lines();
    let mut dims = None;
    let mut n_cells = None;
    for line in lines.by_ref() {
        let mut parts = line.split_whitespace();
        match parts.next() {
            Some("DIMENSIONS") => {
                let nums: Vec<usize> = parts.filter_map(|p| p.parse().ok()).collect();
                if nums.len() != 3 || nums[0] < 2 || nums[1] < 2 {
                    return Err(bad("DIMENSIONS"));
                }
                dims = Some((nums[0] - 1, nums[1] - 1));
            }
            Some("CELL_DATA") => {
                n_cells = parts.next().and_then(|p| p.parse::<usize>().ok());
            }
            Some("LOOKUP_TABLE") => break,
            _ => {}
        }
    }
    let (nx, ny) = dims.ok_or_else(|| bad("missing DIMENSIONS"))?;
    let n = n_cells.ok_or_else(|| bad("missing CELL_DATA"))?;
    if n != nx * ny {
        return Err(bad("CELL_DATA does not match DIMENSIONS"));
    }
    let values = lines
        .take(n)
        .map(|l| l.trim().parse::<f64>().map_err(|_| bad(l)))
        .collect::<Result<Vec<_>>>()?;
    if values.len() != n {
        return Err(bad("truncated cell data"));
    }
    Ok((nx, ny, values))
}

/// Comma-separated columns with a header row, LF line endings.
pub fn render_series_csv(columns: &[(&str, &[f64])]) -> Result<String> {
    let rows = columns.first().map_or(0, |c| c.1.len());
    if let Some((name, col)) = columns.iter().find(|(_, c)| c.len() != rows) {
        return Err(Error::ShapeMismatch(format!(
            "column `{name}` has {} rows, expected {rows}",
            col.len()
        )));
    }
    let mut out = columns.iter().map(|c| c.0).collect::<Vec<_>>().join(",");
    out.push('\n');
    for r in 0..rows {
        let row: Vec<String> = columns.iter().map(|c| fmt_g17(c.1[r])).collect();
        out.push_str(&row.join(","));
        out.push('\n');
    }
    Ok(out)
}

pub fn write_series_csv(columns: &[(&str, &[f64])], path: &Path) -> Result<()> {
    write_atomic(path, render_series_csv(columns)?.as_bytes())
}
