//! CSV writers and the benchmark-curve reader.

use std::fs;
use std::io::{Read, Write};
use std::path::Path;

use crate::curve::SampledCurve;
use crate::error::{Error, Result};
use crate::grid::TimeGrid;

/// Seventeen significant digits, enough to round-trip an `f64`.
pub fn fmt_f64(v: f64) -> String {
    format!("{v:.16e}")
}

/// Writes `path` through a temporary file in the same directory, so readers
/// never see a half-written file.
pub fn write_atomic<F>(path: &Path, fill: F) -> Result<()>
where
    F: FnOnce(&mut dyn Write) -> Result<()>,
{
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    fs::create_dir_all(dir)?;
    let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
    fill(tmp.as_file_mut())?;
    tmp.as_file_mut().flush()?;
    tmp.persist(path).map_err(|e| Error::Io(e.error))?;
    Ok(())
}

/// Generic table: one header row, then rows of numbers.
pub fn write_table<W: Write>(out: W, header: &[String], rows: impl Iterator<Item = Vec<f64>>) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(header)?;
    for row in rows {
        w.write_record(row.iter().map(|&v| fmt_f64(v)))?;
    }
    w.flush()?;
    Ok(())
}

/// Benchmark file: `t, gamma_0.., stderr_0..`. `std_error` may be empty.
pub fn write_benchmark_csv<W: Write>(out: W, curve: &SampledCurve, std_error: &[f64]) -> Result<()> {
    let k = curve.terms();
    let with_se = !std_error.is_empty();
    if with_se && std_error.len() != curve.values().len() {
        return Err(Error::Shape("standard errors do not match the curve".into()));
    }
    let mut header = vec!["t".to_string()];
    header.extend((0..k).map(|j| format!("gamma_{j}")));
    if with_se {
        header.extend((0..k).map(|j| format!("stderr_{j}")));
    }
    let grid = *curve.grid();
    let rows = (0..grid.len()).map(|i| {
        let mut row = vec![grid.time(i)];
        row.extend_from_slice(curve.at(i));
        if with_se {
            row.extend_from_slice(&std_error[i * k..(i + 1) * k]);
        }
        row
    });
    write_table(out, &header, rows)
}

/// Parses a benchmark file. The `t` column must be a uniform grid starting
/// at 0; columns named `gamma_<j>` for `j = 0..K` give the curve and any
/// other columns are ignored.
pub fn read_benchmark_csv<R: Read>(input: R) -> Result<SampledCurve> {
    let fail = |msg: String| Error::CurveFormat(msg);
    let mut reader = csv::ReaderBuilder::new().has_headers(true).from_reader(input);
    let header = reader.headers()?.clone();
    let t_col = header
        .iter()
        .position(|h| h.trim() == "t")
        .ok_or_else(|| fail("missing column `t`".into()))?;
    let mut gamma_cols = Vec::new();
    while let Some(c) = header.iter().position(|h| h.trim() == format!("gamma_{}", gamma_cols.len())) {
        gamma_cols.push(c);
    }
    if gamma_cols.is_empty() {
        return Err(fail("no `gamma_0` column".into()));
    }
    let parse = |rec: &csv::StringRecord, col: usize, line: usize| -> Result<f64> {
        let cell = rec.get(col).ok_or_else(|| fail(format!("row {line}: missing column {col}")))?;
        let v: f64 = cell
            .trim()
            .parse()
            .map_err(|_| fail(format!("row {line}: `{cell}` is not a number")))?;
        if !v.is_finite() {
            return Err(fail(format!("row {line}: non-finite value")));
        }
        Ok(v)
    };
    let mut times = Vec::new();
    let mut values = Vec::new();
    for (line, rec) in reader.records().enumerate() {
        let rec = rec?;
        times.push(parse(&rec, t_col, line + 1)?);
        for &c in &gamma_cols {
            values.push(parse(&rec, c, line + 1)?);
        }
    }
    if times.len() < 2 {
        return Err(fail("a curve needs at least two rows".into()));
    }
    if times[0] != 0.0 {
        return Err(fail(format!("first time is {}, expected 0", times[0])));
    }
    let horizon = times[times.len() - 1];
    let grid = TimeGrid::with_steps(horizon, times.len() - 1).map_err(|e| fail(e.to_string()))?;
    for (i, &t) in times.iter().enumerate() {
        if (t - grid.time(i)).abs() > 1e-9 * horizon {
            return Err(fail(format!("row {}: time {t} is off the uniform grid", i + 1)));
        }
    }
    SampledCurve::new(grid, gamma_cols.len(), values)
}
