//! Comma-separated tables with a header row.
//!
//! Floats are written with 17 significant digits so that values survive a
//! write/read cycle bit for bit.

use std::fs;
use std::path::Path;

use crate::alifanov::IterationRecord;
use crate::error::{Error, Result};
use crate::grid::Point;

pub fn fmt_f64(x: f64) -> String {
    format!("{x:.16e}")
}

pub fn fmt_opt(x: Option<f64>) -> String {
    x.map(fmt_f64).unwrap_or_default()
}

/// Writes `header` and `rows` (already formatted) to `path`.
pub fn write_rows(path: &Path, header: &[&str], rows: impl IntoIterator<Item = Vec<String>>) -> Result<()> {
    let mut w = ::csv::Writer::from_path(path)?;
    w.write_record(header)?;
    for r in rows {
        if r.len() != header.len() {
            return Err(Error::invalid(format!("row has {} fields, header has {}", r.len(), header.len())));
        }
        w.write_record(&r)?;
    }
    w.flush().map_err(|e| Error::io(path, e))?;
    Ok(())
}

/// Header and rows of a CSV file.
pub fn read_rows(path: &Path) -> Result<(Vec<String>, Vec<Vec<String>>)> {
    let mut r = ::csv::ReaderBuilder::new().trim(::csv::Trim::All).from_path(path)?;
    let header = r.headers()?.iter().map(str::to_owned).collect();
    let rows = r
        .records()
        .map(|rec| rec.map(|r| r.iter().map(str::to_owned).collect()))
        .collect::<std::result::Result<_, _>>()?;
    Ok((header, rows))
}

fn parse_f64(s: &str, path: &Path) -> Result<f64> {
    s.parse::<f64>()
        .map_err(|_| Error::Config(format!("{}: '{s}' is not a number", path.display())))
}

/// `index,value` table.
pub fn write_values(path: &Path, values: &[f64]) -> Result<()> {
    write_rows(
        path,
        &["index", "value"],
        values.iter().enumerate().map(|(i, v)| vec![i.to_string(), fmt_f64(*v)]),
    )
}

pub fn write_points(path: &Path, points: &[Point]) -> Result<()> {
    write_rows(
        path,
        &["x", "y", "z"],
        points.iter().map(|p| p.iter().map(|v| fmt_f64(*v)).collect()),
    )
}

/// Sensor readings as `x,y,z,value`.
pub fn write_readings(path: &Path, points: &[Point], values: &[f64]) -> Result<()> {
    if points.len() != values.len() {
        return Err(Error::invalid("points and values differ in length"));
    }
    write_rows(
        path,
        &["x", "y", "z", "value"],
        points
            .iter()
            .zip(values)
            .map(|(p, v)| vec![fmt_f64(p[0]), fmt_f64(p[1]), fmt_f64(p[2]), fmt_f64(*v)]),
    )
}

/// Readings from a file with a `value` column and, optionally, `x,y,z` columns.
pub fn read_readings(path: &Path) -> Result<(Option<Vec<Point>>, Vec<f64>)> {
    let (header, rows) = read_rows(path)?;
    let col = |name: &str| header.iter().position(|h| h == name);
    let vi = col("value").ok_or_else(|| Error::Config(format!("{} has no 'value' column", path.display())))?;
    let values = rows.iter().map(|r| parse_f64(&r[vi], path)).collect::<Result<Vec<_>>>()?;
    let points = match (col("x"), col("y"), col("z")) {
        (Some(x), Some(y), Some(z)) => Some(
            rows.iter()
                .map(|r| Ok([parse_f64(&r[x], path)?, parse_f64(&r[y], path)?, parse_f64(&r[z], path)?]))
                .collect::<Result<Vec<_>>>()?,
        ),
        _ => None,
    };
    Ok((points, values))
}

/// Sensor positions from `x,y,z` columns, with readings when a `value` column exists.
pub fn read_sensor_file(path: &Path) -> Result<(Vec<Point>, Option<Vec<f64>>)> {
    let (header, rows) = read_rows(path)?;
    let col = |name: &str| {
        header
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::Config(format!("{} has no '{name}' column", path.display())))
    };
    let (x, y, z) = (col("x")?, col("y")?, col("z")?);
    let points = rows
        .iter()
        .map(|r| Ok([parse_f64(&r[x], path)?, parse_f64(&r[y], path)?, parse_f64(&r[z], path)?]))
        .collect::<Result<Vec<_>>>()?;
    let values = match col("value") {
        Ok(v) => Some(rows.iter().map(|r| parse_f64(&r[v], path)).collect::<Result<Vec<_>>>()?),
        Err(_) => None,
    };
    Ok((points, values))
}

pub fn read_values(path: &Path) -> Result<Vec<f64>> {
    Ok(read_readings(path)?.1)
}

pub fn write_trace(path: &Path, trace: &[IterationRecord]) -> Result<()> {
    write_rows(
        path,
        &["iter", "J", "beta", "gamma", "err_L2", "err_Linf"],
        trace.iter().map(|r| {
            vec![
                r.iter.to_string(),
                fmt_f64(r.j),
                fmt_opt(r.beta),
                fmt_opt(r.gamma),
                fmt_opt(r.err_l2),
                fmt_opt(r.err_linf),
            ]
        }),
    )
}

/// Face field on `S_IN` with the face centres.
pub fn write_face_field(path: &Path, centers: &[Point], values: &[f64]) -> Result<()> {
    write_readings(path, centers, values)
}

/// Reads a file to a string, for hashing inputs.
pub fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::io(path, e))
}
