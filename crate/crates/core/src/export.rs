//! CSV and JSON files. Floats are written with 17 significant digits so that
//! every value reads back bit for bit.

use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::Serialize;
use thiserror::Error;

use crate::geometry::DiscreteDomain;
use crate::tensor::{det_trace, SpectralField};

#[derive(Debug, Error)]
pub enum ExportError {
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{path}: {source}")]
    Json { path: PathBuf, source: serde_json::Error },
    #[error("{path}, line {line}: {message}")]
    Format { path: PathBuf, line: usize, message: String },
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> ExportError + '_ {
    move |source| ExportError::Io { path: path.into(), source }
}

fn fmt(v: f64) -> String {
    format!("{v:.16e}")
}

fn write_rows(path: &Path, header: &[&str], rows: impl Iterator<Item = Vec<f64>>) -> Result<(), ExportError> {
    let file = fs::File::create(path).map_err(io_err(path))?;
    fill(BufWriter::new(file), header, rows).map_err(io_err(path))
}

fn fill(mut w: impl Write, header: &[&str], rows: impl Iterator<Item = Vec<f64>>) -> std::io::Result<()> {
    writeln!(w, "{}", header.join(","))?;
    for row in rows {
        let cells: Vec<String> = row.into_iter().map(fmt).collect();
        writeln!(w, "{}", cells.join(","))?;
    }
    w.flush()
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), ExportError> {
    let mut s =
        serde_json::to_string_pretty(value).map_err(|source| ExportError::Json { path: path.into(), source })?;
    s.push('\n');
    fs::write(path, s).map_err(io_err(path))
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T, ExportError> {
    let s = fs::read_to_string(path).map_err(io_err(path))?;
    serde_json::from_str(&s).map_err(|source| ExportError::Json { path: path.into(), source })
}

pub fn create_dir(path: &Path) -> Result<(), ExportError> {
    fs::create_dir_all(path).map_err(io_err(path))
}

pub fn write_text(path: &Path, text: &str) -> Result<(), ExportError> {
    fs::write(path, text).map_err(io_err(path))
}

/// `x, y, u` per node, in node order.
pub fn write_solution_csv(path: &Path, dom: &DiscreteDomain, u: &[f64]) -> Result<(), ExportError> {
    write_rows(path, &["x", "y", "u"], dom.nodes().iter().zip(u).map(|(n, &v)| vec![n.pos[0], n.pos[1], v]))
}

/// Reads nodal values back and checks that the node positions match `dom`.
pub fn read_solution_csv(path: &Path, dom: &DiscreteDomain) -> Result<Vec<f64>, ExportError> {
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    let bad = |line: usize, message: String| ExportError::Format { path: path.into(), line, message };
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, "x,y,u")) => {}
        _ => return Err(bad(1, "expected header x,y,u".into())),
    }
    let tol = 1e-9 * dom.spacing();
    let mut u = Vec::with_capacity(dom.len());
    for (i, line) in lines {
        let vals: Vec<f64> = line
            .split(',')
            .map(|c| c.trim().parse::<f64>())
            .collect::<Result<_, _>>()
            .map_err(|e| bad(i + 1, e.to_string()))?;
        if vals.len() != 3 {
            return Err(bad(i + 1, format!("expected 3 columns, found {}", vals.len())));
        }
        let Some(node) = dom.nodes().get(u.len()) else {
            return Err(bad(i + 1, format!("more rows than the {} grid nodes", dom.len())));
        };
        if (node.pos[0] - vals[0]).abs() > tol || (node.pos[1] - vals[1]).abs() > tol {
            return Err(bad(i + 1, format!("node position ({}, {}) does not match the grid", vals[0], vals[1])));
        }
        u.push(vals[2]);
    }
    if u.len() != dom.len() {
        return Err(bad(text.lines().count(), format!("{} rows for {} grid nodes", u.len(), dom.len())));
    }
    Ok(u)
}

pub const FIELD_COLUMNS: [&str; 14] =
    ["x", "y", "u", "u_x", "u_y", "T11", "T12", "T22", "lambda1", "lambda2", "det", "trace", "divT_x", "divT_y"];

/// One row per grid node. Tensor columns are NaN when no tensor field is given.
pub fn write_fields_csv(
    path: &Path,
    dom: &DiscreteDomain,
    u: &[f64],
    grad: &[[f64; 2]],
    field: Option<&SpectralField>,
    divergence: Option<&[[f64; 2]]>,
) -> Result<(), ExportError> {
    let rows = dom.nodes().iter().enumerate().map(|(k, n)| {
        let mut row = vec![n.pos[0], n.pos[1], u[k], grad[k][0], grad[k][1]];
        match field {
            Some(f) => {
                let t = &f.nodes[k];
                let dt = det_trace(t, 2);
                row.extend([t.t.m[0][0], t.t.m[0][1], t.t.m[1][1], t.lambda1, t.lambda_rest, dt.det, dt.trace]);
            }
            None => row.extend([f64::NAN; 7]),
        }
        match divergence {
            Some(d) => row.extend(d[k]),
            None => row.extend([f64::NAN; 2]),
        }
        row
    });
    write_rows(path, &FIELD_COLUMNS, rows)
}

pub const BOUNDARY_COLUMNS: [&str; 10] =
    ["y_x", "y_y", "nu_x", "nu_y", "H", "weight", "dnu_u", "lambda1", "flux_density", "semilinear_density"];

/// One row per boundary sample; missing columns are NaN.
pub fn write_boundary_csv(
    path: &Path,
    dom: &DiscreteDomain,
    normal_derivative: &[f64],
    lambda1: Option<&[f64]>,
    flux_density: Option<&[f64]>,
    semilinear_density: Option<&[f64]>,
) -> Result<(), ExportError> {
    let pick = |v: Option<&[f64]>, k: usize| v.map_or(f64::NAN, |v| v[k]);
    let rows = dom.boundary().iter().enumerate().map(|(k, s)| {
        vec![
            s.point[0],
            s.point[1],
            s.normal[0],
            s.normal[1],
            s.curvature,
            s.weight,
            normal_derivative[k],
            pick(lambda1, k),
            pick(flux_density, k),
            pick(semilinear_density, k),
        ]
    });
    write_rows(path, &BOUNDARY_COLUMNS, rows)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{build_domain, Shape};

    #[test]
    fn solution_round_trips_exactly() {
        let dom = build_domain(Shape::ellipse(1.2, 0.7).unwrap(), 0.1).unwrap();
        let u: Vec<f64> = dom.nodes().iter().map(|n| (n.pos[0] * 3.1).sin() / 7.0 + n.pos[1]).collect();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("solution.csv");
        write_solution_csv(&path, &dom, &u).unwrap();
        let back = read_solution_csv(&path, &dom).unwrap();
        assert!(u.iter().zip(&back).all(|(a, b)| a.to_bits() == b.to_bits()));
    }

    #[test]
    fn mismatched_grid_is_rejected() {
        let dom = build_domain(Shape::disc(1.0).unwrap(), 0.1).unwrap();
        let other = build_domain(Shape::disc(1.0).unwrap(), 0.125).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("solution.csv");
        write_solution_csv(&path, &dom, &vec![0.0; dom.len()]).unwrap();
        assert!(matches!(read_solution_csv(&path, &other), Err(ExportError::Format { .. })));
    }

    #[test]
    fn errors_carry_the_path() {
        let err = read_json::<serde_json::Value>(Path::new("/nonexistent/report.json")).unwrap_err();
        assert!(err.to_string().contains("/nonexistent/report.json"));
    }
}
