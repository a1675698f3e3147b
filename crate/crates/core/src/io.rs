//! CSV snapshots of the primitive state and per-step run series.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use crate::diagnostics::RunRecord;
use crate::error::{Error, Result};
use crate::field::DgField;
use crate::integrator::Solver;
use crate::state::{recover_primitive, Conserved, Q0};

/// Where a snapshot samples the solution.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SnapshotLayout {
    CellCenters,
    /// Every basis node of every cell.
    PlotNodes,
    /// Cell-centre x positions on the horizontal line `y`.
    CrossSection {
        y: f64,
    },
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> Error + '_ {
    move |source| Error::Io {
        path: path.to_path_buf(),
        source,
    }
}

pub fn snapshot_header(n_constituents: usize) -> Vec<String> {
    let mut h: Vec<String> = ["x", "y", "z", "h", "eta", "u", "v", "r"]
        .iter()
        .map(|s| s.to_string())
        .collect();
    h.extend((1..=n_constituents).map(|i| format!("c{i}")));
    h
}

/// `(cell, reference point)` pairs for a layout, in y-major then x order.
fn sample_points(solver: &Solver, layout: SnapshotLayout) -> Result<Vec<(usize, [f64; 2])>> {
    let grid = solver.grid;
    let mut pts = Vec::new();
    match layout {
        SnapshotLayout::CellCenters => {
            for j in 0..grid.ny {
                for i in 0..grid.nx {
                    pts.push((grid.index(i, j), [0.0, 0.0]));
                }
            }
        }
        SnapshotLayout::PlotNodes => {
            let mut tagged = Vec::new();
            for j in 0..grid.ny {
                for i in 0..grid.nx {
                    for m in 0..solver.basis.n_nodes() {
                        let p = solver.basis.node(m);
                        let (x, y) = grid.physical(i, j, p[0], p[1]);
                        tagged.push((y, x, grid.index(i, j), p));
                    }
                }
            }
            tagged.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.total_cmp(&b.1)));
            pts = tagged.into_iter().map(|(_, _, c, p)| (c, p)).collect();
        }
        SnapshotLayout::CrossSection { y } => {
            let b = grid.bounds;
            if !(y >= b.y_min && y <= b.y_max) {
                return Err(Error::Domain(format!(
                    "cross-section y = {y} outside [{}, {}]",
                    b.y_min, b.y_max
                )));
            }
            let j = (((y - b.y_min) / grid.dy).floor() as usize).min(grid.ny - 1);
            let eta = ((y - grid.center(0, j).1) / grid.dy).clamp(-0.5, 0.5);
            for i in 0..grid.nx {
                pts.push((grid.index(i, j), [0.0, eta]));
            }
        }
    }
    Ok(pts)
}

/// Primitive rows `x, y, z, h, eta, u, v, r, c_1..c_N` for `field`.
pub fn snapshot_rows(
    field: &DgField,
    solver: &Solver,
    layout: SnapshotLayout,
) -> Result<Vec<Vec<f64>>> {
    let grid = solver.grid;
    let basis = &solver.basis;
    let nc = field.n_comp();
    sample_points(solver, layout)?
        .into_iter()
        .map(|(cell, p)| {
            let (i, j) = grid.ij(cell);
            let (x, y) = grid.physical(i, j, p[0], p[1]);
            let z = solver.bathymetry.field().eval(basis, cell, 0, p);
            let u = Conserved((0..nc).map(|c| field.eval(basis, cell, c, p)).collect());
            let prim = recover_primitive(&u, z, solver.physics.h_eps).map_err(|e| match e {
                Error::InvalidState { reason, .. } => Error::InvalidState { cell, reason },
                e => e,
            })?;
            let mut row = vec![x, y, z, prim.h, u.eta(), prim.u, prim.v, prim.r];
            row.extend(prim.c);
            Ok(row)
        })
        .collect()
}

fn write_csv(path: &Path, header: &[String], rows: &[Vec<f64>]) -> Result<()> {
    let file = File::create(path).map_err(io_err(path))?;
    let mut w = BufWriter::new(file);
    writeln!(w, "{}", header.join(",")).map_err(io_err(path))?;
    for row in rows {
        let line: Vec<String> = row.iter().map(|v| format!("{v:.16e}")).collect();
        writeln!(w, "{}", line.join(",")).map_err(io_err(path))?;
    }
    w.flush().map_err(io_err(path))
}

/// Writes a snapshot CSV with 17 significant digits per value.
pub fn write_snapshot(
    path: &Path,
    field: &DgField,
    solver: &Solver,
    layout: SnapshotLayout,
) -> Result<()> {
    let rows = snapshot_rows(field, solver, layout)?;
    write_csv(path, &snapshot_header(field.n_comp() - Q0), &rows)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub header: Vec<String>,
    pub rows: Vec<Vec<f64>>,
}

impl Table {
    pub fn column(&self, name: &str) -> Option<Vec<f64>> {
        let k = self.header.iter().position(|h| h == name)?;
        Some(self.rows.iter().map(|r| r[k]).collect())
    }
}

/// Reads a numeric CSV written by this module.
pub fn read_table(path: &Path) -> Result<Table> {
    let parse_err = |reason: String| Error::Parse {
        path: PathBuf::from(path),
        reason,
    };
    let file = File::open(path).map_err(io_err(path))?;
    let mut lines = BufReader::new(file).lines();
    let header: Vec<String> = match lines.next() {
        Some(l) => l
            .map_err(io_err(path))?
            .split(',')
            .map(str::to_string)
            .collect(),
        None => return Err(parse_err("empty file".into())),
    };
    let mut rows = Vec::new();
    for (n, line) in lines.enumerate() {
        let line = line.map_err(io_err(path))?;
        if line.is_empty() {
            continue;
        }
        let row = line
            .split(',')
            .map(|v| {
                v.parse::<f64>()
                    .map_err(|e| parse_err(format!("line {}: {e}", n + 2)))
            })
            .collect::<Result<Vec<f64>>>()?;
        if row.len() != header.len() {
            return Err(parse_err(format!(
                "line {}: {} fields, header has {}",
                n + 2,
                row.len(),
                header.len()
            )));
        }
        rows.push(row);
    }
    Ok(Table { header, rows })
}

/// Per-step series: time, step size, limiter activity and conserved totals.
pub fn write_series(path: &Path, record: &RunRecord) -> Result<()> {
    let n_q = record.samples.first().map_or(0, |s| s.totals.q.len());
    let mut header: Vec<String> = [
        "t",
        "dt",
        "min_h",
        "cells_scaled",
        "min_theta",
        "minmod_cells",
        "thin_cells",
        "retries",
        "total_h",
        "total_p1",
    ]
    .iter()
    .map(|s| s.to_string())
    .collect();
    header.extend((1..=n_q).map(|i| format!("total_q{i}")));
    let rows: Vec<Vec<f64>> = record
        .samples
        .iter()
        .map(|s| {
            let st = &s.step;
            let mut row = vec![
                st.t,
                st.dt,
                st.min_h,
                st.cells_scaled as f64,
                st.min_theta,
                st.minmod_cells as f64,
                st.thin_cells as f64,
                st.retries as f64,
            ];
            row.extend(s.totals.as_vec());
            row
        })
        .collect();
    write_csv(path, &header, &rows)
}
