//! CSV, VTK and JSON artifacts.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde::Serialize;

use stokes_bdie::mesh::Domain;
use stokes_bdie::verify::SuiteReport;

use crate::error::Result;

#[derive(Serialize)]
struct VolumeRow {
    node: usize,
    x: f64,
    y: f64,
    z: f64,
    p: f64,
    v1: f64,
    v2: f64,
    v3: f64,
}

#[derive(Serialize)]
struct BoundaryRow {
    tri: usize,
    cx: f64,
    cy: f64,
    cz: f64,
    psi1: f64,
    psi2: f64,
    psi3: f64,
}

/// One row of a convergence table.
#[derive(Clone, Debug, Serialize)]
pub struct ConvRow {
    pub level: String,
    pub h: f64,
    pub err_v: f64,
    pub err_p: f64,
    pub err_psi: f64,
    /// Slope of `err_v` from the previous level; empty on the first.
    pub slope: Option<f64>,
}

/// `node,x,y,z,p,v1,v2,v3` at the cell centroids.
pub fn write_volume_csv(path: &Path, domain: &Domain, p: &[f64], v: &[f64]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    for (node, x) in domain.volume.centroids.iter().enumerate() {
        w.serialize(VolumeRow {
            node,
            x: x[0],
            y: x[1],
            z: x[2],
            p: p[node],
            v1: v[3 * node],
            v2: v[3 * node + 1],
            v3: v[3 * node + 2],
        })?;
    }
    w.flush()?;
    Ok(())
}

/// `tri,cx,cy,cz,psi1,psi2,psi3` at the boundary centroids.
pub fn write_boundary_csv(path: &Path, domain: &Domain, psi: &[f64]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    for (tri, c) in domain.surface.centroids.iter().enumerate() {
        w.serialize(BoundaryRow {
            tri,
            cx: c[0],
            cy: c[1],
            cz: c[2],
            psi1: psi[3 * tri],
            psi2: psi[3 * tri + 1],
            psi3: psi[3 * tri + 2],
        })?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_rows<T: Serialize>(path: &Path, rows: &[T]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_suite_csv(path: &Path, report: &SuiteReport) -> Result<()> {
    write_rows(path, &report.rows)
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text)?;
    Ok(())
}

/// Cell fields written with a mesh.
pub struct CellFields<'a> {
    pub p: &'a [f64],
    pub v: &'a [f64],
    pub psi: &'a [f64],
}

/// Legacy ASCII VTK unstructured grid: the tetrahedra followed by the
/// boundary triangles, with `region` 0 on cells and 1 on triangles. Fields
/// are zero where they are not defined.
pub fn vtk_string(domain: &Domain, fields: Option<&CellFields>) -> String {
    let (vol, s) = (&domain.volume, &domain.surface);
    let (nt, nb) = (vol.len(), s.len());
    let mut out = String::new();
    let _ = writeln!(out, "# vtk DataFile Version 3.0\nstokes-bdie\nASCII\nDATASET UNSTRUCTURED_GRID");
    let _ = writeln!(out, "POINTS {} double", vol.vertices.len() + s.vertices.len());
    for x in vol.vertices.iter().chain(&s.vertices) {
        let _ = writeln!(out, "{} {} {}", x[0], x[1], x[2]);
    }
    let offset = vol.vertices.len();
    let _ = writeln!(out, "CELLS {} {}", nt + nb, 5 * nt + 4 * nb);
    for t in &vol.tets {
        let _ = writeln!(out, "4 {} {} {} {}", t[0], t[1], t[2], t[3]);
    }
    for t in &s.triangles {
        let _ = writeln!(out, "3 {} {} {}", t[0] + offset, t[1] + offset, t[2] + offset);
    }
    let _ = writeln!(out, "CELL_TYPES {}", nt + nb);
    for _ in 0..nt {
        out.push_str("10\n");
    }
    for _ in 0..nb {
        out.push_str("5\n");
    }
    let _ = writeln!(out, "CELL_DATA {}\nSCALARS region int 1\nLOOKUP_TABLE default", nt + nb);
    for i in 0..nt + nb {
        out.push_str(if i < nt { "0\n" } else { "1\n" });
    }
    if let Some(f) = fields {
        out.push_str("SCALARS p double 1\nLOOKUP_TABLE default\n");
        for i in 0..nt + nb {
            let _ = writeln!(out, "{}", if i < nt { f.p[i] } else { 0.0 });
        }
        out.push_str("VECTORS v double\n");
        for i in 0..nt + nb {
            let v = if i < nt { [f.v[3 * i], f.v[3 * i + 1], f.v[3 * i + 2]] } else { [0.0; 3] };
            let _ = writeln!(out, "{} {} {}", v[0], v[1], v[2]);
        }
        out.push_str("VECTORS psi double\n");
        for i in 0..nt + nb {
            let v = if i < nt { [0.0; 3] } else { [0, 1, 2].map(|k| f.psi[3 * (i - nt) + k]) };
            let _ = writeln!(out, "{} {} {}", v[0], v[1], v[2]);
        }
    }
    out
}

pub fn write_vtk(path: &Path, domain: &Domain, fields: Option<&CellFields>) -> Result<()> {
    fs::write(path, vtk_string(domain, fields))?;
    Ok(())
}
