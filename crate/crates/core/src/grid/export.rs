use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use serde::Serialize;

use super::{BoundaryTrace, Grid};
use crate::output::sci;
use crate::{Error, Result};

#[derive(Serialize)]
struct MeshRecord<'a> {
    dim: usize,
    half_width: f64,
    periodic: Vec<bool>,
    n_dofs: usize,
    n_cells: usize,
    axes: Vec<&'a [f64]>,
}

/// Writes the axis node coordinates and periodicity as JSON.
pub fn write_mesh_json<const D: usize>(grid: &Grid<D>, path: &Path) -> Result<()> {
    let rec = MeshRecord {
        dim: D,
        half_width: grid.half_width(),
        periodic: grid.periodic().to_vec(),
        n_dofs: grid.n_dofs(),
        n_cells: grid.n_cells(),
        axes: (0..D).map(|a| grid.axis(a)).collect(),
    };
    let mut w = BufWriter::new(File::create(path)?);
    serde_json::to_writer_pretty(&mut w, &rec)?;
    w.write_all(b"\n")?;
    w.flush()?;
    Ok(())
}

/// One row per DOF: coordinates then value.
pub fn write_point_cloud_csv<const D: usize>(grid: &Grid<D>, u: &[f64], path: &Path) -> Result<()> {
    if u.len() != grid.n_dofs() {
        return Err(Error::DimensionMismatch {
            expected: grid.n_dofs(),
            got: u.len(),
        });
    }
    let mut w = csv::Writer::from_path(path)?;
    let mut header: Vec<String> = (1..=D).map(|a| format!("x{a}")).collect();
    header.push("u".into());
    w.write_record(&header)?;
    for (i, v) in u.iter().enumerate() {
        let x = grid.dof_point(i);
        let mut row: Vec<String> = x.iter().map(|c| sci(*c)).collect();
        row.push(sci(*v));
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

/// One row per boundary sample: segment, arclength, weight, value.
pub fn write_trace_csv(trace: &BoundaryTrace, path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["segment", "s", "weight", "value"])?;
    for (k, seg) in trace.segments.iter().enumerate() {
        for i in 0..seg.s.len() {
            w.write_record([k.to_string(), sci(seg.s[i]), sci(seg.weights[i]), sci(seg.values[i])])?;
        }
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::boundary_trace;

    #[test]
    fn writes_are_parseable() {
        let dir = tempfile::tempdir().unwrap();
        let g = Grid::<2>::uniform(4, 3.0, [false, false]).unwrap();
        let u = g.interpolate(|x| x[0] + 2.0 * x[1]);
        write_mesh_json(&g, &dir.path().join("mesh.json")).unwrap();
        write_point_cloud_csv(&g, &u, &dir.path().join("u.csv")).unwrap();
        write_trace_csv(&boundary_trace(&g, &u).unwrap(), &dir.path().join("t.csv")).unwrap();
        let mesh: serde_json::Value =
            serde_json::from_str(&std::fs::read_to_string(dir.path().join("mesh.json")).unwrap()).unwrap();
        assert_eq!(mesh["n_dofs"], 25);
        let mut r = csv::Reader::from_path(dir.path().join("u.csv")).unwrap();
        let rows: Vec<_> = r.records().map(|r| r.unwrap()).collect();
        assert_eq!(rows.len(), 25);
        let last: Vec<f64> = rows[24].iter().map(|v| v.parse().unwrap()).collect();
        assert_eq!(last, vec![3.0, 3.0, 9.0]);
        assert!(write_point_cloud_csv(&g, &u[1..], &dir.path().join("bad.csv")).is_err());
    }
}
