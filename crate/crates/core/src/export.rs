//! CSV and legacy VTK output of solved fields.

use std::io::{BufRead, BufWriter, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::globalsys::Fields;
use crate::mesh::Mesh;

pub const PRESSURE_HEADER: &str = "elem,cx,cy,p,P";
pub const FLUX_HEADER: &str = "edge,mx,my,nx,ny,v";

/// Rows `elem,cx,cy,p,P` with 17 significant digits.
pub fn write_pressure_csv(mesh: &Mesh, fields: &Fields, mut out: impl Write) -> std::io::Result<()> {
    writeln!(out, "{PRESSURE_HEADER}")?;
    for k in 0..mesh.num_triangles() {
        let c = mesh.centroid(k);
        writeln!(
            out,
            "{k},{:.16e},{:.16e},{:.16e},{:.16e}",
            c[0], c[1], fields.pressure[k], fields.physical_pressure[k]
        )?;
    }
    Ok(())
}

/// Rows `edge,mx,my,nx,ny,v`, `v` being the flux along the edge normal.
pub fn write_flux_csv(mesh: &Mesh, fields: &Fields, mut out: impl Write) -> std::io::Result<()> {
    writeln!(out, "{FLUX_HEADER}")?;
    for (e, edge) in mesh.edges().iter().enumerate() {
        let m = mesh.edge_midpoint(e);
        writeln!(
            out,
            "{e},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e}",
            m[0], m[1], edge.normal[0], edge.normal[1], fields.edge_flux[e]
        )?;
    }
    Ok(())
}

/// Element pressures `p` from a file written by [`write_pressure_csv`].
pub fn read_pressure_csv(input: impl BufRead) -> Result<Vec<f64>> {
    let mut lines = input.lines();
    let header = lines.next().transpose()?.unwrap_or_default();
    if header.trim() != PRESSURE_HEADER {
        return Err(Error::Config(format!("unexpected pressure header '{header}'")));
    }
    let mut p = Vec::new();
    for (i, line) in lines.enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let cols: Vec<&str> = line.split(',').collect();
        if cols.len() != 5 || cols[0].parse::<usize>().ok() != Some(i) {
            return Err(Error::Config(format!("malformed pressure row {}: '{line}'", i + 2)));
        }
        p.push(
            cols[3]
                .parse()
                .map_err(|_| Error::Config(format!("bad pressure value '{}'", cols[3])))?,
        );
    }
    Ok(p)
}

/// Legacy ASCII VTK unstructured grid with cell pressure and velocity.
pub fn write_vtk(mesh: &Mesh, fields: &Fields, mut out: impl Write) -> std::io::Result<()> {
    writeln!(out, "# vtk DataFile Version 3.0")?;
    writeln!(out, "hybrid mixed RT0 solution")?;
    writeln!(out, "ASCII")?;
    writeln!(out, "DATASET UNSTRUCTURED_GRID")?;
    writeln!(out, "POINTS {} double", mesh.num_vertices())?;
    for v in mesh.vertices() {
        writeln!(out, "{:.16e} {:.16e} 0", v[0], v[1])?;
    }
    let nt = mesh.num_triangles();
    writeln!(out, "CELLS {nt} {}", 4 * nt)?;
    for t in mesh.triangles() {
        writeln!(out, "3 {} {} {}", t[0], t[1], t[2])?;
    }
    writeln!(out, "CELL_TYPES {nt}")?;
    for _ in 0..nt {
        writeln!(out, "5")?;
    }
    writeln!(out, "CELL_DATA {nt}")?;
    writeln!(out, "SCALARS pressure double 1")?;
    writeln!(out, "LOOKUP_TABLE default")?;
    for p in &fields.pressure {
        writeln!(out, "{p:.16e}")?;
    }
    writeln!(out, "SCALARS physical_pressure double 1")?;
    writeln!(out, "LOOKUP_TABLE default")?;
    for p in &fields.physical_pressure {
        writeln!(out, "{p:.16e}")?;
    }
    writeln!(out, "VECTORS velocity double")?;
    for v in &fields.velocity {
        writeln!(out, "{:.16e} {:.16e} 0", v[0], v[1])?;
    }
    Ok(())
}

fn to_file(path: &Path, f: impl FnOnce(&mut BufWriter<std::fs::File>) -> std::io::Result<()>) -> Result<()> {
    let mut w = BufWriter::new(std::fs::File::create(path)?);
    f(&mut w)?;
    w.flush()?;
    Ok(())
}

/// Write `p{suffix}.csv`, `flux{suffix}.csv` and optionally
/// `solution{suffix}.vtk` into `dir`.
pub fn export_fields(mesh: &Mesh, fields: &Fields, dir: &Path, suffix: &str, vtk: bool) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    to_file(&dir.join(format!("p{suffix}.csv")), |w| write_pressure_csv(mesh, fields, w))?;
    to_file(&dir.join(format!("flux{suffix}.csv")), |w| write_flux_csv(mesh, fields, w))?;
    if vtk {
        to_file(&dir.join(format!("solution{suffix}.vtk")), |w| write_vtk(mesh, fields, w))?;
    }
    Ok(())
}
