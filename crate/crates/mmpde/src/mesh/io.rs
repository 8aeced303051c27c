//! Mesh file formats: a plain text format and legacy VTK unstructured grids.
//!
//! Text format: header line `d N_v N N_bf`, then N_v coordinate lines,
//! N connectivity lines and N_bf facet lines. Indices are 1-based on disk.

use super::{Mesh, MeshError};
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

pub fn write_mesh_text(path: &Path, mesh: &Mesh) -> Result<(), MeshError> {
    let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
    let d = mesh.dim();
    writeln!(
        f,
        "{} {} {} {}",
        d,
        mesh.n_vertices(),
        mesh.n_elements(),
        mesh.n_boundary_facets()
    )?;
    for i in 0..mesh.n_vertices() {
        let x = mesh.vertex(i);
        let line: Vec<String> = x.iter().map(|v| format!("{v:.17e}")).collect();
        writeln!(f, "{}", line.join(" "))?;
    }
    for e in 0..mesh.n_elements() {
        let line: Vec<String> = mesh.elem(e).iter().map(|v| (v + 1).to_string()).collect();
        writeln!(f, "{}", line.join(" "))?;
    }
    for b in 0..mesh.n_boundary_facets() {
        let line: Vec<String> = mesh.facet(b).iter().map(|v| (v + 1).to_string()).collect();
        writeln!(f, "{}", line.join(" "))?;
    }
    Ok(())
}

pub fn read_mesh_text(path: &Path) -> Result<Mesh, MeshError> {
    let f = BufReader::new(std::fs::File::open(path)?);
    let mut lines = f.lines();
    let bad = |msg: &str| MeshError::Invalid(format!("mesh file: {msg}"));
    let header = lines.next().ok_or_else(|| bad("missing header"))??;
    let h: Vec<usize> = header
        .split_whitespace()
        .map(|t| t.parse().map_err(|_| bad("bad header")))
        .collect::<Result<_, _>>()?;
    if h.len() != 4 {
        return Err(bad("header must be `d N_v N N_bf`"));
    }
    let (d, nv, ne, nbf) = (h[0], h[1], h[2], h[3]);
    let mut coords = Vec::with_capacity(nv * d);
    for _ in 0..nv {
        let line = lines.next().ok_or_else(|| bad("truncated coordinates"))??;
        for tok in line.split_whitespace().take(d) {
            coords.push(tok.parse::<f64>().map_err(|_| bad("bad coordinate"))?);
        }
    }
    if coords.len() != nv * d {
        return Err(bad("wrong number of coordinates"));
    }
    let mut elems = Vec::with_capacity(ne * (d + 1));
    for _ in 0..ne {
        let line = lines.next().ok_or_else(|| bad("truncated connectivity"))??;
        for tok in line.split_whitespace().take(d + 1) {
            let v: usize = tok.parse().map_err(|_| bad("bad vertex id"))?;
            if v == 0 {
                return Err(bad("vertex ids are 1-based"));
            }
            elems.push(v - 1);
        }
    }
    let mut boundary = Vec::with_capacity(nbf * d);
    for _ in 0..nbf {
        let line = lines.next().ok_or_else(|| bad("truncated boundary facets"))??;
        for tok in line.split_whitespace().take(d) {
            let v: usize = tok.parse().map_err(|_| bad("bad facet vertex id"))?;
            if v == 0 {
                return Err(bad("vertex ids are 1-based"));
            }
            boundary.push(v - 1);
        }
    }
    let bf = if nbf == 0 { None } else { Some(boundary) };
    Mesh::new(d, coords, elems, bf)
}

/// A named per-vertex field for VTK export: `ncomp` values per vertex.
pub struct VtkField<'a> {
    pub name: &'a str,
    pub ncomp: usize,
    pub values: &'a [f64],
}

/// Writes a legacy ASCII VTK unstructured grid with optional point data.
pub fn write_vtk(path: &Path, mesh: &Mesh, fields: &[VtkField<'_>]) -> Result<(), MeshError> {
    let d = mesh.dim();
    for fld in fields {
        if fld.values.len() != mesh.n_vertices() * fld.ncomp {
            return Err(MeshError::Invalid(format!(
                "field `{}` has {} values, expected {}",
                fld.name,
                fld.values.len(),
                mesh.n_vertices() * fld.ncomp
            )));
        }
    }
    let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
    writeln!(f, "# vtk DataFile Version 3.0")?;
    writeln!(f, "mmpde mesh")?;
    writeln!(f, "ASCII")?;
    writeln!(f, "DATASET UNSTRUCTURED_GRID")?;
    writeln!(f, "POINTS {} double", mesh.n_vertices())?;
    for i in 0..mesh.n_vertices() {
        let x = mesh.vertex(i);
        let mut p = [0.0; 3];
        p[..d].copy_from_slice(x);
        writeln!(f, "{:.17e} {:.17e} {:.17e}", p[0], p[1], p[2])?;
    }
    let ne = mesh.n_elements();
    writeln!(f, "CELLS {} {}", ne, ne * (d + 2))?;
    for e in 0..ne {
        let vs: Vec<String> = mesh.elem(e).iter().map(|v| v.to_string()).collect();
        writeln!(f, "{} {}", d + 1, vs.join(" "))?;
    }
    writeln!(f, "CELL_TYPES {ne}")?;
    let ctype = match d {
        1 => 3,  // VTK_LINE
        2 => 5,  // VTK_TRIANGLE
        3 => 10, // VTK_TETRA
        _ => unreachable!(),
    };
    for _ in 0..ne {
        writeln!(f, "{ctype}")?;
    }
    if !fields.is_empty() {
        writeln!(f, "POINT_DATA {}", mesh.n_vertices())?;
        for fld in fields {
            if fld.ncomp == 1 {
                writeln!(f, "SCALARS {} double 1", fld.name)?;
                writeln!(f, "LOOKUP_TABLE default")?;
                for v in fld.values {
                    writeln!(f, "{v:.17e}")?;
                }
            } else {
                writeln!(f, "VECTORS {} double", fld.name)?;
                for i in 0..mesh.n_vertices() {
                    let mut p = [0.0; 3];
                    p[..fld.ncomp.min(3)]
                        .copy_from_slice(&fld.values[i * fld.ncomp..i * fld.ncomp + fld.ncomp.min(3)]);
                    writeln!(f, "{:.17e} {:.17e} {:.17e}", p[0], p[1], p[2])?;
                }
            }
        }
    }
    Ok(())
}

/// Reads back a legacy ASCII VTK file written by [`write_vtk`]. Returns the
/// mesh (dimension inferred from the cell type) and the named point fields.
pub fn read_vtk(path: &Path) -> Result<(Mesh, Vec<(String, usize, Vec<f64>)>), MeshError> {
    let content = std::fs::read_to_string(path)?;
    let mut toks = content.split_whitespace().peekable();
    let bad = |msg: &str| MeshError::Invalid(format!("vtk file: {msg}"));
    let mut points: Vec<f64> = Vec::new();
    let mut cells: Vec<usize> = Vec::new();
    let mut cell_sizes: Vec<usize> = Vec::new();
    let mut dim = 0usize;
    let mut n_points = 0usize;
    let mut fields: Vec<(String, usize, Vec<f64>)> = Vec::new();
    while let Some(tok) = toks.next() {
        match tok {
            "POINTS" => {
                n_points = toks.next().ok_or_else(|| bad("POINTS count"))?.parse().map_err(|_| bad("POINTS count"))?;
                let _ty = toks.next();
                for _ in 0..n_points * 3 {
                    let v: f64 = toks.next().ok_or_else(|| bad("point data"))?.parse().map_err(|_| bad("point value"))?;
                    points.push(v);
                }
            }
            "CELLS" => {
                let nc: usize = toks.next().ok_or_else(|| bad("CELLS count"))?.parse().map_err(|_| bad("CELLS count"))?;
                let _total: usize = toks.next().ok_or_else(|| bad("CELLS size"))?.parse().map_err(|_| bad("CELLS size"))?;
                for _ in 0..nc {
                    let k: usize = toks.next().ok_or_else(|| bad("cell size"))?.parse().map_err(|_| bad("cell size"))?;
                    cell_sizes.push(k);
                    for _ in 0..k {
                        let v: usize = toks.next().ok_or_else(|| bad("cell vertex"))?.parse().map_err(|_| bad("cell vertex"))?;
                        cells.push(v);
                    }
                }
            }
            "CELL_TYPES" => {
                let nc: usize = toks.next().ok_or_else(|| bad("CELL_TYPES count"))?.parse().map_err(|_| bad("CELL_TYPES count"))?;
                for _ in 0..nc {
                    let t: usize = toks.next().ok_or_else(|| bad("cell type"))?.parse().map_err(|_| bad("cell type"))?;
                    dim = match t {
                        3 => 1,
                        5 => 2,
                        10 => 3,
                        _ => return Err(bad("unsupported cell type")),
                    };
                }
            }
            "SCALARS" => {
                let name = toks.next().ok_or_else(|| bad("SCALARS name"))?.to_string();
                let _ty = toks.next();
                let _nc = toks.next();
                let lookup = toks.next(); // LOOKUP_TABLE
                if lookup != Some("LOOKUP_TABLE") {
                    return Err(bad("expected LOOKUP_TABLE"));
                }
                let _tbl = toks.next();
                let mut vals = Vec::with_capacity(n_points);
                for _ in 0..n_points {
                    let v: f64 = toks.next().ok_or_else(|| bad("scalar value"))?.parse().map_err(|_| bad("scalar value"))?;
                    vals.push(v);
                }
                fields.push((name, 1, vals));
            }
            "VECTORS" => {
                let name = toks.next().ok_or_else(|| bad("VECTORS name"))?.to_string();
                let _ty = toks.next();
                let mut vals = Vec::with_capacity(n_points * 3);
                for _ in 0..n_points * 3 {
                    let v: f64 = toks.next().ok_or_else(|| bad("vector value"))?.parse().map_err(|_| bad("vector value"))?;
                    vals.push(v);
                }
                fields.push((name, 3, vals));
            }
            _ => {}
        }
    }
    if dim == 0 || points.is_empty() || cells.is_empty() {
        return Err(bad("missing sections"));
    }
    if cell_sizes.iter().any(|&k| k != dim + 1) {
        return Err(bad("inconsistent cell sizes"));
    }
    let coords: Vec<f64> = (0..n_points)
        .flat_map(|i| (0..dim).map(move |r| (i, r)))
        .map(|(i, r)| points[i * 3 + r])
        .collect();
    let mesh = Mesh::new(dim, coords, cells, None)?;
    Ok((mesh, fields))
}
