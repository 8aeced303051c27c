//! Simplicial meshes: representation, generation, topology queries,
//! refinement, merging, interpolation and quality measures.
//!
//! A mesh is the triple (X, tri, tri_bf): vertex coordinates, element
//! connectivity and boundary facets. Elements are kept positively oriented;
//! element volumes are the absolute value of the signed simplex volume.

mod generate;
mod interp;
mod io;
mod quality;
mod refine;

pub use generate::{circle2tri, cube2tet, interval_mesh, rect2tri};
pub use interp::{delaunay, lin_interp, MeshLocator};
pub use io::{read_mesh_text, read_vtk, write_mesh_text, write_vtk, VtkField};
pub use quality::{quality_measure2, quality_measures, QualityReport};
pub(crate) use quality::equilateral_edges as reference_edges;

use crate::smallmat::{det_one, inv_one};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum MeshError {
    #[error("mesh dimension must be 1, 2 or 3, got {0}")]
    BadDim(usize),
    #[error("dimension mismatch: {0} vs {1}")]
    DimMismatch(usize, usize),
    #[error("vertex index {idx} out of range ({n_vertices} vertices)")]
    BadVertexIndex { idx: usize, n_vertices: usize },
    #[error("element {elem} is degenerate (volume {volume:e})")]
    DegenerateElement { elem: usize, volume: f64 },
    #[error("boundary facet {facet} is degenerate")]
    DegenerateFacet { facet: usize },
    #[error("operation would leave the mesh empty")]
    Empty,
    #[error("grid vector must be strictly increasing with at least 2 entries")]
    NonMonotoneGrid,
    #[error("{0}")]
    Invalid(String),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

/// Simplicial mesh in `dim` dimensions.
#[derive(Debug, Clone)]
pub struct Mesh {
    dim: usize,
    coords: Vec<f64>,   // N_v x dim
    elems: Vec<usize>,  // N x (dim+1)
    boundary: Vec<usize>, // N_bf x dim, oriented outward
    boundary_elem: Vec<usize>, // adjacent element of each boundary facet
}

impl Mesh {
    /// Builds a mesh, validating indices, reorienting inverted elements and
    /// computing boundary facets when `boundary` is `None`.
    pub fn new(
        dim: usize,
        coords: Vec<f64>,
        elems: Vec<usize>,
        boundary: Option<Vec<usize>>,
    ) -> Result<Self, MeshError> {
        if !(1..=3).contains(&dim) {
            return Err(MeshError::BadDim(dim));
        }
        if coords.len() % dim != 0 || elems.len() % (dim + 1) != 0 {
            return Err(MeshError::Invalid("coordinate/connectivity array length mismatch".into()));
        }
        let n_v = coords.len() / dim;
        if n_v == 0 || elems.is_empty() {
            return Err(MeshError::Empty);
        }
        let mut mesh = Mesh { dim, coords, elems, boundary: Vec::new(), boundary_elem: Vec::new() };
        for (e, chunk) in mesh.elems.chunks(dim + 1).enumerate() {
            for &v in chunk {
                if v >= n_v {
                    return Err(MeshError::BadVertexIndex { idx: v, n_vertices: n_v });
                }
            }
            let _ = e;
        }
        mesh.reorient()?;
        let (bf, bf_elem) = mesh.compute_free_boundary();
        match boundary {
            None => {
                mesh.boundary = bf;
                mesh.boundary_elem = bf_elem;
            }
            Some(given) => {
                if given.len() % dim != 0 {
                    return Err(MeshError::Invalid("boundary facet array length mismatch".into()));
                }
                // validate the given facets form the same set as the free boundary
                let norm = |f: &[usize]| {
                    let mut v = f.to_vec();
                    v.sort_unstable();
                    v
                };
                let mut want: Vec<Vec<usize>> = bf.chunks(dim).map(norm).collect();
                let mut got: Vec<Vec<usize>> = given.chunks(dim).map(norm).collect();
                want.sort();
                got.sort();
                if want != got {
                    return Err(MeshError::Invalid(
                        "given boundary facets do not match the free boundary of the triangulation".into(),
                    ));
                }
                // keep the caller's facet order (markers index into it) but fix orientation
                let mut key_to = std::collections::HashMap::new();
                for (i, f) in bf.chunks(dim).enumerate() {
                    key_to.insert(norm(f), i);
                }
                let mut oriented = Vec::with_capacity(given.len());
                let mut belem = Vec::with_capacity(given.len() / dim);
                for f in given.chunks(dim) {
                    let i = key_to[&norm(f)];
                    oriented.extend_from_slice(&bf[i * dim..(i + 1) * dim]);
                    belem.push(bf_elem[i]);
                }
                mesh.boundary = oriented;
                mesh.boundary_elem = belem;
            }
        }
        Ok(mesh)
    }

    /// Mesh with no vertices or elements (identity for [`Mesh::merge`]).
    pub fn empty(dim: usize) -> Self {
        Mesh { dim, coords: Vec::new(), elems: Vec::new(), boundary: Vec::new(), boundary_elem: Vec::new() }
    }

    pub fn is_empty_mesh(&self) -> bool {
        self.elems.is_empty()
    }

    /// Rebuilds a mesh with the same connectivity at new vertex positions.
    pub fn with_coords(&self, coords: Vec<f64>) -> Result<Self, MeshError> {
        assert_eq!(coords.len(), self.coords.len());
        let mut m = self.clone();
        m.coords = coords;
        for e in 0..m.n_elements() {
            let v = m.signed_volume(e);
            if v <= 0.0 {
                return Err(MeshError::DegenerateElement { elem: e, volume: v });
            }
        }
        Ok(m)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn n_vertices(&self) -> usize {
        self.coords.len() / self.dim
    }

    pub fn n_elements(&self) -> usize {
        self.elems.len() / (self.dim + 1)
    }

    pub fn n_boundary_facets(&self) -> usize {
        self.boundary.len() / self.dim.max(1)
    }

    pub fn coords(&self) -> &[f64] {
        &self.coords
    }

    pub fn elems(&self) -> &[usize] {
        &self.elems
    }

    pub fn boundary(&self) -> &[usize] {
        &self.boundary
    }

    pub fn vertex(&self, i: usize) -> &[f64] {
        &self.coords[i * self.dim..(i + 1) * self.dim]
    }

    pub fn elem(&self, e: usize) -> &[usize] {
        &self.elems[e * (self.dim + 1)..(e + 1) * (self.dim + 1)]
    }

    pub fn facet(&self, f: usize) -> &[usize] {
        &self.boundary[f * self.dim..(f + 1) * self.dim]
    }

    /// Element adjacent to boundary facet `f`.
    pub fn facet_element(&self, f: usize) -> usize {
        self.boundary_elem[f]
    }

    /// Physical edge matrix of element `e`: column j is x_{j+1} - x_0,
    /// stored column-major in `out[..dim*dim]`.
    pub fn edge_matrix(&self, e: usize, out: &mut [f64]) {
        let d = self.dim;
        let vs = self.elem(e);
        let x0 = self.vertex(vs[0]);
        for j in 0..d {
            let xj = self.vertex(vs[j + 1]);
            for r in 0..d {
                out[j * d + r] = xj[r] - x0[r];
            }
        }
    }

    pub fn signed_volume(&self, e: usize) -> f64 {
        let d = self.dim;
        let mut em = [0.0; 9];
        self.edge_matrix(e, &mut em);
        det_one(d, &em[..d * d]) / factorial(d)
    }

    pub fn volume(&self, e: usize) -> f64 {
        self.signed_volume(e).abs()
    }

    pub fn total_volume(&self) -> f64 {
        (0..self.n_elements()).map(|e| self.volume(e)).sum()
    }

    pub fn elem_centroid(&self, e: usize, out: &mut [f64]) {
        let d = self.dim;
        out[..d].fill(0.0);
        for &v in self.elem(e) {
            for r in 0..d {
                out[r] += self.vertex(v)[r];
            }
        }
        for r in 0..d {
            out[r] /= (d + 1) as f64;
        }
    }

    /// Measure (length/area) of boundary facet `f`; 1 in 1D.
    pub fn facet_measure(&self, f: usize) -> f64 {
        facet_measure_of(self.dim, &self.coords, self.facet(f))
    }

    pub fn facet_centroid(&self, f: usize, out: &mut [f64]) {
        let d = self.dim;
        out[..d].fill(0.0);
        for &v in self.facet(f) {
            for r in 0..d {
                out[r] += self.vertex(v)[r];
            }
        }
        for r in 0..d {
            out[r] /= self.dim as f64;
        }
    }

    pub fn bbox(&self) -> (Vec<f64>, Vec<f64>) {
        let d = self.dim;
        let mut lo = vec![f64::INFINITY; d];
        let mut hi = vec![f64::NEG_INFINITY; d];
        for i in 0..self.n_vertices() {
            let x = self.vertex(i);
            for r in 0..d {
                lo[r] = lo[r].min(x[r]);
                hi[r] = hi[r].max(x[r]);
            }
        }
        (lo, hi)
    }

    pub fn diameter(&self) -> f64 {
        let (lo, hi) = self.bbox();
        lo.iter().zip(&hi).map(|(a, b)| (b - a) * (b - a)).sum::<f64>().sqrt()
    }

    /// Barycentric coordinates of `p` with respect to element `e`
    /// (d+1 values summing to 1; negative outside).
    pub fn barycentric(&self, e: usize, p: &[f64], out: &mut [f64]) {
        let d = self.dim;
        let mut em = [0.0; 9];
        let mut inv = [0.0; 9];
        self.edge_matrix(e, &mut em);
        inv_one(d, &em[..d * d], &mut inv[..d * d]);
        let x0 = self.vertex(self.elem(e)[0]);
        let mut s = 0.0;
        for j in 0..d {
            let mut l = 0.0;
            for r in 0..d {
                // row j of inverse times (p - x0)
                l += inv[r * d + j] * (p[r] - x0[r]);
            }
            out[j + 1] = l;
            s += l;
        }
        out[0] = 1.0 - s;
    }

    fn reorient(&mut self) -> Result<(), MeshError> {
        let d = self.dim;
        let scale = {
            let (lo, hi) = self.bbox();
            lo.iter().zip(&hi).map(|(a, b)| b - a).fold(0.0f64, f64::max).max(1e-300)
        };
        let tiny = 1e-14 * scale.powi(d as i32);
        for e in 0..self.n_elements() {
            let v = self.signed_volume(e);
            if v.abs() <= tiny {
                return Err(MeshError::DegenerateElement { elem: e, volume: v });
            }
            if v < 0.0 {
                let base = e * (d + 1);
                self.elems.swap(base + d - 1, base + d); // swap last two vertices
            }
        }
        Ok(())
    }

    /// Facets incident to exactly one element, oriented outward, plus the
    /// adjacent element of each.
    fn compute_free_boundary(&self) -> (Vec<usize>, Vec<usize>) {
        let d = self.dim;
        let mut map: std::collections::HashMap<Vec<usize>, (usize, usize, usize)> =
            std::collections::HashMap::new();
        for e in 0..self.n_elements() {
            let vs = self.elem(e);
            for skip in 0..=d {
                let facet: Vec<usize> =
                    (0..=d).filter(|&k| k != skip).map(|k| vs[k]).collect();
                let mut key = facet.clone();
                key.sort_unstable();
                map.entry(key).and_modify(|t| t.2 += 1).or_insert((e, skip, 1));
            }
        }
        let mut items: Vec<(Vec<usize>, usize, usize)> = map
            .into_iter()
            .filter(|(_, (_, _, cnt))| *cnt == 1)
            .map(|(key, (e, skip, _))| (key, e, skip))
            .collect();
        // deterministic order: by (element, skipped local vertex)
        items.sort_by_key(|&(_, e, skip)| (e, skip));
        let mut boundary = Vec::with_capacity(items.len() * d);
        let mut belem = Vec::with_capacity(items.len());
        let mut centroid = [0.0; 3];
        for (key, e, _skip) in items {
            self.elem_centroid(e, &mut centroid);
            let oriented = orient_facet_outward(d, &self.coords, &key, &centroid[..d]);
            boundary.extend_from_slice(&oriented);
            belem.push(e);
        }
        (boundary, belem)
    }

    /// Vertex ids appearing in any boundary facet.
    pub fn boundary_vertices(&self) -> Vec<bool> {
        let mut on = vec![false; self.n_vertices()];
        for &v in &self.boundary {
            on[v] = true;
        }
        on
    }

    /// Elements incident to each vertex.
    pub fn vertex_patches(&self) -> Vec<Vec<usize>> {
        let mut p = vec![Vec::new(); self.n_vertices()];
        for e in 0..self.n_elements() {
            for &v in self.elem(e) {
                p[v].push(e);
            }
        }
        p
    }

    /// Vertices sharing an element with each vertex (excluding itself), sorted.
    pub fn vertex_neighbors(&self) -> Vec<Vec<usize>> {
        let mut nb = vec![Vec::new(); self.n_vertices()];
        for e in 0..self.n_elements() {
            let vs = self.elem(e);
            for &a in vs {
                for &b in vs {
                    if a != b {
                        nb[a].push(b);
                    }
                }
            }
        }
        for l in &mut nb {
            l.sort_unstable();
            l.dedup();
        }
        nb
    }

    /// Per element, the neighbor across the facet opposite each local vertex
    /// (`usize::MAX` when that facet is on the boundary).
    pub fn elem_adjacency(&self) -> Vec<usize> {
        let d = self.dim;
        let ne = self.n_elements();
        let mut map: std::collections::HashMap<Vec<usize>, (usize, usize)> =
            std::collections::HashMap::new();
        let mut adj = vec![usize::MAX; ne * (d + 1)];
        for e in 0..ne {
            let vs = self.elem(e);
            for skip in 0..=d {
                let mut key: Vec<usize> =
                    (0..=d).filter(|&k| k != skip).map(|k| vs[k]).collect();
                key.sort_unstable();
                if let Some(&(e2, skip2)) = map.get(&key) {
                    adj[e * (d + 1) + skip] = e2;
                    adj[e2 * (d + 1) + skip2] = e;
                } else {
                    map.insert(key, (e, skip));
                }
            }
        }
        adj
    }

    /// Outward unit normals of the boundary facets (N_bf x d).
    pub fn face_normals(&self) -> Result<Vec<f64>, MeshError> {
        let d = self.dim;
        let mut out = vec![0.0; self.n_boundary_facets() * d];
        if d == 1 {
            for f in 0..self.n_boundary_facets() {
                let v = self.facet(f)[0];
                let vs = self.elem(self.boundary_elem[f]);
                let other = if vs[0] == v { vs[1] } else { vs[0] };
                out[f] = (self.coords[v] - self.coords[other]).signum();
            }
            return Ok(out);
        }
        for f in 0..self.n_boundary_facets() {
            let n = facet_normal(d, &self.coords, self.facet(f));
            let len = norm(&n[..d]);
            if len <= 1e-300 {
                return Err(MeshError::DegenerateFacet { facet: f });
            }
            for r in 0..d {
                out[f * d + r] = n[r] / len;
            }
        }
        Ok(out)
    }

    /// Outward unit normals at the vertices: facet-measure-weighted averages
    /// on the boundary, `[1, ..., 1]^T / sqrt(d)` at interior vertices.
    pub fn vertex_normals(&self) -> Result<Vec<f64>, MeshError> {
        let d = self.dim;
        let nv = self.n_vertices();
        let fnorm = self.face_normals()?;
        let mut acc = vec![0.0; nv * d];
        let mut on_boundary = vec![false; nv];
        for f in 0..self.n_boundary_facets() {
            let w = if d == 1 { 1.0 } else { self.facet_measure(f) };
            for &v in self.facet(f) {
                on_boundary[v] = true;
                for r in 0..d {
                    acc[v * d + r] += w * fnorm[f * d + r];
                }
            }
        }
        let interior = 1.0 / (d as f64).sqrt();
        for v in 0..nv {
            if on_boundary[v] {
                let len = norm(&acc[v * d..v * d + d]);
                if len <= 1e-300 {
                    return Err(MeshError::DegenerateFacet { facet: v });
                }
                for r in 0..d {
                    acc[v * d + r] /= len;
                }
            } else {
                for r in 0..d {
                    acc[v * d + r] = interior;
                }
            }
        }
        Ok(acc)
    }

    /// Merges two non-overlapping meshes, unifying coincident vertices and
    /// recomputing the boundary (shared interface facets become interior).
    pub fn merge(&self, other: &Mesh) -> Result<Mesh, MeshError> {
        if self.dim != other.dim {
            return Err(MeshError::DimMismatch(self.dim, other.dim));
        }
        if other.is_empty_mesh() {
            return Ok(self.clone());
        }
        if self.is_empty_mesh() {
            return Ok(other.clone());
        }
        let d = self.dim;
        let all_coords: Vec<f64> = self.coords.iter().chain(other.coords.iter()).copied().collect();
        let n_total = all_coords.len() / d;
        // coincidence tolerance: 1e-10 x bounding-box diameter of the union
        let mut lo = vec![f64::INFINITY; d];
        let mut hi = vec![f64::NEG_INFINITY; d];
        for i in 0..n_total {
            for r in 0..d {
                lo[r] = lo[r].min(all_coords[i * d + r]);
                hi[r] = hi[r].max(all_coords[i * d + r]);
            }
        }
        let diam = lo.iter().zip(&hi).map(|(a, b)| (b - a) * (b - a)).sum::<f64>().sqrt();
        let tol = 1e-10 * diam.max(1e-300);
        // hash-grid on cells of size tol: candidates in the 3^d neighborhood
        let cell = |x: &[f64]| -> [i64; 3] {
            let mut c = [0i64; 3];
            for r in 0..d {
                c[r] = ((x[r] - lo[r]) / tol.max(1e-300)).floor() as i64;
            }
            c
        };
        let mut grid: std::collections::HashMap<[i64; 3], Vec<usize>> =
            std::collections::HashMap::new();
        let mut remap = vec![usize::MAX; n_total];
        let mut kept_coords: Vec<f64> = Vec::new();
        for i in 0..n_total {
            let x = &all_coords[i * d..(i + 1) * d];
            let c = cell(x);
            let mut found = None;
            'search: for dz in -1..=1i64 {
                for dy in -1..=1i64 {
                    for dx in -1..=1i64 {
                        let key = [c[0] + dx, if d > 1 { c[1] + dy } else { 0 }, if d > 2 { c[2] + dz } else { 0 }];
                        if let Some(list) = grid.get(&key) {
                            for &j in list {
                                let y = &kept_coords[j * d..(j + 1) * d];
                                let dist2: f64 =
                                    x.iter().zip(y).map(|(a, b)| (a - b) * (a - b)).sum();
                                if dist2 <= tol * tol {
                                    found = Some(j);
                                    break 'search;
                                }
                            }
                        }
                        if d < 3 && dz != 0 {
                            break;
                        }
                    }
                    if d < 2 && dy != 0 {
                        break;
                    }
                }
            }
            match found {
                Some(j) => remap[i] = j,
                None => {
                    let j = kept_coords.len() / d;
                    kept_coords.extend_from_slice(x);
                    grid.entry(c).or_default().push(j);
                    remap[i] = j;
                }
            }
        }
        let off = self.n_vertices();
        let mut elems = Vec::with_capacity(self.elems.len() + other.elems.len());
        for &v in &self.elems {
            elems.push(remap[v]);
        }
        for &v in &other.elems {
            elems.push(remap[off + v]);
        }
        Mesh::new(d, kept_coords, elems, None)
    }

    /// Removes the listed vertices and every element incident to them;
    /// remaining vertices are compactly reindexed.
    pub fn remove_nodes(&self, ids: &[usize]) -> Result<Mesh, MeshError> {
        let d = self.dim;
        let nv = self.n_vertices();
        let mut removed = vec![false; nv];
        for &id in ids {
            if id >= nv {
                return Err(MeshError::BadVertexIndex { idx: id, n_vertices: nv });
            }
            removed[id] = true;
        }
        if removed.iter().all(|&r| r) {
            return Err(MeshError::Empty);
        }
        let mut remap = vec![usize::MAX; nv];
        let mut coords = Vec::new();
        let mut next = 0;
        for v in 0..nv {
            if !removed[v] {
                remap[v] = next;
                next += 1;
                coords.extend_from_slice(self.vertex(v));
            }
        }
        let mut elems = Vec::new();
        for e in 0..self.n_elements() {
            let vs = self.elem(e);
            if vs.iter().all(|&v| !removed[v]) {
                elems.extend(vs.iter().map(|&v| remap[v]));
            }
        }
        if elems.is_empty() {
            return Err(MeshError::Empty);
        }
        Mesh::new(d, coords, elems, None)
    }

    /// Uniformly refines `level` times; each level splits every element into
    /// 2^d children. Returns the fine mesh and the fine-to-coarse element map.
    pub fn uniform_refine(&self, level: usize) -> (Mesh, Vec<usize>) {
        refine::uniform_refine(self, level)
    }
}

pub(crate) fn factorial(d: usize) -> f64 {
    match d {
        0 | 1 => 1.0,
        2 => 2.0,
        3 => 6.0,
        _ => (1..=d).map(|k| k as f64).product(),
    }
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Geometric (unnormalized) normal of a facet given by vertex ids, using the
/// stored orientation.
fn facet_normal(d: usize, coords: &[f64], facet: &[usize]) -> [f64; 3] {
    let x = |v: usize, r: usize| coords[v * d + r];
    match d {
        1 => [1.0, 0.0, 0.0], // orientation resolved by the caller via stored sign convention
        2 => {
            let (a, b) = (facet[0], facet[1]);
            let (dx, dy) = (x(b, 0) - x(a, 0), x(b, 1) - x(a, 1));
            [dy, -dx, 0.0]
        }
        3 => {
            let (a, b, c) = (facet[0], facet[1], facet[2]);
            let u = [x(b, 0) - x(a, 0), x(b, 1) - x(a, 1), x(b, 2) - x(a, 2)];
            let v = [x(c, 0) - x(a, 0), x(c, 1) - x(a, 1), x(c, 2) - x(a, 2)];
            [
                u[1] * v[2] - u[2] * v[1],
                u[2] * v[0] - u[0] * v[2],
                u[0] * v[1] - u[1] * v[0],
            ]
        }
        _ => unreachable!(),
    }
}

pub(crate) fn facet_measure_of(d: usize, coords: &[f64], facet: &[usize]) -> f64 {
    match d {
        1 => 1.0,
        2 | 3 => {
            let n = facet_normal(d, coords, facet);
            let len = norm(&n[..d]);
            if d == 2 {
                len
            } else {
                0.5 * len
            }
        }
        _ => unreachable!(),
    }
}

/// Orders facet vertices so the geometric normal points away from the
/// adjacent element centroid. In 1D the convention is carried by the caller.
fn orient_facet_outward(d: usize, coords: &[f64], facet: &[usize], centroid: &[f64]) -> Vec<usize> {
    let mut f = facet.to_vec();
    if d == 1 {
        return f;
    }
    let n = facet_normal(d, coords, &f);
    let a = f[0];
    let to_centroid: Vec<f64> = (0..d).map(|r| centroid[r] - coords[a * d + r]).collect();
    let dot: f64 = n[..d].iter().zip(&to_centroid).map(|(x, y)| x * y).sum();
    if dot > 0.0 {
        f.swap(d - 2, d - 1);
    }
    f
}

#[cfg(test)]
mod tests;
