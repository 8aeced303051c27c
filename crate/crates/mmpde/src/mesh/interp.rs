//! P1 interpolation: point location by barycentric walk and Delaunay
//! triangulation of scattered vertices (Bowyer-Watson insertion).

use super::{Mesh, MeshError};

/// Point locator over a fixed mesh, with a warm-started barycentric walk and
/// an exhaustive fallback.
pub struct MeshLocator<'a> {
    mesh: &'a Mesh,
    adj: Vec<usize>,
    last: std::cell::Cell<usize>,
}

const BARY_TOL: f64 = 1e-10;

impl<'a> MeshLocator<'a> {
    pub fn new(mesh: &'a Mesh) -> Self {
        Self { mesh, adj: mesh.elem_adjacency(), last: std::cell::Cell::new(0) }
    }

    /// Finds the element whose closed hull contains `p` (barycentric
    /// coordinates all >= -1e-10). When `p` is outside the mesh, returns the
    /// element with the largest minimum barycentric coordinate and `false`.
    pub fn locate(&self, p: &[f64]) -> (usize, Vec<f64>, bool) {
        let d = self.mesh.dim();
        let ne = self.mesh.n_elements();
        let mut bary = vec![0.0; d + 1];
        let mut e = self.last.get().min(ne - 1);
        let mut steps = 0usize;
        loop {
            self.mesh.barycentric(e, p, &mut bary);
            let (mut argmin, mut minv) = (0, bary[0]);
            for k in 1..=d {
                if bary[k] < minv {
                    minv = bary[k];
                    argmin = k;
                }
            }
            if minv >= -BARY_TOL {
                self.last.set(e);
                return (e, bary, true);
            }
            // cross the facet of the most negative coordinate; fall back to
            // any other negative coordinate with an interior neighbor
            let mut next = self.adj[e * (d + 1) + argmin];
            if next == usize::MAX {
                let mut order: Vec<usize> = (0..=d).collect();
                order.sort_by(|&a, &b| bary[a].partial_cmp(&bary[b]).unwrap());
                next = usize::MAX;
                for &k in &order {
                    if bary[k] < -BARY_TOL && self.adj[e * (d + 1) + k] != usize::MAX {
                        next = self.adj[e * (d + 1) + k];
                        break;
                    }
                }
            }
            steps += 1;
            if next == usize::MAX || steps > 2 * ne + 16 {
                return self.exhaustive(p);
            }
            e = next;
        }
    }

    fn exhaustive(&self, p: &[f64]) -> (usize, Vec<f64>, bool) {
        let d = self.mesh.dim();
        let mut bary = vec![0.0; d + 1];
        let mut best = (0usize, f64::NEG_INFINITY);
        for e in 0..self.mesh.n_elements() {
            self.mesh.barycentric(e, p, &mut bary);
            let minv = bary.iter().cloned().fold(f64::INFINITY, f64::min);
            if minv > best.1 {
                best = (e, minv);
                if minv >= -BARY_TOL {
                    break;
                }
            }
        }
        let (e, minv) = best;
        self.mesh.barycentric(e, p, &mut bary);
        self.last.set(e);
        (e, bary, minv >= -BARY_TOL)
    }
}

/// P1 (barycentric) interpolation of vertex data `f` (`n_vertices x k`,
/// row-major) at query points `qp` (`n_q x d`). With `use_delaunay` the
/// values are interpolated over a freshly built Delaunay triangulation of
/// the mesh vertices; otherwise over the given connectivity. Exterior query
/// points use the nearest element's linear extension.
pub fn lin_interp(
    f: &[f64],
    k: usize,
    mesh: &Mesh,
    qp: &[f64],
    use_delaunay: bool,
) -> Result<Vec<f64>, MeshError> {
    let d = mesh.dim();
    if mesh.is_empty_mesh() {
        return Err(MeshError::Empty);
    }
    if f.len() != mesh.n_vertices() * k {
        return Err(MeshError::Invalid(format!(
            "field has {} entries, expected {} x {}",
            f.len(),
            mesh.n_vertices(),
            k
        )));
    }
    if qp.len() % d != 0 {
        return Err(MeshError::Invalid("query point array length mismatch".into()));
    }
    let owned;
    let active: &Mesh = if use_delaunay {
        owned = delaunay(d, mesh.coords())?;
        &owned
    } else {
        mesh
    };
    let locator = MeshLocator::new(active);
    let nq = qp.len() / d;
    let mut out = vec![0.0; nq * k];
    for q in 0..nq {
        let p = &qp[q * d..(q + 1) * d];
        let (e, bary, _inside) = locator.locate(p);
        let vs = active.elem(e);
        for c in 0..k {
            let mut s = 0.0;
            for (j, &v) in vs.iter().enumerate() {
                s += bary[j] * f[v * k + c];
            }
            out[q * k + c] = s;
        }
    }
    Ok(out)
}

/// Delaunay triangulation of a point set by Bowyer-Watson insertion.
/// The returned mesh references the input points by their original indices.
pub fn delaunay(dim: usize, points: &[f64]) -> Result<Mesh, MeshError> {
    match dim {
        1 => {
            let n = points.len();
            if n < 2 {
                return Err(MeshError::Empty);
            }
            let mut order: Vec<usize> = (0..n).collect();
            order.sort_by(|&a, &b| points[a].partial_cmp(&points[b]).unwrap());
            let elems: Vec<usize> = order.windows(2).flat_map(|w| [w[0], w[1]]).collect();
            Mesh::new(1, points.to_vec(), elems, None)
        }
        2 | 3 => bowyer_watson(dim, points),
        _ => Err(MeshError::BadDim(dim)),
    }
}

struct BwCell {
    verts: Vec<usize>,     // d+1 vertex ids, positively oriented
    neighbors: Vec<usize>, // across facet opposite local vertex k
    alive: bool,
}

struct BwState<'a> {
    d: usize,
    pts: Vec<f64>, // input points followed by super-simplex vertices
    jitter: Vec<f64>,
    cells: Vec<BwCell>,
    last: usize,
    _marker: std::marker::PhantomData<&'a ()>,
}

impl BwState<'_> {
    fn coord(&self, v: usize, r: usize) -> f64 {
        self.pts[v * self.d + r] + self.jitter[v * self.d + r]
    }

    fn signed_vol(&self, verts: &[usize]) -> f64 {
        let d = self.d;
        let mut em = [0.0; 9];
        for j in 0..d {
            for r in 0..d {
                em[j * d + r] = self.coord(verts[j + 1], r) - self.coord(verts[0], r);
            }
        }
        crate::smallmat::det_one(d, &em[..d * d])
    }

    /// Positive when `p` is strictly inside the circumsphere of `cell`
    /// (lifted determinant; sign fixed for positively oriented cells).
    fn insphere(&self, cell: usize, p: usize) -> f64 {
        let d = self.d;
        let vs = &self.cells[cell].verts;
        let mut m = [[0.0f64; 4]; 4];
        let mut scale: f64 = 0.0;
        for (row, &v) in vs.iter().enumerate() {
            let mut nrm2 = 0.0;
            for r in 0..d {
                let diff = self.coord(v, r) - self.coord(p, r);
                m[row][r] = diff;
                nrm2 += diff * diff;
                scale = scale.max(diff.abs());
            }
            m[row][d] = nrm2;
        }
        let det = match d {
            2 => det3(&m),
            3 => det4(&m),
            _ => unreachable!(),
        };
        let tol = 1e-11 * scale.powi(d as i32 + 2);
        let val = if d == 2 { det } else { -det };
        if val.abs() <= tol {
            0.0
        } else {
            val
        }
    }

    fn locate(&self, p: usize) -> usize {
        let d = self.d;
        let mut e = self.last;
        if !self.cells[e].alive {
            e = self.cells.iter().position(|c| c.alive).expect("no live cells");
        }
        let mut steps = 0;
        loop {
            // barycentric test via signed volumes of sub-simplices
            let vs = self.cells[e].verts.clone();
            let total = self.signed_vol(&vs);
            let (mut argmin, mut minv) = (0usize, f64::INFINITY);
            for k in 0..=d {
                let mut sub = vs.clone();
                sub[k] = p;
                let b = self.signed_vol(&sub) / total;
                if b < minv {
                    minv = b;
                    argmin = k;
                }
            }
            if minv >= -1e-13 {
                return e;
            }
            let next = self.cells[e].neighbors[argmin];
            steps += 1;
            if next == usize::MAX || steps > 4 * self.cells.len() + 16 {
                // exhaustive fallback
                for (i, c) in self.cells.iter().enumerate() {
                    if !c.alive {
                        continue;
                    }
                    let total = self.signed_vol(&c.verts);
                    let ok = (0..=d).all(|k| {
                        let mut sub = c.verts.clone();
                        sub[k] = p;
                        self.signed_vol(&sub) / total >= -1e-13
                    });
                    if ok {
                        return i;
                    }
                }
                return e;
            }
            e = next;
        }
    }

    /// Inserts point `p`. `inclusive` grows the cavity through zero-valued
    /// (cospherical) tests. Returns false when the cavity produced an invalid
    /// (non-positive) cell, leaving the triangulation untouched.
    fn insert(&mut self, p: usize, inclusive: bool) -> bool {
        let d = self.d;
        let seed = self.locate(p);
        // flood fill the cavity
        let mut in_cavity = std::collections::HashSet::new();
        let mut stack = vec![seed];
        in_cavity.insert(seed);
        while let Some(c) = stack.pop() {
            for k in 0..=d {
                let nb = self.cells[c].neighbors[k];
                if nb == usize::MAX || in_cavity.contains(&nb) {
                    continue;
                }
                let v = self.insphere(nb, p);
                let inside = if inclusive { v >= 0.0 } else { v > 0.0 };
                if inside {
                    in_cavity.insert(nb);
                    stack.push(nb);
                }
            }
        }
        // cavity boundary facets: (facet vertices, outside neighbor, its local index)
        let mut facets: Vec<(Vec<usize>, usize)> = Vec::new();
        for &c in &in_cavity {
            for k in 0..=d {
                let nb = self.cells[c].neighbors[k];
                if nb != usize::MAX && in_cavity.contains(&nb) {
                    continue;
                }
                let facet: Vec<usize> = (0..=d)
                    .filter(|&j| j != k)
                    .map(|j| self.cells[c].verts[j])
                    .collect();
                facets.push((facet, nb));
            }
        }
        // build candidate cells, all positively oriented
        let mut new_cells: Vec<(Vec<usize>, usize)> = Vec::new();
        for (facet, outside) in &facets {
            let mut verts = vec![p];
            verts.extend_from_slice(facet);
            let vol = self.signed_vol(&verts);
            let mut scale: f64 = 0.0;
            for &v in &verts {
                for r in 0..d {
                    scale = scale.max(self.coord(v, r).abs());
                }
            }
            if vol.abs() <= 1e-13 * scale.powi(d as i32) {
                return false;
            }
            if vol < 0.0 {
                verts.swap(d - 1, d);
            }
            new_cells.push((verts, *outside));
        }
        // commit: retire cavity, add cells, rebuild local adjacency
        for &c in &in_cavity {
            self.cells[c].alive = false;
        }
        let base = self.cells.len();
        let mut facet_map: std::collections::HashMap<Vec<usize>, (usize, usize)> =
            std::collections::HashMap::new();
        for (i, (verts, outside)) in new_cells.into_iter().enumerate() {
            let id = base + i;
            let mut neighbors = vec![usize::MAX; d + 1];
            for k in 0..=d {
                let mut facet: Vec<usize> =
                    (0..=d).filter(|&j| j != k).map(|j| verts[j]).collect();
                facet.sort_unstable();
                if !facet.contains(&p) {
                    // outer facet: link to the surviving outside cell
                    neighbors[k] = outside;
                    if outside != usize::MAX {
                        let nb = &mut self.cells[outside];
                        for kk in 0..=d {
                            let mut nf: Vec<usize> = (0..=d)
                                .filter(|&j| j != kk)
                                .map(|j| nb.verts[j])
                                .collect();
                            nf.sort_unstable();
                            if nf == facet {
                                nb.neighbors[kk] = id;
                                break;
                            }
                        }
                    }
                } else if let Some(&(other, other_k)) = facet_map.get(&facet) {
                    neighbors[k] = other;
                    self.cells[other].neighbors[other_k] = id;
                } else {
                    facet_map.insert(facet, (id, k));
                }
            }
            self.cells.push(BwCell { verts, neighbors, alive: true });
        }
        self.last = self.cells.len() - 1;
        true
    }
}

fn det3(m: &[[f64; 4]; 4]) -> f64 {
    m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1])
        - m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0])
        + m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0])
}

fn det4(m: &[[f64; 4]; 4]) -> f64 {
    let mut det = 0.0;
    for c in 0..4 {
        let mut sub = [[0.0; 4]; 4];
        for r in 1..4 {
            let mut cc = 0;
            for c2 in 0..4 {
                if c2 == c {
                    continue;
                }
                sub[r - 1][cc] = m[r][c2];
                cc += 1;
            }
        }
        let cof = det3(&sub);
        det += if c % 2 == 0 { 1.0 } else { -1.0 } * m[0][c] * cof;
    }
    det
}

fn bowyer_watson(d: usize, points: &[f64]) -> Result<Mesh, MeshError> {
    let n = points.len() / d;
    if n < d + 1 {
        return Err(MeshError::Invalid("too few points for a triangulation".into()));
    }
    // bounding box and super simplex
    let mut lo = vec![f64::INFINITY; d];
    let mut hi = vec![f64::NEG_INFINITY; d];
    for i in 0..n {
        for r in 0..d {
            lo[r] = lo[r].min(points[i * d + r]);
            hi[r] = hi[r].max(points[i * d + r]);
        }
    }
    let diam = lo
        .iter()
        .zip(&hi)
        .map(|(a, b)| (b - a) * (b - a))
        .sum::<f64>()
        .sqrt()
        .max(1.0);
    let center: Vec<f64> = lo.iter().zip(&hi).map(|(a, b)| 0.5 * (a + b)).collect();
    let big = 16.0 * diam;
    let mut pts = points.to_vec();
    // super simplex: scaled regular simplex around the center
    let unit: Vec<Vec<f64>> = match d {
        2 => vec![vec![0.0, 2.0], vec![-1.732, -1.0], vec![1.732, -1.0]],
        3 => vec![
            vec![1.0, 1.0, 1.0],
            vec![1.0, -1.0, -1.0],
            vec![-1.0, 1.0, -1.0],
            vec![-1.0, -1.0, 1.0],
        ],
        _ => unreachable!(),
    };
    for v in &unit {
        for r in 0..d {
            pts.push(center[r] + big * v[r]);
        }
    }
    let super_ids: Vec<usize> = (n..n + d + 1).collect();

    for attempt in 0..6 {
        let mut jitter = vec![0.0; pts.len()];
        if attempt > 0 {
            // deterministic jitter applied to predicates only
            let amp = 1e-12 * diam * 10f64.powi(attempt);
            let mut state = 0x9e3779b97f4a7c15u64 ^ (attempt as u64);
            for (i, j) in jitter.iter_mut().enumerate() {
                if i < n * d {
                    state = state
                        .wrapping_add(i as u64)
                        .wrapping_mul(0xbf58476d1ce4e5b9)
                        .rotate_left(31);
                    *j = amp * (((state >> 11) as f64 / (1u64 << 53) as f64) - 0.5);
                }
            }
        }
        let mut root_verts: Vec<usize> = super_ids.clone();
        let mut state = BwState {
            d,
            pts: pts.clone(),
            jitter,
            cells: Vec::new(),
            last: 0,
            _marker: std::marker::PhantomData,
        };
        if state.signed_vol(&root_verts) < 0.0 {
            root_verts.swap(d - 1, d);
        }
        state.cells.push(BwCell {
            verts: root_verts,
            neighbors: vec![usize::MAX; d + 1],
            alive: true,
        });
        let mut ok = true;
        'points: for p in 0..n {
            for mode in [true, false] {
                if state.insert(p, mode) {
                    continue 'points;
                }
            }
            ok = false;
            break;
        }
        if !ok {
            continue;
        }
        let mut elems = Vec::new();
        for c in &state.cells {
            if c.alive && c.verts.iter().all(|&v| v < n) {
                elems.extend_from_slice(&c.verts);
            }
        }
        if elems.is_empty() {
            continue;
        }
        match Mesh::new(d, points.to_vec(), elems, None) {
            Ok(m) => return Ok(m),
            Err(_) => continue,
        }
    }
    Err(MeshError::Invalid(
        "Delaunay triangulation failed (degenerate point set)".into(),
    ))
}
