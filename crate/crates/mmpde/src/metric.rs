//! Gradient/Hessian recovery from P1 data and construction of metric
//! tensor fields for mesh adaptation.

use crate::mesh::{Mesh, MeshError};
use crate::smallmat::{self, MatBatch, SmallMatError};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum MetricError {
    #[error(transparent)]
    Mesh(#[from] MeshError),
    #[error(transparent)]
    SmallMat(#[from] SmallMatError),
    #[error("alpha must be positive, got {0}")]
    BadAlpha(f64),
    #[error("vertex {0} has no incident elements")]
    IsolatedVertex(usize),
    #[error("size mismatch: {0}")]
    SizeMismatch(String),
    #[error("metric is not SPD at vertex {vertex} (lambda_min = {lambda_min:e})")]
    NotSpd { vertex: usize, lambda_min: f64 },
}

/// Per-vertex symmetric positive definite metric tensor field.
#[derive(Debug, Clone)]
pub struct MetricField {
    values: MatBatch,
}

impl MetricField {
    /// Validates symmetry and positive definiteness of every tensor.
    pub fn new(values: MatBatch) -> Result<Self, MetricError> {
        let d = values.dim();
        let (lambdas, _) = smallmat::sym_eig(&values)?;
        for i in 0..values.len() {
            let lmin = lambdas[i * d];
            if lmin <= 0.0 {
                return Err(MetricError::NotSpd { vertex: i, lambda_min: lmin });
            }
        }
        Ok(Self { values })
    }

    pub(crate) fn from_batch_unchecked(values: MatBatch) -> Self {
        Self { values }
    }

    pub fn identity(d: usize, n: usize) -> Self {
        Self { values: MatBatch::identity(d, n) }
    }

    /// Constant field holding `n` copies of one matrix (column-major).
    pub fn splat(d: usize, n: usize, m: &[f64]) -> Result<Self, MetricError> {
        Self::new(MatBatch::splat(d, n, m))
    }

    pub fn values(&self) -> &MatBatch {
        &self.values
    }

    pub fn dim(&self) -> usize {
        self.values.dim()
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// det(M)^(p) at a vertex.
    pub fn det_at(&self, v: usize) -> f64 {
        smallmat::det_one(self.values.dim(), self.values.row(v))
    }
}

fn check_field(u: &[f64], mesh: &Mesh, k: usize) -> Result<(), MetricError> {
    if u.len() != mesh.n_vertices() * k {
        return Err(MetricError::SizeMismatch(format!(
            "field has {} entries, expected {} x {}",
            u.len(),
            mesh.n_vertices(),
            k
        )));
    }
    Ok(())
}

/// Exact P1 gradients of `u` on the elements (`N x d`, constant per element).
pub fn grad_k_recovery(u: &[f64], mesh: &Mesh) -> Result<Vec<f64>, MetricError> {
    check_field(u, mesh, 1)?;
    let d = mesh.dim();
    let ne = mesh.n_elements();
    let mut out = vec![0.0; ne * d];
    let mut em = [0.0; 9];
    let mut inv = [0.0; 9];
    for e in 0..ne {
        mesh.edge_matrix(e, &mut em);
        let scale = em[..d * d].iter().fold(0.0f64, |a, &v| a.max(v.abs()));
        let det = smallmat::det_one(d, &em[..d * d]);
        if det.abs() <= 1e-14 * scale.powi(d as i32).max(1e-300) {
            return Err(MeshError::DegenerateElement { elem: e, volume: det }.into());
        }
        smallmat::inv_one(d, &em[..d * d], &mut inv);
        let vs = mesh.elem(e);
        let u0 = u[vs[0]];
        for r in 0..d {
            let mut g = 0.0;
            for j in 0..d {
                // grad = E^{-T} (u_j - u_0): row j of E^{-1} is inv[r*d + j]
                g += inv[r * d + j] * (u[vs[j + 1]] - u0);
            }
            out[e * d + r] = g;
        }
    }
    Ok(out)
}

/// Volume-averaged vertex gradients (`N_v x d`).
pub fn grad_recovery(u: &[f64], mesh: &Mesh) -> Result<Vec<f64>, MetricError> {
    let gk = grad_k_recovery(u, mesh)?;
    elem_to_vertex_average(&gk, mesh.dim(), mesh)
}

/// Volume-weighted average of per-element data onto the vertices.
fn elem_to_vertex_average(ge: &[f64], k: usize, mesh: &Mesh) -> Result<Vec<f64>, MetricError> {
    let nv = mesh.n_vertices();
    let mut out = vec![0.0; nv * k];
    let mut wsum = vec![0.0; nv];
    for e in 0..mesh.n_elements() {
        let w = mesh.volume(e);
        for &v in mesh.elem(e) {
            wsum[v] += w;
            for c in 0..k {
                out[v * k + c] += w * ge[e * k + c];
            }
        }
    }
    for v in 0..nv {
        if wsum[v] <= 0.0 {
            return Err(MetricError::IsolatedVertex(v));
        }
        for c in 0..k {
            out[v * k + c] /= wsum[v];
        }
    }
    Ok(out)
}

/// Recovered vertex gradients and symmetrized vertex Hessians: the Hessian
/// is the vertex recovery of each recovered-gradient component, symmetrized.
pub fn grad_hessian_recovery(u: &[f64], mesh: &Mesh) -> Result<(Vec<f64>, MatBatch), MetricError> {
    let d = mesh.dim();
    let nv = mesh.n_vertices();
    let grad = grad_recovery(u, mesh)?;
    // second-stage recovery component by component
    let mut comp = vec![0.0; nv];
    let mut rows = vec![0.0; nv * d * d]; // G: row k = grad of gradient component k
    for k in 0..d {
        for v in 0..nv {
            comp[v] = grad[v * d + k];
        }
        let gk = grad_recovery(&comp, mesh)?;
        for v in 0..nv {
            for r in 0..d {
                // entry (k, r) of G at vertex v
                rows[v * d * d + r * d + k] = gk[v * d + r];
            }
        }
    }
    let mut h = MatBatch::zeros(d, nv);
    for v in 0..nv {
        for r in 0..d {
            for c in 0..d {
                let g_rc = rows[v * d * d + c * d + r];
                let g_cr = rows[v * d * d + r * d + c];
                h.set(v, r, c, 0.5 * (g_rc + g_cr));
            }
        }
    }
    Ok((grad, h))
}

/// Arclength metric: `sqrt(1 + sum_k |grad u_k|^2) * I` at each vertex.
pub fn metric_arclength(u: &[f64], npde: usize, mesh: &Mesh) -> Result<MetricField, MetricError> {
    check_field(u, mesh, npde)?;
    let d = mesh.dim();
    let nv = mesh.n_vertices();
    let mut mag2 = vec![0.0; nv];
    let mut comp = vec![0.0; nv];
    for k in 0..npde {
        for v in 0..nv {
            comp[v] = u[v * npde + k];
        }
        let g = grad_recovery(&comp, mesh)?;
        for v in 0..nv {
            for r in 0..d {
                mag2[v] += g[v * d + r] * g[v * d + r];
            }
        }
    }
    let mut values = MatBatch::zeros(d, nv);
    for v in 0..nv {
        let s = (1.0 + mag2[v]).sqrt();
        for r in 0..d {
            values.set(v, r, r, s);
        }
    }
    Ok(MetricField::from_batch_unchecked(values))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorNorm {
    /// Optimize the L2 norm of linear interpolation error (order 0).
    L2,
    /// Optimize the H1 seminorm of linear interpolation error (order 1).
    H1,
}

impl ErrorNorm {
    fn exponent(self, d: usize) -> f64 {
        match self {
            ErrorNorm::L2 => -1.0 / (d as f64 + 4.0),
            ErrorNorm::H1 => -1.0 / (d as f64 + 2.0),
        }
    }
}

/// Anisotropic interpolation-error metric: `det(A)^q A` with
/// `A = I + |H|/alpha` built from the recovered Hessian.
pub fn metric(u: &[f64], mesh: &Mesh, alpha: f64, norm: ErrorNorm) -> Result<MetricField, MetricError> {
    metric_impl(u, mesh, alpha, norm, false)
}

/// Isotropic variant: `|H|` is replaced by `||H||_2 I` before scaling.
pub fn metric_iso(u: &[f64], mesh: &Mesh, alpha: f64, norm: ErrorNorm) -> Result<MetricField, MetricError> {
    metric_impl(u, mesh, alpha, norm, true)
}

fn metric_impl(
    u: &[f64],
    mesh: &Mesh,
    alpha: f64,
    norm: ErrorNorm,
    iso: bool,
) -> Result<MetricField, MetricError> {
    if alpha <= 0.0 {
        return Err(MetricError::BadAlpha(alpha));
    }
    check_field(u, mesh, 1)?;
    let d = mesh.dim();
    let nv = mesh.n_vertices();
    let (_, hess) = grad_hessian_recovery(u, mesh)?;
    let (lambdas, q) = smallmat::sym_eig(&hess)?;
    let expo = norm.exponent(d);
    let mut values = MatBatch::zeros(d, nv);
    let dd = d * d;
    let mut a = vec![0.0; dd];
    for v in 0..nv {
        let lam = &lambdas[v * d..(v + 1) * d];
        if iso {
            let spec = lam.iter().fold(0.0f64, |acc, &l| acc.max(l.abs()));
            let diag = 1.0 + spec / alpha;
            let scale = diag.powi(d as i32).powf(expo) * diag;
            for r in 0..d {
                values.set(v, r, r, scale);
            }
        } else {
            // A = I + Q |Lambda| Q^T / alpha
            let abs_lam: Vec<f64> = lam.iter().map(|&l| 1.0 + l.abs() / alpha).collect();
            smallmat::recompose_one(d, &abs_lam, q.row(v), &mut a);
            let det_a = abs_lam.iter().product::<f64>();
            let scale = det_a.powf(expo);
            for k in 0..dd {
                values.row_mut(v)[k] = scale * a[k];
            }
        }
    }
    Ok(MetricField::from_batch_unchecked(values))
}

/// Intersection of two SPD fields by simultaneous diagonalization:
/// the result dominates both arguments in the quadratic-form order, and
/// diagonal pairs reduce to the elementwise maximum.
pub fn metric_intersection(m1: &MetricField, m2: &MetricField) -> Result<MetricField, MetricError> {
    let d = m1.dim();
    if m2.dim() != d || m2.len() != m1.len() {
        return Err(MetricError::SizeMismatch("metric fields differ in shape".into()));
    }
    let n = m1.len();
    let mut out = MatBatch::zeros(d, n);
    let mut l = vec![0.0; d * d];
    let mut linv = vec![0.0; d * d];
    let mut b = vec![0.0; d * d];
    let mut lam = vec![0.0; d];
    let mut q = vec![0.0; d * d];
    let mut r = vec![0.0; d * d];
    for i in 0..n {
        cholesky(d, m1.values.row(i), &mut l).map_err(|lmin| MetricError::NotSpd {
            vertex: i,
            lambda_min: lmin,
        })?;
        lower_inverse(d, &l, &mut linv);
        // B = L^{-1} M2 L^{-T}
        for c in 0..d {
            for rr in 0..d {
                let mut s = 0.0;
                for k1 in 0..d {
                    for k2 in 0..d {
                        s += linv[k1 * d + rr] * m2.values.get(i, k1, k2) * linv[k2 * d + c];
                    }
                }
                b[c * d + rr] = s;
            }
        }
        let bb = MatBatch::new(d, 1, b.clone())?;
        let (blam, bq) = smallmat::sym_eig(&bb)?;
        lam.copy_from_slice(&blam);
        q.copy_from_slice(bq.row(0));
        if lam[0] <= 0.0 {
            return Err(MetricError::NotSpd { vertex: i, lambda_min: lam[0] });
        }
        // R = L Q ; result = R diag(max(lam, 1)) R^T
        for c in 0..d {
            for rr in 0..d {
                let mut s = 0.0;
                for k in 0..d {
                    s += l[k * d + rr] * q[c * d + k];
                }
                r[c * d + rr] = s;
            }
        }
        let capped: Vec<f64> = lam.iter().map(|&v| v.max(1.0)).collect();
        let mut res = vec![0.0; d * d];
        smallmat::recompose_one(d, &capped, &r, &mut res);
        out.row_mut(i).copy_from_slice(&res);
    }
    Ok(MetricField::from_batch_unchecked(out))
}

/// Cholesky factor L (column-major, lower) of an SPD matrix; on failure
/// returns the offending pivot.
fn cholesky(d: usize, m: &[f64], l: &mut [f64]) -> Result<(), f64> {
    l.fill(0.0);
    for c in 0..d {
        let mut diag = m[c * d + c];
        for k in 0..c {
            diag -= l[k * d + c] * l[k * d + c];
        }
        if diag <= 0.0 {
            return Err(diag);
        }
        let lcc = diag.sqrt();
        l[c * d + c] = lcc;
        for r in (c + 1)..d {
            let mut s = m[c * d + r];
            for k in 0..c {
                s -= l[k * d + r] * l[k * d + c];
            }
            l[c * d + r] = s / lcc;
        }
    }
    Ok(())
}

/// Inverse of a lower-triangular matrix (column-major).
fn lower_inverse(d: usize, l: &[f64], out: &mut [f64]) {
    out.fill(0.0);
    for c in 0..d {
        out[c * d + c] = 1.0 / l[c * d + c];
        for r in (c + 1)..d {
            let mut s = 0.0;
            for k in c..r {
                s += l[k * d + r] * out[c * d + k];
            }
            out[c * d + r] = -s / l[r * d + r];
        }
    }
}

/// Smooths the field `ncycles` times by volume-weighted averaging over each
/// vertex and its edge neighbors. SPD is preserved (convex combinations).
pub fn metric_smoothing(
    m: &MetricField,
    ncycles: usize,
    mesh: &Mesh,
) -> Result<MetricField, MetricError> {
    let d = m.dim();
    let nv = mesh.n_vertices();
    if m.len() != nv || d != mesh.dim() {
        return Err(MetricError::SizeMismatch("metric field does not match mesh".into()));
    }
    if ncycles == 0 {
        return Ok(m.clone());
    }
    let neighbors = mesh.vertex_neighbors();
    // vertex patch volumes as weights
    let mut wv = vec![0.0; nv];
    for e in 0..mesh.n_elements() {
        let w = mesh.volume(e);
        for &v in mesh.elem(e) {
            wv[v] += w;
        }
    }
    let dd = d * d;
    let mut cur = m.values.clone();
    for _ in 0..ncycles {
        let mut next = MatBatch::zeros(d, nv);
        for v in 0..nv {
            let mut wsum = wv[v];
            let row = cur.row(v);
            let acc = next.row_mut(v);
            for k in 0..dd {
                acc[k] = wv[v] * row[k];
            }
            for &u in &neighbors[v] {
                wsum += wv[u];
                let urow = cur.row(u);
                for k in 0..dd {
                    acc[k] += wv[u] * urow[k];
                }
            }
            for k in 0..dd {
                acc[k] /= wsum;
            }
        }
        cur = next;
    }
    Ok(MetricField::from_batch_unchecked(cur))
}

/// Restricts a fine-mesh metric to a coarse mesh: each coarse vertex takes
/// the volume-weighted average of fine-element metrics over the fine
/// elements contained in its incident coarse elements.
pub fn metric_f2c(
    m_fine: &MetricField,
    fine: &Mesh,
    parent: &[usize],
    coarse: &Mesh,
) -> Result<MetricField, MetricError> {
    let d = coarse.dim();
    if fine.dim() != d || m_fine.len() != fine.n_vertices() {
        return Err(MetricError::SizeMismatch("fine metric does not match fine mesh".into()));
    }
    if parent.len() != fine.n_elements() {
        return Err(MetricError::SizeMismatch("parent map does not match fine mesh".into()));
    }
    let nc = coarse.n_elements();
    if parent.iter().any(|&p| p >= nc) {
        return Err(MetricError::SizeMismatch("parent map references missing coarse element".into()));
    }
    let dd = d * d;
    // per-fine-element volume-weighted mean metric, accumulated per parent
    let mut acc = vec![0.0; nc * dd];
    let mut wsum = vec![0.0; nc];
    for ef in 0..fine.n_elements() {
        let w = fine.volume(ef);
        let p = parent[ef];
        wsum[p] += w;
        let vs = fine.elem(ef);
        for &v in vs {
            let row = m_fine.values.row(v);
            for k in 0..dd {
                acc[p * dd + k] += w * row[k] / (d + 1) as f64;
            }
        }
    }
    // coarse vertices: average over incident coarse elements
    let nv = coarse.n_vertices();
    let mut values = MatBatch::zeros(d, nv);
    let mut vw = vec![0.0; nv];
    for e in 0..nc {
        if wsum[e] <= 0.0 {
            return Err(MetricError::SizeMismatch(format!(
                "coarse element {e} has no fine children"
            )));
        }
        for &v in coarse.elem(e) {
            vw[v] += wsum[e];
            let row = values.row_mut(v);
            for k in 0..dd {
                row[k] += acc[e * dd + k];
            }
        }
    }
    for v in 0..nv {
        if vw[v] <= 0.0 {
            return Err(MetricError::IsolatedVertex(v));
        }
        let row = values.row_mut(v);
        for k in 0..dd {
            row[k] /= vw[v];
        }
    }
    Ok(MetricField::from_batch_unchecked(values))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::{interval_mesh, rect2tri};

    fn grid(n: usize) -> Vec<f64> {
        (0..=n).map(|i| i as f64 / n as f64).collect()
    }

    fn unit_square(n: usize) -> Mesh {
        rect2tri(&grid(n), &grid(n), 2).unwrap()
    }

    fn scalar_field(m: &Mesh, f: impl Fn(&[f64]) -> f64) -> Vec<f64> {
        (0..m.n_vertices()).map(|v| f(m.vertex(v))).collect()
    }

    #[test]
    fn gradk_exact_on_linears() {
        let m = unit_square(3);
        let u = scalar_field(&m, |x| x[0]);
        let g = grad_k_recovery(&u, &m).unwrap();
        for e in 0..m.n_elements() {
            assert!((g[e * 2] - 1.0).abs() < 1e-13);
            assert!(g[e * 2 + 1].abs() < 1e-13);
        }
        let c = scalar_field(&m, |_| 7.0);
        let gz = grad_k_recovery(&c, &m).unwrap();
        assert!(gz.iter().all(|&v| v.abs() < 1e-13));
    }

    #[test]
    fn gradk_approximates_quadratics() {
        // element gradients of x^2 are 2 x_centroid with O(h) error
        let m = unit_square(16);
        let u = scalar_field(&m, |x| x[0] * x[0]);
        let g = grad_k_recovery(&u, &m).unwrap();
        let mut c = [0.0; 2];
        for e in 0..m.n_elements() {
            m.elem_centroid(e, &mut c);
            assert!((g[e * 2] - 2.0 * c[0]).abs() < 2.0 / 16.0);
        }
    }

    #[test]
    fn grad_recovery_exact_on_affine() {
        let m = unit_square(4);
        let u = scalar_field(&m, |x| 3.0 * x[0] - 2.0 * x[1] + 1.0);
        let g = grad_recovery(&u, &m).unwrap();
        for v in 0..m.n_vertices() {
            assert!((g[v * 2] - 3.0).abs() < 1e-12);
            assert!((g[v * 2 + 1] + 2.0).abs() < 1e-12);
        }
    }

    #[test]
    fn grad_recovery_symmetric_interior() {
        // interior vertices of a symmetric 1D mesh: recovered d(x^2)/dx = 2 x_v
        let m = interval_mesh(&grid(10)).unwrap();
        let u = scalar_field(&m, |x| x[0] * x[0]);
        let g = grad_recovery(&u, &m).unwrap();
        for v in 1..10 {
            let x = m.vertex(v)[0];
            assert!((g[v] - 2.0 * x).abs() < 1e-12);
        }
        // boundary one-sided recovery is O(h) accurate
        let h = 0.1;
        assert!((g[0] - 0.0).abs() < 2.0 * h);
    }

    #[test]
    fn hessian_recovery_on_quadratic() {
        let m = unit_square(12);
        let u = scalar_field(&m, |x| x[0] * x[0]);
        let (_, h) = grad_hessian_recovery(&u, &m).unwrap();
        // symmetric output
        for v in 0..m.n_vertices() {
            assert!((h.get(v, 0, 1) - h.get(v, 1, 0)).abs() < 1e-13);
        }
        // away from the boundary the Hessian approaches diag(2, 0)
        for v in 0..m.n_vertices() {
            let x = m.vertex(v);
            if x[0] > 0.25 && x[0] < 0.75 && x[1] > 0.25 && x[1] < 0.75 {
                assert!((h.get(v, 0, 0) - 2.0).abs() < 0.2);
                assert!(h.get(v, 1, 1).abs() < 0.2);
            }
        }
        // affine data gives zero Hessian
        let a = scalar_field(&m, |x| 5.0 * x[0] + x[1]);
        let (_, hz) = grad_hessian_recovery(&a, &m).unwrap();
        assert!(hz.data().iter().all(|&v| v.abs() < 1e-10));
    }

    #[test]
    fn arclength_metric_cases() {
        let m = interval_mesh(&grid(5)).unwrap();
        let c = scalar_field(&m, |_| 3.0);
        let mc = metric_arclength(&c, 1, &m).unwrap();
        for v in 0..m.n_vertices() {
            assert!((mc.values().get(v, 0, 0) - 1.0).abs() < 1e-13);
        }
        let u = scalar_field(&m, |x| x[0]);
        let mu = metric_arclength(&u, 1, &m).unwrap();
        for v in 0..m.n_vertices() {
            assert!((mu.values().get(v, 0, 0) - 2f64.sqrt()).abs() < 1e-12);
        }
    }

    #[test]
    fn arclength_tracks_gradient_magnitude() {
        // lambda(M) is largest exactly where |grad u| is largest
        let m = interval_mesh(&grid(40)).unwrap();
        let u = scalar_field(&m, |x| (10.0 * (x[0] - 0.5)).tanh());
        let mf = metric_arclength(&u, 1, &m).unwrap();
        let vals: Vec<f64> = (0..m.n_vertices()).map(|v| mf.values().get(v, 0, 0)).collect();
        let peak = vals
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.partial_cmp(b.1).unwrap())
            .unwrap()
            .0;
        let x_peak = m.vertex(peak)[0];
        assert!((x_peak - 0.5).abs() < 0.08);
    }

    #[test]
    fn metric_identity_on_affine() {
        let m = unit_square(4);
        let u = scalar_field(&m, |x| x[0] + 2.0 * x[1]);
        for mf in [
            metric(&u, &m, 1.0, ErrorNorm::L2).unwrap(),
            metric_iso(&u, &m, 1.0, ErrorNorm::H1).unwrap(),
        ] {
            for v in 0..m.n_vertices() {
                assert!((mf.values().get(v, 0, 0) - 1.0).abs() < 1e-9);
                assert!((mf.values().get(v, 1, 1) - 1.0).abs() < 1e-9);
                assert!(mf.values().get(v, 0, 1).abs() < 1e-9);
            }
        }
        assert!(matches!(
            metric(&u, &m, 0.0, ErrorNorm::L2),
            Err(MetricError::BadAlpha(_))
        ));
    }

    #[test]
    fn metric_1d_hand_value() {
        // u = x^2, alpha = 1, order 0: A = 3, M = 3^{-1/5} * 3 = 3^{4/5}
        let m = interval_mesh(&grid(10)).unwrap();
        let u = scalar_field(&m, |x| x[0] * x[0]);
        let mf = metric(&u, &m, 1.0, ErrorNorm::L2).unwrap();
        let want = 3f64.powf(0.8);
        // vertices at least two cells from the boundary see the exact Hessian
        for v in 2..9 {
            assert!((mf.values().get(v, 0, 0) - want).abs() < 1e-10);
        }
    }

    #[test]
    fn metric_always_spd() {
        let m = unit_square(6);
        let u = scalar_field(&m, |x| (4.0 * x[0]).sin() * (3.0 * x[1]).cos());
        let mf = metric(&u, &m, 0.1, ErrorNorm::H1).unwrap();
        // validation constructor accepts it
        MetricField::new(mf.values().clone()).unwrap();
        let iso = metric_iso(&u, &m, 0.1, ErrorNorm::L2).unwrap();
        MetricField::new(iso.values().clone()).unwrap();
    }

    #[test]
    fn intersection_diagonal_is_elementwise_max() {
        let m1 = MetricField::splat(2, 3, &[1.0, 0.0, 0.0, 4.0]).unwrap();
        let m2 = MetricField::splat(2, 3, &[3.0, 0.0, 0.0, 2.0]).unwrap();
        let mi = metric_intersection(&m1, &m2).unwrap();
        for v in 0..3 {
            assert!((mi.values().get(v, 0, 0) - 3.0).abs() < 1e-12);
            assert!((mi.values().get(v, 1, 1) - 4.0).abs() < 1e-12);
            assert!(mi.values().get(v, 0, 1).abs() < 1e-12);
        }
        // commutative for diagonal inputs
        let mj = metric_intersection(&m2, &m1).unwrap();
        for k in 0..4 {
            assert!((mi.values().row(0)[k] - mj.values().row(0)[k]).abs() < 1e-12);
        }
    }

    #[test]
    fn intersection_idempotent_and_dominating() {
        let a = MetricField::splat(2, 1, &[2.0, 0.5, 0.5, 1.0]).unwrap();
        let same = metric_intersection(&a, &a).unwrap();
        for k in 0..4 {
            assert!((same.values().row(0)[k] - a.values().row(0)[k]).abs() < 1e-10);
        }
        let b = MetricField::splat(2, 1, &[1.0, -0.3, -0.3, 3.0]).unwrap();
        let mi = metric_intersection(&a, &b).unwrap();
        // x^T M x >= max(x^T A x, x^T B x) on many directions
        let mut state = 7u64;
        let mut rng = move || {
            state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            ((state >> 11) as f64 / (1u64 << 53) as f64) - 0.5
        };
        let quad = |m: &MetricField, x: &[f64; 2]| {
            m.values().get(0, 0, 0) * x[0] * x[0]
                + 2.0 * m.values().get(0, 0, 1) * x[0] * x[1]
                + m.values().get(0, 1, 1) * x[1] * x[1]
        };
        for _ in 0..1000 {
            let x = [rng(), rng()];
            let v = quad(&mi, &x);
            assert!(v >= quad(&a, &x) - 1e-10);
            assert!(v >= quad(&b, &x) - 1e-10);
        }
    }

    #[test]
    fn smoothing_fixed_point_and_decay() {
        let m = unit_square(4);
        let nv = m.n_vertices();
        let constant = MetricField::splat(2, nv, &[2.0, 0.0, 0.0, 2.0]).unwrap();
        let sm = metric_smoothing(&constant, 3, &m).unwrap();
        for v in 0..nv {
            for k in 0..4 {
                assert!((sm.values().row(v)[k] - constant.values().row(v)[k]).abs() < 1e-12);
            }
        }
        let id0 = metric_smoothing(&constant, 0, &m).unwrap();
        assert_eq!(id0.values().data(), constant.values().data());
        // spike decays monotonically
        let mut spike = MatBatch::identity(2, nv);
        spike.set(nv / 2, 0, 0, 100.0);
        spike.set(nv / 2, 1, 1, 100.0);
        let f0 = MetricField::new(spike).unwrap();
        let mut prev = 100.0;
        let mut cur = f0;
        for _ in 0..3 {
            cur = metric_smoothing(&cur, 1, &m).unwrap();
            let maxdiag = (0..nv)
                .map(|v| cur.values().get(v, 0, 0))
                .fold(f64::NEG_INFINITY, f64::max);
            assert!(maxdiag < prev);
            prev = maxdiag;
        }
    }

    #[test]
    fn f2c_preserves_constants_and_spd() {
        let coarse = unit_square(2);
        let (fine, parent) = coarse.uniform_refine(1);
        let mf = MetricField::splat(2, fine.n_vertices(), &[3.0, 1.0, 1.0, 2.0]).unwrap();
        let mc = metric_f2c(&mf, &fine, &parent, &coarse).unwrap();
        for v in 0..coarse.n_vertices() {
            assert!((mc.values().get(v, 0, 0) - 3.0).abs() < 1e-12);
            assert!((mc.values().get(v, 0, 1) - 1.0).abs() < 1e-12);
            assert!((mc.values().get(v, 1, 1) - 2.0).abs() < 1e-12);
        }
        MetricField::new(mc.values().clone()).unwrap();
        // inconsistent parent map is rejected
        let bad = vec![999usize; fine.n_elements()];
        assert!(metric_f2c(&mf, &fine, &bad, &coarse).is_err());
    }

    #[test]
    fn f2c_tracks_linear_fields() {
        let coarse = unit_square(2);
        let (fine, parent) = coarse.uniform_refine(1);
        let mut vals = MatBatch::zeros(2, fine.n_vertices());
        for v in 0..fine.n_vertices() {
            let s = 1.0 + fine.vertex(v)[0];
            vals.set(v, 0, 0, s);
            vals.set(v, 1, 1, s);
        }
        let mf = MetricField::new(vals).unwrap();
        let mc = metric_f2c(&mf, &fine, &parent, &coarse).unwrap();
        let h = 0.5;
        for v in 0..coarse.n_vertices() {
            let want = 1.0 + coarse.vertex(v)[0];
            assert!((mc.values().get(v, 0, 0) - want).abs() < 1.5 * h);
        }
    }
}
