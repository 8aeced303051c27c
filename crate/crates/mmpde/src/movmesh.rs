//! MMPDE mesh movement: the equidistribution/alignment meshing functional,
//! its analytical gradient, and gradient-flow drivers in the x-formulation
//! (with and without a metric) and the xi-formulation.

use crate::mesh::{lin_interp, Mesh, MeshError};
use crate::metric::MetricField;
use crate::odeint::{integrate_explicit, integrate_stiff, OdeError, OdeProblem};
use crate::smallmat::{det_one, inv_one};
use std::cell::RefCell;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum MovMeshError {
    #[error(transparent)]
    Mesh(#[from] MeshError),
    #[error(transparent)]
    Ode(#[from] OdeError),
    #[error("invalid parameters: {0}")]
    BadParams(String),
    #[error("mesh tangled during movement (Kmin = {kmin:e}); try a smaller initial time step dt0")]
    Tangled { kmin: f64 },
    #[error("size mismatch: {0}")]
    SizeMismatch(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MeshIntegrator {
    /// Implicit BDF integration (default).
    Stiff,
    /// Explicit embedded Runge-Kutta.
    Explicit,
}

/// Controls of the moving-mesh gradient flow.
#[derive(Debug, Clone)]
pub struct MmpdeParams {
    pub p: f64,
    pub theta: f64,
    /// Time scale of mesh movement.
    pub tau: f64,
    pub integrator: MeshIntegrator,
    /// Initial step; defaults to (tspan end - tspan start) / 10.
    pub dt0: Option<f64>,
    /// Absolute tolerance; defaults to 1e-6 (stiff) or 1e-8 (explicit).
    pub abstol: Option<f64>,
}

impl MmpdeParams {
    pub fn new(tau: f64) -> Self {
        Self { p: 1.5, theta: 1.0 / 3.0, tau, integrator: MeshIntegrator::Stiff, dt0: None, abstol: None }
    }

    fn validate(&self) -> Result<(), MovMeshError> {
        if !(self.p > 1.0) {
            return Err(MovMeshError::BadParams(format!("p must exceed 1, got {}", self.p)));
        }
        if !(self.theta > 0.0 && self.theta <= 0.5) {
            return Err(MovMeshError::BadParams(format!(
                "theta must lie in (0, 1/2], got {}",
                self.theta
            )));
        }
        if !(self.tau > 0.0) {
            return Err(MovMeshError::BadParams(format!("tau must be positive, got {}", self.tau)));
        }
        Ok(())
    }

    fn abstol_value(&self) -> f64 {
        self.abstol.unwrap_or(match self.integrator {
            MeshIntegrator::Stiff => 1e-6,
            MeshIntegrator::Explicit => 1e-8,
        })
    }
}

impl Default for MmpdeParams {
    fn default() -> Self {
        Self::new(0.1)
    }
}

/// Outcome of a movement driver.
#[derive(Debug, Clone)]
pub struct MoveResult {
    /// New vertex coordinates (N_v x d).
    pub xnew: Vec<f64>,
    /// Meshing-functional value at the new mesh.
    pub ih: f64,
    /// Minimal element volume of the new mesh.
    pub kmin: f64,
    /// Functional values at the accepted integrator steps.
    pub energy_trace: Vec<f64>,
}

/// Fixed per-element data of the functional.
struct ElemTerms {
    d: usize,
    p: f64,
    theta: f64,
    /// per element: M_K^{-1} (d*d), sqrt(det M_K)
    minv: Vec<f64>,
    sqrt_m: Vec<f64>,
    /// reference edge matrices Ehat and their determinants (x-formulation)
    ehat: Vec<f64>,
    det_ehat: Vec<f64>,
}

impl ElemTerms {
    fn q(&self) -> f64 {
        self.d as f64 * self.p / 2.0
    }

    fn c2(&self) -> f64 {
        (1.0 - 2.0 * self.theta) * (self.d as f64).powf(self.d as f64 * self.p / 2.0)
    }
}

fn build_terms(
    mesh: &Mesh,
    metric: &MetricField,
    xi_ref: Option<&Mesh>,
    params: &MmpdeParams,
) -> Result<ElemTerms, MovMeshError> {
    params.validate()?;
    let d = mesh.dim();
    let ne = mesh.n_elements();
    if metric.len() != mesh.n_vertices() || metric.dim() != d {
        return Err(MovMeshError::SizeMismatch("metric field does not match mesh".into()));
    }
    if let Some(xr) = xi_ref {
        if xr.dim() != d || xr.n_elements() != ne || xr.n_vertices() != mesh.n_vertices() {
            return Err(MovMeshError::SizeMismatch(
                "reference mesh must share the connectivity of the physical mesh".into(),
            ));
        }
    }
    let dd = d * d;
    let mvals = metric.values();
    let mut minv = vec![0.0; ne * dd];
    let mut sqrt_m = vec![0.0; ne];
    let mut mk = vec![0.0; dd];
    for e in 0..ne {
        mk.fill(0.0);
        for &v in mesh.elem(e) {
            let row = mvals.row(v);
            for k in 0..dd {
                mk[k] += row[k];
            }
        }
        for v in mk.iter_mut() {
            *v /= (d + 1) as f64;
        }
        let det = inv_one(d, &mk, &mut minv[e * dd..(e + 1) * dd]);
        if det <= 0.0 {
            return Err(MovMeshError::SizeMismatch(format!(
                "metric is not positive definite on element {e}"
            )));
        }
        sqrt_m[e] = det.sqrt();
    }
    let mut ehat = vec![0.0; ne * dd];
    let mut det_ehat = vec![0.0; ne];
    match xi_ref {
        Some(xr) => {
            for e in 0..ne {
                xr.edge_matrix(e, &mut ehat[e * dd..(e + 1) * dd]);
                det_ehat[e] = det_one(d, &ehat[e * dd..(e + 1) * dd]);
            }
        }
        None => {
            // equilateral reference simplex scaled to volume 1/N
            let mut eq = [0.0; 9];
            crate::mesh::reference_edges(d, 1.0 / ne as f64, &mut eq);
            let det = det_one(d, &eq[..dd]);
            for e in 0..ne {
                ehat[e * dd..(e + 1) * dd].copy_from_slice(&eq[..dd]);
                det_ehat[e] = det;
            }
        }
    }
    Ok(ElemTerms { d, p: params.p, theta: params.theta, minv, sqrt_m, ehat, det_ehat })
}

fn factorial(d: usize) -> f64 {
    match d {
        1 => 1.0,
        2 => 2.0,
        _ => 6.0,
    }
}

/// Functional value for vertex positions `coords` (x-formulation).
/// Returns None when an element is inverted or degenerate.
fn energy_x(terms: &ElemTerms, mesh: &Mesh, coords: &[f64]) -> Option<f64> {
    let d = terms.d;
    let dd = d * d;
    let c0 = 1.0 / factorial(d);
    let (q, c2) = (terms.q(), terms.c2());
    let mut em = [0.0; 9];
    let mut s = [0.0; 9];
    let mut total = 0.0;
    for e in 0..mesh.n_elements() {
        let vs = mesh.elem(e);
        edge_matrix_at(coords, vs, d, &mut em);
        let det_e = det_one(d, &em[..dd]);
        if det_e <= 0.0 {
            return None;
        }
        inv_one(d, &em[..dd], &mut s);
        let ehat = &terms.ehat[e * dd..(e + 1) * dd];
        let minv = &terms.minv[e * dd..(e + 1) * dd];
        let t = trace_j_minv_jt(d, ehat, &s, minv);
        let m = terms.sqrt_m[e];
        let ratio = terms.det_ehat[e] / det_e;
        let val = c0 * det_e * m * (terms.theta * t.powf(q) + c2 * ratio.powf(terms.p) / m.powf(terms.p));
        total += val;
        if !total.is_finite() {
            return None;
        }
    }
    Some(total)
}

/// tr(J M^{-1} J^T) with J = Ehat * S.
fn trace_j_minv_jt(d: usize, ehat: &[f64], s: &[f64], minv: &[f64]) -> f64 {
    let mut j = [0.0; 9];
    mat_mul(d, ehat, s, &mut j);
    let mut t = 0.0;
    for r in 0..d {
        for c in 0..d {
            for k in 0..d {
                t += j[c * d + r] * minv[k * d + c] * j[k * d + r];
            }
        }
    }
    t
}

/// c = a * b (column-major d x d).
fn mat_mul(d: usize, a: &[f64], b: &[f64], c: &mut [f64]) {
    for col in 0..d {
        for row in 0..d {
            let mut sum = 0.0;
            for k in 0..d {
                sum += a[k * d + row] * b[col * d + k];
            }
            c[col * d + row] = sum;
        }
    }
}

fn edge_matrix_at(coords: &[f64], vs: &[usize], d: usize, out: &mut [f64; 9]) {
    let x0 = &coords[vs[0] * d..(vs[0] + 1) * d];
    for j in 0..d {
        let xj = &coords[vs[j + 1] * d..(vs[j + 1] + 1) * d];
        for r in 0..d {
            out[j * d + r] = xj[r] - x0[r];
        }
    }
}

/// Analytical gradient of the functional with respect to the physical vertex
/// coordinates (x-formulation). Returns false on inverted elements.
fn grad_x(terms: &ElemTerms, mesh: &Mesh, coords: &[f64], grad: &mut [f64]) -> bool {
    let d = terms.d;
    let dd = d * d;
    let c0 = 1.0 / factorial(d);
    let (q, c2) = (terms.q(), terms.c2());
    let p = terms.p;
    grad.fill(0.0);
    let mut em = [0.0; 9];
    let mut s = [0.0; 9];
    let mut pmat = [0.0; 9];
    let mut g2 = [0.0; 9];
    let mut tmp = [0.0; 9];
    let mut pg2s = [0.0; 9];
    let mut dgde = [0.0; 9];
    for e in 0..mesh.n_elements() {
        let vs = mesh.elem(e);
        edge_matrix_at(coords, vs, d, &mut em);
        let det_e = det_one(d, &em[..dd]);
        if det_e <= 0.0 {
            return false;
        }
        inv_one(d, &em[..dd], &mut s);
        let ehat = &terms.ehat[e * dd..(e + 1) * dd];
        let minv = &terms.minv[e * dd..(e + 1) * dd];
        let m = terms.sqrt_m[e];
        let t = trace_j_minv_jt(d, ehat, &s, minv);
        // P = S Minv S^T
        mat_mul(d, &s, minv, &mut tmp);
        mat_mul_nt(d, &tmp, &s, &mut pmat);
        // G2 = Ehat^T Ehat
        mat_mul_tn(d, ehat, ehat, &mut g2);
        // P G2 S
        mat_mul(d, &pmat, &g2, &mut tmp);
        mat_mul(d, &tmp, &s, &mut pg2s);
        let ratio = terms.det_ehat[e] / det_e;
        let scalar1 = terms.theta * t.powf(q)
            + (1.0 - p) * c2 * ratio.powf(p) / m.powf(p);
        let coef_t = terms.theta * q * t.powf(q - 1.0);
        // dG/dE = c0 sqrt(m) [ scalar1 * D * S^T - 2 coef_t * D * (P G2 S)^T ]
        for col in 0..d {
            for row in 0..d {
                let st = s[row * d + col]; // S^T entry (row, col)
                let pt = pg2s[row * d + col]; // (P G2 S)^T entry (row, col)
                dgde[col * d + row] = c0 * m * det_e * (scalar1 * st - 2.0 * coef_t * pt);
            }
        }
        scatter_edge_gradient(vs, d, &dgde, grad);
    }
    true
}

/// a^T * b.
fn mat_mul_tn(d: usize, a: &[f64], b: &[f64], c: &mut [f64]) {
    for col in 0..d {
        for row in 0..d {
            let mut sum = 0.0;
            for k in 0..d {
                sum += a[row * d + k] * b[col * d + k];
            }
            c[col * d + row] = sum;
        }
    }
}

/// a * b^T.
fn mat_mul_nt(d: usize, a: &[f64], b: &[f64], c: &mut [f64]) {
    for col in 0..d {
        for row in 0..d {
            let mut sum = 0.0;
            for k in 0..d {
                sum += a[k * d + row] * b[k * d + col];
            }
            c[col * d + row] = sum;
        }
    }
}

fn scatter_edge_gradient(vs: &[usize], d: usize, dgde: &[f64], grad: &mut [f64]) {
    for j in 0..d {
        for r in 0..d {
            let g = dgde[j * d + r];
            grad[vs[j + 1] * d + r] += g;
            grad[vs[0] * d + r] -= g;
        }
    }
}

/// Gradient with respect to the computational vertex coordinates
/// (xi-formulation: physical mesh fixed, Ehat varies).
fn grad_xi(
    terms: &ElemTerms,
    mesh: &Mesh,
    s_e: &[f64],
    det_e: &[f64],
    xi_coords: &[f64],
    grad: &mut [f64],
) -> bool {
    let d = terms.d;
    let dd = d * d;
    let c0 = 1.0 / factorial(d);
    let (q, c2) = (terms.q(), terms.c2());
    let p = terms.p;
    grad.fill(0.0);
    let mut ehat = [0.0; 9];
    let mut ehat_inv = [0.0; 9];
    let mut pmat = [0.0; 9];
    let mut tmp = [0.0; 9];
    let mut ep = [0.0; 9];
    let mut dgde = [0.0; 9];
    for e in 0..mesh.n_elements() {
        let vs = mesh.elem(e);
        edge_matrix_at(xi_coords, vs, d, &mut ehat);
        let det_ehat = det_one(d, &ehat[..dd]);
        if det_ehat <= 0.0 {
            return false;
        }
        inv_one(d, &ehat[..dd], &mut ehat_inv);
        let s = &s_e[e * dd..(e + 1) * dd];
        let minv = &terms.minv[e * dd..(e + 1) * dd];
        let m = terms.sqrt_m[e];
        let t = trace_j_minv_jt(d, &ehat, s, minv);
        // P = S Minv S^T
        mat_mul(d, s, minv, &mut tmp);
        mat_mul_nt(d, &tmp, s, &mut pmat);
        // Ehat P
        mat_mul(d, &ehat, &pmat, &mut ep);
        let ratio = det_ehat / det_e[e];
        let coef_t = terms.theta * q * t.powf(q - 1.0);
        let coef_det = c2 * p * ratio.powf(p) / m.powf(p);
        for col in 0..d {
            for row in 0..d {
                let einv_t = ehat_inv[row * d + col]; // Ehat^{-T} entry
                dgde[col * d + row] =
                    c0 * det_e[e] * m * (2.0 * coef_t * ep[col * d + row] + coef_det * einv_t);
            }
        }
        scatter_edge_gradient(vs, d, &dgde, grad);
    }
    true
}

/// Meshing-functional value I_h for the mesh/metric pair; the reference
/// element geometry comes from `xi_ref`, or from an equilateral simplex of
/// volume 1/N when absent.
pub fn energy(
    mesh: &Mesh,
    metric: &MetricField,
    xi_ref: Option<&Mesh>,
    params: &MmpdeParams,
) -> Result<f64, MovMeshError> {
    let terms = build_terms(mesh, metric, xi_ref, params)?;
    energy_x(&terms, mesh, mesh.coords()).ok_or_else(|| MovMeshError::Tangled { kmin: 0.0 })
}

/// Analytical gradient of [`energy`] with respect to the vertex coordinates
/// (N_v x d, row-major).
pub fn energy_grad(
    mesh: &Mesh,
    metric: &MetricField,
    xi_ref: Option<&Mesh>,
    params: &MmpdeParams,
) -> Result<Vec<f64>, MovMeshError> {
    let terms = build_terms(mesh, metric, xi_ref, params)?;
    let mut grad = vec![0.0; mesh.coords().len()];
    if !grad_x(&terms, mesh, mesh.coords(), &mut grad) {
        return Err(MovMeshError::Tangled { kmin: 0.0 });
    }
    Ok(grad)
}

/// Per-vertex balancing factor det(M(x_i))^{(p-1)/2}: makes the nodal
/// velocity invariant under uniform scaling of the metric.
fn balance_factors(metric: &MetricField, p: f64) -> Vec<f64> {
    (0..metric.len()).map(|v| metric.det_at(v).powf((p - 1.0) / 2.0)).collect()
}

struct Constraints {
    /// state vector layout: free vertex ids in order
    free: Vec<usize>,
    /// per free vertex: plane normal and offset for boundary vertices
    plane: Vec<Option<([f64; 3], f64)>>,
}

fn build_constraints(
    mesh: &Mesh,
    base_coords: &[f64],
    nodes_fixed: &[usize],
) -> Result<Constraints, MovMeshError> {
    let d = mesh.dim();
    let nv = mesh.n_vertices();
    let mut fixed = vec![false; nv];
    for &id in nodes_fixed {
        if id >= nv {
            return Err(MeshError::BadVertexIndex { idx: id, n_vertices: nv }.into());
        }
        fixed[id] = true;
    }
    let normals = mesh.vertex_normals()?;
    let on_bd = mesh.boundary_vertices();
    let mut free = Vec::new();
    let mut plane = Vec::new();
    for v in 0..nv {
        if fixed[v] {
            continue;
        }
        free.push(v);
        if on_bd[v] {
            let mut n = [0.0; 3];
            n[..d].copy_from_slice(&normals[v * d..(v + 1) * d]);
            let c: f64 = (0..d).map(|r| n[r] * base_coords[v * d + r]).sum();
            plane.push(Some((n, c)));
        } else {
            plane.push(None);
        }
    }
    Ok(Constraints { free, plane })
}

impl Constraints {
    /// Projects per-vertex velocities tangentially to the boundary planes.
    fn project_velocity(&self, d: usize, vel: &mut [f64]) {
        for (i, pl) in self.plane.iter().enumerate() {
            if let Some((n, _)) = pl {
                let mut dot = 0.0;
                for r in 0..d {
                    dot += n[r] * vel[i * d + r];
                }
                for r in 0..d {
                    vel[i * d + r] -= dot * n[r];
                }
            }
        }
    }

    /// Re-imposes the boundary planes on positions.
    fn snap_positions(&self, d: usize, y: &mut [f64]) {
        for (i, pl) in self.plane.iter().enumerate() {
            if let Some((n, c)) = pl {
                let mut dot = -c;
                for r in 0..d {
                    dot += n[r] * y[i * d + r];
                }
                for r in 0..d {
                    y[i * d + r] -= dot * n[r];
                }
            }
        }
    }

    fn gather(&self, d: usize, coords: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.free.len() * d];
        for (i, &v) in self.free.iter().enumerate() {
            y[i * d..(i + 1) * d].copy_from_slice(&coords[v * d..(v + 1) * d]);
        }
        y
    }

    fn scatter(&self, d: usize, y: &[f64], coords: &mut [f64]) {
        for (i, &v) in self.free.iter().enumerate() {
            coords[v * d..(v + 1) * d].copy_from_slice(&y[i * d..(i + 1) * d]);
        }
    }

    /// Closed dof-level adjacency for the colored FD Jacobian.
    fn dof_sparsity(&self, d: usize, mesh: &Mesh) -> Vec<Vec<usize>> {
        let nv = mesh.n_vertices();
        let mut vert_to_free = vec![usize::MAX; nv];
        for (i, &v) in self.free.iter().enumerate() {
            vert_to_free[v] = i;
        }
        let nbrs = mesh.vertex_neighbors();
        let mut out = vec![Vec::new(); self.free.len() * d];
        for (i, &v) in self.free.iter().enumerate() {
            let mut dofs: Vec<usize> = Vec::new();
            for r in 0..d {
                dofs.push(i * d + r);
            }
            for &u in &nbrs[v] {
                let fu = vert_to_free[u];
                if fu != usize::MAX {
                    for r in 0..d {
                        dofs.push(fu * d + r);
                    }
                }
            }
            for r in 0..d {
                out[i * d + r] = dofs.clone();
            }
        }
        out
    }
}

fn min_signed_volume(mesh: &Mesh, coords: &[f64]) -> f64 {
    let d = mesh.dim();
    let mut em = [0.0; 9];
    let mut kmin = f64::INFINITY;
    for e in 0..mesh.n_elements() {
        edge_matrix_at(coords, mesh.elem(e), d, &mut em);
        kmin = kmin.min(det_one(d, &em[..d * d]) / factorial(d));
    }
    kmin
}

enum Formulation<'a> {
    X,
    Xi { s_e: &'a [f64], det_e: &'a [f64] },
}

/// Shared gradient-flow integration for both formulations. The state holds
/// the free-vertex coordinates; the returned vector holds the full final
/// coordinates.
#[allow(clippy::too_many_arguments)]
fn run_flow(
    tspan: [f64; 2],
    mesh: &Mesh,
    terms: &ElemTerms,
    balance: &[f64],
    constraints: &Constraints,
    base_coords: &[f64],
    tau: f64,
    params: &MmpdeParams,
    formulation: Formulation<'_>,
) -> Result<(Vec<f64>, Vec<f64>), MovMeshError> {
    let d = mesh.dim();
    if tspan[1] <= tspan[0] {
        return Err(MovMeshError::BadParams("tspan must be increasing".into()));
    }
    let y0 = constraints.gather(d, base_coords);
    let full = RefCell::new(base_coords.to_vec());
    let scratch_grad = RefCell::new(vec![0.0; base_coords.len()]);
    let energy_trace = RefCell::new(Vec::<f64>::new());

    let eval_energy = |coords: &[f64]| -> Option<f64> {
        match &formulation {
            Formulation::X => energy_x(terms, mesh, coords),
            Formulation::Xi { s_e, det_e } => {
                // xi-form energy: same integrand, roles exchanged
                xi_energy(terms, mesh, s_e, det_e, coords)
            }
        }
    };

    let rhs = |_t: f64, y: &[f64], dy: &mut [f64]| {
        let mut coords = full.borrow_mut();
        constraints.scatter(d, y, &mut coords);
        let mut grad = scratch_grad.borrow_mut();
        let ok = match &formulation {
            Formulation::X => grad_x(terms, mesh, &coords, &mut grad),
            Formulation::Xi { s_e, det_e } => grad_xi(terms, mesh, s_e, det_e, &coords, &mut grad),
        };
        if !ok {
            dy.fill(f64::NAN);
            return;
        }
        for (i, &v) in constraints.free.iter().enumerate() {
            for r in 0..d {
                dy[i * d + r] = -balance[v] / tau * grad[v * d + r];
            }
        }
        constraints.project_velocity(d, dy);
    };

    let accept = |y: &[f64]| -> bool {
        let mut coords = full.borrow_mut();
        constraints.scatter(d, y, &mut coords);
        min_signed_volume(mesh, &coords) > 0.0
    };

    let post = |_t: f64, y: &mut [f64]| {
        constraints.snap_positions(d, y);
        let mut coords = full.borrow_mut();
        constraints.scatter(d, y, &mut coords);
        if let Some(e) = eval_energy(&coords) {
            energy_trace.borrow_mut().push(e);
        }
    };

    let sparsity = constraints.dof_sparsity(d, mesh);
    let mut problem = OdeProblem::new(&rhs, &y0, tspan);
    problem.abstol = params.abstol_value();
    problem.reltol = 1e-3;
    problem.dt0 = params.dt0.unwrap_or((tspan[1] - tspan[0]) / 10.0);
    problem.accept_check = Some(&accept);
    problem.post_step = Some(&post);
    problem.sparsity = Some(&sparsity);
    let solution = match params.integrator {
        MeshIntegrator::Stiff => integrate_stiff(&problem)?,
        MeshIntegrator::Explicit => integrate_explicit(&problem)?,
    };
    let mut coords = base_coords.to_vec();
    let mut y_end = solution.y_end;
    constraints.snap_positions(d, &mut y_end);
    constraints.scatter(d, &y_end, &mut coords);
    Ok((coords, energy_trace.into_inner()))
}

/// xi-formulation energy for computational coordinates `xi_coords`.
fn xi_energy(
    terms: &ElemTerms,
    mesh: &Mesh,
    s_e: &[f64],
    det_e: &[f64],
    xi_coords: &[f64],
) -> Option<f64> {
    let d = terms.d;
    let dd = d * d;
    let c0 = 1.0 / factorial(d);
    let (q, c2) = (terms.q(), terms.c2());
    let mut ehat = [0.0; 9];
    let mut total = 0.0;
    for e in 0..mesh.n_elements() {
        edge_matrix_at(xi_coords, mesh.elem(e), d, &mut ehat);
        let det_ehat = det_one(d, &ehat[..dd]);
        if det_ehat <= 0.0 {
            return None;
        }
        let s = &s_e[e * dd..(e + 1) * dd];
        let minv = &terms.minv[e * dd..(e + 1) * dd];
        let m = terms.sqrt_m[e];
        let t = trace_j_minv_jt(d, &ehat, s, minv);
        let ratio = det_ehat / det_e[e];
        total += c0 * det_e[e] * m * (terms.theta * t.powf(q) + c2 * ratio.powf(terms.p) / m.powf(terms.p));
    }
    total.is_finite().then_some(total)
}

/// x-formulation driver with a metric (MovMesh_XM): integrates
/// dx_i/dt = -(P_i / tau) dI_h/dx_i over `tspan`.
pub fn move_x_metric(
    tspan: [f64; 2],
    mesh: &Mesh,
    metric: &MetricField,
    params: &MmpdeParams,
    nodes_fixed: &[usize],
    xi_ref: Option<&Mesh>,
) -> Result<MoveResult, MovMeshError> {
    let terms = build_terms(mesh, metric, xi_ref, params)?;
    let balance = balance_factors(metric, params.p);
    let constraints = build_constraints(mesh, mesh.coords(), nodes_fixed)?;
    let (coords, trace) = run_flow(
        tspan,
        mesh,
        &terms,
        &balance,
        &constraints,
        mesh.coords(),
        params.tau,
        params,
        Formulation::X,
    )?;
    let kmin = min_signed_volume(mesh, &coords);
    if kmin <= 0.0 {
        return Err(MovMeshError::Tangled { kmin });
    }
    let ih = energy_x(&terms, mesh, &coords).ok_or(MovMeshError::Tangled { kmin })?;
    Ok(MoveResult { xnew: coords, ih, kmin, energy_trace: trace })
}

/// x-formulation driver with the identity metric (MovMesh_X): pure shape
/// regularization without adaptation.
pub fn move_x(
    tspan: [f64; 2],
    mesh: &Mesh,
    params: &MmpdeParams,
    nodes_fixed: &[usize],
    xi_ref: Option<&Mesh>,
) -> Result<MoveResult, MovMeshError> {
    let metric = MetricField::identity(mesh.dim(), mesh.n_vertices());
    move_x_metric(tspan, mesh, &metric, params, nodes_fixed, xi_ref)
}

/// xi-formulation driver (MovMesh): moves the computational coordinates on
/// the fixed physical mesh, then recovers the new physical mesh by
/// interpolating the map xi -> x at the reference points.
pub fn move_xi(
    tspan: [f64; 2],
    xi_ref: &Mesh,
    mesh: &Mesh,
    metric: &MetricField,
    params: &MmpdeParams,
    nodes_fixed: &[usize],
) -> Result<MoveResult, MovMeshError> {
    let d = mesh.dim();
    let dd = d * d;
    let terms = build_terms(mesh, metric, Some(xi_ref), params)?;
    // fixed physical geometry
    let ne = mesh.n_elements();
    let mut s_e = vec![0.0; ne * dd];
    let mut det_e = vec![0.0; ne];
    let mut em = [0.0; 9];
    for e in 0..ne {
        mesh.edge_matrix(e, &mut em);
        det_e[e] = det_one(d, &em[..dd]);
        if det_e[e] <= 0.0 {
            return Err(MovMeshError::Tangled { kmin: det_e[e] / factorial(d) });
        }
        inv_one(d, &em[..dd], &mut s_e[e * dd..(e + 1) * dd]);
    }
    let balance = balance_factors(metric, params.p);
    let constraints = build_constraints(xi_ref, xi_ref.coords(), nodes_fixed)?;
    let (xi_final, trace) = run_flow(
        tspan,
        mesh,
        &terms,
        &balance,
        &constraints,
        xi_ref.coords(),
        params.tau,
        params,
        Formulation::Xi { s_e: &s_e, det_e: &det_e },
    )?;
    // recover x(xi) by interpolating the physical coordinates over the moved
    // computational mesh at the reference points
    let xi_mesh = xi_ref.with_coords(xi_final).map_err(|_| MovMeshError::Tangled { kmin: 0.0 })?;
    let xnew = lin_interp(mesh.coords(), d, &xi_mesh, xi_ref.coords(), false)?;
    let kmin = min_signed_volume(mesh, &xnew);
    if kmin <= 0.0 {
        return Err(MovMeshError::Tangled { kmin });
    }
    let ih = energy_x(&terms, mesh, &xnew).ok_or(MovMeshError::Tangled { kmin })?;
    Ok(MoveResult { xnew, ih, kmin, energy_trace: trace })
}

#[cfg(test)]
mod tests;
