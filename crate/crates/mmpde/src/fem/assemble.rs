//! Residual assembly for the weak form and finite-difference Jacobians with
//! graph coloring.

use super::{BcType, BoundaryBatch, DirichletBatch, FemError, PdeDefinition, VolumeBatch};
use crate::mesh::Mesh;
use crate::quadrature::{facet_rule, volume_rule};
use crate::smallmat::{det_one, inv_one};
use crate::sparse::{distance2_coloring, CsrMatrix};

/// Connectivity-dependent data shared by every assembly on one mesh:
/// Dirichlet classification, the dof sparsity pattern and a distance-2
/// vertex coloring for finite-difference Jacobians.
pub struct FemSpace {
    pub(crate) npde: usize,
    pub(crate) dim: usize,
    pub(crate) n_vertices: usize,
    /// (vertex, component, marker) of each Dirichlet-constrained dof,
    /// ordered by ascending facet index (first facet wins).
    pub(crate) dirichlet: Vec<(usize, usize, i32)>,
    /// Per dof: Some(marker) when Dirichlet.
    pub(crate) dirichlet_mark: Vec<Option<i32>>,
    pub(crate) vertex_colors: Vec<usize>,
    pub(crate) n_colors: usize,
    pub(crate) closed_nbrs: Vec<Vec<usize>>,
    pub(crate) pattern_rows: Vec<Vec<usize>>,
}

impl FemSpace {
    pub fn new(mesh: &Mesh, pdedef: &PdeDefinition) -> Result<Self, FemError> {
        pdedef.validate(mesh)?;
        let npde = pdedef.npde;
        let nv = mesh.n_vertices();
        let d = mesh.dim();
        let mut dirichlet_mark = vec![None; nv * npde];
        let mut dirichlet = Vec::new();
        for f in 0..mesh.n_boundary_facets() {
            for i in 0..npde {
                if pdedef.bc(f, i) == BcType::Dirichlet {
                    for &v in mesh.facet(f) {
                        if dirichlet_mark[v * npde + i].is_none() {
                            dirichlet_mark[v * npde + i] = Some(pdedef.bf_mark[f]);
                            dirichlet.push((v, i, pdedef.bf_mark[f]));
                        }
                    }
                }
            }
        }
        let mut closed_nbrs = mesh.vertex_neighbors();
        for (v, l) in closed_nbrs.iter_mut().enumerate() {
            l.push(v);
            l.sort_unstable();
        }
        let vertex_colors = distance2_coloring(&closed_nbrs);
        let n_colors = vertex_colors.iter().max().map(|&c| c + 1).unwrap_or(0);
        let mut pattern_rows = vec![Vec::new(); nv * npde];
        for v in 0..nv {
            let mut cols = Vec::with_capacity(closed_nbrs[v].len() * npde);
            for &w in &closed_nbrs[v] {
                for k in 0..npde {
                    cols.push(w * npde + k);
                }
            }
            cols.sort_unstable();
            for i in 0..npde {
                pattern_rows[v * npde + i] = cols.clone();
            }
        }
        Ok(Self {
            npde,
            dim: d,
            n_vertices: nv,
            dirichlet,
            dirichlet_mark,
            vertex_colors,
            n_colors,
            closed_nbrs,
            pattern_rows,
        })
    }

    pub fn n_dofs(&self) -> usize {
        self.n_vertices * self.npde
    }

    /// Marker of the Dirichlet constraint on dof (vertex, component), if any.
    pub fn dirichlet_marker(&self, vertex: usize, comp: usize) -> Option<i32> {
        self.dirichlet_mark[vertex * self.npde + comp]
    }
}

/// Geometry of one vertex-coordinate configuration.
pub(crate) struct Geometry {
    pub coords: Vec<f64>,
    pub vol: Vec<f64>,
    /// P1 basis gradients, `ne x (d+1) x d`.
    pub grad_phi: Vec<f64>,
    pub fmeasure: Vec<f64>,
}

impl Geometry {
    pub fn new(mesh: &Mesh, coords: &[f64]) -> Result<Self, FemError> {
        let d = mesh.dim();
        let dd = d * d;
        let ne = mesh.n_elements();
        let mut vol = vec![0.0; ne];
        let mut grad_phi = vec![0.0; ne * (d + 1) * d];
        let mut em = [0.0; 9];
        let mut inv = [0.0; 9];
        let fact = crate::mesh::factorial(d);
        for e in 0..ne {
            let vs = mesh.elem(e);
            let x0 = &coords[vs[0] * d..(vs[0] + 1) * d];
            for j in 0..d {
                let xj = &coords[vs[j + 1] * d..(vs[j + 1] + 1) * d];
                for r in 0..d {
                    em[j * d + r] = xj[r] - x0[r];
                }
            }
            let det = det_one(d, &em[..dd]);
            if det <= 0.0 {
                return Err(FemError::BadShape(format!(
                    "element {e} inverted during assembly (det = {det:e})"
                )));
            }
            vol[e] = det / fact;
            inv_one(d, &em[..dd], &mut inv);
            let base = e * (d + 1) * d;
            for j in 1..=d {
                for r in 0..d {
                    // grad phi_j = row (j-1) of E^{-1}
                    grad_phi[base + j * d + r] = inv[r * d + (j - 1)];
                }
            }
            for r in 0..d {
                let mut s = 0.0;
                for j in 1..=d {
                    s += grad_phi[base + j * d + r];
                }
                grad_phi[base + r] = -s;
            }
        }
        let mut fmeasure = vec![0.0; mesh.n_boundary_facets()];
        for f in 0..mesh.n_boundary_facets() {
            fmeasure[f] = crate::mesh::facet_measure_of(d, coords, mesh.facet(f));
        }
        Ok(Self { coords: coords.to_vec(), vol, grad_phi, fmeasure })
    }
}

/// Assembles the weak-form residual at state (U, Udot) on the mesh
/// positioned at `geom`, moving with nodal velocity `xdot`. Dirichlet rows
/// are replaced by the Dirichlet residuals.
#[allow(clippy::too_many_arguments)]
pub(crate) fn residual_with_geometry(
    space: &FemSpace,
    mesh: &Mesh,
    pdedef: &PdeDefinition,
    geom: &Geometry,
    t: f64,
    u: &[f64],
    udot: &[f64],
    xdot: &[f64],
    out: &mut [f64],
) {
    let d = space.dim;
    let npde = space.npde;
    let ne = mesh.n_elements();
    let dnp = d * npde;
    out.fill(0.0);
    let rule = volume_rule(d);
    // constant per-element solution gradients
    let mut du = vec![0.0; ne * dnp];
    for e in 0..ne {
        let vs = mesh.elem(e);
        let base = e * (d + 1) * d;
        for (j, &v) in vs.iter().enumerate() {
            for k in 0..npde {
                let uv = u[v * npde + k];
                for r in 0..d {
                    du[e * dnp + k * d + r] += geom.grad_phi[base + j * d + r] * uv;
                }
            }
        }
    }
    let mut x_q = vec![0.0; ne * d];
    let mut u_q = vec![0.0; ne * npde];
    let mut ut_q = vec![0.0; ne * npde];
    let mut xdot_q = vec![0.0; ne * d];
    let mut v_b = vec![0.0; ne];
    let mut dv_b = vec![0.0; ne * d];
    let mut fvals = vec![0.0; ne];
    for q in 0..rule.n_points() {
        let bc = rule.point(q);
        let w = rule.weights[q];
        x_q.fill(0.0);
        u_q.fill(0.0);
        ut_q.fill(0.0);
        xdot_q.fill(0.0);
        for e in 0..ne {
            let vs = mesh.elem(e);
            for (j, &v) in vs.iter().enumerate() {
                let b = bc[j];
                for r in 0..d {
                    x_q[e * d + r] += b * geom.coords[v * d + r];
                    xdot_q[e * d + r] += b * xdot[v * d + r];
                }
                for k in 0..npde {
                    u_q[e * npde + k] += b * u[v * npde + k];
                    ut_q[e * npde + k] += b * udot[v * npde + k];
                }
            }
            // ALE conversion: subtract (grad u) . xdot
            for k in 0..npde {
                let mut adv = 0.0;
                for r in 0..d {
                    adv += du[e * dnp + k * d + r] * xdot_q[e * d + r];
                }
                ut_q[e * npde + k] -= adv;
            }
        }
        for jloc in 0..=d {
            v_b.fill(bc[jloc]);
            for e in 0..ne {
                let base = e * (d + 1) * d;
                dv_b[e * d..(e + 1) * d]
                    .copy_from_slice(&geom.grad_phi[base + jloc * d..base + (jloc + 1) * d]);
            }
            let batch = VolumeBatch {
                du: &du,
                u: &u_q,
                ut: &ut_q,
                dv: &dv_b,
                v: &v_b,
                x: &x_q,
                t,
                n: ne,
                dim: d,
                npde,
            };
            for i in 0..npde {
                fvals.fill(0.0);
                (pdedef.volume_int)(&batch, i, &mut fvals);
                for e in 0..ne {
                    let row = mesh.elem(e)[jloc] * npde + i;
                    out[row] += w * geom.vol[e] * fvals[e];
                }
            }
        }
    }
    // Neumann boundary integrals
    let nbf = mesh.n_boundary_facets();
    if nbf > 0 {
        let frule = facet_rule(d);
        let mut du_f = vec![0.0; nbf * dnp];
        for f in 0..nbf {
            let ae = mesh.facet_element(f);
            du_f[f * dnp..(f + 1) * dnp].copy_from_slice(&du[ae * dnp..(ae + 1) * dnp]);
        }
        let mut x_f = vec![0.0; nbf * d];
        let mut u_f = vec![0.0; nbf * npde];
        let mut v_f = vec![0.0; nbf];
        let mut gvals = vec![0.0; nbf];
        for q in 0..frule.n_points() {
            let bcf = frule.point(q);
            let w = frule.weights[q];
            x_f.fill(0.0);
            u_f.fill(0.0);
            for f in 0..nbf {
                for (j, &v) in mesh.facet(f).iter().enumerate() {
                    let b = bcf[j];
                    for r in 0..d {
                        x_f[f * d + r] += b * geom.coords[v * d + r];
                    }
                    for k in 0..npde {
                        u_f[f * npde + k] += b * u[v * npde + k];
                    }
                }
            }
            for jloc in 0..d {
                v_f.fill(bcf[jloc]);
                let batch = BoundaryBatch {
                    du: &du_f,
                    u: &u_f,
                    v: &v_f,
                    x: &x_f,
                    t,
                    bf_mark: &pdedef.bf_mark,
                    n: nbf,
                    dim: d,
                    npde,
                };
                for i in 0..npde {
                    gvals.fill(0.0);
                    (pdedef.boundary_int)(&batch, i, &mut gvals);
                    for f in 0..nbf {
                        if pdedef.bc(f, i) == BcType::Neumann {
                            let row = mesh.facet(f)[jloc] * npde + i;
                            out[row] += w * geom.fmeasure[f] * gvals[f];
                        }
                    }
                }
            }
        }
    }
    // Dirichlet row replacement
    apply_dirichlet_rows(space, pdedef, geom, t, u, out);
}

fn apply_dirichlet_rows(
    space: &FemSpace,
    pdedef: &PdeDefinition,
    geom: &Geometry,
    t: f64,
    u: &[f64],
    out: &mut [f64],
) {
    let nd = space.dirichlet.len();
    if nd == 0 {
        return;
    }
    let d = space.dim;
    let npde = space.npde;
    let mut u_d = vec![0.0; nd * npde];
    let mut x_d = vec![0.0; nd * d];
    let mut marks = vec![0i32; nd];
    for (k, &(v, _i, m)) in space.dirichlet.iter().enumerate() {
        u_d[k * npde..(k + 1) * npde].copy_from_slice(&u[v * npde..(v + 1) * npde]);
        x_d[k * d..(k + 1) * d].copy_from_slice(&geom.coords[v * d..(v + 1) * d]);
        marks[k] = m;
    }
    let batch = DirichletBatch { u: &u_d, x: &x_d, t, bf_mark: &marks, n: nd, dim: d, npde };
    let mut rvals = vec![0.0; nd];
    for i in 0..npde {
        rvals.fill(0.0);
        (pdedef.dirichlet_res)(&batch, i, &mut rvals);
        for (k, &(v, comp, _)) in space.dirichlet.iter().enumerate() {
            if comp == i {
                out[v * npde + i] = rvals[k];
            }
        }
    }
}

/// Assembles the residual of the weak form for solution `u` and time
/// derivative `udot` on `mesh` moving with nodal velocity `xdot`:
/// one vector entry per (vertex, component), Dirichlet rows holding the
/// Dirichlet residuals.
pub fn assemble_residual(
    u: &[f64],
    udot: &[f64],
    mesh: &Mesh,
    xdot: &[f64],
    pdedef: &PdeDefinition,
    t: f64,
) -> Result<Vec<f64>, FemError> {
    let space = FemSpace::new(mesh, pdedef)?;
    check_state(&space, mesh, u, udot, xdot)?;
    let geom = Geometry::new(mesh, mesh.coords())?;
    let mut out = vec![0.0; space.n_dofs()];
    residual_with_geometry(&space, mesh, pdedef, &geom, t, u, udot, xdot, &mut out);
    Ok(out)
}

pub(crate) fn check_state(
    space: &FemSpace,
    mesh: &Mesh,
    u: &[f64],
    udot: &[f64],
    xdot: &[f64],
) -> Result<(), FemError> {
    if u.len() != space.n_dofs() || udot.len() != space.n_dofs() {
        return Err(FemError::BadShape(format!(
            "solution has {} entries, expected {}",
            u.len(),
            space.n_dofs()
        )));
    }
    if xdot.len() != mesh.n_vertices() * space.dim {
        return Err(FemError::BadShape("mesh velocity shape mismatch".into()));
    }
    Ok(())
}

/// Colored finite-difference Jacobians of the residual with respect to `u`
/// (when `wrt_udot` is false) or `udot` (when true).
#[allow(clippy::too_many_arguments)]
pub(crate) fn fd_jacobian(
    space: &FemSpace,
    mesh: &Mesh,
    pdedef: &PdeDefinition,
    geom: &Geometry,
    t: f64,
    u: &[f64],
    udot: &[f64],
    xdot: &[f64],
    r0: &[f64],
    wrt_udot: bool,
) -> CsrMatrix {
    let npde = space.npde;
    let n = space.n_dofs();
    let mut jac = CsrMatrix::from_pattern(n, &space.pattern_rows);
    let mut up = u.to_vec();
    let mut udotp = udot.to_vec();
    let mut rp = vec![0.0; n];
    let base_state: &[f64] = if wrt_udot { udot } else { u };
    for color in 0..space.n_colors {
        for k in 0..npde {
            let mut deltas = vec![0.0; space.n_vertices];
            let mut any = false;
            for w in 0..space.n_vertices {
                if space.vertex_colors[w] == color {
                    let idx = w * npde + k;
                    let delta = 1.5e-8 * (base_state[idx].abs() + 1.0);
                    deltas[w] = delta;
                    if wrt_udot {
                        udotp[idx] = udot[idx] + delta;
                    } else {
                        up[idx] = u[idx] + delta;
                    }
                    any = true;
                }
            }
            if !any {
                continue;
            }
            residual_with_geometry(space, mesh, pdedef, geom, t, &up, &udotp, xdot, &mut rp);
            for w in 0..space.n_vertices {
                if space.vertex_colors[w] != color {
                    continue;
                }
                let col = w * npde + k;
                for &v in &space.closed_nbrs[w] {
                    for i in 0..npde {
                        let row = v * npde + i;
                        if let Some(slot) = jac.slot(row, col) {
                            let val = (rp[row] - r0[row]) / deltas[w];
                            jac.values_mut()[slot] = val;
                        }
                    }
                }
                if wrt_udot {
                    udotp[col] = udot[col];
                } else {
                    up[col] = u[col];
                }
            }
        }
    }
    jac
}

/// Makes `u` consistent with the Dirichlet constraints at time `t` by
/// nodewise scalar Newton on the Dirichlet residuals.
pub fn project_dirichlet(
    u: &mut [f64],
    mesh: &Mesh,
    pdedef: &PdeDefinition,
    t: f64,
) -> Result<(), FemError> {
    let space = FemSpace::new(mesh, pdedef)?;
    let geom = Geometry::new(mesh, mesh.coords())?;
    project_dirichlet_with(&space, pdedef, &geom, t, u)
}

pub(crate) fn project_dirichlet_with(
    space: &FemSpace,
    pdedef: &PdeDefinition,
    geom: &Geometry,
    t: f64,
    u: &mut [f64],
) -> Result<(), FemError> {
    let nd = space.dirichlet.len();
    if nd == 0 {
        return Ok(());
    }
    let d = space.dim;
    let npde = space.npde;
    let mut x_d = vec![0.0; nd * d];
    let mut marks = vec![0i32; nd];
    for (k, &(v, _i, m)) in space.dirichlet.iter().enumerate() {
        x_d[k * d..(k + 1) * d].copy_from_slice(&geom.coords[v * d..(v + 1) * d]);
        marks[k] = m;
    }
    let mut u_d = vec![0.0; nd * npde];
    let mut rvals = vec![0.0; nd];
    let mut rpert = vec![0.0; nd];
    for _iter in 0..30 {
        for (k, &(v, _, _)) in space.dirichlet.iter().enumerate() {
            u_d[k * npde..(k + 1) * npde].copy_from_slice(&u[v * npde..(v + 1) * npde]);
        }
        let mut worst: f64 = 0.0;
        for i in 0..npde {
            let batch =
                DirichletBatch { u: &u_d, x: &x_d, t, bf_mark: &marks, n: nd, dim: d, npde };
            rvals.fill(0.0);
            (pdedef.dirichlet_res)(&batch, i, &mut rvals);
            // finite-difference slope with respect to component i
            let mut u_p = u_d.clone();
            let delta = 1e-7;
            for k in 0..nd {
                u_p[k * npde + i] += delta;
            }
            let batch_p =
                DirichletBatch { u: &u_p, x: &x_d, t, bf_mark: &marks, n: nd, dim: d, npde };
            rpert.fill(0.0);
            (pdedef.dirichlet_res)(&batch_p, i, &mut rpert);
            for (k, &(v, comp, _)) in space.dirichlet.iter().enumerate() {
                if comp != i {
                    continue;
                }
                let slope = (rpert[k] - rvals[k]) / delta;
                if slope.abs() > 1e-14 {
                    u[v * npde + i] -= rvals[k] / slope;
                }
                worst = worst.max(rvals[k].abs());
            }
        }
        if worst <= 1e-12 {
            return Ok(());
        }
    }
    // verify convergence
    for (k, &(v, _, _)) in space.dirichlet.iter().enumerate() {
        u_d[k * npde..(k + 1) * npde].copy_from_slice(&u[v * npde..(v + 1) * npde]);
    }
    let batch = DirichletBatch { u: &u_d, x: &x_d, t, bf_mark: &marks, n: nd, dim: d, npde };
    let mut worst: f64 = 0.0;
    for i in 0..npde {
        rvals.fill(0.0);
        (pdedef.dirichlet_res)(&batch, i, &mut rvals);
        for (k, &(_, comp, _)) in space.dirichlet.iter().enumerate() {
            if comp == i {
                worst = worst.max(rvals[k].abs());
            }
        }
    }
    if worst > 1e-8 {
        return Err(FemError::NewtonFailed { iters: 30, residual: worst });
    }
    Ok(())
}
