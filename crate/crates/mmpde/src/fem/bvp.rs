//! Steady BVP solver: damped Newton on the stationary weak-form residual.

use super::assemble::{fd_jacobian, residual_with_geometry, FemSpace, Geometry};
use super::{FemError, PdeDefinition};
use crate::mesh::Mesh;
use crate::sparse::{bicgstab_ilu, DirectSolver};

#[derive(Debug, Clone)]
pub struct BvpOptions {
    pub max_iter: usize,
    pub tol: f64,
    pub direct_ls: bool,
}

impl Default for BvpOptions {
    fn default() -> Self {
        Self { max_iter: 300, tol: 1e-6, direct_ls: true }
    }
}

/// Solves the steady weak form (the `ut` argument is zero and `t` is an
/// unused parameter) by damped Newton, converging when the residual
/// max-norm drops below `tol`.
pub fn movfem_bvp(
    u0: &[f64],
    mesh: &Mesh,
    pdedef: &PdeDefinition,
    opts: &BvpOptions,
) -> Result<Vec<f64>, FemError> {
    let space = FemSpace::new(mesh, pdedef)?;
    let n = space.n_dofs();
    if u0.len() != n {
        return Err(FemError::BadShape(format!(
            "initial guess has {} entries, expected {n}",
            u0.len()
        )));
    }
    let geom = Geometry::new(mesh, mesh.coords())?;
    let zeros_dot = vec![0.0; n];
    let xdot = vec![0.0; mesh.n_vertices() * mesh.dim()];
    let t = 0.0;
    let mut u = u0.to_vec();
    let mut r = vec![0.0; n];
    let mut solver = DirectSolver::new();
    residual_with_geometry(&space, mesh, pdedef, &geom, t, &u, &zeros_dot, &xdot, &mut r);
    let mut rnorm = inf_norm(&r);
    for _it in 0..opts.max_iter {
        if rnorm <= opts.tol {
            return Ok(u);
        }
        if !rnorm.is_finite() {
            return Err(FemError::NonFinite);
        }
        let jac = fd_jacobian(&space, mesh, pdedef, &geom, t, &u, &zeros_dot, &xdot, &r, false);
        let mut step: Vec<f64> = r.iter().map(|v| -v).collect();
        if opts.direct_ls {
            solver.factorize(&jac)?;
            solver.solve_in_place(&mut step)?;
        } else {
            let rhs = step.clone();
            step = bicgstab_ilu(&jac, &rhs, None, 1e-10, 1e-13, 1000)?;
        }
        // backtracking line search on the residual max-norm
        let mut lambda = 1.0f64;
        let mut accepted = false;
        let mut u_try = vec![0.0; n];
        for _ls in 0..12 {
            for i in 0..n {
                u_try[i] = u[i] + lambda * step[i];
            }
            residual_with_geometry(
                &space, mesh, pdedef, &geom, t, &u_try, &zeros_dot, &xdot, &mut r,
            );
            let rn = inf_norm(&r);
            if rn.is_finite() && (rn < rnorm || rn <= opts.tol) {
                u.copy_from_slice(&u_try);
                rnorm = rn;
                accepted = true;
                break;
            }
            lambda *= 0.5;
        }
        if !accepted {
            return Err(FemError::NewtonFailed { iters: opts.max_iter, residual: rnorm });
        }
    }
    if rnorm <= opts.tol {
        Ok(u)
    } else {
        Err(FemError::NewtonFailed { iters: opts.max_iter, residual: rnorm })
    }
}

fn inf_norm(v: &[f64]) -> f64 {
    v.iter().fold(0.0f64, |a, &x| a.max(x.abs()))
}
