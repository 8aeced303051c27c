//! One-step moving-mesh integration of the semidiscrete weak form with
//! Radau IIA and adaptive step selection.

use super::assemble::{
    check_state, fd_jacobian, project_dirichlet_with, residual_with_geometry, FemSpace, Geometry,
};
use super::{FemError, PdeDefinition};
use crate::mesh::Mesh;
use crate::odeint::{ImplicitSystem, OdeError, RadauIntegrator, RadauOptions};
use crate::sparse::CsrMatrix;

/// Outcome of one [`movfem_step`] call.
#[derive(Debug, Clone)]
pub struct StepResult {
    /// Solution at `t + dt_used`.
    pub unew: Vec<f64>,
    /// Step actually taken (== requested `dt` with `fixed_step`).
    pub dt_used: f64,
    /// Predicted size for the next step.
    pub dt_next: f64,
}

#[derive(Debug, Clone)]
pub struct MovFemOptions {
    pub fixed_step: bool,
    pub rel_tol: f64,
    pub abs_tol: f64,
    /// Direct sparse factorization when true, BiCGSTAB + ILU(0) otherwise.
    pub direct_ls: bool,
    /// Componentwise weights (length N_v * npde) for the step-error norm;
    /// zero excludes a component.
    pub control_weights: Option<Vec<f64>>,
}

impl Default for MovFemOptions {
    fn default() -> Self {
        Self { fixed_step: false, rel_tol: 1e-4, abs_tol: 1e-6, direct_ls: true, control_weights: None }
    }
}

/// The semidiscrete system on a linearly moving mesh:
/// X(s) = X(t0) + (s - t0) Xdot.
struct FemSystem<'a> {
    space: &'a FemSpace,
    mesh: &'a Mesh,
    pdedef: &'a PdeDefinition,
    t0: f64,
    x0: Vec<f64>,
    xdot: &'a [f64],
    cache: Vec<(f64, Geometry)>,
    geom_err: Option<FemError>,
}

impl<'a> FemSystem<'a> {
    fn new(
        space: &'a FemSpace,
        mesh: &'a Mesh,
        pdedef: &'a PdeDefinition,
        t0: f64,
        xdot: &'a [f64],
    ) -> Self {
        Self { space, mesh, pdedef, t0, x0: mesh.coords().to_vec(), xdot, cache: Vec::new(), geom_err: None }
    }

    fn geometry_at(&mut self, t: f64) -> Result<usize, FemError> {
        if let Some(pos) = self.cache.iter().position(|(tt, _)| (tt - t).abs() <= 1e-14 * t.abs().max(1.0)) {
            return Ok(pos);
        }
        let mut coords = self.x0.clone();
        let dt = t - self.t0;
        for (c, xd) in coords.iter_mut().zip(self.xdot) {
            *c += dt * xd;
        }
        let geom = Geometry::new(self.mesh, &coords)?;
        if self.cache.len() >= 4 {
            self.cache.remove(0);
        }
        self.cache.push((t, geom));
        Ok(self.cache.len() - 1)
    }
}

impl ImplicitSystem for FemSystem<'_> {
    fn dim(&self) -> usize {
        self.space.n_dofs()
    }

    fn residual(&mut self, t: f64, y: &[f64], ydot: &[f64], out: &mut [f64]) {
        match self.geometry_at(t) {
            Ok(pos) => {
                let geom = &self.cache[pos].1;
                residual_with_geometry(
                    self.space, self.mesh, self.pdedef, geom, t, y, ydot, self.xdot, out,
                );
            }
            Err(e) => {
                self.geom_err = Some(e);
                out.fill(f64::NAN);
            }
        }
    }

    fn jacobians(
        &mut self,
        t: f64,
        y: &[f64],
        ydot: &[f64],
    ) -> Result<(CsrMatrix, CsrMatrix), OdeError> {
        let pos = self
            .geometry_at(t)
            .map_err(|e| OdeError::BadInput(format!("geometry failure: {e}")))?;
        // compute r0 once, reuse for both Jacobians
        let n = self.space.n_dofs();
        let mut r0 = vec![0.0; n];
        {
            let geom = &self.cache[pos].1;
            residual_with_geometry(
                self.space, self.mesh, self.pdedef, geom, t, y, ydot, self.xdot, &mut r0,
            );
        }
        let geom = &self.cache[pos].1;
        let jy = fd_jacobian(
            self.space, self.mesh, self.pdedef, geom, t, y, ydot, self.xdot, &r0, false,
        );
        let jyd = fd_jacobian(
            self.space, self.mesh, self.pdedef, geom, t, y, ydot, self.xdot, &r0, true,
        );
        Ok((jy, jyd))
    }
}

/// Persistent MovFEM integrator: keeps the previous-step collocation data so
/// the two-step error estimator stays active across calls in a time loop.
pub struct MovFem {
    radau: RadauIntegrator,
}

impl MovFem {
    pub fn new(opts: &MovFemOptions) -> Self {
        let radau = RadauIntegrator::new(RadauOptions {
            abstol: opts.abs_tol,
            reltol: opts.rel_tol,
            direct: opts.direct_ls,
            weights: opts.control_weights.clone(),
            newton_kappa: 1e-2,
        });
        Self { radau }
    }

    /// Drops step history (after re-interpolating the solution or changing
    /// the dof layout).
    pub fn reset(&mut self) {
        self.radau.reset();
    }

    /// Integrates the PDE system over one step of at most `dt` starting at
    /// `t`, on the mesh `mesh` moving with nodal velocity `xdot`.
    #[allow(clippy::too_many_arguments)]
    pub fn step(
        &mut self,
        t: f64,
        dt: f64,
        u: &[f64],
        mesh: &Mesh,
        xdot: &[f64],
        pdedef: &PdeDefinition,
        opts: &MovFemOptions,
    ) -> Result<StepResult, FemError> {
        if dt <= 0.0 {
            return Err(FemError::BadShape(format!("dt must be positive, got {dt}")));
        }
        let space = FemSpace::new(mesh, pdedef)?;
        check_state(&space, mesh, u, u, xdot)?;
        // consistent initial state: Dirichlet rows solved at t
        let mut u0 = u.to_vec();
        let geom0 = Geometry::new(mesh, mesh.coords())?;
        project_dirichlet_with(&space, pdedef, &geom0, t, &mut u0)?;
        self.radau.opts.abstol = opts.abs_tol;
        self.radau.opts.reltol = opts.rel_tol;
        self.radau.opts.direct = opts.direct_ls;
        self.radau.opts.weights = opts.control_weights.clone();
        let mut sys = FemSystem::new(&space, mesh, pdedef, t, xdot);
        let (unew, dt_used, dt_next, _err) =
            self.radau.step_adaptive(&mut sys, t, &u0, dt, opts.fixed_step)?;
        if !unew.iter().all(|v| v.is_finite()) {
            return Err(FemError::NonFinite);
        }
        Ok(StepResult { unew, dt_used, dt_next })
    }
}

/// One-shot MovFEM step (fresh integrator: the step estimator uses the
/// single-step fallback). Use [`MovFem`] in a time loop to keep the
/// two-step estimator active.
#[allow(clippy::too_many_arguments)]
pub fn movfem_step(
    t: f64,
    dt: f64,
    u: &[f64],
    mesh: &Mesh,
    xdot: &[f64],
    pdedef: &PdeDefinition,
    opts: &MovFemOptions,
) -> Result<StepResult, FemError> {
    MovFem::new(opts).step(t, dt, u, mesh, xdot, pdedef, opts)
}
