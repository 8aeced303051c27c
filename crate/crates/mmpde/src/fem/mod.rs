//! Moving-mesh P1 finite elements: weak-form residual assembly, the
//! one-step IBVP integrator, the steady BVP solver and error norms.
//!
//! The weak form is supplied through three batch-evaluated callbacks:
//! volume integrands F_i, Neumann boundary integrands G_i and Dirichlet
//! residuals R_i, mirroring the vectorized convention of the solution and
//! derivative layouts (see the crate root).

mod assemble;
mod bvp;
mod error;
mod step;

pub use assemble::{assemble_residual, project_dirichlet, FemSpace};
pub use bvp::{movfem_bvp, BvpOptions};
pub use error::{error_p1_l2, error_p1_linf};
pub use step::{movfem_step, MovFem, MovFemOptions, StepResult};

use crate::mesh::MeshError;
use crate::odeint::OdeError;
use crate::sparse::LinAlgError;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum FemError {
    #[error(transparent)]
    Mesh(#[from] MeshError),
    #[error(transparent)]
    Ode(#[from] OdeError),
    #[error(transparent)]
    LinAlg(#[from] LinAlgError),
    #[error("shape mismatch: {0}")]
    BadShape(String),
    #[error("nonlinear solve did not converge within {iters} iterations (|r|_inf = {residual:e})")]
    NewtonFailed { iters: usize, residual: f64 },
    #[error("solution became non-finite")]
    NonFinite,
}

/// Boundary condition type per (facet, component).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BcType {
    Neumann,
    Dirichlet,
}

/// Batched arguments of the volume integrand F_i at quadrature points.
/// All arrays are row-major over `n` points.
pub struct VolumeBatch<'a> {
    /// Solution gradients, `n x (dim*npde)`:
    /// `[du1/dx1..du1/dxd, ..., dunpde/dx1..dunpde/dxd]`.
    pub du: &'a [f64],
    /// Solution values, `n x npde`.
    pub u: &'a [f64],
    /// Eulerian time derivative (mesh movement already accounted for),
    /// `n x npde`.
    pub ut: &'a [f64],
    /// Test function gradient, `n x dim`.
    pub dv: &'a [f64],
    /// Test function values, `n`.
    pub v: &'a [f64],
    /// Physical coordinates, `n x dim`.
    pub x: &'a [f64],
    pub t: f64,
    pub n: usize,
    pub dim: usize,
    pub npde: usize,
}

/// Batched arguments of the Neumann boundary integrand G_i.
pub struct BoundaryBatch<'a> {
    pub du: &'a [f64],
    pub u: &'a [f64],
    pub v: &'a [f64],
    pub x: &'a [f64],
    pub t: f64,
    /// Boundary marker of the facet each point belongs to.
    pub bf_mark: &'a [i32],
    pub n: usize,
    pub dim: usize,
    pub npde: usize,
}

/// Batched arguments of the Dirichlet residual R_i at boundary vertices.
pub struct DirichletBatch<'a> {
    pub u: &'a [f64],
    pub x: &'a [f64],
    pub t: f64,
    pub bf_mark: &'a [i32],
    pub n: usize,
    pub dim: usize,
    pub npde: usize,
}

pub type VolumeFn = Box<dyn Fn(&VolumeBatch<'_>, usize, &mut [f64]) + Send + Sync>;
pub type BoundaryFn = Box<dyn Fn(&BoundaryBatch<'_>, usize, &mut [f64]) + Send + Sync>;
pub type DirichletFn = Box<dyn Fn(&DirichletBatch<'_>, usize, &mut [f64]) + Send + Sync>;

/// Weak-form definition of a PDE system: boundary markers/types and the
/// three integrand callbacks.
pub struct PdeDefinition {
    pub npde: usize,
    /// Marker per boundary facet.
    pub bf_mark: Vec<i32>,
    /// `N_bf x npde` boundary condition types, facet-major.
    pub bf_type: Vec<BcType>,
    pub volume_int: VolumeFn,
    pub boundary_int: BoundaryFn,
    pub dirichlet_res: DirichletFn,
}

impl PdeDefinition {
    pub fn bc(&self, facet: usize, comp: usize) -> BcType {
        self.bf_type[facet * self.npde + comp]
    }

    pub(crate) fn validate(&self, mesh: &crate::mesh::Mesh) -> Result<(), FemError> {
        let nbf = mesh.n_boundary_facets();
        if self.bf_mark.len() != nbf || self.bf_type.len() != nbf * self.npde {
            return Err(FemError::BadShape(format!(
                "boundary data sized for {} facets, mesh has {}",
                self.bf_mark.len(),
                nbf
            )));
        }
        Ok(())
    }
}

#[cfg(test)]
pub(crate) mod testutil;
