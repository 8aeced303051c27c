//! Small hand-built weak forms for the fem unit tests.

use super::*;
use crate::mesh::Mesh;

/// Steady Laplace with full Dirichlet data u = g(x).
pub(crate) fn laplace_all_dirichlet(
    mesh: &Mesh,
    g: impl Fn(&[f64]) -> f64 + Send + Sync + Copy + 'static,
    scale: f64,
) -> PdeDefinition {
    let nbf = mesh.n_boundary_facets();
    PdeDefinition {
        npde: 1,
        bf_mark: vec![1; nbf],
        bf_type: vec![BcType::Dirichlet; nbf],
        volume_int: Box::new(move |b: &VolumeBatch<'_>, _i, out: &mut [f64]| {
            for e in 0..b.n {
                let mut s = 0.0;
                for r in 0..b.dim {
                    s += b.du[e * b.dim + r] * b.dv[e * b.dim + r];
                }
                out[e] = scale * s;
            }
        }),
        boundary_int: Box::new(|_b: &BoundaryBatch<'_>, _i, out: &mut [f64]| out.fill(0.0)),
        dirichlet_res: Box::new(move |b: &DirichletBatch<'_>, _i, out: &mut [f64]| {
            for e in 0..b.n {
                out[e] = b.u[e * b.npde] - g(&b.x[e * b.dim..(e + 1) * b.dim]);
            }
        }),
    }
}

/// Pure mass weak form F = ut * v, all boundary facets Neumann with G = 0.
pub(crate) fn mass_only(mesh: &Mesh) -> PdeDefinition {
    let nbf = mesh.n_boundary_facets();
    PdeDefinition {
        npde: 1,
        bf_mark: vec![1; nbf],
        bf_type: vec![BcType::Neumann; nbf],
        volume_int: Box::new(|b: &VolumeBatch<'_>, _i, out: &mut [f64]| {
            for e in 0..b.n {
                out[e] = b.ut[e * b.npde] * b.v[e];
            }
        }),
        boundary_int: Box::new(|_b: &BoundaryBatch<'_>, _i, out: &mut [f64]| out.fill(0.0)),
        dirichlet_res: Box::new(|_b: &DirichletBatch<'_>, _i, out: &mut [f64]| out.fill(0.0)),
    }
}

/// The 2D heat benchmark weak form on the unit square scaled to unit tests:
/// u_t = Laplace(u) + (13 pi^2 - 1) uexact, Dirichlet 0 on x=0 / y=0,
/// Neumann fluxes on x=1 / y=1.
pub(crate) fn heat_square(mesh: &Mesh) -> PdeDefinition {
    let nbf = mesh.n_boundary_facets();
    let mut bf_mark = vec![1i32; nbf];
    let mut mid = [0.0; 2];
    for f in 0..nbf {
        mesh.facet_centroid(f, &mut mid);
        if mid[0] < 1e-8 {
            bf_mark[f] = 4;
        } else if mid[0] > 1.0 - 1e-8 {
            bf_mark[f] = 2;
        } else if mid[1] > 1.0 - 1e-8 {
            bf_mark[f] = 3;
        }
    }
    let bf_type: Vec<BcType> = bf_mark
        .iter()
        .map(|&m| if m == 2 || m == 3 { BcType::Neumann } else { BcType::Dirichlet })
        .collect();
    PdeDefinition {
        npde: 1,
        bf_mark,
        bf_type,
        volume_int: Box::new(|b: &VolumeBatch<'_>, _i, out: &mut [f64]| {
            let pi = std::f64::consts::PI;
            for e in 0..b.n {
                let (x, y) = (b.x[e * 2], b.x[e * 2 + 1]);
                let f = (13.0 * pi * pi - 1.0)
                    * (-b.t).exp()
                    * (2.0 * pi * x).sin()
                    * (3.0 * pi * y).sin();
                out[e] = b.ut[e] * b.v[e]
                    + b.du[e * 2] * b.dv[e * 2]
                    + b.du[e * 2 + 1] * b.dv[e * 2 + 1]
                    - f * b.v[e];
            }
        }),
        boundary_int: Box::new(|b: &BoundaryBatch<'_>, _i, out: &mut [f64]| {
            let pi = std::f64::consts::PI;
            for e in 0..b.n {
                out[e] = match b.bf_mark[e] {
                    2 => -2.0 * pi * (-b.t).exp() * (3.0 * pi * b.x[e * 2 + 1]).sin() * b.v[e],
                    3 => 3.0 * pi * (-b.t).exp() * (2.0 * pi * b.x[e * 2]).sin() * b.v[e],
                    _ => 0.0,
                };
            }
        }),
        dirichlet_res: Box::new(|b: &DirichletBatch<'_>, _i, out: &mut [f64]| {
            for e in 0..b.n {
                out[e] = b.u[e];
            }
        }),
    }
}

pub(crate) fn heat_exact(t: f64, x: &[f64], out: &mut [f64]) {
    let pi = std::f64::consts::PI;
    for (i, p) in x.chunks(2).enumerate() {
        out[i] = (-t).exp() * (2.0 * pi * p[0]).sin() * (3.0 * pi * p[1]).sin();
    }
}
