//! Error norms of P1 approximations against a known exact solution.

use super::FemError;
use crate::mesh::Mesh;
use crate::quadrature::error_rule;

/// Batch-evaluated exact solution: fills `out` (`n x npde`) at the points
/// `x` (`n x dim`) and time `t`.
pub type ExactFn<'a> = &'a dyn Fn(f64, &[f64], &mut [f64]);

fn check(mesh: &Mesh, u: &[f64], npde: usize) -> Result<(), FemError> {
    if u.len() != mesh.n_vertices() * npde {
        return Err(FemError::BadShape(format!(
            "solution has {} entries, expected {} x {npde}",
            u.len(),
            mesh.n_vertices()
        )));
    }
    Ok(())
}

/// L2 norm of the P1 approximation error, accumulated over all solution
/// components with a quadrature rule exact for degree <= 4.
pub fn error_p1_l2(
    uexact: ExactFn<'_>,
    t: f64,
    mesh: &Mesh,
    u: &[f64],
    npde: usize,
) -> Result<f64, FemError> {
    check(mesh, u, npde)?;
    let d = mesh.dim();
    let rule = error_rule(d);
    let ne = mesh.n_elements();
    let nq = rule.n_points();
    // all quadrature points of all elements in one batch
    let mut xq = vec![0.0; ne * nq * d];
    let mut uh = vec![0.0; ne * nq * npde];
    for e in 0..ne {
        let vs = mesh.elem(e);
        for q in 0..nq {
            let bc = rule.point(q);
            let row = e * nq + q;
            for (j, &v) in vs.iter().enumerate() {
                for r in 0..d {
                    xq[row * d + r] += bc[j] * mesh.vertex(v)[r];
                }
                for k in 0..npde {
                    uh[row * npde + k] += bc[j] * u[v * npde + k];
                }
            }
        }
    }
    let mut ue = vec![0.0; ne * nq * npde];
    uexact(t, &xq, &mut ue);
    let mut total = 0.0;
    for e in 0..ne {
        let vol = mesh.volume(e);
        for q in 0..nq {
            let row = e * nq + q;
            let mut s = 0.0;
            for k in 0..npde {
                let diff = uh[row * npde + k] - ue[row * npde + k];
                s += diff * diff;
            }
            total += vol * rule.weights[q] * s;
        }
    }
    Ok(total.sqrt())
}

/// Max-norm of the P1 approximation error over quadrature points and
/// vertices.
pub fn error_p1_linf(
    uexact: ExactFn<'_>,
    t: f64,
    mesh: &Mesh,
    u: &[f64],
    npde: usize,
) -> Result<f64, FemError> {
    check(mesh, u, npde)?;
    let d = mesh.dim();
    let rule = error_rule(d);
    let ne = mesh.n_elements();
    let nq = rule.n_points();
    let mut worst: f64 = 0.0;
    // vertices
    let nv = mesh.n_vertices();
    let mut ue_v = vec![0.0; nv * npde];
    uexact(t, mesh.coords(), &mut ue_v);
    for i in 0..nv * npde {
        worst = worst.max((u[i] - ue_v[i]).abs());
    }
    // quadrature points
    let mut xq = vec![0.0; ne * nq * d];
    let mut uh = vec![0.0; ne * nq * npde];
    for e in 0..ne {
        let vs = mesh.elem(e);
        for q in 0..nq {
            let bc = rule.point(q);
            let row = e * nq + q;
            for (j, &v) in vs.iter().enumerate() {
                for r in 0..d {
                    xq[row * d + r] += bc[j] * mesh.vertex(v)[r];
                }
                for k in 0..npde {
                    uh[row * npde + k] += bc[j] * u[v * npde + k];
                }
            }
        }
    }
    let mut ue = vec![0.0; ne * nq * npde];
    uexact(t, &xq, &mut ue);
    for i in 0..ne * nq * npde {
        worst = worst.max((uh[i] - ue[i]).abs());
    }
    Ok(worst)
}
