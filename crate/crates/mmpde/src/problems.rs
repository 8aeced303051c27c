//! Benchmark problem definitions: Burgers 1D, heat 2D, a 2D combustion
//! model and Poisson 3D, with exact solutions where available.

use crate::fem::{BcType, BoundaryBatch, DirichletBatch, PdeDefinition, VolumeBatch};
use crate::mesh::{cube2tet, interval_mesh, rect2tri, Mesh, MeshError};

pub type ExactSolution = Box<dyn Fn(f64, &[f64], &mut [f64]) + Send + Sync>;

/// A benchmark: domain/mesh factory, weak-form definition, initial data and
/// (when known) the exact solution.
pub struct BenchmarkProblem {
    pub name: &'static str,
    pub dim: usize,
    pub npde: usize,
    /// Time horizon; irrelevant when `steady`.
    pub t_end: f64,
    pub steady: bool,
    pub uexact: Option<ExactSolution>,
    initial: Box<dyn Fn(&[f64], &mut [f64]) + Send + Sync>,
    mesh_factory: Box<dyn Fn(usize) -> Result<Mesh, MeshError> + Send + Sync>,
    pdedef_factory: Box<dyn Fn(&Mesh) -> PdeDefinition + Send + Sync>,
}

impl BenchmarkProblem {
    /// Builds the problem mesh at resolution `n` (cells per unit length for
    /// the rectangular domains, vertices for the 1D interval).
    pub fn make_mesh(&self, n: usize) -> Result<Mesh, MeshError> {
        (self.mesh_factory)(n)
    }

    pub fn make_pdedef(&self, mesh: &Mesh) -> PdeDefinition {
        (self.pdedef_factory)(mesh)
    }

    /// Initial solution sampled at the mesh vertices (N_v x npde).
    pub fn initial_solution(&self, mesh: &Mesh) -> Vec<f64> {
        let mut u = vec![0.0; mesh.n_vertices() * self.npde];
        (self.initial)(mesh.coords(), &mut u);
        u
    }

    /// Vertices that must not move during mesh adaptation (domain corners;
    /// both endpoints in 1D).
    pub fn corner_nodes(&self, mesh: &Mesh) -> Vec<usize> {
        corner_nodes_of(mesh)
    }
}

/// Boundary vertices whose incident boundary facets span more than one
/// direction (geometric corners), plus the endpoints in 1D.
pub fn corner_nodes_of(mesh: &Mesh) -> Vec<usize> {
    let d = mesh.dim();
    if d == 1 {
        let mut out: Vec<usize> = mesh.boundary().to_vec();
        out.sort_unstable();
        out.dedup();
        return out;
    }
    let normals = mesh.face_normals().unwrap_or_default();
    let nv = mesh.n_vertices();
    let mut first: Vec<Option<[f64; 3]>> = vec![None; nv];
    let mut corner = vec![false; nv];
    for f in 0..mesh.n_boundary_facets() {
        let n = &normals[f * d..(f + 1) * d];
        for &v in mesh.facet(f) {
            match &first[v] {
                None => {
                    let mut a = [0.0; 3];
                    a[..d].copy_from_slice(n);
                    first[v] = Some(a);
                }
                Some(a) => {
                    let dot: f64 = (0..d).map(|r| a[r] * n[r]).sum();
                    if dot < 1.0 - 1e-8 {
                        corner[v] = true;
                    }
                }
            }
        }
    }
    (0..nv).filter(|&v| corner[v]).collect()
}

fn linspace(a: f64, b: f64, cells: usize) -> Vec<f64> {
    (0..=cells).map(|i| a + (b - a) * i as f64 / cells as f64).collect()
}

/// Burgers' equation in 1D: u_t = eps u_xx - u u_x on (0,1) with Dirichlet
/// data from the exact traveling-front solution; eps = 1e-3.
pub fn burgers1d() -> BenchmarkProblem {
    const EPS: f64 = 1e-3;
    let exact = |t: f64, x: &[f64], out: &mut [f64]| {
        for (i, &xi) in x.iter().enumerate() {
            out[i] = burgers_exact_point(t, xi, EPS);
        }
    };
    BenchmarkProblem {
        name: "burgers1d",
        dim: 1,
        npde: 1,
        t_end: 1.0,
        steady: false,
        uexact: Some(Box::new(exact)),
        initial: Box::new(move |x, out| exact(0.0, x, out)),
        mesh_factory: Box::new(|n| interval_mesh(&linspace(0.0, 1.0, n.max(2) - 1))),
        pdedef_factory: Box::new(|mesh| {
            let nbf = mesh.n_boundary_facets();
            PdeDefinition {
                npde: 1,
                bf_mark: vec![1; nbf],
                bf_type: vec![BcType::Dirichlet; nbf],
                volume_int: Box::new(|b: &VolumeBatch<'_>, _i, out: &mut [f64]| {
                    for e in 0..b.n {
                        out[e] = b.ut[e] * b.v[e]
                            + EPS * b.du[e] * b.dv[e]
                            + b.u[e] * b.du[e] * b.v[e];
                    }
                }),
                boundary_int: Box::new(|_b: &BoundaryBatch<'_>, _i, out: &mut [f64]| {
                    out.fill(0.0)
                }),
                dirichlet_res: Box::new(|b: &DirichletBatch<'_>, _i, out: &mut [f64]| {
                    for e in 0..b.n {
                        out[e] = b.u[e] - burgers_exact_point(b.t, b.x[e], EPS);
                    }
                }),
            }
        }),
    }
}

/// The three-exponential traveling-front solution, evaluated in
/// log-sum-exp form so the huge exponents at eps = 1e-3 cannot overflow.
pub fn burgers_exact_point(t: f64, x: f64, eps: f64) -> f64 {
    let e1 = (-x + 0.5 - 4.95 * t) / (20.0 * eps);
    let e2 = (-x + 0.5 - 0.75 * t) / (4.0 * eps);
    let e3 = (-x + 0.375) / (2.0 * eps);
    let m = e1.max(e2).max(e3);
    let (w1, w2, w3) = ((e1 - m).exp(), (e2 - m).exp(), (e3 - m).exp());
    (0.1 * w1 + 0.5 * w2 + w3) / (w1 + w2 + w3)
}

/// Heat equation on the unit square with mixed Dirichlet/Neumann data and
/// the exact solution e^{-t} sin(2 pi x) sin(3 pi y).
pub fn heat2d() -> BenchmarkProblem {
    let exact = |t: f64, x: &[f64], out: &mut [f64]| {
        let pi = std::f64::consts::PI;
        for (i, p) in x.chunks(2).enumerate() {
            out[i] = (-t).exp() * (2.0 * pi * p[0]).sin() * (3.0 * pi * p[1]).sin();
        }
    };
    BenchmarkProblem {
        name: "heat2d",
        dim: 2,
        npde: 1,
        t_end: 1.0,
        steady: false,
        uexact: Some(Box::new(exact)),
        initial: Box::new(move |x, out| exact(0.0, x, out)),
        mesh_factory: Box::new(|n| {
            let g = linspace(0.0, 1.0, n.max(1));
            rect2tri(&g, &g, 2)
        }),
        pdedef_factory: Box::new(|mesh| heat2d_pdedef(mesh)),
    }
}

fn heat2d_pdedef(mesh: &Mesh) -> PdeDefinition {
    let pi = std::f64::consts::PI;
    let nbf = mesh.n_boundary_facets();
    // marks: 1 on y=0 (default), 4 on x=0, 2 on x=1, 3 on y=1
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
        volume_int: Box::new(move |b: &VolumeBatch<'_>, _i, out: &mut [f64]| {
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
        boundary_int: Box::new(move |b: &BoundaryBatch<'_>, _i, out: &mut [f64]| {
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

/// Combustion model (temperature theta and species Y) on the notched
/// channel domain; Le = 1, alpha = 0.8, beta = 10, k = 0.1.
pub fn combustion2d() -> BenchmarkProblem {
    const LE: f64 = 1.0;
    const ALPHA: f64 = 0.8;
    const BETA: f64 = 10.0;
    const K_ROBIN: f64 = 0.1;
    BenchmarkProblem {
        name: "combustion2d",
        dim: 2,
        npde: 2,
        t_end: 60.0,
        steady: false,
        uexact: None,
        initial: Box::new(|x, out| {
            for (i, p) in x.chunks(2).enumerate() {
                let xi = p[0];
                if xi <= 7.5 {
                    out[i * 2] = 1.0;
                    out[i * 2 + 1] = 0.0;
                } else {
                    out[i * 2] = (7.5 - xi).exp();
                    out[i * 2 + 1] = 1.0 - (LE * (7.5 - xi)).exp();
                }
            }
        }),
        mesh_factory: Box::new(|n| combustion_mesh(n)),
        pdedef_factory: Box::new(|mesh| {
            let nbf = mesh.n_boundary_facets();
            let mut bf_mark = vec![1i32; nbf];
            let mut mid = [0.0; 2];
            for f in 0..nbf {
                mesh.facet_centroid(f, &mut mid);
                let (x, y) = (mid[0], mid[1]);
                if x < 1e-8 {
                    bf_mark[f] = 2;
                } else if (x - 15.0).abs() < 1e-8 || (x - 30.0).abs() < 1e-8 {
                    bf_mark[f] = 3;
                } else if ((y - 4.0).abs() < 1e-8 || (y - 12.0).abs() < 1e-8)
                    && x > 15.0
                    && x < 30.0
                {
                    bf_mark[f] = 3;
                }
            }
            let mut bf_type = Vec::with_capacity(nbf * 2);
            for &m in &bf_mark {
                let t = if m == 2 { BcType::Dirichlet } else { BcType::Neumann };
                bf_type.push(t);
                bf_type.push(t);
            }
            PdeDefinition {
                npde: 2,
                bf_mark,
                bf_type,
                volume_int: Box::new(|b: &VolumeBatch<'_>, ipde, out: &mut [f64]| {
                    for e in 0..b.n {
                        let theta = b.u[e * 2];
                        let y_sp = b.u[e * 2 + 1];
                        let w = BETA * BETA / (2.0 * LE)
                            * y_sp
                            * (-BETA * (1.0 - theta) / (1.0 - ALPHA * (1.0 - theta))).exp();
                        if ipde == 0 {
                            out[e] = b.ut[e * 2] * b.v[e]
                                + b.du[e * 4] * b.dv[e * 2]
                                + b.du[e * 4 + 1] * b.dv[e * 2 + 1]
                                - w * b.v[e];
                        } else {
                            out[e] = b.ut[e * 2 + 1] * b.v[e]
                                + (b.du[e * 4 + 2] * b.dv[e * 2]
                                    + b.du[e * 4 + 3] * b.dv[e * 2 + 1])
                                    / LE
                                + w * b.v[e];
                        }
                    }
                }),
                boundary_int: Box::new(|b: &BoundaryBatch<'_>, ipde, out: &mut [f64]| {
                    for e in 0..b.n {
                        out[e] = if ipde == 0 && b.bf_mark[e] == 3 {
                            K_ROBIN * b.u[e * 2] * b.v[e]
                        } else {
                            0.0
                        };
                    }
                }),
                dirichlet_res: Box::new(|b: &DirichletBatch<'_>, ipde, out: &mut [f64]| {
                    for e in 0..b.n {
                        out[e] = if b.bf_mark[e] == 2 {
                            if ipde == 0 {
                                b.u[e * 2] - 1.0
                            } else {
                                b.u[e * 2 + 1]
                            }
                        } else {
                            0.0
                        };
                    }
                }),
            }
        }),
    }
}

/// The notched channel of the combustion benchmark, assembled from four
/// rectangles; `n` grid cells per unit length.
fn combustion_mesh(n: usize) -> Result<Mesh, MeshError> {
    let n = n.max(1);
    let cells = |len: f64| (len * n as f64).round() as usize;
    let rect = |x0: f64, x1: f64, y0: f64, y1: f64| -> Result<Mesh, MeshError> {
        rect2tri(
            &linspace(x0, x1, cells(x1 - x0)),
            &linspace(y0, y1, cells(y1 - y0)),
            2,
        )
    };
    // the polygon cuts rectangular notches out of the bottom and top of the
    // channel between x = 15 and x = 30, leaving the middle strip
    let left = rect(0.0, 15.0, 0.0, 16.0)?;
    let strip = rect(15.0, 30.0, 4.0, 12.0)?;
    let right = rect(30.0, 60.0, 0.0, 16.0)?;
    left.merge(&strip)?.merge(&right)
}

/// Poisson equation on the unit cube with a Neumann face at x = 1 and
/// Dirichlet data elsewhere; exact solution sin(2 pi x) sin(3 pi y) sin(pi z).
pub fn poisson3d() -> BenchmarkProblem {
    let pi = std::f64::consts::PI;
    let exact = move |_t: f64, x: &[f64], out: &mut [f64]| {
        for (i, p) in x.chunks(3).enumerate() {
            out[i] = (2.0 * pi * p[0]).sin() * (3.0 * pi * p[1]).sin() * (pi * p[2]).sin();
        }
    };
    BenchmarkProblem {
        name: "poisson3d",
        dim: 3,
        npde: 1,
        t_end: 0.0,
        steady: true,
        uexact: Some(Box::new(exact)),
        initial: Box::new(|_x, out| out.fill(0.0)),
        mesh_factory: Box::new(|n| {
            let g = linspace(0.0, 1.0, n.max(1));
            cube2tet(&g, &g, &g)
        }),
        pdedef_factory: Box::new(move |mesh| {
            let nbf = mesh.n_boundary_facets();
            let mut bf_mark = vec![1i32; nbf];
            let mut mid = [0.0; 3];
            for f in 0..nbf {
                mesh.facet_centroid(f, &mut mid);
                if mid[0] > 1.0 - 1e-8 {
                    bf_mark[f] = 2;
                }
            }
            let bf_type: Vec<BcType> = bf_mark
                .iter()
                .map(|&m| if m == 2 { BcType::Neumann } else { BcType::Dirichlet })
                .collect();
            PdeDefinition {
                npde: 1,
                bf_mark,
                bf_type,
                volume_int: Box::new(move |b: &VolumeBatch<'_>, _i, out: &mut [f64]| {
                    for e in 0..b.n {
                        let x = &b.x[e * 3..(e + 1) * 3];
                        let f = 14.0
                            * pi
                            * pi
                            * (2.0 * pi * x[0]).sin()
                            * (3.0 * pi * x[1]).sin()
                            * (pi * x[2]).sin();
                        out[e] = b.du[e * 3] * b.dv[e * 3]
                            + b.du[e * 3 + 1] * b.dv[e * 3 + 1]
                            + b.du[e * 3 + 2] * b.dv[e * 3 + 2]
                            - f * b.v[e];
                    }
                }),
                boundary_int: Box::new(move |b: &BoundaryBatch<'_>, _i, out: &mut [f64]| {
                    for e in 0..b.n {
                        out[e] = if b.bf_mark[e] == 2 {
                            -2.0 * pi
                                * (3.0 * pi * b.x[e * 3 + 1]).sin()
                                * (pi * b.x[e * 3 + 2]).sin()
                                * b.v[e]
                        } else {
                            0.0
                        };
                    }
                }),
                dirichlet_res: Box::new(move |b: &DirichletBatch<'_>, _i, out: &mut [f64]| {
                    let mut ue = vec![0.0; b.n];
                    exact(b.t, b.x, &mut ue);
                    for e in 0..b.n {
                        out[e] = b.u[e] - ue[e];
                    }
                }),
            }
        }),
    }
}

pub fn by_name(name: &str) -> Option<BenchmarkProblem> {
    match name {
        "burgers1d" => Some(burgers1d()),
        "heat2d" => Some(heat2d()),
        "combustion2d" => Some(combustion2d()),
        "poisson3d" => Some(poisson3d()),
        _ => None,
    }
}
