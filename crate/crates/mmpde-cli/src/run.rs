//! The MP (mesh PDE / physical PDE) driver loop: adapt the mesh, move it
//! over the step window, integrate the physical PDEs through the motion.

use crate::config::ConfigFile;
use anyhow::{anyhow, bail, Context, Result};
use clap::Args;
use mmpde::fem::{error_p1_l2, error_p1_linf, movfem_bvp, BvpOptions, MovFem, MovFemOptions};
use mmpde::mesh::{quality_measures, write_vtk, Mesh, VtkField};
use mmpde::metric::{self, ErrorNorm, MetricField};
use mmpde::movmesh::{move_xi, MeshIntegrator, MmpdeParams};
use mmpde::problems::{by_name, BenchmarkProblem};
use mmpde::smallmat::eig_ceiling;
use std::io::Write;
use std::path::PathBuf;

#[derive(Args)]
pub struct RunArgs {
    /// Problem name: burgers1d, heat2d, combustion2d or poisson3d.
    pub problem: String,
    /// Optional key=value configuration file; flags override it.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Mesh resolution (vertices in 1D, cells per unit length otherwise).
    #[arg(long)]
    pub n: Option<usize>,
    #[arg(long)]
    pub tend: Option<f64>,
    /// Mesh-movement time scale tau.
    #[arg(long)]
    pub tau: Option<f64>,
    /// Initial physical time step.
    #[arg(long)]
    pub dt: Option<f64>,
    /// Disable mesh movement (uniform fixed mesh baseline).
    #[arg(long)]
    pub fixed_mesh: bool,
    /// Metric kind: arclength, l2, h1, iso-l2 or iso-h1.
    #[arg(long)]
    pub metric: Option<String>,
    /// Metric intensity parameter alpha.
    #[arg(long)]
    pub alpha: Option<f64>,
    /// Metric smoothing cycles.
    #[arg(long)]
    pub smooth: Option<usize>,
    /// Eigenvalue ceiling applied to the metric.
    #[arg(long)]
    pub ceiling: Option<f64>,
    /// Mesh-equation integrator: stiff or explicit.
    #[arg(long)]
    pub mmpde_integrator: Option<String>,
    #[arg(long)]
    pub mmpde_dt0: Option<f64>,
    #[arg(long)]
    pub mmpde_abstol: Option<f64>,
    /// Relative tolerance of the physical time integration.
    #[arg(long)]
    pub rel_tol: Option<f64>,
    #[arg(long)]
    pub abs_tol: Option<f64>,
    /// Use a fixed physical time step.
    #[arg(long)]
    pub fixed_step: bool,
    /// Use BiCGSTAB + ILU(0) instead of the direct sparse solver.
    #[arg(long)]
    pub iterative_ls: bool,
    /// Output directory.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Write VTK output every k-th accepted step.
    #[arg(long)]
    pub output_every: Option<usize>,
    /// Initial-mesh adaptation rounds before time stepping.
    #[arg(long)]
    pub init_adapt: Option<usize>,
}

struct Resolved {
    n: usize,
    tend: f64,
    tau: f64,
    dt0: f64,
    fixed_mesh: bool,
    metric_kind: String,
    alpha: f64,
    smooth: usize,
    ceiling: f64,
    mmpde_integrator: MeshIntegrator,
    mmpde_dt0: Option<f64>,
    mmpde_abstol: Option<f64>,
    rel_tol: f64,
    abs_tol: f64,
    fixed_step: bool,
    direct_ls: bool,
    out: PathBuf,
    output_every: usize,
    init_adapt: usize,
}

fn resolve(args: &RunArgs, problem: &BenchmarkProblem) -> Result<Resolved> {
    let cfg = match &args.config {
        Some(p) => ConfigFile::load(p)?,
        None => ConfigFile::default(),
    };
    let default_n = match problem.name {
        "burgers1d" => 61,
        "heat2d" => 20,
        "combustion2d" => 1,
        _ => 8,
    };
    let tend = args.tend.or(cfg.get("tend")?).unwrap_or(problem.t_end);
    let metric_kind = args
        .metric
        .clone()
        .or(cfg.get("metric.kind")?)
        .unwrap_or_else(|| "h1".to_string());
    let integ = args
        .mmpde_integrator
        .clone()
        .or(cfg.get("mmpde.integrator")?)
        .unwrap_or_else(|| "stiff".to_string());
    let mmpde_integrator = match integ.as_str() {
        "stiff" => MeshIntegrator::Stiff,
        "explicit" => MeshIntegrator::Explicit,
        other => bail!("unknown mesh integrator `{other}`"),
    };
    Ok(Resolved {
        n: args.n.or(cfg.get("n")?).unwrap_or(default_n),
        tend,
        tau: args.tau.or(cfg.get("mmpde.tau")?).unwrap_or(1e-2),
        dt0: args.dt.or(cfg.get("dt")?).unwrap_or(tend / 100.0),
        fixed_mesh: args.fixed_mesh || cfg.get_bool("fixed_mesh")?.unwrap_or(false),
        metric_kind,
        alpha: args.alpha.or(cfg.get("metric.alpha")?).unwrap_or(1.0),
        smooth: args.smooth.or(cfg.get("metric.smooth")?).unwrap_or(2),
        ceiling: args.ceiling.or(cfg.get("metric.ceiling")?).unwrap_or(1e4),
        mmpde_integrator,
        mmpde_dt0: args.mmpde_dt0.or(cfg.get("mmpde.dt0")?),
        mmpde_abstol: args.mmpde_abstol.or(cfg.get("mmpde.abstol")?),
        rel_tol: args.rel_tol.or(cfg.get("fem.rel_tol")?).unwrap_or(1e-4),
        abs_tol: args.abs_tol.or(cfg.get("fem.abs_tol")?).unwrap_or(1e-6),
        fixed_step: args.fixed_step || cfg.get_bool("fem.fixed_step")?.unwrap_or(false),
        direct_ls: !(args.iterative_ls || cfg.get_bool("fem.iterative_ls")?.unwrap_or(false)),
        out: args
            .out
            .clone()
            .or(cfg.get("out")?)
            .unwrap_or_else(|| PathBuf::from(format!("out-{}", problem.name))),
        output_every: args.output_every.or(cfg.get("output_every")?).unwrap_or(10),
        init_adapt: args.init_adapt.or(cfg.get("init_adapt")?).unwrap_or(5),
    })
}

pub fn run(args: RunArgs) -> Result<()> {
    let problem =
        by_name(&args.problem).ok_or_else(|| anyhow!("unknown problem `{}`", args.problem))?;
    let cfg = resolve(&args, &problem)?;
    std::fs::create_dir_all(&cfg.out)
        .with_context(|| format!("creating output directory {}", cfg.out.display()))?;
    if problem.steady {
        run_bvp(&problem, &cfg)
    } else {
        run_ibvp(&problem, &cfg)
    }
}

/// Builds the adaptation metric from the current solution: metric kind,
/// then smoothing, then the eigenvalue ceiling.
fn build_metric(
    cfg: &Resolved,
    mesh: &Mesh,
    u: &[f64],
    npde: usize,
) -> Result<MetricField> {
    let nv = mesh.n_vertices();
    let kind = cfg.metric_kind.as_str();
    let field = if kind == "arclength" {
        metric::metric_arclength(u, npde, mesh)?
    } else {
        let norm = match kind {
            "l2" | "iso-l2" => ErrorNorm::L2,
            "h1" | "iso-h1" => ErrorNorm::H1,
            other => bail!("unknown metric kind `{other}`"),
        };
        let iso = kind.starts_with("iso-");
        let mut combined: Option<MetricField> = None;
        let mut col = vec![0.0; nv];
        for k in 0..npde {
            for v in 0..nv {
                col[v] = u[v * npde + k];
            }
            let mk = if iso {
                metric::metric_iso(&col, mesh, cfg.alpha, norm)?
            } else {
                metric::metric(&col, mesh, cfg.alpha, norm)?
            };
            combined = Some(match combined {
                None => mk,
                Some(acc) => metric::metric_intersection(&acc, &mk)?,
            });
        }
        combined.expect("npde >= 1")
    };
    let smoothed = metric::metric_smoothing(&field, cfg.smooth, mesh)?;
    let capped = eig_ceiling(smoothed.values(), cfg.ceiling)?;
    Ok(MetricField::new(capped)?)
}

fn mmpde_params(cfg: &Resolved) -> MmpdeParams {
    let mut p = MmpdeParams::new(cfg.tau);
    p.integrator = cfg.mmpde_integrator;
    p.dt0 = cfg.mmpde_dt0;
    p.abstol = cfg.mmpde_abstol;
    p
}

fn kmin_of(mesh: &Mesh) -> f64 {
    (0..mesh.n_elements()).map(|e| mesh.volume(e)).fold(f64::INFINITY, f64::min)
}

fn write_solution_vtk(
    dir: &PathBuf,
    tag: &str,
    mesh: &Mesh,
    u: &[f64],
    npde: usize,
) -> Result<PathBuf> {
    let path = dir.join(format!("{tag}.vtk"));
    let nv = mesh.n_vertices();
    let mut fields = Vec::new();
    let mut columns = Vec::new();
    if npde == 1 {
        columns.push(("u".to_string(), u.to_vec()));
    } else {
        for k in 0..npde {
            let col: Vec<f64> = (0..nv).map(|v| u[v * npde + k]).collect();
            columns.push((format!("u{k}"), col));
        }
    }
    for (name, col) in &columns {
        fields.push(VtkField { name, ncomp: 1, values: col });
    }
    write_vtk(&path, mesh, &fields)?;
    Ok(path)
}

fn run_bvp(problem: &BenchmarkProblem, cfg: &Resolved) -> Result<()> {
    let mesh = problem.make_mesh(cfg.n)?;
    let pdedef = problem.make_pdedef(&mesh);
    let u0 = problem.initial_solution(&mesh);
    let opts = BvpOptions { direct_ls: cfg.direct_ls, ..Default::default() };
    let u = movfem_bvp(&u0, &mesh, &pdedef, &opts)?;
    write_solution_vtk(&cfg.out, "solution", &mesh, &u, problem.npde)?;
    let mut errors = std::fs::File::create(cfg.out.join("errors.csv"))?;
    writeln!(errors, "t,l2,linf")?;
    if let Some(exact) = &problem.uexact {
        let l2 = error_p1_l2(&|t, x, out| exact(t, x, out), 0.0, &mesh, &u, problem.npde)?;
        let li = error_p1_linf(&|t, x, out| exact(t, x, out), 0.0, &mesh, &u, problem.npde)?;
        writeln!(errors, "{:.17e},{:.17e},{:.17e}", 0.0, l2, li)?;
        println!("{}: n = {}, L2 error = {l2:.6e}, Linf error = {li:.6e}", problem.name, cfg.n);
    }
    write_manifest(problem, cfg, &["solution.vtk", "errors.csv"])?;
    Ok(())
}

fn run_ibvp(problem: &BenchmarkProblem, cfg: &Resolved) -> Result<()> {
    let npde = problem.npde;
    let base = problem.make_mesh(cfg.n)?;
    let corners = problem.corner_nodes(&base);
    let xi_ref = base.clone();
    let mut mesh = base.clone();
    let mut u = problem.initial_solution(&mesh);
    let params = mmpde_params(cfg);

    // initial mesh adjustment: adapt to the initial data, re-sampling the
    // (analytic) initial condition on each new mesh
    if !cfg.fixed_mesh {
        for _ in 0..cfg.init_adapt {
            let metric = build_metric(cfg, &mesh, &u, npde)?;
            let span = 10.0 * cfg.tau;
            let res = move_xi([0.0, span], &xi_ref, &mesh, &metric, &params, &corners)
                .map_err(|e| anyhow!("initial mesh adaptation failed: {e}"))?;
            mesh = mesh.with_coords(res.xnew)?;
            u = problem.initial_solution(&mesh);
        }
    }

    let pdedef = problem.make_pdedef(&mesh);
    let fem_opts = MovFemOptions {
        fixed_step: cfg.fixed_step,
        rel_tol: cfg.rel_tol,
        abs_tol: cfg.abs_tol,
        direct_ls: cfg.direct_ls,
        control_weights: None,
    };
    let mut movfem = MovFem::new(&fem_opts);

    let mut errors = std::fs::File::create(cfg.out.join("errors.csv"))?;
    writeln!(errors, "t,l2,linf")?;
    let mut quality = std::fs::File::create(cfg.out.join("quality.csv"))?;
    writeln!(quality, "t,qeq,qali,kmin")?;
    let mut artifacts: Vec<String> = vec!["errors.csv".into(), "quality.csv".into()];

    let record = |t: f64, mesh: &Mesh, u: &[f64], metric: &MetricField,
                      errors: &mut std::fs::File, quality: &mut std::fs::File|
     -> Result<()> {
        if let Some(exact) = &problem.uexact {
            let l2 = error_p1_l2(&|tt, x, out| exact(tt, x, out), t, mesh, u, npde)?;
            let li = error_p1_linf(&|tt, x, out| exact(tt, x, out), t, mesh, u, npde)?;
            writeln!(errors, "{t:.17e},{l2:.17e},{li:.17e}")?;
        }
        let rep = quality_measures(mesh, metric, true, Some(&xi_ref))?;
        writeln!(quality, "{t:.17e},{:.17e},{:.17e},{:.17e}", rep.qeq, rep.qali, kmin_of(mesh))?;
        Ok(())
    };

    let metric0 = build_metric(cfg, &mesh, &u, npde)?;
    record(0.0, &mesh, &u, &metric0, &mut errors, &mut quality)?;
    let vtk = write_solution_vtk(&cfg.out, "step_000000", &mesh, &u, npde)?;
    artifacts.push(vtk.file_name().unwrap().to_string_lossy().into_owned());

    let mut t = 0.0;
    let mut dt = cfg.dt0.min(cfg.tend);
    let mut step_index = 0usize;
    while t < cfg.tend - 1e-12 * cfg.tend.max(1.0) {
        dt = dt.min(cfg.tend - t);
        let metric = build_metric(cfg, &mesh, &u, npde)?;
        let (xnew, dt_for_mesh) = if cfg.fixed_mesh {
            (mesh.coords().to_vec(), dt)
        } else {
            let res = move_xi([t, t + dt], &xi_ref, &mesh, &metric, &params, &corners)
                .map_err(|e| anyhow!("mesh movement failed at t = {t}: {e}"))?;
            (res.xnew, dt)
        };
        let xdot: Vec<f64> = mesh
            .coords()
            .iter()
            .zip(&xnew)
            .map(|(a, b)| (b - a) / dt_for_mesh)
            .collect();
        let step = movfem
            .step(t, dt, &u, &mesh, &xdot, &pdedef, &fem_opts)
            .map_err(|e| anyhow!("PDE step failed at t = {t}: {e}"))?;
        let coords: Vec<f64> = mesh
            .coords()
            .iter()
            .zip(&xdot)
            .map(|(x, v)| x + step.dt_used * v)
            .collect();
        mesh = mesh.with_coords(coords)?;
        u = step.unew;
        t += step.dt_used;
        dt = step.dt_next.min(1.5 * dt).max(1e-12);
        step_index += 1;
        record(t, &mesh, &u, &metric, &mut errors, &mut quality)?;
        if step_index % cfg.output_every == 0 || t >= cfg.tend - 1e-12 {
            let tag = format!("step_{step_index:06}");
            let vtk = write_solution_vtk(&cfg.out, &tag, &mesh, &u, npde)?;
            artifacts.push(vtk.file_name().unwrap().to_string_lossy().into_owned());
        }
    }
    if let Some(exact) = &problem.uexact {
        let l2 = error_p1_l2(&|tt, x, out| exact(tt, x, out), t, &mesh, &u, npde)?;
        let li = error_p1_linf(&|tt, x, out| exact(tt, x, out), t, &mesh, &u, npde)?;
        println!(
            "{}: t = {t:.4}, {} steps, L2 error = {l2:.6e}, Linf error = {li:.6e}",
            problem.name, step_index
        );
    } else {
        println!("{}: t = {t:.4}, {} steps", problem.name, step_index);
    }
    let refs: Vec<&str> = artifacts.iter().map(|s| s.as_str()).collect();
    write_manifest(problem, cfg, &refs)?;
    Ok(())
}

fn write_manifest(problem: &BenchmarkProblem, cfg: &Resolved, artifacts: &[&str]) -> Result<()> {
    let mut f = std::fs::File::create(cfg.out.join("manifest.txt"))?;
    writeln!(f, "problem = {}", problem.name)?;
    writeln!(f, "n = {}", cfg.n)?;
    writeln!(f, "tend = {:.17e}", cfg.tend)?;
    writeln!(f, "fixed_mesh = {}", cfg.fixed_mesh)?;
    writeln!(f, "[mmpde]")?;
    writeln!(f, "tau = {:.17e}", cfg.tau)?;
    writeln!(
        f,
        "integrator = {}",
        match cfg.mmpde_integrator {
            MeshIntegrator::Stiff => "stiff",
            MeshIntegrator::Explicit => "explicit",
        }
    )?;
    writeln!(f, "[metric]")?;
    writeln!(f, "kind = {}", cfg.metric_kind)?;
    writeln!(f, "alpha = {:.17e}", cfg.alpha)?;
    writeln!(f, "smooth = {}", cfg.smooth)?;
    writeln!(f, "ceiling = {:.17e}", cfg.ceiling)?;
    writeln!(f, "[fem]")?;
    writeln!(f, "rel_tol = {:.17e}", cfg.rel_tol)?;
    writeln!(f, "abs_tol = {:.17e}", cfg.abs_tol)?;
    writeln!(f, "fixed_step = {}", cfg.fixed_step)?;
    writeln!(f, "direct_ls = {}", cfg.direct_ls)?;
    writeln!(f, "[artifacts]")?;
    for a in artifacts {
        writeln!(f, "file = {a}")?;
    }
    Ok(())
}
