//! Command-line driver: moving-mesh solution of the benchmark problems,
//! standalone mesh adaptation demos and mesh file utilities.

mod config;
mod movedemo;
mod run;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use std::path::PathBuf;

#[derive(Parser)]
#[command(name = "mmpde", version, about = "Adaptive moving-mesh PDE solver")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Solve a benchmark problem with the MP (mesh PDE / physical PDE) loop.
    Run(run::RunArgs),
    /// Pure mesh-adaptation demo: move a mesh under an analytic metric.
    Movemesh(movedemo::MoveArgs),
    /// Mesh file utilities.
    Mesh(MeshCmd),
}

#[derive(Args)]
struct MeshCmd {
    #[command(subcommand)]
    action: MeshAction,
}

#[derive(Subcommand)]
enum MeshAction {
    /// Generate a mesh for a simple domain.
    Gen {
        /// Domain kind: interval, rect, cube or disk.
        #[arg(long)]
        kind: String,
        /// Cells per side (rings for the disk).
        #[arg(long, default_value_t = 4)]
        res: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Uniformly refine a mesh file.
    Refine {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long, default_value_t = 1)]
        levels: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Merge two mesh files (coincident vertices are unified).
    Merge {
        #[arg(long)]
        a: PathBuf,
        #[arg(long)]
        b: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Print mesh statistics.
    Info {
        #[arg(long = "in")]
        input: PathBuf,
    },
}

/// Environment controls: MMPDE_THREADS requests a worker count (this build
/// executes sequentially and warns when more than one is requested);
/// MMPDE_DETERMINISTIC=0 would relax reproducibility, but runs are always
/// bitwise deterministic here.
fn read_env_controls() -> Result<()> {
    if let Ok(v) = std::env::var("MMPDE_THREADS") {
        let n: usize = v.parse().context("MMPDE_THREADS must be a positive integer")?;
        if n == 0 {
            bail!("MMPDE_THREADS must be at least 1");
        }
        if n > 1 {
            eprintln!("note: MMPDE_THREADS={n} requested; this build runs sequentially");
        }
    }
    if let Ok(v) = std::env::var("MMPDE_DETERMINISTIC") {
        if v != "0" && v != "1" {
            bail!("MMPDE_DETERMINISTIC must be 0 or 1");
        }
    }
    Ok(())
}

fn main() {
    let cli = Cli::parse();
    let result = read_env_controls().and_then(|_| match cli.command {
        Command::Run(args) => run::run(args),
        Command::Movemesh(args) => movedemo::run(args),
        Command::Mesh(cmd) => mesh_util(cmd),
    });
    if let Err(e) = result {
        eprintln!("error: {e:#}");
        std::process::exit(1);
    }
}

fn mesh_util(cmd: MeshCmd) -> Result<()> {
    use mmpde::mesh;
    match cmd.action {
        MeshAction::Gen { kind, res, out } => {
            let m = generate_mesh(&kind, res)?;
            mesh::write_mesh_text(&out, &m)?;
            println!(
                "wrote {} ({}D, {} vertices, {} elements, {} boundary facets)",
                out.display(),
                m.dim(),
                m.n_vertices(),
                m.n_elements(),
                m.n_boundary_facets()
            );
            Ok(())
        }
        MeshAction::Refine { input, levels, out } => {
            let m = mesh::read_mesh_text(&input)?;
            let (fine, _) = m.uniform_refine(levels);
            mesh::write_mesh_text(&out, &fine)?;
            println!("refined {} -> {} elements", m.n_elements(), fine.n_elements());
            Ok(())
        }
        MeshAction::Merge { a, b, out } => {
            let ma = mesh::read_mesh_text(&a)?;
            let mb = mesh::read_mesh_text(&b)?;
            let merged = ma.merge(&mb)?;
            mesh::write_mesh_text(&out, &merged)?;
            println!(
                "merged: {} vertices, {} elements",
                merged.n_vertices(),
                merged.n_elements()
            );
            Ok(())
        }
        MeshAction::Info { input } => {
            let m = mesh::read_mesh_text(&input)?;
            let metric = mmpde::metric::MetricField::identity(m.dim(), m.n_vertices());
            let rep = mesh::quality_measures(&m, &metric, true, None)?;
            println!("dimension:        {}", m.dim());
            println!("vertices:         {}", m.n_vertices());
            println!("elements:         {}", m.n_elements());
            println!("boundary facets:  {}", m.n_boundary_facets());
            println!("total volume:     {:.12e}", m.total_volume());
            let kmin = (0..m.n_elements()).map(|e| m.volume(e)).fold(f64::INFINITY, f64::min);
            println!("min element vol:  {kmin:.12e}");
            println!("Qgeo (max norm):  {:.6}", rep.qgeo);
            Ok(())
        }
    }
}

fn generate_mesh(kind: &str, res: usize) -> Result<mmpde::mesh::Mesh> {
    use mmpde::mesh::{circle2tri, cube2tet, interval_mesh, rect2tri};
    let grid: Vec<f64> = (0..=res.max(1)).map(|i| i as f64 / res.max(1) as f64).collect();
    let m = match kind {
        "interval" => interval_mesh(&grid)?,
        "rect" => rect2tri(&grid, &grid, 2)?,
        "cube" => cube2tet(&grid, &grid, &grid)?,
        "disk" => circle2tri(res.max(1))?,
        other => bail!("unknown mesh kind `{other}` (expected interval, rect, cube or disk)"),
    };
    Ok(m)
}
