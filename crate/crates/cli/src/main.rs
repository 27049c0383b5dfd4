//! `virlab`: scenario runner and report emitter for the fixed-energy N-body laboratory.

mod commands;
mod error;
mod output;
mod scenario;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use virlab_core::families::EnergyNormalization;
use virlab_core::Execution;

use commands::Ctx;
use error::CliError;
use output::Bundle;
use scenario::{CcName, FamilyName};

#[derive(Parser, Debug)]
#[command(name = "virlab", version, about = "Fixed-energy N-body laboratory", propagate_version = true)]
struct Cli {
    /// Seed for samplers and randomized searches.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Integrator tolerance.
    #[arg(long, global = true)]
    tol: Option<f64>,
    /// Output directory.
    #[arg(long, global = true, env = "VIRLAB_OUT")]
    out: Option<PathBuf>,
    /// Worker threads; 1 runs sequentially, 0 uses every core.
    #[arg(long, global = true, default_value_t = 0)]
    jobs: usize,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Integrate a scenario and run its analyses.
    Run { scenario: PathBuf },
    /// Integrate a scenario and write the trajectory only.
    Simulate { scenario: PathBuf },
    /// Search for a periodic brake orbit near a seed configuration.
    BrakeSearch(BrakeSearch),
    /// Virial averages, crossings and thickness of a stored trajectory.
    VirialReport(VirialReport),
    /// Jacobi-Maupertuis geodesic from a point to the Hill boundary.
    JmMinimize(JmMinimize),
    /// Integrate one member of an exact family.
    Family(Family),
    /// Turn-around ensemble for the escape implication, with optional escape runs.
    EscapeScan(EscapeScan),
    /// Hill boundary and virial surface meshes in shape space.
    ShapeExport(ShapeExport),
    /// Exit times from the Hill collar over several widths.
    CollarTest(CollarTest),
}

#[derive(Args, Debug)]
struct BrakeSearch {
    #[arg(long, value_delimiter = ',', default_value = "1,1,1")]
    masses: Vec<f64>,
    #[arg(long, default_value_t = 2)]
    dim: usize,
    /// Seed configuration, rescaled onto the Hill boundary.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    q: Vec<f64>,
    #[arg(long, default_value_t = 1.0)]
    h: f64,
    #[arg(long, default_value_t = 15.0)]
    t_max: f64,
    #[arg(long, default_value_t = 400)]
    max_evals: usize,
    #[arg(long, default_value_t = 1e-9)]
    residual_tol: f64,
}

#[derive(Args, Debug)]
struct VirialReport {
    /// Trajectory CSV written by `run`, `simulate` or `family`.
    #[arg(long)]
    traj: PathBuf,
    /// `full` or `lo:hi`.
    #[arg(long, default_value = "full")]
    window: String,
    /// Energy level; read from the trajectory when absent.
    #[arg(long)]
    h: Option<f64>,
}

#[derive(Args, Debug)]
struct JmMinimize {
    /// JSON file with `system`, `h` and `q`.
    #[arg(long)]
    point: PathBuf,
    #[arg(long, default_value_t = 24)]
    segments: usize,
    #[arg(long, default_value_t = 2)]
    restarts: usize,
    /// Skip the brake-point polish.
    #[arg(long)]
    no_polish: bool,
}

#[derive(Args, Debug)]
struct Family {
    #[arg(value_enum)]
    family: FamilyName,
    #[arg(long, value_delimiter = ',')]
    masses: Option<Vec<f64>>,
    #[arg(long, default_value_t = 2)]
    dim: usize,
    #[arg(long, default_value_t = 1.0)]
    h: f64,
    /// Body order along the line (Euler).
    #[arg(long, value_delimiter = ',', num_args = 3)]
    order: Option<Vec<usize>>,
    /// Central configuration of a homographic family.
    #[arg(long, value_enum)]
    cc: Option<CcName>,
    /// Angular momentum as a fraction of the family maximum.
    #[arg(long)]
    j_fraction: Option<f64>,
    /// Kepler eccentricity.
    #[arg(long)]
    e: Option<f64>,
    #[arg(long, default_value_t = 400)]
    samples: usize,
}

#[derive(ValueEnum, Clone, Copy, Debug)]
enum Normalization {
    /// E = -2h.
    Moeckel,
    /// E = -h.
    Standard,
}

#[derive(Args, Debug)]
struct EscapeScan {
    #[arg(long, value_delimiter = ',', default_value = "1,2,3")]
    masses: Vec<f64>,
    #[arg(long, default_value_t = 2)]
    dim: usize,
    #[arg(long, value_enum, default_value = "moeckel")]
    normalization: Normalization,
    /// Passing states to collect.
    #[arg(long, default_value_t = 1000)]
    n: usize,
    #[arg(long, default_value_t = 200_000)]
    max_draws: usize,
    /// Passing states to integrate in both directions.
    #[arg(long, default_value_t = 0)]
    scan: usize,
    #[arg(long, default_value_t = 200.0)]
    horizon: f64,
}

#[derive(Args, Debug)]
struct ShapeExport {
    #[arg(long, value_delimiter = ',', default_value = "1,1,1")]
    masses: Vec<f64>,
    #[arg(long, default_value_t = 1.0)]
    h: f64,
    #[arg(long, default_value_t = 48)]
    resolution: usize,
    /// Box half-width in natural lengths of each level.
    #[arg(long, default_value_t = 1.5)]
    extent: f64,
    /// Trajectory CSV for the shape curve and syzygy word.
    #[arg(long)]
    traj: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct CollarTest {
    /// Collar width; repeat for a scan.
    #[arg(long, required = true)]
    eps: Vec<f64>,
    #[arg(long, default_value_t = 64)]
    ensemble: usize,
    #[arg(long, value_delimiter = ',', default_value = "1,1,1")]
    masses: Vec<f64>,
    #[arg(long, default_value_t = 1.0)]
    h: f64,
    #[arg(long, default_value_t = 2.0)]
    multiplier: f64,
    #[arg(long, default_value_t = 50.0)]
    max_time: f64,
}

fn report(bundle: &Bundle) {
    for p in &bundle.written {
        println!("wrote {}", p.display());
    }
}

fn execute(cli: Cli) -> Result<(), CliError> {
    let exec = if cli.jobs == 1 {
        Execution::Sequential
    } else {
        if cli.jobs > 1 {
            rayon::ThreadPoolBuilder::new()
                .num_threads(cli.jobs)
                .build_global()
                .map_err(|e| CliError::Validation(format!("--jobs: {e}")))?;
        }
        Execution::Parallel
    };
    let out_given = cli.out.is_some();
    let ctx = Ctx {
        seed: cli.seed,
        tol: cli.tol,
        out: cli.out.unwrap_or_else(|| PathBuf::from("virlab-out")),
        exec,
    };
    match cli.command {
        Command::Run { scenario } => report(&commands::run_scenario(&ctx, &scenario, true, out_given)?),
        Command::Simulate { scenario } => report(&commands::run_scenario(&ctx, &scenario, false, out_given)?),
        Command::BrakeSearch(a) => report(&commands::brake_search(
            &ctx,
            &commands::BrakeSearchArgs {
                masses: a.masses,
                dim: a.dim,
                q: a.q,
                h: a.h,
                t_max: a.t_max,
                max_evals: a.max_evals,
                residual_tol: a.residual_tol,
            },
        )?),
        Command::VirialReport(a) => {
            let (bundle, text) = commands::virial_report_cmd(
                &ctx,
                &commands::VirialArgs {
                    traj: a.traj,
                    window: a.window,
                    h: a.h,
                },
            )?;
            print!("{text}");
            report(&bundle);
        }
        Command::JmMinimize(a) => {
            let (bundle, summary) = commands::jm_minimize(
                &ctx,
                &commands::JmArgs {
                    point: a.point,
                    segments: a.segments,
                    restarts: a.restarts,
                    polish: !a.no_polish,
                },
            )?;
            println!("{}", serde_json::to_string_pretty(&summary).unwrap_or_default());
            report(&bundle);
        }
        Command::Family(a) => {
            let order = match a.order {
                Some(o) => Some(<[usize; 3]>::try_from(o).map_err(|_| CliError::Validation("--order: need three indices".into()))?),
                None => None,
            };
            let (bundle, _) = commands::family(
                &ctx,
                &commands::FamilyArgs {
                    family: a.family,
                    masses: a.masses,
                    dim: a.dim,
                    h: a.h,
                    order,
                    cc: a.cc,
                    j_fraction: a.j_fraction,
                    e: a.e,
                    samples: a.samples,
                },
            )?;
            report(&bundle);
        }
        Command::EscapeScan(a) => {
            let (bundle, line) = commands::escape_scan_cmd(
                &ctx,
                &commands::EscapeArgs {
                    masses: a.masses,
                    dim: a.dim,
                    normalization: match a.normalization {
                        Normalization::Moeckel => EnergyNormalization::Moeckel,
                        Normalization::Standard => EnergyNormalization::Standard,
                    },
                    n: a.n,
                    max_draws: a.max_draws,
                    scan: a.scan,
                    horizon: a.horizon,
                },
            )?;
            println!("{line}");
            report(&bundle);
        }
        Command::ShapeExport(a) => report(&commands::shape_export(
            &ctx,
            &commands::ShapeArgs {
                masses: a.masses,
                h: a.h,
                resolution: a.resolution,
                extent: a.extent,
                traj: a.traj,
            },
        )?),
        Command::CollarTest(a) => {
            let (bundle, text) = commands::collar_test(
                &ctx,
                &commands::CollarArgs {
                    eps: a.eps,
                    ensemble: a.ensemble,
                    masses: a.masses,
                    h: a.h,
                    multiplier: a.multiplier,
                    max_time: a.max_time,
                },
            )?;
            print!("{text}");
            report(&bundle);
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::init();
    let cli = Cli::parse();
    match execute(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("virlab: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
