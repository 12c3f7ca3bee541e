//! `iic-lab`: run IIC random-walk experiments from a config file or flags.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::json;

use iic_core::env::{backbone_label, volume_profile, Environment, VertexLabel};
use iic_core::harness::{run_experiment, ExperimentConfig, ExperimentKind, Geometric, Grid, OutputFormat};
use iic_core::stream::env_seed;
use iic_core::Error;

const EXIT_CONFIG: u8 = 2;
const EXIT_RUNTIME: u8 = 3;
const EXIT_ACCEPTANCE: u8 = 4;

#[derive(Parser, Debug)]
#[command(name = "iic-lab", version, about = "Random walk on the incipient infinite cluster of a critical tree")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Print a summary of one sampled environment.
    GenEnv(GenEnv),
    /// Volumes, cut counts and goodness of balls around the root.
    BallStats(RunArgs),
    /// Annealed on-diagonal heat kernel and spectral dimension.
    HeatKernel(RunArgs),
    /// Displacement and volume growth exponents.
    Exponents(RunArgs),
    /// Off-diagonal heat kernel profile at a fixed distance.
    OffDiagonal(RunArgs),
    /// Finite-tree and finite-ball bound checks (exit code 4 on failure).
    VerifyBounds(RunArgs),
    /// Exact generation-size and progeny laws of the critical tree.
    GwExact(RunArgs),
    /// Quenched oscillation of volume and scaled heat kernel.
    Oscillations(RunArgs),
}

#[derive(Args, Debug)]
struct GenEnv {
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Environment index under the master seed.
    #[arg(long, default_value_t = 0)]
    index: u64,
    #[arg(long, default_value_t = 2)]
    n0: u32,
    /// Largest radius reported in the volume profile.
    #[arg(long, default_value_t = 64)]
    radius: u32,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum Format {
    Csv,
    JsonLines,
}

#[derive(Args, Debug)]
struct RunArgs {
    /// TOML experiment config; flags override its values.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    n0: Option<u32>,
    #[arg(long)]
    envs: Option<usize>,
    #[arg(long)]
    replicas: Option<usize>,
    /// Comma-separated values or `geom:LO:HI:POINTS`.
    #[arg(long, value_parser = parse_grid)]
    t_grid: Option<Grid>,
    #[arg(long, value_parser = parse_grid)]
    r_grid: Option<Grid>,
    #[arg(long, value_parser = parse_grid)]
    n_grid: Option<Grid>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    workers: Option<usize>,
    #[arg(long, value_enum)]
    format: Option<Format>,
}

fn parse_grid(s: &str) -> Result<Grid, String> {
    if let Some(rest) = s.strip_prefix("geom:") {
        let parts: Vec<&str> = rest.split(':').collect();
        if parts.len() != 3 {
            return Err("expected geom:LO:HI:POINTS".into());
        }
        let num = |p: &str| p.trim().parse::<f64>().map_err(|e| format!("{p:?}: {e}"));
        let points = parts[2].trim().parse::<usize>().map_err(|e| format!("{:?}: {e}", parts[2]))?;
        return Ok(Grid::Geometric {
            geometric: Geometric {
                lo: num(parts[0])?,
                hi: num(parts[1])?,
                points,
            },
        });
    }
    s.split(',')
        .map(|p| p.trim().parse::<f64>().map_err(|e| format!("{p:?}: {e}")))
        .collect::<Result<Vec<_>, _>>()
        .map(Grid::Values)
}

fn build_config(kind: ExperimentKind, a: RunArgs) -> iic_core::Result<ExperimentConfig> {
    let mut c = match &a.config {
        Some(path) => {
            let c = ExperimentConfig::load(path)?;
            if c.kind != kind {
                return Err(Error::config(
                    "kind",
                    format!("config is for {} but the subcommand runs {}", c.kind.name(), kind.name()),
                ));
            }
            c
        }
        None => ExperimentConfig::new(kind),
    };
    if let Some(v) = a.seed {
        c.master_seed = v;
    }
    if let Some(v) = a.n0 {
        c.n0 = v;
    }
    if let Some(v) = a.envs {
        c.counts.environments = Some(v);
    }
    if let Some(v) = a.replicas {
        c.counts.replicas = Some(v);
    }
    if a.t_grid.is_some() {
        c.grids.t = a.t_grid;
    }
    if a.r_grid.is_some() {
        c.grids.r = a.r_grid;
    }
    if a.n_grid.is_some() {
        c.grids.n = a.n_grid;
    }
    if let Some(v) = a.out {
        c.output.dir = v;
    }
    if let Some(v) = a.workers {
        c.workers = Some(v);
    }
    if let Some(f) = a.format {
        c.output.format = match f {
            Format::Csv => OutputFormat::Csv,
            Format::JsonLines => OutputFormat::JsonLines,
        };
    }
    Ok(c)
}

fn gen_env(g: &GenEnv) -> iic_core::Result<()> {
    let seed = env_seed(g.seed, g.index);
    let env = Environment::new(g.n0, seed)?;
    let prof = volume_profile(&env, &VertexLabel::root(), g.radius)?;
    let radii: Vec<u32> = std::iter::successors(Some(1u32), |r| r.checked_mul(2))
        .take_while(|&r| r <= g.radius)
        .collect();
    let backbone = backbone_label(&env, 16.min(g.radius as usize));
    let out = json!({
        "descriptor": env.descriptor(),
        "master_seed": g.seed,
        "index": g.index,
        "backbone_prefix": backbone.path(),
        "volume": radii.iter().map(|&r| json!({
            "radius": r,
            "vertices": prof.size_within(r),
            "volume": prof.volume_within(r),
        })).collect::<Vec<_>>(),
    });
    println!("{}", serde_json::to_string_pretty(&out)?);
    Ok(())
}

fn code(e: &Error) -> u8 {
    match e {
        Error::ConfigInvalid { .. } => EXIT_CONFIG,
        _ => EXIT_RUNTIME,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (kind, args) = match cli.command {
        Command::GenEnv(g) => {
            return match gen_env(&g) {
                Ok(()) => ExitCode::SUCCESS,
                Err(e) => {
                    eprintln!("error: {e}");
                    ExitCode::from(code(&e))
                }
            }
        }
        Command::BallStats(a) => (ExperimentKind::BallStats, a),
        Command::HeatKernel(a) => (ExperimentKind::HeatKernel, a),
        Command::Exponents(a) => (ExperimentKind::Exponents, a),
        Command::OffDiagonal(a) => (ExperimentKind::OffDiagonal, a),
        Command::VerifyBounds(a) => (ExperimentKind::VerifyBounds, a),
        Command::GwExact(a) => (ExperimentKind::GwExact, a),
        Command::Oscillations(a) => (ExperimentKind::Oscillations, a),
    };
    let result = build_config(kind, args).and_then(|c| run_experiment(&c));
    match result {
        Ok(rep) => {
            println!("{}", rep.results.display());
            println!("{}", rep.summary.display());
            if rep.outcome.passed == Some(false) {
                eprintln!("acceptance check failed");
                return ExitCode::from(EXIT_ACCEPTANCE);
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(code(&e))
        }
    }
}
