mod commands;
mod config;
mod svg;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{ArgAction, Args, Parser, Subcommand, ValueEnum};

use commands::{Failure, MeshRequest};
use config::{MeshPath, MeshSpec, RunConfig};

/// Bifurcation diagrams, branch-point location and shape optimization for the
/// cubic-quintic Allen-Cahn equation.
#[derive(Parser)]
#[command(name = "branchctl", version)]
struct Cli {
    /// Raise log verbosity (repeatable).
    #[arg(short, long, action = ArgAction::Count, global = true)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a triangle mesh.
    Mesh(MeshArgs),
    /// Compute a bifurcation diagram.
    Diagram(RunArgs),
    /// Locate a branch point from the configured seed.
    Locate(RunArgs),
    /// Move the domain until the branch point sits at the target.
    Optimize(RunArgs),
    /// Render a diagram or history CSV to SVG.
    Plot(PlotArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum Shape {
    Disk,
    RoundedSquare,
}

#[derive(Args)]
struct MeshArgs {
    #[arg(long, value_enum)]
    shape: Shape,
    /// Target edge length.
    #[arg(long)]
    h: f64,
    /// Side length of the rounded square.
    #[arg(long, default_value_t = 2.0)]
    edge: f64,
    /// Corner radius of the rounded square.
    #[arg(long, default_value_t = 0.25)]
    radius: f64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct RunArgs {
    #[arg(long)]
    config: PathBuf,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Mesh file replacing the configured mesh.
    #[arg(long)]
    mesh: Option<PathBuf>,
    #[arg(long)]
    target: Option<f64>,
    #[arg(long)]
    eps: Option<f64>,
    #[arg(long)]
    seed_lambda: Option<f64>,
}

#[derive(Args)]
struct PlotArgs {
    #[arg(long)]
    input: PathBuf,
    #[arg(long)]
    out: PathBuf,
}

impl RunArgs {
    fn load(&self) -> Result<RunConfig, Failure> {
        let mut cfg = RunConfig::load(&self.config).map_err(Failure::Config)?;
        if let Some(o) = &self.out {
            cfg.output = o.clone();
        }
        if let Some(m) = &self.mesh {
            cfg.mesh = MeshSpec::File(MeshPath { path: m.clone() });
        }
        if let Some(t) = self.target {
            cfg.target = Some(t);
        }
        if let Some(e) = self.eps {
            cfg.eps = e;
        }
        if let Some(l) = self.seed_lambda {
            cfg.seed.lambda = l;
        }
        Ok(cfg)
    }
}

fn run(cli: Cli) -> Result<(), Failure> {
    match cli.command {
        Command::Mesh(a) => commands::mesh(&MeshRequest {
            disk: matches!(a.shape, Shape::Disk),
            h: a.h,
            edge: a.edge,
            radius: a.radius,
            out: a.out,
        }),
        Command::Diagram(a) => commands::diagram(a.load()?),
        Command::Locate(a) => commands::locate(a.load()?),
        Command::Optimize(a) => commands::optimize(a.load()?),
        Command::Plot(a) => commands::plot(&a.input, &a.out),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => log::LevelFilter::Warn,
        1 => log::LevelFilter::Info,
        2 => log::LevelFilter::Debug,
        _ => log::LevelFilter::Trace,
    };
    env_logger::Builder::new()
        .filter_level(level)
        .parse_default_env()
        .format_timestamp(None)
        .init();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message());
            ExitCode::from(f.exit_code() as u8)
        }
    }
}
