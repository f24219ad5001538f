//! Command-line front end: solves, verification suites, convergence
//! studies, kernel tables and mesh export.

pub mod commands;
pub mod config;
pub mod error;
pub mod io;

use std::path::PathBuf;

use clap::{Parser, Subcommand, ValueEnum};

use stokes_bdie::bdie::{ConstraintMode, SystemKind};

use crate::commands::Overrides;
use crate::config::SystemChoice;
pub use crate::error::{CliError, Result};

#[derive(Debug, Parser)]
#[command(name = "stokes-bdie", version, about = "Boundary-domain integral solver for compressible Stokes with variable viscosity")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
pub enum ConstraintArg {
    Lagrange,
    None,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
pub enum KindArg {
    D1,
    D2,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Solve the problem described by a JSON config.
    Solve {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        output: Option<PathBuf>,
        #[arg(long, value_enum)]
        system: Option<SystemChoice>,
        #[arg(long, value_enum)]
        constraint: Option<ConstraintArg>,
        #[arg(long)]
        subdiv: Option<u32>,
        #[arg(long)]
        layers: Option<u32>,
    },
    /// Run a verification suite; exits 0 iff every row passes.
    Verify {
        #[arg(long)]
        suite: String,
        #[arg(long)]
        subdiv: Option<u32>,
        /// Also write the table as CSV.
        #[arg(long)]
        csv: Option<PathBuf>,
    },
    /// Errors of a manufactured case over the refinement ladder.
    Convergence {
        #[arg(long, default_value = "poly1")]
        case: String,
        #[arg(long, default_value_t = 3)]
        levels: usize,
        #[arg(long, value_enum, default_value = "d1")]
        system: KindArg,
        #[arg(long, default_value = ".")]
        output: PathBuf,
    },
    /// Print every kernel tensor at a point pair.
    Kernel {
        #[arg(long, num_args = 3, allow_negative_numbers = true, required = true)]
        x: Vec<f64>,
        #[arg(long, num_args = 3, allow_negative_numbers = true, required = true)]
        y: Vec<f64>,
        /// Normal at x for the traction kernel.
        #[arg(long, num_args = 3, allow_negative_numbers = true)]
        n: Option<Vec<f64>>,
        /// Viscosity expression for the parametrix and remainder.
        #[arg(long)]
        mu: Option<String>,
    },
    /// Write a ball mesh as ASCII or, with a `.vtk` extension, as VTK.
    MeshExport {
        #[arg(long)]
        subdiv: u32,
        #[arg(long)]
        layers: u32,
        #[arg(long, default_value_t = 1.0)]
        radius: f64,
        #[arg(long)]
        output: PathBuf,
    },
}

fn triple(v: &[f64]) -> [f64; 3] {
    [v[0], v[1], v[2]]
}

pub fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Solve { config, output, system, constraint, subdiv, layers } => {
            let constraint = constraint.map(|c| match c {
                ConstraintArg::Lagrange => ConstraintMode::Lagrange,
                ConstraintArg::None => ConstraintMode::None,
            });
            commands::solve(&config, &Overrides { output, system, constraint, subdiv, layers }).map(|_| ())
        }
        Command::Verify { suite, subdiv, csv } => commands::verify(&suite, subdiv, csv.as_deref()),
        Command::Convergence { case, levels, system, output } => {
            let kind = match system {
                KindArg::D1 => SystemKind::D1,
                KindArg::D2 => SystemKind::D2,
            };
            commands::convergence(&case, levels, kind, &output).map(|_| ())
        }
        Command::Kernel { x, y, n, mu } => {
            let text = commands::kernel(triple(&x), triple(&y), n.as_deref().map(triple), mu.as_deref())?;
            print!("{text}");
            Ok(())
        }
        Command::MeshExport { subdiv, layers, radius, output } => commands::mesh_export(subdiv, layers, radius, &output),
    }
}
