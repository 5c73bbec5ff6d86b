use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use fom::problems::PerturbationBudget;
use fom_cli::commands::{self, GridSpec, HeatmapArgs, SolveOverrides, WarmstartArgs};
use fom_cli::config::RunConfig;
use fom_cli::{CliError, Result};

#[derive(Parser)]
#[command(name = "fom", version, about = "Certified lower bounds and duality gaps for finite-horizon optimal control")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Alternate pruned policy search and certificate updates.
    Solve {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        /// Pruning tolerance; `inf` disables pruning.
        #[arg(long)]
        tau: Option<f64>,
        #[arg(long)]
        lambda: Option<f64>,
    },
    /// Validate a certificate and print its lower bound.
    Certify {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        certificate: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Shift and degrade a certificate for the configured problem, moved by
    /// `--shift` in time, and compare warm against cold dual updates.
    Warmstart {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        certificate: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 0.0)]
        shift: f64,
        #[arg(long = "budget-f", default_value_t = 0.0)]
        budget_f: f64,
        #[arg(long = "budget-l", default_value_t = 0.0)]
        budget_l: f64,
        #[arg(long = "budget-g", default_value_t = 0.0)]
        budget_g: f64,
    },
    /// Write certificate values on a planar grid as CSV.
    ExportHeatmap {
        #[arg(long)]
        certificate: PathBuf,
        /// `lo:hi:n,lo:hi:n` along the two axes.
        #[arg(long, allow_hyphen_values = true)]
        grid: GridSpec,
        #[arg(long)]
        out: PathBuf,
        /// Two state coordinates spanned by the grid.
        #[arg(long, value_delimiter = ',', default_values_t = [0, 1])]
        axes: Vec<usize>,
        #[arg(long, default_value_t = 0.0)]
        time: f64,
        /// Full state supplying the fixed coordinates (default zeros).
        #[arg(long, value_delimiter = ',', allow_negative_numbers = true)]
        base: Option<Vec<f64>>,
        /// Block index, or `full`.
        #[arg(long, default_value = "full")]
        block: String,
    },
    /// Rank solve directories of one problem by their certified bounds.
    Compare {
        #[arg(required = true)]
        dirs: Vec<PathBuf>,
    },
}

fn run(cli: Cli) -> Result<()> {
    let mut stdout = std::io::stdout();
    match cli.command {
        Command::Solve {
            config,
            out,
            seed,
            tau,
            lambda,
        } => {
            let cfg = RunConfig::load(&config)?;
            commands::solve(&cfg, &SolveOverrides { seed, tau, lambda }, &out, &mut stdout)?;
        }
        Command::Certify { config, certificate, out } => {
            let cfg = RunConfig::load(&config)?;
            commands::certify(&cfg, &certificate, out.as_deref(), &mut stdout)?;
        }
        Command::Warmstart {
            config,
            certificate,
            out,
            shift,
            budget_f,
            budget_l,
            budget_g,
        } => {
            let cfg = RunConfig::load(&config)?;
            let args = WarmstartArgs {
                certificate: &certificate,
                shift,
                budget: PerturbationBudget::new(budget_f, budget_l, budget_g)?,
            };
            commands::warmstart(&cfg, &args, &out, &mut stdout)?;
        }
        Command::ExportHeatmap {
            certificate,
            grid,
            out,
            axes,
            time,
            base,
            block,
        } => {
            let [a0, a1] = axes[..] else {
                return Err(CliError::Argument(format!("--axes needs two coordinates, got {}", axes.len())));
            };
            let block = match block.as_str() {
                "full" => None,
                b => Some(
                    b.parse::<usize>()
                        .map_err(|_| CliError::Argument(format!("block `{b}` is neither an index nor `full`")))?,
                ),
            };
            let args = HeatmapArgs {
                certificate: &certificate,
                grid,
                axes: [a0, a1],
                time,
                base,
                block,
            };
            let n = commands::export_heatmap(&args, &out)?;
            println!("wrote {n} cells to {}", out.display());
        }
        Command::Compare { dirs } => {
            commands::compare_runs(&dirs, &mut stdout)?;
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e @ CliError::Validation(_)) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
