use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use dpmkit::{run_compare, run_convergence, run_plan, run_sample, RunConfig, ScheduleName};

#[derive(Debug, Clone, Copy, ValueEnum)]
enum ScheduleArg {
    Linear,
    Cosine,
}

impl From<ScheduleArg> for ScheduleName {
    fn from(s: ScheduleArg) -> Self {
        match s {
            ScheduleArg::Linear => ScheduleName::Linear,
            ScheduleArg::Cosine => ScheduleName::Cosine,
        }
    }
}

/// Solver experiment harness: convergence sweeps, method comparisons,
/// sampling runs and budget-plan inspection, driven by a JSON config.
#[derive(Parser)]
#[command(name = "dpmkit", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Sweep segment counts with one solver and fit its convergence order.
    Convergence {
        #[arg(long)]
        config: PathBuf,
    },
    /// Run the comparison table (RK and exponential-integrator methods plus
    /// DDIM) at a shared list of NFE budgets.
    Compare {
        #[arg(long)]
        config: PathBuf,
    },
    /// Draw seeded initial states and solve them with a fixed budget or the
    /// adaptive controller.
    Sample {
        #[arg(long)]
        config: PathBuf,
    },
    /// Print the order sequence and segment boundaries for an NFE budget.
    Plan {
        #[arg(long)]
        nfe: u64,
        #[arg(long, value_enum, default_value = "linear")]
        schedule: ScheduleArg,
        #[arg(long)]
        t_start: Option<f64>,
        #[arg(long)]
        eps: Option<f64>,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = match cli.command {
        Command::Convergence { config } => RunConfig::load(&config)
            .and_then(|cfg| run_convergence(&cfg))
            .map(|path| {
                println!("wrote {}", path.display());
            }),
        Command::Compare { config } => RunConfig::load(&config)
            .and_then(|cfg| run_compare(&cfg))
            .map(|path| {
                println!("wrote {}", path.display());
            }),
        Command::Sample { config } => RunConfig::load(&config)
            .and_then(|cfg| run_sample(&cfg))
            .map(|path| {
                println!("wrote {}", path.display());
            }),
        Command::Plan {
            nfe,
            schedule,
            t_start,
            eps,
        } => run_plan(nfe, schedule.into(), t_start, eps).map(|text| {
            print!("{text}");
        }),
    };
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("dpmkit: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
