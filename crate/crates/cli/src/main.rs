use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use potlab::harness::{
    self, report::summary_table, CheckReport, ExperimentConfig, PotentialKind, PotentialSpec,
};

#[derive(Parser)]
#[command(
    name = "potlab",
    version,
    about = "Obstacle problems with measure data: solver, potentials and estimate checks"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Experiment config (TOML).
    #[arg(long)]
    config: PathBuf,
    /// Output directory; overrides `output` in the config.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Seed for sample points.
    #[arg(long, default_value_t = 42)]
    seed: u64,
    /// Worker threads (default: all cores).
    #[arg(long)]
    jobs: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Solve the base problem; writes the solution raster and diagnostics.
    Solve(Common),
    /// Evaluate a potential or maximal function on strided nodes.
    Potential {
        #[command(flatten)]
        common: Common,
        /// wolff, wolff-obstacle, frac-maximal, sharp-maximal or obstacle-maximal.
        #[arg(long, default_value = "wolff")]
        kind: PotentialKind,
        /// beta (alpha for sharp-maximal).
        #[arg(long, default_value_t = 1.0)]
        beta: f64,
        /// Wolff exponent; defaults to i_g + 1.
        #[arg(long)]
        p: Option<f64>,
        #[arg(long, default_value_t = 0.1)]
        radius: f64,
        #[arg(long, default_value_t = 4)]
        stride: usize,
    },
    /// Run the configured checks across the sweep.
    Verify(Common),
    /// Run the configured checks on each sweep cell separately.
    Sweep(Common),
}

fn setup(common: &Common) -> potlab::Result<ExperimentConfig> {
    if let Some(jobs) = common.jobs {
        // A second initialisation only fails if a pool already exists.
        let _ = rayon::ThreadPoolBuilder::new()
            .num_threads(jobs.max(1))
            .build_global();
    }
    ExperimentConfig::load(&common.config)
}

fn report_outcome(reports: &[CheckReport]) -> ExitCode {
    print!("{}", summary_table(reports));
    if reports.iter().all(CheckReport::passed) {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(1)
    }
}

fn run(cli: Cli) -> potlab::Result<ExitCode> {
    match cli.command {
        Command::Solve(common) => {
            let cfg = setup(&common)?;
            let sol = harness::solve(&cfg, common.out.as_deref())?;
            println!(
                "iterations {} residual {:e} complementarity {:e}",
                sol.iterations, sol.residual, sol.complementarity
            );
            Ok(ExitCode::SUCCESS)
        }
        Command::Potential {
            common,
            kind,
            beta,
            p,
            radius,
            stride,
        } => {
            let cfg = setup(&common)?;
            let spec = PotentialSpec {
                kind,
                beta,
                p,
                radius,
                stride,
            };
            let values = harness::potential(&cfg, &spec, common.out.as_deref())?;
            println!("{} points", values.len());
            Ok(ExitCode::SUCCESS)
        }
        Command::Verify(common) => {
            let cfg = setup(&common)?;
            let reports = harness::verify(&cfg, common.out.as_deref(), common.seed)?;
            Ok(report_outcome(&reports))
        }
        Command::Sweep(common) => {
            let cfg = setup(&common)?;
            let cells = harness::sweep(&cfg, common.out.as_deref(), common.seed)?;
            let mut code = ExitCode::SUCCESS;
            for (cell, reports) in &cells {
                println!("{}", cell.label());
                if report_outcome(reports) != ExitCode::SUCCESS {
                    code = ExitCode::from(1);
                }
            }
            Ok(code)
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}
