use clap::{Args, Parser, Subcommand};
use std::path::PathBuf;
use std::process::ExitCode;
use ujoint::check::CheckTolerances;
use ujoint::cli::{self, Overrides, DEFAULT_SWEEP};

#[derive(Parser)]
#[command(
    name = "ujoint",
    version,
    about = "Universal joint with clearance: impact simulation"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one simulation and write trajectory.csv, events.csv, summary.json.
    Simulate {
        #[command(flatten)]
        common: Common,
        /// Radial clearance, m.
        #[arg(long)]
        clearance: Option<f64>,
    },
    /// Run one simulation per clearance and write regimes.csv.
    Sweep {
        #[command(flatten)]
        common: Common,
        /// Clearances to sweep, m. Repeat or separate with commas.
        #[arg(long, value_delimiter = ',')]
        clearance: Vec<f64>,
    },
    /// Run the built-in oracle checks.
    Check {
        /// Tolerance for the zero-clearance comparison, rad.
        #[arg(long)]
        zero_clearance_tol: Option<f64>,
    },
}

#[derive(Args)]
struct Common {
    /// Configuration file (`key = value` lines).
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Simulated time, s.
    #[arg(long)]
    t_final: Option<f64>,
    /// Time step, s.
    #[arg(long)]
    dt: Option<f64>,
}

fn load(common: &Common, clearance: Option<f64>) -> Result<ujoint::config::RunConfig, i32> {
    let ov = Overrides {
        out: common.out.clone(),
        clearance,
        t_final: common.t_final,
        dt: common.dt,
    };
    cli::load_config(common.config.as_deref(), &ov).map_err(|e| {
        eprintln!("error: {e}");
        e.exit_code()
    })
}

fn run(cli: Cli) -> i32 {
    match cli.command {
        Command::Simulate { common, clearance } => match load(&common, clearance) {
            Ok(cfg) => cli::cmd_simulate(&cfg),
            Err(code) => code,
        },
        Command::Sweep { common, clearance } => match load(&common, None) {
            Ok(cfg) => {
                if let Some(bad) = clearance.iter().find(|c| !(c.is_finite() && **c >= 0.0)) {
                    eprintln!("error: clearance must be finite and >= 0, got {bad}");
                    return cli::EXIT_CONFIG;
                }
                let list = if !clearance.is_empty() {
                    clearance
                } else {
                    cfg.clearance_sweep
                        .clone()
                        .unwrap_or_else(|| DEFAULT_SWEEP.to_vec())
                };
                cli::cmd_sweep(&cfg, &list)
            }
            Err(code) => code,
        },
        Command::Check { zero_clearance_tol } => {
            let mut tol = CheckTolerances::default();
            if let Some(t) = zero_clearance_tol {
                tol.zero_clearance = t;
            }
            cli::cmd_check(&tol)
        }
    }
}

fn main() -> ExitCode {
    let code = run(Cli::parse());
    ExitCode::from(u8::try_from(code).unwrap_or(1))
}
