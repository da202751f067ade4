//! Command implementations behind the `ujoint` binary.
//!
//! Exit codes: 0 success, 2 invalid configuration, 3 solver failure (partial
//! outputs kept), 4 I/O error.

use crate::analysis::{
    extract_events, poincare_section, ImpactEvent, RegimeSummary, TRANSIENT_PERIODS,
};
use crate::check::{self, CheckTolerances};
use crate::config::{parse_config, ConfigError, RunConfig};
use crate::output::{
    write_events_csv, write_regimes_csv, write_summary_json, write_trajectory_csv, RegimeRow,
    RunSummary,
};
use crate::stepper::{simulate, Trajectory, IMPACT_THRESHOLD};
use rayon::prelude::*;
use std::fs::{self, File};
use std::io::{self, BufWriter};
use std::path::{Path, PathBuf};
use thiserror::Error;

pub const EXIT_OK: i32 = 0;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_SOLVER: i32 = 3;
pub const EXIT_IO: i32 = 4;

/// Clearances swept when neither the command line nor the file lists any, m.
pub const DEFAULT_SWEEP: [f64; 4] = [0.0, 0.05e-6, 10e-6, 50e-6];

#[derive(Debug, Error)]
pub enum CliError {
    #[error("cannot read {path}: {source}")]
    ReadConfig {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    #[error("{path}: {source}")]
    Config {
        path: String,
        #[source]
        source: ConfigError,
    },
    #[error("cannot write {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::ReadConfig { .. } | CliError::Config { .. } => EXIT_CONFIG,
            CliError::Io { .. } => EXIT_IO,
        }
    }
}

/// Command-line values that take precedence over the configuration file.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Overrides {
    pub out: Option<PathBuf>,
    pub clearance: Option<f64>,
    pub t_final: Option<f64>,
    pub dt: Option<f64>,
}

pub fn load_config(path: Option<&Path>, ov: &Overrides) -> Result<RunConfig, CliError> {
    let (text, label) = match path {
        Some(p) => (
            fs::read_to_string(p).map_err(|source| CliError::ReadConfig {
                path: p.to_path_buf(),
                source,
            })?,
            p.display().to_string(),
        ),
        None => (String::new(), "<defaults>".to_string()),
    };
    let wrap = |source| CliError::Config {
        path: label.clone(),
        source,
    };
    let mut cfg = parse_config(&text).map_err(wrap)?;
    if let Some(out) = &ov.out {
        cfg.output_dir = out.clone();
    }
    if let Some(c) = ov.clearance {
        cfg.params.clearance = c;
    }
    if let Some(t) = ov.t_final {
        cfg.params.t_final = t;
    }
    if let Some(dt) = ov.dt {
        cfg.params.dt = dt;
    }
    cfg.params
        .validate()
        .map_err(|e| wrap(ConfigError::Invalid(e)))?;
    Ok(cfg)
}

pub struct RunOutcome {
    pub trajectory: Trajectory,
    pub events: Vec<ImpactEvent>,
    pub regime: Result<RegimeSummary, String>,
}

impl RunOutcome {
    pub fn summary(&self, cfg: &RunConfig) -> RunSummary {
        let (regime, regime_error) = match &self.regime {
            Ok(r) => (Some(r.clone()), None),
            Err(e) => (None, Some(e.clone())),
        };
        RunSummary {
            status: if self.trajectory.is_complete() {
                "ok"
            } else {
                "solver_failure"
            },
            failure: self.trajectory.failure.as_ref().map(|f| f.to_string()),
            params: cfg.params.clone(),
            sample_every: cfg.sample_every,
            samples: self.trajectory.samples.len(),
            impact_events: self.events.len(),
            stats: (&self.trajectory.stats).into(),
            regime,
            regime_error,
        }
    }

    pub fn regime_row(&self, clearance: f64) -> RegimeRow {
        RegimeRow {
            clearance,
            regime: self.regime.as_ref().ok().map(|r| {
                (
                    r.impacts_per_forcing_period,
                    r.poincare_diameter,
                    r.classification,
                )
            }),
        }
    }
}

pub fn run_simulation(cfg: &RunConfig) -> RunOutcome {
    let trajectory = simulate(&cfg.params, cfg.initial, cfg.sample_every);
    let events = extract_events(&trajectory, IMPACT_THRESHOLD);
    let regime = if trajectory.is_complete() {
        let cut = TRANSIENT_PERIODS * cfg.params.forcing_period();
        poincare_section(&trajectory, cfg.params.omega, cut).map_err(|e| e.to_string())
    } else {
        Err("run did not complete".to_string())
    };
    RunOutcome {
        trajectory,
        events,
        regime,
    }
}

fn create(dir: &Path, name: &str) -> Result<BufWriter<File>, CliError> {
    let path = dir.join(name);
    File::create(&path)
        .map(BufWriter::new)
        .map_err(|source| CliError::Io { path, source })
}

fn io_at(dir: &Path, name: &str) -> impl FnOnce(io::Error) -> CliError {
    let path = dir.join(name);
    move |source| CliError::Io { path, source }
}

/// Writes `trajectory.csv`, `events.csv` and `summary.json` into `dir`.
pub fn write_outputs(dir: &Path, cfg: &RunConfig, outcome: &RunOutcome) -> Result<(), CliError> {
    fs::create_dir_all(dir).map_err(|source| CliError::Io {
        path: dir.to_path_buf(),
        source,
    })?;
    write_trajectory_csv(
        create(dir, "trajectory.csv")?,
        &outcome.trajectory,
        &cfg.params,
    )
    .map_err(io_at(dir, "trajectory.csv"))?;
    write_events_csv(create(dir, "events.csv")?, &outcome.events)
        .map_err(io_at(dir, "events.csv"))?;
    write_summary_json(create(dir, "summary.json")?, &outcome.summary(cfg))
        .map_err(io_at(dir, "summary.json"))?;
    Ok(())
}

fn describe(outcome: &RunOutcome, clearance: f64) -> String {
    let regime = match &outcome.regime {
        Ok(r) => format!(
            "{} ({:.3} impacts/period, diameter {:.2e})",
            r.classification, r.impacts_per_forcing_period, r.poincare_diameter
        ),
        Err(e) => format!("unclassified: {e}"),
    };
    match &outcome.trajectory.failure {
        None => format!(
            "C = {clearance:e} m: {} steps, {} impacts, {regime}",
            outcome.trajectory.stats.steps,
            outcome.events.len()
        ),
        Some(f) => format!("C = {clearance:e} m: solver failure, {f}"),
    }
}

pub fn cmd_simulate(cfg: &RunConfig) -> i32 {
    let outcome = run_simulation(cfg);
    if let Err(e) = write_outputs(&cfg.output_dir, cfg, &outcome) {
        eprintln!("error: {e}");
        return e.exit_code();
    }
    let line = describe(&outcome, cfg.params.clearance);
    if outcome.trajectory.is_complete() {
        println!("{line}");
        EXIT_OK
    } else {
        eprintln!("{line}");
        EXIT_SOLVER
    }
}

/// Subdirectory for one sweep run.
pub fn sweep_dir_name(clearance: f64) -> String {
    format!("clearance_{clearance:e}")
}

/// Runs every clearance in parallel, each into its own subdirectory, then
/// writes `regimes.csv`. A failing run does not stop the others.
pub fn cmd_sweep(cfg: &RunConfig, clearances: &[f64]) -> i32 {
    let results: Vec<(f64, RunOutcome, Result<(), CliError>)> = clearances
        .par_iter()
        .map(|&c| {
            let mut run_cfg = cfg.clone();
            run_cfg.params.clearance = c;
            run_cfg.output_dir = cfg.output_dir.join(sweep_dir_name(c));
            let outcome = run_simulation(&run_cfg);
            let written = write_outputs(&run_cfg.output_dir, &run_cfg, &outcome);
            (c, outcome, written)
        })
        .collect();

    let mut code = EXIT_OK;
    let mut rows = Vec::with_capacity(results.len());
    for (c, outcome, written) in &results {
        println!("{}", describe(outcome, *c));
        if let Err(e) = written {
            eprintln!("error: {e}");
            code = code.max(EXIT_IO);
        } else if !outcome.trajectory.is_complete() {
            code = code.max(EXIT_SOLVER);
        }
        rows.push(outcome.regime_row(*c));
    }

    let table = create(&cfg.output_dir, "regimes.csv")
        .and_then(|w| write_regimes_csv(w, &rows).map_err(io_at(&cfg.output_dir, "regimes.csv")));
    if let Err(e) = table {
        eprintln!("error: {e}");
        return EXIT_IO;
    }
    code
}

pub fn cmd_check(tol: &CheckTolerances) -> i32 {
    let outcomes = check::run_all(tol);
    print!("{}", check::render_table(&outcomes));
    if outcomes.iter().all(|o| o.passed) {
        EXIT_OK
    } else {
        1
    }
}
