use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use lichnerowicz_cli::config::{parse_config, Mode, Overrides, RunConfig};
use lichnerowicz_cli::output::render_report;
use lichnerowicz_cli::run::execute;
use lichnerowicz_cli::{CliError, Status};
use rayon::prelude::*;

/// Worker threads of the parallel kernels; the only environment setting.
const THREADS_VAR: &str = "LICHNEROWICZ_THREADS";

#[derive(Parser)]
#[command(
    name = "lichnerowicz",
    version,
    about = "Mountain-pass solver for singular critical elliptic equations"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
    #[command(flatten)]
    common: Common,
}

#[derive(Args, Clone)]
struct Common {
    /// Run configuration (TOML).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory; overrides [output] dir.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Seed of the randomized probes.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Largest ε of a geometric schedule.
    #[arg(long, global = true)]
    eps0: Option<f64>,
    /// Length of the geometric schedule.
    #[arg(long = "eps-steps", global = true)]
    eps_steps: Option<usize>,
    /// Only warnings and errors on stderr.
    #[arg(long, global = true)]
    quiet: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Check the admissibility conditions and the nonexistence detector.
    Admissibility,
    /// ε-continuation (or the low-regularity sequence when configured).
    Solve,
    /// Verify a dumped field.
    Verify {
        /// Field dump (`.field` binary or `.csv`); overrides [solver] field.
        #[arg(long)]
        field: Option<PathBuf>,
    },
    /// Harnack constant of a supersolution family under grid refinement.
    Harnack,
    /// Run several configurations concurrently, each in its own mode.
    Batch { configs: Vec<PathBuf> },
    /// Summarize the reports of a finished run directory.
    Report {
        /// Run directory; defaults to the configured output directory.
        dir: Option<PathBuf>,
    },
}

fn load(path: Option<&Path>, overrides: &Overrides) -> Result<RunConfig, CliError> {
    let path = path.ok_or_else(|| CliError::Validation("--config is required".into()))?;
    let mut cfg = parse_config(path)?;
    cfg.apply(overrides);
    Ok(cfg)
}

fn overrides(c: &Common, mode: Option<Mode>, field: Option<PathBuf>) -> Overrides {
    Overrides {
        mode,
        out: c.out.clone(),
        seed: c.seed,
        eps0: c.eps0,
        eps_steps: c.eps_steps,
        field,
    }
}

fn single(c: &Common, mode: Option<Mode>, field: Option<PathBuf>) -> Status {
    match load(c.config.as_deref(), &overrides(c, mode, field)) {
        Ok(cfg) => execute(&cfg),
        Err(e) => {
            log::error!("{e}");
            Status::Fail
        }
    }
}

/// Worst status first: a failure, then infeasibility.
fn combine(statuses: &[Status]) -> Status {
    if statuses.contains(&Status::Fail) {
        Status::Fail
    } else if statuses.contains(&Status::Infeasible) {
        Status::Infeasible
    } else {
        Status::Pass
    }
}

fn batch(c: &Common, configs: &[PathBuf]) -> Status {
    let statuses: Vec<Status> = configs
        .par_iter()
        .map(|path| {
            let mut o = overrides(c, None, None);
            // each config gets its own directory under --out
            o.out = c
                .out
                .as_ref()
                .map(|base| base.join(path.file_stem().unwrap_or(path.as_os_str())));
            let status = match load(Some(path), &o) {
                Ok(cfg) => execute(&cfg),
                Err(e) => {
                    log::error!("{}: {e}", path.display());
                    Status::Fail
                }
            };
            log::info!("{}: {status:?}", path.display());
            status
        })
        .collect();
    combine(&statuses)
}

fn report(c: &Common, dir: Option<PathBuf>) -> Status {
    let dir = match dir.or_else(|| c.out.clone()) {
        Some(d) => Ok(d),
        None => load(c.config.as_deref(), &overrides(c, None, None)).map(|cfg| cfg.output.dir),
    };
    match dir.and_then(|d| render_report(&d)) {
        Ok(text) => {
            print!("{text}");
            Status::Pass
        }
        Err(e) => {
            log::error!("{e}");
            Status::Fail
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = if cli.common.quiet { "warn" } else { "info" };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    if let Some(n) = std::env::var(THREADS_VAR)
        .ok()
        .and_then(|v| v.parse::<usize>().ok())
    {
        if let Err(e) = rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
        {
            log::warn!("{THREADS_VAR}: {e}");
        }
    }
    let c = &cli.common;
    let status = match cli.command {
        Command::Admissibility => single(c, Some(Mode::AdmissibilityOnly), None),
        Command::Solve => {
            // keep the low-regularity mode when the file asks for it
            let keep = c
                .config
                .as_deref()
                .and_then(|p| parse_config(p).ok())
                .is_some_and(|cfg| cfg.solver.mode == Mode::LowRegularitySolve);
            single(c, (!keep).then_some(Mode::Solve), None)
        }
        Command::Verify { field } => single(c, Some(Mode::VerifyOnly), field),
        Command::Harnack => single(c, Some(Mode::HarnackBench), None),
        Command::Batch { configs } => batch(c, &configs),
        Command::Report { dir } => report(c, dir),
    };
    ExitCode::from(status.code() as u8)
}
