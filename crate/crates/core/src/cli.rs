//! Command-line front end: `run`, `list-scenarios` and `validate`.

use std::ffi::OsString;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};
use serde::Serialize;

use crate::scenarios::{parse_config, run_scenario, Derived, ScenarioConfig, ScenarioId, ScenarioReport, FORMAT_VERSION};
use crate::Error;

pub const EXIT_OK: i32 = 0;
pub const EXIT_CONFIG: i32 = 1;
pub const EXIT_IMPOSSIBLE: i32 = 2;
pub const EXIT_ORACLE: i32 = 3;

#[derive(Debug, Parser)]
#[command(name = "qslit", version, about = "Which-path double-slit simulator with micromaser cavities")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run a scenario and write density.csv, report.json and steps.log.
    Run {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Cross-check every step against the dense simulator.
        #[arg(long)]
        oracle: bool,
        /// Overrides the seed in the config.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// List the built-in scenarios.
    ListScenarios,
    /// Check a config without running it.
    Validate {
        #[arg(long)]
        config: PathBuf,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunManifest {
    pub config_path: PathBuf,
    pub out_dir: PathBuf,
    pub seed: u64,
    pub oracle: bool,
    pub format_version: String,
}

fn load(path: &Path) -> Result<ScenarioConfig, String> {
    let text = fs::read_to_string(path).map_err(|e| format!("cannot read {}: {e}", path.display()))?;
    parse_config(&text).map_err(|e| format!("{}: {e}", path.display()))
}

fn exit_code(err: &Error) -> i32 {
    match err {
        Error::ImpossibleOutcome { .. } => EXIT_IMPOSSIBLE,
        _ => EXIT_CONFIG,
    }
}

/// Parses `args` (program name first) and executes the command, returning
/// the process exit status.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_CONFIG } else { EXIT_OK };
        }
    };
    match cli.command {
        Command::ListScenarios => {
            for id in ScenarioId::ALL {
                println!("{id}  {}", id.description());
            }
            EXIT_OK
        }
        Command::Validate { config } => match load(&config) {
            Ok(cfg) => {
                println!("ok: scenario {} (truncation {})", cfg.scenario, cfg.truncation);
                EXIT_OK
            }
            Err(msg) => {
                eprintln!("error: {msg}");
                EXIT_CONFIG
            }
        },
        Command::Run { config, out, oracle, seed } => {
            let mut cfg = match load(&config) {
                Ok(cfg) => cfg,
                Err(msg) => {
                    eprintln!("error: {msg}");
                    return EXIT_CONFIG;
                }
            };
            if let Some(seed) = seed {
                cfg.seed = seed;
            }
            let manifest = RunManifest {
                config_path: config,
                out_dir: out,
                seed: cfg.seed,
                oracle,
                format_version: FORMAT_VERSION.into(),
            };
            execute(&cfg, &manifest)
        }
    }
}

fn execute(cfg: &ScenarioConfig, manifest: &RunManifest) -> i32 {
    let report = match run_scenario(cfg, manifest.oracle) {
        Ok(r) => r,
        Err(e) => {
            eprintln!("error: {e}");
            return exit_code(&e);
        }
    };
    if let Err(e) = write_outputs(&report, manifest) {
        eprintln!("error: cannot write outputs to {}: {e}", manifest.out_dir.display());
        return EXIT_CONFIG;
    }
    match &report.residuals {
        Some(r) if !r.passes() => {
            eprintln!("error: oracle residual {:e} exceeds {:e}", r.max_residual, r.threshold);
            EXIT_ORACLE
        }
        _ => EXIT_OK,
    }
}

pub fn write_outputs(report: &ScenarioReport, manifest: &RunManifest) -> std::io::Result<()> {
    fs::create_dir_all(&manifest.out_dir)?;
    fs::write(manifest.out_dir.join("report.json"), report.to_canonical_json())?;
    fs::write(manifest.out_dir.join("density.csv"), density_csv(report)?)?;
    fs::write(manifest.out_dir.join("steps.log"), steps_log(report, manifest))?;
    Ok(())
}

/// Primary screen density as CSV, floats in shortest round-trip form.
pub fn density_csv(report: &ScenarioReport) -> std::io::Result<Vec<u8>> {
    let primary = report.primary();
    let xs = primary.grid().xs();
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["x", "raw_density", "normalized_density"])?;
    for ((x, raw), norm) in xs.iter().zip(&primary.raw).zip(&primary.normalized) {
        w.write_record([format!("{x:?}"), format!("{raw:?}"), format!("{norm:?}")])?;
    }
    w.into_inner().map_err(|e| e.into_error())
}

pub fn steps_log(report: &ScenarioReport, manifest: &RunManifest) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "qslit {} scenario {}: {}", report.format_version, report.scenario, report.description);
    let _ = writeln!(s, "config {}  out {}", manifest.config_path.display(), manifest.out_dir.display());
    let _ = writeln!(s, "seed {}  oracle {}  truncation {}", manifest.seed, manifest.oracle, report.config.truncation);
    let _ = writeln!(s);
    for step in &report.steps {
        let _ = writeln!(
            s,
            "[{:>2}] {:<28} norm^2 = {:.15}  branches = {}{}",
            step.index,
            step.label,
            step.norm_sq,
            step.branch_count,
            if step.renormalized { "  (renormalized)" } else { "" }
        );
    }
    if !report.measurements.is_empty() {
        let _ = writeln!(s);
        for m in &report.measurements {
            let _ = writeln!(s, "measured {} -> {} with probability {:.12}", m.atom_id, m.outcome, m.probability);
        }
    }
    let _ = writeln!(s);
    match report.visibility {
        Some(v) => {
            let _ = writeln!(s, "visibility ({}) = {v:.6e}", report.primary_distribution);
        }
        None => {
            let _ = writeln!(s, "visibility ({}) = n/a", report.primary_distribution);
        }
    }
    for (k, v) in &report.derived {
        let value = match v {
            Derived::Number(x) => format!("{x:.12e}"),
            Derived::Flag(b) => b.to_string(),
            Derived::Text(t) => t.clone(),
        };
        let _ = writeln!(s, "{k} = {value}");
    }
    if let Some(r) = &report.residuals {
        let _ = writeln!(s);
        let _ = writeln!(s, "oracle: max residual {:.3e} (threshold {:.0e}), unitarity defect {:.3e}", r.max_residual, r.threshold, r.unitarity_defect);
        for step in &r.steps {
            let _ = writeln!(s, "  {:<28} {:.3e}", step.label, step.residual);
        }
    }
    s
}
