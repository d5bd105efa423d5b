//! `ccr-lab`: run, validate, and list scenario files.
//!
//! Exit codes: 0 success, 1 task failure, 2 parse error (unreadable file,
//! malformed TOML, unknown fields), 3 validation error (well-formed file with
//! an invalid field; the message names the field).

mod scenario;
mod tasks;

use clap::{Parser, Subcommand};
use scenario::Scenario;
use sha2::{Digest, Sha256};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

/// Bundled scenarios, embedded at compile time.
const BUNDLED: &[(&str, &str)] = &[
    ("circle_gate", include_str!("../scenarios/circle_gate.toml")),
    ("flower_p4", include_str!("../scenarios/flower_p4.toml")),
    ("flower_cpmg", include_str!("../scenarios/flower_cpmg.toml")),
    ("flower_p2_failure", include_str!("../scenarios/flower_p2_failure.toml")),
    ("uhrig_table", include_str!("../scenarios/uhrig_table.toml")),
    ("gate_cz_ideal", include_str!("../scenarios/gate_cz_ideal.toml")),
    ("flower_cz", include_str!("../scenarios/flower_cz.toml")),
    ("integers_demo", include_str!("../scenarios/integers_demo.toml")),
    ("zz_report", include_str!("../scenarios/zz_report.toml")),
    ("zero_zz_roots", include_str!("../scenarios/zero_zz_roots.toml")),
    ("two_oscillator_gate", include_str!("../scenarios/two_oscillator_gate.toml")),
    ("metamaterial_chain", include_str!("../scenarios/metamaterial_chain.toml")),
    ("scaling_flowers", include_str!("../scenarios/scaling_flowers.toml")),
    ("zz_echo", include_str!("../scenarios/zz_echo.toml")),
    ("sw_order_fit", include_str!("../scenarios/sw_order_fit.toml")),
];

#[derive(Parser)]
#[command(name = "ccr-lab", about = "Cross-cross-resonance gate laboratory", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Execute a scenario and write its artifacts plus a manifest.
    Run {
        /// Bundled scenario name or path to a TOML file.
        #[arg(long)]
        config: String,
        /// Output directory (created if missing).
        #[arg(long, default_value = "ccr-lab-out")]
        out: PathBuf,
        /// Override the random seed of seeded tasks.
        #[arg(long)]
        seed: Option<u64>,
        /// Override the numerical tolerance of solver tasks.
        #[arg(long)]
        tol: Option<f64>,
    },
    /// Parse and validate a scenario without running it.
    Validate {
        /// Bundled scenario name or path to a TOML file.
        #[arg(long)]
        config: String,
    },
    /// List the bundled scenarios.
    List,
}

fn load_source(config: &str) -> Result<String, String> {
    if let Some((_, text)) = BUNDLED.iter().find(|(n, _)| *n == config) {
        return Ok(text.to_string());
    }
    let p = Path::new(config);
    std::fs::read_to_string(p).map_err(|e| format!("cannot read {config:?}: {e}"))
}

/// Parse (exit 2 on failure) then validate (exit 3 on failure).
fn load_scenario(config: &str) -> Result<Scenario, ExitCode> {
    let text = load_source(config).map_err(|e| {
        eprintln!("parse error: {e}");
        ExitCode::from(2)
    })?;
    let sc: Scenario = toml::from_str(&text).map_err(|e| {
        eprintln!("parse error in {config}: {e}");
        ExitCode::from(2)
    })?;
    sc.validate().map_err(|e| {
        eprintln!("validation error in {config}: {e}");
        ExitCode::from(3)
    })?;
    Ok(sc)
}

fn apply_thread_cap() {
    if let Ok(v) = std::env::var("CCR_LAB_THREADS") {
        match v.parse::<usize>() {
            Ok(n) => ccr_core::set_worker_threads(n),
            Err(_) => eprintln!("warning: ignoring non-numeric CCR_LAB_THREADS={v:?}"),
        }
    }
}

fn run(config: &str, out: &Path, seed: Option<u64>, tol: Option<f64>) -> ExitCode {
    let sc = match load_scenario(config) {
        Ok(sc) => sc,
        Err(code) => return code,
    };
    // compute everything first so a failing task leaves no partial outputs
    let artifacts = match tasks::execute(&sc, seed, tol) {
        Ok(a) => a,
        Err(e) => {
            eprintln!("task failure in {}: {e}", sc.name);
            return ExitCode::from(1);
        }
    };
    if let Err(e) = std::fs::create_dir_all(out) {
        eprintln!("task failure: cannot create {}: {e}", out.display());
        return ExitCode::from(1);
    }
    let mut manifest = format!("scenario: {}\n", sc.name);
    for a in &artifacts {
        let path = out.join(&a.name);
        if let Err(e) = std::fs::write(&path, &a.contents) {
            eprintln!("task failure: cannot write {}: {e}", path.display());
            return ExitCode::from(1);
        }
        let hash = Sha256::digest(a.contents.as_bytes());
        manifest.push_str(&format!("{:x}  {}\n", hash, a.name));
    }
    let mpath = out.join("manifest.txt");
    if let Err(e) = std::fs::write(&mpath, &manifest) {
        eprintln!("task failure: cannot write {}: {e}", mpath.display());
        return ExitCode::from(1);
    }
    println!("{}: wrote {} artifacts to {}", sc.name, artifacts.len() + 1, out.display());
    ExitCode::SUCCESS
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    apply_thread_cap();
    match cli.command {
        Command::Run { config, out, seed, tol } => run(&config, &out, seed, tol),
        Command::Validate { config } => match load_scenario(&config) {
            Ok(sc) => {
                println!("{}: ok ({}: {})", config, sc.name, sc.description);
                ExitCode::SUCCESS
            }
            Err(code) => code,
        },
        Command::List => {
            for (name, text) in BUNDLED {
                let desc = text
                    .lines()
                    .find_map(|l| l.strip_prefix("description = "))
                    .map(|s| s.trim_matches('"').to_string())
                    .unwrap_or_default();
                println!("{name}: {desc}");
            }
            ExitCode::SUCCESS
        }
    }
}
