//! Command-line front end: resonant-tunneling characteristics of a
//! cylindrical waveguide pinched by two conical narrows.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use tunres::cache::{content_hash, CacheStore};
use tunres::config::{PipelineConfig, RunMode};
use tunres::pipeline;

#[derive(Parser)]
#[command(
    name = "tunres",
    version,
    about = "Resonant-tunneling characteristics of a pinched cylindrical waveguide"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Execute the configured pipeline and write its artifacts.
    Run {
        /// JSON run description.
        #[arg(long)]
        config: PathBuf,
        /// Override the configured mode (coefficients, asymptotics, direct,
        /// full). The ladder mode carries its own diameter list and can only
        /// be selected in the config file.
        #[arg(long)]
        mode: Option<String>,
        /// Override the configured output directory.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Worker threads for independent solves (default: all cores).
        #[arg(long)]
        threads: Option<usize>,
    },
    /// Describe what a run would do without solving anything.
    Explain {
        #[arg(long)]
        config: PathBuf,
        /// Same override as `run --mode`.
        #[arg(long)]
        mode: Option<String>,
    },
    /// Inspect or prune the coefficient store.
    Cache {
        #[command(subcommand)]
        op: CacheOp,
    },
}

#[derive(Subcommand)]
enum CacheOp {
    /// List stored records, marking the one this config resolves to.
    Ls {
        #[arg(long)]
        config: PathBuf,
    },
    /// Remove one record (by hash prefix) or all of them.
    Rm {
        #[arg(long)]
        config: PathBuf,
        /// Hash prefix of the record to drop.
        #[arg(long)]
        hash: Option<String>,
        /// Drop every record.
        #[arg(long)]
        all: bool,
    },
}

/// Apply a `--mode` override; `ladder` is refused because its diameter list
/// lives in the config file.
fn apply_mode(cfg: &mut PipelineConfig, mode: &str) -> Result<(), String> {
    cfg.mode = match mode {
        "coefficients" => RunMode::Coefficients,
        "asymptotics" => RunMode::Asymptotics,
        "direct" => RunMode::Direct,
        "full" => RunMode::Full,
        "ladder" => {
            return Err(
                "mode `ladder` needs its diameter list; set it in the config file".to_string()
            )
        }
        other => {
            return Err(format!(
                "unknown mode `{other}` (expected coefficients, asymptotics, direct, or full)"
            ))
        }
    };
    Ok(())
}

fn load_or_exit(path: &PathBuf) -> Result<PipelineConfig, u8> {
    match PipelineConfig::load(path) {
        Ok(cfg) => Ok(cfg),
        Err(violations) => {
            eprintln!("config {} is invalid:", path.display());
            for v in &violations {
                eprintln!("  - {v}");
            }
            Err(2)
        }
    }
}

fn real_main() -> u8 {
    let cli = Cli::parse();
    match cli.command {
        Command::Run { config, mode, out, threads } => {
            let mut cfg = match load_or_exit(&config) {
                Ok(c) => c,
                Err(code) => return code,
            };
            if let Some(m) = &mode {
                if let Err(e) = apply_mode(&mut cfg, m) {
                    eprintln!("config error: {e}");
                    return 2;
                }
            }
            if let Some(dir) = out {
                cfg.output_dir = dir;
            }
            if let Some(n) = threads {
                // a global pool can be installed once; later calls are no-ops
                let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
            }
            match pipeline::run(&cfg) {
                Ok(outcome) => {
                    println!(
                        "record {} ({}); wrote {} to {}",
                        &outcome.hash[..12],
                        if outcome.cache_hit { "cache hit" } else { "solved" },
                        outcome.artifacts.join(", "),
                        cfg.output_dir.display()
                    );
                    0
                }
                Err(err) => {
                    eprintln!("error: {err}");
                    err.exit_code as u8
                }
            }
        }
        Command::Explain { config, mode } => {
            let mut cfg = match load_or_exit(&config) {
                Ok(c) => c,
                Err(code) => return code,
            };
            if let Some(m) = &mode {
                if let Err(e) = apply_mode(&mut cfg, m) {
                    eprintln!("config error: {e}");
                    return 2;
                }
            }
            print!("{}", pipeline::explain(&cfg));
            0
        }
        Command::Cache { op } => match op {
            CacheOp::Ls { config } => {
                let cfg = match load_or_exit(&config) {
                    Ok(c) => c,
                    Err(code) => return code,
                };
                let store = match CacheStore::load(&cfg.cache_file) {
                    Ok(s) => s,
                    Err(e) => {
                        eprintln!("error: {e}");
                        return 2;
                    }
                };
                let active = content_hash(&cfg.geometry, &cfg.coefficients);
                print!("{}", pipeline::cache_listing(&store, &active));
                0
            }
            CacheOp::Rm { config, hash, all } => {
                let cfg = match load_or_exit(&config) {
                    Ok(c) => c,
                    Err(code) => return code,
                };
                let mut store = match CacheStore::load(&cfg.cache_file) {
                    Ok(s) => s,
                    Err(e) => {
                        eprintln!("error: {e}");
                        return 2;
                    }
                };
                if all {
                    let n = store.records.len();
                    store.clear();
                    if let Err(e) = store.save() {
                        eprintln!("error: {e}");
                        return 2;
                    }
                    println!("removed {n} record(s)");
                    return 0;
                }
                let Some(prefix) = hash else {
                    eprintln!("config error: `cache rm` needs --hash <prefix> or --all");
                    return 2;
                };
                let full = match pipeline::resolve_hash(&store, &prefix) {
                    Ok(h) => h.to_string(),
                    Err(e) => {
                        eprintln!("error: {e}");
                        return 2;
                    }
                };
                store.remove(&full);
                if let Err(e) = store.save() {
                    eprintln!("error: {e}");
                    return 2;
                }
                println!("removed {full}");
                0
            }
        },
    }
}

fn main() -> ExitCode {
    ExitCode::from(real_main())
}
