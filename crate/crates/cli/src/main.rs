use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use ddam::datagen::{PeriodicTrafficConfig, SyntheticConfig};
use ddam::harness::{gen_data, load_config, run_experiment, tree_report, write_outputs, DataRequest, ExperimentConfig};
use ddam::Error;

#[derive(Parser)]
#[command(name = "ddam", about = "Distributed associative-memory experiments", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct ConfigArgs {
    /// Experiment config (TOML).
    config: PathBuf,
    /// `key=value` applied to the config before validation; repeatable.
    #[arg(short = 'o', long = "override", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
}

#[derive(Subcommand)]
enum Command {
    /// Run every sweep point and write the report, metadata and figure CSVs.
    Run {
        #[command(flatten)]
        cfg: ConfigArgs,
        #[arg(long, env = "DDAM_OUT_DIR", default_value = "out")]
        out: PathBuf,
        #[arg(long)]
        force: bool,
    },
    /// Compare Steiner and sum-delay trees for the configured graph.
    Trees {
        #[command(flatten)]
        cfg: ConfigArgs,
        /// Also write the comparison as CSV.
        #[arg(long)]
        csv: Option<PathBuf>,
        #[arg(long)]
        force: bool,
    },
    /// Write a generated dataset to CSV.
    GenData {
        #[command(subcommand)]
        kind: DataKind,
    },
    /// Parse and validate a config, then print it as resolved.
    ValidateConfig {
        #[command(flatten)]
        cfg: ConfigArgs,
    },
    /// Print the version.
    Version,
}

#[derive(Subcommand)]
enum DataKind {
    /// Periodic 10-minute access-point traffic.
    PeriodicTraffic {
        #[arg(long, default_value_t = 16)]
        aps: usize,
        #[arg(long, default_value_t = 50)]
        days: usize,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        force: bool,
    },
    /// Synthetic key-value streams.
    Synthetic {
        #[arg(long, default_value_t = 20)]
        agents: usize,
        #[arg(long, default_value_t = 4)]
        d_k: usize,
        #[arg(long, default_value_t = 4)]
        d_v: usize,
        #[arg(long, default_value_t = 0.75)]
        rho: f64,
        #[arg(long, default_value_t = 1.0)]
        noise_var: f64,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[arg(long, default_value_t = 100)]
        horizon: usize,
        #[arg(long)]
        switch_at: Option<usize>,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        force: bool,
    },
}

fn load(args: &ConfigArgs) -> Result<ExperimentConfig, Error> {
    if !args.config.exists() {
        return Err(Error::Config(format!("config file {} not found", args.config.display())));
    }
    load_config(&args.config, &args.overrides)
}

fn write_new(path: &Path, text: &str, force: bool) -> Result<(), Error> {
    if path.exists() && !force {
        return Err(Error::Config(format!(
            "{} already exists; pass --force to overwrite",
            path.display()
        )));
    }
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| Error::Io {
            path: dir.to_path_buf(),
            source: e,
        })?;
    }
    fs::write(path, text).map_err(|e| Error::Io {
        path: path.to_path_buf(),
        source: e,
    })
}

/// Prints to stdout; a closed pipe ends the process quietly.
fn say(text: impl AsRef<str>) {
    let mut out = io::stdout().lock();
    if let Err(e) = writeln!(out, "{}", text.as_ref()).and_then(|_| out.flush()) {
        if e.kind() == io::ErrorKind::BrokenPipe {
            std::process::exit(0);
        }
    }
}

fn execute(cli: Cli) -> Result<(), Error> {
    match cli.command {
        Command::Run { cfg, out, force } => {
            let config = load(&cfg)?;
            let report = run_experiment(&config)?;
            for r in &report.rows {
                say(format!(
                    "{:<13} T={:<5} steps={:<5} seed={:<3} avg_regret={:.6} dynamic_regret={:.4} self_nmse={:.4}",
                    r.protocol, r.horizon, r.steps, r.seed, r.avg_regret, r.dynamic_regret, r.self_nmse
                ));
            }
            for p in write_outputs(&out, &config, &report, force)? {
                say(format!("wrote {}", p.display()));
            }
        }
        Command::Trees { cfg, csv, force } => {
            let report = tree_report(&load(&cfg)?)?;
            say(report.to_string().trim_end());
            if let Some(path) = csv {
                write_new(&path, &report.to_csv()?, force)?;
            }
        }
        Command::GenData { kind } => {
            let (req, out, force) = match kind {
                DataKind::PeriodicTraffic {
                    aps,
                    days,
                    seed,
                    out,
                    force,
                } => (
                    DataRequest::PeriodicTraffic(PeriodicTrafficConfig {
                        n_aps: aps,
                        days,
                        seed,
                        ..Default::default()
                    }),
                    out,
                    force,
                ),
                DataKind::Synthetic {
                    agents,
                    d_k,
                    d_v,
                    rho,
                    noise_var,
                    seed,
                    horizon,
                    switch_at,
                    out,
                    force,
                } => (
                    DataRequest::Synthetic {
                        config: SyntheticConfig {
                            n_agents: agents,
                            d_k,
                            d_v,
                            rho,
                            noise_var,
                            seed,
                            ..Default::default()
                        },
                        horizon,
                        switch_at,
                    },
                    out,
                    force,
                ),
            };
            write_new(&out, &gen_data(&req)?, force)?;
            say(format!("wrote {}", out.display()));
        }
        Command::ValidateConfig { cfg } => {
            let config = load(&cfg)?;
            say(format!("{}: ok", cfg.config.display()));
            say(config.to_pretty_json()?);
        }
        Command::Version => say(format!("ddam {}", env!("CARGO_PKG_VERSION"))),
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            let mut source = std::error::Error::source(&e);
            while let Some(s) = source {
                eprintln!("  caused by: {s}");
                source = s.source();
            }
            if e.is_usage() {
                ExitCode::from(2)
            } else {
                ExitCode::from(1)
            }
        }
    }
}
