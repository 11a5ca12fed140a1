use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, ValueEnum};
use sdom_core::config::{parse_config, Command};
use sdom_core::runner::run_experiment;

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Cmd {
    Kr,
    H2,
    Dini,
    Build,
    Dominate,
    Maximal,
    Weights,
    Separation,
}

impl From<Cmd> for Command {
    fn from(c: Cmd) -> Self {
        match c {
            Cmd::Kr => Command::Kr,
            Cmd::H2 => Command::H2,
            Cmd::Dini => Command::Dini,
            Cmd::Build => Command::Build,
            Cmd::Dominate => Command::Dominate,
            Cmd::Maximal => Command::Maximal,
            Cmd::Weights => Command::Weights,
            Cmd::Separation => Command::Separation,
        }
    }
}

/// Sparse-domination experiments on dyadic grids.
#[derive(Debug, Parser)]
#[command(name = "sdom", version)]
struct Cli {
    command: Cmd,
    /// Experiment config (JSON).
    #[arg(long)]
    config: PathBuf,
    /// Report directory; defaults to the config's `output` or the current directory.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Worker threads; falls back to SDOM_THREADS, then to all cores.
    #[arg(long)]
    threads: Option<usize>,
}

const USAGE: u8 = 1;

fn threads(cli: Option<usize>) -> Result<Option<usize>, String> {
    if let Some(n) = cli {
        return Ok(Some(n));
    }
    match std::env::var("SDOM_THREADS") {
        Ok(s) if !s.trim().is_empty() => s
            .trim()
            .parse()
            .map(Some)
            .map_err(|_| format!("SDOM_THREADS: not a thread count: `{s}`")),
        _ => Ok(None),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { USAGE } else { 0 });
        }
    };
    match threads(cli.threads) {
        Ok(Some(0)) => {
            eprintln!("sdom: thread count must be positive");
            return ExitCode::from(USAGE);
        }
        Ok(Some(n)) => {
            if let Err(e) = rayon::ThreadPoolBuilder::new()
                .num_threads(n)
                .build_global()
            {
                eprintln!("sdom: {e}");
                return ExitCode::from(USAGE);
            }
        }
        Ok(None) => {}
        Err(e) => {
            eprintln!("sdom: {e}");
            return ExitCode::from(USAGE);
        }
    }
    let text = match std::fs::read(&cli.config) {
        Ok(t) => t,
        Err(e) => {
            eprintln!("sdom: {}: {e}", cli.config.display());
            return ExitCode::from(USAGE);
        }
    };
    let cfg = match parse_config(&text) {
        Ok(c) => c,
        Err(errs) => {
            for e in &errs.0 {
                eprintln!("sdom: {}: {e}", cli.config.display());
            }
            return ExitCode::from(USAGE);
        }
    };
    let want = Command::from(cli.command);
    if cfg.command != want {
        eprintln!("sdom: config is for `{}`, not `{want}`", cfg.command);
        return ExitCode::from(USAGE);
    }
    let out = cli
        .out
        .or_else(|| cfg.output.as_ref().map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("."));
    match run_experiment(&cfg, &out) {
        Ok(done) => {
            for v in &done.violations {
                eprintln!("sdom: invariant violated: {v}");
            }
            println!("{}", done.json_path.display());
            println!("{}", done.csv_path.display());
            ExitCode::from(done.exit_code() as u8)
        }
        Err(e) => {
            eprintln!("sdom: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
