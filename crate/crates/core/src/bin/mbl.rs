use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, ValueEnum};

use mbl::pipeline::{exit_code, run_pipeline, ErrorRecord, RunConfig, Subcommand};
use mbl::report::{to_json_bytes, write_atomic};
use mbl::Error;

#[derive(Clone, Copy, ValueEnum)]
enum Cmd {
    Bands,
    Wannier,
    Effective,
    Analyze,
    Sweep,
}

/// Band, Wannier, effective-matrix and spectral analysis of periodic
/// Schroedinger operators in a weak magnetic field.
#[derive(Parser)]
#[command(name = "mbl", version)]
struct Cli {
    #[arg(value_enum)]
    subcommand: Cmd,
    /// JSON run configuration.
    #[arg(long)]
    config: PathBuf,
    /// Output directory; overrides `output` in the config. Default: ./out
    #[arg(long)]
    out: Option<PathBuf>,
    /// Ignore and do not write stage caches.
    #[arg(long)]
    no_cache: bool,
    /// Worker threads.
    #[arg(long, env = "MBL_THREADS")]
    threads: Option<usize>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let sub = match cli.subcommand {
        Cmd::Bands => Subcommand::Bands,
        Cmd::Wannier => Subcommand::Wannier,
        Cmd::Effective => Subcommand::Effective,
        Cmd::Analyze => Subcommand::Analyze,
        Cmd::Sweep => Subcommand::Sweep,
    };
    let cfg = std::fs::read_to_string(&cli.config)
        .map_err(|source| Error::Io { path: cli.config.display().to_string(), source })
        .and_then(|t| RunConfig::from_json(&t));
    let out = cli.out.clone().or_else(|| cfg.as_ref().ok().and_then(|c| c.output.clone()).map(PathBuf::from)).unwrap_or_else(|| PathBuf::from("out"));
    let cfg = match cfg {
        Ok(c) => c,
        Err(e) => {
            eprintln!("mbl: {e}");
            let rec = ErrorRecord { kind: e.kind().into(), message: e.to_string(), stage: None };
            if let Ok(b) = to_json_bytes(&rec) {
                let _ = write_atomic(&out.join("error.json"), &b);
            }
            return ExitCode::from(if matches!(e, Error::ConfigInvalid(_)) { 2 } else { 1 });
        }
    };
    let use_cache = !cli.no_cache && cfg.cache.unwrap_or(true);
    let mut pool = rayon::ThreadPoolBuilder::new();
    if let Some(n) = cli.threads.filter(|&n| n > 0) {
        pool = pool.num_threads(n);
    }
    let pool = match pool.build() {
        Ok(p) => p,
        Err(e) => {
            eprintln!("mbl: thread pool: {e}");
            return ExitCode::from(1);
        }
    };
    let result = pool.install(|| run_pipeline(&cfg, sub, &out, use_cache));
    match &result {
        Ok(o) => println!("{}", o.report_path.display()),
        Err(e) => eprintln!("mbl: {} ({})", e, e.kind()),
    }
    ExitCode::from(exit_code(&result) as u8)
}
