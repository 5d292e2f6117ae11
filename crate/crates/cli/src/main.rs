//! `fraclap` command-line entry point.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;
use fraclap_cli::output::write_artifacts;
use fraclap_cli::{execute, parse_config, RunOptions};
use serde_json::json;

/// Runs a fractional p-Laplacian experiment described by a JSON configuration.
#[derive(Parser, Debug)]
#[command(name = "fraclap", version)]
struct Cli {
    /// JSON run configuration.
    #[arg(long)]
    config: PathBuf,
    /// Master seed, overriding the configuration.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory, overriding the configuration (default `out`).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Worker threads for parallel sections.
    #[arg(long)]
    parallel: Option<usize>,
    /// Also write the kernel weights.
    #[arg(long)]
    dump_weights: bool,
}

fn fail(error: serde_json::Value) -> ExitCode {
    eprintln!(
        "{}",
        serde_json::to_string_pretty(&error).unwrap_or_default()
    );
    ExitCode::from(1)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(n) = cli.parallel {
        if let Err(e) = rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
        {
            return fail(json!({ "error": "THREAD_POOL", "message": e.to_string() }));
        }
    }
    let text = match std::fs::read_to_string(&cli.config) {
        Ok(t) => t,
        Err(e) => {
            return fail(
                json!({ "error": "IO_ERROR", "message": format!("{}: {e}", cli.config.display()) }),
            )
        }
    };
    let mut cfg = match parse_config(&text) {
        Ok(c) => c,
        Err(e) => return fail(json!({ "error": e.kind, "errors": e.errors })),
    };
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    let dir = cli
        .out
        .or_else(|| cfg.output_dir.clone())
        .unwrap_or_else(|| PathBuf::from("out"));
    let output = match execute(
        &cfg,
        RunOptions {
            dump_weights: cli.dump_weights,
        },
    ) {
        Ok(o) => o,
        Err(e) => return fail(json!({ "error": e.code(), "message": e.to_string() })),
    };
    if let Err(e) = write_artifacts(&dir, &output.artifacts) {
        return fail(json!({ "error": "IO_ERROR", "message": format!("{}: {e}", dir.display()) }));
    }
    let status = if output.holds {
        "all checks hold"
    } else {
        "check failure"
    };
    println!("{status}; artifacts in {}", dir.display());
    ExitCode::from(output.exit_code() as u8)
}
