use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;

use opinion_limits_cli::{load_config, resolve, run_experiment, CliError, ResolveOptions};

/// Run an opinion-dynamics experiment described by a TOML config or a manifest.json.
#[derive(Debug, Parser)]
#[command(name = "opinion-limits", version)]
struct Args {
    /// Experiment config (TOML) or a manifest.json from an earlier run.
    config: PathBuf,
    /// Output directory; overrides `output_dir` in the config.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Use full-size defaults for ensemble and sweep run counts.
    #[arg(long)]
    paper_scale: bool,
    /// Worker threads (default: all cores).
    #[arg(long)]
    threads: Option<usize>,
}

fn run(args: &Args) -> Result<(), CliError> {
    if let Some(k) = args.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(k)
            .build_global()
            .map_err(|e| CliError::Config(format!("invalid threads: {e}")))?;
    }
    let config = load_config(&args.config)?;
    let plan = resolve(
        &config,
        ResolveOptions {
            paper_scale: args.paper_scale,
        },
    )?;
    let out = args
        .out
        .clone()
        .or_else(|| config.output_dir.clone())
        .unwrap_or_else(|| PathBuf::from("out"));
    let outcome = run_experiment(&plan, &out)?;
    println!("{}", outcome.summary);
    for f in &outcome.files {
        println!("wrote {}", f.display());
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let args = Args::parse();
    match run(&args) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let kind = match e {
                CliError::Config(_) => "config error",
                CliError::Runtime(_) => "error",
            };
            eprintln!("{kind}: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
