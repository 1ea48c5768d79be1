use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;

use fewg_cli::{run, RunRequest, Task, EXIT_CONFIG};

/// Free-electron / waveguide coupling calculations from a TOML run file.
#[derive(Parser, Debug)]
#[command(name = "fewg", version)]
struct Args {
    /// Run configuration (TOML).
    #[arg(long)]
    config: PathBuf,
    /// Overrides the task named in the configuration.
    #[arg(long, value_enum)]
    task: Option<Task>,
    /// Mode cache directory; falls back to FEWG_CACHE, then the config value.
    #[arg(long)]
    cache: Option<PathBuf>,
    /// Worker threads (default: all cores).
    #[arg(long)]
    jobs: Option<usize>,
    /// Output directory; overrides the config value.
    #[arg(long)]
    out: Option<PathBuf>,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let args = Args::parse();
    if let Some(n) = args.jobs {
        if n == 0 {
            eprintln!("error: --jobs must be at least 1");
            return ExitCode::from(EXIT_CONFIG);
        }
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("error: {e}");
            return ExitCode::from(EXIT_CONFIG);
        }
    }
    let req = RunRequest {
        config: args.config,
        task: args.task,
        cache: args.cache.or_else(|| std::env::var_os("FEWG_CACHE").map(PathBuf::from)),
        out: args.out,
    };
    match run(&req) {
        Ok(outcome) => {
            for f in &outcome.files {
                println!("{}", f.display());
            }
            if !outcome.failures.is_empty() {
                eprintln!("{} work item(s) failed; see failures.json", outcome.failures.len());
            }
            ExitCode::from(outcome.exit_code())
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
