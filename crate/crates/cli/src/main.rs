//! gridimage: exact image sizes of linear maps on product sets over F_p.

mod commands;
mod error;
mod manifest;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use commands::{Computed, Prepared, Runtime};
use error::CliError;
use manifest::{Cache, Envelope, RunManifest};

#[derive(Parser)]
#[command(
    name = "gridimage",
    version,
    about = "Images of linear maps on product sets over F_p"
)]
struct Cli {
    /// Print a CSV table instead of the JSON envelope.
    #[arg(long, global = true)]
    csv: bool,
    /// Worker threads (results do not depend on this).
    #[arg(long, global = true)]
    workers: Option<usize>,
    /// Largest image whose points are printed with --points.
    #[arg(long, global = true, default_value_t = 10_000)]
    max_points: u64,
    /// Directory caching search and conjecture results by manifest hash.
    #[arg(long, global = true)]
    cache_dir: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Best applicable lower bound for a map and set sizes.
    Bound(commands::BoundArgs),
    /// Exact image of a map on a grid.
    Image(commands::ImageArgs),
    /// Canonical form of a rank-m, m x (m+1) map with the grid carried along.
    Normalize(commands::NormalizeArgs),
    /// Run a self-check suite: cd, tightness, invariance, main-theorem, large-k,
    /// boundary-identity, cover, fiber, oracle, conjecture, or all.
    Verify(commands::VerifyArgs),
    /// Minimize the image size over grids of a fixed shape.
    Search(commands::SearchArgs),
    /// Interval value, large-k bound and search minimum for k in the open window.
    Conjecture(commands::ConjectureArgs),
}

fn prepare(cli: Cli, rt: Runtime) -> Result<Prepared, CliError> {
    match cli.command {
        Command::Bound(a) => commands::bound(a, rt),
        Command::Image(a) => commands::image(a, rt),
        Command::Normalize(a) => commands::normalize_cmd(a, rt),
        Command::Verify(a) => commands::verify(a, rt),
        Command::Search(a) => commands::search(a, rt),
        Command::Conjecture(a) => commands::conjecture(a, rt),
    }
}

fn run(cli: Cli) -> Result<i32, CliError> {
    if cli.workers == Some(0) {
        return Err(CliError::usage("--workers must be at least 1"));
    }
    let rt = Runtime {
        workers: cli
            .workers
            .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get())),
        max_points: cli.max_points,
        cell_cap: commands::cell_cap_from_env()?,
    };
    let csv = cli.csv;
    let cache = cli.cache_dir.as_deref().map(Cache::open).transpose()?;
    let prepared = prepare(cli, rt)?;
    let manifest = RunManifest::new(
        prepared.command,
        prepared.config,
        prepared.seed,
        &prepared.inputs,
    );
    let cache = cache.filter(|_| prepared.cacheable);
    let key = manifest.key();
    let cached = cache
        .as_ref()
        .and_then(|c| c.get(&key))
        .and_then(|v| serde_json::from_value::<Computed>(v).ok());
    let computed = match cached {
        Some(hit) => {
            eprintln!("cache hit {key}");
            hit
        }
        None => {
            let computed = (prepared.run)()?;
            if let Some(c) = &cache {
                c.put(
                    &key,
                    &serde_json::to_value(&computed).expect("serializable"),
                )?;
            }
            computed
        }
    };
    if csv {
        print!("{}", computed.csv);
    } else {
        let envelope = Envelope {
            manifest,
            result: computed.result,
        };
        println!(
            "{}",
            serde_json::to_string(&envelope).expect("serializable")
        );
    }
    Ok(computed.exit)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => ExitCode::from(code as u8),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.code as u8)
        }
    }
}
