use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

mod commands;
mod config;

use config::{Config, Overrides};

#[derive(Parser)]
#[command(name = "fiberann", version, about = "Filtered vector search over proximity graphs")]
struct Cli {
    /// key = value configuration file; flags override it.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[command(flatten)]
    overrides: Overrides,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Build the proximity graph and print its statistics.
    BuildGraph,
    /// Build the cluster atlas used to seed restarts.
    BuildAtlas,
    /// Answer queries, one JSON result per line on stdout.
    Query {
        /// A single query as JSON; otherwise the `queries` file is read.
        json: Option<String>,
    },
    /// Run the benchmark and write reports to `out`.
    Bench,
    /// Benchmark one walk with the diagnostic beam width and hop cap.
    Diagnose,
    /// Generate a synthetic dataset, queries and ground truth into `out`.
    GenSynthetic,
}

fn run(cli: Cli) -> anyhow::Result<()> {
    let mut cfg = match &cli.config {
        Some(p) => Config::load(p)?,
        None => Config::default(),
    };
    cli.overrides.apply(&mut cfg);
    if cfg.threads > 0 {
        rayon::ThreadPoolBuilder::new()
            .num_threads(cfg.threads)
            .build_global()?;
    }
    let mut out = std::io::stdout().lock();
    match cli.command {
        Command::BuildGraph => commands::build_graph(&cfg, &mut out),
        Command::BuildAtlas => commands::build_atlas(&cfg, &mut out),
        Command::Query { json } => commands::query(&cfg, json.as_deref(), &mut out),
        Command::Bench => commands::bench(&cfg, false, &mut out),
        Command::Diagnose => commands::bench(&cfg, true, &mut out),
        Command::GenSynthetic => commands::gen_synthetic(&cfg, &mut out),
    }
}

fn fail(msg: &str) -> ExitCode {
    let msg = msg.trim().trim_start_matches("error: ").replace(['\n', '\r'], " ");
    eprintln!("error: {msg}");
    ExitCode::FAILURE
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => e.exit(),
        Err(e) => {
            let rendered = e.render().to_string();
            return fail(rendered.lines().next().unwrap_or("invalid arguments"));
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => fail(&format!("{e:#}")),
    }
}
