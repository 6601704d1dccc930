use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use clarify_cli::commands;

#[derive(Parser)]
#[command(
    name = "clarify",
    version,
    about = "Preference-based reward learning with contrastive query selection"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run an experiment from a TOML config.
    Run {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: Option<PathBuf>,
        /// Continue from the checkpoint in the output directory.
        #[arg(long)]
        resume: bool,
    },
    /// Check every analytic gradient against finite differences.
    Gradcheck {
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Quadrilateral-loss demo on 1000 scalar-valued items.
    DemoQuad {
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value = "demo_quad.csv")]
        out: PathBuf,
        /// Also save the trained table embedding.
        #[arg(long)]
        checkpoint: Option<PathBuf>,
    },
    /// Project a saved embedding to two principal axes.
    ExportEmb {
        #[arg(long)]
        model: PathBuf,
        /// Preference file whose segments are exported; defaults to the one next to the model.
        #[arg(long)]
        segments: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Summarize the round logs of an artifacts directory as CSV.
    Report {
        #[arg(long)]
        dir: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run an experiment labeled by a human through the HTTP service.
    Serve {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, default_value_t = 8080)]
        port: u16,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run {
            config,
            seed,
            out,
            resume,
        } => commands::run(&config, seed, out, resume),
        Command::Gradcheck { seed } => commands::gradcheck(seed),
        Command::DemoQuad {
            seed,
            out,
            checkpoint,
        } => commands::demo_quad_cmd(seed, &out, checkpoint.as_deref()),
        Command::ExportEmb {
            model,
            segments,
            out,
        } => commands::export_emb(&model, segments.as_deref(), &out),
        Command::Report { dir, out } => commands::report(&dir, out),
        Command::Serve {
            config,
            port,
            seed,
            out,
        } => commands::serve(&config, port, seed, out),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {:#}", e.error);
            ExitCode::from(e.code as u8)
        }
    }
}
