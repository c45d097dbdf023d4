//! `seckb`: build a security knowledge base from vulnerability-fix pairs and
//! use it to steer code generation.

mod commands;
mod settings;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use settings::Overrides;

#[derive(Debug, Parser)]
#[command(
    name = "seckb",
    version,
    about = "Security knowledge base for secure code generation"
)]
struct Cli {
    #[command(flatten)]
    overrides: Overrides,
    /// More log output; repeat for debug.
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Validate a JSONL corpus of vulnerability-fix pairs and store it in the KB.
    Ingest {
        /// Corpus file; defaults to `corpus` from the configuration.
        #[arg(long)]
        corpus: Option<PathBuf>,
    },
    /// Slice every pair around its patched statements.
    Slice,
    /// Summarize each CWE cluster into a guideline and a cause description.
    Distill {
        /// Re-distill clusters whose stored entry is already up to date.
        #[arg(long)]
        force: bool,
    },
    /// Embed causes and examples and build the sparse API indexes.
    Index,
    /// Show the fused CWE candidates and the chosen example for a task.
    Query {
        #[command(flatten)]
        task: commands::TaskInput,
        #[arg(long)]
        json: bool,
    },
    /// Generate code for every task in a JSONL file.
    Generate {
        /// Tasks as JSONL with `id`, `language` and `prompt`.
        #[arg(long)]
        tasks: PathBuf,
        /// Records go to `<kb>/runs/<run-id>/records.jsonl`.
        #[arg(long, default_value = "default")]
        run_id: String,
        /// Skip retrieval and use the zero-shot prompt.
        #[arg(long)]
        zero_shot: bool,
    },
    /// Compute SecureRate, Pass@k and SecurePass@k from verdict JSONL.
    Evaluate {
        #[arg(long)]
        verdicts: PathBuf,
        /// Values of k; repeatable.
        #[arg(long = "k", default_values_t = vec![1usize])]
        ks: Vec<usize>,
        #[arg(long)]
        json: bool,
    },
    /// Print the manifest and knowledge-base statistics.
    Inspect {
        #[arg(long)]
        json: bool,
    },
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                clap::error::ErrorKind::DisplayHelp | clap::error::ErrorKind::DisplayVersion => {
                    ExitCode::SUCCESS
                }
                _ => ExitCode::from(commands::USAGE),
            };
        }
    };
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();

    let config = match settings::load(&cli.overrides) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {}", describe(&e));
            return ExitCode::from(commands::USAGE);
        }
    };
    let result = match cli.command {
        Command::Ingest { corpus } => commands::ingest(&config, corpus),
        Command::Slice => commands::slice(&config),
        Command::Distill { force } => commands::distill(&config, force),
        Command::Index => commands::index(&config),
        Command::Query { task, json } => commands::query(&config, &task, json),
        Command::Generate {
            tasks,
            run_id,
            zero_shot,
        } => commands::generate(&config, &tasks, &run_id, zero_shot),
        Command::Evaluate { verdicts, ks, json } => commands::evaluate(&verdicts, &ks, json),
        Command::Inspect { json } => commands::inspect(&config, json),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(failure) => {
            if !failure.quiet {
                eprintln!("error: {}", describe(&failure.error));
            }
            ExitCode::from(failure.code)
        }
    }
}

/// The error and its causes, leaving out causes already quoted by the
/// message before them.
fn describe(error: &anyhow::Error) -> String {
    let mut out = error.to_string();
    let mut last = out.clone();
    for cause in error.chain().skip(1) {
        let text = cause.to_string();
        if !last.contains(&text) {
            out.push_str(": ");
            out.push_str(&text);
        }
        last = text;
    }
    out
}
