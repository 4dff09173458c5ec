use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Context;
use clap::{Parser, Subcommand, ValueEnum};
use todsim_core::domain::to_json_lines;
use todsim_core::goal_synthesis::{
    generate_multiwoz_style, generate_unrealistic, GoalTemplates, Ontology, DEFAULT_MULTI, DEFAULT_SINGLE,
};
use todsim_runner::annotation::{load_session, router, AnnotationState};
use todsim_runner::experiment::load_goals;
use todsim_runner::report::{report_tables, Metric};
use todsim_runner::validate::validate_path;
use todsim_runner::{run_experiment, ExperimentConfig};

#[derive(Parser)]
#[command(name = "todsim", version, about = "Self-play evaluation of task-oriented dialogue systems")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum SynthMode {
    MultiwozStyle,
    Unrealistic,
}

#[derive(Subcommand)]
enum Command {
    /// Run every goal of an experiment config under every seed.
    Run {
        config: PathBuf,
        /// Output directory [default: runs/<name> next to the config].
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Print US x DS tables over finished experiment directories.
    Report {
        #[arg(required = true)]
        dirs: Vec<PathBuf>,
        #[arg(long, value_enum, default_value = "booking")]
        metric: Metric,
        /// Emit exact fractions as JSON instead of a text table.
        #[arg(long)]
        json: bool,
    },
    /// Generate synthetic goals as line-JSON.
    SynthGoals {
        #[arg(long, value_enum)]
        mode: SynthMode,
        /// Corpus goals the multiwoz-style goals must not repeat.
        #[arg(long)]
        corpus: Option<PathBuf>,
        /// Ontology JSON overriding the built-in one for the mode.
        #[arg(long)]
        ontology: Option<PathBuf>,
        #[arg(long, default_value_t = DEFAULT_SINGLE)]
        single: usize,
        #[arg(long, default_value_t = DEFAULT_MULTI)]
        multi: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Output file [default: stdout].
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Check saved transcripts (a file or a directory of them).
    ValidateTranscripts {
        path: PathBuf,
        #[arg(long, default_value_t = 15)]
        max_user_turns: usize,
        #[arg(long, default_value = "DONE")]
        done_token: String,
    },
    /// Serve the pairwise annotation API for a session file.
    AnnotateServe {
        #[arg(long)]
        session: PathBuf,
        /// Holds sides.json and judgments.jsonl; reused on restart.
        #[arg(long)]
        state_dir: PathBuf,
        #[arg(long, default_value = "127.0.0.1:8080")]
        bind: String,
    },
}

async fn dispatch(cli: Cli) -> anyhow::Result<bool> {
    match cli.command {
        Command::Run { config, out } => {
            let cfg = ExperimentConfig::load(&config)?;
            let out = out.unwrap_or_else(|| {
                config.parent().unwrap_or(std::path::Path::new(".")).join("runs").join(&cfg.name)
            });
            let outcome = run_experiment(&cfg, &out).await?;
            let s = &outcome.report.summary;
            println!(
                "{}: {} dialogues ({} completed, {} aborted, {} turn limit), {} failed; artifacts in {}",
                cfg.name,
                s.dialogues,
                s.completed,
                s.aborted_format_violation,
                s.turn_limit_reached,
                outcome.report.failures.len(),
                outcome.dir.display()
            );
            Ok(outcome.succeeded())
        }
        Command::Report { dirs, metric, json } => {
            let table = report_tables(&dirs, metric)?;
            if json {
                println!("{}", serde_json::to_string_pretty(&table.to_json())?);
            } else {
                print!("{}", table.render());
            }
            Ok(true)
        }
        Command::SynthGoals { mode, corpus, ontology, single, multi, seed, out } => {
            let templates = GoalTemplates::builtin();
            let ontology = match ontology {
                Some(p) => Ontology::from_json(&std::fs::read_to_string(&p).with_context(|| p.display().to_string())?)?,
                None => match mode {
                    SynthMode::MultiwozStyle => Ontology::multiwoz_style(),
                    SynthMode::Unrealistic => Ontology::unrealistic(),
                },
            };
            let goals = match mode {
                SynthMode::MultiwozStyle => {
                    let corpus = match corpus {
                        Some(p) => load_goals(&p)?,
                        None => todsim_core::scripted::bundled_corpus_goals(),
                    };
                    generate_multiwoz_style(&ontology, &templates, &corpus, single, multi, seed)?
                }
                SynthMode::Unrealistic => generate_unrealistic(&ontology, &templates, single, multi, seed)?,
            };
            let text = to_json_lines(&goals);
            match out {
                Some(p) => std::fs::write(&p, text).with_context(|| p.display().to_string())?,
                None => print!("{text}"),
            }
            Ok(true)
        }
        Command::ValidateTranscripts { path, max_user_turns, done_token } => {
            let (checked, findings) = validate_path(&path, max_user_turns, &done_token)?;
            for f in &findings {
                println!("{}: {}", f.file.display(), f.problem);
            }
            println!("{checked} transcripts checked, {} problems", findings.len());
            Ok(findings.is_empty())
        }
        Command::AnnotateServe { session, state_dir, bind } => {
            let state = AnnotationState::open(load_session(&session)?, &state_dir)?;
            let listener = tokio::net::TcpListener::bind(&bind).await.with_context(|| format!("binding {bind}"))?;
            tracing::info!(address = %listener.local_addr()?, "annotation API listening");
            axum::serve(listener, router(state))
                .with_graceful_shutdown(async {
                    let _ = tokio::signal::ctrl_c().await;
                })
                .await?;
            Ok(true)
        }
    }
}

#[tokio::main]
async fn main() -> ExitCode {
    tracing_subscriber::fmt()
        .with_env_filter(tracing_subscriber::EnvFilter::try_from_default_env().unwrap_or_else(|_| "info".into()))
        .with_writer(std::io::stderr)
        .init();
    match dispatch(Cli::parse()).await {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::FAILURE,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
