//! Runs one experiment: every goal under every seed, written under one
//! directory.
//!
//! ```text
//! <out>/experiment.json              labels, architecture, goal ids, seeds
//! <out>/transcripts/<goal>__seed<n>.json
//! <out>/report.json                  per-dialogue reports + summary counts
//! <out>/cost_latency.json
//! ```
//!
//! Transcripts are written as each dialogue finishes (write-then-rename), so
//! a crash loses at most the dialogues still in flight.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use tokio::sync::Semaphore;
use todsim_core::cost_model::{CostSummary, PriceTable, TokenUsage};
use todsim_core::dialogue_systems::{Architecture, DialogueSystem, ModularLlm, ModularProg, Monolithic, SubModules};
use todsim_core::domain::parse_goal_lines;
use todsim_core::entity_store::load_store;
use todsim_core::game_master::{run_dialogue_with_clock, Clock, LogicalClock, WallClock};
use todsim_core::players::{
    build_system_prompts, build_user_sim_prompt, ChatClient, Player, PlayerContext, RemotePlayer, SystemRole,
};
use todsim_core::scripted::ScriptBook;
use todsim_core::evaluation::evaluate;
use todsim_core::{EntityStore, EvaluationReport, GameConfig, Goal, Transcript};

use crate::config::{ClockKind, ExperimentConfig, PlayerSpec};

#[derive(Debug, thiserror::Error)]
pub enum RunError {
    #[error("{path}: {message}")]
    Input { path: PathBuf, message: String },
    #[error("{0}")]
    Setup(String),
    #[error("writing {path}: {source}")]
    Write {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

/// What `experiment.json` records; `report` reads it back.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentManifest {
    pub name: String,
    pub user_label: String,
    pub system_label: String,
    pub architecture: Architecture,
    pub goal_ids: Vec<String>,
    pub seeds: Vec<u64>,
    pub game: GameConfig,
}

/// A dialogue that could not be run to an outcome (transport failure and
/// the like). Aborted dialogues are results, not failures.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DialogueFailure {
    pub goal_id: String,
    pub seed: u64,
    pub error: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub reports: Vec<SeededReport>,
    pub summary: todsim_core::evaluation::ReportSummary,
    pub failures: Vec<DialogueFailure>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeededReport {
    pub seed: u64,
    #[serde(flatten)]
    pub report: EvaluationReport,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SideCost {
    pub label: String,
    pub usage: TokenUsage,
    /// Present when the price table lists the label.
    pub cost: Option<CostSummary>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct CostLatency {
    pub user: SideCost,
    pub system: SideCost,
    pub mean_latency_s: f64,
    pub latency_s: BTreeMap<String, f64>,
}

pub fn transcript_file_name(goal_id: &str, seed: u64) -> String {
    format!("{goal_id}__seed{seed}.json")
}

fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), RunError> {
    let tmp = path.with_extension("json.partial");
    let err = |source| RunError::Write { path: path.to_path_buf(), source };
    std::fs::write(&tmp, bytes).map_err(err)?;
    std::fs::rename(&tmp, path).map_err(err)
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), RunError> {
    let mut bytes = serde_json::to_vec_pretty(value).expect("artifact serializes");
    bytes.push(b'\n');
    write_atomic(path, &bytes)
}

pub fn load_goals(path: &Path) -> Result<Vec<Goal>, RunError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| RunError::Input { path: path.into(), message: e.to_string() })?;
    parse_goal_lines(&text)
        .map_err(|(line, msg)| RunError::Input { path: path.into(), message: format!("line {line}: {msg}") })
}

fn load_scripts(path: &Path) -> Result<ScriptBook, RunError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| RunError::Input { path: path.into(), message: e.to_string() })?;
    let de = &mut serde_json::Deserializer::from_str(&text);
    serde_path_to_error::deserialize(de)
        .map_err(|e| RunError::Input { path: path.into(), message: format!("at `{}`: {}", e.path(), e.inner()) })
}

/// Everything needed to build fresh players for one dialogue.
enum Backend {
    Scripted(ScriptBook),
    Remote(Arc<ChatClient>),
}

impl Backend {
    fn new(spec: &PlayerSpec, goals: &[Goal]) -> Result<Self, RunError> {
        match spec {
            PlayerSpec::Scripted { scripts, .. } => {
                let book = load_scripts(scripts)?;
                if let Some(g) = goals.iter().find(|g| !book.contains_key(g.id())) {
                    return Err(RunError::Input {
                        path: scripts.clone(),
                        message: format!("no script for goal `{}`", g.id()),
                    });
                }
                Ok(Backend::Scripted(book))
            }
            PlayerSpec::Remote { endpoint, .. } => {
                let client = ChatClient::new(endpoint.clone()).map_err(|e| RunError::Setup(e.to_string()))?;
                Ok(Backend::Remote(Arc::new(client)))
            }
        }
    }

    fn user(&self, goal: &Goal, seed: u64, game: &GameConfig) -> Result<Box<dyn Player>, String> {
        match self {
            Backend::Scripted(book) => {
                let script = book[goal.id()].expanded(seed, goal.id());
                Ok(Box::new(script.user_player(goal, game.generation).map_err(|e| e.to_string())?))
            }
            Backend::Remote(client) => {
                let prompt = build_user_sim_prompt(goal).map_err(|e| e.to_string())?;
                let ctx = PlayerContext::new(prompt, game.generation).map_err(|e| e.to_string())?;
                Ok(Box::new(RemotePlayer::new(client.clone(), ctx)))
            }
        }
    }

    fn system(
        &self,
        architecture: Architecture,
        goal: &Goal,
        seed: u64,
        game: &GameConfig,
    ) -> Result<Box<dyn DialogueSystem>, String> {
        match self {
            Backend::Scripted(book) => {
                Ok(book[goal.id()].expanded(seed, goal.id()).dialogue_system(architecture, game.generation))
            }
            Backend::Remote(client) => {
                let prompts = build_system_prompts(architecture);
                let player = |role: SystemRole, tools: Vec<serde_json::Value>| -> Result<Box<dyn Player>, String> {
                    let ctx = PlayerContext::new(prompts[&role].clone(), game.generation).map_err(|e| e.to_string())?;
                    Ok(Box::new(RemotePlayer::new(client.clone(), ctx).with_tools(tools)))
                };
                let modules = || -> Result<SubModules, String> {
                    Ok(SubModules {
                        intent: player(SystemRole::Intent, vec![])?,
                        slots: player(SystemRole::Slots, vec![])?,
                        response: player(SystemRole::Response, vec![])?,
                    })
                };
                let tools = architecture.tool_documents();
                Ok(match architecture {
                    Architecture::Monolithic => Box::new(Monolithic::new(player(SystemRole::Monolithic, tools)?)),
                    Architecture::ModularProg => Box::new(ModularProg::new(modules()?)),
                    Architecture::ModularLlm => {
                        Box::new(ModularLlm::new(player(SystemRole::Manager, tools)?, modules()?))
                    }
                })
            }
        }
    }
}

struct Finished {
    index: usize,
    seed: u64,
    result: Result<(Transcript, TokenUsage, TokenUsage), String>,
}

#[derive(Debug)]
pub struct ExperimentOutcome {
    pub dir: PathBuf,
    pub report: ExperimentReport,
    pub cost_latency: CostLatency,
}

impl ExperimentOutcome {
    /// Exit status: success iff no dialogue hit an internal error.
    pub fn succeeded(&self) -> bool {
        self.report.failures.is_empty()
    }
}

pub async fn run_experiment(cfg: &ExperimentConfig, out: &Path) -> Result<ExperimentOutcome, RunError> {
    let goals = load_goals(&cfg.goals)?;
    if goals.is_empty() {
        return Err(RunError::Input { path: cfg.goals.clone(), message: "goal set is empty".into() });
    }
    let store = Arc::new(load_store(&cfg.store.by_domain()).map_err(|e| RunError::Setup(e.to_string()))?);
    let prices = cfg
        .prices
        .as_deref()
        .map(PriceTable::load)
        .transpose()
        .map_err(|e| RunError::Setup(e.to_string()))?;
    let user = Arc::new(Backend::new(&cfg.user, &goals)?);
    let system = Arc::new(Backend::new(&cfg.system, &goals)?);

    let transcripts_dir = out.join("transcripts");
    std::fs::create_dir_all(&transcripts_dir)
        .map_err(|source| RunError::Write { path: transcripts_dir.clone(), source })?;
    let manifest = ExperimentManifest {
        name: cfg.name.clone(),
        user_label: cfg.user.label().into(),
        system_label: cfg.system.label().into(),
        architecture: cfg.architecture,
        goal_ids: goals.iter().map(|g| g.id().to_string()).collect(),
        seeds: cfg.seeds.clone(),
        game: cfg.game.clone(),
    };
    write_json(&out.join("experiment.json"), &manifest)?;

    let goals = Arc::new(goals);
    let permits = Arc::new(Semaphore::new(cfg.concurrency));
    let mut workers = tokio::task::JoinSet::new();
    for &seed in &cfg.seeds {
        for index in 0..goals.len() {
            let (goals, store, user, system, permits) =
                (goals.clone(), store.clone(), user.clone(), system.clone(), permits.clone());
            let (game, architecture, clock) = (cfg.game.clone(), cfg.architecture, cfg.clock());
            workers.spawn(async move {
                let _permit = permits.acquire_owned().await.expect("semaphore is never closed");
                let goal = &goals[index];
                let result = play_one(goal, seed, &user, &system, architecture, &store, &game, clock).await;
                Finished { index, seed, result }
            });
        }
    }

    let mut finished = Vec::new();
    while let Some(joined) = workers.join_next().await {
        let done = joined.map_err(|e| RunError::Setup(format!("dialogue worker panicked: {e}")))?;
        if let Ok((t, _, _)) = &done.result {
            write_json(&transcripts_dir.join(transcript_file_name(&t.goal_id, done.seed)), t)?;
        }
        finished.push(done);
    }
    // Completion order varies; artifacts follow seed order, then goal order.
    let seed_rank: BTreeMap<u64, usize> = cfg.seeds.iter().enumerate().map(|(i, s)| (*s, i)).collect();
    finished.sort_by_key(|f| (seed_rank[&f.seed], f.index));

    let mut reports = Vec::new();
    let mut failures = Vec::new();
    let (mut user_usage, mut system_usage) = (TokenUsage::default(), TokenUsage::default());
    let mut latency = BTreeMap::new();
    for f in finished {
        let goal = &goals[f.index];
        match f.result {
            Ok((t, u, s)) => {
                user_usage += u;
                system_usage += s;
                latency.insert(transcript_file_name(goal.id(), f.seed), t.latency_s);
                reports.push(SeededReport { seed: f.seed, report: evaluate(&t, goal, &store) });
            }
            Err(error) => {
                tracing::warn!(goal = goal.id(), seed = f.seed, %error, "dialogue failed");
                failures.push(DialogueFailure { goal_id: goal.id().into(), seed: f.seed, error });
            }
        }
    }

    let plain: Vec<EvaluationReport> = reports.iter().map(|r| r.report.clone()).collect();
    let report = ExperimentReport {
        summary: todsim_core::evaluation::ReportSummary::from_reports(&plain),
        reports,
        failures,
    };
    write_json(&out.join("report.json"), &report)?;

    let side = |spec: &PlayerSpec, usage: TokenUsage| SideCost {
        label: spec.label().into(),
        usage,
        cost: prices.as_ref().and_then(|p| p.get(spec.label()).ok()).map(|price| CostSummary::price(usage, price)),
    };
    let cost_latency = CostLatency {
        user: side(&cfg.user, user_usage),
        system: side(&cfg.system, system_usage),
        mean_latency_s: report.summary.mean_latency_s,
        latency_s: latency,
    };
    write_json(&out.join("cost_latency.json"), &cost_latency)?;
    Ok(ExperimentOutcome { dir: out.to_path_buf(), report, cost_latency })
}

#[allow(clippy::too_many_arguments)]
async fn play_one(
    goal: &Goal,
    seed: u64,
    user: &Backend,
    system: &Backend,
    architecture: Architecture,
    store: &EntityStore,
    game: &GameConfig,
    clock: ClockKind,
) -> Result<(Transcript, TokenUsage, TokenUsage), String> {
    let mut us = user.user(goal, seed, game)?;
    let mut ds = system.system(architecture, goal, seed, game)?;
    let mut clock: Box<dyn Clock> = match clock {
        ClockKind::Logical => Box::new(LogicalClock::default()),
        ClockKind::Wall => Box::new(WallClock::default()),
    };
    let t = run_dialogue_with_clock(goal, us.as_mut(), ds.as_mut(), store, game, seed, clock.as_mut())
        .await
        .map_err(|e| e.to_string())?;
    Ok((t, us.usage(), ds.usage()))
}
