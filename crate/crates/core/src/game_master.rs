//! Runs one dialogue between a user simulator and a dialogue system.

use std::time::Instant;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::dialogue_systems::{DialogueSystem, SystemError, SystemInput};
use crate::domain::{BookingResult, FunctionName, GenerationParams, Goal, Outcome, Speaker, ToolCall, Transcript, Turn};
use crate::entity_store::{BookingFailure, EntityStore, QueryFilter, RefnumContext};
use crate::evaluation::measure_latency;
use crate::players::{Player, PlayerError};
use crate::tool_schema::{parse_tool_call, FormatViolation, ViolationKind};

/// Note recorded when a system chains more tool steps than allowed.
pub const TOOL_BUDGET_NOTE: &str = "tool budget exceeded";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GameConfig {
    pub max_user_turns: u32,
    pub max_tool_steps_per_turn: u32,
    pub done_token: String,
    pub generation: GenerationParams,
}

impl Default for GameConfig {
    fn default() -> Self {
        Self {
            max_user_turns: 15,
            max_tool_steps_per_turn: 10,
            done_token: "DONE".into(),
            generation: GenerationParams::default(),
        }
    }
}

impl GameConfig {
    pub fn validate(&self) -> Result<(), GameError> {
        if self.max_user_turns == 0 || self.max_tool_steps_per_turn == 0 {
            return Err(GameError::Config("turn and tool-step limits must be at least 1".into()));
        }
        if self.done_token.trim().is_empty() || self.done_token.trim() != self.done_token {
            return Err(GameError::Config("done_token must be non-empty without surrounding whitespace".into()));
        }
        if self.generation.max_new_tokens == 0 {
            return Err(GameError::Config("generation.max_new_tokens must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, thiserror::Error)]
pub enum GameError {
    #[error("invalid game config: {0}")]
    Config(String),
    #[error("player failed: {0}")]
    Player(#[from] PlayerError),
}

/// Source of turn timestamps in milliseconds.
pub trait Clock: Send {
    fn now_ms(&mut self) -> u64;
}

/// Advances a fixed step per reading, so transcripts are reproducible.
#[derive(Debug, Clone)]
pub struct LogicalClock {
    now: u64,
    step: u64,
}

impl LogicalClock {
    pub fn new(step_ms: u64) -> Self {
        Self { now: 0, step: step_ms }
    }
}

impl Default for LogicalClock {
    fn default() -> Self {
        Self::new(100)
    }
}

impl Clock for LogicalClock {
    fn now_ms(&mut self) -> u64 {
        let t = self.now;
        self.now += self.step;
        t
    }
}

#[derive(Debug, Clone)]
pub struct WallClock {
    start: Instant,
}

impl Default for WallClock {
    fn default() -> Self {
        Self { start: Instant::now() }
    }
}

impl Clock for WallClock {
    fn now_ms(&mut self) -> u64 {
        self.start.elapsed().as_millis() as u64
    }
}

pub fn detect_done(utterance: &str, done_token: &str) -> bool {
    utterance.trim() == done_token
}

/// Result of executing one validated call.
#[derive(Debug, Clone, PartialEq)]
pub enum ToolOutcome {
    /// `followup`: the message goes to the user and the turn ends.
    RouteToUser(String),
    /// `processnextsubsystem`: hand over to a sub-module.
    RouteToSubsystem { subsystem: String, input: Option<String> },
    Records { function: FunctionName, records: Vec<Value> },
    Booked(BookingResult),
    BookingFailed(BookingFailure),
    /// The query named a column the table lacks.
    QueryFailed(String),
}

impl ToolOutcome {
    /// What the dialogue system is shown. `None` for routing directives.
    pub fn payload(&self) -> Option<Value> {
        match self {
            ToolOutcome::RouteToUser(_) | ToolOutcome::RouteToSubsystem { .. } => None,
            ToolOutcome::Records { function, records } => {
                Some(json!({ "function": function, "status": "success", "results": records }))
            }
            ToolOutcome::Booked(b) => Some(json!({
                "function": FunctionName::booking_for(b.domain()),
                "status": "success",
                "reference_number": b.reference_number(),
                "booking": b.confirmed_slots(),
            })),
            ToolOutcome::BookingFailed(f) => Some(json!({
                "status": "failure",
                "reason": f.reason,
                "detail": f.detail,
            })),
            ToolOutcome::QueryFailed(detail) => Some(json!({ "status": "failure", "detail": detail })),
        }
    }
}

/// Executes a validated call. Each validation call consumes one reference
/// counter value, whether or not it succeeds.
pub fn execute_tool(store: &EntityStore, call: &ToolCall, refnum: &mut RefnumContext) -> ToolOutcome {
    let function = call.function;
    if function == FunctionName::Followup {
        return ToolOutcome::RouteToUser(call.str_arg("message").unwrap_or_default().to_string());
    }
    if function == FunctionName::Processnextsubsystem {
        return ToolOutcome::RouteToSubsystem {
            subsystem: call.str_arg("subsystem").unwrap_or_default().to_string(),
            input: call.str_arg("input_data").map(str::to_string),
        };
    }
    if function.retrieval_domain().is_some() {
        let result = QueryFilter::from_call(call).and_then(|f| store.query(&f));
        return match result {
            Ok(rows) => ToolOutcome::Records {
                function,
                records: rows.iter().map(|r| serde_json::to_value(r.fields()).expect("fields serialize")).collect(),
            },
            Err(e) => ToolOutcome::QueryFailed(e.to_string()),
        };
    }
    let domain = function.booking_domain().expect("remaining functions are booking validations");
    let outcome = match store.validate_booking(domain, &call.arguments, refnum) {
        Ok(b) => ToolOutcome::Booked(b),
        Err(f) => ToolOutcome::BookingFailed(f),
    };
    refnum.counter += 1;
    outcome
}

struct Recorder<'c> {
    turns: Vec<Turn>,
    clock: &'c mut dyn Clock,
}

impl Recorder<'_> {
    fn push(&mut self, speaker: Speaker, content: String, tool_call: Option<ToolCall>) {
        let index = self.turns.len() as u32;
        let wall_time_ms = self.clock.now_ms();
        self.turns.push(Turn { index, speaker, content, tool_call, wall_time_ms });
    }

    fn subsystem_turns(&mut self, turns: Vec<(String, String)>) {
        for (name, raw) in turns {
            self.push(Speaker::Subsystem, format!("[{name}] {raw}"), None);
        }
    }

    fn abort(&mut self, violation: &FormatViolation) {
        let kind = serde_json::to_value(violation.kind).expect("kind serializes");
        let kind = kind.as_str().unwrap_or_default();
        self.push(
            Speaker::GameMaster,
            format!("aborted ({kind}): {}: {}", violation.kind.abort_message(), violation.detail),
            None,
        );
    }
}

/// Runs one dialogue with wall-clock timestamps.
pub async fn run_dialogue(
    goal: &Goal,
    user: &mut dyn Player,
    system: &mut dyn DialogueSystem,
    store: &EntityStore,
    config: &GameConfig,
    seed: u64,
) -> Result<Transcript, GameError> {
    run_dialogue_with_clock(goal, user, system, store, config, seed, &mut WallClock::default()).await
}

/// The user speaks first. Each user utterance opens a turn in which the
/// system may chain up to `max_tool_steps_per_turn` emissions; a followup
/// closes the turn. Any format violation ends the dialogue.
pub async fn run_dialogue_with_clock(
    goal: &Goal,
    user: &mut dyn Player,
    system: &mut dyn DialogueSystem,
    store: &EntityStore,
    config: &GameConfig,
    seed: u64,
    clock: &mut dyn Clock,
) -> Result<Transcript, GameError> {
    config.validate()?;
    let architecture = system.architecture();
    let mut rec = Recorder { turns: Vec::new(), clock };
    let mut refnum = RefnumContext::new(seed, goal.id());
    let mut bookings = Vec::new();
    let mut to_user: Option<String> = None;
    let mut outcome = Outcome::TurnLimitReached;

    'dialogue: for _ in 0..config.max_user_turns {
        let utterance = user.respond(to_user.as_deref()).await?;
        rec.push(Speaker::User, utterance.clone(), None);
        if detect_done(&utterance, &config.done_token) {
            outcome = Outcome::Completed;
            break;
        }
        let mut input = SystemInput::User(utterance);
        let mut steps = 0;
        loop {
            if steps == config.max_tool_steps_per_turn {
                rec.push(
                    Speaker::GameMaster,
                    format!("aborted: {TOOL_BUDGET_NOTE} ({steps} system steps without a followup)"),
                    None,
                );
                outcome = Outcome::AbortedFormatViolation;
                break 'dialogue;
            }
            steps += 1;
            let step = match system.step(input).await {
                Ok(step) => step,
                Err(SystemError::Subsystem { subsystem, violation, turns }) => {
                    rec.subsystem_turns(turns);
                    let violation = FormatViolation::new(violation.kind, format!("{subsystem}: {}", violation.detail));
                    rec.abort(&violation);
                    outcome = Outcome::AbortedFormatViolation;
                    break 'dialogue;
                }
                Err(SystemError::Player(e)) => return Err(e.into()),
            };
            rec.subsystem_turns(step.subsystem_turns);
            let parsed = parse_tool_call(&step.raw).and_then(|call| {
                if architecture.allows(call.function) {
                    Ok(call)
                } else {
                    Err(FormatViolation::new(
                        ViolationKind::UnknownFunction,
                        format!("`{}` is not available to the {architecture} architecture", call.function),
                    ))
                }
            });
            let call = match parsed {
                Ok(call) => call,
                Err(violation) => {
                    rec.push(Speaker::DialogueSystem, step.raw, None);
                    rec.abort(&violation);
                    outcome = Outcome::AbortedFormatViolation;
                    break 'dialogue;
                }
            };
            rec.push(Speaker::DialogueSystem, step.raw, Some(call.clone()));
            let result = execute_tool(store, &call, &mut refnum);
            input = match result {
                ToolOutcome::RouteToUser(message) => {
                    to_user = Some(message);
                    break;
                }
                ToolOutcome::RouteToSubsystem { subsystem, input } => SystemInput::Subsystem { name: subsystem, input },
                other => {
                    let payload = other.payload().expect("non-routing outcomes carry a payload");
                    rec.push(Speaker::ToolResult, payload.to_string(), None);
                    if let ToolOutcome::Booked(b) = other {
                        bookings.push(b);
                    }
                    SystemInput::ToolResult(payload)
                }
            };
        }
    }

    let mut transcript =
        Transcript { goal_id: goal.id().to_string(), turns: rec.turns, outcome, bookings, latency_s: 0.0 };
    transcript.latency_s = measure_latency(&transcript).unwrap_or(0.0);
    Ok(transcript)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn done_detection() {
        assert!(detect_done("DONE", "DONE"));
        assert!(detect_done("  DONE\n", "DONE"));
        assert!(!detect_done("DONE, thanks!", "DONE"));
        assert!(!detect_done("done", "DONE"));
    }

    #[test]
    fn config_bounds() {
        assert!(GameConfig::default().validate().is_ok());
        let bad = GameConfig { max_user_turns: 0, ..GameConfig::default() };
        assert!(bad.validate().is_err());
        let bad = GameConfig { done_token: " DONE".into(), ..GameConfig::default() };
        assert!(bad.validate().is_err());
    }

    #[test]
    fn logical_clock_steps() {
        let mut c = LogicalClock::new(250);
        assert_eq!((c.now_ms(), c.now_ms(), c.now_ms()), (0, 250, 500));
    }

    #[test]
    fn followup_routes_to_user() {
        let store = EntityStore::new();
        let mut refnum = RefnumContext::new(1, "g");
        let out = execute_tool(&store, &ToolCall::followup("hello"), &mut refnum);
        assert_eq!(out, ToolOutcome::RouteToUser("hello".into()));
        assert_eq!(refnum.counter, 0);
    }
}
