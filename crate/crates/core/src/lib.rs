//! Self-play evaluation of task-oriented dialogue systems.
//!
//! A Game Master relays utterances between a user simulator and a dialogue
//! system, checks every system emission against a strict tool schema,
//! executes database queries and booking validations against a fixture
//! store, and records a [`Transcript`]. Transcripts are then scored for
//! Inform and Booking Accuracy, cost and latency.
//!
//! Numeric metrics are generic over [`Scalar`]; use the `f64` aliases for
//! everyday work and [`Exact`] when a figure must come out exactly.

pub mod cost_model;
pub mod dialogue_systems;
pub mod domain;
pub mod entity_store;
pub mod evaluation;
pub mod game_master;
pub mod goal_synthesis;
pub mod players;
pub mod scalar;
pub mod scripted;
pub mod tool_schema;

pub use dialogue_systems::{Architecture, DialogueSystem};
pub use domain::{BookingResult, Domain, DomainSpec, Goal, Outcome, ToolCall, Transcript, Turn};
pub use entity_store::EntityStore;
pub use evaluation::EvaluationReport;
pub use game_master::{run_dialogue, GameConfig};
pub use players::Player;
pub use scalar::Scalar;

/// Arbitrary-precision rational for exact metric reproduction.
pub type Exact = num_rational::BigRational;

/// Fixed-width rational; enough for rates over realistic batch sizes.
pub type Ratio64 = num_rational::Ratio<i64>;

pub type CostInputs = cost_model::CostInputs<f64>;
pub type ExactCostInputs = cost_model::CostInputs<Exact>;
pub type RobustnessInput = evaluation::RobustnessInput<f64>;
pub type ExactRobustnessInput = evaluation::RobustnessInput<Exact>;
