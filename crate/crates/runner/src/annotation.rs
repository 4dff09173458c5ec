//! HTTP service for the pairwise naturalness test.
//!
//! Each pair shows a generated dialogue and a ground-truth one. Which side
//! each appears on is drawn once per pair from the session seed and saved in
//! `sides.json`. Every judgment line in `judgments.jsonl` records the
//! resolved preference, so the rate can be recomputed from the log alone.
//!
//! | method | path              | success                       | errors        |
//! |--------|-------------------|-------------------------------|---------------|
//! | GET    | `/api/next`       | 200 [`PairView`], 204 when done |             |
//! | POST   | `/api/judgments`  | 201 [`JudgmentAck`]           | 404, 409, 422 |
//! | GET    | `/api/progress`   | 200 [`Progress`]              |               |
//! | GET    | `/api/tt-rate`    | 200 [`RateView`]              |               |

use std::collections::{BTreeMap, BTreeSet};
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use axum::extract::State;
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use num_rational::Ratio;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use tokio::sync::Mutex;
use todsim_core::domain::{FunctionName, Speaker, Transcript};
use todsim_core::evaluation::{turing_rate, Judgment, Preference};

pub const INSTRUCTIONS: &str = "Read both dialogues in full. Each shows a user talking to a booking assistant. \
Select the dialogue whose user side reads more like a real person. There is no right answer to look for; go with \
your overall impression of naturalness.";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DialogueRole {
    User,
    System,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ViewTurn {
    pub speaker: DialogueRole,
    pub text: String,
}

/// A dialogue as annotators see it: user turns and system replies only.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DialogueView {
    pub turns: Vec<ViewTurn>,
}

impl DialogueView {
    pub fn from_transcript(t: &Transcript, done_token: &str) -> Self {
        let mut turns = Vec::new();
        for turn in &t.turns {
            match (&turn.speaker, &turn.tool_call) {
                (Speaker::User, _) if turn.content.trim() != done_token => {
                    turns.push(ViewTurn { speaker: DialogueRole::User, text: turn.content.trim().into() })
                }
                (Speaker::DialogueSystem, Some(call)) if call.function == FunctionName::Followup => {
                    if let Some(msg) = call.str_arg("message") {
                        turns.push(ViewTurn { speaker: DialogueRole::System, text: msg.trim().into() });
                    }
                }
                _ => {}
            }
        }
        Self { turns }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SessionPair {
    pub pair_id: String,
    pub generated: DialogueView,
    pub ground_truth: DialogueView,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Session {
    pub seed: u64,
    pub pairs: Vec<SessionPair>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Side {
    Left,
    Right,
}

/// Where the generated dialogue is shown, per pair.
pub type SideMap = BTreeMap<String, Side>;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct JudgmentRecord {
    pub pair_id: String,
    pub choice: Side,
    pub preferred: Preference,
}

#[derive(Debug, thiserror::Error)]
pub enum AnnotationError {
    #[error("{path}: {message}")]
    Io { path: PathBuf, message: String },
    #[error("invalid session: {0}")]
    Session(String),
}

fn io_err(path: &Path) -> impl Fn(std::io::Error) -> AnnotationError + '_ {
    move |e| AnnotationError::Io { path: path.into(), message: e.to_string() }
}

pub fn draw_sides(session: &Session) -> SideMap {
    let mut rng = ChaCha8Rng::seed_from_u64(session.seed);
    session
        .pairs
        .iter()
        .map(|p| (p.pair_id.clone(), if rng.random_bool(0.5) { Side::Left } else { Side::Right }))
        .collect()
}

/// Loads valid lines of the judgment log. A torn last line (no trailing
/// newline, from a crash mid-append) is dropped and truncated away.
fn load_log(path: &Path) -> Result<Vec<JudgmentRecord>, AnnotationError> {
    let text = match std::fs::read_to_string(path) {
        Ok(t) => t,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(Vec::new()),
        Err(e) => return Err(io_err(path)(e)),
    };
    let complete = match text.rfind('\n') {
        Some(i) => &text[..=i],
        None => "",
    };
    if complete.len() != text.len() {
        tracing::warn!(path = %path.display(), "dropping torn last line of judgment log");
        std::fs::write(path, complete).map_err(io_err(path))?;
    }
    complete
        .lines()
        .filter(|l| !l.trim().is_empty())
        .enumerate()
        .map(|(i, l)| {
            serde_json::from_str(l)
                .map_err(|e| AnnotationError::Io { path: path.into(), message: format!("line {}: {e}", i + 1) })
        })
        .collect()
}

struct Inner {
    session: Session,
    sides: SideMap,
    log_path: PathBuf,
    judged: BTreeMap<String, Preference>,
}

#[derive(Clone)]
pub struct AnnotationState {
    inner: Arc<Mutex<Inner>>,
}

impl AnnotationState {
    /// Opens (or resumes) a session whose state lives in `state_dir`.
    pub fn open(session: Session, state_dir: &Path) -> Result<Self, AnnotationError> {
        let ids: BTreeSet<&str> = session.pairs.iter().map(|p| p.pair_id.as_str()).collect();
        if ids.len() != session.pairs.len() {
            return Err(AnnotationError::Session("pair ids are not unique".into()));
        }
        if session.pairs.is_empty() {
            return Err(AnnotationError::Session("no pairs".into()));
        }
        std::fs::create_dir_all(state_dir).map_err(io_err(state_dir))?;
        let sides_path = state_dir.join("sides.json");
        let sides: SideMap = match std::fs::read_to_string(&sides_path) {
            Ok(text) => serde_json::from_str(&text)
                .map_err(|e| AnnotationError::Io { path: sides_path.clone(), message: e.to_string() })?,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => {
                let sides = draw_sides(&session);
                let text = serde_json::to_string_pretty(&sides).expect("side map serializes");
                std::fs::write(&sides_path, text + "\n").map_err(io_err(&sides_path))?;
                sides
            }
            Err(e) => return Err(io_err(&sides_path)(e)),
        };
        if sides.keys().map(String::as_str).collect::<BTreeSet<_>>() != ids {
            return Err(AnnotationError::Session(format!(
                "{} does not match the session's pairs",
                sides_path.display()
            )));
        }
        let log_path = state_dir.join("judgments.jsonl");
        let mut judged = BTreeMap::new();
        for r in load_log(&log_path)? {
            if !ids.contains(r.pair_id.as_str()) || judged.insert(r.pair_id.clone(), r.preferred).is_some() {
                return Err(AnnotationError::Session(format!("log entry for `{}` is unknown or repeated", r.pair_id)));
            }
        }
        Ok(Self { inner: Arc::new(Mutex::new(Inner { session, sides, log_path, judged })) })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairView {
    pub pair_id: String,
    /// 1-based position of this pair in the session.
    pub position: usize,
    pub total: usize,
    pub instructions: String,
    pub left: DialogueView,
    pub right: DialogueView,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Progress {
    pub judged: usize,
    pub total: usize,
    pub remaining: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct JudgmentRequest {
    pub pair_id: String,
    pub choice: Side,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JudgmentAck {
    pub pair_id: String,
    pub progress: Progress,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RateView {
    pub judged: usize,
    pub total: usize,
    pub generated_preferred: usize,
    /// `generated_preferred / judged`; null before the first judgment.
    pub tt_rate: Option<f64>,
    pub exact: Option<String>,
    pub complete: bool,
}

#[derive(Debug, Serialize)]
struct ApiError {
    error: String,
}

fn api_error(status: StatusCode, error: impl Into<String>) -> Response {
    (status, Json(ApiError { error: error.into() })).into_response()
}

impl Inner {
    fn progress(&self) -> Progress {
        let total = self.session.pairs.len();
        Progress { judged: self.judged.len(), total, remaining: total - self.judged.len() }
    }
}

async fn next_pair(State(state): State<AnnotationState>) -> Response {
    let inner = state.inner.lock().await;
    let total = inner.session.pairs.len();
    let Some((position, pair)) =
        inner.session.pairs.iter().enumerate().find(|(_, p)| !inner.judged.contains_key(&p.pair_id))
    else {
        return StatusCode::NO_CONTENT.into_response();
    };
    let (left, right) = match inner.sides[&pair.pair_id] {
        Side::Left => (pair.generated.clone(), pair.ground_truth.clone()),
        Side::Right => (pair.ground_truth.clone(), pair.generated.clone()),
    };
    Json(PairView {
        pair_id: pair.pair_id.clone(),
        position: position + 1,
        total,
        instructions: INSTRUCTIONS.into(),
        left,
        right,
    })
    .into_response()
}

async fn post_judgment(State(state): State<AnnotationState>, Json(req): Json<JudgmentRequest>) -> Response {
    // one writer at a time: the lock covers the check, the append and the update
    let mut inner = state.inner.lock().await;
    let Some(&generated_side) = inner.sides.get(&req.pair_id) else {
        return api_error(StatusCode::NOT_FOUND, format!("unknown pair `{}`", req.pair_id));
    };
    if inner.judged.contains_key(&req.pair_id) {
        return api_error(StatusCode::CONFLICT, format!("pair `{}` is already judged", req.pair_id));
    }
    let preferred = if req.choice == generated_side { Preference::Generated } else { Preference::GroundTruth };
    let record = JudgmentRecord { pair_id: req.pair_id.clone(), choice: req.choice, preferred };
    let line = serde_json::to_string(&record).expect("record serializes") + "\n";
    let appended = std::fs::OpenOptions::new()
        .create(true)
        .append(true)
        .open(&inner.log_path)
        .and_then(|mut f| {
            f.write_all(line.as_bytes())?;
            f.sync_data()
        });
    if let Err(e) = appended {
        tracing::error!(error = %e, "could not append judgment");
        return api_error(StatusCode::INTERNAL_SERVER_ERROR, "judgment could not be stored");
    }
    inner.judged.insert(req.pair_id.clone(), preferred);
    let ack = JudgmentAck { pair_id: req.pair_id, progress: inner.progress() };
    (StatusCode::CREATED, Json(ack)).into_response()
}

async fn progress(State(state): State<AnnotationState>) -> Json<Progress> {
    Json(state.inner.lock().await.progress())
}

async fn tt_rate(State(state): State<AnnotationState>) -> Json<RateView> {
    let inner = state.inner.lock().await;
    let judgments: Vec<Judgment> = inner
        .judged
        .iter()
        .map(|(pair_id, preferred)| Judgment { pair_id: pair_id.clone(), preferred: *preferred })
        .collect();
    let exact: Option<Ratio<i64>> = turing_rate(&judgments).ok();
    let p = inner.progress();
    Json(RateView {
        judged: p.judged,
        total: p.total,
        generated_preferred: judgments.iter().filter(|j| j.preferred == Preference::Generated).count(),
        tt_rate: turing_rate::<f64>(&judgments).ok(),
        exact: exact.map(|r| r.to_string()),
        complete: p.remaining == 0,
    })
}

pub fn router(state: AnnotationState) -> Router {
    Router::new()
        .route("/api/next", get(next_pair))
        .route("/api/judgments", post(post_judgment))
        .route("/api/progress", get(progress))
        .route("/api/tt-rate", get(tt_rate))
        .with_state(state)
}

/// Rate straight from a judgment log file, without the server.
pub fn rate_from_log(path: &Path) -> Result<Option<f64>, AnnotationError> {
    let judgments: Vec<Judgment> = load_log(path)?
        .into_iter()
        .map(|r| Judgment { pair_id: r.pair_id, preferred: r.preferred })
        .collect();
    Ok(turing_rate::<f64>(&judgments).ok())
}

pub fn load_session(path: &Path) -> Result<Session, AnnotationError> {
    let text = std::fs::read_to_string(path).map_err(io_err(path))?;
    let de = &mut serde_json::Deserializer::from_str(&text);
    serde_path_to_error::deserialize(de)
        .map_err(|e| AnnotationError::Session(format!("{} at `{}`: {}", path.display(), e.path(), e.inner())))
}
