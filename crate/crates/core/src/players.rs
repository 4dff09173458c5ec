//! Players and prompt construction.
//!
//! A [`Player`] turns an incoming message into a reply. Three backends exist:
//! [`RemotePlayer`] talks to a chat-completions endpoint, [`ScriptedPlayer`]
//! replays a fixed list, and [`InteractivePlayer`] reads replies from a
//! terminal. Every backend keeps its own [`PlayerContext`] so token usage is
//! accounted the same way regardless of where replies come from.

use std::collections::{BTreeMap, VecDeque};
use std::io::{BufRead, Write};
use std::path::Path;
use std::sync::{Arc, OnceLock};
use std::time::Duration;

use async_trait::async_trait;
use regex::Regex;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::cost_model::{count_tokens, TokenUsage, WHITESPACE_TOKENIZER};
use crate::dialogue_systems::Architecture;
use crate::domain::{GenerationParams, Goal};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    System,
    User,
    Assistant,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChatMessage {
    pub role: Role,
    pub content: String,
}

impl ChatMessage {
    pub fn system(content: impl Into<String>) -> Self {
        Self { role: Role::System, content: content.into() }
    }

    pub fn user(content: impl Into<String>) -> Self {
        Self { role: Role::User, content: content.into() }
    }

    pub fn assistant(content: impl Into<String>) -> Self {
        Self { role: Role::Assistant, content: content.into() }
    }
}

/// Conversation state of one player. Always starts with exactly one system
/// message.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlayerContext {
    history: Vec<ChatMessage>,
    pub generation: GenerationParams,
}

impl PlayerContext {
    pub fn new(system: ChatMessage, generation: GenerationParams) -> Result<Self, PlayerError> {
        if system.role != Role::System || system.content.trim().is_empty() {
            return Err(PlayerError::InvalidContext("history must open with a non-empty system message".into()));
        }
        Ok(Self { history: vec![system], generation })
    }

    pub fn history(&self) -> &[ChatMessage] {
        &self.history
    }

    pub fn push(&mut self, message: ChatMessage) {
        debug_assert_ne!(message.role, Role::System);
        self.history.push(message);
    }

    pub fn token_count(&self) -> u64 {
        self.history.iter().map(|m| count_tokens(&m.content, WHITESPACE_TOKENIZER).unwrap_or(0)).sum()
    }
}

#[derive(Debug, thiserror::Error)]
pub enum PromptError {
    #[error("unresolved placeholder `{0}` after substitution")]
    Unresolved(String),
    #[error("cannot read template {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("goal text is empty")]
    EmptyGoal,
}

#[derive(Debug, thiserror::Error)]
pub enum PlayerError {
    #[error("transport failed after {attempts} attempt(s): {detail}")]
    Transport { attempts: u32, detail: String },
    #[error("endpoint returned HTTP {status}: {body}")]
    HttpStatus { status: u16, body: String },
    #[error("malformed endpoint response: {0}")]
    MalformedResponse(String),
    #[error("context of {tokens} tokens exceeds the limit of {limit}")]
    ContextOverflow { tokens: u64, limit: u64 },
    #[error("invalid player context: {0}")]
    InvalidContext(String),
    #[error("missing API token: environment variable `{0}` is not set")]
    MissingToken(String),
    #[error("terminal input failed: {0}")]
    Io(String),
    #[error(transparent)]
    Prompt(#[from] PromptError),
}

fn placeholder_regex() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"\$[A-Za-z_][A-Za-z0-9_]*").unwrap())
}

/// A prompt file with `$name` placeholders.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PromptTemplate {
    pub name: String,
    pub text: String,
}

impl PromptTemplate {
    pub fn new(name: impl Into<String>, text: impl Into<String>) -> Self {
        Self { name: name.into(), text: text.into() }
    }

    pub fn load(path: &Path) -> Result<Self, PromptError> {
        let text = std::fs::read_to_string(path)
            .map_err(|source| PromptError::Io { path: path.display().to_string(), source })?;
        let name = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
        Ok(Self::new(name, text))
    }

    pub fn placeholders(&self) -> Vec<String> {
        placeholder_regex().find_iter(&self.text).map(|m| m.as_str().to_string()).collect()
    }

    /// Substitutes every `(name, value)` pair in one pass, so values that
    /// happen to contain `$` are never re-expanded.
    pub fn render(&self, vars: &[(&str, &str)]) -> Result<String, PromptError> {
        let mut unresolved = None;
        let out = placeholder_regex().replace_all(&self.text, |caps: &regex::Captures<'_>| {
            let key = &caps[0][1..];
            match vars.iter().find(|(k, _)| *k == key) {
                Some((_, v)) => v.to_string(),
                None => {
                    unresolved.get_or_insert_with(|| caps[0].to_string());
                    caps[0].to_string()
                }
            }
        });
        match unresolved {
            Some(p) => Err(PromptError::Unresolved(p)),
            None => Ok(out.into_owned()),
        }
    }
}

/// Placeholder carrying the user's utterance in dialogue-system templates.
pub const UTTERANCE_PLACEHOLDER: &str = "USER_SIMULATOR_UTTERANCE";

/// The seven prompt templates the engine uses.
#[derive(Debug, Clone)]
pub struct TemplateSet {
    pub user_simulator: PromptTemplate,
    pub monolithic: PromptTemplate,
    pub manager: PromptTemplate,
    pub intent_detection: PromptTemplate,
    pub slot_extraction: PromptTemplate,
    pub response_generation: PromptTemplate,
    pub judge: PromptTemplate,
}

impl TemplateSet {
    pub const FILES: [&'static str; 7] = [
        "user_simulator",
        "monolithic",
        "modular_llm_manager",
        "intent_detection",
        "slot_extraction",
        "response_generation",
        "dialogue_quality_judge",
    ];

    pub fn builtin() -> &'static TemplateSet {
        static SET: OnceLock<TemplateSet> = OnceLock::new();
        SET.get_or_init(|| TemplateSet {
            user_simulator: PromptTemplate::new("user_simulator", include_str!("../data/templates/user_simulator.txt")),
            monolithic: PromptTemplate::new("monolithic", include_str!("../data/templates/monolithic.txt")),
            manager: PromptTemplate::new(
                "modular_llm_manager",
                include_str!("../data/templates/modular_llm_manager.txt"),
            ),
            intent_detection: PromptTemplate::new(
                "intent_detection",
                include_str!("../data/templates/intent_detection.txt"),
            ),
            slot_extraction: PromptTemplate::new(
                "slot_extraction",
                include_str!("../data/templates/slot_extraction.txt"),
            ),
            response_generation: PromptTemplate::new(
                "response_generation",
                include_str!("../data/templates/response_generation.txt"),
            ),
            judge: PromptTemplate::new(
                "dialogue_quality_judge",
                include_str!("../data/templates/dialogue_quality_judge.txt"),
            ),
        })
    }

    /// Loads `<name>.txt` for every entry of [`Self::FILES`] from `dir`.
    pub fn load_dir(dir: &Path) -> Result<TemplateSet, PromptError> {
        let load = |name: &str| PromptTemplate::load(&dir.join(format!("{name}.txt")));
        Ok(TemplateSet {
            user_simulator: load("user_simulator")?,
            monolithic: load("monolithic")?,
            manager: load("modular_llm_manager")?,
            intent_detection: load("intent_detection")?,
            slot_extraction: load("slot_extraction")?,
            response_generation: load("response_generation")?,
            judge: load("dialogue_quality_judge")?,
        })
    }
}

pub fn build_user_sim_prompt(goal: &Goal) -> Result<ChatMessage, PromptError> {
    build_user_sim_prompt_with(TemplateSet::builtin(), goal)
}

pub fn build_user_sim_prompt_with(templates: &TemplateSet, goal: &Goal) -> Result<ChatMessage, PromptError> {
    if goal.text().trim().is_empty() {
        return Err(PromptError::EmptyGoal);
    }
    Ok(ChatMessage::system(templates.user_simulator.render(&[("goal", goal.text())])?))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SystemRole {
    Monolithic,
    Manager,
    Intent,
    Slots,
    Response,
}

/// System prompts per role. The utterance placeholder is rendered empty: the
/// user's words arrive as the following user message.
pub fn build_system_prompts(architecture: Architecture) -> BTreeMap<SystemRole, ChatMessage> {
    build_system_prompts_with(TemplateSet::builtin(), architecture).expect("builtin templates render")
}

pub fn build_system_prompts_with(
    templates: &TemplateSet,
    architecture: Architecture,
) -> Result<BTreeMap<SystemRole, ChatMessage>, PromptError> {
    let render = |t: &PromptTemplate| -> Result<ChatMessage, PromptError> {
        let text = t.render(&[(UTTERANCE_PLACEHOLDER, "")])?;
        Ok(ChatMessage::system(text.trim_end().to_string() + "\n"))
    };
    let mut prompts = BTreeMap::new();
    let modules = |prompts: &mut BTreeMap<SystemRole, ChatMessage>| -> Result<(), PromptError> {
        prompts.insert(SystemRole::Intent, render(&templates.intent_detection)?);
        prompts.insert(SystemRole::Slots, render(&templates.slot_extraction)?);
        prompts.insert(SystemRole::Response, render(&templates.response_generation)?);
        Ok(())
    };
    match architecture {
        Architecture::Monolithic => {
            prompts.insert(SystemRole::Monolithic, render(&templates.monolithic)?);
        }
        Architecture::ModularProg => modules(&mut prompts)?,
        Architecture::ModularLlm => {
            prompts.insert(SystemRole::Manager, render(&templates.manager)?);
            modules(&mut prompts)?;
        }
    }
    Ok(prompts)
}

#[async_trait]
pub trait Player: Send {
    /// Produces the next reply. `incoming` is `None` when the player opens
    /// the conversation.
    async fn respond(&mut self, incoming: Option<&str>) -> Result<String, PlayerError>;

    fn usage(&self) -> TokenUsage {
        TokenUsage::default()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScriptRole {
    UserSimulator,
    DialogueSystem,
}

/// Returned by an exhausted dialogue-system script. It is not JSON, so the
/// Game Master aborts the dialogue instead of silently continuing.
pub const EXHAUSTED_SYSTEM_SENTINEL: &str = "<<scripted dialogue system exhausted>>";

#[derive(Debug, Clone)]
pub struct ScriptedPlayer {
    script: VecDeque<String>,
    role: ScriptRole,
    done_token: String,
    context: Option<PlayerContext>,
    usage: TokenUsage,
}

impl ScriptedPlayer {
    pub fn new<I, S>(role: ScriptRole, script: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        Self {
            script: script.into_iter().map(Into::into).collect(),
            role,
            done_token: "DONE".into(),
            context: None,
            usage: TokenUsage::default(),
        }
    }

    pub fn user<I: IntoIterator<Item = S>, S: Into<String>>(script: I) -> Self {
        Self::new(ScriptRole::UserSimulator, script)
    }

    pub fn system<I: IntoIterator<Item = S>, S: Into<String>>(script: I) -> Self {
        Self::new(ScriptRole::DialogueSystem, script)
    }

    pub fn with_done_token(mut self, token: &str) -> Self {
        self.done_token = token.to_string();
        self
    }

    /// Keeps a conversation history so token usage mirrors a remote player.
    pub fn with_context(mut self, context: PlayerContext) -> Self {
        self.context = Some(context);
        self
    }

    pub fn remaining(&self) -> usize {
        self.script.len()
    }

    pub fn scripted_respond(&mut self) -> String {
        match self.script.pop_front() {
            Some(line) => line,
            None => match self.role {
                ScriptRole::UserSimulator => self.done_token.clone(),
                ScriptRole::DialogueSystem => EXHAUSTED_SYSTEM_SENTINEL.to_string(),
            },
        }
    }
}

#[async_trait]
impl Player for ScriptedPlayer {
    async fn respond(&mut self, incoming: Option<&str>) -> Result<String, PlayerError> {
        if let (Some(ctx), Some(msg)) = (self.context.as_mut(), incoming) {
            ctx.push(ChatMessage::user(msg));
        }
        let prompt_tokens = match &self.context {
            Some(ctx) => ctx.token_count(),
            None => incoming.map(|m| count_tokens(m, WHITESPACE_TOKENIZER).unwrap_or(0)).unwrap_or(0),
        };
        let reply = self.scripted_respond();
        self.usage.record(prompt_tokens, count_tokens(&reply, WHITESPACE_TOKENIZER).unwrap_or(0));
        if let Some(ctx) = self.context.as_mut() {
            ctx.push(ChatMessage::assistant(reply.clone()));
        }
        Ok(reply)
    }

    fn usage(&self) -> TokenUsage {
        self.usage
    }
}

/// Connection settings for a chat-completions endpoint.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EndpointConfig {
    /// Base URL; `/chat/completions` is appended.
    pub base_url: String,
    pub model: String,
    /// Name of the environment variable holding the bearer token.
    #[serde(default)]
    pub api_key_env: Option<String>,
    #[serde(default = "default_retries")]
    pub max_retries: u32,
    #[serde(default = "default_backoff_ms")]
    pub backoff_ms: u64,
    #[serde(default = "default_timeout_s")]
    pub timeout_s: u64,
    #[serde(default)]
    pub max_context_tokens: Option<u64>,
    /// Send the tool schemas in the request's `tools` field.
    #[serde(default)]
    pub send_tools: bool,
}

fn default_retries() -> u32 {
    2
}

fn default_backoff_ms() -> u64 {
    500
}

fn default_timeout_s() -> u64 {
    120
}

impl EndpointConfig {
    pub fn new(base_url: &str, model: &str) -> Self {
        Self {
            base_url: base_url.to_string(),
            model: model.to_string(),
            api_key_env: None,
            max_retries: default_retries(),
            backoff_ms: default_backoff_ms(),
            timeout_s: default_timeout_s(),
            max_context_tokens: None,
            send_tools: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ChatReply {
    pub text: String,
    /// `(prompt, completion)` tokens when the endpoint reports them.
    pub usage: Option<(u64, u64)>,
}

/// Shareable HTTP client bound to one endpoint.
#[derive(Debug, Clone)]
pub struct ChatClient {
    http: reqwest::Client,
    config: EndpointConfig,
    token: Option<String>,
}

impl ChatClient {
    pub fn new(config: EndpointConfig) -> Result<Self, PlayerError> {
        let token = match &config.api_key_env {
            Some(var) => Some(std::env::var(var).map_err(|_| PlayerError::MissingToken(var.clone()))?),
            None => None,
        };
        let http = reqwest::Client::builder()
            .timeout(Duration::from_secs(config.timeout_s))
            .build()
            .map_err(|e| PlayerError::Transport { attempts: 0, detail: e.to_string() })?;
        Ok(Self { http, config, token })
    }

    pub fn config(&self) -> &EndpointConfig {
        &self.config
    }

    pub fn request_body(&self, context: &PlayerContext, tools: Option<&[Value]>) -> Value {
        let mut body = json!({
            "model": self.config.model,
            "messages": context.history(),
            "temperature": context.generation.temperature,
            "max_tokens": context.generation.max_new_tokens,
        });
        if let Some(tools) = tools.filter(|t| !t.is_empty()) {
            body["tools"] = Value::Array(tools.to_vec());
        }
        body
    }

    fn endpoint(&self) -> String {
        format!("{}/chat/completions", self.config.base_url.trim_end_matches('/'))
    }
}

fn retryable_status(status: u16) -> bool {
    matches!(status, 408 | 429 | 500..=599)
}

/// Renders native `tool_calls` into the textual envelope the parser expects.
/// Several calls become several lines, which the parser rejects as
/// `multiple_calls`.
fn tool_calls_to_text(calls: &[Value]) -> Result<String, PlayerError> {
    let mut lines = Vec::with_capacity(calls.len());
    for call in calls {
        let function = call.get("function").ok_or_else(|| {
            PlayerError::MalformedResponse("tool call without `function`".into())
        })?;
        let name = function.get("name").cloned().unwrap_or(Value::Null);
        let arguments = match function.get("arguments") {
            Some(Value::String(s)) => serde_json::from_str(s).unwrap_or(Value::String(s.clone())),
            Some(v) => v.clone(),
            None => Value::Null,
        };
        lines.push(json!({ "name": name, "arguments": arguments }).to_string());
    }
    Ok(lines.join("\n"))
}

fn parse_reply(body: &Value) -> Result<ChatReply, PlayerError> {
    let message = body
        .pointer("/choices/0/message")
        .ok_or_else(|| PlayerError::MalformedResponse("no choices[0].message".into()))?;
    let text = match message.get("tool_calls").and_then(Value::as_array) {
        Some(calls) if !calls.is_empty() => tool_calls_to_text(calls)?,
        _ => match message.get("content") {
            Some(Value::String(s)) => s.clone(),
            _ => return Err(PlayerError::MalformedResponse("message has no text content".into())),
        },
    };
    let usage = body.get("usage").and_then(|u| {
        Some((u.get("prompt_tokens")?.as_u64()?, u.get("completion_tokens")?.as_u64()?))
    });
    Ok(ChatReply { text, usage })
}

/// Sends `context` to the endpoint and returns the assistant reply.
///
/// Connection failures and 408/429/5xx responses are retried up to
/// `max_retries` times with exponential backoff; other statuses fail at once.
/// The context is only read, appending the reply is the caller's job.
pub async fn remote_chat(
    client: &ChatClient,
    context: &PlayerContext,
    tools: Option<&[Value]>,
) -> Result<ChatReply, PlayerError> {
    if let Some(limit) = client.config.max_context_tokens {
        let tokens = context.token_count();
        if tokens > limit {
            return Err(PlayerError::ContextOverflow { tokens, limit });
        }
    }
    let body = client.request_body(context, tools);
    let url = client.endpoint();
    let attempts = client.config.max_retries + 1;
    let mut last_error = String::new();
    for attempt in 0..attempts {
        if attempt > 0 {
            let delay = client.config.backoff_ms.saturating_mul(1 << (attempt - 1).min(16));
            tokio::time::sleep(Duration::from_millis(delay)).await;
        }
        let mut request = client.http.post(&url).json(&body);
        if let Some(token) = &client.token {
            request = request.bearer_auth(token);
        }
        let response = match request.send().await {
            Ok(r) => r,
            Err(e) => {
                tracing::debug!(attempt, error = %e, "chat request failed");
                last_error = e.to_string();
                continue;
            }
        };
        let status = response.status().as_u16();
        if retryable_status(status) {
            last_error = format!("HTTP {status}");
            tracing::debug!(attempt, status, "retryable status");
            continue;
        }
        let text = response.text().await.map_err(|e| PlayerError::MalformedResponse(e.to_string()))?;
        if !(200..300).contains(&status) {
            return Err(PlayerError::HttpStatus { status, body: text });
        }
        let json: Value = serde_json::from_str(&text).map_err(|e| PlayerError::MalformedResponse(e.to_string()))?;
        return parse_reply(&json);
    }
    Err(PlayerError::Transport { attempts, detail: last_error })
}

/// A player backed by a remote chat model.
pub struct RemotePlayer {
    client: Arc<ChatClient>,
    context: PlayerContext,
    tools: Option<Vec<Value>>,
    usage: TokenUsage,
}

impl RemotePlayer {
    pub fn new(client: Arc<ChatClient>, context: PlayerContext) -> Self {
        Self { client, context, tools: None, usage: TokenUsage::default() }
    }

    pub fn with_tools(mut self, tools: Vec<Value>) -> Self {
        self.tools = Some(tools);
        self
    }

    pub fn context(&self) -> &PlayerContext {
        &self.context
    }
}

#[async_trait]
impl Player for RemotePlayer {
    async fn respond(&mut self, incoming: Option<&str>) -> Result<String, PlayerError> {
        if let Some(msg) = incoming {
            self.context.push(ChatMessage::user(msg));
        }
        let tools = if self.client.config.send_tools { self.tools.as_deref() } else { None };
        let reply = remote_chat(&self.client, &self.context, tools).await?;
        let (p, r) = reply.usage.unwrap_or_else(|| {
            (self.context.token_count(), count_tokens(&reply.text, WHITESPACE_TOKENIZER).unwrap_or(0))
        });
        self.usage.record(p, r);
        self.context.push(ChatMessage::assistant(reply.text.clone()));
        Ok(reply.text)
    }

    fn usage(&self) -> TokenUsage {
        self.usage
    }
}

/// Debugging aid: a human types the replies.
pub struct InteractivePlayer<R, W> {
    input: R,
    output: W,
    label: String,
}

impl<R: BufRead + Send, W: Write + Send> InteractivePlayer<R, W> {
    pub fn new(input: R, output: W, label: &str) -> Self {
        Self { input, output, label: label.to_string() }
    }
}

#[async_trait]
impl<R: BufRead + Send, W: Write + Send> Player for InteractivePlayer<R, W> {
    async fn respond(&mut self, incoming: Option<&str>) -> Result<String, PlayerError> {
        let io = |e: std::io::Error| PlayerError::Io(e.to_string());
        if let Some(msg) = incoming {
            writeln!(self.output, "{msg}").map_err(io)?;
        }
        write!(self.output, "{}> ", self.label).map_err(io)?;
        self.output.flush().map_err(io)?;
        let mut line = String::new();
        if self.input.read_line(&mut line).map_err(io)? == 0 {
            return Err(PlayerError::Io("input closed".into()));
        }
        Ok(line.trim_end_matches(['\r', '\n']).to_string())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::{Domain, DomainSpec, Provenance};

    fn goal(text: &str) -> Goal {
        Goal::new("g", vec![DomainSpec::new(Domain::Hotel)], text, Provenance::SyntheticMultiwozStyle).unwrap()
    }

    #[test]
    fn user_prompt_substitutes_goal() {
        let msg = build_user_sim_prompt(&goal("book a cheap hotel")).unwrap();
        assert_eq!(msg.role, Role::System);
        assert!(msg.content.contains("book a cheap hotel"));
        assert!(msg.content.contains("reply with \"DONE\""));
        assert!(!msg.content.contains("$goal"));
        let msg = build_user_sim_prompt(&goal("stay at the gonville hotel")).unwrap();
        assert!(msg.content.contains("stay at the gonville hotel"));
    }

    #[test]
    fn goal_text_with_dollar_is_not_reexpanded() {
        let msg = build_user_sim_prompt(&goal("budget is $goal or less")).unwrap();
        assert!(msg.content.contains("budget is $goal or less"));
    }

    #[test]
    fn render_reports_unresolved() {
        let t = PromptTemplate::new("t", "hello $name and $other");
        assert!(matches!(t.render(&[("name", "x")]), Err(PromptError::Unresolved(p)) if p == "$other"));
        assert_eq!(t.render(&[("name", "x"), ("other", "y")]).unwrap(), "hello x and y");
    }

    #[test]
    fn system_prompt_sets() {
        assert_eq!(build_system_prompts(Architecture::Monolithic).len(), 1);
        let prog = build_system_prompts(Architecture::ModularProg);
        assert_eq!(prog.keys().copied().collect::<Vec<_>>(), [SystemRole::Intent, SystemRole::Slots, SystemRole::Response]);
        let llm = build_system_prompts(Architecture::ModularLlm);
        assert_eq!(llm.len(), 4);
        assert!(llm[&SystemRole::Manager].content.contains("processnextsubsystem"));
        assert!(llm[&SystemRole::Intent].content.contains("booking-request"));
        for msg in llm.values().chain(prog.values()) {
            assert!(!placeholder_regex().is_match(&msg.content));
        }
    }

    #[test]
    fn context_requires_system_message() {
        assert!(PlayerContext::new(ChatMessage::user("hi"), GenerationParams::default()).is_err());
        assert!(PlayerContext::new(ChatMessage::system(" "), GenerationParams::default()).is_err());
        assert!(PlayerContext::new(ChatMessage::system("s"), GenerationParams::default()).is_ok());
    }

    #[tokio::test]
    async fn scripted_player_order_and_exhaustion() {
        let mut user = ScriptedPlayer::user(["hi", "DONE"]);
        assert_eq!(user.respond(None).await.unwrap(), "hi");
        assert_eq!(user.respond(Some("x")).await.unwrap(), "DONE");
        assert_eq!(user.respond(Some("x")).await.unwrap(), "DONE");
        let mut system = ScriptedPlayer::system(Vec::<String>::new());
        let out = system.respond(Some("x")).await.unwrap();
        assert_eq!(out, EXHAUSTED_SYSTEM_SENTINEL);
        assert!(crate::tool_schema::parse_tool_call(&out).is_err());
    }

    #[tokio::test]
    async fn interactive_player_reads_lines() {
        let input = std::io::Cursor::new(b"hello there\n".to_vec());
        let mut out = Vec::new();
        let mut p = InteractivePlayer::new(input, &mut out, "user");
        assert_eq!(p.respond(Some("how can I help?")).await.unwrap(), "hello there");
        assert!(p.respond(None).await.is_err());
    }

    #[test]
    fn reply_parsing() {
        let body = json!({"choices":[{"message":{"role":"assistant","content":"hi"}}],
                          "usage":{"prompt_tokens":10,"completion_tokens":2}});
        assert_eq!(parse_reply(&body).unwrap(), ChatReply { text: "hi".into(), usage: Some((10, 2)) });
        let body = json!({"choices":[{"message":{"tool_calls":[
            {"function":{"name":"followup","arguments":"{\"message\":\"a\"}"}},
            {"function":{"name":"followup","arguments":"{\"message\":\"b\"}"}}]}}]});
        let text = parse_reply(&body).unwrap().text;
        assert_eq!(
            crate::tool_schema::parse_tool_call(&text).unwrap_err().kind,
            crate::tool_schema::ViolationKind::MultipleCalls
        );
        assert!(parse_reply(&json!({"choices":[]})).is_err());
    }
}
