//! The three dialogue-system architectures.
//!
//! A [`DialogueSystem`] is driven by the Game Master one emission at a time:
//! it receives a user utterance, a tool result or a subsystem routing
//! directive and answers with one raw emission. The Game Master parses and
//! executes that emission, so every architecture goes through the same
//! schema check.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use async_trait::async_trait;
use serde::{Deserialize, Serialize};
use serde_json::{json, Map, Value};

use crate::domain::{Domain, FunctionName, ToolCall};
use crate::players::{Player, PlayerError};
use crate::tool_schema::{
    parse_subsystem_call, parse_tool_call, schema, subsystem_schemas, FormatViolation, ParamKind, ViolationKind,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Architecture {
    Monolithic,
    ModularProg,
    ModularLlm,
}

impl Architecture {
    pub const ALL: [Architecture; 3] = [Architecture::Monolithic, Architecture::ModularProg, Architecture::ModularLlm];

    pub fn as_str(self) -> &'static str {
        match self {
            Architecture::Monolithic => "monolithic",
            Architecture::ModularProg => "modular_prog",
            Architecture::ModularLlm => "modular_llm",
        }
    }

    /// Only the LLM-managed pipeline may route between subsystems.
    pub fn allows(self, function: FunctionName) -> bool {
        function != FunctionName::Processnextsubsystem || self == Architecture::ModularLlm
    }

    /// Tool schemas offered to this architecture's top-level model.
    pub fn tool_documents(self) -> Vec<Value> {
        FunctionName::ALL.iter().filter(|f| self.allows(**f)).map(|f| schema(*f).to_document()).collect()
    }
}

impl fmt::Display for Architecture {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Architecture {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Architecture::ALL
            .into_iter()
            .find(|a| a.as_str() == s)
            .ok_or_else(|| format!("unknown architecture `{s}`"))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Intent {
    BookingRequest,
    BookingSuccess,
    BookingFailure,
    DbretrievalRequest,
    DbretrievalSuccess,
    DbretrievalFailure,
    DetectionUnknown,
}

impl Intent {
    pub const ALL: [Intent; 7] = [
        Intent::BookingRequest,
        Intent::BookingSuccess,
        Intent::BookingFailure,
        Intent::DbretrievalRequest,
        Intent::DbretrievalSuccess,
        Intent::DbretrievalFailure,
        Intent::DetectionUnknown,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Intent::BookingRequest => "booking-request",
            Intent::BookingSuccess => "booking-success",
            Intent::BookingFailure => "booking-failure",
            Intent::DbretrievalRequest => "dbretrieval-request",
            Intent::DbretrievalSuccess => "dbretrieval-success",
            Intent::DbretrievalFailure => "dbretrieval-failure",
            Intent::DetectionUnknown => "detection-unknown",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Intent::ALL.into_iter().find(|i| i.as_str() == s)
    }
}

/// Output of one pipeline sub-module.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SubsystemOutput {
    /// `domain` is `None` for "donotcare".
    Intent { intent: Intent, domain: Option<Domain> },
    /// Empty values reset the slot.
    Slots { slots: BTreeMap<String, String> },
    Response { message: String },
}

/// Accumulated understanding of the dialogue in the modular pipelines.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct DialogueState {
    /// Slots extracted before any domain was detected.
    pub general: BTreeMap<String, String>,
    pub slots: BTreeMap<Domain, BTreeMap<String, String>>,
    pub domain: Option<Domain>,
    pub last_intent: Option<Intent>,
    /// Tool results of the current turn.
    pub pending_results: Vec<Value>,
}

impl DialogueState {
    /// Later values overwrite earlier ones; an empty value deletes the slot.
    pub fn merge(&mut self, update: &BTreeMap<String, String>) {
        let target = match self.domain {
            Some(d) => self.slots.entry(d).or_default(),
            None => &mut self.general,
        };
        for (slot, value) in update {
            if value.trim().is_empty() {
                target.remove(slot);
            } else {
                target.insert(slot.clone(), value.trim().to_string());
            }
        }
    }

    pub fn record_intent(&mut self, intent: Intent, domain: Option<Domain>) {
        self.last_intent = Some(intent);
        if let Some(d) = domain {
            if self.domain != Some(d) {
                let carried = std::mem::take(&mut self.general);
                let slots = self.slots.entry(d).or_default();
                for (k, v) in carried {
                    slots.entry(k).or_insert(v);
                }
            }
            self.domain = Some(d);
        }
    }

    pub fn current_slots(&self) -> BTreeMap<String, String> {
        let mut merged = self.general.clone();
        if let Some(d) = self.domain {
            merged.extend(self.slots.get(&d).cloned().unwrap_or_default());
        }
        merged
    }

    pub fn apply(&mut self, output: &SubsystemOutput) {
        match output {
            SubsystemOutput::Intent { intent, domain } => self.record_intent(*intent, *domain),
            SubsystemOutput::Slots { slots } => self.merge(slots),
            SubsystemOutput::Response { .. } => {}
        }
    }
}

/// What the programmatic manager does after intent and slot extraction.
#[derive(Debug, Clone, PartialEq)]
pub enum Action {
    Query(ToolCall),
    Book(ToolCall),
    None,
}

fn query_operator(column: &str) -> &'static str {
    match column {
        "leaveat" => ">=",
        "arriveby" => "<=",
        _ => "=",
    }
}

/// Arguments for `function` built from `slots`. Slots the schema does not
/// know, and values it would reject, are left out.
fn arguments_for(function: FunctionName, slots: &BTreeMap<String, String>) -> Map<String, Value> {
    let schema = schema(function);
    let mut args = Map::new();
    for (name, spec) in &schema.parameters {
        let Some(value) = slots.get(name) else {
            continue;
        };
        let arg = match &spec.kind {
            ParamKind::OperatorObject { .. } => json!({ "operator": query_operator(name), "value": value }),
            _ => Value::String(value.clone()),
        };
        if spec.check(name, &arg).is_ok() {
            args.insert(name.clone(), arg);
        }
    }
    args
}

/// The programmatic action rule. Retrieval requests query with the current
/// slots; booking requests validate once every required booking argument is
/// available; anything else waits for the response generator.
pub fn select_action(intent: Intent, domain: Option<Domain>, slots: &BTreeMap<String, String>) -> Action {
    let Some(domain) = domain else {
        return Action::None;
    };
    match intent {
        Intent::DbretrievalRequest => {
            let function = FunctionName::retrieval_for(domain);
            Action::Query(ToolCall::new(function, arguments_for(function, slots)))
        }
        Intent::BookingRequest => {
            let function = FunctionName::booking_for(domain);
            let args = arguments_for(function, slots);
            if schema(function).required.iter().all(|r| args.contains_key(r)) {
                Action::Book(ToolCall::new(function, args))
            } else {
                Action::None
            }
        }
        _ => Action::None,
    }
}

/// Input the Game Master hands to a dialogue system.
#[derive(Debug, Clone, PartialEq)]
pub enum SystemInput {
    User(String),
    ToolResult(Value),
    Subsystem { name: String, input: Option<String> },
}

/// One emission plus the sub-module exchanges that led to it.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct SystemStep {
    pub raw: String,
    /// `(sub-module, raw output)` in call order.
    pub subsystem_turns: Vec<(String, String)>,
}

impl SystemStep {
    fn emission(raw: String) -> Self {
        Self { raw, subsystem_turns: Vec::new() }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum SystemError {
    /// A sub-module broke its schema. The exchanges so far are kept so the
    /// transcript can show them.
    #[error("sub-module `{subsystem}` output is invalid: {violation}")]
    Subsystem { subsystem: String, violation: FormatViolation, turns: Vec<(String, String)> },
    #[error(transparent)]
    Player(#[from] PlayerError),
}

#[async_trait]
pub trait DialogueSystem: Send {
    fn architecture(&self) -> Architecture;

    async fn step(&mut self, input: SystemInput) -> Result<SystemStep, SystemError>;

    /// Token usage of every model behind this system.
    fn usage(&self) -> crate::cost_model::TokenUsage;
}

fn tool_result_message(payload: &Value) -> String {
    payload.to_string()
}

/// One model handles understanding, tool use and replies.
pub struct Monolithic {
    player: Box<dyn Player>,
}

impl Monolithic {
    pub fn new(player: Box<dyn Player>) -> Self {
        Self { player }
    }
}

#[async_trait]
impl DialogueSystem for Monolithic {
    fn architecture(&self) -> Architecture {
        Architecture::Monolithic
    }

    async fn step(&mut self, input: SystemInput) -> Result<SystemStep, SystemError> {
        let message = match input {
            SystemInput::User(text) => text,
            SystemInput::ToolResult(payload) => tool_result_message(&payload),
            SystemInput::Subsystem { name, .. } => {
                return Err(SystemError::Subsystem {
                    subsystem: name,
                    violation: FormatViolation::new(
                        ViolationKind::UnknownFunction,
                        "this architecture has no subsystems",
                    ),
                    turns: Vec::new(),
                })
            }
        };
        Ok(SystemStep::emission(self.player.respond(Some(&message)).await?))
    }

    fn usage(&self) -> crate::cost_model::TokenUsage {
        self.player.usage()
    }
}

/// The intent, slot and response sub-modules shared by both pipelines.
pub struct SubModules {
    pub intent: Box<dyn Player>,
    pub slots: Box<dyn Player>,
    pub response: Box<dyn Player>,
}

fn subsystem_error(name: &str, violation: FormatViolation, turns: &[(String, String)]) -> SystemError {
    SystemError::Subsystem { subsystem: name.to_string(), violation, turns: turns.to_vec() }
}

impl SubModules {
    fn usage(&self) -> crate::cost_model::TokenUsage {
        self.intent.usage() + self.slots.usage() + self.response.usage()
    }

    async fn detect_intent(
        &mut self,
        input: &str,
        turns: &mut Vec<(String, String)>,
    ) -> Result<SubsystemOutput, SystemError> {
        let raw = self.intent.respond(Some(input)).await?;
        turns.push(("intent_detection".into(), raw.clone()));
        let call = parse_subsystem_call(&raw, &subsystem_schemas())
            .and_then(|c| {
                if c.name == "detectintent" {
                    Ok(c)
                } else {
                    Err(FormatViolation::new(ViolationKind::UnknownFunction, format!("`{}` from intent detection", c.name)))
                }
            })
            .map_err(|v| subsystem_error("intent_detection", v, turns))?;
        let text = |k: &str| call.arguments.get(k).and_then(Value::as_str).unwrap_or_default();
        let intent = Intent::parse(text("intent")).expect("enum checked by schema");
        let domain = text("domain").parse::<Domain>().ok();
        Ok(SubsystemOutput::Intent { intent, domain })
    }

    async fn extract_slots(
        &mut self,
        input: &str,
        turns: &mut Vec<(String, String)>,
    ) -> Result<SubsystemOutput, SystemError> {
        let raw = self.slots.respond(Some(input)).await?;
        turns.push(("slot_extraction".into(), raw.clone()));
        let call = parse_subsystem_call(&raw, &subsystem_schemas())
            .and_then(|c| {
                if c.name == "extractslots" {
                    Ok(c)
                } else {
                    Err(FormatViolation::new(ViolationKind::UnknownFunction, format!("`{}` from slot extraction", c.name)))
                }
            })
            .map_err(|v| subsystem_error("slot_extraction", v, turns))?;
        let slots = call
            .arguments
            .iter()
            .filter_map(|(k, v)| v.as_str().map(|s| (k.clone(), s.to_string())))
            .collect();
        Ok(SubsystemOutput::Slots { slots })
    }

    /// Runs the response generator and returns its raw followup emission.
    async fn respond(
        &mut self,
        input: &str,
        turns: &mut Vec<(String, String)>,
    ) -> Result<(String, SubsystemOutput), SystemError> {
        let raw = self.response.respond(Some(input)).await?;
        turns.push(("response_generation".into(), raw.clone()));
        let call = parse_tool_call(&raw)
            .and_then(|c| {
                if c.function == FunctionName::Followup {
                    Ok(c)
                } else {
                    Err(FormatViolation::new(
                        ViolationKind::UnknownFunction,
                        format!("response generation may only call followup, got {}", c.function),
                    ))
                }
            })
            .map_err(|v| subsystem_error("response_generation", v, turns))?;
        let message = call.str_arg("message").unwrap_or_default().to_string();
        Ok((raw, SubsystemOutput::Response { message }))
    }
}

/// The structured input the response generator sees.
fn response_input(state: &DialogueState, utterance: &str) -> String {
    json!({
        "domain": state.domain.map(Domain::as_str).unwrap_or("donotcare"),
        "intent": state.last_intent.map(Intent::as_str).unwrap_or("detection-unknown"),
        "slots": state.current_slots(),
        "db": state.pending_results,
        "user": utterance,
    })
    .to_string()
}

/// Fixed pipeline: intent, slots, rule-based action, response.
pub struct ModularProg {
    modules: SubModules,
    pub state: DialogueState,
    utterance: String,
    /// Sub-module exchanges of the current turn not yet reported.
    backlog: Vec<(String, String)>,
}

impl ModularProg {
    pub fn new(modules: SubModules) -> Self {
        Self { modules, state: DialogueState::default(), utterance: String::new(), backlog: Vec::new() }
    }

    async fn generate_response(&mut self) -> Result<SystemStep, SystemError> {
        let mut turns = std::mem::take(&mut self.backlog);
        let input = response_input(&self.state, &self.utterance);
        let (raw, _) = self.modules.respond(&input, &mut turns).await?;
        Ok(SystemStep { raw, subsystem_turns: turns })
    }
}

#[async_trait]
impl DialogueSystem for ModularProg {
    fn architecture(&self) -> Architecture {
        Architecture::ModularProg
    }

    async fn step(&mut self, input: SystemInput) -> Result<SystemStep, SystemError> {
        match input {
            SystemInput::User(text) => {
                self.utterance = text;
                self.state.pending_results.clear();
                let mut turns = Vec::new();
                let intent = self.modules.detect_intent(&self.utterance, &mut turns).await?;
                self.state.apply(&intent);
                let slots = self.modules.extract_slots(&self.utterance, &mut turns).await?;
                self.state.apply(&slots);
                let action = match intent {
                    SubsystemOutput::Intent { intent, .. } => {
                        select_action(intent, self.state.domain, &self.state.current_slots())
                    }
                    _ => Action::None,
                };
                match action {
                    Action::Query(call) | Action::Book(call) => {
                        Ok(SystemStep { raw: call.to_wire(), subsystem_turns: turns })
                    }
                    Action::None => {
                        self.backlog = turns;
                        self.generate_response().await
                    }
                }
            }
            SystemInput::ToolResult(payload) => {
                self.state.pending_results.push(payload);
                self.generate_response().await
            }
            SystemInput::Subsystem { name, .. } => Err(subsystem_error(
                &name,
                FormatViolation::new(ViolationKind::UnknownFunction, "routing is programmatic in this architecture"),
                &[],
            )),
        }
    }

    fn usage(&self) -> crate::cost_model::TokenUsage {
        self.modules.usage()
    }
}

/// A manager model picks the next sub-module, tool call or reply.
pub struct ModularLlm {
    manager: Box<dyn Player>,
    modules: SubModules,
    pub state: DialogueState,
    utterance: String,
}

impl ModularLlm {
    pub fn new(manager: Box<dyn Player>, modules: SubModules) -> Self {
        Self { manager, modules, state: DialogueState::default(), utterance: String::new() }
    }
}

#[async_trait]
impl DialogueSystem for ModularLlm {
    fn architecture(&self) -> Architecture {
        Architecture::ModularLlm
    }

    async fn step(&mut self, input: SystemInput) -> Result<SystemStep, SystemError> {
        match input {
            SystemInput::User(text) => {
                self.utterance = text.clone();
                self.state.pending_results.clear();
                Ok(SystemStep::emission(self.manager.respond(Some(&text)).await?))
            }
            SystemInput::ToolResult(payload) => {
                let message = tool_result_message(&payload);
                self.state.pending_results.push(payload);
                Ok(SystemStep::emission(self.manager.respond(Some(&message)).await?))
            }
            SystemInput::Subsystem { name, input } => {
                let mut turns = Vec::new();
                let output = match name.as_str() {
                    "intent_detection" => {
                        let text = input.unwrap_or_else(|| self.utterance.clone());
                        self.modules.detect_intent(&text, &mut turns).await?
                    }
                    "slot_extraction" => {
                        let text = input.unwrap_or_else(|| self.utterance.clone());
                        self.modules.extract_slots(&text, &mut turns).await?
                    }
                    "response_generation" => {
                        let text = input.unwrap_or_else(|| response_input(&self.state, &self.utterance));
                        self.modules.respond(&text, &mut turns).await?.1
                    }
                    other => {
                        return Err(subsystem_error(
                            other,
                            FormatViolation::new(ViolationKind::EnumViolation, format!("unknown subsystem `{other}`")),
                            &turns,
                        ))
                    }
                };
                self.state.apply(&output);
                let report = json!({ "subsystem": name, "output": output }).to_string();
                let raw = self.manager.respond(Some(&report)).await?;
                Ok(SystemStep { raw, subsystem_turns: turns })
            }
        }
    }

    fn usage(&self) -> crate::cost_model::TokenUsage {
        self.manager.usage() + self.modules.usage()
    }
}
