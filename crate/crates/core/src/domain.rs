//! Shared value types: goals, tool calls, turns, transcripts, entity rows and
//! booking results. Everything here is immutable once constructed and
//! serializes to the line-JSON shape used by persisted files.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;
use std::sync::OnceLock;

use regex::Regex;
use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum DomainError {
    #[error("goal must have between 1 and 3 domain specs, got {0}")]
    DomainCount(usize),
    #[error("goal lists domain `{0}` more than once")]
    DuplicateDomain(Domain),
    #[error("slot `{slot}` is not part of the {domain} ontology")]
    UnknownSlot { domain: Domain, slot: String },
    #[error("goal text is empty")]
    EmptyText,
    #[error("unknown domain `{0}`")]
    UnknownDomain(String),
    #[error("column `{0}` appears more than once (case-insensitive)")]
    DuplicateColumn(String),
    #[error("column `{column}` must be HH:MM, got `{value}`")]
    BadTime { column: String, value: String },
    #[error("column `stars` must be 1..5, got `{0}`")]
    BadStars(String),
    #[error("reference number `{0}` is not 8 uppercase alphanumerics")]
    BadReference(String),
    #[error("booking for {domain} is missing confirmed slot `{slot}`")]
    MissingBookingSlot { domain: Domain, slot: String },
    #[error("transcript invariant violated: {0}")]
    Transcript(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Domain {
    Restaurant,
    Hotel,
    Train,
}

impl Domain {
    pub const ALL: [Domain; 3] = [Domain::Restaurant, Domain::Hotel, Domain::Train];

    pub fn as_str(self) -> &'static str {
        match self {
            Domain::Restaurant => "restaurant",
            Domain::Hotel => "hotel",
            Domain::Train => "train",
        }
    }

    /// Constraint slots a user states about the entity itself.
    pub fn informable_slots(self) -> &'static [&'static str] {
        match self {
            Domain::Restaurant => &["area", "pricerange", "food", "name"],
            Domain::Hotel => &["area", "pricerange", "type", "name", "internet", "parking", "stars"],
            Domain::Train => &["departure", "destination", "day", "leaveat", "arriveby"],
        }
    }

    /// Reservation details that do not describe the entity.
    pub fn booking_slots(self) -> &'static [&'static str] {
        match self {
            Domain::Restaurant => &["people", "day", "time"],
            Domain::Hotel => &["people", "day", "stay"],
            Domain::Train => &["people"],
        }
    }

    /// Columns of the domain database, in documented order.
    pub fn columns(self) -> &'static [&'static str] {
        match self {
            Domain::Restaurant => {
                &["name", "area", "pricerange", "food", "phone", "postcode", "address"]
            }
            Domain::Hotel => &[
                "name", "area", "pricerange", "type", "internet", "parking", "stars", "phone",
                "postcode", "address",
            ],
            Domain::Train => &[
                "trainid", "departure", "destination", "day", "leaveat", "arriveby", "price",
                "duration",
            ],
        }
    }

    /// The column that names an entity in user-facing text.
    pub fn key_column(self) -> &'static str {
        match self {
            Domain::Train => "trainid",
            _ => "name",
        }
    }

    pub fn is_slot(self, slot: &str) -> bool {
        self.informable_slots().contains(&slot) || self.booking_slots().contains(&slot)
    }
}

impl fmt::Display for Domain {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Domain {
    type Err = DomainError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "restaurant" => Ok(Domain::Restaurant),
            "hotel" => Ok(Domain::Hotel),
            "train" => Ok(Domain::Train),
            other => Err(DomainError::UnknownDomain(other.to_string())),
        }
    }
}

/// Columns compared as zero-padded `HH:MM` strings.
pub fn is_time_column(column: &str) -> bool {
    matches!(column.to_ascii_lowercase().as_str(), "leaveat" | "arriveby" | "time")
}

pub fn is_stars_column(column: &str) -> bool {
    column.eq_ignore_ascii_case("stars")
}

fn hhmm_regex() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"^(0[0-9]|1[0-9]|2[0-3]):[0-5][0-9]$").unwrap())
}

pub fn is_hhmm(value: &str) -> bool {
    hhmm_regex().is_match(value)
}

/// Zero-pads `H:MM` to `HH:MM`; returns `None` for anything that is not a
/// valid 24-hour time afterwards.
pub fn normalize_time(value: &str) -> Option<String> {
    let value = value.trim();
    let padded = match value.split_once(':') {
        Some((h, m)) if h.len() == 1 => format!("0{h}:{m}"),
        _ => value.to_string(),
    };
    is_hhmm(&padded).then_some(padded)
}

fn html_tag_regex() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"<[^>]*>").unwrap())
}

/// Strips markup left over in corpus goal texts.
pub fn clean_html(text: &str) -> String {
    let stripped = html_tag_regex().replace_all(text, "");
    let unescaped = stripped
        .replace("&nbsp;", " ")
        .replace("&lt;", "<")
        .replace("&gt;", ">")
        .replace("&quot;", "\"")
        .replace("&#39;", "'")
        .replace("&amp;", "&");
    unescaped.split_whitespace().collect::<Vec<_>>().join(" ")
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DomainSpec {
    pub domain: Domain,
    #[serde(default)]
    pub informables: BTreeMap<String, String>,
    #[serde(default)]
    pub booking_slots: BTreeMap<String, String>,
}

impl DomainSpec {
    pub fn new(domain: Domain) -> Self {
        Self { domain, informables: BTreeMap::new(), booking_slots: BTreeMap::new() }
    }

    pub fn informable(mut self, slot: &str, value: &str) -> Self {
        self.informables.insert(slot.to_string(), value.to_string());
        self
    }

    pub fn booking(mut self, slot: &str, value: &str) -> Self {
        self.booking_slots.insert(slot.to_string(), value.to_string());
        self
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Provenance {
    Corpus,
    SyntheticMultiwozStyle,
    SyntheticUnrealistic,
}

#[derive(Deserialize, Serialize)]
struct GoalRepr {
    id: String,
    domain_specs: Vec<DomainSpec>,
    text: String,
    provenance: Provenance,
}

/// A user objective. Construction enforces the ontology and shape
/// invariants, so any `Goal` in hand is valid.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "GoalRepr", into = "GoalRepr")]
pub struct Goal {
    id: String,
    domain_specs: Vec<DomainSpec>,
    text: String,
    provenance: Provenance,
}

impl Goal {
    pub fn new(
        id: impl Into<String>,
        domain_specs: Vec<DomainSpec>,
        text: impl Into<String>,
        provenance: Provenance,
    ) -> Result<Self, DomainError> {
        let mut text = text.into();
        if provenance == Provenance::Corpus {
            text = clean_html(&text);
        }
        if text.trim().is_empty() {
            return Err(DomainError::EmptyText);
        }
        if domain_specs.is_empty() || domain_specs.len() > 3 {
            return Err(DomainError::DomainCount(domain_specs.len()));
        }
        let mut seen = BTreeSet::new();
        for spec in &domain_specs {
            if !seen.insert(spec.domain) {
                return Err(DomainError::DuplicateDomain(spec.domain));
            }
            for slot in spec.informables.keys() {
                if !spec.domain.informable_slots().contains(&slot.as_str()) {
                    return Err(DomainError::UnknownSlot { domain: spec.domain, slot: slot.clone() });
                }
            }
            for slot in spec.booking_slots.keys() {
                if !spec.domain.booking_slots().contains(&slot.as_str()) {
                    return Err(DomainError::UnknownSlot { domain: spec.domain, slot: slot.clone() });
                }
            }
        }
        Ok(Self { id: id.into(), domain_specs, text, provenance })
    }

    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn domain_specs(&self) -> &[DomainSpec] {
        &self.domain_specs
    }

    pub fn text(&self) -> &str {
        &self.text
    }

    pub fn provenance(&self) -> Provenance {
        self.provenance
    }

    pub fn spec(&self, domain: Domain) -> Option<&DomainSpec> {
        self.domain_specs.iter().find(|s| s.domain == domain)
    }
}

impl TryFrom<GoalRepr> for Goal {
    type Error = DomainError;

    fn try_from(r: GoalRepr) -> Result<Self, Self::Error> {
        Goal::new(r.id, r.domain_specs, r.text, r.provenance)
    }
}

impl From<Goal> for GoalRepr {
    fn from(g: Goal) -> Self {
        GoalRepr { id: g.id, domain_specs: g.domain_specs, text: g.text, provenance: g.provenance }
    }
}

/// Domains of a goal in declaration order.
pub fn goal_domains(goal: &Goal) -> Vec<Domain> {
    goal.domain_specs.iter().map(|s| s.domain).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FunctionName {
    Followup,
    Retrievefromrestaurantdb,
    Retrievefromhoteldb,
    Retrievefromtraindb,
    Validaterestaurantbooking,
    Validatehotelbooking,
    Validatetrainbooking,
    Processnextsubsystem,
}

impl FunctionName {
    pub const ALL: [FunctionName; 8] = [
        FunctionName::Followup,
        FunctionName::Retrievefromrestaurantdb,
        FunctionName::Retrievefromhoteldb,
        FunctionName::Retrievefromtraindb,
        FunctionName::Validaterestaurantbooking,
        FunctionName::Validatehotelbooking,
        FunctionName::Validatetrainbooking,
        FunctionName::Processnextsubsystem,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            FunctionName::Followup => "followup",
            FunctionName::Retrievefromrestaurantdb => "retrievefromrestaurantdb",
            FunctionName::Retrievefromhoteldb => "retrievefromhoteldb",
            FunctionName::Retrievefromtraindb => "retrievefromtraindb",
            FunctionName::Validaterestaurantbooking => "validaterestaurantbooking",
            FunctionName::Validatehotelbooking => "validatehotelbooking",
            FunctionName::Validatetrainbooking => "validatetrainbooking",
            FunctionName::Processnextsubsystem => "processnextsubsystem",
        }
    }

    pub fn parse(name: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|f| f.as_str() == name)
    }

    pub fn retrieval_domain(self) -> Option<Domain> {
        match self {
            FunctionName::Retrievefromrestaurantdb => Some(Domain::Restaurant),
            FunctionName::Retrievefromhoteldb => Some(Domain::Hotel),
            FunctionName::Retrievefromtraindb => Some(Domain::Train),
            _ => None,
        }
    }

    pub fn booking_domain(self) -> Option<Domain> {
        match self {
            FunctionName::Validaterestaurantbooking => Some(Domain::Restaurant),
            FunctionName::Validatehotelbooking => Some(Domain::Hotel),
            FunctionName::Validatetrainbooking => Some(Domain::Train),
            _ => None,
        }
    }

    pub fn retrieval_for(domain: Domain) -> Self {
        match domain {
            Domain::Restaurant => FunctionName::Retrievefromrestaurantdb,
            Domain::Hotel => FunctionName::Retrievefromhoteldb,
            Domain::Train => FunctionName::Retrievefromtraindb,
        }
    }

    pub fn booking_for(domain: Domain) -> Self {
        match domain {
            Domain::Restaurant => FunctionName::Validaterestaurantbooking,
            Domain::Hotel => FunctionName::Validatehotelbooking,
            Domain::Train => FunctionName::Validatetrainbooking,
        }
    }
}

impl fmt::Display for FunctionName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// One function invocation. `tool_schema` is the only producer of validated
/// calls; constructing one by hand does not validate it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ToolCall {
    #[serde(rename = "name")]
    pub function: FunctionName,
    pub arguments: Map<String, Value>,
}

impl ToolCall {
    pub fn new(function: FunctionName, arguments: Map<String, Value>) -> Self {
        Self { function, arguments }
    }

    pub fn followup(message: &str) -> Self {
        let mut arguments = Map::new();
        arguments.insert("message".into(), Value::String(message.to_string()));
        Self::new(FunctionName::Followup, arguments)
    }

    pub fn str_arg(&self, key: &str) -> Option<&str> {
        self.arguments.get(key).and_then(Value::as_str)
    }

    /// The wire form models are asked to emit.
    pub fn to_wire(&self) -> String {
        serde_json::to_string(self).expect("tool call serializes")
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Speaker {
    User,
    DialogueSystem,
    Subsystem,
    ToolResult,
    GameMaster,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Turn {
    pub index: u32,
    pub speaker: Speaker,
    pub content: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tool_call: Option<ToolCall>,
    pub wall_time_ms: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Outcome {
    Completed,
    AbortedFormatViolation,
    TurnLimitReached,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Transcript {
    pub goal_id: String,
    pub turns: Vec<Turn>,
    pub outcome: Outcome,
    pub bookings: Vec<BookingResult>,
    pub latency_s: f64,
}

impl Transcript {
    pub fn user_turns(&self) -> impl Iterator<Item = &Turn> {
        self.turns.iter().filter(|t| t.speaker == Speaker::User)
    }

    /// Messages the dialogue system relayed to the user.
    pub fn followup_messages(&self) -> impl Iterator<Item = &str> {
        self.turns.iter().filter_map(|t| match &t.tool_call {
            Some(call) if t.speaker == Speaker::DialogueSystem && call.function == FunctionName::Followup => {
                call.str_arg("message")
            }
            _ => None,
        })
    }

    pub fn validate(&self, max_user_turns: usize, done_token: &str) -> Result<(), DomainError> {
        let bad = |msg: String| Err(DomainError::Transcript(msg));
        for pair in self.turns.windows(2) {
            if pair[1].index <= pair[0].index {
                return bad(format!("turn index {} does not follow {}", pair[1].index, pair[0].index));
            }
        }
        for turn in &self.turns {
            if turn.tool_call.is_some()
                && !matches!(turn.speaker, Speaker::DialogueSystem | Speaker::Subsystem)
            {
                return bad(format!("turn {} carries a tool call but is not a system turn", turn.index));
            }
        }
        let user_turns = self.user_turns().count();
        if user_turns > max_user_turns {
            return bad(format!("{user_turns} user turns exceed the limit of {max_user_turns}"));
        }
        match self.outcome {
            Outcome::Completed => {
                let last = self.user_turns().last();
                if last.map(|t| t.content.trim()) != Some(done_token) {
                    return bad("completed transcript does not end with the done token".into());
                }
            }
            Outcome::TurnLimitReached if user_turns != max_user_turns => {
                return bad(format!("turn limit reached after {user_turns} user turns"));
            }
            Outcome::AbortedFormatViolation
                if !self.turns.iter().any(|t| t.speaker == Speaker::GameMaster) =>
            {
                return bad("aborted transcript has no game master note".into());
            }
            _ => {}
        }
        if self.latency_s.is_nan() || self.latency_s < 0.0 {
            return bad(format!("invalid latency {}", self.latency_s));
        }
        for booking in &self.bookings {
            BookingResult::new(booking.domain, &booking.reference_number, booking.confirmed_slots.clone())?;
        }
        Ok(())
    }
}

/// One database row. Column names are unique ignoring case.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "EntityRecordRepr", into = "EntityRecordRepr")]
pub struct EntityRecord {
    domain: Domain,
    fields: BTreeMap<String, String>,
}

#[derive(Serialize, Deserialize)]
struct EntityRecordRepr {
    domain: Domain,
    fields: BTreeMap<String, String>,
}

impl EntityRecord {
    pub fn new<I, K, V>(domain: Domain, fields: I) -> Result<Self, DomainError>
    where
        I: IntoIterator<Item = (K, V)>,
        K: Into<String>,
        V: Into<String>,
    {
        let mut map = BTreeMap::new();
        let mut lowered = BTreeSet::new();
        for (k, v) in fields {
            let (k, v) = (k.into(), v.into());
            if !lowered.insert(k.to_ascii_lowercase()) {
                return Err(DomainError::DuplicateColumn(k));
            }
            if is_time_column(&k) && !is_hhmm(&v) {
                return Err(DomainError::BadTime { column: k, value: v });
            }
            if is_stars_column(&k) && !matches!(v.as_str(), "1" | "2" | "3" | "4" | "5") {
                return Err(DomainError::BadStars(v));
            }
            map.insert(k, v);
        }
        Ok(Self { domain, fields: map })
    }

    pub fn domain(&self) -> Domain {
        self.domain
    }

    pub fn fields(&self) -> &BTreeMap<String, String> {
        &self.fields
    }

    /// Case-insensitive column lookup.
    pub fn get(&self, column: &str) -> Option<&str> {
        self.fields
            .iter()
            .find(|(k, _)| k.eq_ignore_ascii_case(column))
            .map(|(_, v)| v.as_str())
    }

    /// The entity's display name (train id for trains).
    pub fn key(&self) -> Option<&str> {
        self.get(self.domain.key_column())
    }
}

impl TryFrom<EntityRecordRepr> for EntityRecord {
    type Error = DomainError;

    fn try_from(r: EntityRecordRepr) -> Result<Self, Self::Error> {
        EntityRecord::new(r.domain, r.fields)
    }
}

impl From<EntityRecord> for EntityRecordRepr {
    fn from(r: EntityRecord) -> Self {
        EntityRecordRepr { domain: r.domain, fields: r.fields }
    }
}

fn refnum_regex() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"^[A-Z0-9]{8}$").unwrap())
}

pub fn is_reference_number(text: &str) -> bool {
    refnum_regex().is_match(text)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "BookingResultRepr", into = "BookingResultRepr")]
pub struct BookingResult {
    domain: Domain,
    reference_number: String,
    confirmed_slots: BTreeMap<String, String>,
}

#[derive(Serialize, Deserialize)]
struct BookingResultRepr {
    domain: Domain,
    reference_number: String,
    confirmed_slots: BTreeMap<String, String>,
}

impl BookingResult {
    pub fn new(
        domain: Domain,
        reference_number: &str,
        confirmed_slots: BTreeMap<String, String>,
    ) -> Result<Self, DomainError> {
        if !is_reference_number(reference_number) {
            return Err(DomainError::BadReference(reference_number.to_string()));
        }
        for slot in domain.booking_slots() {
            if !confirmed_slots.contains_key(*slot) {
                return Err(DomainError::MissingBookingSlot { domain, slot: slot.to_string() });
            }
        }
        Ok(Self { domain, reference_number: reference_number.to_string(), confirmed_slots })
    }

    pub fn domain(&self) -> Domain {
        self.domain
    }

    pub fn reference_number(&self) -> &str {
        &self.reference_number
    }

    pub fn confirmed_slots(&self) -> &BTreeMap<String, String> {
        &self.confirmed_slots
    }
}

impl TryFrom<BookingResultRepr> for BookingResult {
    type Error = DomainError;

    fn try_from(r: BookingResultRepr) -> Result<Self, Self::Error> {
        BookingResult::new(r.domain, &r.reference_number, r.confirmed_slots)
    }
}

impl From<BookingResult> for BookingResultRepr {
    fn from(b: BookingResult) -> Self {
        BookingResultRepr {
            domain: b.domain,
            reference_number: b.reference_number,
            confirmed_slots: b.confirmed_slots,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GenerationParams {
    pub temperature: f64,
    pub max_new_tokens: u32,
}

impl Default for GenerationParams {
    fn default() -> Self {
        Self { temperature: 0.0, max_new_tokens: 500 }
    }
}

/// Reads goals from line-JSON, one goal per non-blank line.
pub fn parse_goal_lines(text: &str) -> Result<Vec<Goal>, (usize, String)> {
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| serde_json::from_str(l).map_err(|e| (i + 1, e.to_string())))
        .collect()
}

pub fn to_json_lines<T: Serialize>(items: &[T]) -> String {
    let mut out = String::new();
    for item in items {
        out.push_str(&serde_json::to_string(item).expect("value serializes"));
        out.push('\n');
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn restaurant_goal() -> Goal {
        Goal::new(
            "g1",
            vec![DomainSpec::new(Domain::Restaurant).informable("area", "centre").booking("people", "4")],
            "book a table",
            Provenance::Corpus,
        )
        .unwrap()
    }

    #[test]
    fn goal_domains_preserves_order() {
        assert_eq!(goal_domains(&restaurant_goal()), vec![Domain::Restaurant]);
        let g = Goal::new(
            "g2",
            vec![DomainSpec::new(Domain::Hotel), DomainSpec::new(Domain::Train)],
            "x",
            Provenance::Corpus,
        )
        .unwrap();
        assert_eq!(goal_domains(&g), vec![Domain::Hotel, Domain::Train]);
        let g = Goal::new(
            "g3",
            vec![DomainSpec::new(Domain::Train), DomainSpec::new(Domain::Restaurant), DomainSpec::new(Domain::Hotel)],
            "x",
            Provenance::Corpus,
        )
        .unwrap();
        assert_eq!(goal_domains(&g).len(), 3);
    }

    #[test]
    fn goal_rejects_bad_shapes() {
        let dup = Goal::new(
            "d",
            vec![DomainSpec::new(Domain::Hotel), DomainSpec::new(Domain::Hotel)],
            "x",
            Provenance::Corpus,
        );
        assert_eq!(dup.unwrap_err(), DomainError::DuplicateDomain(Domain::Hotel));
        assert_eq!(Goal::new("e", vec![], "x", Provenance::Corpus).unwrap_err(), DomainError::DomainCount(0));
        let slot = Goal::new(
            "s",
            vec![DomainSpec::new(Domain::Train).informable("food", "thai")],
            "x",
            Provenance::Corpus,
        );
        assert!(matches!(slot, Err(DomainError::UnknownSlot { .. })));
        let text = Goal::new("t", vec![DomainSpec::new(Domain::Train)], "  ", Provenance::Corpus);
        assert_eq!(text.unwrap_err(), DomainError::EmptyText);
    }

    #[test]
    fn goal_deserialization_enforces_invariants() {
        let line = r#"{"id":"x","domain_specs":[{"domain":"hotel"},{"domain":"hotel"}],"text":"t","provenance":"corpus"}"#;
        assert!(serde_json::from_str::<Goal>(line).is_err());
    }

    #[test]
    fn corpus_text_is_cleaned() {
        let g = Goal::new(
            "h",
            vec![DomainSpec::new(Domain::Hotel)],
            "You want a <span class='emphasis'>cheap</span> hotel &amp; parking",
            Provenance::Corpus,
        )
        .unwrap();
        assert_eq!(g.text(), "You want a cheap hotel & parking");
    }

    #[test]
    fn time_normalization() {
        assert_eq!(normalize_time("9:05").as_deref(), Some("09:05"));
        assert_eq!(normalize_time("19:05").as_deref(), Some("19:05"));
        assert_eq!(normalize_time("25:00"), None);
        assert!("09:00" < "10:00" && "09:59" < "10:00");
    }

    #[test]
    fn entity_record_invariants() {
        let dup = EntityRecord::new(Domain::Hotel, [("Area", "north"), ("area", "south")]);
        assert!(matches!(dup, Err(DomainError::DuplicateColumn(_))));
        let stars = EntityRecord::new(Domain::Hotel, [("stars", "6")]);
        assert!(matches!(stars, Err(DomainError::BadStars(_))));
        let time = EntityRecord::new(Domain::Train, [("leaveat", "9:00")]);
        assert!(matches!(time, Err(DomainError::BadTime { .. })));
        let ok = EntityRecord::new(Domain::Hotel, [("Name", "cedar lodge")]).unwrap();
        assert_eq!(ok.get("name"), Some("cedar lodge"));
        assert_eq!(ok.key(), Some("cedar lodge"));
    }

    #[test]
    fn booking_result_invariants() {
        let slots: BTreeMap<_, _> =
            [("people", "2"), ("day", "monday"), ("time", "18:00")].map(|(k, v)| (k.to_string(), v.to_string())).into();
        assert!(BookingResult::new(Domain::Restaurant, "AB12CD34", slots.clone()).is_ok());
        assert!(BookingResult::new(Domain::Restaurant, "ab12cd34", slots.clone()).is_err());
        assert!(BookingResult::new(Domain::Restaurant, "AB12CD3", slots.clone()).is_err());
        assert!(BookingResult::new(Domain::Hotel, "AB12CD34", slots).is_err());
    }

    #[test]
    fn generation_defaults() {
        let p = GenerationParams::default();
        assert_eq!(p.temperature, 0.0);
        assert_eq!(p.max_new_tokens, 500);
    }
}
