//! Built-in function schemas and the strict parser that turns raw model
//! output into validated [`ToolCall`]s.
//!
//! Only the constructs the dialogue tools use are supported: plain strings,
//! string enums, regex-constrained strings and `{operator, value}` objects.
//! Matching of keys and enum values is case-sensitive.

use std::collections::BTreeSet;
use std::fmt;
use std::sync::OnceLock;

use regex::Regex;
use serde::{Deserialize, Serialize};
use serde_json::{json, Map, Value};

use crate::domain::{FunctionName, ToolCall};

const AREAS: [&str; 5] = ["centre", "north", "east", "west", "south"];
const PRICERANGES: [&str; 3] = ["cheap", "moderate", "expensive"];
const DAYS: [&str; 7] = ["monday", "tuesday", "wednesday", "thursday", "friday", "saturday", "sunday"];
const OPERATORS: [&str; 5] = ["=", ">=", "<=", ">", "<"];
const STARS: [&str; 5] = ["1", "2", "3", "4", "5"];
const COUNTS: [&str; 8] = ["1", "2", "3", "4", "5", "6", "7", "8"];
const YES_NO: [&str; 2] = ["yes", "no"];
const HHMM: &str = "^(0[0-9]|1[0-9]|2[0-3]):[0-5][0-9]$";

pub const SUBSYSTEMS: [&str; 3] = ["intent_detection", "slot_extraction", "response_generation"];

pub const INTENTS: [&str; 7] = [
    "booking-request",
    "booking-success",
    "booking-failure",
    "dbretrieval-request",
    "dbretrieval-success",
    "dbretrieval-failure",
    "detection-unknown",
];

pub const INTENT_DOMAINS: [&str; 4] = ["restaurant", "hotel", "train", "donotcare"];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ViolationKind {
    NotJson,
    MultipleCalls,
    UnknownFunction,
    MissingRequired,
    EnumViolation,
    PatternViolation,
    ExtraProperty,
    FreeTextOutsideCall,
}

impl ViolationKind {
    /// The note the Game Master records when aborting on this kind.
    pub fn abort_message(self) -> &'static str {
        match self {
            ViolationKind::NotJson => "response is not a JSON tool call",
            ViolationKind::MultipleCalls => "response contains more than one function call",
            ViolationKind::UnknownFunction => "response calls a function that is not in the tool schema",
            ViolationKind::MissingRequired => "tool call is missing a required field",
            ViolationKind::EnumViolation => "tool call argument is outside its allowed values",
            ViolationKind::PatternViolation => "tool call argument does not match its required format",
            ViolationKind::ExtraProperty => "tool call contains a property the schema does not allow",
            ViolationKind::FreeTextOutsideCall => "response contains free text outside the tool call",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize, thiserror::Error)]
#[error("{kind:?}: {detail}")]
pub struct FormatViolation {
    pub kind: ViolationKind,
    pub detail: String,
}

impl FormatViolation {
    pub fn new(kind: ViolationKind, detail: impl Into<String>) -> Self {
        Self { kind, detail: detail.into() }
    }
}

#[derive(Debug, Clone)]
pub struct Pattern {
    source: String,
    regex: Regex,
}

impl Pattern {
    pub fn new(source: &str) -> Self {
        Self { source: source.to_string(), regex: Regex::new(source).expect("schema pattern compiles") }
    }

    pub fn source(&self) -> &str {
        &self.source
    }

    pub fn is_match(&self, value: &str) -> bool {
        self.regex.is_match(value)
    }
}

impl PartialEq for Pattern {
    fn eq(&self, other: &Self) -> bool {
        self.source == other.source
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum ParamKind {
    String,
    Enum(Vec<String>),
    Pattern(Pattern),
    OperatorObject { operators: Vec<String>, value: Box<ParamSpec> },
}

#[derive(Debug, Clone, PartialEq)]
pub struct ParamSpec {
    pub kind: ParamKind,
    pub description: Option<String>,
}

impl ParamSpec {
    fn string(description: &str) -> Self {
        Self { kind: ParamKind::String, description: Some(description.to_string()) }
    }

    fn enumeration(values: &[&str], description: &str) -> Self {
        Self {
            kind: ParamKind::Enum(values.iter().map(|v| v.to_string()).collect()),
            description: (!description.is_empty()).then(|| description.to_string()),
        }
    }

    fn pattern(source: &str, description: &str) -> Self {
        Self { kind: ParamKind::Pattern(Pattern::new(source)), description: Some(description.to_string()) }
    }

    fn operator(value: ParamSpec, description: &str) -> Self {
        Self {
            kind: ParamKind::OperatorObject {
                operators: OPERATORS.iter().map(|o| o.to_string()).collect(),
                value: Box::new(value),
            },
            description: Some(description.to_string()),
        }
    }

    fn to_document(&self) -> Value {
        let mut doc = Map::new();
        match &self.kind {
            ParamKind::String => {
                doc.insert("type".into(), json!("string"));
            }
            ParamKind::Enum(values) => {
                doc.insert("type".into(), json!("string"));
                doc.insert("enum".into(), json!(values));
            }
            ParamKind::Pattern(p) => {
                doc.insert("type".into(), json!("string"));
                doc.insert("pattern".into(), json!(p.source()));
            }
            ParamKind::OperatorObject { operators, value } => {
                doc.insert("type".into(), json!("object"));
                if let Some(d) = &self.description {
                    doc.insert("description".into(), json!(d));
                }
                doc.insert(
                    "properties".into(),
                    json!({
                        "operator": { "type": "string", "enum": operators },
                        "value": value.to_document(),
                    }),
                );
                doc.insert("required".into(), json!(["operator", "value"]));
                doc.insert("additionalProperties".into(), json!(false));
                return Value::Object(doc);
            }
        }
        if let Some(d) = &self.description {
            doc.insert("description".into(), json!(d));
        }
        Value::Object(doc)
    }

    pub fn check(&self, key: &str, value: &Value) -> Result<(), FormatViolation> {
        match &self.kind {
            ParamKind::String => match value {
                Value::String(_) => Ok(()),
                _ => Err(FormatViolation::new(
                    ViolationKind::PatternViolation,
                    format!("`{key}` must be a string, got {value}"),
                )),
            },
            ParamKind::Enum(allowed) => match value.as_str() {
                Some(v) if allowed.iter().any(|a| a == v) => Ok(()),
                _ => Err(FormatViolation::new(
                    ViolationKind::EnumViolation,
                    format!("`{key}` must be one of {allowed:?}, got {value}"),
                )),
            },
            ParamKind::Pattern(p) => match value.as_str() {
                Some(v) if p.is_match(v) => Ok(()),
                _ => Err(FormatViolation::new(
                    ViolationKind::PatternViolation,
                    format!("`{key}` must match {}, got {value}", p.source()),
                )),
            },
            ParamKind::OperatorObject { operators, value: value_spec } => {
                let Some(obj) = value.as_object() else {
                    return Err(FormatViolation::new(
                        ViolationKind::MissingRequired,
                        format!("`{key}` must be an object with `operator` and `value`"),
                    ));
                };
                if let Some(extra) = obj.keys().find(|k| *k != "operator" && *k != "value") {
                    return Err(FormatViolation::new(
                        ViolationKind::ExtraProperty,
                        format!("`{key}.{extra}` is not allowed"),
                    ));
                }
                let op = obj.get("operator").ok_or_else(|| {
                    FormatViolation::new(ViolationKind::MissingRequired, format!("`{key}.operator` is required"))
                })?;
                let inner = obj.get("value").ok_or_else(|| {
                    FormatViolation::new(ViolationKind::MissingRequired, format!("`{key}.value` is required"))
                })?;
                match op.as_str() {
                    Some(o) if operators.iter().any(|a| a == o) => {}
                    _ => {
                        return Err(FormatViolation::new(
                            ViolationKind::EnumViolation,
                            format!("`{key}.operator` must be one of {operators:?}, got {op}"),
                        ))
                    }
                }
                value_spec.check(&format!("{key}.value"), inner)
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FunctionSchema {
    pub name: String,
    pub description: String,
    /// Parameters in document order.
    pub parameters: Vec<(String, ParamSpec)>,
    /// Required names in document order.
    pub required: Vec<String>,
    /// `None` when the document omits `additionalProperties`, which permits
    /// extra keys.
    pub additional_properties: Option<bool>,
}

impl FunctionSchema {
    pub fn param(&self, name: &str) -> Option<&ParamSpec> {
        self.parameters.iter().find(|(n, _)| n == name).map(|(_, p)| p)
    }

    pub fn required_set(&self) -> BTreeSet<&str> {
        self.required.iter().map(String::as_str).collect()
    }

    pub fn additional_properties_allowed(&self) -> bool {
        self.additional_properties.unwrap_or(true)
    }

    /// The tool document in the chat-completions `tools` shape.
    pub fn to_document(&self) -> Value {
        let mut properties = Map::new();
        for (name, spec) in &self.parameters {
            properties.insert(name.clone(), spec.to_document());
        }
        let mut parameters = Map::new();
        parameters.insert("type".into(), json!("object"));
        parameters.insert("properties".into(), Value::Object(properties));
        parameters.insert("required".into(), json!(self.required));
        if let Some(flag) = self.additional_properties {
            parameters.insert("additionalProperties".into(), json!(flag));
        }
        json!({
            "type": "function",
            "function": {
                "name": self.name,
                "description": self.description,
                "parameters": Value::Object(parameters),
            }
        })
    }

    /// Two-space pretty JSON with a trailing newline, the on-disk form.
    pub fn to_pretty_json(&self) -> String {
        let mut out = serde_json::to_string_pretty(&self.to_document()).expect("schema serializes");
        out.push('\n');
        out
    }

    pub fn validate_map(&self, arguments: &Map<String, Value>) -> Result<(), FormatViolation> {
        if !self.additional_properties_allowed() {
            if let Some(extra) = arguments.keys().find(|k| self.param(k).is_none()) {
                return Err(FormatViolation::new(
                    ViolationKind::ExtraProperty,
                    format!("`{extra}` is not a parameter of {}", self.name),
                ));
            }
        }
        if let Some(missing) = self.required.iter().find(|r| !arguments.contains_key(r.as_str())) {
            return Err(FormatViolation::new(
                ViolationKind::MissingRequired,
                format!("{} requires `{missing}`", self.name),
            ));
        }
        for (name, spec) in &self.parameters {
            if let Some(value) = arguments.get(name) {
                spec.check(name, value)?;
            }
        }
        Ok(())
    }
}

struct SchemaBuilder(FunctionSchema);

impl SchemaBuilder {
    fn new(name: &str, description: &str) -> Self {
        Self(FunctionSchema {
            name: name.to_string(),
            description: description.to_string(),
            parameters: Vec::new(),
            required: Vec::new(),
            additional_properties: None,
        })
    }

    fn param(mut self, name: &str, spec: ParamSpec) -> Self {
        self.0.parameters.push((name.to_string(), spec));
        self
    }

    fn required(mut self, names: &[&str]) -> Self {
        self.0.required = names.iter().map(|n| n.to_string()).collect();
        self
    }

    fn closed(mut self) -> FunctionSchema {
        self.0.additional_properties = Some(false);
        self.0
    }

    fn open(self) -> FunctionSchema {
        self.0
    }
}

fn followup_schema() -> FunctionSchema {
    SchemaBuilder::new(
        "followup",
        "Use this function to respond to the user with follow-up messages. This includes  asking for missing or unclear information, confirming details, sharing booking reference numbers, or continuing the dialogue based on the current conversation state.",
    )
    .param("message", ParamSpec::string("The response from the dialogue system to the user"))
    .required(&["message"])
    .closed()
}

fn retrieve_restaurant_schema() -> FunctionSchema {
    SchemaBuilder::new(
        "retrievefromrestaurantdb",
        "Use this function to query the restaurant database and retrieve restaurants that match optional filters such as area, pricerange, food (cuisine), or restaurant name. This function is typically used to find available restaurant options before validating or making a reservation. Returns up to 5 matching restaurants, or fewer if less than 5 matches are found.",
    )
    .param("area", ParamSpec::enumeration(&AREAS, "The area/location/place of the restaurant. Optional."))
    .param("pricerange", ParamSpec::enumeration(&PRICERANGES, "The price budget for the restaurant. Optional."))
    .param("food", ParamSpec::string("The cuisine of the restaurant you are looking for. Optional."))
    .param("name", ParamSpec::string("The name of the restaurant. Optional."))
    .required(&[])
    .open()
}

fn retrieve_hotel_schema() -> FunctionSchema {
    SchemaBuilder::new(
        "retrievefromhoteldb",
        "Use this function to query the hotel database and retrieve hotels/guesthouses that match optional filters such as area, pricerange, type, hotel name, internet, parking, or stars. This function is typically used to find available hotel options before validating or making a reservation. Returns up to 5 matching hotels, or fewer if less than 5 matches are found.",
    )
    .param("area", ParamSpec::enumeration(&AREAS, "The area/location/place of the hotel. Optional."))
    .param("pricerange", ParamSpec::enumeration(&PRICERANGES, "The price budget for the hotel. Optional."))
    .param("type", ParamSpec::enumeration(&["hotel", "guesthouse"], "What is the type of the hotel. Optional."))
    .param("name", ParamSpec::string("The name of the hotel. Optional."))
    .param(
        "internet",
        ParamSpec::enumeration(&YES_NO, "Indicates, whether the hotel has internet/wifi or not. Optional."),
    )
    .param("parking", ParamSpec::enumeration(&YES_NO, "Indicates, whether the hotel has parking or not. Optional."))
    .param(
        "stars",
        ParamSpec::operator(ParamSpec::enumeration(&STARS, ""), "The star rating of the hotel. Optional."),
    )
    .required(&[])
    .open()
}

fn time_value() -> ParamSpec {
    ParamSpec::pattern(HHMM, "A time string formatted as HH:MM (24-hour format).")
}

fn retrieve_train_schema() -> FunctionSchema {
    SchemaBuilder::new(
        "retrievefromtraindb",
        "Use this function to query the train database and retrieve trains that match optional filters such as destination, departure, day, arriveby, or leaveat. This function is typically used to find available options before validating or making a reservation. Returns up to 5 matching trains, or fewer if less than 5 matches are found.",
    )
    .param("destination", ParamSpec::string("Destination of the train. Optional."))
    .param("departure", ParamSpec::string("Departure location of the train. Optional."))
    .param("day", ParamSpec::enumeration(&DAYS, "Journey day of the train. Optional."))
    .param("arriveby", ParamSpec::operator(time_value(), "Arrival time of the train. Optional."))
    .param("leaveat", ParamSpec::operator(time_value(), "Leaving time for the train. Optional."))
    .required(&[])
    .open()
}

fn validate_restaurant_schema() -> FunctionSchema {
    SchemaBuilder::new(
        "validaterestaurantbooking",
        "Use this function to check the availability of a restaurant based on user preferences such as area, food (cuisine), pricerange, name, people, day, and time before proceeding with a reservation. This function should be called to validate whether a booking can be made with the provided details. If the details are accurate, it returns a booking reference number.",
    )
    .param("area", ParamSpec::enumeration(&AREAS, "The area/location/place of the restaurant."))
    .param("pricerange", ParamSpec::enumeration(&PRICERANGES, "The price budget for the restaurant."))
    .param("food", ParamSpec::string("The cuisine of the restaurant you are looking for."))
    .param("name", ParamSpec::string("The name of the restaurant."))
    .param("phone", ParamSpec::string("Phone number of the restaurant. Optional."))
    .param("postcode", ParamSpec::string("Postal code of the restaurant. Optional."))
    .param("address", ParamSpec::string("Address of the restaurant. Optional."))
    .param("people", ParamSpec::enumeration(&COUNTS, "Number of people for the restaurant reservation."))
    .param("day", ParamSpec::enumeration(&DAYS, "Day of the restaurant reservation."))
    .param(
        "time",
        ParamSpec::pattern(HHMM, "Time of the restaurant reservation, formatted as HH:MM (24-hour format)."),
    )
    .required(&["food", "area", "pricerange", "name", "people", "day", "time"])
    .closed()
}

fn validate_hotel_schema() -> FunctionSchema {
    SchemaBuilder::new(
        "validatehotelbooking",
        "Use this function to check the availability of a hotel based on user preferences such as area, type (hotel/guesthouse), pricerange, name, internet, parking, stars, people, day and stay before proceeding with a reservation. This function should be called to validate whether a booking can be made with the provided details. If the details are accurate, it returns a booking reference number.",
    )
    .param("area", ParamSpec::enumeration(&AREAS, "The area/location/place of the hotel."))
    .param("pricerange", ParamSpec::enumeration(&PRICERANGES, "The price budget for the hotel."))
    .param("type", ParamSpec::enumeration(&["hotel", "guesthouse"], "What is the type of the hotel."))
    .param("name", ParamSpec::string("The name of the hotel."))
    .param("internet", ParamSpec::enumeration(&YES_NO, "Indicates, whether the hotel has internet/wifi or not."))
    .param("parking", ParamSpec::enumeration(&YES_NO, "Indicates, whether the hotel has parking or not."))
    .param("stars", ParamSpec::enumeration(&STARS, "The star rating of the hotel."))
    .param("people", ParamSpec::enumeration(&COUNTS, "Number of people for the hotel booking."))
    .param("day", ParamSpec::enumeration(&DAYS, "Day of the hotel booking."))
    .param("stay", ParamSpec::enumeration(&COUNTS, "Length of stay at the hotel."))
    .param("phone", ParamSpec::string("Phone number of the hotel. Optional."))
    .param("postcode", ParamSpec::string("Postal code of the hotel. Optional."))
    .param("address", ParamSpec::string("Address of the hotel. Optional."))
    .required(&["area", "pricerange", "type", "internet", "parking", "name", "stars", "people", "day", "stay"])
    .closed()
}

fn validate_train_schema() -> FunctionSchema {
    SchemaBuilder::new(
        "validatetrainbooking",
        "Use this function to check the availability of a train based on user preferences such as destination, departure, arriveby, leaveat, day, people, and trainid before proceeding with a reservation. This function should be called to validate whether a booking can be made with the provided details. If the details are accurate, it returns a booking reference number.",
    )
    .param("destination", ParamSpec::string("Destination of the train."))
    .param("departure", ParamSpec::string("Departure location of the train."))
    .param("day", ParamSpec::enumeration(&DAYS, "Journey day of the train."))
    .param("arriveby", ParamSpec::pattern(HHMM, "Arrival time of the train."))
    .param("leaveat", ParamSpec::pattern(HHMM, "Leaving time for the train."))
    .param("people", ParamSpec::enumeration(&COUNTS, "Number of train tickets for the booking."))
    .param("trainid", ParamSpec::string("ID of the train."))
    .param("price", ParamSpec::string("Price of the train journey. Optional."))
    .param("duration", ParamSpec::string("Duration of the travel. Optional."))
    .required(&["destination", "departure", "day", "arriveby", "leaveat", "people", "trainid"])
    .closed()
}

fn process_next_subsystem_schema() -> FunctionSchema {
    SchemaBuilder::new(
        "processnextsubsystem",
        "Use this function to hand the current request to the next dialogue subsystem (intent detection, slot extraction, or response generation). The selected subsystem receives the input data and its output is returned to the dialogue manager.",
    )
    .param("subsystem", ParamSpec::enumeration(&SUBSYSTEMS, "The name of the next subsystem to invoke."))
    .param(
        "input_data",
        ParamSpec::string("The input passed to the subsystem. Optional; defaults to the latest user utterance."),
    )
    .required(&["subsystem"])
    .closed()
}

/// The eight schemas a dialogue system may call, in [`FunctionName::ALL`] order.
pub fn builtin_schemas() -> Vec<FunctionSchema> {
    vec![
        followup_schema(),
        retrieve_restaurant_schema(),
        retrieve_hotel_schema(),
        retrieve_train_schema(),
        validate_restaurant_schema(),
        validate_hotel_schema(),
        validate_train_schema(),
        process_next_subsystem_schema(),
    ]
}

fn builtin_cache() -> &'static [FunctionSchema] {
    static CACHE: OnceLock<Vec<FunctionSchema>> = OnceLock::new();
    CACHE.get_or_init(builtin_schemas)
}

pub fn schema(function: FunctionName) -> &'static FunctionSchema {
    builtin_cache()
        .iter()
        .find(|s| s.name == function.as_str())
        .expect("every function has a builtin schema")
}

/// Output schemas of the modular pipeline's intent and slot sub-modules.
/// They are not dialogue-system tools, so they live outside
/// [`builtin_schemas`].
pub fn subsystem_schemas() -> Vec<FunctionSchema> {
    let mut slots = SchemaBuilder::new(
        "extractslots",
        "Use this function to return the slots explicitly mentioned in the user request. Set a slot to an empty string to reset a previously extracted value.",
    );
    for slot in [
        "area", "pricerange", "food", "name", "type", "internet", "parking", "stars", "departure",
        "destination", "day", "leaveat", "arriveby", "people", "time", "stay", "trainid",
    ] {
        slots = slots.param(slot, ParamSpec::string("Extracted slot value, or an empty string to reset it."));
    }
    vec![
        SchemaBuilder::new(
            "detectintent",
            "Use this function to return the detected intent and domain of the user request.",
        )
        .param("intent", ParamSpec::enumeration(&INTENTS, "The detected intent."))
        .param("domain", ParamSpec::enumeration(&INTENT_DOMAINS, "The detected domain."))
        .required(&["intent", "domain"])
        .closed(),
        slots.required(&[]).closed(),
    ]
}

/// A call envelope before it is bound to a typed function name.
#[derive(Debug, Clone, PartialEq)]
pub struct RawCall {
    pub name: String,
    pub arguments: Map<String, Value>,
}

/// Removes one surrounding markdown code fence, if present.
fn strip_fence(text: &str) -> &str {
    let t = text.trim();
    let Some(rest) = t.strip_prefix("```") else {
        return t;
    };
    let Some(body) = rest.strip_suffix("```") else {
        return t;
    };
    // drop the info string (```json)
    match body.find('\n') {
        Some(nl) if body[..nl].chars().all(|c| c.is_ascii_alphanumeric()) => body[nl + 1..].trim(),
        _ => body.trim(),
    }
}

/// Top-level JSON objects embedded in `text`, as (start offset, value).
fn scan_objects(text: &str) -> Vec<(usize, Value)> {
    let mut found = Vec::new();
    let mut i = 0;
    while let Some(off) = text[i..].find('{') {
        let start = i + off;
        let mut stream = serde_json::Deserializer::from_str(&text[start..]).into_iter::<Value>();
        match stream.next() {
            Some(Ok(value @ Value::Object(_))) => {
                found.push((start, value));
                i = start + stream.byte_offset();
            }
            _ => i = start + 1,
        }
    }
    found
}

fn envelope(object: Map<String, Value>) -> Result<RawCall, FormatViolation> {
    if let Some(extra) = object.keys().find(|k| *k != "name" && *k != "arguments") {
        return Err(FormatViolation::new(
            ViolationKind::ExtraProperty,
            format!("unexpected top-level key `{extra}`; a call has only `name` and `arguments`"),
        ));
    }
    let name = match object.get("name") {
        Some(Value::String(n)) => n.clone(),
        _ => return Err(FormatViolation::new(ViolationKind::MissingRequired, "call has no `name` string")),
    };
    let arguments = match object.get("arguments") {
        Some(Value::Object(a)) => a.clone(),
        Some(Value::String(s)) => match serde_json::from_str::<Value>(s) {
            Ok(Value::Object(a)) => a,
            _ => {
                return Err(FormatViolation::new(
                    ViolationKind::NotJson,
                    "`arguments` string does not hold a JSON object",
                ))
            }
        },
        Some(other) => {
            return Err(FormatViolation::new(
                ViolationKind::NotJson,
                format!("`arguments` must be an object, got {other}"),
            ))
        }
        None => return Err(FormatViolation::new(ViolationKind::MissingRequired, "call has no `arguments`")),
    };
    Ok(RawCall { name, arguments })
}

/// Extracts exactly one call envelope from a model response.
pub fn parse_envelope(raw: &str) -> Result<RawCall, FormatViolation> {
    let body = strip_fence(raw);
    if body.is_empty() {
        return Err(FormatViolation::new(ViolationKind::NotJson, "empty response"));
    }
    match serde_json::from_str::<Value>(body) {
        Ok(Value::Object(object)) => envelope(object),
        Ok(Value::Array(items)) if items.len() >= 2 => Err(FormatViolation::new(
            ViolationKind::MultipleCalls,
            format!("{} calls in one response", items.len()),
        )),
        Ok(Value::Array(_)) => {
            Err(FormatViolation::new(ViolationKind::NotJson, "expected a single call object, got an array"))
        }
        Ok(other) => Err(FormatViolation::new(ViolationKind::NotJson, format!("expected a call object, got {other}"))),
        Err(parse_error) => {
            let objects = scan_objects(body);
            if objects.len() >= 2 {
                return Err(FormatViolation::new(
                    ViolationKind::MultipleCalls,
                    format!("{} call objects in one response", objects.len()),
                ));
            }
            let starts_structured = body.starts_with('{') || body.starts_with('[');
            match objects.first() {
                Some((start, _)) if !(starts_structured && *start != 0) => Err(FormatViolation::new(
                    ViolationKind::FreeTextOutsideCall,
                    "text surrounds the call object",
                )),
                _ => Err(FormatViolation::new(ViolationKind::NotJson, parse_error.to_string())),
            }
        }
    }
}

/// Parses one dialogue-system emission into a validated call. Total: every
/// input yields exactly one of `Ok` or `Err`.
pub fn parse_tool_call(raw: &str) -> Result<ToolCall, FormatViolation> {
    let call = parse_envelope(raw)?;
    let function = FunctionName::parse(&call.name).ok_or_else(|| {
        FormatViolation::new(ViolationKind::UnknownFunction, format!("`{}` is not a schema function", call.name))
    })?;
    validate_arguments(ToolCall::new(function, call.arguments), schema(function))
}

pub fn validate_arguments(call: ToolCall, schema: &FunctionSchema) -> Result<ToolCall, FormatViolation> {
    if call.function.as_str() != schema.name {
        return Err(FormatViolation::new(
            ViolationKind::UnknownFunction,
            format!("call to {} checked against schema {}", call.function, schema.name),
        ));
    }
    schema.validate_map(&call.arguments)?;
    Ok(call)
}

/// Parses a sub-module emission against one of `schemas` by name.
pub fn parse_subsystem_call(raw: &str, schemas: &[FunctionSchema]) -> Result<RawCall, FormatViolation> {
    let call = parse_envelope(raw)?;
    let schema = schemas.iter().find(|s| s.name == call.name).ok_or_else(|| {
        FormatViolation::new(ViolationKind::UnknownFunction, format!("`{}` is not expected here", call.name))
    })?;
    schema.validate_map(&call.arguments)?;
    Ok(call)
}

impl fmt::Display for RawCall {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", json!({ "name": self.name, "arguments": self.arguments }))
    }
}
