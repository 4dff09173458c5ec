//! Scripted dialogues and the bundled fixture store.
//!
//! A [`DialogueScript`] lists what each player says, one line per call.
//! Lines may be strings or JSON objects (objects are sent compactly), and
//! `{refnum}` / `{refnum:N}` placeholders expand to the reference number the
//! store will issue for the N-th validation call of the dialogue, so a
//! script can relay a booking reference it has not seen.

use std::collections::BTreeMap;

use regex::Regex;
use serde::{Deserialize, Deserializer, Serialize};
use serde_json::{json, Value};

use crate::dialogue_systems::{Architecture, DialogueSystem, ModularLlm, ModularProg, Monolithic, SubModules};
use crate::domain::{Domain, DomainSpec, GenerationParams, Goal, Provenance};
use crate::entity_store::{generate_refnum, EntityStore};
use crate::players::{
    build_system_prompts, build_user_sim_prompt, PlayerContext, PromptError, ScriptedPlayer, SystemRole,
};

fn lines<'de, D: Deserializer<'de>>(de: D) -> Result<Vec<String>, D::Error> {
    let values: Vec<Value> = Vec::deserialize(de)?;
    Ok(values
        .into_iter()
        .map(|v| match v {
            Value::String(s) => s,
            other => other.to_string(),
        })
        .collect())
}

/// Scripts for both sides of one dialogue. `system` drives a monolithic
/// system; `manager` and the three sub-module lists drive the pipelines.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DialogueScript {
    #[serde(deserialize_with = "lines")]
    pub user: Vec<String>,
    #[serde(default, deserialize_with = "lines", skip_serializing_if = "Vec::is_empty")]
    pub system: Vec<String>,
    #[serde(default, deserialize_with = "lines", skip_serializing_if = "Vec::is_empty")]
    pub manager: Vec<String>,
    #[serde(default, deserialize_with = "lines", skip_serializing_if = "Vec::is_empty")]
    pub intent: Vec<String>,
    #[serde(default, deserialize_with = "lines", skip_serializing_if = "Vec::is_empty")]
    pub slots: Vec<String>,
    #[serde(default, deserialize_with = "lines", skip_serializing_if = "Vec::is_empty")]
    pub response: Vec<String>,
}

fn refnum_placeholder() -> &'static Regex {
    static RE: std::sync::OnceLock<Regex> = std::sync::OnceLock::new();
    RE.get_or_init(|| Regex::new(r"\{refnum(?::(\d+))?\}").unwrap())
}

pub fn expand_refnums(line: &str, seed: u64, dialogue_id: &str) -> String {
    refnum_placeholder()
        .replace_all(line, |caps: &regex::Captures<'_>| {
            let n = caps.get(1).and_then(|m| m.as_str().parse().ok()).unwrap_or(0);
            generate_refnum(seed, dialogue_id, n)
        })
        .into_owned()
}

impl DialogueScript {
    pub fn expanded(&self, seed: u64, dialogue_id: &str) -> DialogueScript {
        let e = |v: &Vec<String>| v.iter().map(|l| expand_refnums(l, seed, dialogue_id)).collect();
        DialogueScript {
            user: e(&self.user),
            system: e(&self.system),
            manager: e(&self.manager),
            intent: e(&self.intent),
            slots: e(&self.slots),
            response: e(&self.response),
        }
    }

    pub fn user_player(&self, goal: &Goal, generation: GenerationParams) -> Result<ScriptedPlayer, PromptError> {
        let context = PlayerContext::new(build_user_sim_prompt(goal)?, generation).expect("prompt is a system message");
        Ok(ScriptedPlayer::user(self.user.clone()).with_context(context))
    }

    pub fn dialogue_system(&self, architecture: Architecture, generation: GenerationParams) -> Box<dyn DialogueSystem> {
        let prompts = build_system_prompts(architecture);
        let player = |role: SystemRole, script: &Vec<String>| -> Box<ScriptedPlayer> {
            let context = PlayerContext::new(prompts[&role].clone(), generation).expect("prompt is a system message");
            Box::new(ScriptedPlayer::system(script.clone()).with_context(context))
        };
        let modules = || SubModules {
            intent: player(SystemRole::Intent, &self.intent),
            slots: player(SystemRole::Slots, &self.slots),
            response: player(SystemRole::Response, &self.response),
        };
        match architecture {
            Architecture::Monolithic => Box::new(Monolithic::new(player(SystemRole::Monolithic, &self.system))),
            Architecture::ModularProg => Box::new(ModularProg::new(modules())),
            Architecture::ModularLlm => Box::new(ModularLlm::new(player(SystemRole::Manager, &self.manager), modules())),
        }
    }
}

/// Scripts keyed by goal id, as stored in a scripts file.
pub type ScriptBook = BTreeMap<String, DialogueScript>;

/// The fixture database shipped with the crate.
pub fn bundled_store() -> EntityStore {
    let mut store = EntityStore::new();
    for (domain, text, file) in [
        (Domain::Restaurant, include_str!("../data/db/restaurant.jsonl"), "restaurant.jsonl"),
        (Domain::Hotel, include_str!("../data/db/hotel.jsonl"), "hotel.jsonl"),
        (Domain::Train, include_str!("../data/db/train.jsonl"), "train.jsonl"),
    ] {
        let rows = EntityStore::parse_table(domain, text, std::path::Path::new(file)).expect("bundled table parses");
        store.insert_table(domain, rows);
    }
    store
}

/// The corpus goal fixture shipped with the crate.
pub fn bundled_corpus_goals() -> Vec<Goal> {
    crate::domain::parse_goal_lines(include_str!("../data/goals/corpus_fixture.jsonl")).expect("bundled goals parse")
}

pub const GOLDEN_GOAL_ID: &str = "golden-restaurant";

/// A cheap chinese restaurant in the centre, table for 4 on friday at 18:00.
pub fn golden_goal() -> Goal {
    Goal::new(
        GOLDEN_GOAL_ID,
        vec![DomainSpec::new(Domain::Restaurant)
            .informable("area", "centre")
            .informable("pricerange", "cheap")
            .informable("food", "chinese")
            .booking("people", "4")
            .booking("day", "friday")
            .booking("time", "18:00")],
        "You are looking for a cheap restaurant in the centre that serves chinese food. \
         Book a table for 4 people at 18:00 on friday and get the reference number.",
        Provenance::SyntheticMultiwozStyle,
    )
    .expect("golden goal is valid")
}

fn call(name: &str, arguments: Value) -> String {
    json!({ "name": name, "arguments": arguments }).to_string()
}

fn followup(message: &str) -> String {
    call("followup", json!({ "message": message }))
}

fn golden_query_args() -> Value {
    json!({ "area": "centre", "pricerange": "cheap", "food": "chinese" })
}

fn golden_booking_args() -> Value {
    json!({
        "area": "centre", "pricerange": "cheap", "food": "chinese", "name": "golden wok",
        "people": "4", "day": "friday", "time": "18:00",
    })
}

const GOLDEN_OFFER: &str = "golden wok is a cheap chinese restaurant in the centre. Shall I book a table?";
const GOLDEN_CONFIRM: &str = "Your table at golden wok is booked. The reference number is {refnum}.";

/// The same successful restaurant booking plan for each architecture:
/// query, offer, validate, relay the reference, DONE.
pub fn golden_script(architecture: Architecture) -> DialogueScript {
    let user = vec![
        "I am looking for a cheap chinese restaurant in the centre.".to_string(),
        "golden wok sounds good. Please book a table for 4 people on friday at 18:00.".to_string(),
        "DONE".to_string(),
    ];
    let intent = |i: &str| call("detectintent", json!({ "intent": i, "domain": "restaurant" }));
    let route = |s: &str| call("processnextsubsystem", json!({ "subsystem": s }));
    let first_slots = call("extractslots", golden_query_args());
    let second_slots = call(
        "extractslots",
        json!({ "name": "golden wok", "people": "4", "day": "friday", "time": "18:00" }),
    );
    match architecture {
        Architecture::Monolithic => DialogueScript {
            user,
            system: vec![
                call("retrievefromrestaurantdb", golden_query_args()),
                followup(GOLDEN_OFFER),
                call("validaterestaurantbooking", golden_booking_args()),
                followup(GOLDEN_CONFIRM),
            ],
            ..Default::default()
        },
        Architecture::ModularProg => DialogueScript {
            user,
            intent: vec![intent("dbretrieval-request"), intent("booking-request")],
            slots: vec![first_slots, second_slots],
            response: vec![followup(GOLDEN_OFFER), followup(GOLDEN_CONFIRM)],
            ..Default::default()
        },
        Architecture::ModularLlm => DialogueScript {
            user,
            manager: vec![
                route("intent_detection"),
                route("slot_extraction"),
                call("retrievefromrestaurantdb", golden_query_args()),
                followup(GOLDEN_OFFER),
                route("intent_detection"),
                route("slot_extraction"),
                call("validaterestaurantbooking", golden_booking_args()),
                followup(GOLDEN_CONFIRM),
            ],
            intent: vec![intent("dbretrieval-request"), intent("booking-request")],
            slots: vec![first_slots, second_slots],
            ..Default::default()
        },
    }
}

/// A user who never says DONE against a system that keeps asking.
pub fn never_done_script(turns: usize) -> DialogueScript {
    DialogueScript {
        user: (0..turns).map(|i| format!("still thinking ({i})")).collect(),
        system: (0..turns).map(|_| followup("Could you tell me more?")).collect(),
        ..Default::default()
    }
}

/// A system that emits two calls in one message on its first emission.
pub fn two_calls_script() -> DialogueScript {
    DialogueScript {
        user: vec!["I need a cheap chinese restaurant in the centre.".into()],
        system: vec![format!(
            "{}\n{}",
            call("retrievefromrestaurantdb", golden_query_args()),
            followup("Searching now.")
        )],
        ..Default::default()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn refnum_expansion() {
        let line = expand_refnums("ref {refnum} then {refnum:1}", 7, "g");
        assert_eq!(line, format!("ref {} then {}", generate_refnum(7, "g", 0), generate_refnum(7, "g", 1)));
    }

    #[test]
    fn object_lines_are_serialized() {
        let s: DialogueScript =
            serde_json::from_str(r#"{"user": ["hi"], "system": [{"name": "followup", "arguments": {"message": "a"}}]}"#)
                .unwrap();
        assert_eq!(s.system[0], r#"{"name":"followup","arguments":{"message":"a"}}"#);
    }

    #[test]
    fn bundled_fixtures_load() {
        let store = bundled_store();
        assert!(Domain::ALL.iter().all(|d| store.len(*d) >= 50));
        assert_eq!(bundled_corpus_goals().len(), 20);
    }
}
