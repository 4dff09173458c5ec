//! Transcript scoring: Inform and Booking Accuracy per domain and per
//! dialogue, simulator spread, judge-output parsing, Turing-test rate and
//! latency.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::domain::{is_time_column, normalize_time, BookingResult, Domain, Goal, Outcome, Speaker, Transcript};
use crate::entity_store::EntityStore;
use crate::players::{PromptError, TemplateSet};
use crate::scalar::Scalar;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum EvalError {
    #[error("no simulator success rates given")]
    EmptyRates,
    #[error("success rate of `{0}` lies outside [0, 1]")]
    RateOutOfRange(String),
    #[error("no judgments given")]
    NoJudgments,
    #[error("pair `{0}` is judged twice")]
    DuplicatePair(String),
    #[error("transcript has no turns")]
    EmptyTranscript,
}

fn matches_value(column: &str, have: &str, want: &str) -> bool {
    if is_time_column(column) {
        return normalize_time(have).is_some() && normalize_time(have) == normalize_time(want);
    }
    have.trim().eq_ignore_ascii_case(want.trim())
}

/// Whether an entity column satisfies one goal constraint. Train times are
/// bounds: the train must leave at or after `leaveat` and arrive by
/// `arriveby`.
pub fn satisfies(domain: Domain, column: &str, have: &str, want: &str) -> bool {
    let want_trimmed = want.trim();
    if matches!(want_trimmed, "dontcare" | "donotcare") {
        return true;
    }
    if domain == Domain::Train && matches!(column, "leaveat" | "arriveby") {
        let (Some(h), Some(w)) = (normalize_time(have), normalize_time(want)) else {
            return false;
        };
        return if column == "leaveat" { h >= w } else { h <= w };
    }
    if column == "stars" {
        return have.trim().parse::<u8>().ok().is_some_and(|h| want_trimmed.parse::<u8>().ok() == Some(h));
    }
    matches_value(column, have, want)
}

/// `needle` occurs in `haystack` as a whole phrase (both lowercase).
fn mentions(haystack: &str, needle: &str) -> bool {
    if needle.is_empty() {
        return false;
    }
    let mut from = 0;
    while let Some(off) = haystack[from..].find(needle) {
        let start = from + off;
        let end = start + needle.len();
        let before = haystack[..start].chars().next_back().is_none_or(|c| !c.is_alphanumeric());
        let after = haystack[end..].chars().next().is_none_or(|c| !c.is_alphanumeric());
        if before && after {
            return true;
        }
        from = start + needle.chars().next().map_or(1, char::len_utf8);
    }
    false
}

fn is_aborted(transcript: &Transcript) -> bool {
    transcript.outcome == Outcome::AbortedFormatViolation
}

/// Per goal domain: 1 iff an entity named in a followup or booked exists in
/// the store and meets every informable constraint of the goal.
pub fn compute_inform(transcript: &Transcript, goal: &Goal, store: &EntityStore) -> BTreeMap<Domain, u8> {
    let followups: Vec<String> = transcript.followup_messages().map(str::to_lowercase).collect();
    goal.domain_specs()
        .iter()
        .map(|spec| {
            if is_aborted(transcript) {
                return (spec.domain, 0);
            }
            let key_column = spec.domain.key_column();
            let booked: BTreeSet<String> = transcript
                .bookings
                .iter()
                .filter(|b| b.domain() == spec.domain)
                .filter_map(|b| b.confirmed_slots().get(key_column).map(|k| k.trim().to_lowercase()))
                .collect();
            let hit = store.records(spec.domain).iter().any(|record| {
                let Some(key) = record.key().map(str::to_lowercase) else {
                    return false;
                };
                let referenced = booked.contains(&key) || followups.iter().any(|f| mentions(f, &key));
                referenced
                    && spec.informables.iter().all(|(slot, want)| {
                        record.get(slot).is_some_and(|have| satisfies(spec.domain, slot, have, want))
                    })
            });
            (spec.domain, u8::from(hit))
        })
        .collect()
}

fn booking_matches(booking: &BookingResult, goal: &Goal, store: &EntityStore, followups: &[&str]) -> bool {
    let domain = booking.domain();
    let Some(spec) = goal.spec(domain) else {
        return false;
    };
    let slots = booking.confirmed_slots();
    let slots_ok = spec
        .booking_slots
        .iter()
        .all(|(slot, want)| slots.get(slot).is_some_and(|have| matches_value(slot, have, want)));
    if !slots_ok || !followups.iter().any(|f| f.contains(booking.reference_number())) {
        return false;
    }
    if domain != Domain::Train {
        return true;
    }
    let time_goals: Vec<(&String, &String)> =
        spec.informables.iter().filter(|(k, _)| matches!(k.as_str(), "leaveat" | "arriveby")).collect();
    if time_goals.is_empty() {
        return true;
    }
    let Some(train_id) = slots.get("trainid") else {
        return false;
    };
    store
        .records(Domain::Train)
        .iter()
        .filter(|r| r.key().is_some_and(|k| k.eq_ignore_ascii_case(train_id.trim())))
        .any(|r| {
            time_goals.iter().all(|(col, want)| r.get(col).is_some_and(|have| satisfies(domain, col, have, want)))
        })
}

/// Per goal domain with booking slots: 1 iff a validated booking matches the
/// goal's booking slots (and, for trains, its time bounds) and its reference
/// number was relayed to the user verbatim. Domains whose goal asks for no
/// booking are left out.
pub fn compute_booking(transcript: &Transcript, goal: &Goal, store: &EntityStore) -> BTreeMap<Domain, u8> {
    let followups: Vec<&str> = transcript.followup_messages().collect();
    goal.domain_specs()
        .iter()
        .filter(|spec| !spec.booking_slots.is_empty())
        .map(|spec| {
            let hit = !is_aborted(transcript)
                && transcript
                    .bookings
                    .iter()
                    .filter(|b| b.domain() == spec.domain)
                    .any(|b| booking_matches(b, goal, store, &followups));
            (spec.domain, u8::from(hit))
        })
        .collect()
}

/// All-domains-succeed aggregation. `None` when there is nothing to score.
pub fn dialogue_level(per_domain: &BTreeMap<Domain, u8>) -> Option<u8> {
    if per_domain.is_empty() {
        None
    } else {
        Some(u8::from(per_domain.values().all(|v| *v == 1)))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationReport {
    pub goal_id: String,
    pub outcome: Outcome,
    pub inform: BTreeMap<Domain, u8>,
    pub booking: BTreeMap<Domain, u8>,
    pub dialogue_inform: u8,
    /// `None` when the goal requests no booking.
    pub dialogue_booking: Option<u8>,
    pub latency_s: f64,
}

pub fn evaluate(transcript: &Transcript, goal: &Goal, store: &EntityStore) -> EvaluationReport {
    let inform = compute_inform(transcript, goal, store);
    let booking = compute_booking(transcript, goal, store);
    EvaluationReport {
        goal_id: goal.id().to_string(),
        outcome: transcript.outcome,
        dialogue_inform: dialogue_level(&inform).unwrap_or(0),
        dialogue_booking: dialogue_level(&booking),
        inform,
        booking,
        latency_s: measure_latency(transcript).unwrap_or(0.0),
    }
}

/// Seconds from the first user turn to the last recorded event.
pub fn measure_latency(transcript: &Transcript) -> Result<f64, EvalError> {
    let last = transcript.turns.last().ok_or(EvalError::EmptyTranscript)?;
    let first = transcript.turns.iter().find(|t| t.speaker == Speaker::User).unwrap_or(&transcript.turns[0]);
    Ok(last.wall_time_ms.saturating_sub(first.wall_time_ms) as f64 / 1000.0)
}

/// Task-success rate of one dialogue system under each user simulator.
#[derive(Debug, Clone, PartialEq)]
pub struct RobustnessInput<S> {
    pub success_by_simulator: BTreeMap<String, S>,
}

impl<S: Scalar> RobustnessInput<S> {
    pub fn new<I, K>(rates: I) -> Self
    where
        I: IntoIterator<Item = (K, S)>,
        K: Into<String>,
    {
        Self { success_by_simulator: rates.into_iter().map(|(k, v)| (k.into(), v)).collect() }
    }
}

/// Max minus min of the success rates; lower means more robust.
pub fn us_spread<S: Scalar>(input: &RobustnessInput<S>) -> Result<S, EvalError> {
    let (zero, one) = (S::zero(), S::one());
    let mut values = input.success_by_simulator.iter();
    let (_, first) = values.next().ok_or(EvalError::EmptyRates)?;
    let (mut lo, mut hi) = (first.clone(), first.clone());
    for (id, v) in &input.success_by_simulator {
        if !(*v >= zero && *v <= one) {
            return Err(EvalError::RateOutOfRange(id.clone()));
        }
        if *v < lo {
            lo = v.clone();
        }
        if *v > hi {
            hi = v.clone();
        }
    }
    Ok(hi - lo)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct JudgeScores {
    pub task_completion: bool,
    pub naturalness_user: u8,
    pub naturalness_system: u8,
    pub coherence_user: u8,
    pub coherence_system: u8,
    pub diversity_user: u8,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum JudgeParseError {
    #[error("expected 6 comma-separated fields, found {0}")]
    Arity(usize),
    #[error("task completion must be `Yes` or `No`, got `{0}`")]
    Completion(String),
    #[error("field `{field}` = `{value}` is not an integer in {min}..={max}")]
    Range { field: &'static str, value: String, min: u8, max: u8 },
}

/// Strict parser for the judge's `Yes,5,3,3,1,2` answer. Only surrounding
/// whitespace is tolerated.
pub fn parse_judge_output(raw: &str) -> Result<JudgeScores, JudgeParseError> {
    let fields: Vec<&str> = raw.trim().split(',').collect();
    if fields.len() != 6 {
        return Err(JudgeParseError::Arity(fields.len()));
    }
    let task_completion = match fields[0] {
        "Yes" => true,
        "No" => false,
        other => return Err(JudgeParseError::Completion(other.to_string())),
    };
    let score = |i: usize, field: &'static str, max: u8| -> Result<u8, JudgeParseError> {
        let value = fields[i];
        let err = || JudgeParseError::Range { field, value: value.to_string(), min: 1, max };
        if value.is_empty() || !value.bytes().all(|b| b.is_ascii_digit()) {
            return Err(err());
        }
        value.parse::<u8>().ok().filter(|v| (1..=max).contains(v)).ok_or_else(err)
    };
    Ok(JudgeScores {
        task_completion,
        naturalness_user: score(1, "naturalness_user", 5)?,
        naturalness_system: score(2, "naturalness_system", 5)?,
        coherence_user: score(3, "coherence_user", 3)?,
        coherence_system: score(4, "coherence_system", 3)?,
        diversity_user: score(5, "diversity_user", 3)?,
    })
}

/// The dialogue as the judge sees it: user turns and followup messages.
pub fn render_dialogue(transcript: &Transcript) -> String {
    let mut lines = Vec::new();
    for turn in &transcript.turns {
        match (&turn.speaker, &turn.tool_call) {
            (Speaker::User, _) => lines.push(format!("User: {}", turn.content.trim())),
            (Speaker::DialogueSystem, Some(call)) if call.function == crate::domain::FunctionName::Followup => {
                if let Some(msg) = call.str_arg("message") {
                    lines.push(format!("System: {}", msg.trim()));
                }
            }
            _ => {}
        }
    }
    lines.join("\n")
}

pub fn build_judge_prompt(goal: &Goal, transcript: &Transcript) -> Result<String, PromptError> {
    TemplateSet::builtin()
        .judge
        .render(&[("user_goal", goal.text()), ("dialogue", &render_dialogue(transcript))])
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Preference {
    Generated,
    GroundTruth,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Judgment {
    pub pair_id: String,
    pub preferred: Preference,
}

/// Fraction of pairs where the generated dialogue was preferred.
pub fn turing_rate<S: Scalar>(judgments: &[Judgment]) -> Result<S, EvalError> {
    if judgments.is_empty() {
        return Err(EvalError::NoJudgments);
    }
    let mut seen = BTreeSet::new();
    let mut generated = 0u64;
    for j in judgments {
        if !seen.insert(j.pair_id.as_str()) {
            return Err(EvalError::DuplicatePair(j.pair_id.clone()));
        }
        generated += u64::from(j.preferred == Preference::Generated);
    }
    Ok(S::from_count(generated) / S::from_count(judgments.len() as u64))
}

/// Success counts over a batch of reports. Rates are kept as counts so they
/// can be turned into exact fractions later.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct DomainCounts {
    pub dialogues: u64,
    pub inform: u64,
    pub booking_scored: u64,
    pub booking: u64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ReportSummary {
    pub dialogues: u64,
    pub completed: u64,
    pub aborted_format_violation: u64,
    pub turn_limit_reached: u64,
    pub dialogue_inform: u64,
    pub booking_scored: u64,
    pub dialogue_booking: u64,
    pub per_domain: BTreeMap<Domain, DomainCounts>,
    pub mean_latency_s: f64,
}

impl ReportSummary {
    pub fn from_reports(reports: &[EvaluationReport]) -> Self {
        let mut s = ReportSummary { dialogues: reports.len() as u64, ..Default::default() };
        let mut latency = 0.0;
        for r in reports {
            match r.outcome {
                Outcome::Completed => s.completed += 1,
                Outcome::AbortedFormatViolation => s.aborted_format_violation += 1,
                Outcome::TurnLimitReached => s.turn_limit_reached += 1,
            }
            s.dialogue_inform += u64::from(r.dialogue_inform);
            if let Some(b) = r.dialogue_booking {
                s.booking_scored += 1;
                s.dialogue_booking += u64::from(b);
            }
            for (domain, v) in &r.inform {
                let c = s.per_domain.entry(*domain).or_default();
                c.dialogues += 1;
                c.inform += u64::from(*v);
            }
            for (domain, v) in &r.booking {
                let c = s.per_domain.entry(*domain).or_default();
                c.booking_scored += 1;
                c.booking += u64::from(*v);
            }
            latency += r.latency_s;
        }
        if !reports.is_empty() {
            s.mean_latency_s = latency / reports.len() as f64;
        }
        s
    }

    /// Dialogue-level booking accuracy as an exact fraction, `None` when no
    /// dialogue asked for a booking.
    pub fn booking_rate<S: Scalar>(&self) -> Option<S> {
        (self.booking_scored > 0).then(|| S::from_count(self.dialogue_booking) / S::from_count(self.booking_scored))
    }

    pub fn inform_rate<S: Scalar>(&self) -> Option<S> {
        (self.dialogues > 0).then(|| S::from_count(self.dialogue_inform) / S::from_count(self.dialogues))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use num_rational::Ratio;

    fn q(s: &str) -> Ratio<i64> {
        Ratio::from_decimal(s).unwrap()
    }

    #[test]
    fn spread_examples() {
        let rates = ["0.42", "0.75", "0.47", "0.77", "0.95", "1.00"];
        let input = RobustnessInput::new(rates.iter().enumerate().map(|(i, r)| (format!("us{i}"), q(r))));
        assert_eq!(us_spread(&input).unwrap(), q("0.58"));
        let single = RobustnessInput::new([("x", 0.5f64)]);
        assert_eq!(us_spread(&single).unwrap(), 0.0);
        assert_eq!(us_spread(&RobustnessInput::<f64>::new(Vec::<(String, f64)>::new())), Err(EvalError::EmptyRates));
        assert!(matches!(us_spread(&RobustnessInput::new([("x", 1.5f64)])), Err(EvalError::RateOutOfRange(_))));
    }

    #[test]
    fn judge_parser() {
        let s = parse_judge_output("Yes,5,3,3,1,2").unwrap();
        assert_eq!(
            s,
            JudgeScores {
                task_completion: true,
                naturalness_user: 5,
                naturalness_system: 3,
                coherence_user: 3,
                coherence_system: 1,
                diversity_user: 2
            }
        );
        assert!(!parse_judge_output("No,1,1,1,1,1").unwrap().task_completion);
        assert!(parse_judge_output("Sure! Yes,5,3,3,1,2").is_err());
        assert_eq!(parse_judge_output("Yes,5,3,3,1,2,1"), Err(JudgeParseError::Arity(7)));
        assert!(parse_judge_output("Yes,6,3,3,1,2").is_err());
        assert!(parse_judge_output("Yes,5,3,4,1,2").is_err());
        assert!(parse_judge_output("Yes, 5,3,3,1,2").is_err());
        assert!(parse_judge_output("yes,5,3,3,1,2").is_err());
        assert!(parse_judge_output("Yes,+5,3,3,1,2").is_err());
    }

    fn judgments(generated: usize, total: usize) -> Vec<Judgment> {
        (0..total)
            .map(|i| Judgment {
                pair_id: format!("p{i}"),
                preferred: if i < generated { Preference::Generated } else { Preference::GroundTruth },
            })
            .collect()
    }

    #[test]
    fn turing_rates() {
        assert_eq!(turing_rate::<Ratio<i64>>(&judgments(19, 50)).unwrap(), q("0.38"));
        assert_eq!(turing_rate::<f64>(&judgments(8, 50)).unwrap(), 0.16);
        assert_eq!(turing_rate::<f64>(&judgments(0, 7)).unwrap(), 0.0);
        let mut dup = judgments(1, 3);
        dup[2].pair_id = "p0".into();
        assert_eq!(turing_rate::<f64>(&dup), Err(EvalError::DuplicatePair("p0".into())));
        assert_eq!(turing_rate::<f64>(&[]), Err(EvalError::NoJudgments));
    }

    #[test]
    fn dialogue_level_is_and() {
        for mask in 0u8..8 {
            let map: BTreeMap<Domain, u8> =
                Domain::ALL.iter().enumerate().map(|(i, d)| (*d, (mask >> i) & 1)).collect();
            assert_eq!(dialogue_level(&map), Some(u8::from(mask == 7)));
        }
        assert_eq!(dialogue_level(&BTreeMap::new()), None);
    }

    #[test]
    fn phrase_mentions() {
        assert!(mentions("try golden wok today", "golden wok"));
        assert!(mentions("golden wok.", "golden wok"));
        assert!(!mentions("the golden woks", "golden wok"));
        assert!(!mentions("tr10012", "tr1001"));
    }

    #[test]
    fn train_time_bounds() {
        assert!(satisfies(Domain::Train, "leaveat", "09:15", "09:00"));
        assert!(!satisfies(Domain::Train, "leaveat", "08:59", "09:00"));
        assert!(satisfies(Domain::Train, "arriveby", "9:45", "10:00"));
        assert!(!satisfies(Domain::Train, "arriveby", "10:06", "10:00"));
        assert!(satisfies(Domain::Hotel, "stars", "4", "4"));
        assert!(satisfies(Domain::Hotel, "area", "North", "north"));
        assert!(satisfies(Domain::Hotel, "area", "north", "dontcare"));
    }
}
