use std::collections::BTreeMap;

use todsim_core::dialogue_systems::Architecture;
use todsim_core::evaluation::evaluate;
use todsim_core::game_master::{run_dialogue_with_clock, LogicalClock, TOOL_BUDGET_NOTE};
use todsim_core::scripted::{bundled_store, golden_goal, golden_script, never_done_script, two_calls_script, DialogueScript};
use todsim_core::domain::{Outcome, Speaker};
use todsim_core::entity_store::generate_refnum;
use todsim_core::{BookingResult, GameConfig, Goal, Transcript};

const SEED: u64 = 11;

async fn play(goal: &Goal, script: &DialogueScript, arch: Architecture, config: &GameConfig) -> Transcript {
    let script = script.expanded(SEED, goal.id());
    let mut user = script.user_player(goal, config.generation).unwrap();
    let mut system = script.dialogue_system(arch, config.generation);
    let store = bundled_store();
    run_dialogue_with_clock(goal, &mut user, system.as_mut(), &store, config, SEED, &mut LogicalClock::default())
        .await
        .unwrap()
}

#[tokio::test]
async fn golden_monolithic_booking_scores_full_marks() {
    let goal = golden_goal();
    let config = GameConfig::default();
    let t = play(&goal, &golden_script(Architecture::Monolithic), Architecture::Monolithic, &config).await;
    assert_eq!(t.outcome, Outcome::Completed);
    t.validate(15, "DONE").unwrap();

    assert_eq!(t.bookings.len(), 1);
    let refnum = generate_refnum(SEED, goal.id(), 0);
    assert_eq!(t.bookings[0].reference_number(), refnum);
    assert!(t.followup_messages().any(|m| m.contains(&refnum)));

    let report = evaluate(&t, &goal, &bundled_store());
    assert_eq!(report.dialogue_inform, 1);
    assert_eq!(report.dialogue_booking, Some(1));
}

#[tokio::test]
async fn every_architecture_books_the_same_table() {
    let goal = golden_goal();
    let config = GameConfig::default();
    let mut results: BTreeMap<String, Vec<BookingResult>> = BTreeMap::new();
    for arch in [Architecture::Monolithic, Architecture::ModularProg, Architecture::ModularLlm] {
        let t = play(&goal, &golden_script(arch), arch, &config).await;
        assert_eq!(t.outcome, Outcome::Completed, "{arch}: {:#?}", t.turns);
        let report = evaluate(&t, &goal, &bundled_store());
        assert_eq!((report.dialogue_inform, report.dialogue_booking), (1, Some(1)), "{arch}");
        results.insert(arch.to_string(), t.bookings);
    }
    let mut it = results.values();
    let first = it.next().unwrap();
    assert_eq!(first.len(), 1);
    assert!(it.all(|r| r == first), "{results:#?}");
}

#[tokio::test]
async fn never_done_stops_at_the_turn_limit() {
    let goal = golden_goal();
    let config = GameConfig::default();
    let t = play(&goal, &never_done_script(40), Architecture::Monolithic, &config).await;
    assert_eq!(t.outcome, Outcome::TurnLimitReached);
    assert_eq!(t.user_turns().count(), 15);
    t.validate(15, "DONE").unwrap();
    let report = evaluate(&t, &goal, &bundled_store());
    assert_eq!(report.dialogue_inform, 0);
}

#[tokio::test]
async fn two_calls_in_one_message_abort() {
    let goal = golden_goal();
    let t = play(&goal, &two_calls_script(), Architecture::Monolithic, &GameConfig::default()).await;
    assert_eq!(t.outcome, Outcome::AbortedFormatViolation);
    let last = t.turns.last().unwrap();
    assert_eq!(last.speaker, Speaker::GameMaster);
    assert!(last.content.contains("multiple_calls"), "{}", last.content);
    let report = evaluate(&t, &goal, &bundled_store());
    assert_eq!((report.dialogue_inform, report.dialogue_booking), (0, Some(0)));
}

#[tokio::test]
async fn looping_system_hits_the_tool_budget() {
    let goal = golden_goal();
    let query = r#"{"name": "retrievefromrestaurantdb", "arguments": {"area": "centre"}}"#;
    let script = DialogueScript {
        user: vec!["anything in the centre?".into()],
        system: vec![query.to_string(); 30],
        ..Default::default()
    };
    let config = GameConfig { max_tool_steps_per_turn: 4, ..GameConfig::default() };
    let t = play(&goal, &script, Architecture::Monolithic, &config).await;
    assert_eq!(t.outcome, Outcome::AbortedFormatViolation);
    let ds_turns = t.turns.iter().filter(|x| x.speaker == Speaker::DialogueSystem).count();
    assert_eq!(ds_turns, 4);
    assert!(t.turns.last().unwrap().content.contains(TOOL_BUDGET_NOTE));
}

#[tokio::test]
async fn subsystem_violation_aborts_the_pipeline() {
    let goal = golden_goal();
    let script = DialogueScript {
        user: vec!["hello".into()],
        intent: vec![r#"{"name": "detectintent", "arguments": {"intent": "chit-chat-ish", "domain": "general"}}"#.into()],
        ..Default::default()
    };
    let t = play(&goal, &script, Architecture::ModularProg, &GameConfig::default()).await;
    assert_eq!(t.outcome, Outcome::AbortedFormatViolation);
    assert!(t.turns.iter().any(|x| x.speaker == Speaker::Subsystem));
    let last = &t.turns.last().unwrap().content;
    assert!(last.contains("enum_violation"), "{last}");
}

#[tokio::test]
async fn scripted_runs_are_bit_identical() {
    let goal = golden_goal();
    for arch in [Architecture::Monolithic, Architecture::ModularProg, Architecture::ModularLlm] {
        let a = play(&goal, &golden_script(arch), arch, &GameConfig::default()).await;
        let b = play(&goal, &golden_script(arch), arch, &GameConfig::default()).await;
        assert_eq!(serde_json::to_vec(&a).unwrap(), serde_json::to_vec(&b).unwrap());
    }
}
