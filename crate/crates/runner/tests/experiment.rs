mod common;

use common::{snapshot, write_fixture};
use todsim_core::dialogue_systems::Architecture;
use todsim_core::domain::Outcome;
use todsim_core::Transcript;
use todsim_runner::config::ConfigError;
use todsim_runner::experiment::RunError;
use todsim_runner::{run_experiment, ExperimentConfig};

async fn run(arch: Architecture, seeds: &[u64], concurrency: usize) -> (tempfile::TempDir, std::path::PathBuf) {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = ExperimentConfig::load(&write_fixture(tmp.path(), arch, seeds, concurrency)).unwrap();
    let out = tmp.path().join("out");
    let outcome = run_experiment(&cfg, &out).await.unwrap();
    assert!(outcome.succeeded(), "{:?}", outcome.report.failures);
    (tmp, out)
}

fn transcript(out: &std::path::Path, name: &str) -> Transcript {
    serde_json::from_str(&std::fs::read_to_string(out.join("transcripts").join(name)).unwrap()).unwrap()
}

#[tokio::test]
async fn scripted_run_writes_every_artifact() {
    let (_tmp, out) = run(Architecture::Monolithic, &[0], 4).await;
    for f in ["experiment.json", "report.json", "cost_latency.json"] {
        assert!(out.join(f).is_file(), "{f} missing");
    }
    let names: Vec<_> = snapshot(&out.join("transcripts")).into_iter().map(|(p, _)| p).collect();
    assert_eq!(names.len(), 3);

    let golden = transcript(&out, "golden-restaurant__seed0.json");
    assert_eq!(golden.outcome, Outcome::Completed);
    assert_eq!(golden.bookings.len(), 1);
    assert_eq!(transcript(&out, "stuck__seed0.json").outcome, Outcome::TurnLimitReached);
    assert!(matches!(transcript(&out, "broken__seed0.json").outcome, Outcome::AbortedFormatViolation));

    let report: todsim_runner::experiment::ExperimentReport =
        serde_json::from_str(&std::fs::read_to_string(out.join("report.json")).unwrap()).unwrap();
    let s = &report.summary;
    assert_eq!((s.dialogues, s.completed, s.turn_limit_reached, s.aborted_format_violation), (3, 1, 1, 1));
    assert_eq!(s.dialogue_booking, 1);
    assert_eq!(report.reports.iter().map(|r| r.report.goal_id.as_str()).collect::<Vec<_>>(), ["golden-restaurant", "stuck", "broken"]);
}

#[tokio::test]
async fn reruns_are_byte_identical() {
    let (_a, first) = run(Architecture::Monolithic, &[0, 1, 2], 1).await;
    let (_b, second) = run(Architecture::Monolithic, &[0, 1, 2], 8).await;
    let (sa, sb) = (snapshot(&first), snapshot(&second));
    assert_eq!(sa.len(), 3 + 9);
    assert_eq!(sa, sb);
}

#[tokio::test]
async fn modular_llm_pipeline_runs_the_same_fixture() {
    let (_tmp, out) = run(Architecture::ModularLlm, &[0], 2).await;
    let golden = transcript(&out, "golden-restaurant__seed0.json");
    assert_eq!(golden.outcome, Outcome::Completed);
    assert_eq!(golden.bookings.len(), 1);
}

#[tokio::test]
async fn refnums_differ_across_seeds() {
    let (_tmp, out) = run(Architecture::Monolithic, &[0, 1], 2).await;
    let a = transcript(&out, "golden-restaurant__seed0.json");
    let b = transcript(&out, "golden-restaurant__seed1.json");
    assert_ne!(a.bookings, b.bookings);
}

#[tokio::test]
async fn missing_store_file_is_reported_with_its_path() {
    let tmp = tempfile::tempdir().unwrap();
    let path = write_fixture(tmp.path(), Architecture::Monolithic, &[0], 1);
    let mut cfg = ExperimentConfig::load(&path).unwrap();
    cfg.store.hotel = tmp.path().join("nope/hotel.jsonl");
    let err = run_experiment(&cfg, &tmp.path().join("out")).await.unwrap_err();
    assert!(matches!(err, RunError::Setup(_)), "{err}");
    assert!(err.to_string().contains("nope/hotel.jsonl"), "{err}");
}

#[test]
fn missing_store_key_is_a_config_error() {
    let tmp = tempfile::tempdir().unwrap();
    let path = write_fixture(tmp.path(), Architecture::Monolithic, &[0], 1);
    let mut v: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&path).unwrap()).unwrap();
    v["store"].as_object_mut().unwrap().remove("train");
    std::fs::write(&path, v.to_string()).unwrap();
    match ExperimentConfig::load(&path).unwrap_err() {
        ConfigError::Invalid { field, message, .. } => {
            assert_eq!(field, "store");
            assert!(message.contains("train"), "{message}");
        }
        other => panic!("{other}"),
    }
}

#[tokio::test]
async fn script_book_must_cover_every_goal() {
    let tmp = tempfile::tempdir().unwrap();
    let path = write_fixture(tmp.path(), Architecture::Monolithic, &[0], 1);
    let scripts = tmp.path().join("scripts.json");
    let mut book: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&scripts).unwrap()).unwrap();
    book.as_object_mut().unwrap().remove("stuck");
    std::fs::write(&scripts, book.to_string()).unwrap();
    let cfg = ExperimentConfig::load(&path).unwrap();
    let err = run_experiment(&cfg, &tmp.path().join("out")).await.unwrap_err();
    assert!(err.to_string().contains("no script for goal `stuck`"), "{err}");
}
