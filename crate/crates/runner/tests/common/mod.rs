#![allow(dead_code)]

use std::path::{Path, PathBuf};

use serde_json::json;
use todsim_core::dialogue_systems::Architecture;
use todsim_core::domain::to_json_lines;
use todsim_core::scripted::{golden_goal, golden_script, never_done_script, two_calls_script, ScriptBook};
use todsim_core::Goal;

pub fn db_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../core/data/db")
}

fn renamed(goal: &Goal, id: &str) -> Goal {
    let mut v = serde_json::to_value(goal).unwrap();
    v["id"] = json!(id);
    serde_json::from_value(v).unwrap()
}

/// Three goals over the same restaurant request: one booked, one that
/// never ends, one aborted on a format violation.
pub fn write_fixture(dir: &Path, architecture: Architecture, seeds: &[u64], concurrency: usize) -> PathBuf {
    let golden = golden_goal();
    let goals = vec![golden.clone(), renamed(&golden, "stuck"), renamed(&golden, "broken")];
    std::fs::write(dir.join("goals.jsonl"), to_json_lines(&goals)).unwrap();

    let (mut stuck, mut broken) = (never_done_script(15), two_calls_script());
    if architecture == Architecture::ModularLlm {
        // the manager plays the monolithic part
        stuck.manager = std::mem::take(&mut stuck.system);
        broken.manager = std::mem::take(&mut broken.system);
    }
    let book: ScriptBook = [
        (golden.id().to_string(), golden_script(architecture)),
        ("stuck".to_string(), stuck),
        ("broken".to_string(), broken),
    ]
    .into();
    std::fs::write(dir.join("scripts.json"), serde_json::to_string_pretty(&book).unwrap()).unwrap();

    let db = db_dir();
    let config = json!({
        "name": "fixture",
        "goals": "goals.jsonl",
        "store": {
            "restaurant": db.join("restaurant.jsonl"),
            "hotel": db.join("hotel.jsonl"),
            "train": db.join("train.jsonl"),
        },
        "architecture": architecture,
        "user": {"backend": "scripted", "label": "scripted-us", "scripts": "scripts.json"},
        "system": {"backend": "scripted", "label": "scripted-ds", "scripts": "scripts.json"},
        "seeds": seeds,
        "concurrency": concurrency,
    });
    let path = dir.join("config.json");
    std::fs::write(&path, serde_json::to_string_pretty(&config).unwrap()).unwrap();
    path
}

/// Every file under `dir`, relative path and bytes, sorted.
pub fn snapshot(dir: &Path) -> Vec<(PathBuf, Vec<u8>)> {
    let mut out = Vec::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in std::fs::read_dir(&d).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                out.push((p.strip_prefix(dir).unwrap().to_path_buf(), std::fs::read(&p).unwrap()));
            }
        }
    }
    out.sort();
    out
}
