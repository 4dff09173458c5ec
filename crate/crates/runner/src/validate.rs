//! Offline checks over saved transcripts.

use std::path::{Path, PathBuf};

use todsim_core::domain::Speaker;
use todsim_core::tool_schema::parse_tool_call;
use todsim_core::Transcript;

#[derive(Debug, Clone, PartialEq)]
pub struct Finding {
    pub file: PathBuf,
    pub problem: String,
}

/// Files to check: `path` itself, or the `*.json` files under it.
pub fn transcript_files(path: &Path) -> std::io::Result<Vec<PathBuf>> {
    if path.is_file() {
        return Ok(vec![path.to_path_buf()]);
    }
    let mut files = Vec::new();
    let mut stack = vec![path.to_path_buf()];
    while let Some(dir) = stack.pop() {
        for entry in std::fs::read_dir(&dir)? {
            let p = entry?.path();
            if p.is_dir() {
                stack.push(p);
            } else if p.extension().is_some_and(|e| e == "json") {
                files.push(p);
            }
        }
    }
    files.sort();
    Ok(files)
}

/// Structural checks plus re-validation of every recorded tool call.
pub fn check_transcript(t: &Transcript, max_user_turns: usize, done_token: &str) -> Vec<String> {
    let mut problems = Vec::new();
    if let Err(e) = t.validate(max_user_turns, done_token) {
        problems.push(e.to_string());
    }
    for turn in &t.turns {
        if turn.speaker != Speaker::DialogueSystem {
            continue;
        }
        if let Some(call) = &turn.tool_call {
            match parse_tool_call(&call.to_wire()) {
                Ok(again) if &again == call => {}
                Ok(_) => problems.push(format!("turn {}: tool call changes on re-validation", turn.index)),
                Err(v) => problems.push(format!("turn {}: recorded tool call is invalid: {v}", turn.index)),
            }
        }
    }
    problems
}

pub fn validate_path(path: &Path, max_user_turns: usize, done_token: &str) -> std::io::Result<(usize, Vec<Finding>)> {
    let files = transcript_files(path)?;
    let mut findings = Vec::new();
    for file in &files {
        let text = std::fs::read_to_string(file)?;
        match serde_json::from_str::<Transcript>(&text) {
            Ok(t) => findings.extend(
                check_transcript(&t, max_user_turns, done_token)
                    .into_iter()
                    .map(|problem| Finding { file: file.clone(), problem }),
            ),
            Err(e) => findings.push(Finding { file: file.clone(), problem: format!("not a transcript: {e}") }),
        }
    }
    Ok((files.len(), findings))
}
