use std::collections::BTreeMap;
use std::path::Path;

use serde::Deserialize;
use serde_json::Value;

use todsim_core::dialogue_systems::Architecture;
use todsim_core::tool_schema::{builtin_schemas, parse_tool_call, ViolationKind};

fn schema_dir() -> &'static Path {
    Path::new(concat!(env!("CARGO_MANIFEST_DIR"), "/data/schemas"))
}

#[test]
fn builtin_schemas_match_fixture_bytes() {
    let schemas = builtin_schemas();
    assert_eq!(schemas.len(), 8);
    for schema in &schemas {
        let path = schema_dir().join(format!("{}.json", schema.name));
        let on_disk = std::fs::read_to_string(&path).unwrap();
        assert_eq!(schema.to_pretty_json(), on_disk, "{}", path.display());
    }
    let files = std::fs::read_dir(schema_dir()).unwrap().count();
    assert_eq!(files, schemas.len());
}

#[test]
fn fixtures_are_well_formed_tool_documents() {
    for schema in builtin_schemas() {
        let doc: Value = serde_json::from_str(&schema.to_pretty_json()).unwrap();
        assert_eq!(doc["type"], "function");
        assert_eq!(doc["function"]["name"], schema.name.as_str());
        let params = &doc["function"]["parameters"];
        let props = params["properties"].as_object().unwrap();
        for req in params["required"].as_array().unwrap() {
            assert!(props.contains_key(req.as_str().unwrap()), "{}: {req}", schema.name);
        }
    }
}

#[test]
fn architectures_see_the_right_tools() {
    let names = |a: Architecture| -> Vec<String> {
        a.tool_documents().iter().map(|d| d["function"]["name"].as_str().unwrap().to_string()).collect()
    };
    assert_eq!(names(Architecture::Monolithic).len(), 7);
    assert!(!names(Architecture::Monolithic).contains(&"processnextsubsystem".to_string()));
    assert!(names(Architecture::ModularLlm).contains(&"processnextsubsystem".to_string()));
}

#[derive(Deserialize)]
struct Case {
    raw: String,
    kind: ViolationKind,
}

#[test]
fn violation_corpus_is_classified() {
    let corpus: Vec<Case> = include_str!("../data/violations.jsonl")
        .lines()
        .map(|l| serde_json::from_str(l).unwrap())
        .collect();
    assert_eq!(corpus.len(), 30);
    let mut per_kind: BTreeMap<String, usize> = BTreeMap::new();
    for case in &corpus {
        let got = parse_tool_call(&case.raw).map(|_| ()).map_err(|v| v.kind);
        assert_eq!(got, Err(case.kind), "{}", case.raw);
        *per_kind.entry(format!("{:?}", case.kind)).or_default() += 1;
    }
    assert_eq!(per_kind.len(), 8, "{per_kind:?}");
}
