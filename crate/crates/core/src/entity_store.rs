//! In-memory domain databases: line-JSON loading, filtered lookup capped at
//! five rows, booking validation and reference-number generation.

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};
use sha2::{Digest, Sha256};

use crate::domain::{is_stars_column, is_time_column, BookingResult, Domain, EntityRecord, FunctionName, ToolCall};

/// Maximum number of rows a lookup returns.
pub const QUERY_LIMIT: usize = 5;

/// Booking arguments that never take part in entity matching.
const INFORMATIONAL_ARGS: [&str; 5] = ["phone", "postcode", "address", "price", "duration"];

#[derive(Debug, thiserror::Error)]
pub enum LoadError {
    #[error("{file}: {source}")]
    Io {
        file: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{file}:{line}: {reason}")]
    Row { file: PathBuf, line: usize, reason: String },
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum QueryError {
    #[error("unknown {domain} column `{column}`")]
    UnknownColumn { domain: Domain, column: String },
    #[error("column `{0}` does not support ordered comparison")]
    NotComparable(String),
    #[error("unknown comparison operator `{0}`")]
    BadOperator(String),
    #[error("malformed filter for `{column}`: {reason}")]
    Malformed { column: String, reason: String },
    #[error("{0} is not a retrieval function")]
    NotRetrieval(FunctionName),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum CompareOp {
    #[serde(rename = "=")]
    Eq,
    #[serde(rename = ">=")]
    Ge,
    #[serde(rename = "<=")]
    Le,
    #[serde(rename = ">")]
    Gt,
    #[serde(rename = "<")]
    Lt,
}

impl CompareOp {
    pub const ALL: [CompareOp; 5] = [CompareOp::Eq, CompareOp::Ge, CompareOp::Le, CompareOp::Gt, CompareOp::Lt];

    pub fn holds(self, ordering: std::cmp::Ordering) -> bool {
        use std::cmp::Ordering::*;
        match self {
            CompareOp::Eq => ordering == Equal,
            CompareOp::Ge => ordering != Less,
            CompareOp::Le => ordering != Greater,
            CompareOp::Gt => ordering == Greater,
            CompareOp::Lt => ordering == Less,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            CompareOp::Eq => "=",
            CompareOp::Ge => ">=",
            CompareOp::Le => "<=",
            CompareOp::Gt => ">",
            CompareOp::Lt => "<",
        }
    }
}

impl FromStr for CompareOp {
    type Err = QueryError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        CompareOp::ALL
            .into_iter()
            .find(|op| op.as_str() == s)
            .ok_or_else(|| QueryError::BadOperator(s.to_string()))
    }
}

impl fmt::Display for CompareOp {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct QueryFilter {
    pub domain: Domain,
    pub equals: BTreeMap<String, String>,
    pub compares: BTreeMap<String, (CompareOp, String)>,
}

impl QueryFilter {
    pub fn new(domain: Domain) -> Self {
        Self { domain, equals: BTreeMap::new(), compares: BTreeMap::new() }
    }

    pub fn equals(mut self, column: &str, value: &str) -> Self {
        self.equals.insert(column.to_string(), value.to_string());
        self
    }

    /// Ordered comparison; only stars and HH:MM columns qualify.
    pub fn compare(mut self, column: &str, op: CompareOp, value: &str) -> Result<Self, QueryError> {
        if !(is_stars_column(column) || is_time_column(column)) {
            return Err(QueryError::NotComparable(column.to_string()));
        }
        self.compares.insert(column.to_string(), (op, value.to_string()));
        Ok(self)
    }

    /// Builds a filter from a validated `retrievefrom*db` call.
    pub fn from_call(call: &ToolCall) -> Result<Self, QueryError> {
        let domain = call.function.retrieval_domain().ok_or(QueryError::NotRetrieval(call.function))?;
        let mut filter = QueryFilter::new(domain);
        for (column, value) in &call.arguments {
            match value {
                Value::String(s) => filter = filter.equals(column, s),
                Value::Object(obj) => {
                    let get = |k: &str| obj.get(k).and_then(Value::as_str);
                    let (Some(op), Some(v)) = (get("operator"), get("value")) else {
                        return Err(QueryError::Malformed {
                            column: column.clone(),
                            reason: "expected {operator, value}".into(),
                        });
                    };
                    filter = filter.compare(column, op.parse()?, v)?;
                }
                other => {
                    return Err(QueryError::Malformed { column: column.clone(), reason: format!("value {other}") })
                }
            }
        }
        Ok(filter)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BookingFailureReason {
    NoMatchingEntity,
    SlotMismatch,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize, thiserror::Error)]
#[error("booking failed ({reason:?}): {detail}")]
pub struct BookingFailure {
    pub reason: BookingFailureReason,
    pub detail: String,
}

/// Inputs of deterministic reference-number generation for one dialogue.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RefnumContext {
    pub seed: u64,
    pub dialogue_id: String,
    pub counter: u64,
}

impl RefnumContext {
    pub fn new(seed: u64, dialogue_id: impl Into<String>) -> Self {
        Self { seed, dialogue_id: dialogue_id.into(), counter: 0 }
    }

    pub fn current(&self) -> String {
        generate_refnum(self.seed, &self.dialogue_id, self.counter)
    }
}

const REFNUM_ALPHABET: &[u8; 36] = b"ABCDEFGHIJKLMNOPQRSTUVWXYZ0123456789";

/// Eight uppercase alphanumerics derived from a SHA-256 of the inputs.
pub fn generate_refnum(seed: u64, dialogue_id: &str, counter: u64) -> String {
    let mut hasher = Sha256::new();
    hasher.update(seed.to_le_bytes());
    hasher.update((dialogue_id.len() as u64).to_le_bytes());
    hasher.update(dialogue_id.as_bytes());
    hasher.update(counter.to_le_bytes());
    let digest = hasher.finalize();
    digest[..8].iter().map(|b| REFNUM_ALPHABET[(*b % 36) as usize] as char).collect()
}

fn same_text(a: &str, b: &str) -> bool {
    a.trim().to_lowercase() == b.trim().to_lowercase()
}

fn ordered(column: &str, left: &str, right: &str) -> Option<std::cmp::Ordering> {
    if is_stars_column(column) {
        let (l, r): (u8, u8) = (left.trim().parse().ok()?, right.trim().parse().ok()?);
        Some(l.cmp(&r))
    } else {
        Some(left.cmp(right))
    }
}

#[derive(Debug, Clone, Default)]
pub struct EntityStore {
    tables: BTreeMap<Domain, Vec<EntityRecord>>,
}

impl EntityStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert_table(&mut self, domain: Domain, records: Vec<EntityRecord>) {
        self.tables.insert(domain, records);
    }

    pub fn records(&self, domain: Domain) -> &[EntityRecord] {
        self.tables.get(&domain).map(Vec::as_slice).unwrap_or(&[])
    }

    pub fn len(&self, domain: Domain) -> usize {
        self.records(domain).len()
    }

    pub fn is_empty(&self) -> bool {
        self.tables.values().all(Vec::is_empty)
    }

    /// Parses one line-JSON table. `file` only labels errors.
    pub fn parse_table(domain: Domain, text: &str, file: &Path) -> Result<Vec<EntityRecord>, LoadError> {
        let row_error = |line: usize, reason: String| LoadError::Row { file: file.to_path_buf(), line, reason };
        let mut records = Vec::new();
        for (i, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let object: Map<String, Value> =
                serde_json::from_str(line).map_err(|e| row_error(i + 1, e.to_string()))?;
            let mut fields = Vec::with_capacity(object.len());
            for (k, v) in object {
                match v {
                    Value::String(s) => fields.push((k, s)),
                    other => return Err(row_error(i + 1, format!("column `{k}` must be a string, got {other}"))),
                }
            }
            records.push(EntityRecord::new(domain, fields).map_err(|e| row_error(i + 1, e.to_string()))?);
        }
        Ok(records)
    }

    fn check_column(&self, domain: Domain, column: &str) -> Result<(), QueryError> {
        if domain.columns().iter().any(|c| c.eq_ignore_ascii_case(column)) {
            Ok(())
        } else {
            Err(QueryError::UnknownColumn { domain, column: column.to_string() })
        }
    }

    fn matches(record: &EntityRecord, filter: &QueryFilter) -> bool {
        filter.equals.iter().all(|(col, want)| record.get(col).is_some_and(|have| same_text(have, want)))
            && filter.compares.iter().all(|(col, (op, want))| {
                record.get(col).and_then(|have| ordered(col, have, want)).is_some_and(|o| op.holds(o))
            })
    }

    /// Rows matching every filter, in file order, at most [`QUERY_LIMIT`].
    pub fn query(&self, filter: &QueryFilter) -> Result<Vec<EntityRecord>, QueryError> {
        for column in filter.equals.keys().chain(filter.compares.keys()) {
            self.check_column(filter.domain, column)?;
        }
        Ok(self
            .records(filter.domain)
            .iter()
            .filter(|r| Self::matches(r, filter))
            .take(QUERY_LIMIT)
            .cloned()
            .collect())
    }

    /// Checks booking arguments against the table. Stateless: availability is
    /// not modelled, so identical arguments always give the same verdict.
    pub fn validate_booking(
        &self,
        domain: Domain,
        args: &Map<String, Value>,
        refnum: &RefnumContext,
    ) -> Result<BookingResult, BookingFailure> {
        let text_args: BTreeMap<&str, &str> =
            args.iter().filter_map(|(k, v)| v.as_str().map(|s| (k.as_str(), s))).collect();
        let key_column = domain.key_column();
        let Some(key) = text_args.get(key_column) else {
            return Err(BookingFailure {
                reason: BookingFailureReason::NoMatchingEntity,
                detail: format!("no `{key_column}` given"),
            });
        };
        let candidates: Vec<&EntityRecord> = self
            .records(domain)
            .iter()
            .filter(|r| r.get(key_column).is_some_and(|v| same_text(v, key)))
            .collect();
        if candidates.is_empty() {
            return Err(BookingFailure {
                reason: BookingFailureReason::NoMatchingEntity,
                detail: format!("no {domain} named `{key}`"),
            });
        }
        let entity_args: Vec<(&str, &str)> = text_args
            .iter()
            .filter(|(k, _)| domain.columns().contains(k) && !INFORMATIONAL_ARGS.contains(k))
            .map(|(k, v)| (*k, *v))
            .collect();
        let mut first_mismatch = None;
        for record in &candidates {
            let mismatch = entity_args.iter().find(|(col, want)| match record.get(col) {
                Some(have) if is_time_column(col) => have != want.trim(),
                Some(have) => !same_text(have, want),
                None => false,
            });
            match mismatch {
                None => {
                    let confirmed = text_args
                        .iter()
                        .filter(|(k, _)| !INFORMATIONAL_ARGS.contains(k))
                        .map(|(k, v)| (k.to_string(), v.to_string()))
                        .collect();
                    return BookingResult::new(domain, &refnum.current(), confirmed).map_err(|e| BookingFailure {
                        reason: BookingFailureReason::SlotMismatch,
                        detail: e.to_string(),
                    });
                }
                Some((col, want)) => {
                    first_mismatch.get_or_insert_with(|| {
                        format!("`{col}`={want} contradicts {key} ({})", record.get(col).unwrap_or_default())
                    });
                }
            }
        }
        Err(BookingFailure {
            reason: BookingFailureReason::SlotMismatch,
            detail: first_mismatch.unwrap_or_default(),
        })
    }
}

/// Loads one line-JSON file per domain.
pub fn load_store(paths: &BTreeMap<Domain, PathBuf>) -> Result<EntityStore, LoadError> {
    let mut store = EntityStore::new();
    for (domain, path) in paths {
        let text = std::fs::read_to_string(path).map_err(|source| LoadError::Io { file: path.clone(), source })?;
        store.insert_table(*domain, EntityStore::parse_table(*domain, &text, path)?);
    }
    Ok(store)
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    fn table(domain: Domain, rows: &str) -> Vec<EntityRecord> {
        EntityStore::parse_table(domain, rows, Path::new("inline")).unwrap()
    }

    fn small_store() -> EntityStore {
        let mut store = EntityStore::new();
        store.insert_table(
            Domain::Hotel,
            table(
                Domain::Hotel,
                r#"{"name":"cedar lodge","area":"north","pricerange":"moderate","type":"guesthouse","internet":"yes","parking":"yes","stars":"4"}
{"name":"grand hall","area":"centre","pricerange":"expensive","type":"hotel","internet":"yes","parking":"no","stars":"5"}
{"name":"little inn","area":"centre","pricerange":"cheap","type":"guesthouse","internet":"no","parking":"no","stars":"2"}"#,
            ),
        );
        store.insert_table(
            Domain::Train,
            table(
                Domain::Train,
                r#"{"trainid":"TR1001","departure":"cambridge","destination":"ely","day":"monday","leaveat":"09:15","arriveby":"09:32"}
{"trainid":"TR1002","departure":"cambridge","destination":"ely","day":"monday","leaveat":"08:59","arriveby":"09:16"}"#,
            ),
        );
        store
    }

    #[test]
    fn empty_file_gives_empty_table() {
        assert!(table(Domain::Restaurant, "").is_empty());
        assert!(table(Domain::Restaurant, "\n\n").is_empty());
    }

    #[test]
    fn bad_rows_name_the_line() {
        let err = EntityStore::parse_table(Domain::Hotel, "{\"name\":\"a\"}\n{\"Name\":\"b\",\"name\":\"c\"}", Path::new("h.jsonl"))
            .unwrap_err();
        match err {
            LoadError::Row { line, file, .. } => {
                assert_eq!(line, 2);
                assert_eq!(file, PathBuf::from("h.jsonl"));
            }
            other => panic!("unexpected {other:?}"),
        }
        let err = EntityStore::parse_table(Domain::Hotel, "{\"stars\":4}", Path::new("h")).unwrap_err();
        assert!(err.to_string().contains("must be a string"));
        assert!(EntityStore::parse_table(Domain::Hotel, "not json", Path::new("h")).is_err());
    }

    #[test]
    fn query_is_case_insensitive_and_ordered() {
        let store = small_store();
        let rows = store.query(&QueryFilter::new(Domain::Hotel).equals("AREA", "Centre")).unwrap();
        let names: Vec<_> = rows.iter().map(|r| r.key().unwrap()).collect();
        assert_eq!(names, ["grand hall", "little inn"]);
        let rows = store
            .query(&QueryFilter::new(Domain::Hotel).compare("stars", CompareOp::Ge, "4").unwrap())
            .unwrap();
        assert_eq!(rows.len(), 2);
        let rows = store
            .query(&QueryFilter::new(Domain::Train).compare("leaveat", CompareOp::Ge, "09:00").unwrap())
            .unwrap();
        assert_eq!(rows.len(), 1);
        assert_eq!(rows[0].key(), Some("TR1001"));
    }

    #[test]
    fn unknown_column_is_an_error_not_empty() {
        let store = small_store();
        let err = store.query(&QueryFilter::new(Domain::Hotel).equals("colour", "red")).unwrap_err();
        assert!(matches!(err, QueryError::UnknownColumn { .. }));
        assert!(QueryFilter::new(Domain::Hotel).compare("area", CompareOp::Ge, "x").is_err());
    }

    #[test]
    fn filter_from_call() {
        let call = ToolCall::new(
            FunctionName::Retrievefromtraindb,
            json!({"day":"monday","leaveat":{"operator":">=","value":"09:00"}}).as_object().unwrap().clone(),
        );
        let filter = QueryFilter::from_call(&call).unwrap();
        assert_eq!(filter.domain, Domain::Train);
        assert_eq!(filter.compares["leaveat"], (CompareOp::Ge, "09:00".to_string()));
        assert!(QueryFilter::from_call(&ToolCall::followup("x")).is_err());
    }

    fn hotel_args(name: &str, stars: &str) -> Map<String, Value> {
        json!({"area":"north","pricerange":"moderate","type":"guesthouse","internet":"yes","parking":"yes",
               "name":name,"stars":stars,"people":"2","day":"monday","stay":"3","phone":"0000"})
        .as_object()
        .unwrap()
        .clone()
    }

    #[test]
    fn booking_verdicts() {
        let store = small_store();
        let ctx = RefnumContext::new(1, "d");
        let ok = store.validate_booking(Domain::Hotel, &hotel_args("Cedar Lodge", "4"), &ctx).unwrap();
        assert_eq!(ok.reference_number(), generate_refnum(1, "d", 0));
        assert_eq!(ok.confirmed_slots()["stay"], "3");
        assert!(!ok.confirmed_slots().contains_key("phone"));
        let missing = store.validate_booking(Domain::Hotel, &hotel_args("nonexistent palace", "4"), &ctx);
        assert_eq!(missing.unwrap_err().reason, BookingFailureReason::NoMatchingEntity);
        let wrong = store.validate_booking(Domain::Hotel, &hotel_args("cedar lodge", "2"), &ctx);
        assert_eq!(wrong.unwrap_err().reason, BookingFailureReason::SlotMismatch);
    }

    #[test]
    fn train_booking_needs_exact_times() {
        let store = small_store();
        let ctx = RefnumContext::new(1, "d");
        let mut args = json!({"destination":"ely","departure":"cambridge","day":"monday","arriveby":"09:32",
                              "leaveat":"09:15","people":"1","trainid":"tr1001"})
        .as_object()
        .unwrap()
        .clone();
        assert!(store.validate_booking(Domain::Train, &args, &ctx).is_ok());
        args.insert("leaveat".into(), json!("09:10"));
        assert_eq!(
            store.validate_booking(Domain::Train, &args, &ctx).unwrap_err().reason,
            BookingFailureReason::SlotMismatch
        );
    }

    #[test]
    fn refnum_properties() {
        let a = generate_refnum(1, "a", 0);
        assert_eq!(a, generate_refnum(1, "a", 0));
        assert_ne!(a, generate_refnum(1, "a", 1));
        assert_ne!(a, generate_refnum(2, "a", 0));
        assert!(crate::domain::is_reference_number(&a));
    }
}
