//! Brute-force reference for store queries and a generator of filters
//! drawn from values that occur in the bundled tables.

use proptest::prelude::*;

use todsim_core::domain::{Domain, EntityRecord};
use todsim_core::entity_store::{CompareOp, QueryFilter, QUERY_LIMIT};
use todsim_core::scripted::bundled_store;

fn minutes(hhmm: &str) -> u32 {
    let (h, m) = hhmm.split_once(':').unwrap();
    h.parse::<u32>().unwrap() * 60 + m.parse::<u32>().unwrap()
}

fn oracle_cmp(column: &str, have: &str, want: &str) -> std::cmp::Ordering {
    if column == "stars" {
        have.parse::<i64>().unwrap().cmp(&want.parse::<i64>().unwrap())
    } else {
        minutes(have).cmp(&minutes(want))
    }
}

pub fn oracle(rows: &[EntityRecord], filter: &QueryFilter) -> Vec<EntityRecord> {
    let mut out = Vec::new();
    for row in rows {
        let mut keep = true;
        for (col, want) in &filter.equals {
            keep &= row.fields().get(col).is_some_and(|v| v.to_lowercase() == want.to_lowercase());
        }
        for (col, (op, want)) in &filter.compares {
            let ord = oracle_cmp(col, &row.fields()[col], want);
            keep &= match op {
                CompareOp::Eq => ord.is_eq(),
                CompareOp::Ge => ord.is_ge(),
                CompareOp::Le => ord.is_le(),
                CompareOp::Gt => ord.is_gt(),
                CompareOp::Lt => ord.is_lt(),
            };
        }
        if keep && out.len() < QUERY_LIMIT {
            out.push(row.clone());
        }
    }
    out
}

pub fn filter_strategy() -> impl Strategy<Value = QueryFilter> {
    let store = bundled_store();
    let domain = prop::sample::select(Domain::ALL.to_vec());
    domain.prop_flat_map(move |domain| {
        let rows = store.records(domain).to_vec();
        let equality_columns: Vec<&'static str> = match domain {
            Domain::Restaurant => vec!["area", "pricerange", "food", "name"],
            Domain::Hotel => vec!["area", "pricerange", "type", "internet", "parking", "name"],
            Domain::Train => vec!["departure", "destination", "day", "trainid"],
        };
        let ordered: Vec<&'static str> = match domain {
            Domain::Hotel => vec!["stars"],
            Domain::Train => vec!["leaveat", "arriveby"],
            Domain::Restaurant => vec![],
        };
        let row_pick = prop::sample::select(rows);
        let eq = prop::collection::vec((prop::sample::select(equality_columns), row_pick.clone(), any::<bool>()), 0..3);
        let cmp_cols = if ordered.is_empty() { vec!["-"] } else { ordered };
        let times = prop_oneof![(0u32..24, 0u32..60).prop_map(|(h, m)| format!("{h:02}:{m:02}"))];
        let cmp = prop::collection::vec(
            (prop::sample::select(cmp_cols), prop::sample::select(CompareOp::ALL.to_vec()), 1u8..=5, times),
            0..3,
        );
        (eq, cmp).prop_map(move |(eq, cmp)| {
            let mut f = QueryFilter::new(domain);
            for (col, row, upper) in eq {
                let v = row.fields()[col].clone();
                f = f.equals(col, &if upper { v.to_uppercase() } else { v });
            }
            for (col, op, stars, time) in cmp {
                match col {
                    "stars" => f = f.compare(col, op, &stars.to_string()).unwrap(),
                    "leaveat" | "arriveby" => f = f.compare(col, op, &time).unwrap(),
                    _ => {}
                }
            }
            f
        })
    })
}

