//! Token-price and FLOP-price cost accounting.
//!
//! Token counts come from a framework-internal tokenizer (whitespace split by
//! default), so every dollar figure here is an indicative estimate, not a
//! bill.

use std::collections::BTreeMap;
use std::ops::{Add, AddAssign};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::scalar::Scalar;

pub const WHITESPACE_TOKENIZER: &str = "whitespace";

/// Registered tokenizer ids.
pub const TOKENIZERS: [&str; 1] = [WHITESPACE_TOKENIZER];

pub const DEFAULT_USD_PER_PETAFLOP: &str = "0.05";

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum CostError {
    #[error("unknown tokenizer `{0}`")]
    UnknownTokenizer(String),
    #[error("cost input `{0}` is negative")]
    Negative(&'static str),
    #[error("model `{0}` is not in the price table")]
    UnknownModel(String),
    #[error("price table: {0}")]
    Table(String),
}

pub fn count_tokens(text: &str, tokenizer: &str) -> Result<u64, CostError> {
    match tokenizer {
        WHITESPACE_TOKENIZER => Ok(text.split_whitespace().count() as u64),
        other => Err(CostError::UnknownTokenizer(other.to_string())),
    }
}

/// Running token totals of one player.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct TokenUsage {
    pub prompt_tokens: u64,
    pub response_tokens: u64,
    pub calls: u64,
}

impl TokenUsage {
    pub fn record(&mut self, prompt_tokens: u64, response_tokens: u64) {
        self.prompt_tokens += prompt_tokens;
        self.response_tokens += response_tokens;
        self.calls += 1;
    }

    pub fn total(&self) -> u64 {
        self.prompt_tokens + self.response_tokens
    }
}

impl Add for TokenUsage {
    type Output = TokenUsage;

    fn add(self, rhs: Self) -> Self {
        TokenUsage {
            prompt_tokens: self.prompt_tokens + rhs.prompt_tokens,
            response_tokens: self.response_tokens + rhs.response_tokens,
            calls: self.calls + rhs.calls,
        }
    }
}

impl AddAssign for TokenUsage {
    fn add_assign(&mut self, rhs: Self) {
        *self = *self + rhs;
    }
}

/// Everything the two cost formulas need.
#[derive(Debug, Clone, PartialEq)]
pub struct CostInputs<S> {
    /// Prompt tokens.
    pub p: S,
    /// Response tokens.
    pub r: S,
    /// USD per input token.
    pub c_i: S,
    /// USD per output token.
    pub c_o: S,
    /// Model parameter count.
    pub params: S,
    /// USD per petaFLOP.
    pub c_pf: S,
}

impl<S: Scalar> CostInputs<S> {
    pub fn new(p: S, r: S, c_i: S, c_o: S, params: S) -> Self {
        let c_pf = S::from_decimal(DEFAULT_USD_PER_PETAFLOP).expect("default rate parses");
        Self { p, r, c_i, c_o, params, c_pf }
    }

    pub fn with_c_pf(mut self, c_pf: S) -> Self {
        self.c_pf = c_pf;
        self
    }

    pub fn validate(&self) -> Result<(), CostError> {
        let zero = S::zero();
        for (name, v) in [
            ("p", &self.p),
            ("r", &self.r),
            ("c_i", &self.c_i),
            ("c_o", &self.c_o),
            ("params", &self.params),
            ("c_pf", &self.c_pf),
        ] {
            if *v < zero {
                return Err(CostError::Negative(name));
            }
        }
        Ok(())
    }
}

/// `p·c_i + r·c_o`
pub fn token_cost<S: Scalar>(inputs: &CostInputs<S>) -> S {
    inputs.p.clone() * inputs.c_i.clone() + inputs.r.clone() * inputs.c_o.clone()
}

/// Two FLOPs per parameter per token, priced per petaFLOP:
/// `(p + r)·2·params / 1e15 · c_pf`.
pub fn flop_cost<S: Scalar>(inputs: &CostInputs<S>) -> S {
    let flops_per_token = S::from_count(2) * inputs.params.clone();
    let peta = (inputs.p.clone() + inputs.r.clone()) * flops_per_token / S::from_count(1_000_000_000_000_000);
    peta * inputs.c_pf.clone()
}

/// One row of the price table.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelPrice {
    pub c_i: f64,
    pub c_o: f64,
    pub params: f64,
}

fn decimal<S: Scalar>(x: f64) -> S {
    // Display gives the shortest round-trip literal, which rationals then
    // take exactly (1e-6 stays 1/1000000 instead of its binary neighbour).
    S::from_decimal(&format!("{x}")).or_else(|| S::from_f64(x)).expect("finite price")
}

impl ModelPrice {
    pub fn inputs<S: Scalar>(&self, usage: TokenUsage) -> CostInputs<S> {
        CostInputs::new(
            S::from_count(usage.prompt_tokens),
            S::from_count(usage.response_tokens),
            decimal(self.c_i),
            decimal(self.c_o),
            decimal(self.params),
        )
    }
}

/// Model id to prices. Loaded from a JSON object.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct PriceTable {
    pub models: BTreeMap<String, ModelPrice>,
}

impl PriceTable {
    pub fn from_json(text: &str) -> Result<Self, CostError> {
        let table: PriceTable = serde_json::from_str(text).map_err(|e| CostError::Table(e.to_string()))?;
        for (model, price) in &table.models {
            if !(price.c_i >= 0.0 && price.c_o >= 0.0 && price.params >= 0.0) {
                return Err(CostError::Table(format!("`{model}` has a negative or non-finite price")));
            }
        }
        Ok(table)
    }

    pub fn load(path: &Path) -> Result<Self, CostError> {
        let text = std::fs::read_to_string(path).map_err(|e| CostError::Table(format!("{}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    pub fn get(&self, model: &str) -> Result<&ModelPrice, CostError> {
        self.models.get(model).ok_or_else(|| CostError::UnknownModel(model.to_string()))
    }
}

/// Token and dollar totals of one dialogue or one batch.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct CostSummary {
    pub prompt_tokens: u64,
    pub response_tokens: u64,
    pub token_cost_usd: f64,
    pub flop_cost_usd: f64,
}

impl CostSummary {
    pub fn price(usage: TokenUsage, price: &ModelPrice) -> Self {
        let inputs: CostInputs<f64> = price.inputs(usage);
        Self {
            prompt_tokens: usage.prompt_tokens,
            response_tokens: usage.response_tokens,
            token_cost_usd: token_cost(&inputs),
            flop_cost_usd: flop_cost(&inputs),
        }
    }
}

impl Add for CostSummary {
    type Output = CostSummary;

    fn add(self, rhs: Self) -> Self {
        CostSummary {
            prompt_tokens: self.prompt_tokens + rhs.prompt_tokens,
            response_tokens: self.response_tokens + rhs.response_tokens,
            token_cost_usd: self.token_cost_usd + rhs.token_cost_usd,
            flop_cost_usd: self.flop_cost_usd + rhs.flop_cost_usd,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use num_rational::BigRational;

    #[test]
    fn token_cost_examples() {
        let zero = CostInputs::new(0.0, 0.0, 1e-6, 2e-6, 8e9);
        assert_eq!(token_cost(&zero), 0.0);
        let x = CostInputs::new(1000.0, 500.0, 1e-6, 2e-6, 8e9);
        assert_eq!(token_cost(&x), 0.002);
    }

    #[test]
    fn flop_cost_worked_example() {
        let x = CostInputs::new(600.0, 400.0, 0.0, 0.0, 8e9);
        assert_eq!(flop_cost(&x), 8e-4);
        let q = |s: &str| BigRational::from_decimal(s).unwrap();
        let x = CostInputs::new(q("600"), q("400"), q("0"), q("0"), q("8e9"));
        assert_eq!(flop_cost(&x), q("0.0008"));
    }

    #[test]
    fn tokenizer_registry() {
        assert_eq!(count_tokens("", WHITESPACE_TOKENIZER), Ok(0));
        assert_eq!(count_tokens("a b c", WHITESPACE_TOKENIZER), Ok(3));
        assert_eq!(count_tokens(" a\n\tb  ", WHITESPACE_TOKENIZER), Ok(2));
        assert!(matches!(count_tokens("a", "bpe"), Err(CostError::UnknownTokenizer(_))));
    }

    #[test]
    fn negative_inputs_rejected() {
        let x = CostInputs::new(1.0, -1.0, 0.0, 0.0, 1.0);
        assert_eq!(x.validate(), Err(CostError::Negative("r")));
    }

    #[test]
    fn price_table_parse() {
        let t = PriceTable::from_json(r#"{"m": {"c_i": 1e-6, "c_o": 2e-6, "params": 8e9}}"#).unwrap();
        let usage = TokenUsage { prompt_tokens: 1000, response_tokens: 500, calls: 1 };
        let s = CostSummary::price(usage, t.get("m").unwrap());
        assert_eq!(s.token_cost_usd, 0.002);
        let exact: CostInputs<BigRational> = t.get("m").unwrap().inputs(usage);
        assert_eq!(exact.c_i, BigRational::new(1.into(), 1_000_000.into()));
        assert!(t.get("other").is_err());
        assert!(PriceTable::from_json(r#"{"m": {"c_i": -1, "c_o": 0, "params": 1}}"#).is_err());
    }
}
