//! Synthetic goal sets: MultiWOZ-style combinations unseen in the corpus,
//! and goals drawn from an unrealistic ontology.

use std::collections::{BTreeMap, BTreeSet};

use rand::seq::{IndexedRandom, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::domain::{Domain, DomainError, DomainSpec, Goal, Provenance};

pub const DEFAULT_SINGLE: usize = 60;
pub const DEFAULT_MULTI: usize = 60;

/// Attempts per requested goal before giving up.
const ATTEMPTS_PER_GOAL: usize = 2000;

const MULTI_DOMAIN_PAIRS: [(Domain, Domain); 3] =
    [(Domain::Restaurant, Domain::Hotel), (Domain::Restaurant, Domain::Train), (Domain::Hotel, Domain::Train)];

#[derive(Debug, thiserror::Error)]
pub enum SynthesisError {
    #[error("could only generate {produced} of {requested} unique unseen goals")]
    Exhausted { requested: usize, produced: usize },
    #[error("no template for domain combination `{0}`")]
    MissingTemplate(String),
    #[error("template for `{domain}` leaves `{placeholder}` unfilled")]
    Unfilled { domain: Domain, placeholder: String },
    #[error("ontology: {0}")]
    Ontology(String),
    #[error(transparent)]
    Goal(#[from] DomainError),
}

/// Slot choice and value pools for one domain.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DomainOntology {
    /// Informable slots every goal constrains.
    pub always: Vec<String>,
    /// Informable slots drawn at random, between `optional_min` and
    /// `optional_max` of them.
    pub optional: Vec<String>,
    pub optional_min: usize,
    pub optional_max: usize,
    /// Value pools for informable and booking slots.
    pub values: BTreeMap<String, Vec<String>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Ontology {
    pub domains: BTreeMap<Domain, DomainOntology>,
}

impl Ontology {
    pub fn from_json(text: &str) -> Result<Self, SynthesisError> {
        let ontology: Ontology = serde_json::from_str(text).map_err(|e| SynthesisError::Ontology(e.to_string()))?;
        ontology.check()?;
        Ok(ontology)
    }

    pub fn multiwoz_style() -> Ontology {
        Self::from_json(include_str!("../data/ontology/multiwoz_style.json")).expect("bundled ontology is valid")
    }

    pub fn unrealistic() -> Ontology {
        Self::from_json(include_str!("../data/ontology/unrealistic.json")).expect("bundled ontology is valid")
    }

    fn check(&self) -> Result<(), SynthesisError> {
        let err = |m: String| Err(SynthesisError::Ontology(m));
        for (domain, o) in &self.domains {
            if o.optional_min > o.optional_max || o.optional_max > o.optional.len() {
                return err(format!("{domain}: optional bounds {}..={} do not fit", o.optional_min, o.optional_max));
            }
            for slot in o.always.iter().chain(&o.optional) {
                if !domain.informable_slots().contains(&slot.as_str()) {
                    return err(format!("{domain}: `{slot}` is not an informable slot"));
                }
            }
            for slot in o.always.iter().chain(&o.optional).map(String::as_str).chain(domain.booking_slots().iter().copied()) {
                if o.values.get(slot).is_none_or(Vec::is_empty) {
                    return err(format!("{domain}: no values for `{slot}`"));
                }
            }
        }
        Ok(())
    }

    /// The pool for one slot, empty if the ontology lacks it.
    pub fn pool(&self, domain: Domain, slot: &str) -> &[String] {
        self.domains.get(&domain).and_then(|o| o.values.get(slot)).map(Vec::as_slice).unwrap_or(&[])
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DomainTemplates {
    pub intro: String,
    /// Sentence per informable slot with a `{value}` placeholder.
    pub slots: BTreeMap<String, String>,
    /// Booking sentence with one `{slot}` placeholder per booking slot.
    pub booking: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GoalTemplates {
    pub domains: BTreeMap<Domain, DomainTemplates>,
    /// Keyed by domain names joined with `+`, e.g. `restaurant+hotel`; the
    /// frame holds one `{domain}` placeholder per domain.
    pub combinations: BTreeMap<String, String>,
}

impl GoalTemplates {
    pub fn from_json(text: &str) -> Result<Self, SynthesisError> {
        serde_json::from_str(text).map_err(|e| SynthesisError::Ontology(e.to_string()))
    }

    pub fn builtin() -> GoalTemplates {
        Self::from_json(include_str!("../data/ontology/goal_templates.json")).expect("bundled templates are valid")
    }
}

pub fn combination_key(specs: &[DomainSpec]) -> String {
    specs.iter().map(|s| s.domain.as_str()).collect::<Vec<_>>().join("+")
}

fn fill(domain: Domain, template: &str, values: &BTreeMap<String, String>) -> Result<String, SynthesisError> {
    let mut out = template.to_string();
    for (slot, value) in values {
        out = out.replace(&format!("{{{slot}}}"), value);
    }
    if let Some(start) = out.find('{') {
        let end = out[start..].find('}').map_or(out.len(), |e| start + e + 1);
        return Err(SynthesisError::Unfilled { domain, placeholder: out[start..end].to_string() });
    }
    Ok(out)
}

fn render_domain(spec: &DomainSpec, t: &DomainTemplates) -> Result<String, SynthesisError> {
    let mut parts = vec![t.intro.clone()];
    for slot in spec.domain.informable_slots() {
        if let Some(value) = spec.informables.get(*slot) {
            let template = t.slots.get(*slot).ok_or_else(|| SynthesisError::Unfilled {
                domain: spec.domain,
                placeholder: format!("{slot} sentence"),
            })?;
            parts.push(template.replace("{value}", value));
        }
    }
    if !spec.booking_slots.is_empty() {
        parts.push(fill(spec.domain, &t.booking, &spec.booking_slots)?);
    }
    Ok(parts.join(" "))
}

/// Goal text from templates. Every slot value appears verbatim.
pub fn render_goal_text(specs: &[DomainSpec], templates: &GoalTemplates) -> Result<String, SynthesisError> {
    let key = combination_key(specs);
    let frame = templates.combinations.get(&key).ok_or_else(|| SynthesisError::MissingTemplate(key.clone()))?;
    let mut sections = BTreeMap::new();
    for spec in specs {
        let t = templates.domains.get(&spec.domain).ok_or_else(|| SynthesisError::MissingTemplate(key.clone()))?;
        sections.insert(spec.domain.as_str().to_string(), render_domain(spec, t)?);
    }
    let domain = specs.first().map(|s| s.domain).unwrap_or(Domain::Restaurant);
    fill(domain, frame, &sections)
}

/// Identity of a goal's constraints: slot names with their values, per
/// domain, ignoring text and id.
pub type ComboKey = Vec<(Domain, Vec<(String, String)>, Vec<(String, String)>)>;

fn spec_key(spec: &DomainSpec) -> (Domain, Vec<(String, String)>, Vec<(String, String)>) {
    let norm = |m: &BTreeMap<String, String>| m.iter().map(|(k, v)| (k.clone(), v.trim().to_lowercase())).collect();
    (spec.domain, norm(&spec.informables), norm(&spec.booking_slots))
}

pub fn combo_key(specs: &[DomainSpec]) -> ComboKey {
    let mut key: ComboKey = specs.iter().map(spec_key).collect();
    key.sort();
    key
}

/// Combinations already present in the corpus. A generated goal is unseen
/// only if neither the whole goal nor any of its domain parts occurs here.
#[derive(Debug, Clone, Default)]
pub struct SeenSet {
    goals: BTreeSet<ComboKey>,
    parts: BTreeSet<(Domain, Vec<(String, String)>, Vec<(String, String)>)>,
}

impl SeenSet {
    pub fn from_goals(goals: &[Goal]) -> Self {
        let mut seen = SeenSet::default();
        for g in goals {
            seen.insert(g.domain_specs());
        }
        seen
    }

    fn insert(&mut self, specs: &[DomainSpec]) {
        self.goals.insert(combo_key(specs));
        self.parts.extend(specs.iter().map(spec_key));
    }

    pub fn contains(&self, specs: &[DomainSpec]) -> bool {
        self.goals.contains(&combo_key(specs)) || specs.iter().any(|s| self.parts.contains(&spec_key(s)))
    }
}

fn sample_spec(ontology: &Ontology, domain: Domain, rng: &mut ChaCha8Rng) -> Option<DomainSpec> {
    let o = ontology.domains.get(&domain)?;
    let mut spec = DomainSpec::new(domain);
    let count = rng.random_range(o.optional_min..=o.optional_max);
    let mut optional: Vec<&String> = o.optional.iter().collect();
    optional.shuffle(rng);
    let mut chosen: Vec<&String> = o.always.iter().chain(optional.into_iter().take(count)).collect();
    chosen.sort_by_key(|s| domain.informable_slots().iter().position(|x| x == s));
    for slot in chosen {
        spec = spec.informable(slot, o.values[slot].choose(rng)?);
    }
    for slot in domain.booking_slots() {
        spec = spec.booking(slot, o.values[*slot].choose(rng)?);
    }
    if domain == Domain::Train && spec.informables.get("departure") == spec.informables.get("destination") {
        return None;
    }
    Some(spec)
}

fn generate(
    ontology: &Ontology,
    templates: &GoalTemplates,
    corpus: &SeenSet,
    n_single: usize,
    n_multi: usize,
    seed: u64,
    provenance: Provenance,
    id_prefix: &str,
) -> Result<Vec<Goal>, SynthesisError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut produced = SeenSet::default();
    let mut goals = Vec::with_capacity(n_single + n_multi);
    let plans = (0..n_single)
        .map(|i| vec![Domain::ALL[i % Domain::ALL.len()]])
        .chain((0..n_multi).map(|i| {
            let (a, b) = MULTI_DOMAIN_PAIRS[i % MULTI_DOMAIN_PAIRS.len()];
            vec![a, b]
        }));
    for domains in plans {
        let mut accepted = None;
        for _ in 0..ATTEMPTS_PER_GOAL {
            let Some(specs) = domains.iter().map(|d| sample_spec(ontology, *d, &mut rng)).collect::<Option<Vec<_>>>()
            else {
                continue;
            };
            if !corpus.contains(&specs) && !produced.contains(&specs) {
                accepted = Some(specs);
                break;
            }
        }
        let Some(specs) = accepted else {
            return Err(SynthesisError::Exhausted { requested: n_single + n_multi, produced: goals.len() });
        };
        produced.insert(&specs);
        let text = render_goal_text(&specs, templates)?;
        goals.push(Goal::new(format!("{id_prefix}-{:03}", goals.len() + 1), specs, text, provenance)?);
    }
    Ok(goals)
}

/// `n_single` single-domain and `n_multi` two-domain goals whose slot and
/// value combinations do not occur in `corpus_goals`.
pub fn generate_multiwoz_style(
    ontology: &Ontology,
    templates: &GoalTemplates,
    corpus_goals: &[Goal],
    n_single: usize,
    n_multi: usize,
    seed: u64,
) -> Result<Vec<Goal>, SynthesisError> {
    let corpus = SeenSet::from_goals(corpus_goals);
    generate(ontology, templates, &corpus, n_single, n_multi, seed, Provenance::SyntheticMultiwozStyle, "mwstyle")
}

/// Same structure over an ontology whose value pools are deliberately
/// implausible.
pub fn generate_unrealistic(
    unreal_ontology: &Ontology,
    templates: &GoalTemplates,
    n_single: usize,
    n_multi: usize,
    seed: u64,
) -> Result<Vec<Goal>, SynthesisError> {
    generate(
        unreal_ontology,
        templates,
        &SeenSet::default(),
        n_single,
        n_multi,
        seed,
        Provenance::SyntheticUnrealistic,
        "unreal",
    )
}
