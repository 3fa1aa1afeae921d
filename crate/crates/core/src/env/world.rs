//! Synthetic question-answering world.
//!
//! Entities carry one value per attribute. Questions either read one
//! attribute of one entity (`Search[X] -> Lookup[a] -> Finish`) or compare
//! that attribute across two to four entities (`Search`/`Lookup` pairs, then
//! `Compare -> Finish`, answered yes/no). A task family is the attribute a
//! question asks about.
//!
//! Query questions come in two flavours: paraphrases of a support question
//! (same gold path, different wording) and recombinations, whose gold path is
//! absent from the support set but whose every consecutive instruction pair
//! occurs in some support path.

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::fs;
use std::path::Path;

use rand::seq::{IndexedRandom, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::corpus::{CorpusMeta, Question, QuestionKind, RecordedPath, TaskCorpus};
use crate::embed::{cosine_unchecked, embed_text, EmbedderConfig};
use crate::error::{Error, Result};
use crate::graph::{QuestionId, TaskId};
use crate::Embedding;

pub const WORLD_FORMAT_VERSION: &str = "1";
pub const COMPARE: &str = "Compare";
pub const FINISH: &str = "Finish";

/// Attribute vocabulary, used in this order.
const ATTRIBUTES: [&str; 12] = [
    "hometown",
    "citizenship",
    "occupation",
    "employer",
    "religion",
    "instrument",
    "language",
    "genre",
    "sport",
    "cuisine",
    "hobby",
    "mentor",
];

const SYLLABLES: [&str; 30] = [
    "ka", "ren", "vo", "li", "mar", "tes", "dra", "qui", "bel", "zor", "an", "mi", "tor", "sel", "gu", "fen", "ol",
    "rhu", "ix", "po", "sta", "nel", "vik", "dor", "hal", "mun", "cer", "yas", "bro", "tuv",
];

/// Entity names are re-drawn until their `Search[...]` instruction stays
/// below this cosine to every earlier one under the default embedder, so
/// distinct entities do not collapse into one graph node at the usual
/// merge thresholds.
const NAME_SEPARATION: f32 = 0.37;
const MAX_NAME_DRAWS: usize = 20_000;

const ONE_HOP_TEMPLATES: [&str; 4] =
    ["What is the {a} of {X}?", "Which {a} does {X} have?", "Tell me the {a} of {X}.", "{X} has what {a}?"];

const COMPARE_TEMPLATES: [&str; 4] = [
    "Compare {L}: do they have the same {a}?",
    "Do {L} share the same {a}?",
    "Is the {a} of {L} identical?",
    "Compare the {a} of {L}; is it the same?",
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SyntheticWorldSpec {
    pub entity_count: usize,
    pub attribute_count: usize,
    pub task_family_count: usize,
    /// Inclusive range of entities looked up per question.
    pub hop_range: (usize, usize),
    pub questions_per_task: usize,
    pub values_per_attribute: usize,
    pub support_ratio: f64,
    pub recombination_fraction: f64,
    pub vocabulary_seed: u64,
}

impl Default for SyntheticWorldSpec {
    fn default() -> Self {
        Self {
            entity_count: 40,
            attribute_count: 6,
            task_family_count: 4,
            hop_range: (1, 3),
            questions_per_task: 30,
            values_per_attribute: 4,
            support_ratio: 0.6,
            recombination_fraction: 0.3,
            vocabulary_seed: 7,
        }
    }
}

impl SyntheticWorldSpec {
    pub fn validate(&self) -> Result<()> {
        let (lo, hi) = self.hop_range;
        let fail = |m: String| Err(Error::Spec(m));
        if lo == 0 || lo > hi || hi > 4 {
            return fail(format!("hop_range ({lo}, {hi}) must satisfy 1 <= min <= max <= 4"));
        }
        if self.entity_count < hi.max(2) {
            return fail(format!("{} entities cannot fill {hi}-entity questions", self.entity_count));
        }
        if self.attribute_count == 0 || self.attribute_count > ATTRIBUTES.len() {
            return fail(format!("attribute_count must lie in [1, {}]", ATTRIBUTES.len()));
        }
        if self.task_family_count == 0 || self.task_family_count > self.attribute_count {
            return fail("task_family_count must lie in [1, attribute_count]".into());
        }
        if self.questions_per_task < 2 {
            return fail("questions_per_task must be at least 2".into());
        }
        if self.values_per_attribute < 2 {
            return fail("values_per_attribute must be at least 2".into());
        }
        if !(self.support_ratio > 0.0 && self.support_ratio < 1.0) {
            return fail(format!("support_ratio {} must lie strictly between 0 and 1", self.support_ratio));
        }
        if !(0.0..=1.0).contains(&self.recombination_fraction) {
            return fail(format!("recombination_fraction {} outside [0, 1]", self.recombination_fraction));
        }
        if self.recombination_fraction > 0.0 && hi < 2 {
            return fail("recombination needs multi-entity questions (hop_range max >= 2)".into());
        }
        Ok(())
    }

    pub fn hash(&self) -> String {
        hex::encode(Sha256::digest(serde_json::to_vec(self).expect("spec serializes")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Attribute {
    pub name: String,
    pub values: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Entity {
    pub name: String,
    pub attributes: BTreeMap<String, String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct World {
    pub format_version: String,
    pub spec: SyntheticWorldSpec,
    pub seed: u64,
    pub attributes: Vec<Attribute>,
    pub entities: Vec<Entity>,
}

impl World {
    pub fn entity(&self, name: &str) -> Option<&Entity> {
        self.entities.iter().find(|e| e.name == name)
    }

    pub fn attribute(&self, name: &str) -> Option<&Attribute> {
        self.attributes.iter().find(|a| a.name == name)
    }

    pub fn hash(&self) -> String {
        hex::encode(Sha256::digest(serde_json::to_vec(self).expect("world serializes")))
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, serde_json::to_string_pretty(self)?)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let raw = fs::read_to_string(path)?;
        let value: serde_json::Value =
            serde_json::from_str(&raw).map_err(|e| Error::MalformedFile(format!("{}: {e}", path.display())))?;
        match value.get("format_version").and_then(|v| v.as_str()) {
            Some(WORLD_FORMAT_VERSION) => {}
            Some(found) => {
                return Err(Error::VersionMismatch { found: found.into(), expected: WORLD_FORMAT_VERSION.into() })
            }
            None => return Err(Error::MalformedFile(format!("{}: missing format_version", path.display()))),
        }
        serde_json::from_value(value).map_err(|e| Error::MalformedFile(format!("{}: {e}", path.display())))
    }
}

/// One parsed instruction of the synthetic vocabulary.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Op<'a> {
    Search(&'a str),
    Lookup(&'a str),
    Compare,
    Finish(Option<&'a str>),
    Unknown,
}

pub fn parse_op(text: &str) -> Op<'_> {
    let text = text.trim();
    let (name, arg) = match text.find('[') {
        Some(open) if text.ends_with(']') => (&text[..open], Some(text[open + 1..text.len() - 1].trim())),
        _ => (text, None),
    };
    match (name.trim(), arg) {
        ("Search", Some(a)) if !a.is_empty() => Op::Search(a),
        ("Lookup", Some(a)) if !a.is_empty() => Op::Lookup(a),
        ("Compare", None) => Op::Compare,
        ("Compare", Some("")) => Op::Compare,
        ("Finish", None) => Op::Finish(None),
        ("Finish", Some(a)) => Op::Finish(if a.is_empty() { None } else { Some(a) }),
        _ => Op::Unknown,
    }
}

pub fn search(entity: &str) -> String {
    format!("Search[{entity}]")
}

pub fn lookup(attribute: &str) -> String {
    format!("Lookup[{attribute}]")
}

/// Gold path of a question about `attribute` over `entities`.
pub fn gold_instructions(attribute: &str, entities: &[&str]) -> Vec<String> {
    let mut path = Vec::with_capacity(2 * entities.len() + 2);
    for e in entities {
        path.push(search(e));
        path.push(lookup(attribute));
    }
    if entities.len() > 1 {
        path.push(COMPARE.to_owned());
    }
    path.push(FINISH.to_owned());
    path
}

#[derive(Debug, Clone)]
struct Draft {
    entities: Vec<usize>,
    template: usize,
}

/// Generates a world and its full question corpus. Every question carries a
/// [`QuestionKind`]; use [`split_by_kind`] for the support/query partition.
pub fn gen_world(spec: &SyntheticWorldSpec, seed: u64) -> Result<(World, TaskCorpus)> {
    spec.validate()?;
    let mut vocab_rng = ChaCha8Rng::seed_from_u64(spec.vocabulary_seed);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    let mut used_words: HashSet<String> = HashSet::new();
    let names = draw_entity_names(spec.entity_count, &mut vocab_rng, &mut used_words)?;
    let attributes: Vec<Attribute> = ATTRIBUTES[..spec.attribute_count]
        .iter()
        .map(|&a| Attribute {
            name: a.to_owned(),
            values: (0..spec.values_per_attribute).map(|_| fresh_word(&mut vocab_rng, &mut used_words, 3)).collect(),
        })
        .collect();
    let entities: Vec<Entity> = names
        .into_iter()
        .map(|name| Entity {
            name,
            attributes: attributes
                .iter()
                .map(|a| (a.name.clone(), a.values.choose(&mut rng).expect("values non-empty").clone()))
                .collect(),
        })
        .collect();
    let world = World { format_version: WORLD_FORMAT_VERSION.into(), spec: spec.clone(), seed, attributes, entities };

    let families: Vec<String> = world.attributes[..spec.task_family_count].iter().map(|a| a.name.clone()).collect();
    let n = spec.questions_per_task;
    let n_support = ((spec.support_ratio * n as f64).round() as usize).clamp(1, n - 1);
    let n_query = n - n_support;
    let n_recomb = (spec.recombination_fraction * n_query as f64).round() as usize;
    let n_cover = n_query - n_recomb;

    // support questions for every family first: recombination is judged
    // against the segments of the whole support set
    let mut support: Vec<Vec<Draft>> = Vec::new();
    for family in &families {
        support.push(draw_support(&world, family, n_support, &mut rng)?);
    }
    let mut support_paths: HashSet<Vec<String>> = HashSet::new();
    let mut support_pairs: HashSet<(String, String)> = HashSet::new();
    for (family, drafts) in families.iter().zip(&support) {
        for d in drafts {
            let path = draft_path(&world, family, d);
            for w in path.windows(2) {
                support_pairs.insert((w[0].clone(), w[1].clone()));
            }
            support_paths.insert(path);
        }
    }

    let mut corpus = TaskCorpus::new();
    for (family, drafts) in families.iter().zip(&support) {
        let task = TaskId(family.clone());
        for (i, d) in drafts.iter().enumerate() {
            corpus.push(make_question(&world, &task, format!("{family}-s{i:03}"), d, QuestionKind::Support));
        }
        for i in 0..n_cover {
            let base = drafts.choose(&mut rng).expect("support non-empty");
            let templates = if base.entities.len() == 1 { ONE_HOP_TEMPLATES.len() } else { COMPARE_TEMPLATES.len() };
            let shift = rng.random_range(1..templates);
            let d = Draft { entities: base.entities.clone(), template: (base.template + shift) % templates };
            corpus.push(make_question(&world, &task, format!("{family}-c{i:03}"), &d, QuestionKind::InCoverage));
        }
        let recombined = draw_recombinations(&world, family, n_recomb, &support_paths, &support_pairs, &mut rng)?;
        for (i, d) in recombined.iter().enumerate() {
            corpus.push(make_question(&world, &task, format!("{family}-r{i:03}"), d, QuestionKind::Recombination));
        }
    }
    corpus.metadata = CorpusMeta { world_hash: Some(world.hash()), seed: Some(seed) };
    Ok((world, corpus))
}

/// Support questions (kind `Support`) and everything else.
pub fn split_by_kind(corpus: &TaskCorpus) -> (TaskCorpus, TaskCorpus) {
    (
        corpus.filter(|q| q.kind == Some(QuestionKind::Support)),
        corpus.filter(|q| q.kind != Some(QuestionKind::Support)),
    )
}

fn draw_entity_names(count: usize, rng: &mut ChaCha8Rng, used: &mut HashSet<String>) -> Result<Vec<String>> {
    let config = EmbedderConfig::default();
    let mut names = Vec::with_capacity(count);
    let mut accepted: Vec<Embedding> = Vec::with_capacity(count);
    let mut draws = 0;
    while names.len() < count {
        draws += 1;
        if draws > MAX_NAME_DRAWS {
            return Err(Error::Spec(format!("could not draw {count} separable entity names")));
        }
        let words: Vec<String> = (0..3).map(|_| word(rng, 2)).collect();
        if words.iter().any(|w| used.contains(w)) || words[0] == words[1] || words[1] == words[2] {
            continue;
        }
        let name = words.join(" ");
        let e: Embedding = embed_text(&search(&name), &config);
        if accepted.iter().all(|a| cosine_unchecked(a, &e) < NAME_SEPARATION) {
            used.extend(words);
            accepted.push(e);
            names.push(name);
        }
    }
    Ok(names)
}

fn word(rng: &mut ChaCha8Rng, syllables: usize) -> String {
    let raw: String = (0..syllables).map(|_| *SYLLABLES.choose(rng).expect("syllables")).collect();
    let mut chars = raw.chars();
    let first = chars.next().expect("non-empty").to_uppercase();
    first.chain(chars).collect()
}

fn fresh_word(rng: &mut ChaCha8Rng, used: &mut HashSet<String>, syllables: usize) -> String {
    loop {
        let w = word(rng, syllables);
        if used.insert(w.clone()) {
            return w;
        }
    }
}

fn draw_support(world: &World, family: &str, count: usize, rng: &mut ChaCha8Rng) -> Result<Vec<Draft>> {
    let (lo, hi) = world.spec.hop_range;
    let mut seen: HashSet<Vec<usize>> = HashSet::new();
    let mut out = Vec::with_capacity(count);
    let mut attempts = 0;
    while out.len() < count {
        attempts += 1;
        if attempts > 200 * count + 1000 {
            return Err(Error::Spec(format!("family {family}: could not draw {count} distinct support questions")));
        }
        let hops = rng.random_range(lo..=hi);
        let entities = if hops == 1 {
            vec![rng.random_range(0..world.entities.len())]
        } else {
            draw_compare_entities(world, family, hops, rng)
        };
        if !seen.insert(entities.clone()) {
            continue;
        }
        let templates = if hops == 1 { ONE_HOP_TEMPLATES.len() } else { COMPARE_TEMPLATES.len() };
        out.push(Draft { entities, template: rng.random_range(0..templates) });
    }
    Ok(out)
}

/// Distinct entities for a comparison, aiming for a balanced yes/no answer.
fn draw_compare_entities(world: &World, family: &str, hops: usize, rng: &mut ChaCha8Rng) -> Vec<usize> {
    let want_same = rng.random_bool(0.5);
    if want_same {
        let value = world.attribute(family).expect("family attribute").values.choose(rng).expect("values");
        let holders: Vec<usize> =
            (0..world.entities.len()).filter(|&i| &world.entities[i].attributes[family] == value).collect();
        if holders.len() >= hops {
            return holders.choose_multiple(rng, hops).copied().collect();
        }
    }
    let mut all: Vec<usize> = (0..world.entities.len()).collect();
    all.shuffle(rng);
    all.truncate(hops);
    all
}

fn draft_path(world: &World, family: &str, d: &Draft) -> Vec<String> {
    let names: Vec<&str> = d.entities.iter().map(|&i| world.entities[i].name.as_str()).collect();
    gold_instructions(family, &names)
}

fn draw_recombinations(
    world: &World,
    family: &str,
    count: usize,
    support_paths: &HashSet<Vec<String>>,
    support_pairs: &HashSet<(String, String)>,
    rng: &mut ChaCha8Rng,
) -> Result<Vec<Draft>> {
    if count == 0 {
        return Ok(Vec::new());
    }
    let n = world.entities.len();
    let mut candidates: Vec<Vec<usize>> = (0..n).map(|i| vec![i]).collect();
    if world.spec.hop_range.1 >= 2 {
        candidates.extend((0..n).flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| vec![i, j])));
    }
    let mut feasible: Vec<Vec<usize>> = candidates
        .into_iter()
        .filter(|entities| {
            let path = draft_path(world, family, &Draft { entities: entities.clone(), template: 0 });
            !support_paths.contains(&path)
                && path.windows(2).all(|w| support_pairs.contains(&(w[0].clone(), w[1].clone())))
        })
        .collect();
    if feasible.len() < count {
        return Err(Error::Spec(format!(
            "family {family}: only {} recombinable questions for {count} requested",
            feasible.len()
        )));
    }
    feasible.shuffle(rng);
    Ok(feasible
        .into_iter()
        .take(count)
        .map(|entities| {
            let templates = if entities.len() == 1 { ONE_HOP_TEMPLATES.len() } else { COMPARE_TEMPLATES.len() };
            Draft { entities, template: rng.random_range(0..templates) }
        })
        .collect())
}

fn make_question(world: &World, task: &TaskId, id: String, d: &Draft, kind: QuestionKind) -> Question {
    let family = task.as_str();
    let names: Vec<&str> = d.entities.iter().map(|&i| world.entities[i].name.as_str()).collect();
    let (text, answer) = if names.len() == 1 {
        let text = ONE_HOP_TEMPLATES[d.template].replace("{a}", family).replace("{X}", names[0]);
        (text, world.entities[d.entities[0]].attributes[family].clone())
    } else {
        let list = match names.split_last() {
            Some((last, rest)) => format!("{} and {last}", rest.join(", ")),
            None => unreachable!("compare drafts hold at least two entities"),
        };
        let text = COMPARE_TEMPLATES[d.template].replace("{a}", family).replace("{L}", &list);
        let values: BTreeSet<&String> = d.entities.iter().map(|&i| &world.entities[i].attributes[family]).collect();
        (text, if values.len() == 1 { "yes" } else { "no" }.to_owned())
    };
    Question {
        task_id: task.clone(),
        question_id: QuestionId(id),
        text,
        answer,
        paths: vec![RecordedPath { instructions: gold_instructions(family, &names), success_metric: 1.0 }],
        kind: Some(kind),
    }
}

/// Replaces one `Search`/`Lookup` argument in the recorded paths of
/// `round(rate * n)` randomly chosen questions with a wrong argument of the
/// same kind. Success metrics are left untouched: the corrupted paths look
/// exactly as trustworthy as the clean ones.
pub fn corrupt_paths(corpus: &TaskCorpus, world: &World, rate: f64, seed: u64) -> Result<TaskCorpus> {
    if !(0.0..=1.0).contains(&rate) {
        return Err(Error::Config(format!("corruption rate {rate} outside [0, 1]")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let total = corpus.len();
    let mut order: Vec<usize> = (0..total).collect();
    order.shuffle(&mut rng);
    let chosen: BTreeSet<usize> = order.into_iter().take((rate * total as f64).round() as usize).collect();

    let mut out = TaskCorpus { metadata: corpus.metadata.clone(), ..TaskCorpus::new() };
    for (i, q) in corpus.questions().enumerate() {
        let mut q = q.clone();
        if chosen.contains(&i) {
            for p in &mut q.paths {
                corrupt_one(&mut p.instructions, world, &mut rng);
            }
        }
        out.push(q);
    }
    Ok(out)
}

fn corrupt_one(path: &mut [String], world: &World, rng: &mut ChaCha8Rng) {
    let slots: Vec<usize> =
        (0..path.len()).filter(|&i| matches!(parse_op(&path[i]), Op::Search(_) | Op::Lookup(_))).collect();
    let Some(&slot) = slots.choose(rng) else { return };
    let replacement = match parse_op(&path[slot]) {
        Op::Search(name) => {
            let others: Vec<&Entity> = world.entities.iter().filter(|e| e.name != name).collect();
            others.choose(rng).map(|e| search(&e.name))
        }
        Op::Lookup(attr) => {
            let others: Vec<&Attribute> = world.attributes.iter().filter(|a| a.name != attr).collect();
            others.choose(rng).map(|a| lookup(&a.name))
        }
        _ => None,
    };
    if let Some(r) = replacement {
        path[slot] = r;
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn op_parsing() {
        assert_eq!(parse_op("Search[Ed Wood]"), Op::Search("Ed Wood"));
        assert_eq!(parse_op(" Lookup[hometown] "), Op::Lookup("hometown"));
        assert_eq!(parse_op("Compare"), Op::Compare);
        assert_eq!(parse_op("Finish"), Op::Finish(None));
        assert_eq!(parse_op("Finish[yes]"), Op::Finish(Some("yes")));
        assert_eq!(parse_op("Search[]"), Op::Unknown);
        assert_eq!(parse_op("Jump[x]"), Op::Unknown);
    }

    #[test]
    fn gold_instruction_shapes() {
        assert_eq!(gold_instructions("sport", &["A"]), ["Search[A]", "Lookup[sport]", "Finish"]);
        assert_eq!(gold_instructions("sport", &["A", "B"]).len(), 6);
    }

    #[test]
    fn infeasible_specs_are_rejected() {
        let spec = SyntheticWorldSpec { hop_range: (1, 1), recombination_fraction: 0.3, ..Default::default() };
        assert!(matches!(gen_world(&spec, 1), Err(Error::Spec(_))));
        let spec = SyntheticWorldSpec { task_family_count: 9, attribute_count: 3, ..Default::default() };
        assert!(matches!(spec.validate(), Err(Error::Spec(_))));
    }
}
