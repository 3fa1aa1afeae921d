//! A deterministic planner that follows the provided path literally.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::prompt::extract_path;
use super::{BackendError, PlanOutcome, Planner};
use crate::env::{parse_op, Op, Question, World};
use crate::graph::PATH_SEPARATOR;

/// One thought-action-observation step.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TaoStep {
    pub thought: String,
    pub action: String,
    pub observation: String,
    pub ok: bool,
    /// The observation was deliberately corrupted.
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub corrupted: bool,
}

fn fnv1a(text: &str) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in text.bytes() {
        h ^= u64::from(b);
        h = h.wrapping_mul(0x0100_0000_01b3);
    }
    h
}

/// Executes `path` against `world`.
///
/// `Search` opens an entity, `Lookup` reads an attribute of the open entity,
/// `Compare` answers yes/no over every value looked up so far and `Finish`
/// returns its argument or the last result. With probability `noise` a
/// lookup observes a different value of the same attribute instead; the
/// draws depend only on `seed` and `question_id`. Unknown or inapplicable
/// instructions are recorded as failed steps and skipped. Without a
/// `Finish` the last result (possibly empty) is the answer.
pub fn mock_execute<S: AsRef<str>>(
    world: &World,
    question_id: &str,
    path: &[S],
    noise: f64,
    seed: u64,
) -> (String, Vec<TaoStep>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ fnv1a(question_id));
    let mut trace = Vec::with_capacity(path.len());
    let mut current: Option<&crate::env::Entity> = None;
    let mut observed: Vec<String> = Vec::new();
    let mut last: Option<String> = None;

    for instruction in path {
        let action = instruction.as_ref().trim().to_owned();
        let corrupt_draw: f64 = rng.random();
        let pick: u64 = rng.random();
        let mut step = TaoStep { thought: String::new(), action: action.clone(), observation: String::new(), ok: true, corrupted: false };
        match parse_op(&action) {
            Op::Search(name) => {
                step.thought = format!("I need to find {name}.");
                match world.entity(name) {
                    Some(e) => {
                        current = Some(e);
                        step.observation = format!("Opened the record of {name}.");
                    }
                    None => {
                        current = None;
                        step.ok = false;
                        step.observation = format!("Could not find {name}.");
                    }
                }
            }
            Op::Lookup(attr) => {
                step.thought = format!("I need the {attr}.");
                match current.and_then(|e| e.attributes.get(attr)) {
                    Some(value) => {
                        let mut value = value.clone();
                        if corrupt_draw < noise {
                            if let Some(pool) = world.attribute(attr) {
                                let others: Vec<&String> = pool.values.iter().filter(|v| **v != value).collect();
                                if !others.is_empty() {
                                    value = others[(pick % others.len() as u64) as usize].clone();
                                    step.corrupted = true;
                                }
                            }
                        }
                        step.observation = format!("The {attr} is {value}.");
                        observed.push(value.clone());
                        last = Some(value);
                    }
                    None => {
                        step.ok = false;
                        step.observation = match current {
                            Some(e) => format!("{} has no {attr}.", e.name),
                            None => "No record is open.".into(),
                        };
                    }
                }
            }
            Op::Compare => {
                step.thought = "I need to compare the values.".into();
                if observed.len() >= 2 {
                    let same = observed.iter().all(|v| *v == observed[0]);
                    let verdict = if same { "yes" } else { "no" };
                    step.observation = format!("The values are {}.", if same { "the same" } else { "different" });
                    last = Some(verdict.into());
                } else {
                    step.ok = false;
                    step.observation = "Nothing to compare.".into();
                }
            }
            Op::Finish(arg) => {
                let answer = arg.map(str::to_owned).or(last.clone()).unwrap_or_default();
                step.thought = "I can answer now.".into();
                step.observation = format!("Answer: {answer}");
                trace.push(step);
                return (answer, trace);
            }
            Op::Unknown => {
                step.ok = false;
                step.observation = format!("Unknown action {action:?}.");
            }
        }
        trace.push(step);
    }
    (last.unwrap_or_default(), trace)
}

/// [`Planner`] over [`mock_execute`]: reads the path back out of the prompt
/// and follows it.
#[derive(Debug, Clone)]
pub struct MockPlanner {
    world: World,
    noise: f64,
    seed: u64,
}

impl MockPlanner {
    pub fn new(world: World, noise: f64, seed: u64) -> Self {
        Self { world, noise, seed }
    }

    pub fn world(&self) -> &World {
        &self.world
    }
}

impl Planner for MockPlanner {
    fn plan(&self, question: &Question, prompt: &str) -> Result<PlanOutcome, BackendError> {
        let rendered = extract_path(prompt).unwrap_or("");
        let path: Vec<&str> = if rendered.is_empty() { Vec::new() } else { rendered.split(PATH_SEPARATOR).collect() };
        let (answer, trace) = mock_execute(&self.world, question.question_id.as_str(), &path, self.noise, self.seed);
        Ok(PlanOutcome { answer, trace, reward: None })
    }
}
