#![allow(dead_code)]

use plangraph::env::{Question, RecordedPath, TaskCorpus};

pub fn question(task: &str, id: &str, text: &str, answer: &str, path: &[&str]) -> Question {
    Question {
        task_id: task.into(),
        question_id: id.into(),
        text: text.into(),
        answer: answer.into(),
        paths: vec![RecordedPath { instructions: path.iter().map(|s| s.to_string()).collect(), success_metric: 1.0 }],
        kind: None,
    }
}

pub const P11: [&str; 4] = ["Search[Scott Derrickson]", "Lookup[nationality]", "Search[Ed Wood]", "Lookup[nationality]"];
pub const P21: [&str; 4] = ["Search[Ed Wood]", "Lookup[birthplace]", "Search[Christopher Nolan]", "Lookup[birthplace]"];
pub const P12: [&str; 3] = ["Search[Scott Derrickson]", "Lookup[nationality]", "Lookup[year of founding]"];

/// The two location questions of the first task in the running example.
pub fn running_example() -> TaskCorpus {
    TaskCorpus::from_questions([
        question("T1", "Q11", "Were Scott Derrickson and Ed Wood of the same nationality?", "yes", &P11),
        question("T1", "Q21", "Were Ed Wood and Christopher Nolan born in the same place?", "no", &P21),
    ])
}

/// Small deterministic generator for test fixtures.
pub struct Lcg(pub u64);

impl Lcg {
    pub fn next(&mut self) -> u64 {
        self.0 = self.0.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
        self.0 >> 33
    }

    pub fn below(&mut self, n: usize) -> usize {
        (self.next() % n as u64) as usize
    }
}

const SYLLABLES: [&str; 16] =
    ["ka", "lo", "mi", "ra", "tu", "ven", "dor", "sel", "qui", "bro", "fen", "ix", "yas", "zor", "hal", "nel"];
const VERBS: [&str; 5] = ["Search", "Lookup", "Goto", "Take", "Open"];

/// A random instruction such as `Goto[ravenqui fen]`.
pub fn random_instruction(rng: &mut Lcg) -> String {
    let words: Vec<String> = (0..1 + rng.below(2))
        .map(|_| (0..2 + rng.below(2)).map(|_| SYLLABLES[rng.below(SYLLABLES.len())]).collect())
        .collect();
    format!("{}[{}]", VERBS[rng.below(VERBS.len())], words.join(" "))
}
