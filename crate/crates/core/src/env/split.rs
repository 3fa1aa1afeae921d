use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::TaskCorpus;
use crate::error::{Error, Result};

/// Per-task random partition into support and query sets. Each task keeps
/// `round(ratio * n)` support questions, moved into `[1, n - 1]` whenever
/// the task has at least two questions and `0 < ratio < 1`. Both sides keep
/// the corpus order.
pub fn split_support_query(corpus: &TaskCorpus, ratio: f64, seed: u64) -> Result<(TaskCorpus, TaskCorpus)> {
    if !(0.0..=1.0).contains(&ratio) {
        return Err(Error::Config(format!("support ratio must lie in [0, 1], got {ratio}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut support = TaskCorpus { metadata: corpus.metadata.clone(), ..TaskCorpus::new() };
    let mut query = TaskCorpus { metadata: corpus.metadata.clone(), ..TaskCorpus::new() };

    for group in &corpus.tasks {
        let n = group.questions.len();
        let mut take = (ratio * n as f64).round() as usize;
        if n >= 2 && ratio > 0.0 && ratio < 1.0 {
            take = take.clamp(1, n - 1);
        }
        let mut order: Vec<usize> = (0..n).collect();
        order.shuffle(&mut rng);
        let mut in_support = vec![false; n];
        for &i in &order[..take] {
            in_support[i] = true;
        }
        for (q, chosen) in group.questions.iter().zip(in_support) {
            if chosen {
                support.push(q.clone());
            } else {
                query.push(q.clone());
            }
        }
    }
    Ok((support, query))
}
