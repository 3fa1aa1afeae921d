//! A two-armed traversal environment: a root node with a "good" and a "bad"
//! child. Reaching the good child pays 1, anything else pays 0. Which child
//! the search visits first depends on the query, so a policy that includes
//! everything earns about one half and an optimal one earns 1.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::embed::{EmbedderConfig, EmbeddingVector};
use crate::error::Result;
use crate::graph::{InstructionGraph, InstructionPath, NodeId};
use crate::optim::{Adam, AdamConfig};
use crate::rl_agent::{pg_update, traverse_embedded, Baseline, Episode, Mode, PolicyParams, RlConfig};
use crate::scalar::Scalar;
use crate::Embedding;

const DIM: usize = 8;
pub const ROOT: &str = "Open[root]";
pub const GOOD: &str = "Take[good]";
pub const BAD: &str = "Take[bad]";

pub struct TwoBranch {
    pub graph: InstructionGraph,
    pub good: NodeId,
    pub bad: NodeId,
}

fn basis(i: usize, scale: f32) -> Vec<f32> {
    let mut v = vec![0.0; DIM];
    v[i] = scale;
    v
}

fn unit(values: Vec<f32>) -> Embedding {
    EmbeddingVector::normalized(values)
}

impl TwoBranch {
    pub fn new() -> Result<Self> {
        let config = EmbedderConfig { dimension: DIM, ..EmbedderConfig::default() };
        let mut graph = InstructionGraph::new(0.9, config)?;
        // the edge into the good child is recorded with questions along
        // axis 3, the bad one along axis 4; queries mix both
        let good_path = InstructionPath::new(vec![ROOT.into(), GOOD.into()], "arms", "q-good", 1.0);
        let bad_path = InstructionPath::new(vec![ROOT.into(), BAD.into()], "arms", "q-bad", 1.0);
        let good_nodes = graph.insert_embedded(
            &good_path,
            "good arm",
            unit(basis(3, 1.0)),
            vec![unit(basis(0, 1.0)), unit(basis(1, 1.0))],
        )?;
        let bad_nodes = graph.insert_embedded(
            &bad_path,
            "bad arm",
            unit(basis(4, 1.0)),
            vec![unit(basis(0, 1.0)), unit(basis(2, 1.0))],
        )?;
        Ok(Self { graph, good: good_nodes[1], bad: bad_nodes[1] })
    }

    /// A random query: always closest to the root, nearer the good child's
    /// instruction than the bad one's, with random affinity to either edge.
    pub fn query<R: Rng + ?Sized>(rng: &mut R) -> Embedding {
        let mut v = vec![0.0f32; DIM];
        v[0] = 1.0;
        v[1] = rng.random_range(0.6..0.9);
        v[2] = rng.random_range(0.0..0.1);
        v[3] = rng.random_range(0.0..1.0);
        v[4] = rng.random_range(0.0..1.0);
        for x in &mut v[5..] {
            *x = rng.random_range(-0.05..0.05);
        }
        unit(v)
    }

    pub fn reward(&self, nodes: &[NodeId]) -> f64 {
        if nodes.contains(&self.good) {
            1.0
        } else {
            0.0
        }
    }

    /// Greedy reward averaged over `n` seeded queries.
    pub fn greedy_reward<F: Scalar>(&self, params: &PolicyParams<F>, config: &RlConfig, n: usize, seed: u64) -> Result<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut total = 0.0;
        for _ in 0..n {
            let q = Self::query(&mut rng);
            let cands = traverse_embedded(&self.graph, &q, params, config, Mode::Greedy, &mut rng)?;
            total += cands.candidates.first().map_or(0.0, |c| self.reward(&c.nodes));
        }
        Ok(total / n as f64)
    }

    /// REINFORCE on `episodes` sampled queries at `config.learning_rate`.
    /// Each episode is the first emitted path's trace rewarded by
    /// [`reward`](Self::reward); when nothing is emitted the unattributed
    /// decisions are rewarded 0. Returns the rewards seen.
    pub fn train<F: Scalar>(
        &self,
        params: &mut PolicyParams<F>,
        config: &RlConfig,
        episodes: usize,
        seed: u64,
    ) -> Result<Vec<f64>> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut optimizer = Adam::new(AdamConfig::with_lr(config.learning_rate), params.data.len());
        let mut baseline = Baseline::new(config.baseline_window);
        let mut rewards = Vec::with_capacity(episodes);
        for _ in 0..episodes {
            let q = Self::query(&mut rng);
            let t = traverse_embedded(&self.graph, &q, params, config, Mode::Sample, &mut rng)?;
            let episode = match t.candidates.into_iter().next() {
                Some(c) => Episode { terminal_reward: self.reward(&c.nodes), ..c.episode },
                None => Episode { steps: t.unattributed, terminal_reward: 0.0 },
            };
            rewards.push(episode.terminal_reward);
            if !episode.steps.is_empty() {
                pg_update(params, &mut optimizer, &episode, config, config.use_baseline.then_some(&mut baseline))?;
            }
        }
        Ok(rewards)
    }
}
