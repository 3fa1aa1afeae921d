//! The traversal agent: a small policy network deciding, node by node,
//! whether the instruction a node offers belongs to the path being built.

mod policy;
mod state;
mod train;
mod traverse;

use serde::{Deserialize, Serialize};

pub use policy::{Forward, PolicyParams, CLAMP, HIDDEN, INPUT, OUTPUT, PARAM_COUNT, POLICY_FORMAT_VERSION};
pub use state::{build_state, TraversalState};
pub use train::{
    make_warmstart_dataset, pg_update, reinforce_loss_grad, sample_action, warmstart_step, Baseline, WarmstartSample,
};
pub use traverse::{traverse, traverse_embedded, Candidate, Mode, RlConfig, RuleHook, Traversal};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Action {
    Include,
    Exclude,
}

impl Action {
    /// Position of this action in the policy output.
    pub fn output_index(self) -> usize {
        match self {
            Action::Include => 0,
            Action::Exclude => 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Step {
    pub state: TraversalState,
    pub action: Action,
    pub log_prob: f64,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Episode {
    pub steps: Vec<Step>,
    pub terminal_reward: f64,
}
