//! Task corpora, support/query splitting, answer metrics and the synthetic
//! planning world used for end-to-end checks.

mod corpus;
mod metric;
mod split;
mod two_branch;
mod world;

pub use corpus::{CorpusMeta, Question, QuestionKind, RecordedPath, TaskCorpus, TaskQuestions};
pub use metric::{normalize_answer, score, score_with_reward, token_f1, MetricKind};
pub use split::split_support_query;
pub use world::{
    corrupt_paths, gen_world, gold_instructions, lookup, parse_op, search, split_by_kind, Attribute, Entity, Op,
    SyntheticWorldSpec, World, COMPARE, FINISH, WORLD_FORMAT_VERSION,
};
pub use two_branch::TwoBranch;
