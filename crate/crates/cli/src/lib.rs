//! Command line front end: configuration files with flag overrides and the
//! subcommands that wire corpora, graphs, training, adaptation and
//! evaluation into reproducible runs.

pub mod commands;
pub mod config;

pub use commands::{
    cmd_adapt, cmd_build_graph, cmd_eval, cmd_gen, cmd_retrieve, cmd_sweep, cmd_train, initial_bundle, Bundles,
    SweepParam, SweepRow,
};
pub use config::{Overrides, RunConfig};
