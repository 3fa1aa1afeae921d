use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use plangraph::backend::{BackendKind, TemplateId};
use plangraph::env::MetricKind;
use plangraph::graph::render_instructions;
use plangraph::Result;
use plangraph_cli::commands::{AdaptSummary, EvalSummary, Retrieval};
use plangraph_cli::{
    cmd_adapt, cmd_build_graph, cmd_eval, cmd_gen, cmd_retrieve, cmd_sweep, cmd_train, Overrides, RunConfig, SweepParam,
};

#[derive(Parser)]
#[command(name = "plangraph", version, about = "Instruction-graph retrieval for LLM task planning")]
struct Cli {
    /// TOML run configuration; flags below override its fields.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Merge threshold δ in [0, 1].
    #[arg(long, global = true)]
    delta: Option<f64>,
    /// Number of start nodes / candidate paths.
    #[arg(long, global = true)]
    k: Option<usize>,
    /// mock or http.
    #[arg(long, global = true)]
    backend: Option<BackendKind>,
    /// Observation noise of the mock backend.
    #[arg(long, global = true)]
    noise: Option<f64>,
    /// token_f1, binary_success or reward_score.
    #[arg(long, global = true)]
    metric: Option<MetricKind>,
    /// Output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Exclude the positive from the contrastive denominators.
    #[arg(long, global = true)]
    strict_paper_qpa: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic world with its question corpus.
    Gen {
        /// TOML world spec (defaults when omitted).
        #[arg(long)]
        spec: Option<PathBuf>,
    },
    /// Build the instruction graph of a corpus and print its statistics.
    BuildGraph {
        #[arg(long)]
        corpus: PathBuf,
    },
    /// Meta-train a bundle on the configured support and query sets.
    Train,
    /// Adapt a trained bundle to the task families of a new support set.
    Adapt {
        #[arg(long)]
        bundle: PathBuf,
        #[arg(long)]
        support: PathBuf,
        /// Graph the bundle was trained on.
        #[arg(long)]
        graph: Option<PathBuf>,
    },
    /// Evaluate a bundle (or a directory of adapted bundles) on a query set.
    Eval {
        #[arg(long)]
        bundles: PathBuf,
        #[arg(long)]
        query: Option<PathBuf>,
        #[arg(long)]
        graph: Option<PathBuf>,
        /// Also evaluate the verbatim-retrieval ablation.
        #[arg(long)]
        verbatim: bool,
    },
    /// Retrieve candidate paths for one question and show the prompt.
    Retrieve {
        #[arg(long)]
        graph: PathBuf,
        #[arg(long)]
        bundle: PathBuf,
        #[arg(long)]
        question: String,
        #[arg(long, default_value = "synthetic")]
        template: TemplateId,
    },
    /// Sweep δ or K.
    Sweep {
        /// delta or k.
        #[arg(long)]
        param: SweepParam,
        /// Comma-separated values.
        #[arg(long, value_delimiter = ',', required = true)]
        values: Vec<f64>,
        #[arg(long, default_value_t = 5)]
        repeats: usize,
        #[arg(long)]
        bundle: Option<PathBuf>,
        #[arg(long)]
        graph: Option<PathBuf>,
    },
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

fn run(cli: Cli) -> Result<()> {
    let overrides = Overrides {
        seed: cli.seed,
        delta: cli.delta,
        k: cli.k,
        backend: cli.backend,
        noise: cli.noise,
        metric: cli.metric,
        out: cli.out.clone(),
        strict_paper_qpa: cli.strict_paper_qpa,
    };
    let mut config = RunConfig::load_or_default(cli.config.as_deref())?;
    config.apply(&overrides);
    match cli.command {
        Command::Gen { spec } => {
            let s = cmd_gen(spec.as_deref(), config.seed, &config.out)?;
            println!("{} questions ({} support, {} query) in {} tasks", s.questions, s.support, s.query, s.tasks.len());
            println!("wrote {} to {}", s.files.join(", "), config.out.display());
        }
        Command::BuildGraph { corpus } => {
            let s = cmd_build_graph(&corpus, &config)?;
            println!("nodes        {}", s.node_count);
            println!("edges        {}", s.edge_count);
            println!("instructions {}", s.instruction_count);
            println!("tasks        {}", s.task_count);
            println!("mean size    {:.3}", s.mean_node_size);
        }
        Command::Train => {
            let s = cmd_train(&config)?;
            println!(
                "trained {} iterations after {} pre-training steps; graph has {} nodes",
                s.iterations, s.pretrain_steps, s.graph.node_count
            );
            if let Some(d) = s.final_mean_delta {
                println!("last iteration mean delta {d:.4}");
            }
            println!("bundle written to {}", s.bundle_dir.display());
        }
        Command::Adapt { bundle, support, graph } => {
            if graph.is_some() {
                config.graph = graph;
            }
            print_adapt(&cmd_adapt(&config, &bundle, &support)?);
        }
        Command::Eval { bundles, query, graph, verbatim } => {
            if query.is_some() {
                config.query = query;
            }
            if graph.is_some() {
                config.graph = graph;
            }
            print_eval(&cmd_eval(&config, &bundles, verbatim)?);
        }
        Command::Retrieve { graph, bundle, question, template } => {
            let out = cli.out.as_deref();
            print_retrieval(&cmd_retrieve(&graph, &bundle, &question, cli.k, template, out)?);
        }
        Command::Sweep { param, values, repeats, bundle, graph } => {
            if bundle.is_some() {
                config.bundle = bundle;
            }
            if graph.is_some() {
                config.graph = graph;
            }
            println!("{:>8} {:>6} {:>6} {:>12} {:>10} {:>12}", "value", "nodes", "edges", "instructions", "delta", "latency_ms");
            for r in cmd_sweep(&config, param, &values, repeats)? {
                let delta = r.mean_delta.map_or("-".into(), |d| format!("{d:.4}"));
                let latency = r.latency.map_or("-".into(), |l| format!("{:.2}", l.as_secs_f64() * 1e3));
                println!(
                    "{:>8} {:>6} {:>6} {:>12} {:>10} {:>12}",
                    r.value, r.node_count, r.edge_count, r.instruction_count, delta, latency
                );
            }
        }
    }
    Ok(())
}

fn print_adapt(s: &AdaptSummary) {
    for (task, dir) in &s.adapted {
        println!("adapted {task} -> adapted/{dir}");
    }
    for task in &s.flagged {
        println!("flagged {task}: no support questions, left unadapted");
    }
    println!("extended graph: {} nodes, {} edges", s.graph.node_count, s.graph.edge_count);
}

fn print_eval(s: &EvalSummary) {
    println!("{:<24} {:>9} {:>10} {:>9}", "task", "questions", "mean delta", "failures");
    for (task, r) in &s.report.per_task {
        println!("{:<24} {:>9} {:>10.4} {:>9}", task.as_str(), r.questions, r.mean_delta, r.failures);
    }
    println!("{:<24} {:>9} {:>10.4}", "macro average", "", s.report.macro_delta);
    println!("{:<24} {:>9} {:>10.4}", "question average", s.report.records.len(), s.mean_delta);
    for (kind, d) in &s.by_kind {
        println!("{:<24} {:>9} {:>10.4}", kind, "", d);
    }
    if let Some(v) = &s.verbatim {
        println!("{:<24} {:>9} {:>10.4}", "verbatim ablation", v.records.len(), v.mean_delta());
    }
}

fn print_retrieval(r: &Retrieval) {
    if r.candidates.is_empty() {
        println!("no candidate paths");
        return;
    }
    for (i, c) in r.candidates.iter().enumerate() {
        let mark = if Some(i) == r.selected { "*" } else { " " };
        println!("{mark} [{i}] {}", render_instructions(c));
    }
    if let Some(p) = &r.prompt {
        println!("\n{p}");
    }
}
