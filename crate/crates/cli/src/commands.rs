//! The subcommands. Each takes already parsed arguments, writes its
//! artifacts under an output directory together with a manifest, and
//! returns a summary the caller prints.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use plangraph::backend::{build_prompt, Planner, TemplateId};
use plangraph::env::{gen_world, split_by_kind, SyntheticWorldSpec, TaskCorpus};
use plangraph::graph::{build_graph, graph_stats, load_graph, save_graph, GraphStats, InstructionGraph, TaskId};
use plangraph::meta::{
    evaluate_bundle, fewshot_adapt, meta_test, meta_train, pretrain, verbatim_baseline, write_records, AgentBundle,
    EvalReport, Manifest, Pipeline,
};
use plangraph::ml_agent::select_path;
use plangraph::rl_agent::{traverse, Mode};
use plangraph::{Error, Result};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::config::RunConfig;

/// Collects what a command read and wrote and writes the manifest last.
struct Run {
    out: PathBuf,
    manifest: Manifest,
}

impl Run {
    fn start(command: &str, seed: u64, config: serde_json::Value, out: &Path) -> Result<Self> {
        fs::create_dir_all(out)?;
        Ok(Self { out: out.to_path_buf(), manifest: Manifest::new(command, seed, config) })
    }

    fn input(&mut self, path: &Path) -> Result<()> {
        if path.is_dir() {
            let mut entries: Vec<PathBuf> = fs::read_dir(path)?.map(|e| e.map(|e| e.path())).collect::<Result<_, _>>()?;
            entries.sort();
            for e in entries {
                self.input(&e)?;
            }
            Ok(())
        } else {
            self.manifest.add_input(path)
        }
    }

    /// Path of an output file, registered in the manifest.
    fn output(&mut self, name: &str) -> PathBuf {
        self.manifest.outputs.push(name.to_owned());
        self.out.join(name)
    }

    fn finish(mut self) -> Result<()> {
        let name = format!("manifest-{}.json", self.manifest.command);
        self.manifest.outputs.push(name.clone());
        self.manifest.write(&self.out.join(name))
    }
}

fn config_json(config: &RunConfig) -> Result<serde_json::Value> {
    Ok(serde_json::to_value(config)?)
}

fn write_json<T: Serialize>(value: &T, path: &Path) -> Result<()> {
    fs::write(path, serde_json::to_string_pretty(value)? + "\n")?;
    Ok(())
}

fn write_jsonl<T: Serialize>(rows: &[T], path: &Path) -> Result<()> {
    let mut text = String::new();
    for r in rows {
        text.push_str(&serde_json::to_string(r)?);
        text.push('\n');
    }
    fs::write(path, text)?;
    Ok(())
}

fn planner(config: &RunConfig) -> Result<Box<dyn Planner>> {
    let world = config.load_world()?;
    config.backend.planner(world.as_ref(), config.seed)
}

fn graph_for(config: &RunConfig, support: &TaskCorpus) -> Result<InstructionGraph> {
    match &config.graph {
        Some(p) => load_graph(p),
        None => build_graph(support, config.delta, config.embedder),
    }
}

fn record_inputs(run: &mut Run, config: &RunConfig) -> Result<()> {
    for p in [&config.world, &config.corpus, &config.support, &config.query, &config.graph, &config.bundle]
        .into_iter()
        .flatten()
    {
        run.input(p)?;
    }
    Ok(())
}

/// A fresh bundle as configured, before any training.
pub fn initial_bundle(config: &RunConfig) -> AgentBundle {
    let mut bundle = AgentBundle::init(config.embedder, config.rl.clone(), config.meta.clone());
    bundle.ml = bundle.ml.with_strict_qpa(config.strict_paper_qpa);
    bundle
}

#[derive(Debug, Clone, Serialize)]
pub struct GenSummary {
    pub questions: usize,
    pub support: usize,
    pub query: usize,
    pub tasks: Vec<TaskId>,
    pub files: Vec<String>,
}

/// Generates a synthetic world and its question corpus. `spec` is a TOML
/// file with [`SyntheticWorldSpec`] fields; missing fields keep their
/// defaults.
pub fn cmd_gen(spec: Option<&Path>, seed: u64, out: &Path) -> Result<GenSummary> {
    let world_spec = match spec {
        Some(p) => {
            let text = fs::read_to_string(p).map_err(|e| Error::Config(format!("cannot read {}: {e}", p.display())))?;
            toml::from_str::<SyntheticWorldSpec>(&text).map_err(|e| Error::Config(format!("world spec: {e}")))?
        }
        None => SyntheticWorldSpec::default(),
    };
    world_spec.validate()?;
    let mut run = Run::start("gen", seed, serde_json::to_value(&world_spec)?, out)?;
    if let Some(p) = spec {
        run.input(p)?;
    }
    let (world, corpus) = gen_world(&world_spec, seed)?;
    let (support, query) = split_by_kind(&corpus);
    world.save(&run.output("world.json"))?;
    corpus.write_jsonl(&run.output("corpus.jsonl"))?;
    support.write_jsonl(&run.output("support.jsonl"))?;
    query.write_jsonl(&run.output("query.jsonl"))?;
    let summary = GenSummary {
        questions: corpus.len(),
        support: support.len(),
        query: query.len(),
        tasks: corpus.task_ids().cloned().collect(),
        files: run.manifest.outputs.clone(),
    };
    run.finish()?;
    Ok(summary)
}

/// Builds the instruction graph of a corpus and reports its size.
pub fn cmd_build_graph(corpus: &Path, config: &RunConfig) -> Result<GraphStats> {
    config.validate()?;
    let mut run = Run::start("build-graph", config.seed, config_json(config)?, &config.out)?;
    run.input(corpus)?;
    let questions = TaskCorpus::read_jsonl(corpus)?;
    let graph = build_graph(&questions, config.delta, config.embedder)?;
    let stats = graph_stats(&graph);
    save_graph(&graph, &run.output("graph.json"))?;
    write_json(&stats, &run.output("graph_stats.json"))?;
    run.finish()?;
    Ok(stats)
}

#[derive(Debug, Clone, Serialize)]
pub struct TrainSummary {
    pub iterations: usize,
    pub pretrain_steps: usize,
    /// Mean Δ of the training questions answered in the last iteration.
    pub final_mean_delta: Option<f64>,
    pub graph: GraphStats,
    pub bundle_dir: PathBuf,
}

/// Meta-training: graph from the support set (or the configured graph
/// file), optional pre-training, then the meta-training loop. Writes the
/// bundle, the graph, per-question results and per-iteration summaries.
pub fn cmd_train(config: &RunConfig) -> Result<TrainSummary> {
    config.validate()?;
    let (support, query) = config.support_query()?;
    let planner = planner(config)?;
    let mut run = Run::start("train", config.seed, config_json(config)?, &config.out)?;
    record_inputs(&mut run, config)?;

    let graph = graph_for(config, &support)?;
    let pipeline = Pipeline { graph: &graph, planner: planner.as_ref(), metric: config.metric };
    let init = initial_bundle(config);
    let (start, pretrain_log) = pretrain(&graph, &support, &init, &config.meta)?;
    let (bundle, log) = meta_train(&pipeline, &support, &query, &start, &config.meta)?;

    let bundle_dir = run.output("bundle");
    bundle.save(&bundle_dir)?;
    save_graph(&graph, &run.output("graph.json"))?;
    write_records(&log.records, &run.output("train_results.jsonl"))?;
    write_jsonl(&log.iterations, &run.output("train_iterations.jsonl"))?;
    if config.meta.pretrain_steps > 0 {
        let losses = serde_json::json!({
            "warmstart_loss": pretrain_log.warmstart_loss,
            "pretrain_loss": pretrain_log.pretrain_loss,
        });
        write_json(&losses, &run.output("pretrain_log.json"))?;
    }
    fs::write(run.output("config.toml"), config.to_toml()?)?;
    let summary = TrainSummary {
        iterations: log.iterations.len(),
        pretrain_steps: config.meta.pretrain_steps,
        final_mean_delta: log.iterations.last().map(|s| s.mean_delta),
        graph: graph_stats(&graph),
        bundle_dir,
    };
    run.finish()?;
    Ok(summary)
}

#[derive(Debug, Clone, Serialize)]
pub struct AdaptSummary {
    /// Task id → bundle directory name under `adapted/`.
    pub adapted: BTreeMap<TaskId, String>,
    pub flagged: Vec<TaskId>,
    pub graph: GraphStats,
}

pub const ADAPTED_INDEX: &str = "index.json";

fn dir_name(task: &TaskId) -> String {
    task.as_str().chars().map(|c| if c.is_ascii_alphanumeric() || c == '-' || c == '_' { c } else { '_' }).collect()
}

/// Few-shot adaptation of a trained bundle to the task families of
/// `new_support`. Needs the graph the bundle was trained on; writes one
/// bundle per task and the extended graph.
pub fn cmd_adapt(config: &RunConfig, bundle: &Path, new_support: &Path) -> Result<AdaptSummary> {
    config.validate()?;
    let graph_path = config.graph.as_ref().ok_or_else(|| Error::Config("adapt needs the trained graph (--graph)".into()))?;
    let planner = planner(config)?;
    let mut run = Run::start("adapt", config.seed, config_json(config)?, &config.out)?;
    record_inputs(&mut run, config)?;
    run.input(bundle)?;
    run.input(new_support)?;

    let base = AgentBundle::load(bundle)?;
    let graph = load_graph(graph_path)?;
    let support = TaskCorpus::read_jsonl(new_support)?;
    let adaptation = fewshot_adapt(&base, &graph, planner.as_ref(), config.metric, &support, &config.meta)?;

    let mut adapted = BTreeMap::new();
    for (task, b) in &adaptation.bundles {
        let name = dir_name(task);
        b.save(&run.output(&format!("adapted/{name}")))?;
        adapted.insert(task.clone(), name);
    }
    write_json(&adapted, &run.output(&format!("adapted/{ADAPTED_INDEX}")))?;
    save_graph(&adaptation.graph, &run.output("graph_extended.json"))?;
    let summary = AdaptSummary { adapted, flagged: adaptation.flagged.clone(), graph: graph_stats(&adaptation.graph) };
    write_json(&summary, &run.output("adapt_summary.json"))?;
    run.finish()?;
    Ok(summary)
}

/// Bundles to evaluate: a single bundle directory, or the `adapted/`
/// directory written by `adapt` (one bundle per task).
pub enum Bundles {
    Single(AgentBundle),
    PerTask(BTreeMap<TaskId, AgentBundle>),
}

impl Bundles {
    pub fn load(path: &Path) -> Result<Self> {
        if path.join("bundle.json").exists() {
            return Ok(Bundles::Single(AgentBundle::load(path)?));
        }
        let index = path.join(ADAPTED_INDEX);
        if !index.exists() {
            return Err(Error::NotFound(format!("{} holds neither bundle.json nor {ADAPTED_INDEX}", path.display())));
        }
        let text = fs::read_to_string(&index)?;
        let names: BTreeMap<TaskId, String> =
            serde_json::from_str(&text).map_err(|e| Error::MalformedFile(format!("{}: {e}", index.display())))?;
        let bundles = names
            .into_iter()
            .map(|(task, name)| AgentBundle::load(&path.join(name)).map(|b| (task, b)))
            .collect::<Result<_>>()?;
        Ok(Bundles::PerTask(bundles))
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct EvalSummary {
    pub report: EvalReport,
    pub mean_delta: f64,
    pub by_kind: BTreeMap<String, f64>,
    /// The verbatim-retrieval ablation on the same questions, if requested.
    pub verbatim: Option<EvalReport>,
}

fn by_kind(report: &EvalReport) -> BTreeMap<String, f64> {
    let kinds: std::collections::BTreeSet<String> = report.records.iter().filter_map(|r| r.kind.clone()).collect();
    kinds.into_iter().filter_map(|k| report.mean_for_kind(&k).map(|m| (k, m))).collect()
}

/// Answers the query set with the given bundle(s) and writes per-question
/// results and a summary. With `verbatim`, the support set's stored paths
/// are also evaluated as the retrieval ablation.
pub fn cmd_eval(config: &RunConfig, bundles: &Path, verbatim: bool) -> Result<EvalSummary> {
    config.validate()?;
    let graph_path = config.graph.as_ref().ok_or_else(|| Error::Config("eval needs a graph (--graph)".into()))?;
    let query = config.query_set()?;
    let planner = planner(config)?;
    let mut run = Run::start("eval", config.seed, config_json(config)?, &config.out)?;
    record_inputs(&mut run, config)?;
    run.input(bundles)?;

    let graph = load_graph(graph_path)?;
    let pipeline = Pipeline { graph: &graph, planner: planner.as_ref(), metric: config.metric };
    let report = match Bundles::load(bundles)? {
        Bundles::Single(b) => evaluate_bundle(&pipeline, &b, &query, config.seed)?,
        Bundles::PerTask(map) => meta_test(&pipeline, &map, &query, config.seed)?,
    };
    write_records(&report.records, &run.output("results.jsonl"))?;
    let verbatim = if verbatim {
        let support = config.support_set()?;
        let r = verbatim_baseline(&pipeline, &support, &query, &config.embedder)?;
        write_records(&r.records, &run.output("verbatim_results.jsonl"))?;
        Some(r)
    } else {
        None
    };
    let summary = EvalSummary { mean_delta: report.mean_delta(), by_kind: by_kind(&report), report, verbatim };
    write_json(&summary, &run.output("summary.json"))?;
    run.finish()?;
    Ok(summary)
}

#[derive(Debug, Clone, Serialize)]
pub struct Retrieval {
    pub question: String,
    pub candidates: Vec<Vec<String>>,
    pub selected: Option<usize>,
    pub prompt: Option<String>,
}

/// One-shot retrieval: traverse the graph greedily for `question`, pick a
/// path with the encoder and render the prompt. With `out`, the result is
/// also written there.
pub fn cmd_retrieve(
    graph: &Path,
    bundle: &Path,
    question: &str,
    k: Option<usize>,
    template: TemplateId,
    out: Option<&Path>,
) -> Result<Retrieval> {
    let g = load_graph(graph)?;
    let mut b = AgentBundle::load(bundle)?;
    if let Some(k) = k {
        b.rl_config.k = k;
    }
    b.rl_config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let traversal = traverse(&g, question, &b.rl, &b.rl_config, Mode::Greedy, &mut rng)?;
    let candidates: Vec<Vec<String>> = traversal.candidates.into_iter().map(|c| c.instructions).collect();
    let selected = if candidates.is_empty() { None } else { Some(select_path(&b.ml, question, &candidates)?) };
    let prompt = selected.map(|i| build_prompt(question, &candidates[i], template));
    let retrieval = Retrieval { question: question.to_owned(), candidates, selected, prompt };
    if let Some(out) = out {
        let config = serde_json::json!({ "k": b.rl_config.k, "template": template.to_string() });
        let mut run = Run::start("retrieve", 0, config, out)?;
        run.input(graph)?;
        run.input(bundle)?;
        write_json(&retrieval, &run.output("retrieval.json"))?;
        run.finish()?;
    }
    Ok(retrieval)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepParam {
    Delta,
    K,
}

impl std::str::FromStr for SweepParam {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "delta" => Ok(SweepParam::Delta),
            "k" | "K" => Ok(SweepParam::K),
            other => Err(Error::Config(format!("unknown sweep parameter {other:?} (expected delta or k)"))),
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct SweepRow {
    pub parameter: SweepParam,
    pub value: f64,
    pub node_count: usize,
    pub edge_count: usize,
    pub instruction_count: usize,
    /// Mean Δ on the query set; only when a bundle is configured.
    pub mean_delta: Option<f64>,
    /// Fastest of the repeated evaluations (wall clock), kept out of the
    /// deterministic results file.
    #[serde(skip)]
    pub latency: Option<Duration>,
}

/// Sweeps δ or K. A δ sweep rebuilds the support graph per value; a K
/// sweep needs a bundle and evaluates it at every K, timing each
/// evaluation `repeats` times and keeping the fastest.
pub fn cmd_sweep(config: &RunConfig, param: SweepParam, values: &[f64], repeats: usize) -> Result<Vec<SweepRow>> {
    config.validate()?;
    for &v in values {
        let ok = match param {
            SweepParam::Delta => (0.0..=1.0).contains(&v),
            SweepParam::K => v >= 1.0 && v.fract() == 0.0,
        };
        if !ok {
            return Err(Error::Config(format!("invalid {param:?} sweep value {v}")));
        }
    }
    if param == SweepParam::K && config.bundle.is_none() {
        return Err(Error::Config("a K sweep needs a trained bundle (bundle in the config)".into()));
    }
    let support = config.support_set()?;
    let evaluated = config.bundle.is_some();
    let query = if evaluated { Some(config.query_set()?) } else { None };
    let planner = if evaluated { Some(planner(config)?) } else { None };
    let bundle = config.bundle.as_deref().map(AgentBundle::load).transpose()?;
    let mut run = Run::start("sweep", config.seed, config_json(config)?, &config.out)?;
    record_inputs(&mut run, config)?;

    let fixed_graph = match param {
        SweepParam::K => Some(graph_for(config, &support)?),
        SweepParam::Delta => None,
    };
    let mut rows = Vec::with_capacity(values.len());
    for &v in values {
        let graph = match &fixed_graph {
            Some(g) => g.clone(),
            None => build_graph(&support, v, config.embedder)?,
        };
        let stats = graph_stats(&graph);
        let (mut mean_delta, mut latency) = (None, None);
        if let (Some(b), Some(q), Some(p)) = (&bundle, &query, &planner) {
            let mut b = b.clone();
            if param == SweepParam::K {
                b.rl_config.k = v as usize;
            }
            let pipeline = Pipeline { graph: &graph, planner: p.as_ref(), metric: config.metric };
            let mut fastest = Duration::MAX;
            for _ in 0..repeats.max(1) {
                let t = Instant::now();
                mean_delta = Some(evaluate_bundle(&pipeline, &b, q, config.seed)?.mean_delta());
                fastest = fastest.min(t.elapsed());
            }
            latency = Some(fastest);
        }
        rows.push(SweepRow {
            parameter: param,
            value: v,
            node_count: stats.node_count,
            edge_count: stats.edge_count,
            instruction_count: stats.instruction_count,
            mean_delta,
            latency,
        });
    }
    let name = match param {
        SweepParam::Delta => "delta",
        SweepParam::K => "k",
    };
    write_jsonl(&rows, &run.output(&format!("sweep_{name}.jsonl")))?;
    if evaluated {
        let timings: Vec<serde_json::Value> = rows
            .iter()
            .map(|r| serde_json::json!({ "value": r.value, "latency_ms": r.latency.map(|d| d.as_secs_f64() * 1e3) }))
            .collect();
        write_jsonl(&timings, &run.output(&format!("sweep_{name}_timing.jsonl")))?;
    }
    run.finish()?;
    Ok(rows)
}
