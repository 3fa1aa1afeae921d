mod common;

use std::collections::BTreeSet;

use approx::assert_relative_eq;
use common::{question, random_instruction, running_example, Lcg, P11, P12};
use plangraph::embed::{cosine, EmbedderConfig};
use plangraph::env::{gen_world, SyntheticWorldSpec, TaskCorpus};
use plangraph::graph::{
    build_graph, extend_graph, graph_stats, load_graph, save_graph, InstructionGraph, InstructionPath, NodeId,
    DEFAULT_CORRECT_THRESHOLD,
};
use plangraph::Error;

fn node_of(graph: &InstructionGraph, text: &str) -> NodeId {
    let hits: Vec<NodeId> = graph.nodes().filter(|n| n.contains_text(text)).map(|n| n.id).collect();
    assert_eq!(hits.len(), 1, "{text} should live in exactly one node");
    hits[0]
}

fn edge_set(graph: &InstructionGraph) -> BTreeSet<(NodeId, NodeId)> {
    graph.edges().map(|e| (e.from, e.to)).collect()
}

#[test]
fn first_path_forms_the_nationality_cycle() {
    let corpus = TaskCorpus::from_questions([question("T1", "Q11", "same nationality?", "yes", &P11)]);
    let g = build_graph(&corpus, 0.4, EmbedderConfig::default()).unwrap();
    let s = g.stats();
    assert_eq!((s.node_count, s.edge_count, s.instruction_count), (3, 3, 3));
    let (i1, i2, i3) = (node_of(&g, P11[0]), node_of(&g, P11[1]), node_of(&g, P11[2]));
    assert_eq!((i1, i2, i3), (1, 2, 3));
    assert_eq!(g.path_nodes(&"Q11".into()).unwrap(), vec![i1, i2, i3, i2]);
    assert_eq!(edge_set(&g), BTreeSet::from([(1, 2), (2, 3), (3, 2)]));
    assert_eq!(g.counters(), (4, 4));
}

#[test]
fn ed_wood_recalls_scott_derrickson_with_lookup_node_excluded() {
    let mut g = InstructionGraph::new(0.4, EmbedderConfig::default()).unwrap();
    let prefix = InstructionPath::new(P11[..2].iter().map(|s| s.to_string()).collect(), "T1", "Q11", 1.0);
    g.insert_path(&prefix, "q").unwrap();
    let lookup_node = node_of(&g, "Lookup[nationality]");
    let hit = g.knn_nearest(&g.embed("Search[Ed Wood]"), Some(lookup_node)).unwrap();
    assert_eq!(hit.text, "Search[Scott Derrickson]");
    assert_eq!(hit.node, 1);
    assert!(hit.psi < 0.4, "psi {} should open a new node", hit.psi);
}

#[test]
fn self_match_has_unit_similarity() {
    let g = build_graph(&running_example(), 0.4, EmbedderConfig::default()).unwrap();
    let hit = g.knn_nearest(&g.embed("Lookup[birthplace]"), None).unwrap();
    assert_eq!(hit.text, "Lookup[birthplace]");
    assert_eq!(hit.psi, 1.0);
}

#[test]
fn second_task_joins_the_shared_edge() {
    let corpus = TaskCorpus::from_questions([
        question("T1", "Q11", "same nationality?", "yes", &P11),
        question("T2", "Q12", "when was it founded?", "1990", &P12),
    ]);
    let g = build_graph(&corpus, 0.4, EmbedderConfig::default()).unwrap();
    let edge = g.edge(1, 2).unwrap();
    assert_eq!(edge.tasks.keys().map(|t| t.as_str()).collect::<Vec<_>>(), ["T1", "T2"]);
    let founding = node_of(&g, "Lookup[year of founding]");
    assert!(g.edge(2, founding).is_some());
}

#[test]
fn running_example_has_five_instructions_in_four_nodes() {
    let g = build_graph(&running_example(), 0.4, EmbedderConfig::default()).unwrap();
    let s = graph_stats(&g);
    assert_eq!((s.node_count, s.edge_count, s.instruction_count, s.task_count), (4, 5, 5, 1));
    assert_relative_eq!(s.mean_node_size, 1.25);
    // birthplace merges into the nationality junction
    assert_eq!(node_of(&g, "Lookup[birthplace]"), node_of(&g, "Lookup[nationality]"));
    let nolan = node_of(&g, "Search[Christopher Nolan]");
    assert_eq!(g.path_nodes(&"Q21".into()).unwrap(), vec![3, 2, nolan, 2]);
    // the recombined walk I1 -> I2 -> I4 -> I2 exists
    for (a, b) in [(1, 2), (2, nolan), (nolan, 2)] {
        assert!(g.edge(a, b).is_some(), "missing edge ({a}, {b})");
    }
}

#[test]
fn reinserting_a_path_keeps_the_structure() {
    let once = build_graph(&running_example(), 0.4, EmbedderConfig::default()).unwrap();
    let mut twice = once.clone();
    twice.insert_corpus(&running_example()).unwrap();
    let (a, b) = (once.stats(), twice.stats());
    assert_eq!((a.node_count, a.edge_count, a.instruction_count), (b.node_count, b.edge_count, b.instruction_count));
    let sources = |g: &InstructionGraph| g.nodes().flat_map(|n| n.instructions.iter()).map(|i| i.sources.len()).sum::<usize>();
    assert_eq!(sources(&twice), 2 * sources(&once));
}

#[test]
fn empty_support_builds_an_empty_graph() {
    let g = build_graph(&TaskCorpus::new(), 0.4, EmbedderConfig::default()).unwrap();
    assert!(g.is_empty());
    let s = g.stats();
    assert_eq!((s.node_count, s.edge_count, s.instruction_count, s.task_count), (0, 0, 0, 0));
    assert_eq!(s.mean_node_size, 0.0);
    assert!(matches!(g.knn_nearest(&g.embed("Search[x]"), None), Err(Error::NotFound(_))));
}

#[test]
fn paths_below_the_correctness_threshold_are_skipped() {
    let mut q = question("T1", "Q1", "q", "a", &["Search[a]", "Finish"]);
    q.paths[0].success_metric = DEFAULT_CORRECT_THRESHOLD / 2.0;
    let g = build_graph(&TaskCorpus::from_questions([q]), 0.4, EmbedderConfig::default()).unwrap();
    assert!(g.is_empty());
}

#[test]
fn delta_outside_unit_interval_is_rejected() {
    for d in [-0.1, 1.5, f64::NAN] {
        assert!(matches!(InstructionGraph::new(d, EmbedderConfig::default()), Err(Error::Config(_))));
    }
}

#[test]
fn knn_matches_brute_force_scan() {
    let mut rng = Lcg(11);
    for trial in 0..5 {
        let mut g = InstructionGraph::new(0.5, EmbedderConfig::default()).unwrap();
        for p in 0..10 {
            let path: Vec<String> = (0..2 + rng.below(4)).map(|_| random_instruction(&mut rng)).collect();
            let path = InstructionPath::new(path, "T", format!("q{trial}-{p}"), 1.0);
            g.insert_path(&path, "question").unwrap();
        }
        for _ in 0..50 {
            let q = g.embed(&random_instruction(&mut rng));
            let excluded = (rng.below(3) == 0).then(|| g.nodes().nth(rng.below(g.nodes().count())).unwrap().id);
            let mut best: Option<(f64, NodeId, String)> = None;
            for n in g.nodes().filter(|n| Some(n.id) != excluded) {
                for i in &n.instructions {
                    let c = f64::from(cosine(&q, &i.embedding).unwrap());
                    let better = best.as_ref().is_none_or(|(b, bn, bt)| {
                        c > *b || (c == *b && (n.id < *bn || (n.id == *bn && i.text < *bt)))
                    });
                    if better {
                        best = Some((c, n.id, i.text.clone()));
                    }
                }
            }
            let (psi, node, text) = best.unwrap();
            let hit = g.knn_nearest(&q, excluded).unwrap();
            assert_eq!((hit.node, hit.text.as_str()), (node, text.as_str()));
            assert_eq!(hit.psi, psi);
        }
    }
}

/// Adjacent-distinct and edge-completeness over every inserted path.
fn check_invariants(g: &InstructionGraph, corpus: &TaskCorpus) {
    for q in corpus.questions() {
        let Some(path) = q.gold_path(DEFAULT_CORRECT_THRESHOLD) else { continue };
        let nodes = g.path_nodes(&q.question_id).unwrap();
        assert_eq!(nodes.len(), path.len());
        for (k, (text, node)) in path.instructions.iter().zip(&nodes).enumerate() {
            assert!(g.node(*node).unwrap().contains_text(text), "{} step {k}", q.question_id);
        }
        for w in nodes.windows(2) {
            assert_ne!(w[0], w[1], "{}: consecutive instructions share node {}", q.question_id, w[0]);
            let edge = g.edge(w[0], w[1]).unwrap_or_else(|| panic!("{}: no edge {:?}", q.question_id, w));
            assert!(edge.tasks.get(&q.task_id).is_some_and(|qs| qs.contains(&q.question_id)));
        }
    }
    // every inserted occurrence lives in exactly one node, and texts are
    // unique inside a node
    let mut seen = BTreeSet::new();
    for n in g.nodes() {
        assert!(!n.instructions.is_empty());
        let texts: BTreeSet<&str> = n.texts().collect();
        assert_eq!(texts.len(), n.instructions.len(), "node {} repeats a text", n.id);
        for i in &n.instructions {
            for src in &i.sources {
                assert!(seen.insert((src.question_id.clone(), src.position)), "{src:?} stored twice");
            }
        }
    }
    let occurrences: usize =
        corpus.questions().filter_map(|q| q.gold_path(DEFAULT_CORRECT_THRESHOLD)).map(|p| p.len()).sum();
    assert_eq!(seen.len(), occurrences);
    let (ic, tc) = g.counters();
    assert_eq!(ic, g.nodes().map(|n| n.id).max().unwrap_or(0) + 1);
    assert_eq!(tc, g.edges().count() as u64 + 1);
}

#[test]
fn invariants_hold_on_synthetic_corpora() {
    let spec = SyntheticWorldSpec { questions_per_task: 12, ..Default::default() };
    for seed in 0..6 {
        let (_, corpus) = gen_world(&spec, seed).unwrap();
        for delta in [0.0, 0.4, 1.0] {
            let g = build_graph(&corpus, delta, EmbedderConfig::default()).unwrap();
            check_invariants(&g, &corpus);
        }
    }
}

#[test]
fn node_count_is_monotone_in_delta() {
    let (_, corpus) = gen_world(&SyntheticWorldSpec::default(), 3).unwrap();
    let counts: Vec<usize> = [0.0, 0.2, 0.4, 0.6, 0.8, 1.0]
        .iter()
        .map(|&d| build_graph(&corpus, d, EmbedderConfig::default()).unwrap().stats().node_count)
        .collect();
    assert!(counts.windows(2).all(|w| w[0] <= w[1]), "{counts:?}");
    assert!(counts[0] < counts[5]);
}

#[test]
fn full_threshold_keeps_distinct_paths_as_chains() {
    let mut rng = Lcg(5);
    let mut texts = BTreeSet::new();
    let mut corpus = TaskCorpus::new();
    for i in 0..20 {
        let path: Vec<String> = std::iter::repeat_with(|| random_instruction(&mut rng))
            .filter(|t| texts.insert(t.clone()))
            .take(3)
            .collect();
        let refs: Vec<&str> = path.iter().map(String::as_str).collect();
        corpus.push(question("T", &format!("q{i}"), "question", "a", &refs));
    }
    let g = build_graph(&corpus, 1.0, EmbedderConfig::default()).unwrap();
    let s = g.stats();
    assert_eq!(s.node_count, 60);
    assert_eq!(s.instruction_count, 60);
    assert_eq!(s.edge_count, 40);
    for n in g.nodes() {
        assert!(g.successors(n.id).count() <= 1);
    }
}

#[test]
fn extend_matches_building_from_the_union() {
    let (_, corpus) = gen_world(&SyntheticWorldSpec { questions_per_task: 10, ..Default::default() }, 2).unwrap();
    let tasks: Vec<_> = corpus.task_ids().cloned().collect();
    let (a, b) = (corpus.only_tasks(&tasks[..2]), corpus.only_tasks(&tasks[2..]));
    let base = build_graph(&a, 0.4, EmbedderConfig::default()).unwrap();
    let before = base.clone();
    let extended = extend_graph(&base, &b).unwrap();
    assert_eq!(base, before, "extension must not touch its input");
    assert!(extended.stats().node_count >= base.stats().node_count);
    assert_eq!(extended, build_graph(&a.concat(&b), 0.4, EmbedderConfig::default()).unwrap());
    assert_eq!(extend_graph(&base, &TaskCorpus::new()).unwrap(), base);
}

#[test]
fn save_load_round_trip_is_exact() {
    let (_, corpus) = gen_world(&SyntheticWorldSpec { questions_per_task: 10, ..Default::default() }, 4).unwrap();
    let g = build_graph(&corpus, 0.4, EmbedderConfig::default()).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("graph.json");
    save_graph(&g, &path).unwrap();
    let back = load_graph(&path).unwrap();
    assert_eq!(back, g);
    for (a, b) in g.nodes().zip(back.nodes()) {
        for (x, y) in a.instructions.iter().zip(&b.instructions) {
            let bits = |v: &[f32]| v.iter().map(|f| f.to_bits()).collect::<Vec<_>>();
            assert_eq!(bits(&x.embedding.values), bits(&y.embedding.values));
        }
    }
    // saving the loaded graph reproduces the same bytes
    let again = dir.path().join("again.json");
    save_graph(&back, &again).unwrap();
    assert_eq!(std::fs::read(&path).unwrap(), std::fs::read(&again).unwrap());
}

#[test]
fn truncated_file_is_malformed() {
    let g = build_graph(&running_example(), 0.4, EmbedderConfig::default()).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("graph.json");
    save_graph(&g, &path).unwrap();
    let bytes = std::fs::read(&path).unwrap();
    std::fs::write(&path, &bytes[..bytes.len() / 2]).unwrap();
    assert!(matches!(load_graph(&path), Err(Error::MalformedFile(_))));
}

#[test]
fn old_version_is_reported_with_both_versions() {
    let g = build_graph(&running_example(), 0.4, EmbedderConfig::default()).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("graph.json");
    save_graph(&g, &path).unwrap();
    let mut value: serde_json::Value = serde_json::from_slice(&std::fs::read(&path).unwrap()).unwrap();
    value["header"]["format_version"] = "0".into();
    std::fs::write(&path, serde_json::to_vec(&value).unwrap()).unwrap();
    match load_graph(&path) {
        Err(Error::VersionMismatch { found, expected }) => assert_eq!((found.as_str(), expected.as_str()), ("0", "1")),
        other => panic!("expected a version mismatch, got {other:?}"),
    }
}

#[test]
fn stats_match_a_recount_of_the_file() {
    let (_, corpus) = gen_world(&SyntheticWorldSpec::default(), 8).unwrap();
    let g = build_graph(&corpus, 0.4, EmbedderConfig::default()).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("graph.json");
    save_graph(&g, &path).unwrap();
    let v: serde_json::Value = serde_json::from_slice(&std::fs::read(&path).unwrap()).unwrap();
    let nodes = v["nodes"].as_array().unwrap();
    let instructions: usize = nodes.iter().map(|n| n["instructions"].as_array().unwrap().len()).sum();
    let mut tasks = BTreeSet::new();
    for e in v["edges"].as_array().unwrap() {
        for t in e["tasks"].as_array().unwrap() {
            tasks.insert(t["task_id"].as_str().unwrap().to_owned());
        }
    }
    let s = g.stats();
    assert_eq!(s.node_count, nodes.len());
    assert_eq!(s.edge_count, v["edges"].as_array().unwrap().len());
    assert_eq!(s.instruction_count, instructions);
    assert_eq!(s.task_count, tasks.len());
}
