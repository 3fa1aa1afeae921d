mod common;

use std::collections::{BTreeSet, HashSet};

use approx::assert_relative_eq;
use common::{question, random_instruction, running_example, Lcg};
use plangraph::embed::{EmbedderConfig, EmbeddingVector};
use plangraph::env::{gen_world, QuestionKind, SyntheticWorldSpec, TaskCorpus, TwoBranch};
use plangraph::graph::{build_graph, InstructionGraph, InstructionPath, NodeId};
use plangraph::optim::{Adam, AdamConfig};
use plangraph::rl_agent::{
    build_state, make_warmstart_dataset, pg_update, reinforce_loss_grad, traverse, warmstart_step, Action, Baseline,
    Episode, Mode, PolicyParams, RlConfig, RuleHook, Step, TraversalState, PARAM_COUNT,
};
use plangraph::{Embedding, Error};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const B2: usize = PARAM_COUNT - 2;

fn always_include() -> PolicyParams<f64> {
    let mut p = PolicyParams::zeros();
    p.data[B2] = 10.0;
    p
}

fn vec8(xs: &[f32]) -> Embedding {
    let mut v = vec![0.0f32; 8];
    v[..xs.len()].copy_from_slice(xs);
    EmbeddingVector::from_values(v)
}

fn cos3(a: [f64; 3], b: [f64; 3]) -> f64 {
    let dot: f64 = a.iter().zip(&b).map(|(x, y)| x * y).sum();
    let n = |v: [f64; 3]| v.iter().map(|x| x * x).sum::<f64>().sqrt();
    dot / (n(a) * n(b))
}

fn random_state(rng: &mut ChaCha8Rng) -> TraversalState {
    TraversalState::new([rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)])
}

/// Relative error between two gradient vectors.
fn rel_err(a: &[f64], b: &[f64]) -> f64 {
    let diff: f64 = a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt();
    let scale: f64 = a.iter().map(|x| x * x).sum::<f64>().sqrt() + b.iter().map(|x| x * x).sum::<f64>().sqrt();
    if scale < 1e-12 {
        diff
    } else {
        diff / scale
    }
}

fn finite_difference(params: &PolicyParams<f64>, f: impl Fn(&PolicyParams<f64>) -> f64) -> Vec<f64> {
    let h = 1e-5;
    (0..PARAM_COUNT)
        .map(|i| {
            let mut plus = params.clone();
            plus.data[i] += h;
            let mut minus = params.clone();
            minus.data[i] -= h;
            (f(&plus) - f(&minus)) / (2.0 * h)
        })
        .collect()
}

// ---------------------------------------------------------------- states

#[test]
fn state_of_the_query_itself_is_all_ones() {
    let mut g = InstructionGraph::new(0.4, EmbedderConfig::default()).unwrap();
    let query = "Search[Ed Wood]";
    let path = InstructionPath::new(vec!["Open[archive]".into(), query.into()], "T1", "Q1", 1.0);
    let nodes = g.insert_path(&path, query).unwrap();
    let s = build_state(&g, &g.embed(query), nodes[1], Some((nodes[0], nodes[1]))).unwrap();
    for x in s.s {
        assert_relative_eq!(x, 1.0, epsilon = 1e-6);
    }
}

#[test]
fn state_without_incoming_edge_has_zero_task_terms() {
    let g = build_graph(&running_example(), 0.4, EmbedderConfig::default()).unwrap();
    let q = g.embed("Where was Ed Wood born?");
    let s = build_state(&g, &q, 3, None).unwrap();
    assert_eq!(s.s[1], 0.0);
    assert_eq!(s.s[2], 0.0);
    let c1 = g.node(3).unwrap().instructions.iter().map(|i| f64::from(plangraph::embed::cosine(&q, &i.embedding).unwrap()));
    assert_relative_eq!(s.s[0], c1.fold(f64::MIN, f64::max), epsilon = 1e-12);
}

#[test]
fn state_uses_questions_of_the_best_task_only() {
    // node B holds two instructions; the edge A -> B carries two tasks of two
    // questions each. T1 holds the query itself but its centroid points away.
    let a = [0.0f32, 0.0, 1.0];
    let b1 = [1.0f32, 0.0, 0.0];
    let b2 = [0.8f32, 0.6, 0.0];
    let q1 = [1.0f32 / 3.0, 2.0 / 3.0, 2.0 / 3.0];
    let q2 = [-1.0f32, 0.0, 0.0];
    let q3 = [0.0f32, 0.0, 1.0];
    let q4 = [0.0f32, 1.0, 0.0];
    let mut g = InstructionGraph::new(0.5, EmbedderConfig { dimension: 8, ..EmbedderConfig::default() }).unwrap();
    let inserts = [("T1", "Q1", b1, q1), ("T1", "Q2", b2, q2), ("T2", "Q3", b1, q3), ("T2", "Q4", b2, q4)];
    let mut node_ids = BTreeSet::new();
    for (task, id, b, qv) in inserts {
        let target = if b == b1 { "Go[b one]" } else { "Go[b two]" };
        let path = InstructionPath::new(vec!["Go[a]".into(), target.into()], task, id, 1.0);
        let nodes = g.insert_embedded(&path, id, vec8(&qv), vec![vec8(&a), vec8(&b)]).unwrap();
        node_ids.extend(nodes);
    }
    assert_eq!(node_ids, BTreeSet::from([1, 2]), "both B instructions share one node");

    let query = [1.0, 2.0, 2.0];
    let qe = vec8(&[1.0 / 3.0, 2.0 / 3.0, 2.0 / 3.0]);
    let s = build_state(&g, &qe, 2, Some((1, 2))).unwrap();

    let f = |v: [f32; 3]| v.map(f64::from);
    let s1 = cos3(query, f(b1)).max(cos3(query, f(b2)));
    let mean = |x: [f32; 3], y: [f32; 3]| [(x[0] + y[0]) as f64 / 2.0, (x[1] + y[1]) as f64 / 2.0, (x[2] + y[2]) as f64 / 2.0];
    let t1 = cos3(query, mean(q1, q2));
    let t2 = cos3(query, mean(q3, q4));
    assert!(t2 > t1);
    let s3 = cos3(query, f(q3)).max(cos3(query, f(q4)));
    // hand values: 2/3, 2*sqrt(2)/3, 2/3
    assert_relative_eq!(s1, 2.0 / 3.0, epsilon = 1e-6);
    assert_relative_eq!(t2, 2.0 * 2f64.sqrt() / 3.0, epsilon = 1e-6);
    assert_relative_eq!(s.s[0], s1, epsilon = 1e-6);
    assert_relative_eq!(s.s[1], t2, epsilon = 1e-6);
    assert_relative_eq!(s.s[2], s3, epsilon = 1e-6);
    assert!(s.s[2] < 0.99, "the exact-match question of the other task must not leak in");
}

#[test]
fn state_rejects_edge_into_another_node() {
    let g = build_graph(&running_example(), 0.4, EmbedderConfig::default()).unwrap();
    let q = g.embed("anything");
    assert!(matches!(build_state(&g, &q, 3, Some((1, 2))), Err(Error::Precondition(_))));
    assert!(matches!(build_state(&g, &q, 99, None), Err(Error::NotFound(_))));
}

// ---------------------------------------------------------------- policy

#[test]
fn zero_policy_is_uniform() {
    let p = PolicyParams::<f64>::zeros();
    let (inc, exc) = p.probabilities(&TraversalState::new([0.3, -0.7, 0.9])).unwrap();
    assert_eq!((inc, exc), (0.5, 0.5));
}

#[test]
fn policy_outputs_a_distribution() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for seed in 0..50 {
        let p = PolicyParams::<f64>::init_random(seed);
        let (a, b) = p.probabilities(&random_state(&mut rng)).unwrap();
        assert!((a + b - 1.0).abs() < 1e-9);
        assert!((0.0..=1.0).contains(&a));
    }
}

#[test]
fn non_finite_parameters_are_rejected() {
    let mut p = PolicyParams::<f64>::zeros();
    p.data[7] = f64::NAN;
    assert!(matches!(p.probabilities(&TraversalState::new([0.0; 3])), Err(Error::Numeric(_))));
}

#[test]
fn neg_log_prob_gradient_matches_finite_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for trial in 0..20 {
        let p = PolicyParams::<f64>::init_random(100 + trial);
        let s = random_state(&mut rng);
        let a = if rng.random::<bool>() { Action::Include } else { Action::Exclude };
        let (_, g) = p.neg_log_prob_grad(&s, a);
        let fd = finite_difference(&p, |q| q.neg_log_prob_grad(&s, a).0);
        let e = rel_err(&g, &fd);
        assert!(e < 1e-4, "trial {trial}: relative error {e}");
    }
}

#[test]
fn bce_gradient_matches_finite_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    for trial in 0..20 {
        let p = PolicyParams::<f64>::init_random(200 + trial);
        let batch: Vec<(TraversalState, bool)> = (0..5).map(|_| (random_state(&mut rng), rng.random())).collect();
        let (_, g) = p.bce_loss_grad(&batch);
        let fd = finite_difference(&p, |q| q.bce_loss_grad(&batch).0);
        let e = rel_err(&g, &fd);
        assert!(e < 1e-4, "trial {trial}: relative error {e}");
    }
}

#[test]
fn reinforce_gradient_matches_finite_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    for trial in 0..20 {
        let p = PolicyParams::<f64>::init_random(300 + trial);
        let steps = (0..1 + rng.random_range(0..5))
            .map(|_| Step {
                state: random_state(&mut rng),
                action: if rng.random::<bool>() { Action::Include } else { Action::Exclude },
                log_prob: 0.0,
            })
            .collect();
        let episode = Episode { steps, terminal_reward: rng.random() };
        let baseline = rng.random_range(0.0..0.5);
        let (_, g) = reinforce_loss_grad(&p, &episode, 0.99, baseline);
        let fd = finite_difference(&p, |q| reinforce_loss_grad(q, &episode, 0.99, baseline).0);
        let e = rel_err(&g, &fd);
        assert!(e < 1e-4, "trial {trial}: relative error {e}");
    }
}

#[test]
fn seeded_policy_probabilities_are_locked() {
    let p = PolicyParams::<f64>::init_random(42);
    let (inc, exc) = p.probabilities(&TraversalState::new([0.3, -0.2, 0.7])).unwrap();
    assert_relative_eq!(inc, LOCKED_INCLUDE, epsilon = 1e-12);
    assert_relative_eq!(exc, 1.0 - LOCKED_INCLUDE, epsilon = 1e-12);
}

const LOCKED_INCLUDE: f64 = 0.39903590328362465;

#[test]
fn single_and_double_precision_agree() {
    let p64 = PolicyParams::<f64>::init_random(9);
    let p32: PolicyParams<f32> = p64.cast();
    let s = TraversalState::new([0.5, 0.25, -0.4]);
    let (a, _) = p64.probabilities(&s).unwrap();
    let (b, _) = p32.probabilities(&s).unwrap();
    assert_relative_eq!(a, f64::from(b), epsilon = 1e-6);
}

#[test]
fn policy_file_round_trips_bit_exactly() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("policy.json");
    let p = PolicyParams::<f64>::init_random(3);
    p.save(&path).unwrap();
    assert_eq!(PolicyParams::<f64>::load(&path).unwrap(), p);
    let first = std::fs::read(&path).unwrap();
    PolicyParams::<f64>::load(&path).unwrap().save(&path).unwrap();
    assert_eq!(std::fs::read(&path).unwrap(), first);

    let text = std::fs::read_to_string(&path).unwrap().replace("\"format_version\": \"1\"", "\"format_version\": \"7\"");
    std::fs::write(&path, text).unwrap();
    assert!(matches!(PolicyParams::<f64>::load(&path), Err(Error::VersionMismatch { .. })));
}

// ---------------------------------------------------------------- traversal

fn chain_graph() -> (InstructionGraph, Vec<String>) {
    let chain: Vec<String> =
        ["Open[gate]", "Search[harbour]", "Lookup[tide]", "Finish[low]"].iter().map(|s| s.to_string()).collect();
    let mut g = InstructionGraph::new(1.0, EmbedderConfig::default()).unwrap();
    g.insert_path(&InstructionPath::new(chain.clone(), "T", "Q", 1.0), "when is the tide low").unwrap();
    (g, chain)
}

#[test]
fn single_chain_yields_at_most_one_prefix() {
    let (g, chain) = chain_graph();
    let config = RlConfig { k: 1, ..RlConfig::default() };
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    for seed in 0..40 {
        let p = PolicyParams::<f64>::init_random(seed);
        let t = traverse(&g, "Open[gate]", &p, &config, Mode::Sample, &mut rng).unwrap();
        assert!(t.candidates.len() <= 1);
        let root_included = t
            .candidates
            .first()
            .map(|c| c.episode.steps[0].action)
            .or_else(|| t.unattributed.first().map(|s| s.action))
            == Some(Action::Include);
        assert_eq!(t.candidates.len(), usize::from(root_included));
        if let Some(c) = t.candidates.first() {
            assert_eq!(c.instructions[..], chain[..c.instructions.len()]);
        }
    }
    let t = traverse(&g, "Open[gate]", &always_include(), &config, Mode::Greedy, &mut rng).unwrap();
    assert_eq!(t.candidates.len(), 1);
    assert_eq!(t.candidates[0].instructions, chain);
}

#[test]
fn always_include_recombines_the_running_example() {
    let g = build_graph(&running_example(), 0.4, EmbedderConfig::default()).unwrap();
    let config = RlConfig { k: 3, max_path_len: 4, ..RlConfig::default() };
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let t = traverse(
        &g,
        "Scott Derrickson: born in the same place as Christopher Nolan?",
        &always_include(),
        &config,
        Mode::Greedy,
        &mut rng,
    )
    .unwrap();
    let wanted = ["Search[Scott Derrickson]", "Lookup[birthplace]", "Search[Christopher Nolan]", "Lookup[birthplace]"];
    let hit = t.candidates.iter().find(|c| c.instructions == wanted);
    let hit = hit.unwrap_or_else(|| panic!("recombined path missing from {:?}", t.candidates));
    assert_eq!(hit.nodes, vec![1, 2, 4, 2]);
}

/// Every walk (node sequence following edges) of length 1..=max_len.
fn enumerate_walks(g: &InstructionGraph, max_len: usize) -> HashSet<Vec<NodeId>> {
    let mut out = HashSet::new();
    let mut frontier: Vec<Vec<NodeId>> = g.nodes().map(|n| vec![n.id]).collect();
    while let Some(w) = frontier.pop() {
        if w.len() < max_len {
            for c in g.successors(*w.last().unwrap()) {
                let mut next = w.clone();
                next.push(c);
                frontier.push(next);
            }
        }
        out.insert(w);
    }
    out
}

fn random_graph(rng: &mut Lcg, delta: f64) -> InstructionGraph {
    let vocabulary: Vec<String> = (0..8).map(|_| random_instruction(rng)).collect();
    let mut g = InstructionGraph::new(delta, EmbedderConfig::default()).unwrap();
    for q in 0..4 {
        let len = 2 + rng.below(4);
        let mut path: Vec<String> = Vec::new();
        while path.len() < len {
            let next = vocabulary[rng.below(vocabulary.len())].clone();
            if path.last() != Some(&next) {
                path.push(next);
            }
        }
        let p = InstructionPath::new(path, format!("T{}", q % 2), format!("Q{q}"), 1.0);
        g.insert_path(&p, &format!("question {}", random_instruction(rng))).unwrap();
    }
    g
}

#[test]
fn candidates_are_walks_of_the_graph() {
    let mut lcg = Lcg(77);
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut checked = 0;
    while checked < 25 {
        let g = random_graph(&mut lcg, 0.4);
        if g.stats().node_count > 12 {
            continue;
        }
        checked += 1;
        let config = RlConfig { k: 3, max_path_len: 5, ..RlConfig::default() };
        let walks = enumerate_walks(&g, config.max_path_len);
        for seed in 0..4 {
            let p = if seed == 0 { always_include() } else { PolicyParams::init_random(seed) };
            let query = random_instruction(&mut lcg);
            let t = traverse(&g, &query, &p, &config, Mode::Sample, &mut rng).unwrap();
            assert!(t.candidates.len() <= config.k);
            for c in &t.candidates {
                assert!(walks.contains(&c.nodes), "{:?} is not a walk", c.nodes);
                assert!(c.nodes.len() <= config.max_path_len);
                assert_eq!(c.nodes.len(), c.instructions.len());
                for (n, text) in c.nodes.iter().zip(&c.instructions) {
                    assert!(g.node(*n).unwrap().contains_text(text));
                }
                let edges: Vec<(NodeId, NodeId)> = c.nodes.windows(2).map(|w| (w[0], w[1])).collect();
                let distinct: HashSet<_> = edges.iter().collect();
                assert_eq!(distinct.len(), edges.len(), "edge reused in {:?}", c.nodes);
            }
        }
    }
}

#[test]
fn greedy_traversal_is_deterministic() {
    let g = build_graph(&running_example(), 0.4, EmbedderConfig::default()).unwrap();
    let p = PolicyParams::<f64>::init_random(4);
    let config = RlConfig::default();
    let run = |seed| {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let t = traverse(&g, "Where was Ed Wood born?", &p, &config, Mode::Greedy, &mut rng).unwrap();
        t.candidates.into_iter().map(|c| c.instructions).collect::<Vec<_>>()
    };
    assert_eq!(run(1), run(2));
}

#[test]
fn empty_graph_cannot_be_traversed() {
    let g = InstructionGraph::new(0.4, EmbedderConfig::default()).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let r = traverse(&g, "q", &PolicyParams::<f64>::zeros(), &RlConfig::default(), Mode::Greedy, &mut rng);
    assert!(matches!(r, Err(Error::NotFound(_))));
}

#[test]
fn rule_hooks_mask_illegal_instructions() {
    let path = |xs: &[&str]| xs.iter().map(|s| s.to_string()).collect::<Vec<_>>();
    let h = RuleHook::NoLookupBeforeSearch;
    assert!(h.forbids(&[], "Lookup[x]"));
    assert!(h.forbids(&path(&["Open[a]"]), "Lookup[x]"));
    assert!(!h.forbids(&path(&["Search[a]"]), "Lookup[x]"));
    assert!(!h.forbids(&[], "Search[a]"));
    let r = RuleHook::NoRepeatSearch;
    assert!(r.forbids(&path(&["Search[a]", "Lookup[x]"]), "Search[a]"));
    assert!(!r.forbids(&path(&["Search[a]"]), "Search[b]"));
    assert_eq!("no-lookup-before-search".parse::<RuleHook>().unwrap(), h);
    assert!(matches!("nope".parse::<RuleHook>(), Err(Error::Config(_))));

    let g = build_graph(&running_example(), 0.4, EmbedderConfig::default()).unwrap();
    let config = RlConfig { k: 3, max_path_len: 6, rule_hooks: RuleHook::ALL.to_vec(), ..RlConfig::default() };
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let t = traverse(&g, "Lookup[birthplace]", &always_include(), &config, Mode::Greedy, &mut rng).unwrap();
    assert!(!t.candidates.is_empty());
    for c in &t.candidates {
        for (k, text) in c.instructions.iter().enumerate() {
            assert!(!h.forbids(&c.instructions[..k], text), "{:?}", c.instructions);
            assert!(!r.forbids(&c.instructions[..k], text), "{:?}", c.instructions);
        }
    }
}

// ---------------------------------------------------------------- warm start

#[test]
fn path_covering_every_node_gives_only_positives() {
    let (g, chain) = chain_graph();
    let refs: Vec<&str> = chain.iter().map(String::as_str).collect();
    let support = TaskCorpus::from_questions([question("T", "Q", "when is the tide low", "low", &refs)]);
    let data = make_warmstart_dataset(&g, &support, 8, 0).unwrap();
    assert_eq!(data.len(), 4);
    assert!(data.iter().all(|s| s.label));
}

#[test]
fn warmstart_labels_match_path_membership() {
    let (_, corpus) = gen_world(&SyntheticWorldSpec::default(), 1).unwrap();
    let support = corpus.of_kind(QuestionKind::Support);
    let g = build_graph(&support, 0.4, EmbedderConfig::default()).unwrap();
    let data = make_warmstart_dataset(&g, &support, 6, 3).unwrap();
    assert!(!data.is_empty());
    let (mut pos, mut neg) = (0, 0);
    for s in &data {
        let on_path = g.path_nodes(&s.question_id).unwrap();
        assert_eq!(s.label, on_path.contains(&s.node), "sample {s:?}");
        let q = g.embed(&support.questions().find(|q| q.question_id == s.question_id).unwrap().text);
        assert_eq!(build_state(&g, &q, s.node, s.in_edge).unwrap(), s.state);
        if s.label {
            pos += 1
        } else {
            neg += 1
        }
    }
    let ratio = pos as f64 / (pos + neg) as f64;
    assert!((0.35..=0.65).contains(&ratio), "positives {pos} negatives {neg}");
    assert_eq!(make_warmstart_dataset(&g, &support, 6, 3).unwrap(), data);
}

#[test]
fn empty_support_gives_empty_dataset() {
    let g = build_graph(&running_example(), 0.4, EmbedderConfig::default()).unwrap();
    assert!(make_warmstart_dataset(&g, &TaskCorpus::default(), 6, 0).unwrap().is_empty());
}

#[test]
fn uniform_policy_has_ln2_loss() {
    let p = PolicyParams::<f64>::zeros();
    let (loss, _) = p.bce_loss_grad(&[(TraversalState::new([0.2, 0.1, 0.0]), true)]);
    assert_relative_eq!(loss, std::f64::consts::LN_2, epsilon = 1e-12);
    let confident = always_include();
    let mut sure = confident.clone();
    sure.data[B2] = 30.0;
    let (loss, _) = sure.bce_loss_grad(&[(TraversalState::new([0.2, 0.1, 0.0]), true)]);
    assert!(loss < 1e-6);
}

fn separable_toy(n: usize, seed: u64) -> Vec<(TraversalState, bool)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|_| {
            let s = random_state(&mut rng);
            let margin = s.s[0] + 0.5 * s.s[1] - 0.25 * s.s[2];
            (s, margin > 0.0)
        })
        .filter(|(s, _)| (s.s[0] + 0.5 * s.s[1] - 0.25 * s.s[2]).abs() > 0.1)
        .collect()
}

#[test]
fn warm_start_fits_separable_data() {
    let batch = separable_toy(64, 8);
    let mut p = PolicyParams::<f64>::init(0);
    let mut opt = Adam::new(AdamConfig::with_lr(0.05), PARAM_COUNT);
    let mut losses = Vec::new();
    for _ in 0..100 {
        losses.push(warmstart_step(&mut p, &mut opt, &batch).unwrap());
    }
    let (final_loss, _) = p.bce_loss_grad(&batch);
    assert!(final_loss < 0.1, "final loss {final_loss}");
    let window_best: Vec<f64> = losses.chunks(10).map(|w| w.iter().copied().fold(f64::MAX, f64::min)).collect();
    for w in window_best.windows(2) {
        assert!(w[1] <= w[0], "best loss rose between windows: {window_best:?}");
    }
}

// ---------------------------------------------------------------- REINFORCE

fn one_step(action: Action, reward: f64) -> Episode {
    Episode {
        steps: vec![Step { state: TraversalState::new([0.4, 0.2, -0.3]), action, log_prob: 0.0 }],
        terminal_reward: reward,
    }
}

#[test]
fn zero_reward_without_baseline_changes_nothing() {
    let mut p = PolicyParams::<f64>::init_random(1);
    let before = p.clone();
    let mut opt = Adam::new(AdamConfig::with_lr(0.01), PARAM_COUNT);
    let config = RlConfig { use_baseline: false, ..RlConfig::default() };
    pg_update(&mut p, &mut opt, &one_step(Action::Include, 0.0), &config, None).unwrap();
    assert_eq!(p, before);
    assert_eq!(opt.steps_taken(), 0);
}

#[test]
fn single_step_gradient_equals_warm_start_gradient() {
    let p = PolicyParams::<f64>::init_random(2);
    for (action, label) in [(Action::Include, true), (Action::Exclude, false)] {
        for gamma in [0.0, 0.5, 0.99] {
            let episode = one_step(action, 1.0);
            let (_, pg) = reinforce_loss_grad(&p, &episode, gamma, 0.0);
            let (_, ws) = p.bce_loss_grad(&[(episode.steps[0].state, label)]);
            for (a, b) in pg.iter().zip(&ws) {
                assert_relative_eq!(*a, *b, epsilon = 1e-12);
            }
        }
    }
}

#[test]
fn empty_episode_is_rejected() {
    let mut p = PolicyParams::<f64>::zeros();
    let mut opt = Adam::new(AdamConfig::with_lr(0.01), PARAM_COUNT);
    let r = pg_update(&mut p, &mut opt, &Episode::default(), &RlConfig::default(), None);
    assert!(matches!(r, Err(Error::Precondition(_))));
}

#[test]
fn baseline_is_a_sliding_mean() {
    let mut b = Baseline::new(3);
    assert_eq!(b.value(), 0.0);
    for r in [1.0, 0.0, 1.0, 1.0] {
        b.record(r);
    }
    assert_relative_eq!(b.value(), 2.0 / 3.0);
}

#[test]
fn reinforce_learns_the_good_branch() {
    let env = TwoBranch::new().unwrap();
    let config = RlConfig { k: 1, max_path_len: 2, learning_rate: 0.01, ..RlConfig::default() };
    for seed in 0..10 {
        let mut p = PolicyParams::<f64>::init(seed);
        let before = env.greedy_reward(&p, &config, 200, 1000 + seed).unwrap();
        assert!((0.35..=0.65).contains(&before), "seed {seed}: initial reward {before}");
        env.train(&mut p, &config, 500, seed).unwrap();
        let after = env.greedy_reward(&p, &config, 200, 1000 + seed).unwrap();
        assert!(after > 0.95, "seed {seed}: reward {before} -> {after}");
    }
}
