//! Acceptance run: one PASS/FAIL line per criterion, non-zero exit if any fails.

use std::collections::BTreeSet;
use std::panic::{self, AssertUnwindSafe};
use std::path::Path;
use std::process::{Command, Output};
use std::time::{Duration, Instant};

use flowbert_core::downstream::{cls_attention_split, AttentionSplit};
use flowbert_core::encoding::{build_vocab, encode_source, Segment};
use flowbert_core::pretrain::{
    edge_pred_loss, evaluate_pretraining, language_sampler, node_align_loss, prepare_examples, pretrain_run,
    sample_align_targets, sample_edge_targets, select_mlm_targets, write_jsonl, MlmObjective, PairObjective,
    PairTargets,
};
use flowbert_core::synth::{function_corpus, random_program};
use flowbert_core::transformer::{check_gradients, forward, init_params, ModelInput, SumObjective};
use flowbert_core::{build_attention_mask, build_dfg, Limits, MaskOptions, ModelConfig, PretrainConfig, Program};
use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Outcome = Result<String, String>;
type Criterion<'a> = (&'a str, Box<dyn Fn() -> Outcome + 'a>);
/// Source, node names in source order, and `(src, dst)` edges.
type DfgCase = (&'static str, &'static [&'static str], &'static [(usize, usize)]);

fn check(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn within(elapsed: Duration, limit: Duration, result: Outcome) -> Outcome {
    let timed = |d: String| format!("{d}; {:.2}s (limit {}s)", elapsed.as_secs_f64(), limit.as_secs());
    match result {
        Ok(d) if elapsed <= limit => Ok(timed(d)),
        Ok(d) | Err(d) => Err(timed(d)),
    }
}

// ---------------------------------------------------------------- 1

/// Traced by hand.
const DFG_CASES: &[DfgCase] = &[
    ("v = max_value - min_value\n", &["v", "max_value", "min_value"], &[(1, 0), (2, 0)]),
    ("a = 1\nb = a\n", &["a", "b", "a"], &[(0, 2), (2, 1)]),
    (
        "def max(a, b):\n    x = 0\n    if b > a:\n        x = b\n    else:\n        x = a\n    return x\n",
        &["a", "b", "x", "b", "a", "x", "b", "x", "a", "x"],
        &[(1, 3), (0, 4), (1, 6), (6, 5), (0, 8), (8, 7), (5, 9), (7, 9)],
    ),
    ("total = 0\ntotal += x\n", &["total", "total", "x"], &[(0, 1), (2, 1)]),
    (
        "i = 0\nwhile i < n:\n    i = i + 1\nprint(i)\n",
        &["i", "i", "n", "i", "i", "i"],
        &[(0, 1), (3, 1), (0, 4), (3, 4), (4, 3), (0, 5), (3, 5)],
    ),
    (
        "def s(xs):\n    acc = 0\n    for v in xs:\n        acc += v\n    return acc\n",
        &["xs", "acc", "v", "xs", "acc", "v", "acc"],
        &[(0, 3), (3, 2), (1, 4), (2, 5), (5, 4), (1, 6), (4, 6)],
    ),
    ("x = 1\nif c:\n    x = 2\n    return x\nprint(x)\n", &["x", "c", "x", "x", "x"], &[(2, 3), (0, 4)]),
    (
        "if a > 0:\n    s = 1\nelif a < 0:\n    s = 2\nelse:\n    s = 3\nt = s\n",
        &["a", "s", "a", "s", "s", "t", "s"],
        &[(1, 6), (3, 6), (4, 6), (6, 5)],
    ),
    ("x = 0\nif c:\n    x = 1\ny = x\n", &["x", "c", "x", "y", "x"], &[(0, 4), (2, 4), (4, 3)]),
    ("n = len(items)\nm = max(n, k)\n", &["n", "items", "m", "n", "k"], &[(1, 0), (0, 3), (3, 2), (4, 2)]),
    (
        "def lin(a, b, x):\n    y = a * x + b\n    return y\n",
        &["a", "b", "x", "y", "a", "x", "b", "y"],
        &[(0, 4), (2, 5), (1, 6), (4, 3), (5, 3), (6, 3), (3, 7)],
    ),
    ("t = a\na = b\nb = t\n", &["t", "a", "a", "b", "b", "t"], &[(1, 0), (3, 2), (5, 4), (0, 5)]),
    ("x = 5\nx = x + 1\n", &["x", "x", "x"], &[(0, 2), (2, 1)]),
    (
        "def gcd(a, b):\n    while b != 0:\n        t = a % b\n        a = b\n        b = t\n    return a\n",
        &["a", "b", "b", "t", "a", "b", "a", "b", "b", "t", "a"],
        &[
            (1, 2), (8, 2), (0, 4), (6, 4), (1, 5), (8, 5), (4, 3), (5, 3),
            (1, 7), (8, 7), (7, 6), (3, 9), (9, 8), (0, 10), (6, 10),
        ],
    ),
    (
        "k = 2\ndef f(x):\n    y = x * k\n    return y\nz = k\n",
        &["k", "x", "y", "x", "k", "y", "z", "k"],
        &[(1, 3), (0, 4), (3, 2), (4, 2), (2, 5), (0, 7), (7, 6)],
    ),
    ("y = q\nq = 1\n", &["y", "q", "q"], &[(1, 0)]),
    (
        "def sq(n):\n    s = 0\n    for i in range(n):\n        s += i * i\n    return s\n",
        &["n", "s", "i", "n", "s", "i", "i", "s"],
        &[(0, 3), (3, 2), (1, 4), (2, 5), (2, 6), (5, 4), (6, 4), (1, 7), (4, 7)],
    ),
    (
        "if x > y:\n    m = x\nelse:\n    m = y\nprint(m)\n",
        &["x", "y", "m", "x", "m", "y", "m"],
        &[(3, 2), (5, 4), (2, 6), (4, 6)],
    ),
    (
        "def fact(n):\n    r = 1\n    while n > 1:\n        r *= n\n        n -= 1\n    return r\n",
        &["n", "r", "n", "r", "n", "n", "r"],
        &[(0, 2), (5, 2), (1, 3), (0, 4), (5, 4), (4, 3), (0, 5), (1, 6), (3, 6)],
    ),
    ("print(1)\n", &[], &[]),
];

fn dfg_oracle() -> Outcome {
    let start = Instant::now();
    let mut failures = Vec::new();
    for (i, (src, names, edges)) in DFG_CASES.iter().enumerate() {
        let program = Program::parse(src).map_err(|e| format!("case {i}: {e}"))?;
        let g = build_dfg(&program.ast);
        let got_names: Vec<&str> = g.nodes.iter().map(|n| n.name.as_str()).collect();
        let aligned = g.nodes.iter().all(|n| program.tokens[n.token_index].text == n.name);
        let want: BTreeSet<(usize, usize)> = edges.iter().copied().collect();
        if got_names != *names || g.edges != want || !aligned {
            failures.push(format!("case {i}: nodes {got_names:?} edges {:?}", g.edges));
        }
    }
    let result = check(failures.is_empty(), format!("{}/{} snippets match {}", DFG_CASES.len() - failures.len(), DFG_CASES.len(), failures.join("; ")));
    within(start.elapsed(), Duration::from_secs(1), result)
}

// ---------------------------------------------------------------- 2

/// Entry-wise mask predicate computed from the program and its DFG, without
/// looking at the encoder's edge or link sets.
fn reference_mask(code: &str, comment_len: usize, limits: &Limits) -> Vec<Vec<bool>> {
    let program = Program::parse(code).unwrap();
    let g = build_dfg(&program.ast);
    let code_len = program.tokens.len().min(limits.max_code);
    let code_start = comment_len + 2;
    let node_start = code_start + code_len + 1;
    let kept: Vec<_> = g.nodes.iter().filter(|n| n.token_index < code_len).take(limits.max_nodes).collect();
    let n = node_start + kept.len();
    let node_pos = |id: usize| kept.iter().position(|v| v.id == id).map(|r| node_start + r);
    let special = [0, comment_len + 1, node_start - 1];
    let mut m = vec![vec![false; n]; n];
    for (q, row) in m.iter_mut().enumerate() {
        for (k, cell) in row.iter_mut().enumerate() {
            let sequential = q < node_start && k < node_start;
            *cell = special.contains(&q) || sequential || (q == k && q >= node_start);
        }
    }
    for &(s, d) in &g.edges {
        if let (Some(s), Some(d)) = (node_pos(s), node_pos(d)) {
            m[d][s] = true;
        }
    }
    for (r, v) in kept.iter().enumerate() {
        let (node, tok) = (node_start + r, code_start + v.token_index);
        m[node][tok] = true;
        m[tok][node] = true;
    }
    m
}

fn mask_equivalence() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let mut mismatches = 0;
    let mut entries = 0usize;
    for i in 0..1000 {
        let code = random_program(&mut rng);
        let limits = if i % 4 == 0 {
            Limits { max_comment: 3, max_code: rng.random_range(4..40), max_nodes: rng.random_range(1..8) }
        } else {
            Limits::default()
        };
        let comment = "sum the values of xs";
        let vocab = build_vocab([(comment, code.as_str())], 500).unwrap();
        let ex = encode_source(comment, &code, &vocab, &limits, true).unwrap();
        let mask = build_attention_mask(&ex, MaskOptions::default());
        let reference = reference_mask(&code, ex.comment_range().len(), &limits);
        if reference.len() != mask.size() {
            mismatches += 1;
            continue;
        }
        for (q, row) in reference.iter().enumerate() {
            for (k, &allowed) in row.iter().enumerate() {
                entries += 1;
                if mask.allowed(q, k) != allowed {
                    mismatches += 1;
                }
            }
        }
    }
    let result = check(mismatches == 0, format!("1000 programs, {entries} entries, {mismatches} mismatches"));
    within(start.elapsed(), Duration::from_secs(30), result)
}

// ---------------------------------------------------------------- 3

fn attention_numerics() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let (mut worst_sum, mut worst_blocked) = (0.0f64, 0.0f64);
    for i in 0..100 {
        let code = random_program(&mut rng);
        let vocab = build_vocab([("check rows", code.as_str())], 500).unwrap();
        let ex = encode_source("check rows", &code, &vocab, &Limits::default(), true).unwrap();
        let mask = build_attention_mask(&ex, MaskOptions::default());
        let cfg = ModelConfig { num_layers: 2, hidden_dim: 32, num_heads: 4, ffn_dim: 64, vocab_size: vocab.len(), max_positions: 512, seed: i };
        let params = init_params::<f32>(&cfg).unwrap();
        let acts = forward(&params, &ModelInput::new(&ex, &mask, 512).unwrap()).unwrap();
        for head in acts.attention.iter().flatten() {
            for (q, row) in head.outer_iter().enumerate() {
                let sum: f64 = row.iter().map(|&w| f64::from(w)).sum();
                worst_sum = worst_sum.max((sum - 1.0).abs());
                for (k, &w) in row.iter().enumerate() {
                    if !mask.allowed(q, k) {
                        worst_blocked = worst_blocked.max(f64::from(w));
                    }
                }
            }
        }
    }
    check(
        worst_sum <= 1e-6 && worst_blocked <= 1e-12,
        format!("100 forwards; max |row sum - 1| = {worst_sum:.2e}, max blocked weight = {worst_blocked:.2e}"),
    )
}

// ---------------------------------------------------------------- 4

fn intersect(a: &PairTargets, b: &PairTargets) -> flowbert_core::MaskMatrix {
    let mut m = a.mask.clone();
    for q in 0..m.size() {
        for k in 0..m.size() {
            m.set(q, k, a.mask.allowed(q, k) && b.mask.allowed(q, k));
        }
    }
    m
}

fn gradient_check() -> Outcome {
    let start = Instant::now();
    let code = "def mean(xs):\n    total = 0\n    for v in xs:\n        total += v\n    m = total / len(xs)\n    return m\n";
    let comment = "return the arithmetic mean of xs";
    let vocab = build_vocab([(comment, code)], 200).unwrap();
    let ex = encode_source(comment, code, &vocab, &Limits::default(), true).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mlm = select_mlm_targets(&ex, vocab.len(), &mut rng).unwrap();
    let edge = sample_edge_targets(&mlm.example, MaskOptions::default(), &mut rng).unwrap();
    let align = sample_align_targets(&mlm.example, MaskOptions::default(), &mut rng).unwrap();
    let (mlm_obj, edge_obj, align_obj) = (MlmObjective::from(&mlm), PairObjective::from(&edge), PairObjective::from(&align));
    let objective = SumObjective(vec![&mlm_obj, &edge_obj, &align_obj]);

    let cfg = ModelConfig { num_layers: 2, hidden_dim: 16, num_heads: 2, ffn_dim: 32, vocab_size: vocab.len(), max_positions: 128, seed: 4 };
    // At the 0.02-scale init, attention-projection gradients sit near 1e-9,
    // below what central differences resolve; check at a perturbed point.
    let mut params = init_params::<f64>(&cfg).unwrap();
    for mut tensor in params.tensors_mut() {
        tensor.mapv_inplace(|v| v + rng.random_range(-0.3..0.3));
    }
    let input = ModelInput::new(&mlm.example, &intersect(&edge, &align), 128).unwrap();
    let checks = check_gradients(&objective, &params, &input, 200, 1e-5, &mut rng).map_err(|e| e.to_string())?;
    let good = checks.iter().filter(|c| c.relative_error(1e-7) <= 1e-4).count();
    let worst = checks.iter().map(|c| c.relative_error(1e-7)).fold(0.0, f64::max);
    let result = check(good * 100 >= checks.len() * 99, format!("{good}/{} coordinates within 1e-4 (worst {worst:.2e})", checks.len()));
    within(start.elapsed(), Duration::from_secs(120), result)
}

// ---------------------------------------------------------------- 5

fn direct_pair_loss(h: &Array2<f64>, t: &PairTargets) -> f64 {
    let mut total = 0.0;
    for (&(i, j), &y) in t.candidates.iter().zip(&t.labels) {
        let p = 1.0 / (1.0 + (-h.row(i).dot(&h.row(j))).exp());
        total -= if y { p.ln() } else { (1.0 - p).ln() };
    }
    total / t.candidates.len() as f64
}

fn loss_formulas() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let cfg = ModelConfig { num_layers: 1, hidden_dim: 8, num_heads: 2, ffn_dim: 8, vocab_size: 300, max_positions: 512, seed: 0 };
    let params = init_params::<f64>(&cfg).unwrap();
    let (mut worst, mut worst_ln2, mut cases) = (0.0f64, 0.0f64, 0);
    while cases < 50 {
        let code = random_program(&mut rng);
        let vocab = build_vocab([("", code.as_str())], 300).unwrap();
        let ex = encode_source("", &code, &vocab, &Limits::default(), true).unwrap();
        let (Ok(edge), Ok(align)) = (
            sample_edge_targets(&ex, MaskOptions::default(), &mut rng),
            sample_align_targets(&ex, MaskOptions::default(), &mut rng),
        ) else {
            continue;
        };
        if edge.is_empty() || align.is_empty() {
            continue;
        }
        cases += 1;
        let h = Array2::from_shape_fn((ex.len(), 8), |_| rng.random_range(-1.0..1.0));
        worst = worst.max((edge_pred_loss(&h, &edge, &params) - direct_pair_loss(&h, &edge)).abs());
        worst = worst.max((node_align_loss(&h, &align, &params) - direct_pair_loss(&h, &align)).abs());
        let zero = Array2::zeros((ex.len(), 8));
        for l in [edge_pred_loss(&zero, &edge, &params), node_align_loss(&zero, &align, &params)] {
            worst_ln2 = worst_ln2.max((l - std::f64::consts::LN_2).abs());
        }
    }
    check(
        worst <= 1e-6 && worst_ln2 <= 1e-9,
        format!("{cases} graphs; max |loss - direct| = {worst:.2e}, max |p=0.5 loss - ln 2| = {worst_ln2:.2e}"),
    )
}

// ---------------------------------------------------------------- 6

fn sampler() -> Outcome {
    let counts = [("python", 900usize), ("java", 100)];
    let q = language_sampler(&counts, 0.7).map_err(|e| e.to_string())?;
    let direct: Vec<f64> = {
        let w: Vec<f64> = counts.iter().map(|&(_, c)| (c as f64 / 1000.0).powf(0.7)).collect();
        let z: f64 = w.iter().sum();
        w.iter().map(|x| x / z).collect()
    };
    let err = q.probabilities().iter().zip(&direct).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    let exact = language_sampler(&counts, 1.0).map_err(|e| e.to_string())?;
    let proportional = exact.probabilities() == [0.9, 0.1];
    check(
        err <= 1e-6 && proportional,
        format!("q = {:.6?} (max error {err:.1e}); alpha=1 gives {:?}", q.probabilities(), exact.probabilities()),
    )
}

// ---------------------------------------------------------------- 7

fn overfit_pretraining() -> Outcome {
    let start = Instant::now();
    let corpus = function_corpus(64, &mut ChaCha8Rng::seed_from_u64(0));
    let vocab = build_vocab(corpus.iter().map(|r| (r.docstring.as_str(), r.code.as_str())), 1000).unwrap();
    let cfg = ModelConfig::desk(vocab.len());
    let params = init_params::<f32>(&cfg).unwrap();
    let (_, prepared) = prepare_examples(&corpus, &vocab, &Limits::default(), true, cfg.max_positions).unwrap();
    let examples: Vec<_> = prepared.into_iter().map(|e| e.example).collect();
    let before = evaluate_pretraining(&params, &examples, 99).map_err(|e| e.to_string())?;
    let config = PretrainConfig { steps: 2000, batch_size: 48, lr: 3e-3, seed: 1, ..Default::default() };
    let outcome = pretrain_run(&corpus, &vocab, params, &config).map_err(|e| e.to_string())?;
    let after = evaluate_pretraining(&outcome.params, &examples, 99).map_err(|e| e.to_string())?;
    let (edge, align) = (after.edge_accuracy.unwrap_or(0.0), after.align_accuracy.unwrap_or(0.0));
    let result = check(
        after.mlm_loss < 0.1 * before.mlm_loss && edge >= 0.95 && align >= 0.95,
        format!("MLM {:.3} -> {:.3}, EdgePred acc {edge:.3}, NodeAlign acc {align:.3}", before.mlm_loss, after.mlm_loss),
    );
    within(start.elapsed(), Duration::from_secs(600), result)
}

// ---------------------------------------------------------------- CLI helpers

fn flowbert(args: &[&str], threads: Option<usize>) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_flowbert"));
    cmd.args(args);
    if let Some(n) = threads {
        cmd.env("RAYON_NUM_THREADS", n.to_string());
    }
    cmd.output().expect("binary runs")
}

fn stdout_of(args: &[&str]) -> Result<String, String> {
    let out = flowbert(args, None);
    if !out.status.success() {
        return Err(format!("{args:?} failed: {}", String::from_utf8_lossy(&out.stderr)));
    }
    Ok(String::from_utf8(out.stdout).unwrap())
}

fn mrr_of(json: &str) -> Result<f64, String> {
    let v: serde_json::Value = serde_json::from_str(json).map_err(|e| e.to_string())?;
    v["mrr"].as_f64().ok_or_else(|| format!("no mrr in {json}"))
}

fn write_corpus(dir: &Path, count: usize, seed: u64) -> String {
    let path = dir.join(format!("corpus{count}_{seed}.jsonl"));
    let mut buf = Vec::new();
    write_jsonl(&function_corpus(count, &mut ChaCha8Rng::seed_from_u64(seed)), &mut buf).unwrap();
    std::fs::write(&path, buf).unwrap();
    path.to_str().unwrap().to_string()
}

// ---------------------------------------------------------------- 8

fn search_delta(dir: &Path) -> Outcome {
    let data = write_corpus(dir, 16, 0);
    let random_level = (1..=16).map(|k| 1.0 / k as f64).sum::<f64>() / 16.0;
    let mut untrained = Vec::new();
    for seed in 0..8 {
        untrained.push(mrr_of(&stdout_of(&["eval-search", "--data", &data, "--seed", &seed.to_string()])?)?);
    }
    let untrained_mean = untrained.iter().sum::<f64>() / untrained.len() as f64;
    let out = dir.join("search");
    let tuned = mrr_of(&stdout_of(&["finetune-search", "--data", &data, "--out", out.to_str().unwrap()])?)?;
    let out = dir.join("search-plain");
    let plain = mrr_of(&stdout_of(&["finetune-search", "--data", &data, "--no-dataflow", "--out", out.to_str().unwrap()])?)?;
    check(
        tuned == 1.0 && plain == 1.0 && (untrained_mean - random_level).abs() <= 0.1,
        format!(
            "fine-tuned {tuned}, without data flow {plain}, untrained mean over 8 inits {untrained_mean:.3} \
             (each {untrained:.3?}) vs random {random_level:.4}"
        ),
    )
}

// ---------------------------------------------------------------- 9

fn attention_split(dir: &Path) -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let mut worst = 0.0f64;
    for i in 0..50 {
        let code = random_program(&mut rng);
        let vocab = build_vocab([("", code.as_str())], 300).unwrap();
        let ex = encode_source("", &code, &vocab, &Limits::default(), true).unwrap();
        let cfg = ModelConfig { num_layers: 2, hidden_dim: 16, num_heads: 4, ffn_dim: 16, vocab_size: vocab.len(), max_positions: 512, seed: i };
        let params = init_params::<f32>(&cfg).unwrap();
        let acts = forward(&params, &ModelInput::new(&ex, &build_attention_mask(&ex, MaskOptions::default()), 512).unwrap()).unwrap();
        let s = cls_attention_split(&acts, &ex);
        worst = worst.max((s.code_fraction + s.node_fraction - 1.0).abs());
    }

    let code = "a = b + c\n";
    let vocab = build_vocab([("", code)], 50).unwrap();
    let ex = encode_source("", code, &vocab, &Limits::default(), false).unwrap();
    let cfg = ModelConfig { num_layers: 2, hidden_dim: 16, num_heads: 4, ffn_dim: 16, vocab_size: vocab.len(), max_positions: 512, seed: 0 };
    let params = init_params::<f32>(&cfg).unwrap();
    let acts = forward(&params, &ModelInput::new(&ex, &build_attention_mask(&ex, MaskOptions::default()), 512).unwrap()).unwrap();
    let zero = cls_attention_split(&acts, &ex);
    let zero_ok = ex.segments.iter().all(|s| *s != Segment::Node)
        && zero == AttentionSplit { code_fraction: 1.0, node_fraction: 0.0 };

    let data = write_corpus(dir, 16, 0);
    let table = stdout_of(&["attention-split", "--data", &data])?;
    let rows: Vec<Vec<&str>> = table.lines().map(|l| l.split_whitespace().collect()).collect();
    let format_ok = rows.len() == 2 && rows[0] == ["codes", "variables"] && rows[1].len() == 3 && rows[1][0] == "[CLS]" && {
        let parsed: Vec<Option<f64>> = rows[1][1..].iter().map(|v| v.parse().ok().filter(|_| v.split('.').nth(1).map(str::len) == Some(1))).collect();
        matches!(parsed[..], [Some(a), Some(b)] if (a + b - 100.0).abs() <= 0.1)
    };
    check(
        worst <= 1e-6 && zero_ok && format_ok,
        format!("max |sum - 1| = {worst:.2e}; zero-node split {zero:?}; report {:?}", table.trim_end()),
    )
}

// ---------------------------------------------------------------- 10

fn determinism(dir: &Path) -> Outcome {
    let corpus = write_corpus(dir, 16, 3);
    let clones = dir.join("clones.jsonl");
    let clones = clones.to_str().unwrap();
    stdout_of(&["synth", "--kind", "clones", "--count", "8", "--seed", "1", "--out", clones])?;
    let program = dir.join("program.ml");
    std::fs::write(&program, "def f(a, b):\n    c = a - b\n    return c\n").unwrap();
    let program = program.to_str().unwrap();
    let config = dir.join("run.json");
    std::fs::write(&config, r#"{"seed": 7, "pretrain": {"steps": 6, "batch_size": 4}, "search": {"epochs": 3}, "clone": {"epochs": 3}}"#).unwrap();
    let config = config.to_str().unwrap();

    let commands: Vec<(&str, Vec<&str>)> = vec![
        ("extract-dfg", vec!["extract-dfg", program]),
        ("encode", vec!["encode", program, "--comment", "difference of a and b"]),
        ("pretrain", vec!["pretrain", "--config", config, "--data", &corpus]),
        ("finetune-search", vec!["finetune-search", "--config", config, "--data", &corpus]),
        ("eval-search", vec!["eval-search", "--config", config, "--data", &corpus]),
        ("finetune-clone", vec!["finetune-clone", "--config", config, "--data", clones]),
        ("eval-clone", vec!["eval-clone", "--config", config, "--data", clones]),
        ("attention-split", vec!["attention-split", "--config", config, "--data", &corpus, "--json"]),
    ];
    let mut differing = Vec::new();
    for (name, args) in &commands {
        let mut runs = Vec::new();
        for (run, threads) in [(0, 1), (1, 2)] {
            let out_dir = dir.join(format!("det-{name}-{run}"));
            let mut full = args.clone();
            let out_str = out_dir.to_str().unwrap().to_string();
            if !matches!(*name, "extract-dfg" | "encode") {
                full.extend(["--out", out_str.as_str()]);
            }
            let out = flowbert(&full, Some(threads));
            if !out.status.success() {
                return Err(format!("{name} failed: {}", String::from_utf8_lossy(&out.stderr)));
            }
            let mut artifacts = vec![out.stdout];
            for file in ["metrics.json", "model.ckpt", "loss.csv", "history.csv", "attention.json"] {
                if let Ok(bytes) = std::fs::read(out_dir.join(file)) {
                    artifacts.push(bytes);
                }
            }
            runs.push(artifacts);
        }
        if runs[0] != runs[1] {
            differing.push(*name);
        }
    }
    check(
        differing.is_empty(),
        format!("{} subcommands run twice (1 and 2 worker threads); differing: {differing:?}", commands.len()),
    )
}

fn main() {
    let dir = tempfile::tempdir().expect("temp dir");
    let criteria: Vec<Criterion> = vec![
        ("1 DFG oracle suite", Box::new(dfg_oracle)),
        ("2 mask equivalence", Box::new(mask_equivalence)),
        ("3 attention numerics", Box::new(attention_numerics)),
        ("4 gradient check", Box::new(gradient_check)),
        ("5 loss formulas", Box::new(loss_formulas)),
        ("6 language sampler", Box::new(sampler)),
        ("7 overfit pre-training", Box::new(overfit_pretraining)),
        ("8 search behavioral delta", Box::new(|| search_delta(dir.path()))),
        ("9 attention split", Box::new(|| attention_split(dir.path()))),
        ("10 end-to-end determinism", Box::new(|| determinism(dir.path()))),
    ];
    let only: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    let mut failed = 0;
    for (name, run) in &criteria {
        if !only.is_empty() && !only.iter().any(|o| name.starts_with(&format!("{o} "))) {
            continue;
        }
        let outcome = panic::catch_unwind(AssertUnwindSafe(run)).unwrap_or_else(|_| Err("panicked".into()));
        match outcome {
            Ok(detail) => println!("PASS criterion {name}: {detail}"),
            Err(detail) => {
                failed += 1;
                println!("FAIL criterion {name}: {detail}");
            }
        }
    }
    if failed > 0 {
        std::process::exit(1);
    }
}
