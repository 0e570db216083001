use std::fs::{self, File};
use std::io::{self, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use flowbert_core::downstream::{
    clone_metrics, cls_attention_split, finetune_clone, finetune_search, model_input, predict_clones, rank_pairs,
    search_pairs, AttentionReport, CloneRecord, SearchPair,
};
use flowbert_core::encoding::{assign_positions, build_vocab, encode_source, Segment};
use flowbert_core::pretrain::{
    evaluate_pretraining, prepare_examples, pretrain_run, read_jsonl, write_jsonl, write_loss_log,
};
use flowbert_core::synth::{clone_pairs, function_corpus};
use flowbert_core::transformer::{forward, init_params, load_checkpoint, save_checkpoint};
use flowbert_core::{build_attention_mask, build_dfg, CorpusRecord, MaskOptions, ModelParams, Program, Vocabulary};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::de::DeserializeOwned;
use serde::Serialize;

use crate::config::RunConfig;
use crate::{Command, RunArgs, SynthKind, TrainArgs, UsageError};

pub fn run(command: Command) -> Result<()> {
    match command {
        Command::ExtractDfg { file } => extract_dfg(&file),
        Command::Encode { file, comment, run } => encode(&file, &comment, &resolve(&run)?),
        Command::Synth { kind, count, seed, out } => synth(kind, count, seed, out.as_deref()),
        Command::Pretrain { run, steps, batch_size, lr, no_edgepred, no_nodealign } => {
            let mut cfg = resolve(&run)?;
            let p = &mut cfg.pretrain;
            p.steps = steps.unwrap_or(p.steps);
            p.batch_size = batch_size.unwrap_or(p.batch_size);
            p.lr = lr.unwrap_or(p.lr);
            cfg.objectives.edge_pred &= !no_edgepred;
            cfg.objectives.node_align &= !no_nodealign;
            cfg.validate()?;
            pretrain(&cfg)
        }
        Command::FinetuneSearch { run, train } => {
            let mut cfg = resolve(&run)?;
            let s = &mut cfg.search;
            apply_train(&train, &mut s.epochs, &mut s.batch_size, &mut s.lr);
            cfg.validate()?;
            finetune_search_cmd(&cfg)
        }
        Command::EvalSearch { run } => eval_search(&resolve(&run)?),
        Command::FinetuneClone { run, train } => {
            let mut cfg = resolve(&run)?;
            let c = &mut cfg.clone;
            apply_train(&train, &mut c.epochs, &mut c.batch_size, &mut c.lr);
            cfg.validate()?;
            finetune_clone_cmd(&cfg)
        }
        Command::EvalClone { run } => eval_clone(&resolve(&run)?),
        Command::AttentionSplit { run, json } => attention_split(&resolve(&run)?, json),
    }
}

fn apply_train(args: &TrainArgs, epochs: &mut usize, batch_size: &mut usize, lr: &mut f64) {
    *epochs = args.epochs.unwrap_or(*epochs);
    *batch_size = args.batch_size.unwrap_or(*batch_size);
    *lr = args.lr.unwrap_or(*lr);
}

/// `--config` (or defaults) with command-line overrides applied.
fn resolve(args: &RunArgs) -> Result<RunConfig> {
    let mut cfg = match &args.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    let paths = &mut cfg.paths;
    for (flag, slot) in [
        (&args.data, &mut paths.data),
        (&args.valid, &mut paths.valid),
        (&args.checkpoint, &mut paths.checkpoint),
        (&args.vocab, &mut paths.vocab),
        (&args.out, &mut paths.out),
    ] {
        if flag.is_some() {
            slot.clone_from(flag);
        }
    }
    cfg.seed = args.seed.unwrap_or(cfg.seed);
    cfg.use_dataflow &= !args.no_dataflow;
    cfg.validate()?;
    Ok(cfg)
}

fn required<'a>(path: &'a Option<PathBuf>, flag: &str) -> Result<&'a Path> {
    path.as_deref().ok_or_else(|| UsageError(format!("--{flag} is required")).into())
}

fn read_records<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>> {
    let file = File::open(path).with_context(|| format!("opening {}", path.display()))?;
    read_jsonl(BufReader::new(file)).with_context(|| format!("reading {}", path.display()))
}

fn read_optional<T: DeserializeOwned>(path: &Option<PathBuf>) -> Result<Option<Vec<T>>> {
    path.as_deref().map(read_records).transpose()
}

/// Writes to stdout; a closed pipe ends output quietly.
fn print_out(text: &str) -> Result<()> {
    match io::stdout().write_all(text.as_bytes()) {
        Err(e) if e.kind() == io::ErrorKind::BrokenPipe => Ok(()),
        r => Ok(r?),
    }
}

fn to_json_line<T: Serialize>(value: &T) -> String {
    let mut s = serde_json::to_string(value).expect("plain data always serializes");
    s.push('\n');
    s
}

/// Loads the checkpoint named in the config with its vocabulary, or
/// initializes a fresh model over a vocabulary built from `texts`.
fn load_model<'a>(
    cfg: &RunConfig,
    texts: impl IntoIterator<Item = (&'a str, &'a str)>,
) -> Result<(ModelParams<f32>, Vocabulary)> {
    match &cfg.paths.checkpoint {
        Some(ckpt) => {
            let file = File::open(ckpt).with_context(|| format!("opening {}", ckpt.display()))?;
            let params = load_checkpoint(BufReader::new(file)).with_context(|| format!("loading {}", ckpt.display()))?;
            let vocab_path = match &cfg.paths.vocab {
                Some(p) => p.clone(),
                None => ckpt.with_file_name("vocab.tsv"),
            };
            let text = fs::read_to_string(&vocab_path).with_context(|| format!("reading {}", vocab_path.display()))?;
            let vocab = Vocabulary::from_tsv(&text).with_context(|| format!("parsing {}", vocab_path.display()))?;
            anyhow::ensure!(
                vocab.len() == params.config.vocab_size,
                "vocabulary has {} entries but the checkpoint expects {}",
                vocab.len(),
                params.config.vocab_size
            );
            Ok((params, vocab))
        }
        None => {
            let vocab = match &cfg.paths.vocab {
                Some(p) => {
                    let text = fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
                    Vocabulary::from_tsv(&text).with_context(|| format!("parsing {}", p.display()))?
                }
                None => build_vocab(texts, cfg.max_vocab).context("building vocabulary")?,
            };
            let params = init_params(&cfg.model_config(vocab.len())).map_err(|e| UsageError(e.to_string()))?;
            Ok((params, vocab))
        }
    }
}

/// Output directory of a run, created with `run.json` inside.
fn prepare_out(cfg: &RunConfig) -> Result<Option<PathBuf>> {
    let Some(out) = &cfg.paths.out else { return Ok(None) };
    fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
    write_file(&out.join("run.json"), cfg.to_json().as_bytes())?;
    Ok(Some(out.clone()))
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    fs::write(path, bytes).with_context(|| format!("writing {}", path.display()))
}

fn write_model(out: &Path, params: &ModelParams<f32>, vocab: &Vocabulary) -> Result<()> {
    let path = out.join("model.ckpt");
    let mut w = BufWriter::new(File::create(&path).with_context(|| format!("creating {}", path.display()))?);
    save_checkpoint(params, &mut w).with_context(|| format!("writing {}", path.display()))?;
    w.flush()?;
    write_file(&out.join("vocab.tsv"), vocab.to_tsv().as_bytes())
}

/// Prints a metric JSON line and stores it as `metrics.json` when there is
/// an output directory.
fn emit_metrics<T: Serialize>(out: Option<&Path>, metrics: &T) -> Result<()> {
    let line = to_json_line(metrics);
    if let Some(out) = out {
        write_file(&out.join("metrics.json"), line.as_bytes())?;
    }
    print_out(&line)
}

fn extract_dfg(file: &Path) -> Result<()> {
    let code = fs::read_to_string(file).with_context(|| format!("reading {}", file.display()))?;
    let program = Program::parse(&code).with_context(|| format!("parsing {}", file.display()))?;
    print_out(&format!("{}\n", flowbert_core::dfg::serialize_dfg(&build_dfg(&program.ast))))
}

#[derive(Serialize)]
struct Layout {
    tokens: Vec<String>,
    segments: Vec<Segment>,
    positions: Vec<usize>,
    node_edges: Vec<[usize; 2]>,
    node_token_links: Vec<[usize; 2]>,
    mask_density: f64,
}

fn encode(file: &Path, comment: &str, cfg: &RunConfig) -> Result<()> {
    let code = fs::read_to_string(file).with_context(|| format!("reading {}", file.display()))?;
    let (params, vocab) = load_model(cfg, [(comment, code.as_str())])?;
    let ex = encode_source(comment, &code, &vocab, &cfg.limits, cfg.use_dataflow)
        .with_context(|| format!("parsing {}", file.display()))?;
    let positions = assign_positions(&ex, params.config.max_positions)?;
    let mask = build_attention_mask(&ex, MaskOptions::default());
    let layout = Layout {
        tokens: ex.ids.iter().map(|&id| vocab.token(id).unwrap_or("[UNK]").to_string()).collect(),
        segments: ex.segments.clone(),
        positions,
        node_edges: ex.node_edges.iter().map(|&(s, d)| [s, d]).collect(),
        node_token_links: ex.node_token_links.iter().map(|&(n, c)| [n, c]).collect(),
        mask_density: mask.density(),
    };
    print_out(&format!("{}\n", serde_json::to_string_pretty(&layout)?))
}

fn synth(kind: SynthKind, count: usize, seed: u64, out: Option<&Path>) -> Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut buf = Vec::new();
    match kind {
        SynthKind::Corpus => write_jsonl(&function_corpus(count, &mut rng), &mut buf)?,
        SynthKind::Clones => write_jsonl(&clone_pairs(count, &mut rng), &mut buf)?,
    }
    match out {
        Some(path) => write_file(path, &buf),
        None => print_out(std::str::from_utf8(&buf)?),
    }
}

fn pretrain(cfg: &RunConfig) -> Result<()> {
    let corpus: Vec<CorpusRecord> = read_records(required(&cfg.paths.data, "data")?)?;
    let out = required(&cfg.paths.out, "out")?;
    let (params, vocab) = load_model(cfg, corpus.iter().map(|r| (r.docstring.as_str(), r.code.as_str())))?;
    let max_positions = params.config.max_positions;
    let outcome = pretrain_run(&corpus, &vocab, params, &cfg.pretrain_config())?;
    let out = prepare_out(cfg)?.unwrap_or_else(|| out.to_path_buf());
    write_model(&out, &outcome.params, &vocab)?;
    let mut log = Vec::new();
    write_loss_log(&outcome.log, &mut log)?;
    write_file(&out.join("loss.csv"), &log)?;

    let (_, examples) = prepare_examples(&corpus, &vocab, &cfg.limits, cfg.use_dataflow, max_positions)?;
    let examples: Vec<_> = examples.into_iter().map(|e| e.example).collect();
    let eval = evaluate_pretraining(&outcome.params, &examples, cfg.seed)?;
    emit_metrics(Some(&out), &eval)
}

#[derive(Serialize)]
struct SearchMetrics {
    mrr: f64,
}

fn read_search_pairs(path: &Path) -> Result<Vec<SearchPair>> {
    let pairs = search_pairs(&read_records::<CorpusRecord>(path)?);
    anyhow::ensure!(!pairs.is_empty(), "{} has no usable query/code pairs", path.display());
    Ok(pairs)
}

fn search_texts(pairs: &[SearchPair]) -> impl Iterator<Item = (&str, &str)> {
    pairs.iter().map(|p| (p.query.as_str(), p.code.as_str()))
}

fn finetune_search_cmd(cfg: &RunConfig) -> Result<()> {
    let train = read_search_pairs(required(&cfg.paths.data, "data")?)?;
    required(&cfg.paths.out, "out")?;
    let valid = match &cfg.paths.valid {
        Some(p) => read_search_pairs(p)?,
        None => train.clone(),
    };
    let (params, vocab) = load_model(cfg, search_texts(&train))?;
    let settings = cfg.encoder_settings();
    let outcome = finetune_search(params, &train, &valid, &vocab, &settings, &cfg.search_config())?;
    let out = prepare_out(cfg)?.expect("out checked above");
    write_model(&out, &outcome.params, &vocab)?;
    let mut history = csv::WriterBuilder::new().has_headers(false).from_writer(Vec::new());
    history.write_record(["epoch", "loss", "valid_mrr"])?;
    for record in &outcome.history {
        history.serialize(record)?;
    }
    write_file(&out.join("history.csv"), &history.into_inner()?)?;
    let mrr = flowbert_core::downstream::mrr(&rank_pairs(&valid, &outcome.params, &vocab, &settings)?);
    emit_metrics(Some(&out), &SearchMetrics { mrr })
}

fn eval_search(cfg: &RunConfig) -> Result<()> {
    let pairs = read_search_pairs(required(&cfg.paths.data, "data")?)?;
    let (params, vocab) = load_model(cfg, search_texts(&pairs))?;
    let rankings = rank_pairs(&pairs, &params, &vocab, &cfg.encoder_settings())?;
    let out = prepare_out(cfg)?;
    emit_metrics(out.as_deref(), &SearchMetrics { mrr: flowbert_core::downstream::mrr(&rankings) })
}

fn clone_texts(records: &[CloneRecord]) -> impl Iterator<Item = (&str, &str)> {
    records.iter().flat_map(|r| [("", r.code_a.as_str()), ("", r.code_b.as_str())])
}

fn read_clone_records(path: &Path) -> Result<Vec<CloneRecord>> {
    let records: Vec<CloneRecord> = read_records(path)?;
    if let Some(i) = records.iter().position(|r| r.label > 1) {
        anyhow::bail!("{} line {}: label must be 0 or 1", path.display(), i + 1);
    }
    Ok(records)
}

fn finetune_clone_cmd(cfg: &RunConfig) -> Result<()> {
    let train = read_clone_records(required(&cfg.paths.data, "data")?)?;
    required(&cfg.paths.out, "out")?;
    let valid = read_optional::<CloneRecord>(&cfg.paths.valid)?.unwrap_or_else(|| train.clone());
    let (params, vocab) = load_model(cfg, clone_texts(&train))?;
    let settings = cfg.encoder_settings();
    let outcome = finetune_clone(params, &train, &vocab, &settings, &cfg.clone_config())?;
    let out = prepare_out(cfg)?.expect("out checked above");
    write_model(&out, &outcome.params, &vocab)?;
    let mut history = csv::Writer::from_writer(Vec::new());
    history.write_record(["epoch", "loss"])?;
    for (epoch, loss) in outcome.history.iter().enumerate() {
        history.write_record([epoch.to_string(), loss.to_string()])?;
    }
    write_file(&out.join("history.csv"), &history.into_inner()?)?;
    let predictions = predict_clones(&valid, &outcome.params, &vocab, &settings)?;
    let labels: Vec<u8> = valid.iter().map(|r| r.label).collect();
    emit_metrics(Some(&out), &clone_metrics(&predictions, &labels, cfg.clone.threshold)?)
}

fn eval_clone(cfg: &RunConfig) -> Result<()> {
    let records = read_clone_records(required(&cfg.paths.data, "data")?)?;
    let (params, vocab) = load_model(cfg, clone_texts(&records))?;
    let predictions = predict_clones(&records, &params, &vocab, &cfg.encoder_settings())?;
    let labels: Vec<u8> = records.iter().map(|r| r.label).collect();
    let out = prepare_out(cfg)?;
    emit_metrics(out.as_deref(), &clone_metrics(&predictions, &labels, cfg.clone.threshold)?)
}

fn attention_split(cfg: &RunConfig, json: bool) -> Result<()> {
    let corpus: Vec<CorpusRecord> = read_records(required(&cfg.paths.data, "data")?)?;
    let (params, vocab) = load_model(cfg, corpus.iter().map(|r| (r.docstring.as_str(), r.code.as_str())))?;
    let (_, examples) = prepare_examples(&corpus, &vocab, &cfg.limits, cfg.use_dataflow, params.config.max_positions)?;
    let mut splits = Vec::with_capacity(examples.len());
    for e in &examples {
        let acts = forward(&params, &model_input(&e.example, &params)?)?;
        splits.push(cls_attention_split(&acts, &e.example));
    }
    let report = AttentionReport::from_splits(&splits);
    let out = prepare_out(cfg)?;
    if let Some(out) = &out {
        write_file(&out.join("attention.json"), to_json_line(&report).as_bytes())?;
    }
    if json {
        print_out(&to_json_line(&report))
    } else {
        print_out(&report.to_table())
    }
}
