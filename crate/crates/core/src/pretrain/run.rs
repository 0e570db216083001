use std::io::Write;

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::objectives::{MlmObjective, PairObjective};
use super::sampler::{language_sampler, DEFAULT_ALPHA};
use super::targets::{sample_align_targets, sample_edge_targets, select_mlm_targets, PairTargets};
use super::{CorpusRecord, PretrainError};
use crate::encoding::{assign_positions, build_attention_mask, encode_source, EncodedExample, Limits, MaskOptions, Vocabulary, BLOCKED_SCORE};
use crate::transformer::{adam_step, backward, forward, AdamConfig, AdamState, ModelInput, ModelParams, Objective};

/// Which pre-training objectives are enabled.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ObjectiveFlags {
    pub mlm: bool,
    pub edge_pred: bool,
    pub node_align: bool,
}

impl Default for ObjectiveFlags {
    fn default() -> Self {
        Self { mlm: true, edge_pred: true, node_align: true }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PretrainConfig {
    pub objectives: ObjectiveFlags,
    pub use_dataflow: bool,
    pub limits: Limits,
    pub steps: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub alpha: f64,
    pub seed: u64,
}

impl Default for PretrainConfig {
    fn default() -> Self {
        Self {
            objectives: ObjectiveFlags::default(),
            use_dataflow: true,
            limits: Limits::default(),
            steps: 1000,
            batch_size: 8,
            lr: 1e-3,
            alpha: DEFAULT_ALPHA,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ObjectiveKind {
    Mlm,
    EdgePred,
    NodeAlign,
    Total,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LossRecord {
    pub step: usize,
    pub objective: ObjectiveKind,
    pub loss: f64,
}

#[derive(Debug, Clone)]
pub struct PretrainOutcome {
    pub params: ModelParams<f32>,
    pub log: Vec<LossRecord>,
}

/// An encoded training function and the index of its language.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainingExample {
    pub lang: usize,
    pub example: EncodedExample,
}

/// Encodes every record; languages are numbered by first appearance.
pub fn prepare_examples(
    corpus: &[CorpusRecord],
    vocab: &Vocabulary,
    limits: &Limits,
    use_dataflow: bool,
    max_positions: usize,
) -> Result<(Vec<String>, Vec<TrainingExample>), PretrainError> {
    let mut languages: Vec<String> = Vec::new();
    let examples = corpus
        .iter()
        .enumerate()
        .map(|(record, r)| {
            let lang = match languages.iter().position(|l| *l == r.lang) {
                Some(i) => i,
                None => {
                    languages.push(r.lang.clone());
                    languages.len() - 1
                }
            };
            let example = encode_source(&r.docstring, &r.code, vocab, limits, use_dataflow)
                .map_err(|source| PretrainError::Parse { record, source })?;
            assign_positions(&example, max_positions).map_err(|source| PretrainError::Encode { record, source })?;
            Ok(TrainingExample { lang, example })
        })
        .collect::<Result<Vec<_>, PretrainError>>()?;
    Ok((languages, examples))
}

/// Link-prediction objective scheduled for a step: edge prediction on even
/// steps, node alignment on odd ones.
fn pair_kind(step: usize, flags: &ObjectiveFlags) -> Option<ObjectiveKind> {
    match step % 2 {
        0 if flags.edge_pred => Some(ObjectiveKind::EdgePred),
        1 if flags.node_align => Some(ObjectiveKind::NodeAlign),
        _ => None,
    }
}

fn sample_pair<R: Rng>(kind: ObjectiveKind, example: &EncodedExample, rng: &mut R) -> Result<Option<PairTargets>, PretrainError> {
    let targets = match kind {
        ObjectiveKind::EdgePred => sample_edge_targets(example, MaskOptions::default(), rng),
        ObjectiveKind::NodeAlign => sample_align_targets(example, MaskOptions::default(), rng),
        _ => unreachable!("not a pair objective"),
    };
    match targets {
        Ok(t) if t.is_empty() => Ok(None),
        Ok(t) => Ok(Some(t)),
        Err(PretrainError::NoNodes | PretrainError::NoEdges) => Ok(None),
        Err(e) => Err(e),
    }
}

/// Inputs and objectives of one example for one step.
struct Prepared {
    input: ModelInput<f32>,
    mlm: MlmObjective,
    pair: Option<PairObjective>,
}

fn prepare<R: Rng>(
    example: &EncodedExample,
    pair: Option<ObjectiveKind>,
    vocab_size: usize,
    max_positions: usize,
    rng: &mut R,
) -> Result<Prepared, PretrainError> {
    let mlm = select_mlm_targets(example, vocab_size, rng)?;
    let pair = match pair {
        Some(kind) => sample_pair(kind, example, rng)?,
        None => None,
    };
    let mask = match &pair {
        Some(t) => t.mask.clone(),
        None => build_attention_mask(example, MaskOptions::default()),
    };
    let input = ModelInput {
        ids: mlm.example.ids.clone(),
        positions: assign_positions(example, max_positions).map_err(|source| PretrainError::Encode { record: 0, source })?,
        mask: mask.additive(BLOCKED_SCORE),
    };
    Ok(Prepared { input, mlm: MlmObjective::from(&mlm), pair: pair.as_ref().map(PairObjective::from) })
}

struct ExampleGrads {
    mlm: f32,
    pair: Option<f32>,
    grads: ModelParams<f32>,
}

/// Forward and backward for one example with the MLM loss weighted by
/// `w_mlm` and the pair loss by `w_pair`; returns the unweighted losses.
fn example_gradients(
    params: &ModelParams<f32>,
    prepared: &Prepared,
    w_mlm: f32,
    w_pair: f32,
) -> Result<ExampleGrads, PretrainError> {
    let acts = forward(params, &prepared.input)?;
    let hidden = acts.output();
    let mut grads = params.zeros_like();
    let mut d_mlm = Array2::zeros(hidden.raw_dim());
    let mlm = prepared.mlm.evaluate(hidden, params, &mut d_mlm, &mut grads);
    grads.mlm_weight *= w_mlm;
    grads.mlm_bias *= w_mlm;
    let mut d_hidden = d_mlm * w_mlm;
    let mut pair = None;
    if let Some(obj) = &prepared.pair {
        let mut d_pair = Array2::zeros(hidden.raw_dim());
        pair = Some(obj.evaluate(hidden, params, &mut d_pair, &mut grads));
        d_hidden.scaled_add(w_pair, &d_pair);
    }
    backward(params, &acts, d_hidden, &mut grads);
    Ok(ExampleGrads { mlm, pair, grads })
}

fn example_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Runs `config.steps` optimizer steps starting from `params`.
///
/// Every batch comes from a single language drawn from the language
/// sampler. Each step optimizes MLM plus, alternately, edge prediction
/// (even steps) or node alignment (odd steps). Per-example work runs in
/// parallel; gradients are reduced in batch order so results do not depend
/// on the thread count.
pub fn pretrain_run(
    corpus: &[CorpusRecord],
    vocab: &Vocabulary,
    params: ModelParams<f32>,
    config: &PretrainConfig,
) -> Result<PretrainOutcome, PretrainError> {
    if corpus.is_empty() {
        return Err(PretrainError::EmptyCorpus);
    }
    if !config.objectives.mlm {
        return Err(PretrainError::MlmDisabled);
    }
    if config.batch_size == 0 {
        return Err(PretrainError::InvalidConfig("batch_size must be at least 1".into()));
    }
    let max_positions = params.config.max_positions;
    let (languages, examples) = prepare_examples(corpus, vocab, &config.limits, config.use_dataflow, max_positions)?;
    let by_lang: Vec<Vec<usize>> =
        (0..languages.len()).map(|l| (0..examples.len()).filter(|&i| examples[i].lang == l).collect()).collect();
    let counts: Vec<(&str, usize)> = languages.iter().map(String::as_str).zip(by_lang.iter().map(Vec::len)).collect();
    let sampler = language_sampler(&counts, config.alpha)?;

    let mut params = params;
    let mut state = AdamState::new(&params);
    let adam = AdamConfig::with_lr(config.lr);
    let mut rng = example_rng(config.seed, 0);
    let mut log = Vec::with_capacity(config.steps * 3);
    let vocab_size = params.config.vocab_size;

    for step in 0..config.steps {
        let pool = &by_lang[sampler.sample(&mut rng)];
        let batch: Vec<usize> = (0..config.batch_size).map(|_| pool[rng.random_range(0..pool.len())]).collect();
        let kind = if config.use_dataflow { pair_kind(step, &config.objectives) } else { None };

        let prepared = batch
            .par_iter()
            .enumerate()
            .map(|(slot, &i)| {
                let mut r = example_rng(config.seed, 1 + (step * config.batch_size + slot) as u64);
                prepare(&examples[i].example, kind, vocab_size, max_positions, &mut r)
            })
            .collect::<Result<Vec<_>, _>>()?;
        let with_pair = prepared.iter().filter(|p| p.pair.is_some()).count();
        let w_mlm = 1.0 / prepared.len() as f32;
        let w_pair = 1.0 / with_pair.max(1) as f32;

        let results = prepared
            .par_iter()
            .map(|p| example_gradients(&params, p, w_mlm, w_pair))
            .collect::<Vec<_>>();
        let mut grads = params.zeros_like();
        let (mut mlm_loss, mut pair_loss) = (0.0f64, 0.0f64);
        for r in results {
            let r = r.map_err(|e| match e {
                PretrainError::Model(crate::transformer::ModelError::NonFiniteLoss) => PretrainError::DivergedLoss { step },
                e => e,
            })?;
            mlm_loss += f64::from(r.mlm) * f64::from(w_mlm);
            pair_loss += f64::from(r.pair.unwrap_or(0.0)) * f64::from(w_pair);
            grads.add_scaled(&r.grads, 1.0);
        }
        if !mlm_loss.is_finite() || !pair_loss.is_finite() || !grads.all_finite() {
            return Err(PretrainError::DivergedLoss { step });
        }
        log.push(LossRecord { step, objective: ObjectiveKind::Mlm, loss: mlm_loss });
        let mut total = mlm_loss;
        if let (Some(kind), true) = (kind, with_pair > 0) {
            log.push(LossRecord { step, objective: kind, loss: pair_loss });
            total += pair_loss;
        }
        log.push(LossRecord { step, objective: ObjectiveKind::Total, loss: total });
        adam_step(&mut params, &grads, &mut state, &adam);
    }
    Ok(PretrainOutcome { params, log })
}

/// Writes the loss log as CSV `step,objective,loss`.
pub fn write_loss_log<W: Write>(log: &[LossRecord], writer: W) -> Result<(), csv::Error> {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(writer);
    w.write_record(["step", "objective", "loss"])?;
    for r in log {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

/// Scores of a model on freshly sampled targets.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PretrainEval {
    pub mlm_loss: f64,
    pub mlm_accuracy: f64,
    /// Pooled accuracy over all candidates; `None` when no example had any.
    pub edge_accuracy: Option<f64>,
    pub align_accuracy: Option<f64>,
}

/// Samples MLM, edge and alignment targets for every example (seeded by
/// `seed` and the example index) and measures the model on them under the
/// same conditions as training: corrupted ids plus the pair-specific mask.
pub fn evaluate_pretraining(
    params: &ModelParams<f32>,
    examples: &[EncodedExample],
    seed: u64,
) -> Result<PretrainEval, PretrainError> {
    let max_positions = params.config.max_positions;
    let vocab_size = params.config.vocab_size;
    let per_example = examples
        .par_iter()
        .enumerate()
        .map(|(i, ex)| {
            let mut rng = example_rng(seed, i as u64);
            let mut out = [(0.0, 0.0); 2];
            let mut mlm = (0.0, 0.0);
            for (k, kind) in [ObjectiveKind::EdgePred, ObjectiveKind::NodeAlign].into_iter().enumerate() {
                let p = prepare(ex, Some(kind), vocab_size, max_positions, &mut rng)?;
                let acts = forward(params, &p.input)?;
                if k == 0 {
                    mlm = (f64::from(p.mlm.loss(acts.output(), params)), p.mlm.accuracy(acts.output(), params));
                }
                if let Some(obj) = &p.pair {
                    let n = obj.candidates.len() as f64;
                    out[k] = (obj.accuracy(acts.output()) * n, n);
                }
            }
            Ok((mlm, out))
        })
        .collect::<Result<Vec<_>, PretrainError>>()?;
    let n = per_example.len().max(1) as f64;
    let mlm_loss = per_example.iter().map(|(m, _)| m.0).sum::<f64>() / n;
    let mlm_accuracy = per_example.iter().map(|(m, _)| m.1).sum::<f64>() / n;
    let pooled = |k: usize| {
        let (hits, total) = per_example.iter().fold((0.0, 0.0), |(h, t), (_, o)| (h + o[k].0, t + o[k].1));
        (total > 0.0).then(|| hits / total)
    };
    Ok(PretrainEval { mlm_loss, mlm_accuracy, edge_accuracy: pooled(0), align_accuracy: pooled(1) })
}
