use std::cmp::Ordering;

use ndarray::{Array2, ArrayView1};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::encode::{backward_batch, code_example, encode_all, forward_batch, model_input, text_example, EncoderSettings};
use super::DownstreamError;
use crate::encoding::{comment_tokens, Vocabulary};
use crate::frontend::Program;
use crate::pretrain::CorpusRecord;
use crate::transformer::{adam_step, AdamConfig, AdamState, Float, ModelParams};

/// A natural-language query and the code it describes.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SearchPair {
    pub query: String,
    pub code: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RankingResult {
    pub query: usize,
    /// Candidate ids by descending score.
    pub order: Vec<usize>,
    /// 1-based rank of the gold candidate.
    pub gold_rank: usize,
}

/// Orders candidates by descending inner product with `query`; equal
/// scores keep ascending id order.
pub fn rank_candidates<T: Float>(query: ArrayView1<'_, T>, candidates: &Array2<T>) -> Result<Vec<usize>, DownstreamError> {
    if candidates.ncols() != query.len() {
        return Err(DownstreamError::DimensionMismatch { expected: query.len(), found: candidates.ncols() });
    }
    let scores = candidates.dot(&query);
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].partial_cmp(&scores[a]).unwrap_or(Ordering::Equal).then(a.cmp(&b)));
    Ok(order)
}

impl RankingResult {
    pub fn new(query: usize, order: Vec<usize>, gold: usize) -> Self {
        let gold_rank = order.iter().position(|&c| c == gold).map_or(0, |p| p + 1);
        Self { query, order, gold_rank }
    }
}

/// Mean reciprocal rank of the gold candidates; 0 for no rankings.
pub fn mrr(rankings: &[RankingResult]) -> f64 {
    if rankings.is_empty() {
        return 0.0;
    }
    rankings.iter().map(|r| if r.gold_rank == 0 { 0.0 } else { 1.0 / r.gold_rank as f64 }).sum::<f64>() / rankings.len() as f64
}

/// Ranks every query against every code of `pairs`; the gold code of
/// query `i` is code `i`.
pub fn rank_pairs(
    pairs: &[SearchPair],
    params: &ModelParams<f32>,
    vocab: &Vocabulary,
    settings: &EncoderSettings,
) -> Result<Vec<RankingResult>, DownstreamError> {
    let queries = pairs.iter().map(|p| text_example(&p.query, vocab, &settings.limits)).collect::<Result<Vec<_>, _>>()?;
    let codes = pairs.iter().map(|p| code_example(&p.code, vocab, settings)).collect::<Result<Vec<_>, _>>()?;
    let q = encode_all(&queries, params)?;
    let c = encode_all(&codes, params)?;
    q.outer_iter().enumerate().map(|(i, row)| Ok(RankingResult::new(i, rank_candidates(row, &c)?, i))).collect()
}

/// Text up to the first blank line, with whitespace collapsed.
pub fn first_paragraph(doc: &str) -> String {
    let mut lines = Vec::new();
    for line in doc.trim().lines() {
        if line.trim().is_empty() {
            break;
        }
        lines.push(line.trim());
    }
    lines.join(" ").split_whitespace().collect::<Vec<_>>().join(" ")
}

/// Turns documented functions into search pairs, keeping only those whose
/// code parses and whose query (first docstring paragraph) has 3–256
/// tokens, contains no link, and is mostly ASCII.
pub fn filter_search_records(records: &[CorpusRecord]) -> Vec<CorpusRecord> {
    records
        .iter()
        .filter_map(|r| {
            let query = first_paragraph(&r.docstring);
            let n = comment_tokens(&query).len();
            if !(3..=256).contains(&n) || query.contains("http") || Program::parse(&r.code).is_err() {
                return None;
            }
            let ascii = query.chars().filter(char::is_ascii).count();
            if ascii * 2 <= query.chars().count() {
                return None;
            }
            Some(CorpusRecord { docstring: query, ..r.clone() })
        })
        .collect()
}

pub fn search_pairs(records: &[CorpusRecord]) -> Vec<SearchPair> {
    filter_search_records(records).into_iter().map(|r| SearchPair { query: r.docstring, code: r.code }).collect()
}

/// Mean softmax cross-entropy of each query against all codes in the batch,
/// with its own code as the target. Returns the loss and its gradients
/// w.r.t. the query and code vectors.
pub fn in_batch_loss<T: Float>(queries: &Array2<T>, codes: &Array2<T>) -> (T, Array2<T>, Array2<T>) {
    let n = queries.nrows();
    let scale = T::one() / T::from_usize(n).expect("batch fits");
    let mut probs = queries.dot(&codes.t());
    let mut loss = T::zero();
    for (i, mut row) in probs.rows_mut().into_iter().enumerate() {
        let max = row.iter().copied().fold(T::neg_infinity(), T::max);
        let sum = row.iter().map(|&s| (s - max).exp()).sum::<T>();
        loss += sum.ln() + max - row[i];
        row.mapv_inplace(|s| (s - max).exp() / sum);
        row[i] -= T::one();
        row.mapv_inplace(|g| g * scale);
    }
    let d_queries = probs.dot(codes);
    let d_codes = probs.t().dot(queries);
    (loss * scale, d_queries, d_codes)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SearchFinetuneConfig {
    pub lr: f64,
    pub batch_size: usize,
    pub epochs: usize,
    /// Stop after this many epochs without a better validation MRR.
    pub patience: usize,
    pub seed: u64,
}

impl Default for SearchFinetuneConfig {
    fn default() -> Self {
        Self { lr: 1e-3, batch_size: 16, epochs: 40, patience: 10, seed: 0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub loss: f64,
    pub valid_mrr: f64,
}

#[derive(Debug, Clone)]
pub struct FinetuneOutcome {
    /// Parameters of the epoch with the best validation score.
    pub params: ModelParams<f32>,
    pub history: Vec<EpochRecord>,
}

/// Shuffled batches of indices; a trailing singleton joins the previous batch.
pub(crate) fn batches(n: usize, size: usize, rng: &mut ChaCha8Rng) -> Vec<Vec<usize>> {
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(rng);
    let mut out: Vec<Vec<usize>> = idx.chunks(size.max(2)).map(<[usize]>::to_vec).collect();
    if out.len() > 1 && out.last().is_some_and(|b| b.len() == 1) {
        let last = out.pop().expect("non-empty");
        out.last_mut().expect("non-empty").extend(last);
    }
    out
}

/// Contrastive fine-tuning with in-batch negatives and early stopping on
/// the validation MRR.
pub fn finetune_search(
    params: ModelParams<f32>,
    train: &[SearchPair],
    valid: &[SearchPair],
    vocab: &Vocabulary,
    settings: &EncoderSettings,
    config: &SearchFinetuneConfig,
) -> Result<FinetuneOutcome, DownstreamError> {
    if train.len() < 2 {
        return Err(DownstreamError::TooFewPairs(train.len()));
    }
    let queries = train
        .iter()
        .map(|p| model_input(&text_example(&p.query, vocab, &settings.limits)?, &params))
        .collect::<Result<Vec<_>, _>>()?;
    let codes = train
        .iter()
        .map(|p| model_input(&code_example(&p.code, vocab, settings)?, &params))
        .collect::<Result<Vec<_>, _>>()?;

    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let adam = AdamConfig::with_lr(config.lr);
    let mut state = AdamState::new(&params);
    let mut current = params;
    let mut best = (mrr(&rank_pairs(valid, &current, vocab, settings)?), current.clone());
    let mut history = Vec::new();
    let mut stale = 0;
    for epoch in 0..config.epochs {
        let mut epoch_loss = 0.0;
        let plan = batches(train.len(), config.batch_size, &mut rng);
        for batch in &plan {
            let q_inputs: Vec<_> = batch.iter().map(|&i| queries[i].clone()).collect();
            let c_inputs: Vec<_> = batch.iter().map(|&i| codes[i].clone()).collect();
            let q = forward_batch(&q_inputs, &current)?;
            let c = forward_batch(&c_inputs, &current)?;
            let (loss, d_q, d_c) = in_batch_loss(&q.vectors, &c.vectors);
            if !loss.is_finite() {
                return Err(DownstreamError::DivergedLoss);
            }
            epoch_loss += f64::from(loss);
            let mut grads = backward_batch(&q, &d_q, &current);
            grads.add_scaled(&backward_batch(&c, &d_c, &current), 1.0);
            adam_step(&mut current, &grads, &mut state, &adam);
        }
        let valid_mrr = mrr(&rank_pairs(valid, &current, vocab, settings)?);
        history.push(EpochRecord { epoch, loss: epoch_loss / plan.len() as f64, valid_mrr });
        if valid_mrr > best.0 {
            best = (valid_mrr, current.clone());
            stale = 0;
        } else {
            stale += 1;
            if stale >= config.patience {
                break;
            }
        }
    }
    Ok(FinetuneOutcome { params: best.1, history })
}
