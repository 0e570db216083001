use ndarray::{Array2, ArrayView1};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::encode::{backward_batch, code_example, encode_all, encode_code, forward_batch, model_input, EncoderSettings};
use super::search::batches;
use super::DownstreamError;
use crate::encoding::Vocabulary;
use crate::transformer::{adam_step, AdamConfig, AdamState, Float, ModelParams};

/// Two code fragments and whether they implement the same behavior.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CloneRecord {
    pub code_a: String,
    pub code_b: String,
    pub label: u8,
}

fn sigmoid<T: Float>(x: T) -> T {
    T::one() / (T::one() + (-x).exp())
}

/// `σ(a · b / √d)`.
pub fn clone_score<T: Float>(a: ArrayView1<'_, T>, b: ArrayView1<'_, T>) -> T {
    let d = T::from_usize(a.len()).expect("dimension fits");
    sigmoid(a.dot(&b) / d.sqrt())
}

/// Probability that two fragments are clones, from their separately
/// encoded `[CLS]` vectors.
pub fn clone_probability(
    code_a: &str,
    code_b: &str,
    params: &ModelParams<f32>,
    vocab: &Vocabulary,
    settings: &EncoderSettings,
) -> Result<f32, DownstreamError> {
    let a = encode_code(code_a, params, vocab, settings)?;
    let b = encode_code(code_b, params, vocab, settings)?;
    Ok(clone_score(a.view(), b.view()))
}

/// Clone probabilities for many records.
pub fn predict_clones(
    records: &[CloneRecord],
    params: &ModelParams<f32>,
    vocab: &Vocabulary,
    settings: &EncoderSettings,
) -> Result<Vec<f32>, DownstreamError> {
    let a = records.iter().map(|r| code_example(&r.code_a, vocab, settings)).collect::<Result<Vec<_>, _>>()?;
    let b = records.iter().map(|r| code_example(&r.code_b, vocab, settings)).collect::<Result<Vec<_>, _>>()?;
    let (va, vb) = (encode_all(&a, params)?, encode_all(&b, params)?);
    Ok(va.outer_iter().zip(vb.outer_iter()).map(|(x, y)| clone_score(x, y)).collect())
}

/// Mean binary cross-entropy of the pair scores, with gradients w.r.t. both
/// sides' vectors.
pub fn clone_loss<T: Float>(a: &Array2<T>, b: &Array2<T>, labels: &[u8]) -> (T, Array2<T>, Array2<T>) {
    let n = T::from_usize(labels.len()).expect("batch fits");
    let inv_sqrt_d = T::one() / T::from_usize(a.ncols()).expect("dimension fits").sqrt();
    let mut loss = T::zero();
    let mut d_a = Array2::zeros(a.raw_dim());
    let mut d_b = Array2::zeros(b.raw_dim());
    for (i, &label) in labels.iter().enumerate() {
        let s = a.row(i).dot(&b.row(i)) * inv_sqrt_d;
        let y = if label == 1 { T::one() } else { T::zero() };
        // Stable -log σ(s) and -log(1 - σ(s)).
        let softplus = |x: T| if x > T::zero() { x + (-x).exp().ln_1p() } else { x.exp().ln_1p() };
        loss += if label == 1 { softplus(-s) } else { softplus(s) };
        let g = (sigmoid(s) - y) * inv_sqrt_d / n;
        d_a.row_mut(i).scaled_add(g, &b.row(i));
        d_b.row_mut(i).scaled_add(g, &a.row(i));
    }
    (loss / n, d_a, d_b)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CloneFinetuneConfig {
    pub lr: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub seed: u64,
}

impl Default for CloneFinetuneConfig {
    fn default() -> Self {
        Self { lr: 1e-3, batch_size: 8, epochs: 30, seed: 0 }
    }
}

#[derive(Debug, Clone)]
pub struct CloneOutcome {
    pub params: ModelParams<f32>,
    /// Mean training loss per epoch.
    pub history: Vec<f64>,
}

/// Trains the shared encoder so that clone pairs score above 0.5 and
/// non-clones below.
pub fn finetune_clone(
    params: ModelParams<f32>,
    train: &[CloneRecord],
    vocab: &Vocabulary,
    settings: &EncoderSettings,
    config: &CloneFinetuneConfig,
) -> Result<CloneOutcome, DownstreamError> {
    if train.is_empty() {
        return Err(DownstreamError::TooFewPairs(0));
    }
    let side = |code: &str| model_input(&code_example(code, vocab, settings)?, &params);
    let a_inputs = train.iter().map(|r| side(&r.code_a)).collect::<Result<Vec<_>, _>>()?;
    let b_inputs = train.iter().map(|r| side(&r.code_b)).collect::<Result<Vec<_>, _>>()?;

    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let adam = AdamConfig::with_lr(config.lr);
    let mut state = AdamState::new(&params);
    let mut current = params;
    let mut history = Vec::with_capacity(config.epochs);
    for _ in 0..config.epochs {
        let plan = if train.len() == 1 { vec![vec![0]] } else { batches(train.len(), config.batch_size, &mut rng) };
        let mut epoch_loss = 0.0;
        for batch in &plan {
            let a = forward_batch(&batch.iter().map(|&i| a_inputs[i].clone()).collect::<Vec<_>>(), &current)?;
            let b = forward_batch(&batch.iter().map(|&i| b_inputs[i].clone()).collect::<Vec<_>>(), &current)?;
            let labels: Vec<u8> = batch.iter().map(|&i| train[i].label).collect();
            let (loss, d_a, d_b) = clone_loss(&a.vectors, &b.vectors, &labels);
            if !loss.is_finite() {
                return Err(DownstreamError::DivergedLoss);
            }
            epoch_loss += f64::from(loss);
            let mut grads = backward_batch(&a, &d_a, &current);
            grads.add_scaled(&backward_batch(&b, &d_b, &current), 1.0);
            adam_step(&mut current, &grads, &mut state, &adam);
        }
        history.push(epoch_loss / plan.len() as f64);
    }
    Ok(CloneOutcome { params: current, history })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CloneMetrics {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

/// Precision, recall and F1 of `probability > threshold` against `labels`;
/// each ratio is 0 when its denominator is.
pub fn clone_metrics(predictions: &[f32], labels: &[u8], threshold: f32) -> Result<CloneMetrics, DownstreamError> {
    if predictions.len() != labels.len() {
        return Err(DownstreamError::LengthMismatch { predictions: predictions.len(), labels: labels.len() });
    }
    let (mut tp, mut fp, mut fn_) = (0usize, 0usize, 0usize);
    for (&p, &y) in predictions.iter().zip(labels) {
        match (p > threshold, y == 1) {
            (true, true) => tp += 1,
            (true, false) => fp += 1,
            (false, true) => fn_ += 1,
            (false, false) => {}
        }
    }
    let ratio = |a: usize, b: usize| if b == 0 { 0.0 } else { a as f64 / b as f64 };
    let precision = ratio(tp, tp + fp);
    let recall = ratio(tp, tp + fn_);
    let f1 = if precision + recall == 0.0 { 0.0 } else { 2.0 * precision * recall / (precision + recall) };
    Ok(CloneMetrics { precision, recall, f1 })
}
