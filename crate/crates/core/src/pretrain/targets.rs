use std::collections::BTreeSet;

use rand::seq::index::sample;
use rand::Rng;

use super::PretrainError;
use crate::encoding::{build_attention_mask, EncodedExample, MaskMatrix, MaskOptions, MASK, SPECIAL_TOKENS};

pub const MLM_RATE: f64 = 0.15;
pub const NODE_SAMPLE_RATE: f64 = 0.2;

/// What happened to one MLM target position.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Replacement {
    Mask,
    Random,
    Keep,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MlmTarget {
    /// Copy of the input with the replacements applied.
    pub example: EncodedExample,
    pub positions: Vec<usize>,
    pub original_ids: Vec<usize>,
    pub replacements: Vec<Replacement>,
}

/// Number of MLM targets for `maskable` candidate positions.
pub fn mlm_target_count(maskable: usize) -> usize {
    if maskable == 0 {
        return 0;
    }
    ((MLM_RATE * maskable as f64).round() as usize).max(1)
}

fn random_token<R: Rng + ?Sized>(vocab_size: usize, rng: &mut R) -> usize {
    let first = SPECIAL_TOKENS.len();
    if vocab_size > first {
        rng.random_range(first..vocab_size)
    } else {
        rng.random_range(0..vocab_size.max(1))
    }
}

/// Picks 15% of the comment/code positions and corrupts them 80/10/10
/// ([MASK] / random token / unchanged). Node positions copy the new id of
/// their code token so the original identity cannot leak through them.
pub fn select_mlm_targets<R: Rng + ?Sized>(
    example: &EncodedExample,
    vocab_size: usize,
    rng: &mut R,
) -> Result<MlmTarget, PretrainError> {
    let maskable = example.maskable_positions();
    if maskable.is_empty() {
        return Err(PretrainError::NoMaskablePositions);
    }
    let mut picked: Vec<usize> =
        sample(rng, maskable.len(), mlm_target_count(maskable.len())).into_iter().map(|i| maskable[i]).collect();
    picked.sort_unstable();

    let mut masked = example.clone();
    let mut original_ids = Vec::with_capacity(picked.len());
    let mut replacements = Vec::with_capacity(picked.len());
    for &pos in &picked {
        original_ids.push(example.ids[pos]);
        let u: f64 = rng.random();
        let kind = if u < 0.8 {
            masked.ids[pos] = MASK;
            Replacement::Mask
        } else if u < 0.9 {
            masked.ids[pos] = random_token(vocab_size, rng);
            Replacement::Random
        } else {
            Replacement::Keep
        };
        replacements.push(kind);
    }
    for (&node, &code) in &example.code_token_of_node {
        masked.ids[node] = masked.ids[code];
    }
    Ok(MlmTarget { example: masked, positions: picked, original_ids, replacements })
}

/// Labelled position pairs for a link-prediction objective, together with
/// the attention mask that hides the positive links.
#[derive(Debug, Clone, PartialEq)]
pub struct PairTargets {
    /// Sampled node positions.
    pub sampled: Vec<usize>,
    /// Positive links hidden from attention.
    pub masked: Vec<(usize, usize)>,
    pub candidates: Vec<(usize, usize)>,
    pub labels: Vec<bool>,
    pub mask: MaskMatrix,
}

impl PairTargets {
    pub fn is_empty(&self) -> bool {
        self.candidates.is_empty()
    }

    pub fn positives(&self) -> usize {
        self.labels.iter().filter(|&&l| l).count()
    }
}

fn sample_nodes<R: Rng + ?Sized>(example: &EncodedExample, rng: &mut R) -> Vec<usize> {
    let nodes = example.node_range();
    let k = (NODE_SAMPLE_RATE * nodes.len() as f64).ceil() as usize;
    let mut picked: Vec<usize> = sample(rng, nodes.len(), k).into_iter().map(|i| nodes.start + i).collect();
    picked.sort_unstable();
    picked
}

fn balanced<R: Rng + ?Sized>(
    sampled: Vec<usize>,
    positives: Vec<(usize, usize)>,
    pool: Vec<(usize, usize)>,
    mask: MaskMatrix,
    rng: &mut R,
) -> PairTargets {
    let n_neg = positives.len().min(pool.len());
    let mut negatives: Vec<_> = sample(rng, pool.len(), n_neg).into_iter().map(|i| pool[i]).collect();
    negatives.sort_unstable();
    let mut candidates = positives.clone();
    let mut labels = vec![true; positives.len()];
    candidates.extend(negatives);
    labels.resize(candidates.len(), false);
    PairTargets { sampled, masked: positives, candidates, labels, mask }
}

/// Samples 20% of the nodes (rounded up) and hides every data-flow edge
/// touching them. Negatives are drawn from node pairs touching a sampled
/// node that are not edges in either direction; self pairs are excluded.
pub fn sample_edge_targets<R: Rng + ?Sized>(
    example: &EncodedExample,
    options: MaskOptions,
    rng: &mut R,
) -> Result<PairTargets, PretrainError> {
    if example.node_count() == 0 {
        return Err(PretrainError::NoNodes);
    }
    if example.node_edges.is_empty() {
        return Err(PretrainError::NoEdges);
    }
    let sampled = sample_nodes(example, rng);
    let chosen: BTreeSet<usize> = sampled.iter().copied().collect();
    let touches = |&(a, b): &(usize, usize)| chosen.contains(&a) || chosen.contains(&b);

    let positives: Vec<_> = example.node_edges.iter().copied().filter(touches).collect();
    let pool: Vec<_> = example
        .node_range()
        .flat_map(|a| example.node_range().map(move |b| (a, b)))
        .filter(|&(a, b)| a != b && touches(&(a, b)))
        .filter(|&(a, b)| !example.node_edges.contains(&(a, b)) && !example.node_edges.contains(&(b, a)))
        .collect();

    let mut mask = build_attention_mask(example, options);
    for &(src, dst) in &positives {
        mask.set(dst, src, false);
    }
    Ok(balanced(sampled, positives, pool, mask, rng))
}

/// Samples 20% of the nodes (rounded up) and hides their node-to-code
/// links in both directions. Negatives pair a sampled node with other code
/// positions.
pub fn sample_align_targets<R: Rng + ?Sized>(
    example: &EncodedExample,
    options: MaskOptions,
    rng: &mut R,
) -> Result<PairTargets, PretrainError> {
    if example.node_count() == 0 {
        return Err(PretrainError::NoNodes);
    }
    let sampled = sample_nodes(example, rng);
    let positives: Vec<_> = sampled.iter().map(|&v| (v, example.code_token_of_node[&v])).collect();
    let pool: Vec<_> = sampled
        .iter()
        .flat_map(|&v| example.code_range().map(move |c| (v, c)))
        .filter(|link| !example.node_token_links.contains(link))
        .collect();

    let mut mask = build_attention_mask(example, options);
    for &(v, c) in &positives {
        mask.set(v, c, false);
        mask.set(c, v, false);
    }
    Ok(balanced(sampled, positives, pool, mask, rng))
}
