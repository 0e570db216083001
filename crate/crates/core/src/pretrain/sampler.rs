use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::Rng;

use super::PretrainError;

pub const DEFAULT_ALPHA: f64 = 0.7;

/// Multinomial over languages with `q_i ∝ p_i^α`, where `p_i` is the share
/// of examples in language `i`. `α < 1` up-weights rare languages.
#[derive(Debug, Clone)]
pub struct LanguageSampler {
    languages: Vec<String>,
    counts: Vec<usize>,
    alpha: f64,
    probs: Vec<f64>,
    index: WeightedIndex<f64>,
}

impl LanguageSampler {
    pub fn languages(&self) -> &[String] {
        &self.languages
    }

    pub fn counts(&self) -> &[usize] {
        &self.counts
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn probabilities(&self) -> &[f64] {
        &self.probs
    }

    /// Index into [`languages`](Self::languages).
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> usize {
        self.index.sample(rng)
    }
}

pub fn language_sampler<S: AsRef<str>>(counts: &[(S, usize)], alpha: f64) -> Result<LanguageSampler, PretrainError> {
    if counts.is_empty() {
        return Err(PretrainError::EmptyCounts);
    }
    if let Some((lang, _)) = counts.iter().find(|(_, n)| *n == 0) {
        return Err(PretrainError::ZeroCount(lang.as_ref().to_string()));
    }
    let total: f64 = counts.iter().map(|(_, n)| *n as f64).sum();
    let weights: Vec<f64> = counts.iter().map(|(_, n)| (*n as f64 / total).powf(alpha)).collect();
    let norm: f64 = weights.iter().sum();
    let probs: Vec<f64> = weights.iter().map(|w| w / norm).collect();
    let index = WeightedIndex::new(&probs).expect("positive finite weights");
    Ok(LanguageSampler {
        languages: counts.iter().map(|(l, _)| l.as_ref().to_string()).collect(),
        counts: counts.iter().map(|(_, n)| *n).collect(),
        alpha,
        probs,
        index,
    })
}
