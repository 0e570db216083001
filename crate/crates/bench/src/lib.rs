//! Fixed inputs shared by the benchmarks.

use flowbert_core::encoding::{build_vocab, encode_source};
use flowbert_core::synth::{function_corpus, random_program};
use flowbert_core::transformer::{init_params, ModelInput};
use flowbert_core::{build_attention_mask, EncodedExample, Limits, MaskOptions, ModelConfig, ModelParams, Vocabulary};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub fn programs(count: usize) -> Vec<String> {
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    (0..count).map(|_| random_program(&mut rng)).collect()
}

/// A desk-size model and one encoded documented function.
pub struct Fixture {
    pub vocab: Vocabulary,
    pub params: ModelParams<f32>,
    pub example: EncodedExample,
}

impl Fixture {
    pub fn new() -> Self {
        let corpus = function_corpus(16, &mut ChaCha8Rng::seed_from_u64(0));
        let vocab = build_vocab(corpus.iter().map(|r| (r.docstring.as_str(), r.code.as_str())), 1000).expect("vocab");
        let params = init_params(&ModelConfig::desk(vocab.len())).expect("valid config");
        let r = &corpus[0];
        let example = encode_source(&r.docstring, &r.code, &vocab, &Limits::default(), true).expect("template parses");
        Self { vocab, params, example }
    }

    pub fn input(&self) -> ModelInput<f32> {
        let mask = build_attention_mask(&self.example, MaskOptions::default());
        ModelInput::new(&self.example, &mask, self.params.config.max_positions).expect("fits")
    }
}

impl Default for Fixture {
    fn default() -> Self {
        Self::new()
    }
}
