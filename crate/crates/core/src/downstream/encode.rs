use ndarray::{Array1, Array2};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::DownstreamError;
use crate::encoding::{build_attention_mask, comment_tokens, encode_query, encode_source, EncodedExample, Limits, MaskOptions, Vocabulary};
use crate::transformer::{backward, forward, Activations, ModelInput, ModelParams};

/// How code is turned into model input.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct EncoderSettings {
    pub limits: Limits,
    /// When off, code is encoded without the variable segment.
    pub use_dataflow: bool,
}

impl Default for EncoderSettings {
    fn default() -> Self {
        Self { limits: Limits::default(), use_dataflow: true }
    }
}

/// `[CLS] W [SEP]` for a natural-language query.
pub fn text_example(query: &str, vocab: &Vocabulary, limits: &Limits) -> Result<EncodedExample, DownstreamError> {
    if comment_tokens(query).is_empty() {
        return Err(DownstreamError::EmptyInput);
    }
    Ok(encode_query(query, vocab, limits.max_comment))
}

/// `[CLS] [SEP] C [SEP] V` for a code fragment with no comment.
pub fn code_example(code: &str, vocab: &Vocabulary, settings: &EncoderSettings) -> Result<EncodedExample, DownstreamError> {
    Ok(encode_source("", code, vocab, &settings.limits, settings.use_dataflow)?)
}

pub fn model_input(example: &EncodedExample, params: &ModelParams<f32>) -> Result<ModelInput<f32>, DownstreamError> {
    let mask = build_attention_mask(example, MaskOptions::default());
    Ok(ModelInput::new(example, &mask, params.config.max_positions)?)
}

/// Final-layer representation at the `[CLS]` position.
pub fn encode_cls(example: &EncodedExample, params: &ModelParams<f32>) -> Result<Array1<f32>, DownstreamError> {
    let acts = forward(params, &model_input(example, params)?)?;
    Ok(acts.output().row(0).to_owned())
}

pub fn encode_text(query: &str, params: &ModelParams<f32>, vocab: &Vocabulary, limits: &Limits) -> Result<Array1<f32>, DownstreamError> {
    encode_cls(&text_example(query, vocab, limits)?, params)
}

pub fn encode_code(code: &str, params: &ModelParams<f32>, vocab: &Vocabulary, settings: &EncoderSettings) -> Result<Array1<f32>, DownstreamError> {
    encode_cls(&code_example(code, vocab, settings)?, params)
}

/// `[CLS]` vectors of many examples as rows, computed in parallel.
pub fn encode_all(examples: &[EncodedExample], params: &ModelParams<f32>) -> Result<Array2<f32>, DownstreamError> {
    let rows = examples.par_iter().map(|e| encode_cls(e, params)).collect::<Result<Vec<_>, _>>()?;
    let mut out = Array2::zeros((rows.len(), params.config.hidden_dim));
    for (mut dst, row) in out.rows_mut().into_iter().zip(rows) {
        dst.assign(&row);
    }
    Ok(out)
}

/// Forward passes kept for a later backward through the `[CLS]` vectors.
pub(crate) struct ClsBatch {
    acts: Vec<Activations<f32>>,
    pub vectors: Array2<f32>,
}

pub(crate) fn forward_batch(inputs: &[ModelInput<f32>], params: &ModelParams<f32>) -> Result<ClsBatch, DownstreamError> {
    let acts = inputs.par_iter().map(|i| forward(params, i)).collect::<Result<Vec<_>, _>>()?;
    let mut vectors = Array2::zeros((acts.len(), params.config.hidden_dim));
    for (mut row, a) in vectors.rows_mut().into_iter().zip(&acts) {
        row.assign(&a.output().row(0));
    }
    Ok(ClsBatch { acts, vectors })
}

/// Gradients of a loss whose derivative w.r.t. each `[CLS]` vector is the
/// matching row of `d_vectors`. Summed in batch order.
pub(crate) fn backward_batch(batch: &ClsBatch, d_vectors: &Array2<f32>, params: &ModelParams<f32>) -> ModelParams<f32> {
    let parts: Vec<ModelParams<f32>> = batch
        .acts
        .par_iter()
        .enumerate()
        .map(|(i, acts)| {
            let mut d_hidden = Array2::zeros(acts.output().raw_dim());
            d_hidden.row_mut(0).assign(&d_vectors.row(i));
            let mut grads = params.zeros_like();
            backward(params, acts, d_hidden, &mut grads);
            grads
        })
        .collect();
    let mut total = params.zeros_like();
    for g in &parts {
        total.add_scaled(g, 1.0);
    }
    total
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::encoding::build_vocab;
    use crate::transformer::{init_params, ModelConfig};

    fn setup() -> (ModelParams<f32>, Vocabulary) {
        let v = build_vocab([("return the sum", "def f(a):\n    return a + 1")], 100).unwrap();
        let cfg = ModelConfig { num_layers: 1, hidden_dim: 16, num_heads: 2, ffn_dim: 16, vocab_size: v.len(), max_positions: 64, seed: 0 };
        (init_params(&cfg).unwrap(), v)
    }

    #[test]
    fn vectors_have_hidden_dim() {
        let (p, v) = setup();
        assert_eq!(encode_text("return the sum", &p, &v, &Limits::default()).unwrap().len(), 16);
        let code = encode_code("def f(a):\n    return a + 1", &p, &v, &EncoderSettings::default()).unwrap();
        assert_eq!(code.len(), 16);
        let again = encode_code("def f(a):\n    return a + 1", &p, &v, &EncoderSettings::default()).unwrap();
        assert_eq!(code, again);
    }

    #[test]
    fn empty_query_rejected() {
        let (p, v) = setup();
        assert!(matches!(encode_text("   ", &p, &v, &Limits::default()), Err(DownstreamError::EmptyInput)));
    }

    #[test]
    fn bad_code_rejected() {
        let (p, v) = setup();
        assert!(matches!(encode_code("def (", &p, &v, &EncoderSettings::default()), Err(DownstreamError::Parse(_))));
    }

    #[test]
    fn code_layout_has_no_comment() {
        let (_, v) = setup();
        let ex = code_example("a = 1", &v, &EncoderSettings::default()).unwrap();
        assert!(ex.comment_range().is_empty());
        assert_eq!(ex.code_range(), 2..5);
        let plain = code_example("a = 1", &v, &EncoderSettings { use_dataflow: false, ..Default::default() }).unwrap();
        assert_eq!(plain.node_count(), 0);
    }
}
