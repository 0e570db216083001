use ndarray::linalg::general_mat_mul;
use ndarray::{Array1, Array2, ArrayView2, Axis, Zip};

use super::params::{LayerParams, ModelParams};
use super::{cst, Float, ModelError};
use crate::encoding::{assign_positions, EncodeError, EncodedExample, MaskMatrix, BLOCKED_SCORE};

const LN_EPS: f64 = 1e-5;

/// Token ids, position ids and the additive attention mask of one sequence.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelInput<T> {
    pub ids: Vec<usize>,
    pub positions: Vec<usize>,
    pub mask: Array2<T>,
}

impl<T: Float> ModelInput<T> {
    pub fn new(example: &EncodedExample, mask: &MaskMatrix, max_positions: usize) -> Result<Self, EncodeError> {
        Self::with_blocked_score(example, mask, max_positions, BLOCKED_SCORE)
    }

    pub fn with_blocked_score(
        example: &EncodedExample,
        mask: &MaskMatrix,
        max_positions: usize,
        blocked: f64,
    ) -> Result<Self, EncodeError> {
        Ok(Self {
            ids: example.ids.clone(),
            positions: assign_positions(example, max_positions)?,
            mask: mask.additive(blocked),
        })
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }
}

#[derive(Debug, Clone)]
struct LayerNormCache<T> {
    normalized: Array2<T>,
    inv_std: Array1<T>,
}

#[derive(Debug, Clone)]
struct LayerCache<T> {
    q: Array2<T>,
    k: Array2<T>,
    v: Array2<T>,
    context: Array2<T>,
    ln1: LayerNormCache<T>,
    attn_out: Array2<T>,
    pre_act: Array2<T>,
    act: Array2<T>,
    ln2: LayerNormCache<T>,
}

/// Everything produced by a forward pass.
#[derive(Debug, Clone)]
pub struct Activations<T> {
    /// `H^0..H^N`, each `|X| × d_h`.
    pub hidden: Vec<Array2<T>>,
    /// Attention weights per layer, per head, each `|X| × |X|`.
    pub attention: Vec<Vec<Array2<T>>>,
    ids: Vec<usize>,
    positions: Vec<usize>,
    caches: Vec<LayerCache<T>>,
}

impl<T: Float> Activations<T> {
    /// Final-layer representations `H^N`.
    pub fn output(&self) -> &Array2<T> {
        self.hidden.last().expect("hidden always holds H^0")
    }
}

fn gelu<T: Float>(x: T) -> T {
    let c: T = cst((2.0 / std::f64::consts::PI).sqrt());
    let a: T = cst(0.044715);
    let half: T = cst(0.5);
    half * x * (T::one() + (c * (x + a * x * x * x)).tanh())
}

fn gelu_grad<T: Float>(x: T) -> T {
    let c: T = cst((2.0 / std::f64::consts::PI).sqrt());
    let a: T = cst(0.044715);
    let half: T = cst(0.5);
    let three: T = cst(3.0);
    let t = (c * (x + a * x * x * x)).tanh();
    half * (T::one() + t) + half * x * (T::one() - t * t) * c * (T::one() + three * a * x * x)
}

fn softmax_rows<T: Float>(scores: &mut Array2<T>) {
    for mut row in scores.rows_mut() {
        let max = row.iter().copied().fold(T::neg_infinity(), T::max);
        row.mapv_inplace(|x| (x - max).exp());
        let sum = row.sum();
        row.mapv_inplace(|x| x / sum);
    }
}

fn layer_norm<T: Float>(x: &Array2<T>, gain: &Array1<T>, bias: &Array1<T>) -> (Array2<T>, LayerNormCache<T>) {
    let d = T::from_usize(x.ncols()).expect("dimension fits");
    let eps: T = cst(LN_EPS);
    let mut normalized = x.clone();
    let mut inv_std = Array1::zeros(x.nrows());
    for (mut row, r) in normalized.rows_mut().into_iter().zip(inv_std.iter_mut()) {
        let mean = row.sum() / d;
        row.mapv_inplace(|v| v - mean);
        let var = row.iter().map(|&v| v * v).sum::<T>() / d;
        *r = T::one() / (var + eps).sqrt();
        let rr = *r;
        row.mapv_inplace(|v| v * rr);
    }
    let out = &normalized * gain + bias;
    (out, LayerNormCache { normalized, inv_std })
}

fn layer_norm_backward<T: Float>(
    d_out: &Array2<T>,
    cache: &LayerNormCache<T>,
    gain: &Array1<T>,
    d_gain: &mut Array1<T>,
    d_bias: &mut Array1<T>,
) -> Array2<T> {
    *d_gain += &(d_out * &cache.normalized).sum_axis(Axis(0));
    *d_bias += &d_out.sum_axis(Axis(0));
    let d = T::from_usize(d_out.ncols()).expect("dimension fits");
    let mut dx = d_out * gain;
    for ((mut row, xhat), &r) in dx.rows_mut().into_iter().zip(cache.normalized.rows()).zip(cache.inv_std.iter()) {
        let mean_d = row.sum() / d;
        let mean_dx = row.iter().zip(xhat.iter()).map(|(&a, &b)| a * b).sum::<T>() / d;
        Zip::from(&mut row).and(&xhat).for_each(|g, &h| *g = r * (*g - mean_d - h * mean_dx));
    }
    dx
}

fn head_cols(head: usize, head_dim: usize) -> ndarray::Slice {
    ndarray::Slice::from(head * head_dim..(head + 1) * head_dim)
}

/// Per-head attention weights `softmax(Q_i K_i^T / sqrt(d_k) + M)` for one layer.
pub fn attention_scores<T: Float>(hidden: &Array2<T>, layer: &LayerParams<T>, mask: &Array2<T>, num_heads: usize) -> Vec<Array2<T>> {
    let q = hidden.dot(&layer.w_q);
    let k = hidden.dot(&layer.w_k);
    head_weights(&q, &k, mask, num_heads)
}

fn head_weights<T: Float>(q: &Array2<T>, k: &Array2<T>, mask: &Array2<T>, num_heads: usize) -> Vec<Array2<T>> {
    let head_dim = q.ncols() / num_heads;
    let scale = T::one() / T::from_usize(head_dim).expect("dimension fits").sqrt();
    (0..num_heads)
        .map(|h| {
            let cols = head_cols(h, head_dim);
            let qh = q.slice_axis(Axis(1), cols);
            let kh = k.slice_axis(Axis(1), cols);
            let mut scores = qh.dot(&kh.t()) * scale + mask;
            softmax_rows(&mut scores);
            scores
        })
        .collect()
}

/// Output of one multi-head attention sub-layer (before residual and norm).
pub fn attention_output<T: Float>(hidden: &Array2<T>, layer: &LayerParams<T>, mask: &Array2<T>, num_heads: usize) -> Array2<T> {
    let q = hidden.dot(&layer.w_q);
    let k = hidden.dot(&layer.w_k);
    let v = hidden.dot(&layer.w_v);
    let weights = head_weights(&q, &k, mask, num_heads);
    concat_heads(&weights, &v).dot(&layer.w_o)
}

fn concat_heads<T: Float>(weights: &[Array2<T>], v: &Array2<T>) -> Array2<T> {
    let head_dim = v.ncols() / weights.len();
    let mut context = Array2::zeros(v.raw_dim());
    for (h, w) in weights.iter().enumerate() {
        let cols = head_cols(h, head_dim);
        context.slice_axis_mut(Axis(1), cols).assign(&w.dot(&v.slice_axis(Axis(1), cols)));
    }
    context
}

fn check_input<T: Float>(params: &ModelParams<T>, input: &ModelInput<T>) -> Result<(), ModelError> {
    let cfg = &params.config;
    let n = input.ids.len();
    if input.positions.len() != n || input.mask.dim() != (n, n) {
        return Err(ModelError::ShapeMismatch(format!(
            "{} ids, {} positions, mask {:?}",
            n,
            input.positions.len(),
            input.mask.dim()
        )));
    }
    if let Some(&id) = input.ids.iter().find(|&&id| id >= cfg.vocab_size) {
        return Err(ModelError::ShapeMismatch(format!("token id {id} outside vocabulary of {}", cfg.vocab_size)));
    }
    if let Some(&p) = input.positions.iter().find(|&&p| p >= cfg.max_positions) {
        return Err(ModelError::ShapeMismatch(format!("position {p} outside table of {}", cfg.max_positions)));
    }
    Ok(())
}

/// Embeds the input and runs every post-norm encoder layer:
/// `G = LN(MultiAttn(H) + H)`, `H' = LN(FFN(G) + G)`.
pub fn forward<T: Float>(params: &ModelParams<T>, input: &ModelInput<T>) -> Result<Activations<T>, ModelError> {
    check_input(params, input)?;
    let cfg = &params.config;
    let n = input.len();
    let mut h = Array2::zeros((n, cfg.hidden_dim));
    for (t, mut row) in h.rows_mut().into_iter().enumerate() {
        row.assign(&params.token_embedding.row(input.ids[t]));
        row += &params.position_embedding.row(input.positions[t]);
    }
    let mut hidden = vec![h];
    let mut attention = Vec::with_capacity(cfg.num_layers);
    let mut caches = Vec::with_capacity(cfg.num_layers);
    for layer in &params.layers {
        let x = hidden.last().expect("non-empty");
        let q = x.dot(&layer.w_q);
        let k = x.dot(&layer.w_k);
        let v = x.dot(&layer.w_v);
        let weights = head_weights(&q, &k, &input.mask, cfg.num_heads);
        let context = concat_heads(&weights, &v);
        let residual = context.dot(&layer.w_o) + x;
        let (attn_out, ln1) = layer_norm(&residual, &layer.ln1_gain, &layer.ln1_bias);
        let pre_act = attn_out.dot(&layer.ffn_w1) + &layer.ffn_b1;
        let act = pre_act.mapv(gelu);
        let residual = act.dot(&layer.ffn_w2) + &layer.ffn_b2 + &attn_out;
        let (out, ln2) = layer_norm(&residual, &layer.ln2_gain, &layer.ln2_bias);
        hidden.push(out);
        attention.push(weights);
        caches.push(LayerCache { q, k, v, context, ln1, attn_out, pre_act, act, ln2 });
    }
    Ok(Activations { hidden, attention, ids: input.ids.clone(), positions: input.positions.clone(), caches })
}

fn accumulate<T: Float>(dst: &mut Array2<T>, a: ArrayView2<'_, T>, b: ArrayView2<'_, T>) {
    general_mat_mul(T::one(), &a, &b, T::one(), dst);
}

/// Back-propagates `d_output = dL/dH^N` through the encoder, adding
/// parameter gradients into `grads`.
pub fn backward<T: Float>(params: &ModelParams<T>, acts: &Activations<T>, d_output: Array2<T>, grads: &mut ModelParams<T>) {
    let cfg = &params.config;
    let head_dim = cfg.head_dim();
    let scale = T::one() / T::from_usize(head_dim).expect("dimension fits").sqrt();
    let mut d_h = d_output;
    for (l, layer) in params.layers.iter().enumerate().rev() {
        let cache = &acts.caches[l];
        let x = &acts.hidden[l];
        let g = &mut grads.layers[l];

        let d_res2 = layer_norm_backward(&d_h, &cache.ln2, &layer.ln2_gain, &mut g.ln2_gain, &mut g.ln2_bias);
        accumulate(&mut g.ffn_w2, cache.act.t(), d_res2.view());
        g.ffn_b2 += &d_res2.sum_axis(Axis(0));
        let mut d_pre = d_res2.dot(&layer.ffn_w2.t());
        Zip::from(&mut d_pre).and(&cache.pre_act).for_each(|d, &u| *d *= gelu_grad(u));
        accumulate(&mut g.ffn_w1, cache.attn_out.t(), d_pre.view());
        g.ffn_b1 += &d_pre.sum_axis(Axis(0));
        let d_attn_out = d_res2 + d_pre.dot(&layer.ffn_w1.t());

        let d_res1 = layer_norm_backward(&d_attn_out, &cache.ln1, &layer.ln1_gain, &mut g.ln1_gain, &mut g.ln1_bias);
        accumulate(&mut g.w_o, cache.context.t(), d_res1.view());
        let d_context = d_res1.dot(&layer.w_o.t());

        let mut d_q = Array2::zeros(cache.q.raw_dim());
        let mut d_k = Array2::zeros(cache.k.raw_dim());
        let mut d_v = Array2::zeros(cache.v.raw_dim());
        for (h, weights) in acts.attention[l].iter().enumerate() {
            let cols = head_cols(h, head_dim);
            let d_ctx_h = d_context.slice_axis(Axis(1), cols);
            let v_h = cache.v.slice_axis(Axis(1), cols);
            let mut d_scores = d_ctx_h.dot(&v_h.t());
            d_v.slice_axis_mut(Axis(1), cols).assign(&weights.t().dot(&d_ctx_h));
            for (mut ds, w) in d_scores.rows_mut().into_iter().zip(weights.rows()) {
                let dot = ds.iter().zip(w.iter()).map(|(&a, &b)| a * b).sum::<T>();
                Zip::from(&mut ds).and(&w).for_each(|d, &p| *d = p * (*d - dot) * scale);
            }
            d_q.slice_axis_mut(Axis(1), cols)
                .assign(&d_scores.dot(&cache.k.slice_axis(Axis(1), cols)));
            d_k.slice_axis_mut(Axis(1), cols)
                .assign(&d_scores.t().dot(&cache.q.slice_axis(Axis(1), cols)));
        }
        accumulate(&mut g.w_q, x.t(), d_q.view());
        accumulate(&mut g.w_k, x.t(), d_k.view());
        accumulate(&mut g.w_v, x.t(), d_v.view());
        let mut d_x = d_res1;
        accumulate(&mut d_x, d_q.view(), layer.w_q.t());
        accumulate(&mut d_x, d_k.view(), layer.w_k.t());
        accumulate(&mut d_x, d_v.view(), layer.w_v.t());
        d_h = d_x;
    }
    for (t, row) in d_h.rows().into_iter().enumerate() {
        let mut tok = grads.token_embedding.row_mut(acts.ids[t]);
        tok += &row;
        let mut pos = grads.position_embedding.row_mut(acts.positions[t]);
        pos += &row;
    }
}

/// A scalar loss on the final hidden states.
pub trait Objective<T: Float> {
    /// Returns the loss, adds `dL/dH^N` into `d_hidden` and the gradients
    /// of any head parameters it reads into `grads`.
    fn evaluate(&self, hidden: &Array2<T>, params: &ModelParams<T>, d_hidden: &mut Array2<T>, grads: &mut ModelParams<T>) -> T;

    fn loss(&self, hidden: &Array2<T>, params: &ModelParams<T>) -> T {
        let mut d = Array2::zeros(hidden.raw_dim());
        let mut g = params.zeros_like();
        self.evaluate(hidden, params, &mut d, &mut g)
    }
}

/// Sum of several objectives.
pub struct SumObjective<'a, T>(pub Vec<&'a dyn Objective<T>>);

impl<T: Float> Objective<T> for SumObjective<'_, T> {
    fn evaluate(&self, hidden: &Array2<T>, params: &ModelParams<T>, d_hidden: &mut Array2<T>, grads: &mut ModelParams<T>) -> T {
        self.0.iter().map(|o| o.evaluate(hidden, params, d_hidden, grads)).fold(T::zero(), |a, b| a + b)
    }
}

/// Loss and gradients of `objective` for one input.
pub fn compute_gradients<T: Float, O: Objective<T> + ?Sized>(
    objective: &O,
    params: &ModelParams<T>,
    input: &ModelInput<T>,
) -> Result<(T, ModelParams<T>), ModelError> {
    let acts = forward(params, input)?;
    let mut grads = params.zeros_like();
    let mut d_hidden = Array2::zeros(acts.output().raw_dim());
    let loss = objective.evaluate(acts.output(), params, &mut d_hidden, &mut grads);
    if !loss.is_finite() {
        return Err(ModelError::NonFiniteLoss);
    }
    backward(params, &acts, d_hidden, &mut grads);
    Ok((loss, grads))
}
