use ndarray::{Array1, Array2, ArrayViewD, ArrayViewMutD};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::{Float, ModelError};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub num_layers: usize,
    pub hidden_dim: usize,
    pub num_heads: usize,
    pub ffn_dim: usize,
    pub vocab_size: usize,
    /// Rows of the position table; the last row is shared by all nodes.
    pub max_positions: usize,
    pub seed: u64,
}

impl ModelConfig {
    /// Desk-scale defaults: 2 layers, 64 hidden, 4 heads, 256 FFN.
    pub fn desk(vocab_size: usize) -> Self {
        Self { num_layers: 2, hidden_dim: 64, num_heads: 4, ffn_dim: 256, vocab_size, max_positions: 512, seed: 0 }
    }

    pub fn head_dim(&self) -> usize {
        self.hidden_dim / self.num_heads
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        let dims = [self.hidden_dim, self.num_heads, self.ffn_dim, self.vocab_size, self.max_positions];
        if dims.contains(&0) {
            return Err(ModelError::InvalidConfig("all dimensions must be at least 1".into()));
        }
        if !self.hidden_dim.is_multiple_of(self.num_heads) {
            return Err(ModelError::InvalidConfig(format!(
                "hidden_dim {} is not divisible by num_heads {}",
                self.hidden_dim, self.num_heads
            )));
        }
        Ok(())
    }

    /// Closed-form count of learned scalars.
    pub fn param_count(&self) -> usize {
        let (d, f, v) = (self.hidden_dim, self.ffn_dim, self.vocab_size);
        let per_layer = 4 * d * d + d * f + f + f * d + d + 4 * d;
        v * d + self.max_positions * d + self.num_layers * per_layer + d * v + v
    }
}

/// One encoder layer. Head `i` of the query/key/value projections is the
/// column block `i*d_k..(i+1)*d_k` of the `d_h × d_h` matrices.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerParams<T> {
    pub w_q: Array2<T>,
    pub w_k: Array2<T>,
    pub w_v: Array2<T>,
    pub w_o: Array2<T>,
    pub ln1_gain: Array1<T>,
    pub ln1_bias: Array1<T>,
    pub ffn_w1: Array2<T>,
    pub ffn_b1: Array1<T>,
    pub ffn_w2: Array2<T>,
    pub ffn_b2: Array1<T>,
    pub ln2_gain: Array1<T>,
    pub ln2_bias: Array1<T>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams<T> {
    pub config: ModelConfig,
    pub token_embedding: Array2<T>,
    pub position_embedding: Array2<T>,
    pub layers: Vec<LayerParams<T>>,
    pub mlm_weight: Array2<T>,
    pub mlm_bias: Array1<T>,
}

impl<T: Float> LayerParams<T> {
    fn fields(&self) -> [(&'static str, ArrayViewD<'_, T>); 12] {
        [
            ("w_q", self.w_q.view().into_dyn()),
            ("w_k", self.w_k.view().into_dyn()),
            ("w_v", self.w_v.view().into_dyn()),
            ("w_o", self.w_o.view().into_dyn()),
            ("ln1.gain", self.ln1_gain.view().into_dyn()),
            ("ln1.bias", self.ln1_bias.view().into_dyn()),
            ("ffn.w1", self.ffn_w1.view().into_dyn()),
            ("ffn.b1", self.ffn_b1.view().into_dyn()),
            ("ffn.w2", self.ffn_w2.view().into_dyn()),
            ("ffn.b2", self.ffn_b2.view().into_dyn()),
            ("ln2.gain", self.ln2_gain.view().into_dyn()),
            ("ln2.bias", self.ln2_bias.view().into_dyn()),
        ]
    }

    fn fields_mut(&mut self) -> [ArrayViewMutD<'_, T>; 12] {
        [
            self.w_q.view_mut().into_dyn(),
            self.w_k.view_mut().into_dyn(),
            self.w_v.view_mut().into_dyn(),
            self.w_o.view_mut().into_dyn(),
            self.ln1_gain.view_mut().into_dyn(),
            self.ln1_bias.view_mut().into_dyn(),
            self.ffn_w1.view_mut().into_dyn(),
            self.ffn_b1.view_mut().into_dyn(),
            self.ffn_w2.view_mut().into_dyn(),
            self.ffn_b2.view_mut().into_dyn(),
            self.ln2_gain.view_mut().into_dyn(),
            self.ln2_bias.view_mut().into_dyn(),
        ]
    }
}

impl<T: Float> ModelParams<T> {
    /// Every tensor with its stable checkpoint name, in a fixed order.
    pub fn named_tensors(&self) -> Vec<(String, ArrayViewD<'_, T>)> {
        let mut out = vec![
            ("embeddings.token".to_string(), self.token_embedding.view().into_dyn()),
            ("embeddings.position".to_string(), self.position_embedding.view().into_dyn()),
        ];
        for (i, layer) in self.layers.iter().enumerate() {
            out.extend(layer.fields().into_iter().map(|(n, t)| (format!("layers.{i}.{n}"), t)));
        }
        out.push(("mlm.weight".to_string(), self.mlm_weight.view().into_dyn()));
        out.push(("mlm.bias".to_string(), self.mlm_bias.view().into_dyn()));
        out
    }

    /// Mutable views in the same order as [`named_tensors`](Self::named_tensors).
    pub fn tensors_mut(&mut self) -> Vec<ArrayViewMutD<'_, T>> {
        let mut out = vec![self.token_embedding.view_mut().into_dyn(), self.position_embedding.view_mut().into_dyn()];
        for layer in &mut self.layers {
            out.extend(layer.fields_mut());
        }
        out.push(self.mlm_weight.view_mut().into_dyn());
        out.push(self.mlm_bias.view_mut().into_dyn());
        out
    }

    pub fn zeros_like(&self) -> Self {
        self.map(|_| T::zero())
    }

    pub fn num_params(&self) -> usize {
        self.named_tensors().iter().map(|(_, t)| t.len()).sum()
    }

    fn map<U: Float>(&self, f: impl Fn(T) -> U + Copy) -> ModelParams<U> {
        let layers = self
            .layers
            .iter()
            .map(|l| LayerParams {
                w_q: l.w_q.mapv(f),
                w_k: l.w_k.mapv(f),
                w_v: l.w_v.mapv(f),
                w_o: l.w_o.mapv(f),
                ln1_gain: l.ln1_gain.mapv(f),
                ln1_bias: l.ln1_bias.mapv(f),
                ffn_w1: l.ffn_w1.mapv(f),
                ffn_b1: l.ffn_b1.mapv(f),
                ffn_w2: l.ffn_w2.mapv(f),
                ffn_b2: l.ffn_b2.mapv(f),
                ln2_gain: l.ln2_gain.mapv(f),
                ln2_bias: l.ln2_bias.mapv(f),
            })
            .collect();
        ModelParams {
            config: self.config.clone(),
            token_embedding: self.token_embedding.mapv(f),
            position_embedding: self.position_embedding.mapv(f),
            layers,
            mlm_weight: self.mlm_weight.mapv(f),
            mlm_bias: self.mlm_bias.mapv(f),
        }
    }

    /// Converts every entry to another float type.
    pub fn cast<U: Float>(&self) -> ModelParams<U> {
        self.map(|x| U::from(x).expect("float conversion"))
    }

    /// `self += scale * other`, tensor by tensor.
    pub fn add_scaled(&mut self, other: &Self, scale: T) {
        let others = other.named_tensors();
        for (mut mine, (_, theirs)) in self.tensors_mut().into_iter().zip(others) {
            mine.zip_mut_with(&theirs, |a, &b| *a += scale * b);
        }
    }

    pub fn all_finite(&self) -> bool {
        self.named_tensors().iter().all(|(_, t)| t.iter().all(|x| x.is_finite()))
    }

    pub fn max_abs_diff(&self, other: &Self) -> T {
        let mut worst = T::zero();
        for ((_, a), (_, b)) in self.named_tensors().into_iter().zip(other.named_tensors()) {
            for (x, y) in a.iter().zip(b.iter()) {
                worst = worst.max((*x - *y).abs());
            }
        }
        worst
    }
}

/// Weights drawn from N(0, 0.02²) truncated at ±2σ; layer-norm gains 1,
/// all biases 0. Deterministic in `config.seed`.
pub fn init_params<T: Float>(config: &ModelConfig) -> Result<ModelParams<T>, ModelError> {
    config.validate()?;
    const STD: f64 = 0.02;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let normal = Normal::new(0.0, STD).expect("valid std");
    let mut draw = |rows: usize, cols: usize| {
        Array2::from_shape_simple_fn((rows, cols), || loop {
            let x: f64 = normal.sample(&mut rng);
            if x.abs() <= 2.0 * STD {
                break T::from_f64(x).expect("finite");
            }
        })
    };
    let (d, f, v) = (config.hidden_dim, config.ffn_dim, config.vocab_size);
    let token_embedding = draw(v, d);
    let position_embedding = draw(config.max_positions, d);
    let layers = (0..config.num_layers)
        .map(|_| LayerParams {
            w_q: draw(d, d),
            w_k: draw(d, d),
            w_v: draw(d, d),
            w_o: draw(d, d),
            ln1_gain: Array1::ones(d),
            ln1_bias: Array1::zeros(d),
            ffn_w1: draw(d, f),
            ffn_b1: Array1::zeros(f),
            ffn_w2: draw(f, d),
            ffn_b2: Array1::zeros(d),
            ln2_gain: Array1::ones(d),
            ln2_bias: Array1::zeros(d),
        })
        .collect();
    let mlm_weight = draw(d, v);
    Ok(ModelParams {
        config: config.clone(),
        token_embedding,
        position_embedding,
        layers,
        mlm_weight,
        mlm_bias: Array1::zeros(v),
    })
}
