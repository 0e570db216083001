use ndarray::{Array1, Array2, ArrayView1};

use super::targets::{MlmTarget, PairTargets};
use crate::transformer::{Float, ModelParams, Objective};

/// `ln(1 + e^x)` without overflow.
fn softplus<T: Float>(x: T) -> T {
    if x > T::zero() {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

fn sigmoid<T: Float>(x: T) -> T {
    T::one() / (T::one() + (-x).exp())
}

/// Mean cross-entropy of the original ids at the MLM target positions,
/// predicted through the output projection.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MlmObjective {
    pub positions: Vec<usize>,
    pub original_ids: Vec<usize>,
}

impl From<&MlmTarget> for MlmObjective {
    fn from(t: &MlmTarget) -> Self {
        Self { positions: t.positions.clone(), original_ids: t.original_ids.clone() }
    }
}

impl MlmObjective {
    fn logits<T: Float>(row: ArrayView1<'_, T>, params: &ModelParams<T>) -> Array1<T> {
        row.dot(&params.mlm_weight) + &params.mlm_bias
    }

    /// Fraction of targets whose highest-scoring id is the original.
    pub fn accuracy<T: Float>(&self, hidden: &Array2<T>, params: &ModelParams<T>) -> f64 {
        let hits = self
            .positions
            .iter()
            .zip(&self.original_ids)
            .filter(|&(&pos, &gold)| {
                let logits = Self::logits(hidden.row(pos), params);
                let best = logits.iter().enumerate().fold(0, |b, (i, &x)| if x > logits[b] { i } else { b });
                best == gold
            })
            .count();
        hits as f64 / self.positions.len().max(1) as f64
    }
}

impl<T: Float> Objective<T> for MlmObjective {
    fn evaluate(&self, hidden: &Array2<T>, params: &ModelParams<T>, d_hidden: &mut Array2<T>, grads: &mut ModelParams<T>) -> T {
        if self.positions.is_empty() {
            return T::zero();
        }
        let scale = T::one() / T::from_usize(self.positions.len()).expect("count fits");
        let mut total = T::zero();
        for (&pos, &gold) in self.positions.iter().zip(&self.original_ids) {
            let h = hidden.row(pos);
            let logits = Self::logits(h, params);
            let max = logits.iter().copied().fold(T::neg_infinity(), T::max);
            let mut probs = logits.mapv(|x| (x - max).exp());
            let sum = probs.sum();
            total += sum.ln() + max - logits[gold];
            probs.mapv_inplace(|p| p / sum * scale);
            probs[gold] -= scale;
            let mut d_row = d_hidden.row_mut(pos);
            d_row += &params.mlm_weight.dot(&probs);
            grads.mlm_bias += &probs;
            for (i, &hi) in h.iter().enumerate() {
                grads.mlm_weight.row_mut(i).scaled_add(hi, &probs);
            }
        }
        total * scale
    }
}

/// Binary cross-entropy of `σ(h_i · h_j)` against the candidate labels,
/// averaged over candidates. Used for both edge prediction and node
/// alignment.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PairObjective {
    pub candidates: Vec<(usize, usize)>,
    pub labels: Vec<bool>,
}

impl From<&PairTargets> for PairObjective {
    fn from(t: &PairTargets) -> Self {
        Self { candidates: t.candidates.clone(), labels: t.labels.clone() }
    }
}

impl PairObjective {
    pub fn probabilities<T: Float>(&self, hidden: &Array2<T>) -> Vec<T> {
        self.candidates.iter().map(|&(i, j)| sigmoid(hidden.row(i).dot(&hidden.row(j)))).collect()
    }

    /// Fraction of candidates on the correct side of 0.5.
    pub fn accuracy<T: Float>(&self, hidden: &Array2<T>) -> f64 {
        let half = T::from_f64(0.5).expect("finite");
        let hits = self.probabilities(hidden).iter().zip(&self.labels).filter(|&(&p, &y)| (p > half) == y).count();
        hits as f64 / self.candidates.len().max(1) as f64
    }
}

impl<T: Float> Objective<T> for PairObjective {
    fn evaluate(&self, hidden: &Array2<T>, _params: &ModelParams<T>, d_hidden: &mut Array2<T>, _grads: &mut ModelParams<T>) -> T {
        if self.candidates.is_empty() {
            return T::zero();
        }
        let scale = T::one() / T::from_usize(self.candidates.len()).expect("count fits");
        let mut total = T::zero();
        for (&(i, j), &label) in self.candidates.iter().zip(&self.labels) {
            let s = hidden.row(i).dot(&hidden.row(j));
            let y = if label { T::one() } else { T::zero() };
            total += if label { softplus(-s) } else { softplus(s) };
            let g = (sigmoid(s) - y) * scale;
            let (hi, hj) = (hidden.row(i).to_owned(), hidden.row(j).to_owned());
            d_hidden.row_mut(i).scaled_add(g, &hj);
            d_hidden.row_mut(j).scaled_add(g, &hi);
        }
        total * scale
    }
}

pub fn mlm_loss<T: Float>(hidden: &Array2<T>, target: &MlmTarget, params: &ModelParams<T>) -> T {
    MlmObjective::from(target).loss(hidden, params)
}

pub fn edge_pred_loss<T: Float>(hidden: &Array2<T>, targets: &PairTargets, params: &ModelParams<T>) -> T {
    PairObjective::from(targets).loss(hidden, params)
}

pub fn node_align_loss<T: Float>(hidden: &Array2<T>, targets: &PairTargets, params: &ModelParams<T>) -> T {
    PairObjective::from(targets).loss(hidden, params)
}
