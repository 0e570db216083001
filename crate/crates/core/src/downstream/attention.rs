use serde::{Deserialize, Serialize};

use crate::encoding::{EncodedExample, Segment};
use crate::transformer::{Activations, Float};

/// Share of the `[CLS]` attention mass on code tokens versus variable nodes.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AttentionSplit {
    pub code_fraction: f64,
    pub node_fraction: f64,
}

/// Averages the `[CLS]` query row over every head and layer, then
/// renormalizes its mass on code and node keys to sum to 1. Inputs with no
/// mass on either class give `(1, 0)`.
pub fn cls_attention_split<T: Float>(acts: &Activations<T>, example: &EncodedExample) -> AttentionSplit {
    let (mut code, mut node, mut rows) = (0.0, 0.0, 0usize);
    for layer in &acts.attention {
        for head in layer {
            rows += 1;
            for (k, &w) in head.row(0).iter().enumerate() {
                let w = w.to_f64().expect("finite weight");
                match example.segments.get(k) {
                    Some(Segment::Code) => code += w,
                    Some(Segment::Node) => node += w,
                    _ => {}
                }
            }
        }
    }
    let total = code + node;
    if rows == 0 || total <= 0.0 || example.node_count() == 0 {
        return AttentionSplit { code_fraction: 1.0, node_fraction: 0.0 };
    }
    AttentionSplit { code_fraction: code / total, node_fraction: node / total }
}

/// Mean split over a set of examples, in percent.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AttentionReport {
    pub examples: usize,
    pub code_percent: f64,
    pub node_percent: f64,
}

impl AttentionReport {
    pub fn from_splits(splits: &[AttentionSplit]) -> Self {
        let n = splits.len().max(1) as f64;
        let code = splits.iter().map(|s| s.code_fraction).sum::<f64>() / n;
        let node = splits.iter().map(|s| s.node_fraction).sum::<f64>() / n;
        Self { examples: splits.len(), code_percent: 100.0 * code, node_percent: 100.0 * node }
    }

    /// Two-row text table: header, then the percentages with one decimal.
    pub fn to_table(&self) -> String {
        format!("{:<12}{:>10}{:>10}\n{:<12}{:>10.1}{:>10.1}\n", "", "codes", "variables", "[CLS]", self.code_percent, self.node_percent)
    }
}
