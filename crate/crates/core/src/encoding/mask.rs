use ndarray::Array2;

use super::example::{EncodedExample, Segment};
use crate::transformer::Float;

/// Additive score for blocked entries; `exp` of it underflows to exactly 0.
pub const BLOCKED_SCORE: f64 = -1e9;

/// Square attention mask; `allowed(q, k)` says whether query `q` may attend key `k`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MaskMatrix {
    size: usize,
    allowed: Vec<bool>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MaskOptions {
    pub use_dataflow: bool,
}

impl Default for MaskOptions {
    fn default() -> Self {
        Self { use_dataflow: true }
    }
}

impl MaskMatrix {
    pub fn all_allowed(size: usize) -> Self {
        Self { size, allowed: vec![true; size * size] }
    }

    pub fn all_blocked(size: usize) -> Self {
        Self { size, allowed: vec![false; size * size] }
    }

    pub fn size(&self) -> usize {
        self.size
    }

    pub fn allowed(&self, query: usize, key: usize) -> bool {
        self.allowed[query * self.size + key]
    }

    pub fn set(&mut self, query: usize, key: usize, allowed: bool) {
        self.allowed[query * self.size + key] = allowed;
    }

    /// Fraction of allowed entries.
    pub fn density(&self) -> f64 {
        if self.size == 0 {
            return 1.0;
        }
        self.allowed.iter().filter(|&&a| a).count() as f64 / self.allowed.len() as f64
    }

    /// Extends to `len` positions with trailing padding. Padding keys are
    /// blocked for every query; a padding query attends only itself.
    pub fn padded(&self, len: usize) -> MaskMatrix {
        assert!(len >= self.size, "cannot pad to a shorter length");
        let mut out = MaskMatrix::all_blocked(len);
        for q in 0..self.size {
            for k in 0..self.size {
                out.set(q, k, self.allowed(q, k));
            }
        }
        for p in self.size..len {
            out.set(p, p, true);
        }
        out
    }

    /// `0` where allowed, `blocked` elsewhere.
    pub fn additive<T: Float>(&self, blocked: f64) -> Array2<T> {
        let blocked = T::from_f64(blocked).expect("finite constant");
        Array2::from_shape_fn((self.size, self.size), |(q, k)| if self.allowed(q, k) { T::zero() } else { blocked })
    }
}

/// Graph-guided attention mask.
///
/// Entry `(q, k)` is allowed when `q` is `[CLS]`/`[SEP]`; when neither
/// position is a node; when `q` is the destination and `k` the source of a
/// data-flow edge; when `q`,`k` are a node and the code token it came from
/// (either order); or when `q == k` is a node. With `use_dataflow` off the
/// whole matrix is allowed.
pub fn build_attention_mask(example: &EncodedExample, options: MaskOptions) -> MaskMatrix {
    let n = example.len();
    if !options.use_dataflow {
        return MaskMatrix::all_allowed(n);
    }
    let mut mask = MaskMatrix::all_blocked(n);
    let is_node = |i: usize| example.segments[i] == Segment::Node;
    for q in 0..n {
        if example.segments[q] == Segment::Special {
            for k in 0..n {
                mask.set(q, k, true);
            }
        } else if !is_node(q) {
            for k in 0..n {
                if !is_node(k) {
                    mask.set(q, k, true);
                }
            }
        } else {
            mask.set(q, q, true);
        }
    }
    for &(src, dst) in &example.node_edges {
        mask.set(dst, src, true);
    }
    for &(node, code) in &example.node_token_links {
        mask.set(node, code, true);
        mask.set(code, node, true);
    }
    mask
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::encoding::{build_vocab, encode_source, Limits};
    use crate::synth::random_program;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn example(code: &str) -> EncodedExample {
        let v = build_vocab([("doc", code)], 100).unwrap();
        encode_source("doc", code, &v, &Limits::default(), true).unwrap()
    }

    #[test]
    fn no_variables_all_allowed() {
        let m = build_attention_mask(&example("f(1, 2)"), MaskOptions::default());
        assert_eq!(m.density(), 1.0);
    }

    #[test]
    fn cls_row_fully_allowed() {
        let ex = example("b = a + c");
        let m = build_attention_mask(&ex, MaskOptions::default());
        assert!((0..ex.len()).all(|k| m.allowed(0, k)));
    }

    #[test]
    fn edge_direction() {
        // Nodes: b@0 (def), a@2, c@4; edges a→b and c→b.
        let ex = example("b = a + c");
        let m = build_attention_mask(&ex, MaskOptions::default());
        let nodes = ex.node_range();
        let (b, a) = (nodes.start, nodes.start + 1);
        assert!(m.allowed(b, a));
        assert!(!m.allowed(a, b));
    }

    #[test]
    fn node_isolation() {
        let mut ex = example("x = 1\ny = x\nz = y + x");
        ex.node_edges.clear();
        ex.node_token_links.clear();
        let m = build_attention_mask(&ex, MaskOptions::default());
        for q in ex.node_range() {
            for k in 0..ex.len() {
                assert_eq!(m.allowed(q, k), q == k);
            }
        }
    }

    #[test]
    fn monotone_in_edges() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..50 {
            let mut ex = example(&random_program(&mut rng));
            let nodes: Vec<_> = ex.node_range().collect();
            if nodes.len() < 2 {
                continue;
            }
            let before = build_attention_mask(&ex, MaskOptions::default());
            ex.node_edges.insert((nodes[nodes.len() - 1], nodes[0]));
            let after = build_attention_mask(&ex, MaskOptions::default());
            for q in 0..ex.len() {
                for k in 0..ex.len() {
                    assert!(!before.allowed(q, k) || after.allowed(q, k));
                }
            }
        }
    }

    #[test]
    fn node_code_symmetric() {
        let ex = example("def f(p):\n    q = p * 2\n    return q");
        let m = build_attention_mask(&ex, MaskOptions::default());
        for &(v, c) in &ex.node_token_links {
            assert!(m.allowed(v, c) && m.allowed(c, v));
        }
    }

    #[test]
    fn without_dataflow() {
        let v = build_vocab([("doc", "b = a")], 100).unwrap();
        let ex = encode_source("doc", "b = a", &v, &Limits::default(), false).unwrap();
        assert_eq!(ex.node_count(), 0);
        assert_eq!(build_attention_mask(&ex, MaskOptions { use_dataflow: false }).density(), 1.0);
    }

    #[test]
    fn padding() {
        let ex = example("b = a");
        let m = build_attention_mask(&ex, MaskOptions::default()).padded(ex.len() + 2);
        let n = ex.len();
        for q in 0..n + 2 {
            for pad in n..n + 2 {
                assert_eq!(m.allowed(q, pad), q == pad);
            }
        }
        for k in 0..n {
            assert!(!m.allowed(n, k));
        }
    }

    #[test]
    fn additive_values() {
        let mut m = MaskMatrix::all_allowed(2);
        m.set(0, 1, false);
        let a = m.additive::<f32>(BLOCKED_SCORE);
        assert_eq!(a[[0, 0]], 0.0);
        assert_eq!(a[[0, 1]], -1e9);
    }
}
