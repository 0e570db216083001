use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::ops::Range;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::vocab::{comment_tokens, Vocabulary, CLS, SEP};
use crate::dfg::{build_dfg, DataFlowGraph};
use crate::frontend::{ParseFailure, Program, Token};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Segment {
    Special,
    Comment,
    Code,
    Node,
}

/// Truncation limits for the three variable-length segments.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Limits {
    pub max_comment: usize,
    pub max_code: usize,
    pub max_nodes: usize,
}

impl Default for Limits {
    fn default() -> Self {
        Self { max_comment: 128, max_code: 256, max_nodes: 64 }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum EncodeError {
    #[error("sequence needs {needed} sequential positions but only {available} are available")]
    SequenceTooLong { needed: usize, available: usize },
}

/// Model input laid out as `[CLS] W [SEP] C [SEP] V`.
///
/// Edge and link sets are expressed over sequence positions.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EncodedExample {
    pub ids: Vec<usize>,
    pub segments: Vec<Segment>,
    /// `(source position, destination position)` between node positions.
    pub node_edges: BTreeSet<(usize, usize)>,
    /// `(node position, code position)`.
    pub node_token_links: BTreeSet<(usize, usize)>,
    pub code_token_of_node: BTreeMap<usize, usize>,
    comment_len: usize,
    code_len: usize,
}

impl EncodedExample {
    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn comment_range(&self) -> Range<usize> {
        1..1 + self.comment_len
    }

    /// Empty when the example has no code segment (query-only input).
    pub fn code_range(&self) -> Range<usize> {
        let start = self.comment_len + 2;
        start..start + self.code_len
    }

    pub fn node_range(&self) -> Range<usize> {
        let start = self.sequential_len();
        start..self.len()
    }

    pub fn node_count(&self) -> usize {
        self.node_range().len()
    }

    /// Number of positions before the node segment.
    pub fn sequential_len(&self) -> usize {
        self.segments.iter().take_while(|s| **s != Segment::Node).count()
    }

    /// Positions that MLM may target: comment and code tokens.
    pub fn maskable_positions(&self) -> Vec<usize> {
        (0..self.len())
            .filter(|&i| matches!(self.segments[i], Segment::Comment | Segment::Code))
            .collect()
    }
}

fn layout(vocab: &Vocabulary, comment: &[String], code: Option<&[Token]>) -> (Vec<usize>, Vec<Segment>) {
    let mut ids = vec![CLS];
    let mut segments = vec![Segment::Special];
    for w in comment {
        ids.push(vocab.id(w));
        segments.push(Segment::Comment);
    }
    ids.push(SEP);
    segments.push(Segment::Special);
    if let Some(code) = code {
        for t in code {
            ids.push(vocab.id(t.vocab_key()));
            segments.push(Segment::Code);
        }
        ids.push(SEP);
        segments.push(Segment::Special);
    }
    (ids, segments)
}

/// Lays out comment, code and data-flow nodes, applying `limits`. Nodes
/// whose identifier token was truncated are dropped, together with their
/// edges; the survivors are then capped at `max_nodes`.
pub fn encode_example(
    comment: &str,
    code: &[Token],
    dfg: &DataFlowGraph,
    vocab: &Vocabulary,
    limits: &Limits,
) -> EncodedExample {
    let mut words = comment_tokens(comment);
    words.truncate(limits.max_comment);
    let code = &code[..code.len().min(limits.max_code)];
    let (mut ids, mut segments) = layout(vocab, &words, Some(code));
    let code_start = words.len() + 2;

    let kept: Vec<_> = dfg
        .nodes
        .iter()
        .filter(|n| n.token_index < code.len())
        .take(limits.max_nodes)
        .collect();
    let mut position_of_node = HashMap::new();
    let mut node_token_links = BTreeSet::new();
    let mut code_token_of_node = BTreeMap::new();
    for n in kept {
        let pos = ids.len();
        let code_pos = code_start + n.token_index;
        position_of_node.insert(n.id, pos);
        ids.push(ids[code_pos]);
        segments.push(Segment::Node);
        node_token_links.insert((pos, code_pos));
        code_token_of_node.insert(pos, code_pos);
    }
    let node_edges = dfg
        .edges
        .iter()
        .filter_map(|(s, d)| Some((*position_of_node.get(s)?, *position_of_node.get(d)?)))
        .collect();

    EncodedExample {
        ids,
        segments,
        node_edges,
        node_token_links,
        code_token_of_node,
        comment_len: words.len(),
        code_len: code.len(),
    }
}

/// Query-only input `[CLS] W [SEP]` with no code segment.
pub fn encode_query(comment: &str, vocab: &Vocabulary, max_comment: usize) -> EncodedExample {
    let mut words = comment_tokens(comment);
    words.truncate(max_comment);
    let (ids, segments) = layout(vocab, &words, None);
    EncodedExample {
        ids,
        segments,
        node_edges: BTreeSet::new(),
        node_token_links: BTreeSet::new(),
        code_token_of_node: BTreeMap::new(),
        comment_len: words.len(),
        code_len: 0,
    }
}

/// Parses `code`, extracts its data flow (unless `use_dataflow` is false, in
/// which case the node segment is empty) and encodes it with `comment`.
pub fn encode_source(
    comment: &str,
    code: &str,
    vocab: &Vocabulary,
    limits: &Limits,
    use_dataflow: bool,
) -> Result<EncodedExample, ParseFailure> {
    let program = Program::parse(code)?;
    let dfg = if use_dataflow { build_dfg(&program.ast) } else { DataFlowGraph::default() };
    Ok(encode_example(comment, &program.tokens, &dfg, vocab, limits))
}

/// Sequential position ids for `[CLS] W [SEP] C [SEP]`, and the single
/// reserved id `max_positions - 1` for every node.
pub fn assign_positions(example: &EncodedExample, max_positions: usize) -> Result<Vec<usize>, EncodeError> {
    let node_slot = max_positions.saturating_sub(1);
    let sequential = example.sequential_len();
    if sequential > node_slot {
        return Err(EncodeError::SequenceTooLong { needed: sequential, available: node_slot });
    }
    Ok((0..example.len())
        .map(|i| if example.segments[i] == Segment::Node { node_slot } else { i })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::encoding::build_vocab;

    fn vocab() -> Vocabulary {
        build_vocab([("mean of data", "a = 1\nb = a + c")], 100).unwrap()
    }

    #[test]
    fn direct_layout() {
        let v = vocab();
        let ex = encode_source("mean", "a=1", &v, &Limits::default(), true).unwrap();
        assert_eq!(ex.ids, vec![CLS, v.id("mean"), SEP, v.id("a"), v.id("="), v.id("1"), SEP, v.id("a")]);
        use Segment::*;
        assert_eq!(ex.segments, [Special, Comment, Special, Code, Code, Code, Special, Node]);
        assert_eq!(ex.node_token_links, BTreeSet::from([(7, 3)]));
        assert_eq!(ex.comment_range(), 1..2);
        assert_eq!(ex.code_range(), 3..6);
        assert_eq!(ex.node_range(), 7..8);
    }

    #[test]
    fn truncated_tokens_drop_nodes() {
        let v = vocab();
        let limits = Limits { max_comment: 8, max_code: 4, max_nodes: 64 };
        // Tokens: a = 1 <nl> | b = a + c  → only `a@0` survives.
        let ex = encode_source("", "a = 1\nb = a + c", &v, &limits, true).unwrap();
        assert_eq!(ex.node_count(), 1);
        assert!(ex.node_edges.is_empty());
        let full = encode_source("", "a = 1\nb = a + c", &v, &Limits::default(), true).unwrap();
        assert_eq!(full.node_count(), 4);
        assert_eq!(full.node_edges.len(), 3);
    }

    #[test]
    fn max_nodes_cap() {
        let v = vocab();
        let limits = Limits { max_nodes: 2, ..Limits::default() };
        let ex = encode_source("", "a = 1\nb = a + c", &v, &limits, true).unwrap();
        assert_eq!(ex.node_count(), 2);
        for &(s, d) in &ex.node_edges {
            assert!(ex.node_range().contains(&s) && ex.node_range().contains(&d));
        }
    }

    #[test]
    fn segments_for_documented_function() {
        let v = vocab();
        let code = "def mean_fn(data):\n    total = 0\n    for x in data:\n        total += x\n    return total / len(data)";
        let ex = encode_source("Return the sample arithmetic mean of data", code, &v, &Limits::default(), true).unwrap();
        let m = 7;
        let n = ex.code_range().len();
        let k = ex.node_count();
        assert!(n > 0 && k > 0);
        let mut expected = vec![Segment::Special];
        expected.extend(std::iter::repeat_n(Segment::Comment, m));
        expected.push(Segment::Special);
        expected.extend(std::iter::repeat_n(Segment::Code, n));
        expected.push(Segment::Special);
        expected.extend(std::iter::repeat_n(Segment::Node, k));
        assert_eq!(ex.segments, expected);
    }

    #[test]
    fn positions() {
        let v = vocab();
        let ex = encode_source("", "a = 1", &v, &Limits::default(), false).unwrap();
        assert_eq!(assign_positions(&ex, 512).unwrap(), (0..ex.len()).collect::<Vec<_>>());

        let ex = encode_source("x", "b = a + c", &v, &Limits::default(), true).unwrap();
        let pos = assign_positions(&ex, 512).unwrap();
        assert_eq!(ex.node_count(), 3);
        assert!(pos[pos.len() - 3..].iter().all(|&p| p == 511));
        assert!(pos[..pos.len() - 3].iter().enumerate().all(|(i, &p)| p == i));

        assert_eq!(
            assign_positions(&ex, 8),
            Err(EncodeError::SequenceTooLong { needed: ex.sequential_len(), available: 7 })
        );
    }

    #[test]
    fn query_layout() {
        let v = vocab();
        let q = encode_query("mean of data", &v, 128);
        assert_eq!(q.ids, [CLS, v.id("mean"), v.id("of"), v.id("data"), SEP]);
        assert!(q.code_range().is_empty());
        assert_eq!(q.node_count(), 0);
    }
}
