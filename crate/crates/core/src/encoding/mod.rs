//! Token-id layout `[CLS] W [SEP] C [SEP] V` and the graph-guided attention mask.

mod example;
mod mask;
mod vocab;

pub use example::{
    assign_positions, encode_example, encode_query, encode_source, EncodeError, EncodedExample, Limits, Segment,
};
pub use mask::{build_attention_mask, MaskMatrix, MaskOptions, BLOCKED_SCORE};
pub use vocab::{build_vocab, comment_tokens, VocabError, Vocabulary, CLS, MASK, PAD, SEP, SPECIAL_TOKENS, UNK};
