//! Code search, clone detection and `[CLS]` attention analysis on top of
//! the encoder.
//!
//! Both tasks use a bi-encoder: queries and code fragments are encoded
//! separately and compared through their `[CLS]` vectors.

mod attention;
mod clone;
mod encode;
mod search;

use thiserror::Error;

use crate::encoding::EncodeError;
use crate::frontend::ParseFailure;
use crate::transformer::ModelError;

pub use attention::{cls_attention_split, AttentionReport, AttentionSplit};
pub use clone::{
    clone_loss, clone_metrics, clone_probability, clone_score, finetune_clone, predict_clones, CloneFinetuneConfig,
    CloneMetrics, CloneOutcome, CloneRecord,
};
pub use encode::{code_example, encode_all, encode_cls, encode_code, encode_text, model_input, text_example, EncoderSettings};
pub use search::{
    filter_search_records, finetune_search, first_paragraph, in_batch_loss, mrr, rank_candidates, rank_pairs,
    search_pairs, EpochRecord, FinetuneOutcome, RankingResult, SearchFinetuneConfig, SearchPair,
};

#[derive(Debug, Error)]
pub enum DownstreamError {
    #[error("input has no tokens")]
    EmptyInput,
    #[error("vector dimension mismatch: query has {expected}, candidates have {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("{predictions} predictions but {labels} labels")]
    LengthMismatch { predictions: usize, labels: usize },
    #[error("need at least 2 training pairs, got {0}")]
    TooFewPairs(usize),
    #[error("fine-tuning loss became non-finite")]
    DivergedLoss,
    #[error(transparent)]
    Parse(#[from] ParseFailure),
    #[error(transparent)]
    Encode(#[from] EncodeError),
    #[error(transparent)]
    Model(#[from] ModelError),
}
