//! Pre-training: masked language modeling, data-flow edge prediction and
//! node-to-code alignment, a per-language sampler and the training loop.

mod corpus;
mod objectives;
mod run;
mod sampler;
mod targets;

use thiserror::Error;

use crate::encoding::EncodeError;
use crate::frontend::ParseFailure;
use crate::transformer::ModelError;

pub use corpus::{read_jsonl, write_jsonl, CorpusRecord, JsonlError};
pub use objectives::{edge_pred_loss, mlm_loss, node_align_loss, MlmObjective, PairObjective};
pub use run::{
    evaluate_pretraining, prepare_examples, pretrain_run, write_loss_log, LossRecord, ObjectiveFlags, ObjectiveKind,
    PretrainConfig, PretrainEval, PretrainOutcome, TrainingExample,
};
pub use sampler::{language_sampler, LanguageSampler, DEFAULT_ALPHA};
pub use targets::{
    mlm_target_count, sample_align_targets, sample_edge_targets, select_mlm_targets, MlmTarget, PairTargets,
    Replacement, MLM_RATE, NODE_SAMPLE_RATE,
};

#[derive(Debug, Error)]
pub enum PretrainError {
    #[error("example has no comment or code position to mask")]
    NoMaskablePositions,
    #[error("example has no data-flow nodes")]
    NoNodes,
    #[error("example has no data-flow edges")]
    NoEdges,
    #[error("language counts are empty")]
    EmptyCounts,
    #[error("language {0} has no examples")]
    ZeroCount(String),
    #[error("corpus is empty")]
    EmptyCorpus,
    #[error("masked language modeling must be enabled")]
    MlmDisabled,
    #[error("invalid training config: {0}")]
    InvalidConfig(String),
    #[error("record {record}: {source}")]
    Parse { record: usize, source: ParseFailure },
    #[error("record {record}: {source}")]
    Encode { record: usize, source: EncodeError },
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("loss became non-finite at step {step}")]
    DivergedLoss { step: usize },
}
