//! Data-flow-aware code representation learning at desk scale.
//!
//! The pipeline parses MiniLang source ([`frontend`]), extracts a data flow
//! graph over variable occurrences ([`dfg`]), lays code, comment and
//! variables out as one sequence with a graph-guided attention mask
//! ([`encoding`]), runs a transformer encoder ([`transformer`]), pre-trains
//! it ([`pretrain`]) and applies it to code search and clone detection
//! ([`downstream`]).

pub mod dfg;
pub mod downstream;
pub mod encoding;
pub mod frontend;
pub mod pretrain;
pub mod synth;
pub mod transformer;

pub use dfg::{build_dfg, DataFlowGraph, Role, VariableNode};
pub use encoding::{build_attention_mask, EncodedExample, Limits, MaskMatrix, MaskOptions, Vocabulary};
pub use frontend::{Ast, ParseFailure, Program, Token};
pub use pretrain::{CorpusRecord, ObjectiveFlags, PretrainConfig};
pub use transformer::{ModelConfig, ModelParams};
