//! Interaction logs, session segmentation and ranking-task construction.

mod records;
mod sampling;
mod session;
mod split;
mod synthetic;
mod vocab;

pub use records::{
    detect_delimiter, parse_interactions, parse_interactions_from, write_interactions, Behavior, ColumnMap,
    InteractionRecord, ParsedLog, RejectedRow,
};
pub use sampling::sample_negatives;
pub use session::{pad_truncate, sessionize, sessionize_events, SessionizedHistory, Shape};
pub use split::{build_history, context_before, temporal_split, RankingTask, SplitConfig, SplitTasks};
pub use synthetic::{
    category_key, generate_synthetic, item_key, synthetic_category, SyntheticConfig, SyntheticDataset, UserTruth,
};
pub use vocab::{Event, Vocab, PAD};

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum DataError {
    #[error("i/o: {0}")]
    Io(String),
    #[error("required column `{0}` not found in header")]
    MissingColumn(String),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("cannot sample negatives: {0}")]
    Sampling(String),
    #[error("context has no non-empty current session")]
    EmptyContext,
}
