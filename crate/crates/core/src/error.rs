use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("table error: {0}")]
    Table(String),

    #[error("invalid query: {0}")]
    InvalidQuery(String),

    #[error("sql syntax error at byte {pos}: {msg}")]
    SqlSyntax { pos: usize, msg: String },

    #[error("execution error: {0}")]
    Execution(String),

    #[error("nothing to parse: utterance has no symbol tokens")]
    NothingToParse,

    #[error("no valid derivation covers every symbol of the utterance")]
    NoValidTree,

    #[error("interpretation error: {0}")]
    Interpretation(String),

    #[error("vocabulary error: {0}")]
    Vocabulary(String),

    #[error("model error: {0}")]
    Model(String),

    #[error("training error: {0}")]
    Training(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}
