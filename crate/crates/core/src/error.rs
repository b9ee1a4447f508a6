use thiserror::Error;

/// Errors produced anywhere in the pipeline.
#[derive(Debug, Error)]
pub enum Error {
    /// A malformed input row; `row` is the 1-based data row (or line) number.
    #[error("row {row}: {message}")]
    Parse { row: usize, message: String },

    /// An invalid configuration value.
    #[error("invalid config: {0}")]
    Config(String),

    /// A problem with the comorbidity mapping table.
    #[error("mapping table: {0}")]
    Mapping(String),

    /// z-normalization is undefined because a statistic is constant over the table.
    #[error("degenerate z-normalization: {statistic} is constant across all {rules} rules")]
    DegenerateNormalization {
        statistic: &'static str,
        rules: usize,
    },

    /// Weight solving requires at least one similarity edge.
    #[error("similarity graph has no edges; weights are undefined")]
    NoEdges,

    /// An operation that needs data received none.
    #[error("empty input: {0}")]
    EmptyInput(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
