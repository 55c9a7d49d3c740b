use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("empty value/mass table")]
    EmptyTable,

    #[error("grid of {cells} cells exceeds the enumeration guard of {limit}")]
    GridTooLarge { cells: u128, limit: u128 },

    #[error("unknown {kind} `{name}`")]
    UnknownName { kind: &'static str, name: String },

    /// `line` is 1-based; 0 marks a command-line override.
    #[error("{}: {message}", config_origin(*line))]
    Config { line: usize, message: String },

    #[error("not enough usable rows to fit a slope: {usable} (need at least 3)")]
    TooFewRows { usable: usize },

    #[error("expression error: {0}")]
    Expression(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

fn config_origin(line: usize) -> String {
    if line == 0 {
        "command line".into()
    } else {
        format!("config line {line}")
    }
}
