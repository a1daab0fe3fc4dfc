//! Ready-made block functions.
//!
//! Each operation works on a [`BlockView`](crate::engine::BlockView) and has an
//! adaptor returning a closure with the signature the engine expects.

mod melt;
mod ols;
mod summary;

pub use melt::{melt_block, melt_fn, MeltSpec};
pub use ols::{ols_as_multi_fun, ols_block, solve_least_squares, LeastSquares, OlsResult, INTERCEPT};
pub use summary::{summarize_block, summarize_table, summary_fn};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum OpsError {
    #[error("no column named `{0}`")]
    UnknownColumn(String),
    #[error("column `{0}` is not numeric")]
    NonNumeric(String),
    #[error("regression needs at least one numeric predictor")]
    NoPredictors,
    #[error("only {n} complete rows, need at least 1")]
    InsufficientData { n: usize },
    #[error("invalid spec: {0}")]
    InvalidSpec(String),
}
