//! Split-apply-combine over delimited files that are too large for memory.
//!
//! A *block* is a maximal run of consecutive rows whose first field is the
//! same. The file is read in chunks that never split a block, each chunk is
//! parsed into a typed [`table::Table`], and a user function is applied to
//! every block. Results are collected in memory or streamed to output files
//! in input order, optionally with several worker threads.
//!
//! ```no_run
//! use blockwise::chunker::Source;
//! use blockwise::engine::{Engine, EngineConfig};
//!
//! let engine = Engine::new(EngineConfig { workers: 4, ..Default::default() })?;
//! let report = engine.run_stream(
//!     &Source::path("measurements.tsv"),
//!     "summary.tsv".as_ref(),
//!     blockwise::ops::summary_fn(),
//! )?;
//! eprintln!("{report}");
//! # Ok::<(), blockwise::error::Error>(())
//! ```
//!
//! Runnable examples, one per capability, live in `examples/`:
//!
//! - `summary_per_block`: streamed column summaries
//! - `custom_object_fn`: arbitrary per-block values (object mode)
//! - `table_mode_means`: per-block tables combined in memory
//! - `melt_wide_to_long`: wide to long reshaping into a file
//! - `per_block_regression`: coefficient table plus returned fits
//! - `parallel_pipeline`: worker count does not change output
//! - `gzip_input`: transparent decompression
//! - `max_blocks_preview`: stop after the first k blocks
//! - `skip_and_report`: keep going past failing blocks

pub mod bench;
pub mod chunker;
pub mod cli;
pub mod engine;
pub mod error;
mod fields;
pub mod ops;
pub mod pipeline;
pub mod table;

pub use chunker::Source;
pub use engine::{Engine, EngineConfig, ErrorPolicy};
pub use error::{Error, Result};
