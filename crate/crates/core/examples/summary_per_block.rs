//! Per-block column summaries streamed to standard output.
//!
//! Usage: cargo run --example summary_per_block [FILE]

use std::io;

use blockwise::chunker::Source;
use blockwise::engine::{Engine, EngineConfig};
use blockwise::ops;

const SAMPLE: &str = "id\theight\tweight\n\
s1\t1.71\t68\n\
s1\t1.72\t70\n\
s2\t1.60\tNA\n\
s2\t1.62\t55\n\
s2\t1.61\t54\n";

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let source = match std::env::args().nth(1) {
        Some(path) => Source::from_arg(&path),
        None => Source::memory(SAMPLE),
    };
    let engine = Engine::new(EngineConfig::default())?;
    let (report, _) = engine.run_stream_to(&source, io::stdout().lock(), ops::summary_fn())?;
    eprintln!("{report}");
    Ok(())
}
