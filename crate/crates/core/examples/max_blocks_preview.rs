//! `max_blocks` stops reading once enough blocks have been seen, which makes
//! trying a function on the start of a huge file cheap.

use blockwise::chunker::{ChunkerConfig, Source};
use blockwise::engine::{Engine, EngineConfig};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut data = String::from("id\tv\n");
    for b in 0..10_000 {
        data.push_str(&format!("b{b}\t{b}\nb{b}\t{}\n", b + 1));
    }
    let chunker = ChunkerConfig {
        target_chunk_bytes: 4096,
        ..Default::default()
    };
    for max_blocks in [None, Some(3)] {
        let engine = Engine::new(EngineConfig {
            max_blocks,
            chunker: chunker.clone(),
            ..Default::default()
        })?;
        let run = engine.run_object(&Source::memory(data.clone()), |t| Ok(t.num_rows()))?;
        println!(
            "max_blocks={max_blocks:?}: {} blocks from {} chunks",
            run.outcomes.len(),
            run.report.chunks_read()
        );
    }
    Ok(())
}
