//! Several workers process chunks concurrently; output order and bytes do
//! not depend on the worker count.

use std::time::Duration;

use blockwise::chunker::{ChunkerConfig, Source};
use blockwise::engine::{BlockView, Engine, EngineConfig};
use blockwise::error::FnError;
use blockwise::table::Table;

fn slow_identity(view: &BlockView) -> Result<Table, FnError> {
    std::thread::sleep(Duration::from_micros(200 * (view.key.len() as u64 % 7)));
    Ok(view.body.clone())
}

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut data = String::from("key\tv\n");
    for b in 0..300 {
        for r in 0..(b % 5 + 1) {
            data.push_str(&format!("k{b:x}\t{}\n", b * 10 + r));
        }
    }
    let mut outputs = Vec::new();
    for workers in [1, 2, 4] {
        let engine = Engine::new(EngineConfig {
            workers,
            chunker: ChunkerConfig {
                target_chunk_bytes: 256,
                ..Default::default()
            },
            ..Default::default()
        })?;
        let (report, out) = engine.run_stream_to(&Source::memory(data.clone()), Vec::new(), slow_identity)?;
        println!(
            "workers={workers}: {} chunks, {} bytes out, max {} chunks in flight",
            report.chunks_read(),
            out.len(),
            report.pipeline.in_flight_high_water
        );
        outputs.push(out);
    }
    assert!(outputs.windows(2).all(|w| w[0] == w[1]));
    println!("outputs identical");
    Ok(())
}
