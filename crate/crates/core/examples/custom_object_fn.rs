//! Object mode: any Rust value can be computed per block and collected.
//!
//! Here each block is reduced to its row count and the largest `score`.

use blockwise::chunker::Source;
use blockwise::engine::{Engine, EngineConfig};
use blockwise::table::Table;

struct Extent {
    rows: usize,
    best: Option<i64>,
}

fn extent(block: &Table) -> Result<Extent, blockwise::error::FnError> {
    let score = block.column("score").ok_or("no score column")?;
    let best = (0..score.len())
        .filter_map(|i| score.get(i).as_f64())
        .map(|v| v as i64)
        .max();
    Ok(Extent {
        rows: block.num_rows(),
        best,
    })
}

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let data = "player,score\nann,3\nann,9\nbob,4\ncid,NA\ncid,2\ncid,8\n";
    let engine = Engine::new(EngineConfig::default())?;
    let run = engine.run_object(&Source::memory(data), extent)?;
    for o in &run.outcomes {
        match o.payload() {
            Some(e) => println!("{}: {} rows, best {:?}", o.key, e.rows, e.best),
            None => println!("{}: {}", o.key, o.error_detail().unwrap_or("")),
        }
    }
    Ok(())
}
