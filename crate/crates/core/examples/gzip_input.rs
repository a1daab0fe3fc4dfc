//! Gzip input is detected from the magic bytes and decoded on the fly.

use std::io::Write;

use blockwise::chunker::Source;
use blockwise::engine::{Engine, EngineConfig};
use blockwise::ops;
use flate2::write::GzEncoder;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let plain = "id\tx\na\t1\na\t2\nb\t10\n";
    let mut gz = GzEncoder::new(Vec::new(), flate2::Compression::default());
    gz.write_all(plain.as_bytes())?;
    let compressed = gz.finish()?;

    let engine = Engine::new(EngineConfig::default())?;
    let (_, from_plain) = engine.run_stream_to(&Source::memory(plain), Vec::new(), ops::summary_fn())?;
    let (_, from_gz) = engine.run_stream_to(&Source::memory(compressed), Vec::new(), ops::summary_fn())?;
    assert_eq!(from_plain, from_gz);
    print!("{}", String::from_utf8(from_gz)?);
    Ok(())
}
