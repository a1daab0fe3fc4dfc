//! Wide to long reshaping, streamed into a file.
//!
//! Usage: cargo run --example melt_wide_to_long [INPUT OUTPUT]

use std::path::PathBuf;

use blockwise::chunker::Source;
use blockwise::engine::{Engine, EngineConfig};
use blockwise::ops::{melt_fn, MeltSpec};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut args = std::env::args().skip(1);
    let dir = tempfile::tempdir()?;
    let (input, output) = match (args.next(), args.next()) {
        (Some(i), Some(o)) => (PathBuf::from(i), PathBuf::from(o)),
        _ => {
            let i = dir.path().join("wide.tsv");
            std::fs::write(&i, "id\tday\tq1\tq2\tq3\nu1\tmon\t1\t2\t3\nu2\tmon\t4\tNA\t6\nu2\ttue\t7\t8\t9\n")?;
            (i, dir.path().join("long.tsv"))
        }
    };
    let spec = MeltSpec {
        id_columns: vec!["day".into()],
        measure_columns: None,
    };
    let engine = Engine::new(EngineConfig::default())?;
    let report = engine.run_stream(&Source::path(&input), &output, melt_fn(spec))?;
    print!("{}", std::fs::read_to_string(&output)?);
    eprintln!("{report}");
    Ok(())
}
