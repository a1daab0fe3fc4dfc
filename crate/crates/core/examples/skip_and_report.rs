//! Under `SkipAndReport` a failing block is recorded and the run goes on.

use blockwise::chunker::Source;
use blockwise::engine::{BlockView, Engine, EngineConfig, ErrorPolicy};
use blockwise::error::FnError;
use blockwise::table::{Column, Table};

fn ratio(view: &BlockView) -> Result<Table, FnError> {
    let num = view.body.column("num").and_then(|c| c.get(0).as_f64()).ok_or("missing num")?;
    let den = view.body.column("den").and_then(|c| c.get(0).as_f64()).ok_or("missing den")?;
    if den == 0.0 {
        return Err(format!("zero denominator in block {}", view.key).into());
    }
    Ok(Table::new(vec![("ratio", Column::Real(vec![Some(num / den)]))])?)
}

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let data = "g\tnum\tden\nx\t1\t2\ny\t5\t0\nz\t9\t3\n";
    let engine = Engine::new(EngineConfig {
        error_policy: ErrorPolicy::SkipAndReport,
        ..Default::default()
    })?;
    let (report, out) = engine.run_stream_to(&Source::memory(data), Vec::new(), ratio)?;
    print!("{}", String::from_utf8(out)?);
    eprintln!("{report}");
    for f in &report.failures {
        eprintln!("  {} at line {}: {}", f.key, f.line, f.message);
    }
    Ok(())
}
