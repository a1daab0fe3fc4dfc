//! Table mode: each block's body becomes a small table and the results are
//! combined in memory with the key prepended.

use blockwise::chunker::Source;
use blockwise::engine::{BlockView, Engine, EngineConfig};
use blockwise::error::FnError;
use blockwise::table::{write_table, Column, Table, TextFormat};

fn means(view: &BlockView) -> Result<Table, FnError> {
    let mut cols = Vec::new();
    for (field, col) in view.body.fields().iter().zip(view.body.columns()) {
        let vals: Vec<f64> = (0..col.len()).filter_map(|i| col.get(i).as_f64()).collect();
        let mean = (!vals.is_empty()).then(|| vals.iter().sum::<f64>() / vals.len() as f64);
        cols.push((format!("mean_{}", field.name), Column::Real(vec![mean])));
    }
    Ok(Table::new(cols)?)
}

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let data = "site\ttemp\train\nA\t12.5\t0\nA\t14\t3\nB\t9\t12\nB\t8.5\tNA\n";
    let engine = Engine::new(EngineConfig::default())?;
    let run = engine.run_table(&Source::memory(data), means)?;
    write_table(&run.table, &mut std::io::stdout(), &TextFormat::default(), true)?;
    eprintln!("{}", run.report);
    Ok(())
}
