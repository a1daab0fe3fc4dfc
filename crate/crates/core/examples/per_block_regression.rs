//! Multi-output mode: per-block least squares writes a coefficient table and
//! returns the full fit for every block.

use blockwise::chunker::Source;
use blockwise::engine::{Engine, EngineConfig};
use blockwise::ops::ols_as_multi_fun;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut data = String::from("subject\tY\tdose\tage\n");
    for (s, slope) in [("p1", 2.0), ("p2", -0.5), ("p3", 1.25)] {
        for i in 0..6 {
            let dose = i as f64;
            let age = 30.0 + (i * i % 5) as f64;
            let y = 1.0 + slope * dose + 0.1 * age;
            data.push_str(&format!("{s}\t{y}\t{dose}\t{age}\n"));
        }
    }
    let engine = Engine::new(EngineConfig::default())?;
    let (run, outs) = engine.run_multi_to(&Source::memory(data), vec![Vec::new()], true, ols_as_multi_fun("Y"))?;
    print!("{}", String::from_utf8(outs.into_iter().next().unwrap())?);
    for o in &run.outcomes {
        if let Some(fit) = o.payload() {
            println!("{}: rss={:.3e} n={} rank={}", o.key, fit.residual_sum_squares, fit.n, fit.rank);
        }
    }
    Ok(())
}
