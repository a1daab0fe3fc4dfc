//! Throughput benchmark on a generated grouped file.
//!
//! The generator writes a tab-separated file with a header, a text key and
//! alternating integer and real columns, in blocks of 1 to 20 rows. With the
//! default shape (253 316 lines, 6 columns) the file is about 9.2 MB.
//!
//! Two stages are timed: parse only (chunking plus table parsing) and the
//! full pipeline (identity function streamed to a null sink). Each repeat of
//! the parse stage also digests the parsed tables so runs can be checked for
//! identical output.

use std::collections::hash_map::DefaultHasher;
use std::fmt;
use std::fs::File;
use std::hash::Hasher;
use std::io::{self, BufWriter, Write};
use std::path::Path;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::chunker::Source;
use crate::engine::{self, Engine, EngineConfig};
use crate::error::Result;
use crate::table;

#[derive(Debug, Clone)]
pub struct BenchConfig {
    pub lines: usize,
    pub cols: usize,
    pub repeats: usize,
    pub seed: u64,
    pub workers: usize,
    pub chunk_bytes: usize,
}

impl Default for BenchConfig {
    fn default() -> Self {
        BenchConfig {
            lines: 253_316,
            cols: 6,
            repeats: 5,
            seed: 1,
            workers: 1,
            chunk_bytes: 1 << 20,
        }
    }
}

/// Writes `lines` data rows (plus a header) and returns the file size.
pub fn generate_grouped_file(path: &Path, lines: usize, cols: usize, seed: u64) -> io::Result<u64> {
    let cols = cols.max(1);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = BufWriter::new(File::create(path)?);
    let mut written = 0u64;
    if lines > 0 {
        let mut header = String::from("id");
        for c in 1..cols {
            header.push_str(&format!("\tv{c}"));
        }
        header.push('\n');
        out.write_all(header.as_bytes())?;
        written += header.len() as u64;
    }
    let mut block = 0u64;
    let mut left_in_block = 0u32;
    let mut line = String::with_capacity(64);
    for _ in 0..lines {
        if left_in_block == 0 {
            block += 1;
            left_in_block = rng.gen_range(1..=20);
        }
        left_in_block -= 1;
        line.clear();
        line.push_str(&format!("g{block:07}"));
        for c in 1..cols {
            let v = match c % 4 {
                1 | 3 => rng.gen_range(0..10_000).to_string(),
                2 => format!("{:.2}", rng.gen_range(0.0..100.0)),
                _ => format!("{:.3}", rng.gen_range(0.0..100.0)),
            };
            line.push('\t');
            line.push_str(&v);
        }
        line.push('\n');
        out.write_all(line.as_bytes())?;
        written += line.len() as u64;
    }
    out.flush()?;
    Ok(written)
}

#[derive(Debug, Clone)]
pub struct StageTiming {
    pub name: &'static str,
    pub bytes: u64,
    pub runs: Vec<Duration>,
}

impl StageTiming {
    pub fn median(&self) -> Duration {
        let mut r = self.runs.clone();
        r.sort();
        r.get(r.len() / 2).copied().unwrap_or_default()
    }

    pub fn mb_per_sec(&self) -> f64 {
        let secs = self.median().as_secs_f64();
        if secs == 0.0 {
            0.0
        } else {
            self.bytes as f64 / 1e6 / secs
        }
    }
}

#[derive(Debug, Clone)]
pub struct BenchReport {
    pub lines: usize,
    pub file_bytes: u64,
    pub rows_parsed: u64,
    pub stages: Vec<StageTiming>,
    /// Digest of the parsed tables, one per parse repeat.
    pub parse_digests: Vec<u64>,
}

impl BenchReport {
    pub fn deterministic(&self) -> bool {
        self.parse_digests.windows(2).all(|w| w[0] == w[1])
    }

    pub fn stage(&self, name: &str) -> Option<&StageTiming> {
        self.stages.iter().find(|s| s.name == name)
    }
}

impl fmt::Display for BenchReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(
            f,
            "input: {} lines, {:.2} MB, {} rows parsed",
            self.lines,
            self.file_bytes as f64 / 1e6,
            self.rows_parsed
        )?;
        writeln!(f, "{:<10} {:>8} {:>12} {:>12} {:>10}", "stage", "repeats", "median ms", "min ms", "MB/s")?;
        for s in &self.stages {
            let min = s.runs.iter().min().copied().unwrap_or_default();
            writeln!(
                f,
                "{:<10} {:>8} {:>12.2} {:>12.2} {:>10.1}",
                s.name,
                s.runs.len(),
                s.median().as_secs_f64() * 1e3,
                min.as_secs_f64() * 1e3,
                s.mb_per_sec()
            )?;
        }
        write!(
            f,
            "parsed output identical across repeats: {}",
            if self.deterministic() { "yes" } else { "NO" }
        )
    }
}

struct HashWriter(DefaultHasher);

impl Write for HashWriter {
    fn write(&mut self, buf: &[u8]) -> io::Result<usize> {
        self.0.write(buf);
        Ok(buf.len())
    }

    fn flush(&mut self) -> io::Result<()> {
        Ok(())
    }
}

/// Parses `path` once; returns elapsed parse time, rows and a digest.
fn parse_pass(path: &Path, cfg: &EngineConfig) -> Result<(Duration, u64, u64)> {
    let mut prepared = engine::prepare(&Source::path(path), cfg)?;
    let mut digest = HashWriter(DefaultHasher::new());
    let mut rows = 0u64;
    let mut elapsed = Duration::ZERO;
    let Some(schema) = prepared.schema.take() else {
        return Ok((elapsed, 0, digest.0.finish()));
    };
    loop {
        let t = Instant::now();
        let Some(chunk) = prepared.stream.next_chunk()? else { break };
        let parsed = table::parse_chunk(&chunk, &schema)?;
        elapsed += t.elapsed();
        rows += parsed.num_rows() as u64;
        table::write_table(&parsed, &mut digest, &schema.format, false)?;
    }
    Ok((elapsed, rows, digest.0.finish()))
}

/// Runs the benchmark in a temporary directory.
pub fn run_bench(cfg: &BenchConfig) -> Result<BenchReport> {
    let dir = tempfile::tempdir()?;
    let path = dir.path().join("bench.tsv");
    let file_bytes = generate_grouped_file(&path, cfg.lines, cfg.cols, cfg.seed)?;
    let engine_cfg = EngineConfig {
        workers: cfg.workers,
        chunker: crate::chunker::ChunkerConfig {
            target_chunk_bytes: cfg.chunk_bytes,
            ..Default::default()
        },
        ..Default::default()
    };
    let repeats = cfg.repeats.max(1);

    let mut parse = StageTiming {
        name: "parse",
        bytes: file_bytes,
        runs: Vec::new(),
    };
    let mut digests = Vec::new();
    let mut rows_parsed = 0;
    for _ in 0..repeats {
        let (t, rows, d) = parse_pass(&path, &engine_cfg)?;
        parse.runs.push(t);
        digests.push(d);
        rows_parsed = rows;
    }

    let engine = Engine::new(engine_cfg)?;
    let mut full = StageTiming {
        name: "pipeline",
        bytes: file_bytes,
        runs: Vec::new(),
    };
    for _ in 0..repeats {
        let t = Instant::now();
        engine.run_stream_to(&Source::path(&path), io::sink(), |v| Ok(v.body.clone()))?;
        full.runs.push(t.elapsed());
    }

    Ok(BenchReport {
        lines: cfg.lines,
        file_bytes,
        rows_parsed,
        stages: vec![parse, full],
        parse_digests: digests,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_lines_reports_zeros() {
        let r = run_bench(&BenchConfig {
            lines: 0,
            repeats: 2,
            ..Default::default()
        })
        .unwrap();
        assert_eq!((r.file_bytes, r.rows_parsed), (0, 0));
        assert!(r.deterministic());
        assert!(r.to_string().contains("parse"));
    }

    #[test]
    fn small_run_is_deterministic() {
        let r = run_bench(&BenchConfig {
            lines: 2_000,
            repeats: 3,
            chunk_bytes: 4096,
            ..Default::default()
        })
        .unwrap();
        assert_eq!(r.rows_parsed, 2_000);
        assert!(r.deterministic());
    }
}
