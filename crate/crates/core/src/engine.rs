//! Split-apply-combine over block-aligned chunks.
//!
//! Four result contracts are offered, selected by the method called:
//!
//! | method            | function receives      | result                                   |
//! |-------------------|------------------------|------------------------------------------|
//! | [`Engine::run_object`] | whole block, key column included | one arbitrary value per block |
//! | [`Engine::run_table`]  | body and key           | per-block tables, key prepended, concatenated |
//! | [`Engine::run_stream`] | body and key           | same rows, appended to a file as they are ready |
//! | [`Engine::run_multi`]  | body and key           | several streamed tables plus an optional value |
//!
//! Results never depend on the chunk size or the worker count: chunks only
//! ever hold whole blocks and the writer consumes them in input order.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Duration;

use crate::chunker::{self, ChunkStream, ChunkerConfig, RawChunk, Source};
use crate::error::{Error, FnError, Result};
use crate::fields;
use crate::pipeline::{self, Admit, PipelinePlan, PipelineStats, ReadLimit, Unlimited};
use crate::table::{self, describe_fields, Field, Schema, SchemaHints, Table, TextFormat};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ErrorPolicy {
    /// The first failing block ends the run with its error.
    #[default]
    Abort,
    /// Failing blocks are recorded and skipped.
    SkipAndReport,
}

#[derive(Debug, Clone)]
pub struct EngineConfig {
    pub workers: usize,
    /// Defaults to twice the worker count.
    pub in_flight_chunks: Option<usize>,
    pub max_blocks: Option<usize>,
    pub error_policy: ErrorPolicy,
    pub chunker: ChunkerConfig,
    pub hints: SchemaHints,
    /// Size of the prefix the schema is inferred from.
    pub schema_sample_bytes: usize,
    /// Emit a header line on streamed outputs.
    pub write_header: bool,
}

impl Default for EngineConfig {
    fn default() -> Self {
        EngineConfig {
            workers: 1,
            in_flight_chunks: None,
            max_blocks: None,
            error_policy: ErrorPolicy::Abort,
            chunker: ChunkerConfig::default(),
            hints: SchemaHints::default(),
            schema_sample_bytes: 1 << 20,
            write_header: true,
        }
    }
}

impl EngineConfig {
    pub fn validate(&self) -> Result<()> {
        if self.workers == 0 {
            return Err(Error::config("workers must be at least 1"));
        }
        if self.max_blocks == Some(0) {
            return Err(Error::config("max_blocks must be at least 1"));
        }
        self.plan().validate()?;
        self.chunker.validate()
    }

    pub fn plan(&self) -> PipelinePlan {
        let mut plan = PipelinePlan::new(self.workers);
        if let Some(n) = self.in_flight_chunks {
            plan.in_flight_chunks = n;
        }
        plan
    }
}

/// One block: its key and every column except the key.
#[derive(Debug, Clone, PartialEq)]
pub struct BlockView {
    pub key: String,
    pub key_field: Field,
    pub body: Table,
}

impl BlockView {
    pub fn row_count(&self) -> usize {
        self.body.num_rows()
    }

    /// The block with its key column reattached in first position.
    pub fn to_table(&self) -> Table {
        self.body
            .clone()
            .with_key_column(&self.key_field.name, &self.key)
    }
}

/// Splits a table into maximal runs of equal first-column values, in order.
pub fn split_blocks(t: &Table) -> Vec<BlockView> {
    if t.num_columns() == 0 || t.num_rows() == 0 {
        return Vec::new();
    }
    let keys = t.column_at(0);
    let mut views = Vec::new();
    let mut start = 0;
    for r in 1..=t.num_rows() {
        if r == t.num_rows() || keys.get(r) != keys.get(start) {
            let slice = t.slice(start, r);
            let key = keys
                .get(start)
                .render()
                .map(|k| k.into_owned())
                .unwrap_or_default();
            let (key_field, _, body) = slice.remove_column(0);
            views.push(BlockView {
                key,
                key_field,
                body,
            });
            start = r;
        }
    }
    views
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BlockFailure {
    pub key: String,
    pub line: u64,
    pub message: String,
}

/// Result for a single block.
#[derive(Debug, Clone, PartialEq)]
pub struct BlockOutcome<P> {
    pub key: String,
    pub result: std::result::Result<P, BlockFailure>,
}

impl<P> BlockOutcome<P> {
    pub fn is_ok(&self) -> bool {
        self.result.is_ok()
    }

    pub fn payload(&self) -> Option<&P> {
        self.result.as_ref().ok()
    }

    pub fn error_detail(&self) -> Option<&str> {
        self.result.as_ref().err().map(|f| f.message.as_str())
    }
}

/// Counters and timings for one run.
#[derive(Debug, Clone, Default)]
pub struct ProcessReport {
    pub blocks_processed: u64,
    pub blocks_failed: u64,
    pub rows_read: u64,
    pub rows_written: u64,
    pub failures: Vec<BlockFailure>,
    pub pipeline: PipelineStats,
}

impl ProcessReport {
    pub fn chunks_read(&self) -> u64 {
        self.pipeline.chunks_read
    }

    /// Chunker buffer peak plus the peak of raw bytes held in flight.
    pub fn buffered_bytes_high_water(&self) -> u64 {
        self.pipeline.chunker_high_water as u64 + self.pipeline.in_flight_bytes_high_water
    }

    pub fn stage_times(&self) -> [(&'static str, Duration); 4] {
        let p = &self.pipeline;
        [
            ("read", p.read_time),
            ("process", p.process_time),
            ("idle", p.worker_idle_time),
            ("write", p.write_time),
        ]
    }
}

impl std::fmt::Display for ProcessReport {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(
            f,
            "blocks processed: {}, blocks failed: {}, rows read: {}, rows written: {}",
            self.blocks_processed, self.blocks_failed, self.rows_read, self.rows_written
        )
    }
}

#[derive(Debug)]
pub struct ObjectRun<T> {
    pub outcomes: Vec<BlockOutcome<T>>,
    pub report: ProcessReport,
}

#[derive(Debug)]
pub struct TableRun {
    pub table: Table,
    pub report: ProcessReport,
}

#[derive(Debug)]
pub struct MultiRun<T> {
    /// Returned values in input order; empty when the function returns none.
    pub outcomes: Vec<BlockOutcome<T>>,
    pub report: ProcessReport,
}

/// What a multi-output function returns for one block: one table per sink,
/// then optionally a value.
#[derive(Debug, Clone, PartialEq)]
pub struct MultiOutput<T> {
    pub tables: Vec<Table>,
    pub value: Option<T>,
}

impl<T> MultiOutput<T> {
    pub fn new(tables: Vec<Table>, value: Option<T>) -> Self {
        MultiOutput { tables, value }
    }
}

/// Shape of a multi-output function's result.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MultiSpec {
    pub outputs: usize,
    pub has_return: bool,
}

/// An opened input: chunk stream positioned after the header, plus schema.
pub struct Prepared {
    pub stream: ChunkStream,
    /// `None` for empty input with no user-supplied schema.
    pub schema: Option<Schema>,
    pub header_line: Option<Vec<u8>>,
}

/// Opens `source`, infers the schema from a prefix sample and consumes the
/// header line when one is present.
pub fn prepare(source: &Source, cfg: &EngineConfig) -> Result<Prepared> {
    let mut stream = chunker::open_source(source, cfg.chunker.clone())?;
    let first_line = cfg.chunker.skip_lines as u64 + 1;
    let sample = stream.peek_sample(cfg.schema_sample_bytes.max(1))?;
    let mut hints = cfg.hints.clone();
    hints.keyed = true;
    hints.terminator = Some(cfg.chunker.record_terminator);
    hints.first_line = Some(first_line);
    let schema = if sample.is_empty() {
        match &hints.fields {
            Some(fields) => {
                let s = Schema {
                    fields: fields.clone(),
                    header_present: hints.header.unwrap_or(false),
                    format: TextFormat {
                        delimiter: hints.delimiter.unwrap_or(cfg.chunker.field_delimiter),
                        terminator: cfg.chunker.record_terminator,
                        na_tokens: hints
                            .na_tokens
                            .clone()
                            .unwrap_or_else(|| TextFormat::default().na_tokens),
                    },
                    keyed: true,
                };
                s.validate()?;
                Some(s)
            }
            None => None,
        }
    } else {
        Some(table::infer_schema(sample, &hints)?)
    };
    let mut header_line = None;
    if let Some(s) = &schema {
        stream.set_field_delimiter(s.delimiter())?;
        if s.header_present {
            header_line = stream.take_line()?;
        }
    }
    Ok(Prepared {
        stream,
        schema,
        header_line,
    })
}

/// Stops reading once `remaining` blocks have been dispatched.
struct BlockLimit {
    remaining: usize,
    delimiter: u8,
}

impl ReadLimit for BlockLimit {
    fn admit(&mut self, chunk: &mut RawChunk) -> Admit {
        chunk.truncate_blocks(self.remaining, self.delimiter);
        self.remaining -= chunk.block_count();
        if self.remaining == 0 {
            Admit::Last
        } else {
            Admit::Continue
        }
    }
}

enum Limit {
    None(Unlimited),
    Blocks(BlockLimit),
}

impl ReadLimit for Limit {
    fn admit(&mut self, chunk: &mut RawChunk) -> Admit {
        match self {
            Limit::None(u) => u.admit(chunk),
            Limit::Blocks(b) => b.admit(chunk),
        }
    }
}

/// Per-block failure before the function ran, or from the function itself.
struct Failure {
    key: String,
    line: u64,
    error: Error,
}

/// Results of one chunk, in block order.
struct Bundle<P> {
    blocks: Vec<(String, u64, std::result::Result<P, Failure>)>,
    rows: u64,
}

fn raw_key(block: &[u8], schema: &Schema) -> String {
    let line = fields::trim_record(block, schema.format.terminator);
    fields::first_field(line, schema.delimiter())
        .map(|k| String::from_utf8_lossy(&k).into_owned())
        .unwrap_or_default()
}

/// Parses a chunk into blocks. Under skip-and-report a parse failure is
/// narrowed down to the blocks that caused it.
fn chunk_blocks(
    chunk: &RawChunk,
    schema: &Schema,
    policy: ErrorPolicy,
) -> Result<Vec<(u64, std::result::Result<BlockView, Failure>)>> {
    match table::parse_chunk(chunk, schema) {
        Ok(t) => {
            let views = split_blocks(&t);
            debug_assert_eq!(views.len(), chunk.block_count());
            Ok(views
                .into_iter()
                .enumerate()
                .map(|(i, v)| (chunk.block_lines.get(i).copied().unwrap_or(0), Ok(v)))
                .collect())
        }
        Err(e) if policy == ErrorPolicy::Abort => Err(e),
        Err(_) => Ok((0..chunk.block_count())
            .map(|i| {
                let bytes = chunk.block_bytes(i);
                let line = chunk.block_lines[i];
                let parsed = table::parse_records(bytes, line, schema)
                    .map(|t| split_blocks(&t).pop().expect("block has rows"));
                (
                    line,
                    parsed.map_err(|error| Failure {
                        key: raw_key(bytes, schema),
                        line,
                        error,
                    }),
                )
            })
            .collect()),
    }
}

impl Engine {
    fn drive<P, F, C>(&self, prepared: Prepared, apply: F, mut collect: C) -> Result<ProcessReport>
    where
        P: Send,
        F: Fn(&BlockView) -> std::result::Result<P, Error> + Sync,
        C: FnMut(&str, std::result::Result<P, BlockFailure>) -> Result<()>,
    {
        let Some(schema) = prepared.schema else {
            return Ok(ProcessReport::default());
        };
        let policy = self.cfg.error_policy;
        let limit = match self.cfg.max_blocks {
            Some(k) => Limit::Blocks(BlockLimit {
                remaining: k,
                delimiter: schema.delimiter(),
            }),
            None => Limit::None(Unlimited),
        };
        let mut report = ProcessReport::default();
        let schema_ref = &schema;
        let process = |chunk: RawChunk| -> Result<Bundle<P>> {
            let mut rows = 0;
            let blocks = chunk_blocks(&chunk, schema_ref, policy)?
                .into_iter()
                .map(|(line, parsed)| match parsed {
                    Ok(view) => {
                        rows += view.row_count() as u64;
                        let key = view.key.clone();
                        let res = apply(&view).map_err(|error| Failure {
                            key: key.clone(),
                            line,
                            error,
                        });
                        (key, line, res)
                    }
                    Err(f) => (f.key.clone(), line, Err(f)),
                })
                .collect();
            Ok(Bundle { blocks, rows })
        };
        let consume = |bundle: Bundle<P>| -> Result<()> {
            report.rows_read += bundle.rows;
            for (key, _line, res) in bundle.blocks {
                report.blocks_processed += 1;
                match res {
                    Ok(p) => collect(&key, Ok(p))?,
                    Err(f) if policy == ErrorPolicy::Abort => return Err(f.error),
                    Err(f) => {
                        let failure = BlockFailure {
                            key: f.key,
                            line: f.line,
                            message: f.error.to_string(),
                        };
                        report.blocks_failed += 1;
                        report.failures.push(failure.clone());
                        collect(&key, Err(failure))?;
                    }
                }
            }
            Ok(())
        };
        let stats =
            pipeline::run_pipelined(prepared.stream, self.cfg.plan(), limit, process, consume)?;
        report.pipeline = stats;
        Ok(report)
    }
}

/// First successful result fixes the output columns of a sink. A 0-row
/// result only provisionally sets them.
#[derive(Debug, Default)]
struct ShapeGuard {
    fixed: Option<Vec<Field>>,
    provisional: Option<Vec<Field>>,
}

impl ShapeGuard {
    /// Whether `t` contributes rows; errors on a column mismatch.
    fn check(&mut self, key: &str, t: &Table) -> Result<bool> {
        if t.num_rows() == 0 {
            if self.fixed.is_none() && self.provisional.is_none() {
                self.provisional = Some(t.fields().to_vec());
            }
            return Ok(false);
        }
        match &self.fixed {
            None => {
                self.fixed = Some(t.fields().to_vec());
                Ok(true)
            }
            Some(f) if f.as_slice() == t.fields() => Ok(true),
            Some(f) => Err(Error::SchemaMismatch {
                key: key.to_string(),
                expected: describe_fields(f),
                found: describe_fields(t.fields()),
            }),
        }
    }

    fn fields(&self) -> Option<&[Field]> {
        self.fixed.as_deref().or(self.provisional.as_deref())
    }
}

/// Appends per-block tables to one writer.
struct StreamSink<W: Write> {
    out: W,
    guard: ShapeGuard,
    format: TextFormat,
    write_header: bool,
    header_done: bool,
    rows: u64,
}

impl<W: Write> StreamSink<W> {
    fn new(out: W, format: TextFormat, write_header: bool) -> Self {
        StreamSink {
            out,
            guard: ShapeGuard::default(),
            format,
            write_header,
            header_done: false,
            rows: 0,
        }
    }

    fn push(&mut self, key: &str, t: &Table) -> Result<()> {
        if !self.guard.check(key, t)? {
            return Ok(());
        }
        let header = self.write_header && !self.header_done;
        table::write_table(t, &mut self.out, &self.format, header)?;
        self.header_done = true;
        self.rows += t.num_rows() as u64;
        Ok(())
    }

    /// Writes a lone header when no rows were produced.
    fn finish(mut self) -> Result<(W, u64)> {
        if self.write_header && !self.header_done {
            if let Some(fields) = self.guard.fields() {
                table::write_table(&Table::empty(fields), &mut self.out, &self.format, true)?;
            }
        }
        self.out.flush()?;
        Ok((self.out, self.rows))
    }
}

fn partial_path(path: &Path) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".partial");
    PathBuf::from(s)
}

fn create_partial(path: &Path) -> Result<BufWriter<File>> {
    let p = partial_path(path);
    let f = File::create(&p).map_err(|source| Error::Open { path: p, source })?;
    Ok(BufWriter::new(f))
}

fn commit_partial(path: &Path) -> Result<()> {
    fs::rename(partial_path(path), path)?;
    Ok(())
}

fn block_error(key: &str, e: FnError) -> Error {
    Error::Block {
        key: key.to_string(),
        source: e,
    }
}

/// Output format for tables derived from the input.
fn output_format(p: &Prepared, cfg: &EngineConfig) -> TextFormat {
    p.schema.as_ref().map(|s| s.format.clone()).unwrap_or_else(|| TextFormat {
        delimiter: cfg.hints.delimiter.unwrap_or(cfg.chunker.field_delimiter),
        terminator: cfg.chunker.record_terminator,
        na_tokens: cfg
            .hints
            .na_tokens
            .clone()
            .unwrap_or_else(|| TextFormat::default().na_tokens),
    })
}

/// Runs block functions over a file under one configuration.
#[derive(Debug, Clone, Default)]
pub struct Engine {
    cfg: EngineConfig,
}

impl Engine {
    pub fn new(cfg: EngineConfig) -> Result<Self> {
        cfg.validate()?;
        Ok(Engine { cfg })
    }

    pub fn config(&self) -> &EngineConfig {
        &self.cfg
    }

    /// Applies `f` to every block (key column included) and collects the
    /// values in input order.
    pub fn run_object<T, F>(&self, source: &Source, f: F) -> Result<ObjectRun<T>>
    where
        T: Send,
        F: Fn(&Table) -> std::result::Result<T, FnError> + Sync,
    {
        let mut outcomes = Vec::new();
        let report = self.drive(
            prepare(source, &self.cfg)?,
            |v| f(&v.to_table()).map_err(|e| block_error(&v.key, e)),
            |key, result| {
                outcomes.push(BlockOutcome {
                    key: key.to_string(),
                    result,
                });
                Ok(())
            },
        )?;
        Ok(ObjectRun { outcomes, report })
    }

    /// Applies `f` to each block's body and concatenates the results with the
    /// key prepended as the first column.
    pub fn run_table<F>(&self, source: &Source, f: F) -> Result<TableRun>
    where
        F: Fn(&BlockView) -> std::result::Result<Table, FnError> + Sync,
    {
        let mut guard = ShapeGuard::default();
        let mut parts = Vec::new();
        let mut report = self.drive(
            prepare(source, &self.cfg)?,
            |v| keyed_result(v, f(v)),
            |key, result| {
                if let Ok(t) = result {
                    if guard.check(key, &t)? {
                        parts.push(t);
                    }
                }
                Ok(())
            },
        )?;
        let fields = guard.fields().map(<[Field]>::to_vec).unwrap_or_default();
        let table = Table::concat(&fields, &parts)?;
        report.rows_written = table.num_rows() as u64;
        Ok(TableRun { table, report })
    }

    /// Like [`Engine::run_table`], but appends each block's rows to `out` as
    /// soon as they are ready. Output goes to `out.partial` and is renamed to
    /// `out` only on success.
    pub fn run_stream<F>(&self, source: &Source, out: &Path, f: F) -> Result<ProcessReport>
    where
        F: Fn(&BlockView) -> std::result::Result<Table, FnError> + Sync,
    {
        let writer = create_partial(out)?;
        let (report, _) = self.run_stream_to(source, writer, f)?;
        commit_partial(out)?;
        Ok(report)
    }

    /// Streaming mode into any writer.
    pub fn run_stream_to<W, F>(&self, source: &Source, out: W, f: F) -> Result<(ProcessReport, W)>
    where
        W: Write,
        F: Fn(&BlockView) -> std::result::Result<Table, FnError> + Sync,
    {
        let prepared = prepare(source, &self.cfg)?;
        let format = output_format(&prepared, &self.cfg);
        let mut sink = StreamSink::new(out, format, self.cfg.write_header);
        let mut report = self.drive(
            prepared,
            |v| keyed_result(v, f(v)),
            |key, result| match result {
                Ok(t) => sink.push(key, &t),
                Err(_) => Ok(()),
            },
        )?;
        let (out, rows) = sink.finish()?;
        report.rows_written = rows;
        Ok((report, out))
    }

    /// Streams the first `outs.len()` tables of each result to the matching
    /// output and collects the trailing value when `has_return` is set.
    pub fn run_multi<T, F>(
        &self,
        source: &Source,
        outs: &[PathBuf],
        has_return: bool,
        f: F,
    ) -> Result<MultiRun<T>>
    where
        T: Send,
        F: Fn(&BlockView) -> std::result::Result<MultiOutput<T>, FnError> + Sync,
    {
        let writers = outs
            .iter()
            .map(|p| create_partial(p))
            .collect::<Result<Vec<_>>>()?;
        let run = self.run_multi_to(source, writers, has_return, f)?;
        for p in outs {
            commit_partial(p)?;
        }
        Ok(run.0)
    }

    /// Multi-output mode into arbitrary writers.
    pub fn run_multi_to<T, F, W>(
        &self,
        source: &Source,
        outs: Vec<W>,
        has_return: bool,
        f: F,
    ) -> Result<(MultiRun<T>, Vec<W>)>
    where
        T: Send,
        W: Write,
        F: Fn(&BlockView) -> std::result::Result<MultiOutput<T>, FnError> + Sync,
    {
        let spec = MultiSpec {
            outputs: outs.len(),
            has_return,
        };
        let prepared = prepare(source, &self.cfg)?;
        let format = output_format(&prepared, &self.cfg);
        let mut sinks: Vec<_> = outs
            .into_iter()
            .map(|w| StreamSink::new(w, format.clone(), self.cfg.write_header))
            .collect();
        let mut outcomes = Vec::new();
        let mut report = self.drive(
            prepared,
            |v| {
                let out = f(v).map_err(|e| block_error(&v.key, e))?;
                check_multi(&v.key, &out, spec)?;
                let tables = out
                    .tables
                    .into_iter()
                    .map(|t| t.with_key_column(&v.key_field.name, &v.key))
                    .collect::<Vec<_>>();
                Ok((tables, out.value))
            },
            |key, result| {
                match result {
                    Ok((tables, value)) => {
                        for (sink, t) in sinks.iter_mut().zip(&tables) {
                            sink.push(key, t)?;
                        }
                        if let Some(value) = value {
                            outcomes.push(BlockOutcome {
                                key: key.to_string(),
                                result: Ok(value),
                            });
                        }
                    }
                    Err(failure) if spec.has_return => outcomes.push(BlockOutcome {
                        key: key.to_string(),
                        result: Err(failure),
                    }),
                    Err(_) => {}
                }
                Ok(())
            },
        )?;
        let mut writers = Vec::with_capacity(sinks.len());
        for sink in sinks {
            let (w, rows) = sink.finish()?;
            report.rows_written += rows;
            writers.push(w);
        }
        Ok((MultiRun { outcomes, report }, writers))
    }
}

fn keyed_result(
    v: &BlockView,
    r: std::result::Result<Table, FnError>,
) -> std::result::Result<Table, Error> {
    r.map(|t| t.with_key_column(&v.key_field.name, &v.key))
        .map_err(|e| block_error(&v.key, e))
}

fn check_multi<T>(key: &str, out: &MultiOutput<T>, spec: MultiSpec) -> Result<()> {
    if out.tables.len() != spec.outputs {
        return Err(Error::Contract {
            key: key.to_string(),
            reason: format!(
                "function returned {} tables for {} outputs",
                out.tables.len(),
                spec.outputs
            ),
        });
    }
    if out.value.is_some() != spec.has_return {
        return Err(Error::Contract {
            key: key.to_string(),
            reason: if spec.has_return {
                "function returned no value".into()
            } else {
                "function returned a value but none was expected".into()
            },
        });
    }
    Ok(())
}
