//! The `blockwise` command line.
//!
//! `run` parses arguments, dispatches to a subcommand and returns the
//! process exit code: 0 on success, 1 on a fatal error, 2 when blocks were
//! skipped under `--errors skip`.

use std::collections::HashMap;
use std::fs::File;
use std::io::{self, BufWriter, Read, Write};
use std::path::{Path, PathBuf};
use std::process::{Command, Stdio};

use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::bench::{self, BenchConfig};
use crate::chunker::{ChunkerConfig, Compression, Source};
use crate::engine::{self, BlockView, Engine, EngineConfig, ErrorPolicy, ProcessReport};
use crate::error::{Error, FnError, Result};
use crate::fields;
use crate::ops::{self, MeltSpec};
use crate::table::{self, ColumnType, Field, SchemaHints, Table, TextFormat};

#[derive(Debug, Parser)]
#[command(name = "blockwise", version, about = "Apply a function to each block of a grouped delimited file")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Cmd,
}

#[derive(Debug, Subcommand)]
pub enum Cmd {
    /// Per-block column summaries.
    Summary {
        #[command(flatten)]
        engine: EngineArgs,
        input: String,
        /// Defaults to standard output.
        output: Option<String>,
    },
    /// Wide to long reshaping of every block.
    Melt {
        #[command(flatten)]
        engine: EngineArgs,
        /// Comma-separated id columns; empty for none.
        #[arg(long, default_value = "")]
        id_cols: String,
        /// Comma-separated measure columns; defaults to all non-id columns.
        #[arg(long)]
        measure_cols: Option<String>,
        input: String,
        output: Option<String>,
    },
    /// Per-block least squares of one column on all others.
    Regress {
        #[command(flatten)]
        engine: EngineArgs,
        #[arg(long)]
        response: String,
        /// JSON-lines file with one fit record per block.
        #[arg(long)]
        fits: Option<PathBuf>,
        input: String,
        /// Coefficient table; defaults to standard output.
        output: Option<String>,
    },
    /// Pipe every block through a shell command.
    Exec {
        #[command(flatten)]
        engine: EngineArgs,
        /// Send blocks to the child without a header line.
        #[arg(long)]
        no_child_header: bool,
        input: String,
        output: String,
        /// Command run by `sh -c`; BLOCK_KEY holds the block key.
        #[arg(required = true, last = true)]
        command: Vec<String>,
    },
    /// Copy the first k blocks verbatim.
    Head {
        #[command(flatten)]
        engine: EngineArgs,
        #[arg(long, default_value_t = 10)]
        blocks: usize,
        input: String,
        output: Option<String>,
    },
    /// Report keys whose rows are not adjacent.
    Lint {
        #[command(flatten)]
        engine: EngineArgs,
        input: String,
    },
    /// Parse and pipeline throughput on a generated file.
    Bench {
        #[arg(long, default_value_t = 253_316)]
        lines: usize,
        #[arg(long, default_value_t = 6)]
        cols: usize,
        #[arg(long, default_value_t = 5)]
        repeats: usize,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[arg(long, default_value_t = 1)]
        workers: usize,
        #[arg(long, default_value_t = 1 << 20)]
        chunk_bytes: usize,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum HeaderArg {
    Auto,
    Yes,
    No,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ErrorsArg {
    Abort,
    Skip,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum CompressionArg {
    Auto,
    None,
    Gzip,
}

#[derive(Debug, Clone, Args)]
pub struct EngineArgs {
    #[arg(long, default_value_t = 1)]
    pub workers: usize,
    #[arg(long, default_value_t = 1 << 20)]
    pub chunk_bytes: usize,
    #[arg(long)]
    pub max_blocks: Option<usize>,
    /// Field separator: a single character, or tab, comma, semicolon, pipe.
    #[arg(long)]
    pub sep: Option<String>,
    #[arg(long, value_enum, default_value_t = HeaderArg::Auto)]
    pub header: HeaderArg,
    /// Column list as name:type pairs, e.g. id:text,x:integer.
    #[arg(long)]
    pub schema: Option<String>,
    #[arg(long, value_enum, default_value_t = ErrorsArg::Abort)]
    pub errors: ErrorsArg,
    #[arg(long, value_enum, default_value_t = CompressionArg::Auto)]
    pub compression: CompressionArg,
    /// Lines skipped before the header or first record.
    #[arg(long, default_value_t = 0)]
    pub skip_lines: usize,
    /// Comma-separated null tokens.
    #[arg(long)]
    pub na: Option<String>,
}

fn parse_sep(s: &str) -> Result<u8> {
    match s {
        "tab" | "\\t" | "\t" => Ok(b'\t'),
        "comma" => Ok(b','),
        "semicolon" => Ok(b';'),
        "pipe" => Ok(b'|'),
        "space" => Ok(b' '),
        _ if s.len() == 1 => Ok(s.as_bytes()[0]),
        _ => Err(Error::Config(format!("invalid separator `{s}`"))),
    }
}

fn parse_schema(s: &str) -> Result<Vec<Field>> {
    s.split(',')
        .map(|part| {
            let (name, ty) = part
                .split_once(':')
                .ok_or_else(|| Error::Config(format!("schema entry `{part}` is not name:type")))?;
            let ty: ColumnType = ty
                .trim()
                .parse()
                .map_err(|_| Error::Config(format!("unknown column type `{ty}`")))?;
            Ok(Field::new(name.trim(), ty))
        })
        .collect()
}

fn split_list(s: &str) -> Vec<String> {
    s.split(',')
        .map(str::trim)
        .filter(|x| !x.is_empty())
        .map(String::from)
        .collect()
}

impl EngineArgs {
    pub fn to_config(&self) -> Result<EngineConfig> {
        let delimiter = self.sep.as_deref().map(parse_sep).transpose()?;
        let fields = self.schema.as_deref().map(parse_schema).transpose()?;
        let cfg = EngineConfig {
            workers: self.workers,
            max_blocks: self.max_blocks,
            error_policy: match self.errors {
                ErrorsArg::Abort => ErrorPolicy::Abort,
                ErrorsArg::Skip => ErrorPolicy::SkipAndReport,
            },
            chunker: ChunkerConfig {
                target_chunk_bytes: self.chunk_bytes,
                field_delimiter: delimiter.unwrap_or(b'\t'),
                skip_lines: self.skip_lines,
                compression: match self.compression {
                    CompressionArg::Auto => Compression::Auto,
                    CompressionArg::None => Compression::None,
                    CompressionArg::Gzip => Compression::Gzip,
                },
                ..Default::default()
            },
            hints: SchemaHints {
                delimiter,
                header: match self.header {
                    HeaderArg::Auto => None,
                    HeaderArg::Yes => Some(true),
                    HeaderArg::No => Some(false),
                },
                fields,
                na_tokens: self.na.as_deref().map(|s| s.split(',').map(String::from).collect()),
                ..Default::default()
            },
            ..Default::default()
        };
        cfg.validate()?;
        Ok(cfg)
    }
}

/// Parses `args` (program name first) and runs the subcommand.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 1 } else { 0 };
        }
    };
    match execute(cli.command) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("blockwise: {e}");
            1
        }
    }
}

fn open_output(path: Option<&str>) -> Result<Box<dyn Write>> {
    match path {
        None | Some("-") => Ok(Box::new(BufWriter::new(io::stdout().lock()))),
        Some(p) => {
            let f = File::create(p).map_err(|e| Error::Open {
                path: p.into(),
                source: e,
            })?;
            Ok(Box::new(BufWriter::new(f)))
        }
    }
}

fn is_stdout(path: Option<&str>) -> bool {
    matches!(path, None | Some("-"))
}

fn finish(report: &ProcessReport) -> i32 {
    eprintln!("{report}");
    for f in &report.failures {
        eprintln!("skipped block `{}` (line {}): {}", f.key, f.line, f.message);
    }
    if report.blocks_failed > 0 {
        2
    } else {
        0
    }
}

/// Streams into a file through `.partial`, or straight to standard output.
fn stream<F>(engine: &Engine, input: &str, out: Option<&str>, f: F) -> Result<ProcessReport>
where
    F: Fn(&BlockView) -> std::result::Result<Table, FnError> + Sync,
{
    let source = Source::from_arg(input);
    if is_stdout(out) {
        let (report, mut w) = engine.run_stream_to(&source, open_output(None)?, f)?;
        w.flush()?;
        Ok(report)
    } else {
        engine.run_stream(&source, Path::new(out.unwrap()), f)
    }
}

fn execute(cmd: Cmd) -> Result<i32> {
    match cmd {
        Cmd::Summary { engine, input, output } => {
            let engine = Engine::new(engine.to_config()?)?;
            let report = stream(&engine, &input, output.as_deref(), ops::summary_fn())?;
            Ok(finish(&report))
        }
        Cmd::Melt {
            engine,
            id_cols,
            measure_cols,
            input,
            output,
        } => {
            let engine = Engine::new(engine.to_config()?)?;
            let spec = MeltSpec {
                id_columns: split_list(&id_cols),
                measure_columns: measure_cols.as_deref().map(split_list),
            };
            let report = stream(&engine, &input, output.as_deref(), ops::melt_fn(spec))?;
            Ok(finish(&report))
        }
        Cmd::Regress {
            engine,
            response,
            fits,
            input,
            output,
        } => {
            let engine = Engine::new(engine.to_config()?)?;
            let source = Source::from_arg(&input);
            let f = ops::ols_as_multi_fun(response);
            let run = if is_stdout(output.as_deref()) {
                let (run, mut ws) = engine.run_multi_to(&source, vec![open_output(None)?], true, f)?;
                ws[0].flush()?;
                run
            } else {
                engine.run_multi(&source, &[PathBuf::from(output.unwrap())], true, f)?
            };
            if let Some(path) = fits {
                write_fits(&path, &run.outcomes)?;
            }
            Ok(finish(&run.report))
        }
        Cmd::Exec {
            engine,
            no_child_header,
            input,
            output,
            command,
        } => {
            let cfg = engine.to_config()?;
            check_shell()?;
            let template = command.join(" ");
            let engine = Engine::new(cfg)?;
            let report = stream(&engine, &input, Some(&output), |v| {
                exec_block(&template, !no_child_header, v)
            })?;
            Ok(finish(&report))
        }
        Cmd::Head {
            engine,
            blocks,
            input,
            output,
        } => {
            let cfg = engine.to_config()?;
            let mut out = open_output(output.as_deref())?;
            head(&Source::from_arg(&input), &cfg, blocks, &mut out)?;
            out.flush()?;
            Ok(0)
        }
        Cmd::Lint { engine, input } => {
            let cfg = engine.to_config()?;
            let found = lint(&Source::from_arg(&input), &cfg)?;
            let mut out = io::stdout().lock();
            for r in &found {
                writeln!(
                    out,
                    "key `{}` reappears at line {} (first run starts at line {})",
                    r.key, r.line, r.first_line
                )?;
            }
            Ok(if found.is_empty() { 0 } else { 1 })
        }
        Cmd::Bench {
            lines,
            cols,
            repeats,
            seed,
            workers,
            chunk_bytes,
        } => {
            let report = bench::run_bench(&BenchConfig {
                lines,
                cols,
                repeats,
                seed,
                workers,
                chunk_bytes,
            })?;
            println!("{report}");
            Ok(if report.deterministic() { 0 } else { 1 })
        }
    }
}

fn write_fits(path: &Path, outcomes: &[engine::BlockOutcome<ops::OlsResult>]) -> Result<()> {
    let mut w = BufWriter::new(File::create(path).map_err(|e| Error::Open {
        path: path.into(),
        source: e,
    })?);
    for o in outcomes {
        if let Some(fit) = o.payload() {
            let rec = serde_json::json!({
                "key": o.key,
                "coefficients": fit.coefficients,
                "rss": fit.residual_sum_squares,
                "n": fit.n,
                "rank_deficient": fit.rank_deficient,
            });
            writeln!(w, "{rec}")?;
        }
    }
    w.flush()?;
    Ok(())
}

fn check_shell() -> Result<()> {
    Command::new("sh")
        .arg("-c")
        .arg("true")
        .status()
        .map(|_| ())
        .map_err(|e| Error::Config(format!("cannot spawn sh: {e}")))
}

/// Runs `template` with the block on standard input and parses its output.
fn exec_block(template: &str, child_header: bool, view: &BlockView) -> std::result::Result<Table, FnError> {
    let fmt = TextFormat::default();
    let mut input = Vec::new();
    table::write_table(&view.body, &mut input, &fmt, child_header)?;

    let mut child = Command::new("sh")
        .arg("-c")
        .arg(template)
        .env("BLOCK_KEY", &view.key)
        .stdin(Stdio::piped())
        .stdout(Stdio::piped())
        .stderr(Stdio::inherit())
        .spawn()?;
    let mut stdin = child.stdin.take().expect("piped stdin");
    let mut stdout = child.stdout.take().expect("piped stdout");
    let mut produced = Vec::new();
    std::thread::scope(|s| {
        s.spawn(move || {
            // The child may exit without reading everything.
            let _ = stdin.write_all(&input);
        });
        stdout.read_to_end(&mut produced)
    })?;
    let status = child.wait()?;
    if !status.success() {
        return Err(format!("`{template}` exited with {status}").into());
    }
    parse_child_output(&produced, child_header, view)
}

fn parse_child_output(out: &[u8], header: bool, view: &BlockView) -> std::result::Result<Table, FnError> {
    let body_fields = view.body.fields();
    if out.is_empty() {
        return Ok(Table::empty(body_fields));
    }
    let mut hints = SchemaHints {
        delimiter: Some(b'\t'),
        header: Some(header),
        ..Default::default()
    };
    let mut schema = table::infer_schema(out, &hints)?;
    let width_matches = schema.fields.len() == body_fields.len();
    let names_match = schema.fields.iter().map(|f| &f.name).eq(body_fields.iter().map(|f| &f.name));
    if width_matches && (names_match || !header) {
        hints.fields = Some(body_fields.to_vec());
        schema = table::infer_schema(out, &hints)?;
    }
    let data = if header {
        let end = fields::memchr(b'\n', out).map_or(out.len(), |i| i + 1);
        &out[end..]
    } else {
        out
    };
    let first_line = if header { 2 } else { 1 };
    Ok(table::parse_records(data, first_line, &schema)?)
}

/// Writes the header line and the first `k` blocks byte for byte.
pub fn head<W: Write + ?Sized>(source: &Source, cfg: &EngineConfig, k: usize, out: &mut W) -> Result<u64> {
    let mut prepared = engine::prepare(source, cfg)?;
    let term = cfg.chunker.record_terminator;
    let delim = prepared.stream.field_delimiter();
    let mut written = 0u64;
    if k == 0 {
        return Ok(0);
    }
    if let Some(h) = &prepared.header_line {
        out.write_all(h)?;
        out.write_all(&[term])?;
        written += h.len() as u64 + 1;
    }
    let mut remaining = k;
    while remaining > 0 {
        let Some(mut chunk) = prepared.stream.next_chunk()? else { break };
        chunk.truncate_blocks(remaining, delim);
        remaining -= chunk.block_count();
        out.write_all(&chunk.data)?;
        written += chunk.data.len() as u64;
    }
    Ok(written)
}

/// A run of rows whose key already had an earlier run.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Reappearance {
    pub key: String,
    pub line: u64,
    pub first_line: u64,
}

/// Scans the whole input for keys that form more than one run.
pub fn lint(source: &Source, cfg: &EngineConfig) -> Result<Vec<Reappearance>> {
    let mut prepared = engine::prepare(source, cfg)?;
    let delim = prepared.stream.field_delimiter();
    let mut first_seen: HashMap<Vec<u8>, u64> = HashMap::new();
    let mut found = Vec::new();
    while let Some(chunk) = prepared.stream.next_chunk()? {
        for i in 0..chunk.block_count() {
            let line = chunk.block_lines[i];
            let record = fields::trim_record(chunk.block_bytes(i), cfg.chunker.record_terminator);
            let key = fields::first_field(record, delim)
                .map_err(|e| Error::Malformed {
                    line,
                    reason: e.describe().into(),
                })?
                .into_owned();
            match first_seen.get(&key) {
                Some(&first) => found.push(Reappearance {
                    key: String::from_utf8_lossy(&key).into_owned(),
                    line,
                    first_line: first,
                }),
                None => {
                    first_seen.insert(key, line);
                }
            }
        }
    }
    Ok(found)
}
