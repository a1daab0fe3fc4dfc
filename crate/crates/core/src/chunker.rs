//! Block-aligned chunking of a delimited byte stream.
//!
//! A [`ChunkStream`] reads roughly `target_chunk_bytes` at a time, always
//! stopping at a record terminator, and then holds back the trailing run of
//! records that share the last key: those rows may continue past the read
//! and are prepended to the next chunk instead. Every chunk therefore holds
//! whole blocks only. A block larger than the target grows the buffer until
//! the key changes or the input ends.
//!
//! The space used is bounded by the chunk target plus the largest block plus
//! one record, independent of input size. [`ChunkStream::buffered_high_water`]
//! reports the observed peak.

use std::fs::File;
use std::io::{self, BufRead, BufReader, Read};
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;

use flate2::bufread::MultiGzDecoder;

use crate::error::{Error, Result};
use crate::fields;

const GZIP_MAGIC: [u8; 2] = [0x1f, 0x8b];
const READ_BUFFER: usize = 64 * 1024;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Compression {
    None,
    Gzip,
    /// Gzip when the stream starts with the gzip magic bytes, plain otherwise.
    #[default]
    Auto,
}

#[derive(Debug, Clone)]
pub struct ChunkerConfig {
    pub target_chunk_bytes: usize,
    pub record_terminator: u8,
    pub field_delimiter: u8,
    /// Lines dropped from the start of the input before chunking.
    pub skip_lines: usize,
    pub compression: Compression,
    /// Longest record accepted before the input is declared malformed.
    pub max_record_bytes: usize,
}

impl Default for ChunkerConfig {
    fn default() -> Self {
        ChunkerConfig {
            target_chunk_bytes: 1 << 20,
            record_terminator: b'\n',
            field_delimiter: b'\t',
            skip_lines: 0,
            compression: Compression::Auto,
            max_record_bytes: 256 << 20,
        }
    }
}

impl ChunkerConfig {
    pub fn validate(&self) -> Result<()> {
        if self.target_chunk_bytes == 0 {
            return Err(Error::config("target_chunk_bytes must be at least 1"));
        }
        if self.field_delimiter == self.record_terminator {
            return Err(Error::config(
                "field delimiter and record terminator must differ",
            ));
        }
        if self.max_record_bytes == 0 {
            return Err(Error::config("max_record_bytes must be at least 1"));
        }
        Ok(())
    }
}

/// Where the bytes come from.
#[derive(Debug, Clone)]
pub enum Source {
    Path(PathBuf),
    Stdin,
    Memory(Arc<[u8]>),
}

impl Source {
    pub fn path(p: impl Into<PathBuf>) -> Self {
        Source::Path(p.into())
    }

    pub fn memory(bytes: impl Into<Vec<u8>>) -> Self {
        Source::Memory(Arc::from(bytes.into()))
    }

    /// `-` means standard input, anything else a file path.
    pub fn from_arg(arg: &str) -> Self {
        if arg == "-" {
            Source::Stdin
        } else {
            Source::path(arg)
        }
    }
}

impl From<&Path> for Source {
    fn from(p: &Path) -> Self {
        Source::Path(p.to_path_buf())
    }
}

impl From<PathBuf> for Source {
    fn from(p: PathBuf) -> Self {
        Source::Path(p)
    }
}

/// A byte span holding whole records and whole blocks.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RawChunk {
    pub data: Vec<u8>,
    pub first_key: Vec<u8>,
    pub last_key: Vec<u8>,
    pub sequence_no: u64,
    pub is_final: bool,
    /// 1-based line number of the first record, counted in the decoded input.
    pub first_line: u64,
    /// Byte offset in `data` where each block starts.
    pub block_starts: Vec<usize>,
    /// Line number of the first record of each block.
    pub block_lines: Vec<u64>,
}

impl RawChunk {
    pub fn block_count(&self) -> usize {
        self.block_starts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    /// Raw bytes of block `i`.
    pub fn block_bytes(&self, i: usize) -> &[u8] {
        let start = self.block_starts[i];
        let end = self
            .block_starts
            .get(i + 1)
            .copied()
            .unwrap_or(self.data.len());
        &self.data[start..end]
    }

    /// Keeps only the first `k` blocks.
    pub fn truncate_blocks(&mut self, k: usize, delimiter: u8) {
        if k >= self.block_count() {
            return;
        }
        if k == 0 {
            self.data.clear();
            self.block_starts.clear();
            self.block_lines.clear();
            self.first_key.clear();
            self.last_key.clear();
            return;
        }
        self.data.truncate(self.block_starts[k]);
        self.block_starts.truncate(k);
        self.block_lines.truncate(k);
        let last = self.block_bytes(k - 1);
        self.last_key = fields::first_field(last, delimiter)
            .map(|f| f.into_owned())
            .unwrap_or_default();
    }
}

/// Counts compressed bytes pulled from the underlying reader, for error offsets.
struct CountingReader<R> {
    inner: R,
    count: Arc<AtomicU64>,
}

impl<R: Read> Read for CountingReader<R> {
    fn read(&mut self, buf: &mut [u8]) -> io::Result<usize> {
        let n = self.inner.read(buf)?;
        self.count.fetch_add(n as u64, Ordering::Relaxed);
        Ok(n)
    }
}

/// Pull-based stream of [`RawChunk`]s.
pub struct ChunkStream {
    reader: Box<dyn BufRead + Send>,
    cfg: ChunkerConfig,
    delimiter: u8,
    compressed: Option<Arc<AtomicU64>>,
    buf: Vec<u8>,
    /// Start offset of each buffered record.
    records: Vec<usize>,
    /// Indices into `records` where a new key run starts; covers `records[..indexed]`.
    runs: Vec<usize>,
    indexed: usize,
    last_key: Vec<u8>,
    /// Line number of `records[0]`.
    buf_first_line: u64,
    lines_read: u64,
    eof: bool,
    done: bool,
    next_seq: u64,
    high_water: usize,
    skipped: Vec<Vec<u8>>,
}

impl std::fmt::Debug for ChunkStream {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("ChunkStream")
            .field("next_seq", &self.next_seq)
            .field("buffered", &self.buf.len())
            .field("eof", &self.eof)
            .finish_non_exhaustive()
    }
}

/// Opens a file (or standard input, or memory) as a chunk stream.
pub fn open_source(source: &Source, cfg: ChunkerConfig) -> Result<ChunkStream> {
    cfg.validate()?;
    match source {
        Source::Path(path) => {
            let file = File::open(path).map_err(|source| Error::Open {
                path: path.clone(),
                source,
            })?;
            ChunkStream::from_reader(file, cfg)
        }
        Source::Stdin => ChunkStream::from_reader(io::stdin(), cfg),
        Source::Memory(bytes) => ChunkStream::from_reader(io::Cursor::new(bytes.clone()), cfg),
    }
}

impl ChunkStream {
    pub fn from_reader<R: Read + Send + 'static>(reader: R, cfg: ChunkerConfig) -> Result<Self> {
        cfg.validate()?;
        let count = Arc::new(AtomicU64::new(0));
        let mut raw = BufReader::with_capacity(
            READ_BUFFER,
            CountingReader {
                inner: reader,
                count: count.clone(),
            },
        );
        let gzip = match cfg.compression {
            Compression::None => false,
            Compression::Gzip => true,
            Compression::Auto => raw.fill_buf()?.starts_with(&GZIP_MAGIC),
        };
        let (reader, compressed): (Box<dyn BufRead + Send>, _) = if gzip {
            let decoder = MultiGzDecoder::new(raw);
            (
                Box::new(BufReader::with_capacity(READ_BUFFER, decoder)),
                Some(count),
            )
        } else {
            (Box::new(raw), None)
        };
        let mut stream = ChunkStream {
            reader,
            delimiter: cfg.field_delimiter,
            cfg,
            compressed,
            buf: Vec::new(),
            records: Vec::new(),
            runs: Vec::new(),
            indexed: 0,
            last_key: Vec::new(),
            buf_first_line: 1,
            lines_read: 0,
            eof: false,
            done: false,
            next_seq: 0,
            high_water: 0,
            skipped: Vec::new(),
        };
        for _ in 0..stream.cfg.skip_lines {
            let mut line = Vec::new();
            let n = stream.read_line_into(&mut line)?;
            if n == 0 {
                stream.eof = true;
                break;
            }
            stream.lines_read += 1;
            stream.skipped.push(line);
        }
        stream.buf_first_line = stream.lines_read + 1;
        Ok(stream)
    }

    /// Lines removed by `skip_lines`, terminators included.
    pub fn skipped_lines(&self) -> &[Vec<u8>] {
        &self.skipped
    }

    /// Maximum number of bytes buffered at once so far.
    pub fn buffered_high_water(&self) -> usize {
        self.high_water
    }

    /// Number of chunks handed out so far.
    pub fn chunks_emitted(&self) -> u64 {
        self.next_seq
    }

    pub fn field_delimiter(&self) -> u8 {
        self.delimiter
    }

    pub fn record_terminator(&self) -> u8 {
        self.cfg.record_terminator
    }

    /// Changes the delimiter used to find keys. Meant for use after sampling
    /// and before the first chunk is taken.
    pub fn set_field_delimiter(&mut self, delimiter: u8) -> Result<()> {
        if delimiter == self.cfg.record_terminator {
            return Err(Error::config(
                "field delimiter and record terminator must differ",
            ));
        }
        if delimiter != self.delimiter {
            self.delimiter = delimiter;
            self.runs.clear();
            self.indexed = 0;
            self.last_key.clear();
        }
        Ok(())
    }

    /// Buffers whole records until at least `min_bytes` are held or the input
    /// ends, and returns the buffered bytes. Nothing is consumed.
    pub fn peek_sample(&mut self, min_bytes: usize) -> Result<&[u8]> {
        while self.buf.len() < min_bytes && !self.eof {
            self.read_record()?;
        }
        Ok(&self.buf)
    }

    /// Removes and returns the next record (terminator stripped), before any
    /// chunk has been formed from it. Used to take a header line.
    pub fn take_line(&mut self) -> Result<Option<Vec<u8>>> {
        if self.records.is_empty() && !self.read_record()? {
            return Ok(None);
        }
        let end = self.records.get(1).copied().unwrap_or(self.buf.len());
        let rest = self.buf.split_off(end);
        let line = std::mem::replace(&mut self.buf, rest);
        self.records.remove(0);
        for r in &mut self.records {
            *r -= end;
        }
        self.runs.clear();
        self.indexed = 0;
        self.last_key.clear();
        self.buf_first_line += 1;
        Ok(Some(
            fields::trim_record(&line, self.cfg.record_terminator).to_vec(),
        ))
    }

    fn read_line_into(&mut self, out: &mut Vec<u8>) -> Result<usize> {
        let cap = self.cfg.max_record_bytes as u64 + 1;
        let term = self.cfg.record_terminator;
        let start = out.len();
        let n = match (&mut self.reader).take(cap).read_until(term, out) {
            Ok(n) => n,
            Err(source) => return Err(self.read_error(source)),
        };
        if n as u64 == cap && out.last() != Some(&term) {
            return Err(Error::Malformed {
                line: self.lines_read + 1,
                reason: format!(
                    "record exceeds {} bytes without a terminator",
                    self.cfg.max_record_bytes
                ),
            });
        }
        if n > 0 && out.last() != Some(&term) {
            // final record without terminator
            out.push(term);
        }
        debug_assert!(out.len() >= start);
        Ok(n)
    }

    fn read_error(&self, source: io::Error) -> Error {
        match &self.compressed {
            Some(count) => Error::Decode {
                offset: count.load(Ordering::Relaxed),
                source,
            },
            None => Error::Io(source),
        }
    }

    /// Appends one record to the buffer. Returns false at end of input.
    fn read_record(&mut self) -> Result<bool> {
        if self.eof {
            return Ok(false);
        }
        let start = self.buf.len();
        let mut buf = std::mem::take(&mut self.buf);
        let res = self.read_line_into(&mut buf);
        self.buf = buf;
        if res? == 0 {
            self.eof = true;
            return Ok(false);
        }
        self.lines_read += 1;
        self.records.push(start);
        self.high_water = self.high_water.max(self.buf.len());
        Ok(true)
    }

    fn record_bytes(&self, i: usize) -> &[u8] {
        let end = self.records.get(i + 1).copied().unwrap_or(self.buf.len());
        &self.buf[self.records[i]..end]
    }

    fn key_of(&self, i: usize) -> Result<Vec<u8>> {
        let line_no = self.buf_first_line + i as u64;
        let line = fields::trim_record(self.record_bytes(i), self.cfg.record_terminator);
        let key = fields::first_field(line, self.delimiter).map_err(|e| Error::Malformed {
            line: line_no,
            reason: e.describe().to_string(),
        })?;
        if key.is_empty() {
            return Err(Error::Malformed {
                line: line_no,
                reason: "empty first field (block key)".into(),
            });
        }
        Ok(key.into_owned())
    }

    /// Extends run tracking over records not yet examined.
    fn index_keys(&mut self) -> Result<()> {
        while self.indexed < self.records.len() {
            let i = self.indexed;
            let key = self.key_of(i)?;
            if i == 0 || key != self.last_key {
                self.runs.push(i);
                self.last_key = key;
            }
            self.indexed += 1;
        }
        Ok(())
    }

    /// Next block-aligned chunk, or `None` once the input is exhausted.
    pub fn next_chunk(&mut self) -> Result<Option<RawChunk>> {
        if self.done {
            return Ok(None);
        }
        while self.buf.len() < self.cfg.target_chunk_bytes && !self.eof {
            self.read_record()?;
        }
        self.index_keys()?;
        if self.records.is_empty() {
            self.done = true;
            return Ok(None);
        }
        let cut = self.choose_cut()?;
        self.emit(cut).map(Some)
    }

    /// Number of leading records to emit. The record crossing the target
    /// size decides: the chunk ends before its run, or after it when that run
    /// starts the buffer.
    fn choose_cut(&mut self) -> Result<usize> {
        let target = self.cfg.target_chunk_bytes;
        let n = self.records.len();
        let crossing = (0..n).find(|&i| self.records.get(i + 1).map_or(self.buf.len(), |&e| e) >= target);
        let k = match crossing {
            Some(k) if !(self.eof && k == n - 1) => k,
            _ => return Ok(n),
        };
        let after = self.runs.partition_point(|&r| r <= k);
        let run_of_k = if after > 0 { self.runs[after - 1] } else { 0 };
        if run_of_k > 0 {
            return Ok(run_of_k);
        }
        if let Some(&next) = self.runs.get(after) {
            return Ok(next);
        }
        // The buffered tail is one block: read on until the key changes.
        loop {
            if !self.read_record()? {
                return Ok(self.records.len());
            }
            self.index_keys()?;
            if self.runs.len() > 1 {
                return Ok(self.runs[1]);
            }
        }
    }

    fn emit(&mut self, cut: usize) -> Result<RawChunk> {
        let cut_off = self.records.get(cut).copied().unwrap_or(self.buf.len());
        let nruns = self.runs.iter().take_while(|&&r| r < cut).count();
        let block_starts: Vec<usize> = self.runs[..nruns]
            .iter()
            .map(|&r| self.records[r])
            .collect();
        let block_lines = self.runs[..nruns]
            .iter()
            .map(|&r| self.buf_first_line + r as u64)
            .collect();
        let first_key = self.key_of(0)?;
        let last_key = self.key_of(self.runs[nruns - 1])?;
        let first_line = self.buf_first_line;

        let carry = self.buf.split_off(cut_off);
        let data = std::mem::replace(&mut self.buf, carry);
        self.records.drain(..cut);
        for r in &mut self.records {
            *r -= cut_off;
        }
        self.runs.drain(..nruns);
        for r in &mut self.runs {
            *r -= cut;
        }
        self.indexed -= cut;
        self.buf_first_line += cut as u64;

        if self.records.is_empty() && !self.eof {
            match self.reader.fill_buf() {
                Ok(rest) => self.eof = rest.is_empty(),
                Err(e) => return Err(self.read_error(e)),
            }
        }
        let is_final = self.records.is_empty() && self.eof;
        self.done = is_final;

        let chunk = RawChunk {
            data,
            first_key,
            last_key,
            sequence_no: self.next_seq,
            is_final,
            first_line,
            block_starts,
            block_lines,
        };
        self.next_seq += 1;
        Ok(chunk)
    }
}

impl Iterator for ChunkStream {
    type Item = Result<RawChunk>;

    fn next(&mut self) -> Option<Self::Item> {
        match self.next_chunk() {
            Ok(Some(c)) => Some(Ok(c)),
            Ok(None) => None,
            Err(e) => {
                self.done = true;
                Some(Err(e))
            }
        }
    }
}
