//! Typed columnar tables and their delimited-text encoding.
//!
//! Parsing turns raw chunk bytes into a [`Table`] in one pass. Writing is the
//! inverse for canonical text: no quoting, nulls as the first NA token, reals
//! in shortest round-trip form.

use std::borrow::Cow;
use std::fmt;
use std::io::Write;

use crate::chunker::RawChunk;
use crate::error::{Error, Result};
use crate::fields::{self, split_fields};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, serde::Serialize)]
#[serde(rename_all = "lowercase")]
pub enum ColumnType {
    Integer,
    Real,
    Text,
    Boolean,
}

impl fmt::Display for ColumnType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ColumnType::Integer => "integer",
            ColumnType::Real => "real",
            ColumnType::Text => "text",
            ColumnType::Boolean => "boolean",
        })
    }
}

impl std::str::FromStr for ColumnType {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "int" | "integer" | "i64" => Ok(ColumnType::Integer),
            "real" | "float" | "double" | "f64" | "numeric" => Ok(ColumnType::Real),
            "text" | "string" | "str" | "character" => Ok(ColumnType::Text),
            "bool" | "boolean" | "logical" => Ok(ColumnType::Boolean),
            other => Err(Error::config(format!("unknown column type `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Field {
    pub name: String,
    pub ty: ColumnType,
}

impl Field {
    pub fn new(name: impl Into<String>, ty: ColumnType) -> Self {
        Field {
            name: name.into(),
            ty,
        }
    }
}

/// How values are laid out as text.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TextFormat {
    pub delimiter: u8,
    pub terminator: u8,
    /// Tokens read as null. The first one is written for nulls.
    pub na_tokens: Vec<String>,
}

impl Default for TextFormat {
    fn default() -> Self {
        TextFormat {
            delimiter: b'\t',
            terminator: b'\n',
            na_tokens: vec!["NA".into(), String::new()],
        }
    }
}

impl TextFormat {
    pub fn is_na(&self, token: &[u8]) -> bool {
        self.na_tokens.iter().any(|t| t.as_bytes() == token)
    }

    pub fn null_token(&self) -> &str {
        self.na_tokens.first().map(String::as_str).unwrap_or("")
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Schema {
    pub fields: Vec<Field>,
    pub header_present: bool,
    pub format: TextFormat,
    /// The first column is the block key: always text, never null.
    pub keyed: bool,
}

impl Schema {
    pub fn new(fields: Vec<Field>, format: TextFormat) -> Result<Self> {
        let s = Schema {
            fields,
            header_present: false,
            format,
            keyed: false,
        };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        if self.fields.is_empty() {
            return Err(Error::config("schema needs at least one column"));
        }
        check_names(self.fields.iter().map(|f| f.name.as_str()))?;
        if self.format.delimiter == self.format.terminator {
            return Err(Error::config("delimiter and terminator must differ"));
        }
        if self.keyed && self.fields[0].ty != ColumnType::Text {
            return Err(Error::config(format!(
                "key column `{}` must be text",
                self.fields[0].name
            )));
        }
        Ok(())
    }

    pub fn delimiter(&self) -> u8 {
        self.format.delimiter
    }

    pub fn names(&self) -> Vec<&str> {
        self.fields.iter().map(|f| f.name.as_str()).collect()
    }
}

fn check_names<'a>(names: impl Iterator<Item = &'a str>) -> Result<()> {
    let mut seen = std::collections::HashSet::new();
    for n in names {
        if n.is_empty() {
            return Err(Error::config("column names must be non-empty"));
        }
        if !seen.insert(n) {
            return Err(Error::config(format!("duplicate column name `{n}`")));
        }
    }
    Ok(())
}

/// One column of values; `None` marks a null.
#[derive(Debug, Clone, PartialEq)]
pub enum Column {
    Integer(Vec<Option<i64>>),
    Real(Vec<Option<f64>>),
    Text(Vec<Option<String>>),
    Boolean(Vec<Option<bool>>),
}

/// A borrowed cell.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Value<'a> {
    Null,
    Integer(i64),
    Real(f64),
    Text(&'a str),
    Boolean(bool),
}

impl Value<'_> {
    /// Canonical text form; `None` for nulls.
    pub fn render(&self) -> Option<Cow<'_, str>> {
        match *self {
            Value::Null => None,
            Value::Integer(v) => Some(Cow::Owned(v.to_string())),
            Value::Real(v) => Some(Cow::Owned(format_real(v))),
            Value::Text(s) => Some(Cow::Borrowed(s)),
            Value::Boolean(b) => Some(Cow::Borrowed(if b { "TRUE" } else { "FALSE" })),
        }
    }

    pub fn as_f64(&self) -> Option<f64> {
        match *self {
            Value::Integer(v) => Some(v as f64),
            Value::Real(v) => Some(v),
            Value::Boolean(b) => Some(if b { 1.0 } else { 0.0 }),
            _ => None,
        }
    }

    pub fn is_null(&self) -> bool {
        matches!(self, Value::Null)
    }
}

fn format_real(v: f64) -> String {
    // Display is the shortest representation that parses back to the same bits.
    format!("{v}")
}

impl Column {
    pub fn empty(ty: ColumnType) -> Self {
        match ty {
            ColumnType::Integer => Column::Integer(Vec::new()),
            ColumnType::Real => Column::Real(Vec::new()),
            ColumnType::Text => Column::Text(Vec::new()),
            ColumnType::Boolean => Column::Boolean(Vec::new()),
        }
    }

    fn with_capacity(ty: ColumnType, n: usize) -> Self {
        match ty {
            ColumnType::Integer => Column::Integer(Vec::with_capacity(n)),
            ColumnType::Real => Column::Real(Vec::with_capacity(n)),
            ColumnType::Text => Column::Text(Vec::with_capacity(n)),
            ColumnType::Boolean => Column::Boolean(Vec::with_capacity(n)),
        }
    }

    pub fn ty(&self) -> ColumnType {
        match self {
            Column::Integer(_) => ColumnType::Integer,
            Column::Real(_) => ColumnType::Real,
            Column::Text(_) => ColumnType::Text,
            Column::Boolean(_) => ColumnType::Boolean,
        }
    }

    pub fn len(&self) -> usize {
        match self {
            Column::Integer(v) => v.len(),
            Column::Real(v) => v.len(),
            Column::Text(v) => v.len(),
            Column::Boolean(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn get(&self, row: usize) -> Value<'_> {
        match self {
            Column::Integer(v) => v[row].map_or(Value::Null, Value::Integer),
            Column::Real(v) => v[row].map_or(Value::Null, Value::Real),
            Column::Text(v) => v[row].as_deref().map_or(Value::Null, Value::Text),
            Column::Boolean(v) => v[row].map_or(Value::Null, Value::Boolean),
        }
    }

    pub fn null_count(&self) -> usize {
        (0..self.len()).filter(|&i| self.get(i).is_null()).count()
    }

    pub fn slice(&self, start: usize, end: usize) -> Column {
        match self {
            Column::Integer(v) => Column::Integer(v[start..end].to_vec()),
            Column::Real(v) => Column::Real(v[start..end].to_vec()),
            Column::Text(v) => Column::Text(v[start..end].to_vec()),
            Column::Boolean(v) => Column::Boolean(v[start..end].to_vec()),
        }
    }

    /// Gathers the given rows, in order.
    pub fn take(&self, rows: &[usize]) -> Column {
        match self {
            Column::Integer(v) => Column::Integer(rows.iter().map(|&i| v[i]).collect()),
            Column::Real(v) => Column::Real(rows.iter().map(|&i| v[i]).collect()),
            Column::Text(v) => Column::Text(rows.iter().map(|&i| v[i].clone()).collect()),
            Column::Boolean(v) => Column::Boolean(rows.iter().map(|&i| v[i]).collect()),
        }
    }

    fn extend_from(&mut self, other: &Column) -> bool {
        match (self, other) {
            (Column::Integer(a), Column::Integer(b)) => a.extend_from_slice(b),
            (Column::Real(a), Column::Real(b)) => a.extend_from_slice(b),
            (Column::Text(a), Column::Text(b)) => a.extend_from_slice(b),
            (Column::Boolean(a), Column::Boolean(b)) => a.extend_from_slice(b),
            _ => return false,
        }
        true
    }
}

/// A typed columnar relation.
#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    fields: Vec<Field>,
    columns: Vec<Column>,
    rows: usize,
}

impl Table {
    pub fn new<S: Into<String>>(columns: Vec<(S, Column)>) -> Result<Self> {
        let rows = columns.first().map_or(0, |(_, c)| c.len());
        let mut fields = Vec::with_capacity(columns.len());
        let mut cols = Vec::with_capacity(columns.len());
        for (name, col) in columns {
            let name = name.into();
            if col.len() != rows {
                return Err(Error::config(format!(
                    "column `{name}` has {} rows, expected {rows}",
                    col.len()
                )));
            }
            fields.push(Field::new(name, col.ty()));
            cols.push(col);
        }
        check_names(fields.iter().map(|f| f.name.as_str()))?;
        Ok(Table {
            fields,
            columns: cols,
            rows,
        })
    }

    /// A 0-row table with the given columns.
    pub fn empty(fields: &[Field]) -> Self {
        Table {
            fields: fields.to_vec(),
            columns: fields.iter().map(|f| Column::empty(f.ty)).collect(),
            rows: 0,
        }
    }

    pub fn num_rows(&self) -> usize {
        self.rows
    }

    pub fn num_columns(&self) -> usize {
        self.columns.len()
    }

    pub fn fields(&self) -> &[Field] {
        &self.fields
    }

    pub fn columns(&self) -> &[Column] {
        &self.columns
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.fields.iter().map(|f| f.name.as_str())
    }

    pub fn column_index(&self, name: &str) -> Option<usize> {
        self.fields.iter().position(|f| f.name == name)
    }

    pub fn column(&self, name: &str) -> Option<&Column> {
        self.column_index(name).map(|i| &self.columns[i])
    }

    pub fn column_at(&self, i: usize) -> &Column {
        &self.columns[i]
    }

    pub fn value(&self, row: usize, col: usize) -> Value<'_> {
        self.columns[col].get(row)
    }

    pub fn slice(&self, start: usize, end: usize) -> Table {
        Table {
            fields: self.fields.clone(),
            columns: self.columns.iter().map(|c| c.slice(start, end)).collect(),
            rows: end - start,
        }
    }

    pub fn take_rows(&self, rows: &[usize]) -> Table {
        Table {
            fields: self.fields.clone(),
            columns: self.columns.iter().map(|c| c.take(rows)).collect(),
            rows: rows.len(),
        }
    }

    /// Keeps the named columns, in the given order.
    pub fn select(&self, names: &[&str]) -> Result<Table> {
        let mut out = Vec::with_capacity(names.len());
        for &n in names {
            let i = self
                .column_index(n)
                .ok_or_else(|| Error::config(format!("no column named `{n}`")))?;
            out.push((n.to_string(), self.columns[i].clone()));
        }
        if out.is_empty() {
            return Ok(Table {
                fields: Vec::new(),
                columns: Vec::new(),
                rows: self.rows,
            });
        }
        Table::new(out)
    }

    /// Splits off column `i`, returning it with the remaining table.
    pub fn remove_column(mut self, i: usize) -> (Field, Column, Table) {
        let f = self.fields.remove(i);
        let c = self.columns.remove(i);
        (f, c, self)
    }

    /// Prepends a text column named `name` repeating `key` on every row. An
    /// existing column with that name is renamed `name_1` (or `name_2`, ...).
    pub fn with_key_column(mut self, name: &str, key: &str) -> Table {
        if let Some(clash) = self.column_index(name) {
            let mut n = 1;
            let mut renamed = format!("{name}_{n}");
            while self.fields.iter().any(|f| f.name == renamed) {
                n += 1;
                renamed = format!("{name}_{n}");
            }
            self.fields[clash].name = renamed;
        }
        self.fields.insert(0, Field::new(name, ColumnType::Text));
        self.columns
            .insert(0, Column::Text(vec![Some(key.to_string()); self.rows]));
        self
    }

    /// Appends the rows of `other`, which must have identical fields.
    pub fn append(&mut self, other: &Table) -> Result<()> {
        if self.fields != other.fields {
            return Err(Error::config(format!(
                "cannot append table with columns [{}] to [{}]",
                describe_fields(&other.fields),
                describe_fields(&self.fields)
            )));
        }
        for (a, b) in self.columns.iter_mut().zip(&other.columns) {
            let ok = a.extend_from(b);
            debug_assert!(ok);
        }
        self.rows += other.rows;
        Ok(())
    }

    /// Row-concatenation of tables with identical fields.
    pub fn concat(fields: &[Field], tables: &[Table]) -> Result<Table> {
        let mut out = Table::empty(fields);
        for t in tables {
            out.append(t)?;
        }
        Ok(out)
    }
}

pub(crate) fn describe_fields(fields: &[Field]) -> String {
    fields
        .iter()
        .map(|f| format!("{}:{}", f.name, f.ty))
        .collect::<Vec<_>>()
        .join(", ")
}

// ---------------------------------------------------------------------------
// Inference

/// User-supplied constraints for [`infer_schema`].
#[derive(Debug, Clone, Default)]
pub struct SchemaHints {
    pub delimiter: Option<u8>,
    pub header: Option<bool>,
    /// A complete column list; when set, no types are inferred.
    pub fields: Option<Vec<Field>>,
    pub na_tokens: Option<Vec<String>>,
    /// Treat the first column as the block key.
    pub keyed: bool,
    pub terminator: Option<u8>,
    /// Line number of the first sample line, for error messages.
    pub first_line: Option<u64>,
}

const DELIMITER_CANDIDATES: [u8; 4] = *b"\t,;|";

fn parse_bool(s: &[u8]) -> Option<bool> {
    match s {
        b"TRUE" | b"true" | b"True" => Some(true),
        b"FALSE" | b"false" | b"False" => Some(false),
        _ => None,
    }
}

fn parse_int(s: &[u8]) -> Option<i64> {
    std::str::from_utf8(s).ok()?.parse().ok()
}

fn parse_real(s: &[u8]) -> Option<f64> {
    std::str::from_utf8(s).ok()?.parse().ok()
}

/// Narrowest type in integer, real, boolean, text order that accepts `s`.
fn narrowest(s: &[u8]) -> ColumnType {
    if parse_int(s).is_some() {
        ColumnType::Integer
    } else if parse_real(s).is_some() {
        ColumnType::Real
    } else if parse_bool(s).is_some() {
        ColumnType::Boolean
    } else {
        ColumnType::Text
    }
}

fn accepts(ty: ColumnType, s: &[u8]) -> bool {
    match ty {
        ColumnType::Integer => parse_int(s).is_some(),
        ColumnType::Real => parse_real(s).is_some(),
        ColumnType::Boolean => parse_bool(s).is_some(),
        ColumnType::Text => true,
    }
}

fn widen(current: ColumnType, s: &[u8]) -> ColumnType {
    const ORDER: [ColumnType; 4] = [
        ColumnType::Integer,
        ColumnType::Real,
        ColumnType::Boolean,
        ColumnType::Text,
    ];
    let start = ORDER.iter().position(|&t| t == current).unwrap();
    ORDER[start..]
        .iter()
        .copied()
        .find(|&t| accepts(t, s))
        .unwrap_or(ColumnType::Text)
}

fn sample_lines(sample: &[u8], terminator: u8) -> Vec<&[u8]> {
    sample
        .split_inclusive(|&b| b == terminator)
        .map(|l| fields::trim_record(l, terminator))
        .collect()
}

fn detect_delimiter(lines: &[&[u8]]) -> u8 {
    let mut best: Option<(usize, u8)> = None;
    for &d in &DELIMITER_CANDIDATES {
        let mut counts = lines.iter().map(|l| fields::count_fields(l, d));
        let first = match counts.next().flatten() {
            Some(c) => c,
            None => continue,
        };
        if counts.all(|c| c == Some(first)) && best.is_none_or(|(n, _)| first > n) {
            best = Some((first, d));
        }
    }
    best.map_or(b'\t', |(_, d)| d)
}

fn invalid_utf8(line: u64) -> Error {
    Error::Malformed {
        line,
        reason: "invalid UTF-8 in field".into(),
    }
}

fn text_of(bytes: &[u8], line: u64) -> Result<String> {
    std::str::from_utf8(bytes)
        .map(str::to_owned)
        .map_err(|_| invalid_utf8(line))
}

/// Builds a schema from a sample of whole records.
pub fn infer_schema(sample: &[u8], hints: &SchemaHints) -> Result<Schema> {
    let defaults = TextFormat::default();
    let terminator = hints.terminator.unwrap_or(defaults.terminator);
    let base_line = hints.first_line.unwrap_or(1);
    let lines = sample_lines(sample, terminator);
    if lines.is_empty() {
        return Err(Error::Malformed {
            line: base_line,
            reason: "no complete record to infer a schema from".into(),
        });
    }
    let delimiter = hints.delimiter.unwrap_or_else(|| detect_delimiter(&lines));
    let format = TextFormat {
        delimiter,
        terminator,
        na_tokens: hints.na_tokens.clone().unwrap_or(defaults.na_tokens),
    };

    let mut rows = Vec::with_capacity(lines.len());
    for (i, line) in lines.iter().enumerate() {
        let f = split_fields(line, delimiter).map_err(|e| Error::Malformed {
            line: base_line + i as u64,
            reason: e.describe().into(),
        })?;
        rows.push(f);
    }
    let width = hints
        .fields
        .as_ref()
        .map_or_else(|| rows[0].len(), |f| f.len());
    if let Some((i, r)) = rows.iter().enumerate().find(|(_, r)| r.len() != width) {
        return Err(Error::Malformed {
            line: base_line + i as u64,
            reason: format!("expected {width} fields, found {}", r.len()),
        });
    }

    let header_present = hints.header.unwrap_or_else(|| {
        let all_text = |r: &[Cow<'_, [u8]>]| {
            r.iter()
                .all(|f| !format.is_na(f) && narrowest(f) == ColumnType::Text)
        };
        rows.len() >= 2 && all_text(&rows[0]) && !all_text(&rows[1])
    });
    let data = if header_present { &rows[1..] } else { &rows[..] };

    let fields = match &hints.fields {
        Some(f) => f.clone(),
        None => {
            let names: Vec<String> = if header_present {
                let raw = rows[0]
                    .iter()
                    .map(|f| text_of(f, base_line))
                    .collect::<Result<Vec<_>>>()?;
                dedupe_names(raw)
            } else {
                (1..=width).map(|i| format!("V{i}")).collect()
            };
            names
                .into_iter()
                .enumerate()
                .map(|(c, name)| {
                    let ty = if hints.keyed && c == 0 {
                        ColumnType::Text
                    } else {
                        infer_column(data.iter().map(|r| &*r[c]), &format)
                    };
                    Field::new(name, ty)
                })
                .collect()
        }
    };
    let schema = Schema {
        fields,
        header_present,
        format,
        keyed: hints.keyed,
    };
    schema.validate()?;
    Ok(schema)
}

fn infer_column<'a>(values: impl Iterator<Item = &'a [u8]>, format: &TextFormat) -> ColumnType {
    let mut ty: Option<ColumnType> = None;
    for v in values.filter(|v| !format.is_na(v)) {
        ty = Some(match ty {
            None => narrowest(v),
            Some(t) => widen(t, v),
        });
        if ty == Some(ColumnType::Text) {
            break;
        }
    }
    ty.unwrap_or(ColumnType::Text)
}

fn dedupe_names(raw: Vec<String>) -> Vec<String> {
    let mut out: Vec<String> = Vec::with_capacity(raw.len());
    for (i, name) in raw.into_iter().enumerate() {
        let base = if name.is_empty() {
            format!("V{}", i + 1)
        } else {
            name
        };
        let mut candidate = base.clone();
        let mut n = 0;
        while out.contains(&candidate) {
            n += 1;
            candidate = format!("{base}_{n}");
        }
        out.push(candidate);
    }
    out
}

// ---------------------------------------------------------------------------
// Parsing

/// Parses the records of a chunk into a table.
pub fn parse_chunk(chunk: &RawChunk, schema: &Schema) -> Result<Table> {
    parse_records(&chunk.data, chunk.first_line, schema)
}

/// Parses terminator-separated records; `first_line` numbers the first one.
pub fn parse_records(data: &[u8], first_line: u64, schema: &Schema) -> Result<Table> {
    let fmt = &schema.format;
    let approx_rows = data.iter().filter(|&&b| b == fmt.terminator).count();
    let mut columns: Vec<Column> = schema
        .fields
        .iter()
        .map(|f| Column::with_capacity(f.ty, approx_rows))
        .collect();
    let width = schema.fields.len();
    let mut rows = 0;
    for (i, raw) in data.split_inclusive(|&b| b == fmt.terminator).enumerate() {
        let line_no = first_line + i as u64;
        let line = fields::trim_record(raw, fmt.terminator);
        let values = split_fields(line, fmt.delimiter).map_err(|e| Error::Malformed {
            line: line_no,
            reason: e.describe().into(),
        })?;
        if values.len() != width {
            return Err(Error::Malformed {
                line: line_no,
                reason: format!("expected {width} fields, found {}", values.len()),
            });
        }
        for (c, (v, col)) in values.iter().zip(columns.iter_mut()).enumerate() {
            let key = schema.keyed && c == 0;
            push_cell(col, v, key, fmt).map_err(|bad| match bad {
                CellError::Utf8 => invalid_utf8(line_no),
                CellError::Type => Error::Coercion {
                    line: line_no,
                    column: schema.fields[c].name.clone(),
                    value: String::from_utf8_lossy(v).into_owned(),
                    ty: schema.fields[c].ty,
                },
            })?;
        }
        rows += 1;
    }
    Ok(Table {
        fields: schema.fields.clone(),
        columns,
        rows,
    })
}

enum CellError {
    Utf8,
    Type,
}

fn push_cell(col: &mut Column, v: &[u8], key: bool, fmt: &TextFormat) -> Result<(), CellError> {
    let null = !key && fmt.is_na(v);
    match col {
        Column::Text(out) => {
            if null {
                out.push(None)
            } else {
                let s = std::str::from_utf8(v).map_err(|_| CellError::Utf8)?;
                out.push(Some(s.to_owned()))
            }
        }
        Column::Integer(out) => out.push(if null {
            None
        } else {
            Some(parse_int(v).ok_or(CellError::Type)?)
        }),
        Column::Real(out) => out.push(if null {
            None
        } else {
            Some(parse_real(v).ok_or(CellError::Type)?)
        }),
        Column::Boolean(out) => out.push(if null {
            None
        } else {
            Some(parse_bool(v).ok_or(CellError::Type)?)
        }),
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// Writing

fn check_text(s: &str, column: &str, fmt: &TextFormat) -> Result<()> {
    let reason = if s.as_bytes().contains(&fmt.delimiter) {
        "value contains the delimiter"
    } else if s.as_bytes().contains(&fmt.terminator) || s.contains('\r') {
        "value contains a line break"
    } else if s.starts_with('"') {
        "value starts with a quote"
    } else {
        return Ok(());
    };
    Err(Error::Serialize {
        column: column.to_string(),
        value: s.to_string(),
        reason,
    })
}

/// Renders `t` as delimited text. Returns the number of bytes written.
/// A table without columns writes nothing.
pub fn write_table<W: Write + ?Sized>(
    t: &Table,
    sink: &mut W,
    fmt: &TextFormat,
    write_header: bool,
) -> Result<u64> {
    if t.columns.is_empty() {
        return Ok(0);
    }
    let mut out = Vec::with_capacity(64 * (t.rows + 1));
    if write_header {
        for (i, f) in t.fields.iter().enumerate() {
            if i > 0 {
                out.push(fmt.delimiter);
            }
            check_text(&f.name, &f.name, fmt)?;
            out.extend_from_slice(f.name.as_bytes());
        }
        out.push(fmt.terminator);
    }
    let null = fmt.null_token().as_bytes();
    for r in 0..t.rows {
        for (c, col) in t.columns.iter().enumerate() {
            if c > 0 {
                out.push(fmt.delimiter);
            }
            match col.get(r) {
                Value::Null => out.extend_from_slice(null),
                Value::Integer(v) => {
                    let _ = write!(out, "{v}");
                }
                Value::Real(v) => {
                    let _ = write!(out, "{v}");
                }
                Value::Boolean(b) => out.extend_from_slice(if b { b"TRUE" } else { b"FALSE" }),
                Value::Text(s) => {
                    check_text(s, &t.fields[c].name, fmt)?;
                    out.extend_from_slice(s.as_bytes());
                }
            }
        }
        out.push(fmt.terminator);
    }
    sink.write_all(&out)?;
    Ok(out.len() as u64)
}
