//! Shared test support: a generated corpus kept as typed cells, an
//! independent renderer, and in-memory reference results computed straight
//! from the cells.
#![allow(dead_code)]

use std::fmt::Write as _;
use std::ops::Range;

use rand::seq::SliceRandom;
use rand::Rng;

use blockwise::chunker::{ChunkerConfig, Source};
use blockwise::engine::{BlockView, Engine, EngineConfig, MultiOutput};
use blockwise::error::FnError;
use blockwise::table::{write_table, Column, SchemaHints, Table, TextFormat, Value};

#[derive(Debug, Clone, PartialEq)]
pub enum Cell {
    Null,
    Int(i64),
    Real(f64),
    Text(String),
    Bool(bool),
}

pub fn render_cell(c: &Cell) -> String {
    match c {
        Cell::Null => "NA".into(),
        Cell::Int(v) => v.to_string(),
        Cell::Real(v) => v.to_string(),
        Cell::Text(s) => s.clone(),
        Cell::Bool(true) => "TRUE".into(),
        Cell::Bool(false) => "FALSE".into(),
    }
}

/// A keyed file: `keys[i]` is the first field of row `i`.
#[derive(Debug, Clone)]
pub struct Corpus {
    pub key_name: String,
    pub names: Vec<String>,
    pub keys: Vec<String>,
    pub rows: Vec<Vec<Cell>>,
}

pub const COLUMNS: [&str; 4] = ["n", "x", "s", "b"];

impl Corpus {
    pub fn render(&self) -> Vec<u8> {
        let mut out = String::new();
        out.push_str(&self.key_name);
        for n in &self.names {
            write!(out, "\t{n}").unwrap();
        }
        out.push('\n');
        for (k, row) in self.keys.iter().zip(&self.rows) {
            out.push_str(k);
            for c in row {
                out.push('\t');
                out.push_str(&render_cell(c));
            }
            out.push('\n');
        }
        out.into_bytes()
    }

    /// Consecutive runs of equal keys.
    pub fn blocks(&self) -> Vec<(String, Range<usize>)> {
        let mut out: Vec<(String, Range<usize>)> = Vec::new();
        for (i, k) in self.keys.iter().enumerate() {
            match out.last_mut() {
                Some((last, r)) if last == k => r.end = i + 1,
                _ => out.push((k.clone(), i..i + 1)),
            }
        }
        out
    }
}

fn random_cell<R: Rng>(rng: &mut R, col: usize, allow_null: bool) -> Cell {
    if allow_null && rng.gen_bool(0.1) {
        return Cell::Null;
    }
    match col {
        0 => Cell::Int(rng.gen_range(-100_000..100_000)),
        1 => {
            let scale = 10f64.powi(rng.gen_range(-6..8));
            let mut v: f64 = rng.gen_range(-1.0..1.0) * scale;
            if v.fract() == 0.0 {
                v += 0.5;
            }
            Cell::Real(v)
        }
        2 => {
            let words = ["alpha", "beta", "gamma delta", "é", "x-y", "w"];
            let w = words.choose(rng).unwrap();
            Cell::Text(format!("w{}{}", w, rng.gen_range(0..50)))
        }
        _ => Cell::Bool(rng.gen_bool(0.5)),
    }
}

/// A grouped corpus with at most `max_rows` rows and `max_blocks` blocks of
/// 1 to `max_block` rows. Occasionally a key reappears later as its own run.
pub fn gen_corpus<R: Rng>(rng: &mut R, max_rows: usize, max_blocks: usize, max_block: usize) -> Corpus {
    let nblocks = rng.gen_range(1..=max_blocks);
    let mut keys = Vec::new();
    let mut rows = Vec::new();
    let mut used: Vec<String> = Vec::new();
    for b in 0..nblocks {
        if rows.len() >= max_rows {
            break;
        }
        let size = if rng.gen_bool(0.1) {
            rng.gen_range(1..=max_block)
        } else {
            rng.gen_range(1..=max_block.min(30))
        }
        .min(max_rows - rows.len());
        let key = loop {
            let k = if !used.is_empty() && rng.gen_bool(0.05) {
                used.choose(rng).unwrap().clone()
            } else {
                format!("k{}", rng.gen_range(0..100_000))
            };
            if used.last() != Some(&k) {
                break k;
            }
        };
        let _ = b;
        used.push(key.clone());
        for _ in 0..size {
            let first = rows.is_empty();
            rows.push((0..COLUMNS.len()).map(|c| random_cell(rng, c, !first)).collect());
            keys.push(key.clone());
        }
    }
    Corpus {
        key_name: "id".into(),
        names: COLUMNS.iter().map(|s| s.to_string()).collect(),
        keys,
        rows,
    }
}

// ---------------------------------------------------------------------------
// Reference functions, engine side

/// First and last row of the block (one row when they coincide).
pub fn engine_pick(v: &BlockView) -> Result<Table, FnError> {
    let n = v.body.num_rows();
    let rows: Vec<usize> = if n == 1 { vec![0] } else { vec![0, n - 1] };
    Ok(v.body.take_rows(&rows))
}

fn value_cell(v: Value<'_>) -> Cell {
    match v {
        Value::Null => Cell::Null,
        Value::Integer(i) => Cell::Int(i),
        Value::Real(r) => Cell::Real(r),
        Value::Text(s) => Cell::Text(s.to_string()),
        Value::Boolean(b) => Cell::Bool(b),
    }
}

fn column_cells(c: &Column) -> Vec<Cell> {
    (0..c.len()).map(|i| value_cell(c.get(i))).collect()
}

/// Block aggregate computed from cells; shared by both sides.
#[derive(Debug, Clone, PartialEq)]
pub struct Aggregate {
    pub rows: i64,
    pub n_sum: Option<i64>,
    pub x_max: Option<f64>,
    pub s_first: Option<String>,
    pub b_any: Option<bool>,
}

pub fn aggregate(n: &[Cell], x: &[Cell], s: &[Cell], b: &[Cell]) -> Aggregate {
    let ints: Vec<i64> = n.iter().filter_map(|c| if let Cell::Int(v) = c { Some(*v) } else { None }).collect();
    let reals: Vec<f64> = x.iter().filter_map(|c| if let Cell::Real(v) = c { Some(*v) } else { None }).collect();
    let bools: Vec<bool> = b.iter().filter_map(|c| if let Cell::Bool(v) = c { Some(*v) } else { None }).collect();
    Aggregate {
        rows: n.len() as i64,
        n_sum: (!ints.is_empty()).then(|| ints.iter().sum()),
        x_max: reals.iter().copied().reduce(f64::max),
        s_first: s.iter().find_map(|c| if let Cell::Text(t) = c { Some(t.clone()) } else { None }),
        b_any: (!bools.is_empty()).then(|| bools.iter().any(|&v| v)),
    }
}

pub fn aggregate_view(body: &Table) -> Aggregate {
    let col = |name: &str| column_cells(body.column(name).expect("corpus column"));
    aggregate(&col("n"), &col("x"), &col("s"), &col("b"))
}

pub fn aggregate_table(a: &Aggregate) -> Table {
    Table::new(vec![
        ("rows", Column::Integer(vec![Some(a.rows)])),
        ("n_sum", Column::Integer(vec![a.n_sum])),
        ("x_max", Column::Real(vec![a.x_max])),
        ("s_first", Column::Text(vec![a.s_first.clone()])),
        ("b_any", Column::Boolean(vec![a.b_any])),
    ])
    .unwrap()
}

pub fn engine_aggregate(v: &BlockView) -> Result<Table, FnError> {
    Ok(aggregate_table(&aggregate_view(&v.body)))
}

pub fn engine_multi(v: &BlockView) -> Result<MultiOutput<i64>, FnError> {
    let pick = engine_pick(v)?;
    let agg = engine_aggregate(v)?;
    Ok(MultiOutput::new(vec![pick, agg], Some(v.row_count() as i64)))
}

/// Object mode sees the key column too.
pub fn engine_object(t: &Table) -> Result<(String, Aggregate), FnError> {
    let key = match t.value(0, 0) {
        Value::Text(s) => s.to_string(),
        other => return Err(format!("key is {other:?}").into()),
    };
    Ok((key, aggregate_view(t)))
}

// ---------------------------------------------------------------------------
// Reference results, oracle side

fn push_row(out: &mut String, cells: impl IntoIterator<Item = String>) {
    let v: Vec<String> = cells.into_iter().collect();
    out.push_str(&v.join("\t"));
    out.push('\n');
}

pub fn oracle_pick(c: &Corpus) -> Vec<u8> {
    let mut out = String::new();
    push_row(&mut out, std::iter::once(c.key_name.clone()).chain(c.names.iter().cloned()));
    for (key, r) in c.blocks() {
        let rows: Vec<usize> = if r.len() == 1 { vec![r.start] } else { vec![r.start, r.end - 1] };
        for i in rows {
            push_row(&mut out, std::iter::once(key.clone()).chain(c.rows[i].iter().map(render_cell)));
        }
    }
    out.into_bytes()
}

pub fn oracle_aggregates(c: &Corpus) -> Vec<(String, Aggregate)> {
    c.blocks()
        .into_iter()
        .map(|(key, r)| {
            let col = |j: usize| -> Vec<Cell> { c.rows[r.clone()].iter().map(|row| row[j].clone()).collect() };
            (key, aggregate(&col(0), &col(1), &col(2), &col(3)))
        })
        .collect()
}

pub fn oracle_aggregate_bytes(c: &Corpus) -> Vec<u8> {
    let mut out = String::new();
    push_row(
        &mut out,
        [&c.key_name, "rows", "n_sum", "x_max", "s_first", "b_any"].map(String::from),
    );
    for (key, a) in oracle_aggregates(c) {
        let opt = |x: Option<Cell>| render_cell(&x.unwrap_or(Cell::Null));
        push_row(
            &mut out,
            [
                key,
                a.rows.to_string(),
                opt(a.n_sum.map(Cell::Int)),
                opt(a.x_max.map(Cell::Real)),
                opt(a.s_first.map(Cell::Text)),
                opt(a.b_any.map(Cell::Bool)),
            ],
        );
    }
    out.into_bytes()
}

// ---------------------------------------------------------------------------
// Running the engine

pub fn config(chunk: usize, workers: usize) -> EngineConfig {
    EngineConfig {
        workers,
        chunker: ChunkerConfig {
            target_chunk_bytes: chunk,
            ..Default::default()
        },
        hints: SchemaHints {
            header: Some(true),
            ..Default::default()
        },
        ..Default::default()
    }
}

/// Outputs of every mode for one configuration.
#[derive(Debug, PartialEq)]
pub struct ModeOutputs {
    pub object: Vec<(String, String, Aggregate)>,
    pub table: Vec<u8>,
    pub stream: Vec<u8>,
    pub multi: Vec<Vec<u8>>,
    pub multi_values: Vec<(String, i64)>,
}

pub fn run_all_modes(source: &Source, cfg: EngineConfig) -> ModeOutputs {
    let engine = Engine::new(cfg).unwrap();
    let obj = engine.run_object(source, engine_object).unwrap();
    let object = obj
        .outcomes
        .into_iter()
        .map(|o| {
            let (k, a) = o.result.expect("object block ok");
            (o.key, k, a)
        })
        .collect();
    let t = engine.run_table(source, engine_pick).unwrap();
    let mut table = Vec::new();
    write_table(&t.table, &mut table, &TextFormat::default(), true).unwrap();
    let (_, stream) = engine.run_stream_to(source, Vec::new(), engine_pick).unwrap();
    let (m, multi) = engine
        .run_multi_to(source, vec![Vec::new(), Vec::new()], true, engine_multi)
        .unwrap();
    let multi_values = m
        .outcomes
        .into_iter()
        .map(|o| (o.key, o.result.expect("multi block ok")))
        .collect();
    ModeOutputs {
        object,
        table,
        stream,
        multi,
        multi_values,
    }
}

/// What `run_all_modes` must return for corpus `c`.
pub fn oracle_outputs(c: &Corpus) -> ModeOutputs {
    let aggs = oracle_aggregates(c);
    ModeOutputs {
        object: aggs.iter().map(|(k, a)| (k.clone(), k.clone(), a.clone())).collect(),
        table: oracle_pick(c),
        stream: oracle_pick(c),
        multi: vec![oracle_pick(c), oracle_aggregate_bytes(c)],
        multi_values: aggs.iter().map(|(k, a)| (k.clone(), a.rows)).collect(),
    }
}

// ---------------------------------------------------------------------------
// Least squares reference

/// Solves XᵀXβ = Xᵀy by Gaussian elimination with partial pivoting.
pub fn normal_equations(cols: &[Vec<f64>], y: &[f64]) -> Vec<f64> {
    let p = cols.len();
    let mut a = vec![vec![0.0; p + 1]; p];
    for i in 0..p {
        for j in 0..p {
            a[i][j] = cols[i].iter().zip(&cols[j]).map(|(x, z)| x * z).sum();
        }
        a[i][p] = cols[i].iter().zip(y).map(|(x, z)| x * z).sum();
    }
    for k in 0..p {
        let piv = (k..p).max_by(|&i, &j| a[i][k].abs().total_cmp(&a[j][k].abs())).unwrap();
        a.swap(k, piv);
        for i in k + 1..p {
            let f = a[i][k] / a[k][k];
            let pivot_row = a[k].clone();
            for (x, pk) in a[i][k..].iter_mut().zip(&pivot_row[k..]) {
                *x -= f * pk;
            }
        }
    }
    let mut b = vec![0.0; p];
    for i in (0..p).rev() {
        let s: f64 = (i + 1..p).map(|j| a[i][j] * b[j]).sum();
        b[i] = (a[i][p] - s) / a[i][i];
    }
    b
}
