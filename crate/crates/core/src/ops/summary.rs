use std::collections::{BTreeMap, HashSet};

use crate::engine::BlockView;
use crate::error::FnError;
use crate::table::{Column, Table, Value};

/// One row per column of `t`: type, numeric range and mean, null and
/// distinct counts, and the most frequent text value.
pub fn summarize_table(t: &Table) -> Table {
    let n = t.num_columns();
    let mut names = Vec::with_capacity(n);
    let mut types = Vec::with_capacity(n);
    let (mut mins, mut maxs, mut means) = (Vec::new(), Vec::new(), Vec::new());
    let (mut nulls, mut distinct, mut modes) = (Vec::new(), Vec::new(), Vec::new());

    for (field, col) in t.fields().iter().zip(t.columns()) {
        names.push(Some(field.name.clone()));
        types.push(Some(field.ty.to_string()));
        nulls.push(Some(col.null_count() as i64));
        let stats = numeric_stats(col);
        mins.push(stats.map(|s| s.0));
        maxs.push(stats.map(|s| s.1));
        means.push(stats.map(|s| s.2));
        distinct.push(Some(distinct_count(col) as i64));
        modes.push(match col {
            Column::Text(v) => text_mode(v),
            _ => None,
        });
    }
    Table::new(vec![
        ("column", Column::Text(names)),
        ("type", Column::Text(types)),
        ("min", Column::Real(mins)),
        ("max", Column::Real(maxs)),
        ("mean", Column::Real(means)),
        ("null_count", Column::Integer(nulls)),
        ("distinct_count", Column::Integer(distinct)),
        ("mode", Column::Text(modes)),
    ])
    .expect("summary columns have equal length")
}

pub fn summarize_block(view: &BlockView) -> Table {
    summarize_table(&view.body)
}

/// Table-mode adaptor for [`summarize_block`].
pub fn summary_fn() -> impl Fn(&BlockView) -> Result<Table, FnError> + Sync + Send + Clone {
    |v: &BlockView| Ok(summarize_block(v))
}

/// (min, max, mean) over non-null values of a numeric or boolean column.
fn numeric_stats(col: &Column) -> Option<(f64, f64, f64)> {
    match col {
        Column::Integer(v) => {
            let vals: Vec<i64> = v.iter().flatten().copied().collect();
            let (min, max) = (vals.iter().min()?, vals.iter().max()?);
            let sum: i128 = vals.iter().map(|&x| x as i128).sum();
            Some((*min as f64, *max as f64, sum as f64 / vals.len() as f64))
        }
        Column::Real(v) => {
            let vals: Vec<f64> = v.iter().flatten().copied().collect();
            if vals.is_empty() {
                return None;
            }
            let min = vals.iter().copied().fold(f64::INFINITY, f64::min);
            let max = vals.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let mean = vals.iter().sum::<f64>() / vals.len() as f64;
            Some((min, max, mean))
        }
        Column::Boolean(_) => {
            let vals: Vec<f64> = (0..col.len()).filter_map(|i| col.get(i).as_f64()).collect();
            if vals.is_empty() {
                return None;
            }
            let min = vals.iter().copied().fold(f64::INFINITY, f64::min);
            let max = vals.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            Some((min, max, vals.iter().sum::<f64>() / vals.len() as f64))
        }
        Column::Text(_) => None,
    }
}

fn distinct_count(col: &Column) -> usize {
    let mut seen = HashSet::new();
    for i in 0..col.len() {
        let k = match col.get(i) {
            Value::Null => continue,
            Value::Integer(v) => v.to_string(),
            Value::Real(v) => v.to_bits().to_string(),
            Value::Boolean(b) => b.to_string(),
            Value::Text(s) => s.to_string(),
        };
        seen.insert(k);
    }
    seen.len()
}

/// Most frequent value; ties go to the lexicographically smallest.
fn text_mode(values: &[Option<String>]) -> Option<String> {
    let mut counts: BTreeMap<&str, usize> = BTreeMap::new();
    for v in values.iter().flatten() {
        *counts.entry(v).or_default() += 1;
    }
    let best = counts.values().copied().max()?;
    counts
        .into_iter()
        .find(|&(_, c)| c == best)
        .map(|(s, _)| s.to_string())
}
