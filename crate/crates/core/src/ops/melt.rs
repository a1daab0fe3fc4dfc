use crate::engine::BlockView;
use crate::error::FnError;
use crate::table::{Column, Table};

use super::OpsError;

/// Which columns identify a row and which are stacked into `variable`/`value`.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct MeltSpec {
    pub id_columns: Vec<String>,
    /// `None` means every column that is not an id.
    pub measure_columns: Option<Vec<String>>,
}

impl MeltSpec {
    /// Melts every column.
    pub fn all() -> Self {
        MeltSpec::default()
    }

    fn resolve(&self, body: &Table) -> Result<Vec<usize>, OpsError> {
        for id in &self.id_columns {
            if body.column_index(id).is_none() {
                return Err(OpsError::UnknownColumn(id.clone()));
            }
            if id == "variable" || id == "value" {
                return Err(OpsError::InvalidSpec(format!(
                    "id column `{id}` clashes with an output column"
                )));
            }
        }
        let measures: Vec<usize> = match &self.measure_columns {
            Some(names) => names
                .iter()
                .map(|m| {
                    if self.id_columns.contains(m) {
                        return Err(OpsError::InvalidSpec(format!(
                            "`{m}` is both an id and a measure"
                        )));
                    }
                    body.column_index(m)
                        .ok_or_else(|| OpsError::UnknownColumn(m.clone()))
                })
                .collect::<Result<_, _>>()?,
            None => body
                .fields()
                .iter()
                .enumerate()
                .filter(|(_, f)| !self.id_columns.contains(&f.name))
                .map(|(i, _)| i)
                .collect(),
        };
        if measures.is_empty() {
            return Err(OpsError::InvalidSpec("no measure columns".into()));
        }
        Ok(measures)
    }
}

/// Wide to long: one output row per (measure, row) pair, measure-major, with
/// columns `ids..., variable, value`. Values are rendered as text so columns
/// of different types can share `value`; nulls stay null.
pub fn melt_block(view: &BlockView, spec: &MeltSpec) -> Result<Table, OpsError> {
    let body = &view.body;
    let measures = spec.resolve(body)?;
    let rows = body.num_rows();
    let total = rows * measures.len();

    let mut out: Vec<(String, Column)> = Vec::with_capacity(spec.id_columns.len() + 2);
    let repeat: Vec<usize> = (0..measures.len()).flat_map(|_| 0..rows).collect();
    for id in &spec.id_columns {
        let col = body.column(id).expect("resolved above");
        out.push((id.clone(), col.take(&repeat)));
    }
    let mut variable = Vec::with_capacity(total);
    let mut value = Vec::with_capacity(total);
    for &m in &measures {
        let name = &body.fields()[m].name;
        let col = body.column_at(m);
        for r in 0..rows {
            variable.push(Some(name.clone()));
            value.push(col.get(r).render().map(|s| s.into_owned()));
        }
    }
    out.push(("variable".into(), Column::Text(variable)));
    out.push(("value".into(), Column::Text(value)));
    Ok(Table::new(out).expect("melt columns are consistent"))
}

/// Table-mode adaptor for [`melt_block`].
pub fn melt_fn(spec: MeltSpec) -> impl Fn(&BlockView) -> Result<Table, FnError> + Sync + Send + Clone {
    move |v: &BlockView| melt_block(v, &spec).map_err(Into::into)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::table::{ColumnType, Field, Value};

    fn view(body: Table) -> BlockView {
        BlockView {
            key: "k".into(),
            key_field: Field::new("id", ColumnType::Text),
            body,
        }
    }

    #[test]
    fn one_row_two_measures() {
        let body = Table::new(vec![
            ("x", Column::Integer(vec![Some(1)])),
            ("y", Column::Integer(vec![Some(2)])),
        ])
        .unwrap();
        let long = melt_block(&view(body), &MeltSpec::all()).unwrap();
        assert_eq!(long.num_rows(), 2);
        assert_eq!(long.value(0, 0), Value::Text("x"));
        assert_eq!(long.value(0, 1), Value::Text("1"));
        assert_eq!(long.value(1, 0), Value::Text("y"));
        assert_eq!(long.value(1, 1), Value::Text("2"));
    }

    #[test]
    fn empty_block_melts_to_nothing() {
        let body = Table::empty(&[Field::new("x", ColumnType::Real)]);
        let long = melt_block(&view(body), &MeltSpec::all()).unwrap();
        assert_eq!(long.num_rows(), 0);
        assert_eq!(long.names().collect::<Vec<_>>(), ["variable", "value"]);
    }

    #[test]
    fn ids_repeat_per_measure() {
        let body = Table::new(vec![
            ("t", Column::Integer(vec![Some(10), Some(20)])),
            ("a", Column::Real(vec![Some(0.5), None])),
            ("b", Column::Boolean(vec![Some(true), Some(false)])),
        ])
        .unwrap();
        let spec = MeltSpec {
            id_columns: vec!["t".into()],
            measure_columns: None,
        };
        let long = melt_block(&view(body), &spec).unwrap();
        assert_eq!(long.num_rows(), 4);
        assert_eq!(long.column_at(0), &Column::Integer(vec![Some(10), Some(20), Some(10), Some(20)]));
        assert!(long.value(1, 2).is_null());
        assert_eq!(long.value(2, 2), Value::Text("TRUE"));
    }

    #[test]
    fn unknown_column_is_config_error() {
        let body = Table::new(vec![("x", Column::Integer(vec![Some(1)]))]).unwrap();
        let spec = MeltSpec {
            id_columns: vec!["nope".into()],
            measure_columns: None,
        };
        assert_eq!(
            melt_block(&view(body), &spec),
            Err(OpsError::UnknownColumn("nope".into()))
        );
    }
}
