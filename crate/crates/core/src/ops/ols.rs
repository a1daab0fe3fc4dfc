//! Per-block ordinary least squares.
//!
//! The response is regressed on every other body column plus an intercept.
//! Rows with a null in any used column are dropped first. The fit uses a
//! Householder QR factorization with column pivoting; columns whose residual
//! norm falls below `RANK_TOLERANCE` times their original norm are aliased
//! and get a null coefficient.

use serde::Serialize;

use crate::engine::{BlockView, MultiOutput};
use crate::error::FnError;
use crate::table::{Column, ColumnType, Table};

use super::OpsError;

const RANK_TOLERANCE: f64 = 1e-7;
pub const INTERCEPT: &str = "(Intercept)";

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OlsResult {
    /// `(Intercept)` followed by the predictor names.
    pub terms: Vec<String>,
    /// Same order as `terms`; `None` for aliased terms.
    pub coefficients: Vec<Option<f64>>,
    pub residual_sum_squares: f64,
    /// Rows used after dropping incomplete ones.
    pub n: usize,
    pub rank: usize,
    pub rank_deficient: bool,
}

impl OlsResult {
    /// The coefficients as a one-row table, one real column per term.
    pub fn coefficient_row(&self) -> Table {
        let cols = self
            .terms
            .iter()
            .zip(&self.coefficients)
            .map(|(t, c)| (t.clone(), Column::Real(vec![*c])))
            .collect();
        Table::new(cols).expect("terms are unique")
    }
}

/// Least-squares solution of a column-major design.
#[derive(Debug, Clone, PartialEq)]
pub struct LeastSquares {
    pub coefficients: Vec<Option<f64>>,
    pub rank: usize,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Minimizes ‖y − Xβ‖² for `columns` = the columns of X, each of length
/// `y.len()`.
pub fn solve_least_squares(columns: &[Vec<f64>], y: &[f64]) -> LeastSquares {
    let n = y.len();
    let p = columns.len();
    let mut a: Vec<Vec<f64>> = columns.to_vec();
    let mut qty = y.to_vec();
    let mut perm: Vec<usize> = (0..p).collect();
    let original: Vec<f64> = a.iter().map(|c| dot(c, c).sqrt()).collect();

    let mut rank = 0;
    for k in 0..p.min(n) {
        let mut best: Option<(usize, f64)> = None;
        for j in k..p {
            let r = dot(&a[j][k..], &a[j][k..]).sqrt();
            if r > RANK_TOLERANCE * original[perm[j]] && r > 0.0 && best.is_none_or(|(_, b)| r > b) {
                best = Some((j, r));
            }
        }
        let Some((j, norm)) = best else { break };
        a.swap(k, j);
        perm.swap(k, j);

        let alpha = if a[k][k] >= 0.0 { -norm } else { norm };
        let mut v = a[k][k..].to_vec();
        v[0] -= alpha;
        let vtv = dot(&v, &v);
        if vtv > 0.0 {
            for col in a.iter_mut().skip(k + 1) {
                let s = 2.0 * dot(&v, &col[k..]) / vtv;
                for (x, vi) in col[k..].iter_mut().zip(&v) {
                    *x -= s * vi;
                }
            }
            let s = 2.0 * dot(&v, &qty[k..]) / vtv;
            for (x, vi) in qty[k..].iter_mut().zip(&v) {
                *x -= s * vi;
            }
        }
        a[k][k] = alpha;
        for x in a[k][k + 1..].iter_mut() {
            *x = 0.0;
        }
        rank = k + 1;
    }

    // Back-substitution on the leading rank × rank block of R.
    let mut beta = vec![0.0; rank];
    for i in (0..rank).rev() {
        let mut s = qty[i];
        for j in i + 1..rank {
            s -= a[j][i] * beta[j];
        }
        beta[i] = s / a[i][i];
    }
    let mut coefficients = vec![None; p];
    for (i, b) in beta.into_iter().enumerate() {
        coefficients[perm[i]] = Some(b);
    }
    LeastSquares { coefficients, rank }
}

fn numeric_values(col: &Column, name: &str) -> Result<Vec<Option<f64>>, OpsError> {
    if col.ty() == ColumnType::Text {
        return Err(OpsError::NonNumeric(name.to_string()));
    }
    Ok((0..col.len()).map(|i| col.get(i).as_f64()).collect())
}

/// Regresses `response` on all other body columns with an intercept.
pub fn ols_block(view: &BlockView, response: &str) -> Result<OlsResult, OpsError> {
    let body = &view.body;
    let yi = body
        .column_index(response)
        .ok_or_else(|| OpsError::UnknownColumn(response.to_string()))?;
    let y_all = numeric_values(body.column_at(yi), response)?;
    let mut names = Vec::new();
    let mut preds = Vec::new();
    for (i, f) in body.fields().iter().enumerate() {
        if i == yi {
            continue;
        }
        preds.push(numeric_values(body.column_at(i), &f.name)?);
        names.push(f.name.clone());
    }
    if preds.is_empty() {
        return Err(OpsError::NoPredictors);
    }

    let complete: Vec<usize> = (0..body.num_rows())
        .filter(|&r| y_all[r].is_some() && preds.iter().all(|p| p[r].is_some()))
        .collect();
    let n = complete.len();
    if n < 1 {
        return Err(OpsError::InsufficientData { n });
    }
    let y: Vec<f64> = complete.iter().map(|&r| y_all[r].unwrap()).collect();
    let mut design = Vec::with_capacity(preds.len() + 1);
    design.push(vec![1.0; n]);
    for p in &preds {
        design.push(complete.iter().map(|&r| p[r].unwrap()).collect());
    }

    let fit = solve_least_squares(&design, &y);
    let rss = (0..n)
        .map(|i| {
            let fitted: f64 = design
                .iter()
                .zip(&fit.coefficients)
                .map(|(col, b)| col[i] * b.unwrap_or(0.0))
                .sum();
            (y[i] - fitted).powi(2)
        })
        .sum();
    let mut terms = Vec::with_capacity(names.len() + 1);
    terms.push(INTERCEPT.to_string());
    terms.extend(names);
    Ok(OlsResult {
        rank_deficient: fit.rank < terms.len(),
        terms,
        coefficients: fit.coefficients,
        residual_sum_squares: rss,
        n,
        rank: fit.rank,
    })
}

/// Multi-mode adaptor: the coefficient row goes to the single output and
/// the full [`OlsResult`] is returned.
pub fn ols_as_multi_fun(
    response: impl Into<String>,
) -> impl Fn(&BlockView) -> Result<MultiOutput<OlsResult>, FnError> + Sync + Send + Clone {
    let response = response.into();
    move |v: &BlockView| {
        let fit = ols_block(v, &response)?;
        Ok(MultiOutput::new(vec![fit.coefficient_row()], Some(fit)))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::table::Field;

    fn view(cols: Vec<(&str, Column)>) -> BlockView {
        BlockView {
            key: "k".into(),
            key_field: Field::new("id", ColumnType::Text),
            body: Table::new(cols).unwrap(),
        }
    }

    fn reals(v: &[f64]) -> Column {
        Column::Real(v.iter().copied().map(Some).collect())
    }

    #[test]
    fn exact_line() {
        let v = view(vec![
            ("Y", reals(&[1.0, 3.0, 5.0, 7.0])),
            ("x", reals(&[0.0, 1.0, 2.0, 3.0])),
        ]);
        let fit = ols_block(&v, "Y").unwrap();
        let c: Vec<f64> = fit.coefficients.iter().map(|c| c.unwrap()).collect();
        assert!((c[0] - 1.0).abs() < 1e-12 && (c[1] - 2.0).abs() < 1e-12, "{c:?}");
        assert!(fit.residual_sum_squares <= 1e-20);
        assert!(!fit.rank_deficient);
        assert_eq!(fit.terms, [INTERCEPT, "x"]);
    }

    #[test]
    fn duplicated_predictor_is_aliased() {
        let x = [0.0, 1.0, 2.0, 3.0, 4.0];
        let v = view(vec![
            ("Y", reals(&[1.0, 2.5, 5.5, 7.0, 9.1])),
            ("x", reals(&x)),
            ("x2", reals(&x)),
        ]);
        let fit = ols_block(&v, "Y").unwrap();
        assert!(fit.rank_deficient);
        assert_eq!(fit.rank, 2);
        assert_eq!(fit.coefficients.iter().filter(|c| c.is_none()).count(), 1);
        assert!(fit.coefficients[0].is_some());
    }

    #[test]
    fn incomplete_rows_are_dropped() {
        let v = view(vec![
            ("Y", Column::Real(vec![Some(1.0), None, Some(3.0), Some(5.0)])),
            ("x", Column::Integer(vec![Some(0), Some(7), Some(1), Some(2)])),
        ]);
        let fit = ols_block(&v, "Y").unwrap();
        assert_eq!(fit.n, 3);
        assert!((fit.coefficients[1].unwrap() - 2.0).abs() < 1e-12);
    }

    #[test]
    fn no_complete_rows() {
        let v = view(vec![
            ("Y", Column::Real(vec![None])),
            ("x", Column::Integer(vec![Some(1)])),
        ]);
        assert_eq!(ols_block(&v, "Y"), Err(OpsError::InsufficientData { n: 0 }));
    }

    #[test]
    fn text_predictor_rejected() {
        let v = view(vec![
            ("Y", reals(&[1.0])),
            ("g", Column::Text(vec![Some("a".into())])),
        ]);
        assert_eq!(ols_block(&v, "Y"), Err(OpsError::NonNumeric("g".into())));
    }

    #[test]
    fn residuals_orthogonal_to_design() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        let n = 40;
        let cols: Vec<Vec<f64>> = std::iter::once(vec![1.0; n])
            .chain((0..3).map(|_| (0..n).map(|_| rng.gen_range(-5.0..5.0)).collect()))
            .collect();
        let y: Vec<f64> = (0..n).map(|_| rng.gen_range(-10.0..10.0)).collect();
        let fit = solve_least_squares(&cols, &y);
        let beta: Vec<f64> = fit.coefficients.iter().map(|b| b.unwrap()).collect();
        let resid: Vec<f64> = (0..n)
            .map(|i| y[i] - cols.iter().zip(&beta).map(|(c, b)| c[i] * b).sum::<f64>())
            .collect();
        let ynorm = dot(&y, &y).sqrt();
        for c in &cols {
            assert!(dot(c, &resid).abs() <= 1e-8 * ynorm);
        }
    }
}
