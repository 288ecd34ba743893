//! The multi-environment dataset every test and the ICP engine consume.

use nalgebra::DMatrix;

use crate::error::{bail_arg, Result};

/// Minimum number of rows accepted by [`Dataset::new`].
pub const MIN_ROWS: usize = 20;

/// Predictor matrix, target vector and environment labels.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    /// n × p predictor matrix.
    pub x: DMatrix<f64>,
    pub y: Vec<f64>,
    /// Integer environment label per row.
    pub env: Vec<i64>,
    /// Predictor names, one per column of `x`.
    pub names: Vec<String>,
    pub target_name: String,
    /// Optional panel structure for block bootstrapping.
    pub time: Option<Vec<i64>>,
    pub unit: Option<Vec<i64>>,
}

impl Dataset {
    pub fn new(
        x: DMatrix<f64>,
        y: Vec<f64>,
        env: Vec<i64>,
        names: Vec<String>,
        target_name: impl Into<String>,
    ) -> Result<Self> {
        let n = y.len();
        if x.nrows() != n || env.len() != n {
            bail_arg!(
                "row count mismatch: x has {}, y has {}, env has {}",
                x.nrows(),
                n,
                env.len()
            );
        }
        if names.len() != x.ncols() {
            bail_arg!("{} names for {} predictor columns", names.len(), x.ncols());
        }
        if n < MIN_ROWS {
            bail_arg!("dataset has {n} rows, need at least {MIN_ROWS}");
        }
        if let Some(i) = y.iter().position(|v| !v.is_finite()) {
            bail_arg!("non-finite target value at row {}", i + 1);
        }
        if let Some(i) = x.iter().position(|v| !v.is_finite()) {
            bail_arg!("non-finite predictor value at row {}", i % n + 1);
        }
        Ok(Self {
            x,
            y,
            env,
            names,
            target_name: target_name.into(),
            time: None,
            unit: None,
        })
    }

    pub fn with_panel(mut self, unit: Vec<i64>, time: Vec<i64>) -> Result<Self> {
        if unit.len() != self.n() || time.len() != self.n() {
            bail_arg!("panel columns must have one entry per row");
        }
        self.unit = Some(unit);
        self.time = Some(time);
        Ok(self)
    }

    pub fn n(&self) -> usize {
        self.y.len()
    }

    pub fn p(&self) -> usize {
        self.x.ncols()
    }

    pub fn column(&self, j: usize) -> &[f64] {
        column(&self.x, j)
    }

    /// The sub-matrix of the given predictor columns (in the given order).
    pub fn columns(&self, cols: &[usize]) -> DMatrix<f64> {
        select_columns(&self.x, cols)
    }

    /// Environment labels in order of first appearance.
    pub fn env_levels(&self) -> Vec<i64> {
        levels_in_order(&self.env)
    }

    pub fn names_of(&self, cols: &[usize]) -> Vec<String> {
        cols.iter().map(|&j| self.names[j].clone()).collect()
    }

    pub fn name_index(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n == name)
    }
}

pub(crate) fn column(m: &DMatrix<f64>, j: usize) -> &[f64] {
    let n = m.nrows();
    &m.as_slice()[j * n..(j + 1) * n]
}

pub(crate) fn select_columns(m: &DMatrix<f64>, cols: &[usize]) -> DMatrix<f64> {
    let n = m.nrows();
    let mut data = Vec::with_capacity(n * cols.len());
    for &c in cols {
        data.extend_from_slice(column(m, c));
    }
    DMatrix::from_vec(n, cols.len(), data)
}

pub(crate) fn select_rows(m: &DMatrix<f64>, rows: &[usize]) -> DMatrix<f64> {
    DMatrix::from_fn(rows.len(), m.ncols(), |i, j| m[(rows[i], j)])
}

/// Distinct values in order of first appearance.
pub fn levels_in_order(labels: &[i64]) -> Vec<i64> {
    let mut seen = Vec::new();
    for &l in labels {
        if !seen.contains(&l) {
            seen.push(l);
        }
    }
    seen
}

/// Dense codes `0..k` assigned in order of first appearance.
pub fn encode_levels(labels: &[i64]) -> (Vec<u32>, usize) {
    let levels = levels_in_order(labels);
    let codes = labels
        .iter()
        .map(|l| levels.iter().position(|v| v == l).unwrap() as u32)
        .collect();
    (codes, levels.len())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toy(n: usize) -> Dataset {
        let x = DMatrix::from_fn(n, 2, |i, j| (i * (j + 1)) as f64);
        let y = (0..n).map(|i| i as f64).collect();
        let env = (0..n).map(|i| (i % 3) as i64 + 1).collect();
        Dataset::new(x, y, env, vec!["a".into(), "b".into()], "y").unwrap()
    }

    #[test]
    fn levels_follow_first_appearance() {
        let (codes, k) = encode_levels(&[7, 3, 7, 9, 3]);
        assert_eq!(k, 3);
        assert_eq!(codes, vec![0, 1, 0, 2, 1]);
    }

    #[test]
    fn too_few_rows_rejected() {
        let x = DMatrix::zeros(5, 1);
        let r = Dataset::new(x, vec![0.0; 5], vec![1; 5], vec!["a".into()], "y");
        assert!(r.is_err());
    }

    #[test]
    fn column_selection() {
        let d = toy(30);
        let c = d.columns(&[1]);
        assert_eq!(c.ncols(), 1);
        assert_eq!(c[(4, 0)], 8.0);
        assert_eq!(d.column(0)[4], 4.0);
    }

    #[test]
    fn non_finite_rejected() {
        let mut x = DMatrix::zeros(25, 1);
        x[(3, 0)] = f64::NAN;
        let err = Dataset::new(x, vec![0.0; 25], vec![1; 25], vec!["a".into()], "y").unwrap_err();
        assert!(err.to_string().contains("row 4"));
    }
}
