//! Compressed sparse row and dense row-major matrices used by the models.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Rows above this count are processed in parallel.
const PAR_ROWS: usize = 4096;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CsrMatrix {
    n_rows: usize,
    n_cols: usize,
    row_ptr: Vec<usize>,
    col_idx: Vec<usize>,
    values: Vec<f64>,
}

impl CsrMatrix {
    /// Builds a matrix from per-row `(column, value)` lists. Entries are sorted
    /// by column and duplicates summed; explicit zeros are dropped.
    pub fn from_rows(n_cols: usize, rows: Vec<Vec<(usize, f64)>>) -> Result<Self> {
        let n_rows = rows.len();
        let mut row_ptr = Vec::with_capacity(n_rows + 1);
        let mut col_idx = Vec::new();
        let mut values = Vec::new();
        row_ptr.push(0);
        for (r, mut row) in rows.into_iter().enumerate() {
            row.sort_by_key(|&(c, _)| c);
            let mut last: Option<usize> = None;
            for (c, v) in row {
                if c >= n_cols {
                    return Err(Error::Contract(format!(
                        "row {r}: column {c} out of range for {n_cols} columns"
                    )));
                }
                if !v.is_finite() {
                    return Err(Error::Contract(format!("row {r}: non-finite entry {v}")));
                }
                if last == Some(c) {
                    *values.last_mut().unwrap() += v;
                } else {
                    col_idx.push(c);
                    values.push(v);
                    last = Some(c);
                }
            }
            // drop exact zeros produced by merging
            let start = row_ptr[r];
            let mut w = start;
            for k in start..col_idx.len() {
                if values[k] != 0.0 {
                    col_idx[w] = col_idx[k];
                    values[w] = values[k];
                    w += 1;
                }
            }
            col_idx.truncate(w);
            values.truncate(w);
            row_ptr.push(col_idx.len());
        }
        Ok(Self {
            n_rows,
            n_cols,
            row_ptr,
            col_idx,
            values,
        })
    }

    pub fn identity(n: usize) -> Self {
        Self {
            n_rows: n,
            n_cols: n,
            row_ptr: (0..=n).collect(),
            col_idx: (0..n).collect(),
            values: vec![1.0; n],
        }
    }

    pub fn from_dense(n_cols: usize, dense: &[Vec<f64>]) -> Result<Self> {
        let rows = dense
            .iter()
            .map(|r| {
                r.iter()
                    .enumerate()
                    .filter(|(_, v)| **v != 0.0)
                    .map(|(c, v)| (c, *v))
                    .collect()
            })
            .collect();
        Self::from_rows(n_cols, rows)
    }

    pub fn n_rows(&self) -> usize {
        self.n_rows
    }

    pub fn n_cols(&self) -> usize {
        self.n_cols
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    /// Column indices and values of row `r`.
    pub fn row(&self, r: usize) -> (&[usize], &[f64]) {
        let (a, b) = (self.row_ptr[r], self.row_ptr[r + 1]);
        (&self.col_idx[a..b], &self.values[a..b])
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        let (cols, vals) = self.row(r);
        match cols.binary_search(&c) {
            Ok(k) => vals[k],
            Err(_) => 0.0,
        }
    }

    pub fn row_sum(&self, r: usize) -> f64 {
        self.row(r).1.iter().sum()
    }

    /// Largest `|row sum - 1|` over all rows.
    pub fn max_row_sum_error(&self) -> f64 {
        (0..self.n_rows)
            .map(|r| (self.row_sum(r) - 1.0).abs())
            .fold(0.0, f64::max)
    }

    pub fn min_value(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    /// `y = A x`
    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.n_cols, "mul_vec dimension");
        let dot = |r: usize| {
            let (cols, vals) = self.row(r);
            cols.iter().zip(vals).map(|(&c, &v)| v * x[c]).sum::<f64>()
        };
        if self.n_rows >= PAR_ROWS {
            (0..self.n_rows).into_par_iter().map(dot).collect()
        } else {
            (0..self.n_rows).map(dot).collect()
        }
    }

    /// `y = x^T A`, i.e. `y[c] = sum_r x[r] A[r, c]`.
    pub fn tmul_vec(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.n_rows, "tmul_vec dimension");
        let mut y = vec![0.0; self.n_cols];
        for (r, &xr) in x.iter().enumerate() {
            if xr == 0.0 {
                continue;
            }
            let (cols, vals) = self.row(r);
            for (&c, &v) in cols.iter().zip(vals) {
                y[c] += xr * v;
            }
        }
        y
    }

    /// Matrix product `self * other`.
    pub fn matmul(&self, other: &CsrMatrix) -> Result<CsrMatrix> {
        if self.n_cols != other.n_rows {
            return Err(Error::Contract(format!(
                "matmul: {}x{} times {}x{}",
                self.n_rows, self.n_cols, other.n_rows, other.n_cols
            )));
        }
        let rows = (0..self.n_rows)
            .map(|r| {
                let mut acc: Vec<(usize, f64)> = Vec::new();
                let (cols, vals) = self.row(r);
                for (&k, &v) in cols.iter().zip(vals) {
                    let (c2, v2) = other.row(k);
                    acc.extend(c2.iter().zip(v2).map(|(&c, &w)| (c, v * w)));
                }
                acc
            })
            .collect();
        CsrMatrix::from_rows(other.n_cols, rows)
    }

    pub fn to_dense(&self) -> Vec<Vec<f64>> {
        (0..self.n_rows)
            .map(|r| {
                let mut row = vec![0.0; self.n_cols];
                let (cols, vals) = self.row(r);
                for (&c, &v) in cols.iter().zip(vals) {
                    row[c] = v;
                }
                row
            })
            .collect()
    }
}

/// Dense row-major matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DenseMatrix {
    n_rows: usize,
    n_cols: usize,
    data: Vec<f64>,
}

impl DenseMatrix {
    pub fn zeros(n_rows: usize, n_cols: usize) -> Self {
        Self {
            n_rows,
            n_cols,
            data: vec![0.0; n_rows * n_cols],
        }
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let n_cols = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != n_cols) {
            return Err(Error::Contract("ragged dense matrix rows".into()));
        }
        Ok(Self {
            n_rows: rows.len(),
            n_cols,
            data: rows.concat(),
        })
    }

    pub fn n_rows(&self) -> usize {
        self.n_rows
    }

    pub fn n_cols(&self) -> usize {
        self.n_cols
    }

    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.n_cols..(r + 1) * self.n_cols]
    }

    pub fn row_mut(&mut self, r: usize) -> &mut [f64] {
        &mut self.data[r * self.n_cols..(r + 1) * self.n_cols]
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.n_cols + c]
    }

    pub fn column(&self, c: usize) -> Vec<f64> {
        (0..self.n_rows).map(|r| self.get(r, c)).collect()
    }

    pub fn max_row_sum_error(&self) -> f64 {
        (0..self.n_rows)
            .map(|r| (self.row(r).iter().sum::<f64>() - 1.0).abs())
            .fold(0.0, f64::max)
    }

    pub fn min_value(&self) -> f64 {
        self.data.iter().copied().fold(f64::INFINITY, f64::min)
    }

    /// Stacks `copies` vertical copies of this matrix.
    pub fn tile_rows(&self, copies: usize) -> Self {
        Self {
            n_rows: self.n_rows * copies,
            n_cols: self.n_cols,
            data: self.data.repeat(copies),
        }
    }
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn from_rows_merges_duplicates_and_sorts() {
        let m =
            CsrMatrix::from_rows(3, vec![vec![(2, 0.5), (0, 0.25), (2, 0.25)], vec![]]).unwrap();
        assert_eq!(m.row(0), (&[0usize, 2][..], &[0.25, 0.75][..]));
        assert_eq!(m.row(1).0.len(), 0);
        assert_eq!(m.get(0, 2), 0.75);
        assert_eq!(m.get(0, 1), 0.0);
    }

    #[test]
    fn column_out_of_range_is_rejected() {
        assert!(CsrMatrix::from_rows(2, vec![vec![(2, 1.0)]]).is_err());
    }

    #[test]
    fn products_agree_with_dense() {
        let dense = vec![
            vec![0.5, 0.5, 0.0],
            vec![0.0, 0.2, 0.8],
            vec![1.0, 0.0, 0.0],
        ];
        let m = CsrMatrix::from_dense(3, &dense).unwrap();
        let x = [1.0, 2.0, 3.0];
        let y = m.mul_vec(&x);
        let yt = m.tmul_vec(&x);
        for r in 0..3 {
            let want: f64 = (0..3).map(|c| dense[r][c] * x[c]).sum();
            assert!((y[r] - want).abs() < 1e-15);
            let want_t: f64 = (0..3).map(|k| x[k] * dense[k][r]).sum();
            assert!((yt[r] - want_t).abs() < 1e-15);
        }
        let sq = m.matmul(&m).unwrap().to_dense();
        for i in 0..3 {
            for j in 0..3 {
                let want: f64 = (0..3).map(|k| dense[i][k] * dense[k][j]).sum();
                assert!((sq[i][j] - want).abs() < 1e-15);
            }
        }
        assert!(m.max_row_sum_error() < 1e-15);
    }
}
