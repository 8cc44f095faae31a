use rayon::prelude::*;

use crate::error::{Error, Result};

/// Compressed-row sparse matrix with a cached transpose so both products
/// run row-parallel with a fixed accumulation order.
#[derive(Debug, Clone, PartialEq)]
pub struct CsrMatrix {
    rows: usize,
    cols: usize,
    row_ptr: Vec<usize>,
    col_idx: Vec<usize>,
    vals: Vec<f64>,
    t_ptr: Vec<usize>,
    t_idx: Vec<usize>,
    t_vals: Vec<f64>,
}

impl CsrMatrix {
    /// Build from `(row, col, value)` triples; duplicates are summed.
    pub fn from_triplets(rows: usize, cols: usize, mut triplets: Vec<(usize, usize, f64)>) -> Result<Self> {
        if let Some(&(i, j, _)) = triplets.iter().find(|(i, j, _)| *i >= rows || *j >= cols) {
            return Err(Error::Dimension(format!("entry ({i}, {j}) outside a {rows}x{cols} matrix")));
        }
        triplets.sort_by_key(|a| (a.0, a.1));
        let mut merged: Vec<(usize, usize, f64)> = Vec::with_capacity(triplets.len());
        for (i, j, v) in triplets {
            match merged.last_mut() {
                Some(last) if last.0 == i && last.1 == j => last.2 += v,
                _ => merged.push((i, j, v)),
            }
        }
        let (row_ptr, col_idx, vals) = compress(rows, merged.iter().map(|&(i, j, v)| (i, j, v)));
        let mut by_col = merged.clone();
        by_col.sort_by_key(|a| (a.1, a.0));
        let (t_ptr, t_idx, t_vals) = compress(cols, by_col.iter().map(|&(i, j, v)| (j, i, v)));
        Ok(CsrMatrix {
            rows,
            cols,
            row_ptr,
            col_idx,
            vals,
            t_ptr,
            t_idx,
            t_vals,
        })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn nnz(&self) -> usize {
        self.vals.len()
    }

    pub fn row(&self, i: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let r = self.row_ptr[i]..self.row_ptr[i + 1];
        self.col_idx[r.clone()].iter().copied().zip(self.vals[r].iter().copied())
    }

    pub fn triplets(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        (0..self.rows).flat_map(move |i| self.row(i).map(move |(j, v)| (i, j, v)))
    }

    pub fn mul(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.cols);
        spmv(&self.row_ptr, &self.col_idx, &self.vals, x, self.rows)
    }

    pub fn tmul(&self, y: &[f64]) -> Vec<f64> {
        assert_eq!(y.len(), self.rows);
        spmv(&self.t_ptr, &self.t_idx, &self.t_vals, y, self.cols)
    }

    pub fn row_sums(&self) -> Vec<f64> {
        self.mul(&vec![1.0; self.cols])
    }

    pub fn col_sums(&self) -> Vec<f64> {
        self.tmul(&vec![1.0; self.rows])
    }

    pub fn min_entry(&self) -> Option<f64> {
        self.vals.iter().copied().reduce(f64::min)
    }

    /// Scale every entry of row `i` by `s[i]`.
    pub fn scale_rows(&self, s: &[f64]) -> Result<Self> {
        let trips = self.triplets().map(|(i, j, v)| (i, j, v * s[i])).collect();
        CsrMatrix::from_triplets(self.rows, self.cols, trips)
    }
}

fn compress(
    n: usize,
    entries: impl Iterator<Item = (usize, usize, f64)>,
) -> (Vec<usize>, Vec<usize>, Vec<f64>) {
    let mut ptr = vec![0usize; n + 1];
    let mut idx = Vec::new();
    let mut vals = Vec::new();
    for (i, j, v) in entries {
        ptr[i + 1] += 1;
        idx.push(j);
        vals.push(v);
    }
    for i in 0..n {
        ptr[i + 1] += ptr[i];
    }
    (ptr, idx, vals)
}

fn spmv(ptr: &[usize], idx: &[usize], vals: &[f64], x: &[f64], n: usize) -> Vec<f64> {
    (0..n)
        .into_par_iter()
        .map(|i| {
            let mut s = 0.0;
            for k in ptr[i]..ptr[i + 1] {
                s += vals[k] * x[idx[k]];
            }
            s
        })
        .collect()
}
