//! Compressed sparse column storage built from triplets.
//!
//! All LP constraint data goes through [`SparseMatrix`]. Entries are collected
//! as `(row, col, value)` triplets in a [`TripletBuilder`], then compressed:
//! duplicates are summed, explicit zeros are dropped and each column's row
//! indices are sorted strictly increasing.

use nalgebra::DMatrix;

use crate::error::{Error, Result};

/// Build-time triplet storage.
#[derive(Clone, Debug, Default)]
pub struct TripletBuilder {
    rows: usize,
    cols: usize,
    entries: Vec<(usize, usize, f64)>,
}

impl TripletBuilder {
    pub fn new(rows: usize, cols: usize) -> Self {
        TripletBuilder {
            rows,
            cols,
            entries: Vec::new(),
        }
    }

    pub fn with_capacity(rows: usize, cols: usize, capacity: usize) -> Self {
        TripletBuilder {
            rows,
            cols,
            entries: Vec::with_capacity(capacity),
        }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    /// Adds `value` at `(row, col)`. Zeros are ignored; repeated positions are summed
    /// on compression.
    ///
    /// Panics if the position lies outside the matrix.
    pub fn push(&mut self, row: usize, col: usize, value: f64) {
        assert!(
            row < self.rows && col < self.cols,
            "triplet ({row}, {col}) outside {}x{}",
            self.rows,
            self.cols
        );
        if value != 0.0 {
            self.entries.push((row, col, value));
        }
    }

    pub fn try_push(&mut self, row: usize, col: usize, value: f64) -> Result<()> {
        if row >= self.rows || col >= self.cols {
            return Err(Error::Dimension(format!(
                "triplet ({row}, {col}) outside {}x{}",
                self.rows, self.cols
            )));
        }
        self.push(row, col, value);
        Ok(())
    }

    pub fn build(mut self) -> SparseMatrix {
        self.entries
            .sort_unstable_by(|a, b| (a.1, a.0).cmp(&(b.1, b.0)));
        let mut col_ptr = vec![0usize; self.cols + 1];
        let mut row_idx = Vec::with_capacity(self.entries.len());
        let mut values: Vec<f64> = Vec::with_capacity(self.entries.len());
        let mut last: Option<(usize, usize)> = None;
        for &(r, c, v) in &self.entries {
            if last == Some((r, c)) {
                *values.last_mut().unwrap() += v;
                continue;
            }
            // drop a slot that summed to zero before starting a new one
            if let Some(&0.0) = values.last() {
                values.pop();
                row_idx.pop();
                col_ptr[last.unwrap().1 + 1] -= 1;
            }
            row_idx.push(r);
            values.push(v);
            col_ptr[c + 1] += 1;
            last = Some((r, c));
        }
        if let Some(&0.0) = values.last() {
            values.pop();
            row_idx.pop();
            col_ptr[last.unwrap().1 + 1] -= 1;
        }
        for c in 0..self.cols {
            col_ptr[c + 1] += col_ptr[c];
        }
        SparseMatrix {
            rows: self.rows,
            cols: self.cols,
            col_ptr,
            row_idx,
            values,
        }
    }
}

/// Query-time compressed-column matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct SparseMatrix {
    rows: usize,
    cols: usize,
    col_ptr: Vec<usize>,
    row_idx: Vec<usize>,
    values: Vec<f64>,
}

impl SparseMatrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        SparseMatrix {
            rows,
            cols,
            col_ptr: vec![0; cols + 1],
            row_idx: Vec::new(),
            values: Vec::new(),
        }
    }

    pub fn identity(n: usize) -> Self {
        SparseMatrix {
            rows: n,
            cols: n,
            col_ptr: (0..=n).collect(),
            row_idx: (0..n).collect(),
            values: vec![1.0; n],
        }
    }

    pub fn from_dense(m: &DMatrix<f64>) -> Self {
        let mut t = TripletBuilder::new(m.nrows(), m.ncols());
        for j in 0..m.ncols() {
            for i in 0..m.nrows() {
                t.push(i, j, m[(i, j)]);
            }
        }
        t.build()
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn col_ptr(&self) -> &[usize] {
        &self.col_ptr
    }

    pub fn row_indices(&self) -> &[usize] {
        &self.row_idx
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Row indices and values of column `j`.
    #[inline]
    pub fn col(&self, j: usize) -> (&[usize], &[f64]) {
        let (s, e) = (self.col_ptr[j], self.col_ptr[j + 1]);
        (&self.row_idx[s..e], &self.values[s..e])
    }

    pub fn col_nnz(&self, j: usize) -> usize {
        self.col_ptr[j + 1] - self.col_ptr[j]
    }

    /// `y · A[:, j]`
    #[inline]
    pub fn dot_col(&self, j: usize, y: &[f64]) -> f64 {
        let (ri, vs) = self.col(j);
        ri.iter().zip(vs).map(|(&i, &v)| v * y[i]).sum()
    }

    /// `acc += alpha · A[:, j]`
    #[inline]
    pub fn axpy_col(&self, j: usize, alpha: f64, acc: &mut [f64]) {
        let (ri, vs) = self.col(j);
        for (&i, &v) in ri.iter().zip(vs) {
            acc[i] += alpha * v;
        }
    }

    pub fn get(&self, row: usize, col: usize) -> f64 {
        let (ri, vs) = self.col(col);
        match ri.binary_search(&row) {
            Ok(p) => vs[p],
            Err(_) => 0.0,
        }
    }

    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.cols);
        let mut y = vec![0.0; self.rows];
        for (j, &xj) in x.iter().enumerate() {
            if xj != 0.0 {
                self.axpy_col(j, xj, &mut y);
            }
        }
        y
    }

    /// `Aᵀ y`
    pub fn tr_mul_vec(&self, y: &[f64]) -> Vec<f64> {
        assert_eq!(y.len(), self.rows);
        (0..self.cols).map(|j| self.dot_col(j, y)).collect()
    }

    pub fn transpose(&self) -> SparseMatrix {
        let mut counts = vec![0usize; self.rows + 1];
        for &r in &self.row_idx {
            counts[r + 1] += 1;
        }
        for r in 0..self.rows {
            counts[r + 1] += counts[r];
        }
        let col_ptr = counts.clone();
        let mut next = counts;
        let mut row_idx = vec![0; self.nnz()];
        let mut values = vec![0.0; self.nnz()];
        for j in 0..self.cols {
            let (ri, vs) = self.col(j);
            for (&i, &v) in ri.iter().zip(vs) {
                let p = next[i];
                row_idx[p] = j;
                values[p] = v;
                next[i] += 1;
            }
        }
        SparseMatrix {
            rows: self.cols,
            cols: self.rows,
            col_ptr,
            row_idx,
            values,
        }
    }

    /// Keeps only the listed columns, in the given order.
    pub fn select_cols(&self, cols: &[usize]) -> SparseMatrix {
        let mut col_ptr = Vec::with_capacity(cols.len() + 1);
        col_ptr.push(0);
        let mut row_idx = Vec::new();
        let mut values = Vec::new();
        for &j in cols {
            let (ri, vs) = self.col(j);
            row_idx.extend_from_slice(ri);
            values.extend_from_slice(vs);
            col_ptr.push(row_idx.len());
        }
        SparseMatrix {
            rows: self.rows,
            cols: cols.len(),
            col_ptr,
            row_idx,
            values,
        }
    }

    pub fn triplets(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        (0..self.cols).flat_map(move |j| {
            let (ri, vs) = self.col(j);
            ri.iter().zip(vs).map(move |(&i, &v)| (i, j, v))
        })
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let mut m = DMatrix::zeros(self.rows, self.cols);
        for (i, j, v) in self.triplets() {
            m[(i, j)] = v;
        }
        m
    }

    /// Checks the storage invariants: sorted, duplicate-free rows per column and no
    /// stored zeros.
    pub fn is_canonical(&self) -> bool {
        if self.col_ptr.len() != self.cols + 1 || *self.col_ptr.last().unwrap() != self.nnz() {
            return false;
        }
        (0..self.cols).all(|j| {
            let (ri, vs) = self.col(j);
            ri.windows(2).all(|w| w[0] < w[1])
                && ri.iter().all(|&r| r < self.rows)
                && vs.iter().all(|&v| v != 0.0)
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn duplicates_are_summed_and_zeros_dropped() {
        let mut t = TripletBuilder::new(3, 2);
        t.push(2, 0, 1.0);
        t.push(0, 0, 2.0);
        t.push(2, 0, 3.0);
        t.push(1, 1, 5.0);
        t.push(1, 1, -5.0);
        t.push(0, 1, 0.0);
        let m = t.build();
        assert!(m.is_canonical());
        assert_eq!(m.nnz(), 2);
        assert_eq!(m.col(0), (&[0usize, 2][..], &[2.0, 4.0][..]));
        assert_eq!(m.col_nnz(1), 0);
    }

    #[test]
    fn cancelled_entry_between_live_entries() {
        let mut t = TripletBuilder::new(3, 3);
        t.push(0, 0, 1.0);
        t.push(1, 1, 2.0);
        t.push(1, 1, -2.0);
        t.push(2, 2, 3.0);
        let m = t.build();
        assert!(m.is_canonical());
        assert_eq!(m.col_ptr(), &[0, 1, 1, 2]);
        assert_eq!(m.get(2, 2), 3.0);
    }

    #[test]
    fn products_match_dense() {
        let d = DMatrix::from_row_slice(2, 3, &[1.0, 0.0, -2.0, 0.0, 3.0, 4.0]);
        let s = SparseMatrix::from_dense(&d);
        assert_eq!(s.nnz(), 4);
        let x = [1.0, 2.0, 3.0];
        assert_eq!(s.mul_vec(&x), vec![-5.0, 18.0]);
        assert_eq!(s.tr_mul_vec(&[1.0, 1.0]), vec![1.0, 3.0, 2.0]);
        assert_eq!(s.transpose().to_dense(), d.transpose());
        assert_eq!(s.to_dense(), d);
    }

    #[test]
    fn out_of_range_triplet_is_rejected() {
        let mut t = TripletBuilder::new(2, 2);
        assert!(t.try_push(2, 0, 1.0).is_err());
    }
}
