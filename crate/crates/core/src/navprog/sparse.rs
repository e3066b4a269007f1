//! Row-list sparse matrix used for LP constraint blocks.

use nalgebra::DMatrix;

#[derive(Debug, Clone, PartialEq, Default)]
pub struct SparseMatrix {
    pub ncols: usize,
    /// Each row as `(col, value)` pairs sorted by column, no duplicates.
    pub rows: Vec<Vec<(usize, f64)>>,
}

impl SparseMatrix {
    pub fn new(ncols: usize) -> Self {
        Self { ncols, rows: Vec::new() }
    }

    pub fn nrows(&self) -> usize {
        self.rows.len()
    }

    pub fn nnz(&self) -> usize {
        self.rows.iter().map(Vec::len).sum()
    }

    /// Appends a row; duplicate columns are summed and exact zeros dropped.
    pub fn push_row<I: IntoIterator<Item = (usize, f64)>>(&mut self, entries: I) {
        let mut row: Vec<(usize, f64)> = entries.into_iter().collect();
        row.sort_by_key(|e| e.0);
        let mut merged: Vec<(usize, f64)> = Vec::with_capacity(row.len());
        for (c, v) in row {
            assert!(c < self.ncols, "column {c} out of range {}", self.ncols);
            match merged.last_mut() {
                Some(last) if last.0 == c => last.1 += v,
                _ => merged.push((c, v)),
            }
        }
        merged.retain(|e| e.1 != 0.0);
        self.rows.push(merged);
    }

    /// Builds from `(row, col, value)` triples.
    pub fn from_triplets(nrows: usize, ncols: usize, triplets: &[(usize, usize, f64)]) -> Self {
        let mut buckets: Vec<Vec<(usize, f64)>> = vec![Vec::new(); nrows];
        for &(r, c, v) in triplets {
            buckets[r].push((c, v));
        }
        let mut m = Self::new(ncols);
        for b in buckets {
            m.push_row(b);
        }
        m
    }

    pub fn triplets(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        self.rows
            .iter()
            .enumerate()
            .flat_map(|(i, r)| r.iter().map(move |&(c, v)| (i, c, v)))
    }

    pub fn row_dot(&self, i: usize, x: &[f64]) -> f64 {
        self.rows[i].iter().map(|&(c, v)| v * x[c]).sum()
    }

    /// `A x`.
    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        (0..self.nrows()).map(|i| self.row_dot(i, x)).collect()
    }

    /// `out += A^T y`.
    pub fn add_tr_mul_vec(&self, y: &[f64], out: &mut [f64]) {
        for (r, yi) in self.rows.iter().zip(y) {
            if *yi != 0.0 {
                for &(c, v) in r {
                    out[c] += v * yi;
                }
            }
        }
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let mut d = DMatrix::zeros(self.nrows(), self.ncols);
        for (i, c, v) in self.triplets() {
            d[(i, c)] = v;
        }
        d
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn duplicates_are_summed_and_zeros_dropped() {
        let mut m = SparseMatrix::new(3);
        m.push_row([(2, 1.0), (0, 2.0), (2, 3.0), (1, 0.0)]);
        assert_eq!(m.rows[0], vec![(0, 2.0), (2, 4.0)]);
        assert_eq!(m.mul_vec(&[1.0, 1.0, 1.0]), vec![6.0]);
        let mut out = vec![0.0; 3];
        m.add_tr_mul_vec(&[2.0], &mut out);
        assert_eq!(out, vec![4.0, 0.0, 8.0]);
    }
}
