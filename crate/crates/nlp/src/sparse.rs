/// Coordinate-format sparse matrix. Duplicate entries are summed.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Triplets {
    nrows: usize,
    ncols: usize,
    entries: Vec<(usize, usize, f64)>,
}

impl Triplets {
    pub fn new(nrows: usize, ncols: usize) -> Self {
        Self {
            nrows,
            ncols,
            entries: Vec::new(),
        }
    }

    pub fn with_capacity(nrows: usize, ncols: usize, capacity: usize) -> Self {
        Self {
            nrows,
            ncols,
            entries: Vec::with_capacity(capacity),
        }
    }

    pub fn nrows(&self) -> usize {
        self.nrows
    }

    pub fn ncols(&self) -> usize {
        self.ncols
    }

    pub fn entries(&self) -> &[(usize, usize, f64)] {
        &self.entries
    }

    /// Adds `value` at `(row, col)`. Exact zeros are dropped.
    pub fn push(&mut self, row: usize, col: usize, value: f64) {
        debug_assert!(row < self.nrows && col < self.ncols, "({row}, {col}) out of bounds");
        if value != 0.0 {
            self.entries.push((row, col, value));
        }
    }

    /// `out = A x`
    pub fn mul_vec(&self, x: &[f64], out: &mut [f64]) {
        assert_eq!(x.len(), self.ncols);
        assert_eq!(out.len(), self.nrows);
        out.iter_mut().for_each(|v| *v = 0.0);
        for &(r, c, v) in &self.entries {
            out[r] += v * x[c];
        }
    }

    /// `out = Aᵀ y`
    pub fn mul_transpose_vec(&self, y: &[f64], out: &mut [f64]) {
        assert_eq!(y.len(), self.nrows);
        assert_eq!(out.len(), self.ncols);
        out.iter_mut().for_each(|v| *v = 0.0);
        for &(r, c, v) in &self.entries {
            out[c] += v * y[r];
        }
    }

    /// Row-major dense copy.
    pub fn to_dense(&self) -> Vec<Vec<f64>> {
        let mut dense = vec![vec![0.0; self.ncols]; self.nrows];
        for &(r, c, v) in &self.entries {
            dense[r][c] += v;
        }
        dense
    }

    /// Entries grouped by row, duplicates merged, columns ascending.
    pub fn rows(&self) -> Vec<Vec<(usize, f64)>> {
        let mut rows: Vec<Vec<(usize, f64)>> = vec![Vec::new(); self.nrows];
        for &(r, c, v) in &self.entries {
            rows[r].push((c, v));
        }
        for row in &mut rows {
            row.sort_by_key(|&(c, _)| c);
            row.dedup_by(|next, kept| {
                if next.0 == kept.0 {
                    kept.1 += next.1;
                    true
                } else {
                    false
                }
            });
        }
        rows
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn products_agree_with_dense() {
        let mut a = Triplets::new(2, 3);
        a.push(0, 0, 1.0);
        a.push(0, 2, 2.0);
        a.push(1, 1, -3.0);
        a.push(1, 1, 1.0);
        let mut out = [0.0; 2];
        a.mul_vec(&[1.0, 2.0, 3.0], &mut out);
        assert_eq!(out, [7.0, -4.0]);
        let mut back = [0.0; 3];
        a.mul_transpose_vec(&[1.0, 1.0], &mut back);
        assert_eq!(back, [1.0, -2.0, 2.0]);
        assert_eq!(a.rows()[1], vec![(1, -2.0)]);
    }
}
