use nalgebra::{DMatrix, DVector};

/// Compressed sparse row matrix, built row by row.
#[derive(Debug, Clone, PartialEq)]
pub struct CsrMatrix {
    ncols: usize,
    indptr: Vec<usize>,
    indices: Vec<usize>,
    values: Vec<f64>,
}

impl CsrMatrix {
    pub fn new(ncols: usize) -> Self {
        CsrMatrix {
            ncols,
            indptr: vec![0],
            indices: Vec::new(),
            values: Vec::new(),
        }
    }

    pub fn with_capacity(ncols: usize, rows: usize, nnz: usize) -> Self {
        let mut m = CsrMatrix::new(ncols);
        m.indptr.reserve(rows);
        m.indices.reserve(nnz);
        m.values.reserve(nnz);
        m
    }

    pub fn nrows(&self) -> usize {
        self.indptr.len() - 1
    }

    pub fn ncols(&self) -> usize {
        self.ncols
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    /// Appends a row from `(column, value)` pairs; exact zeros are skipped.
    pub fn push_row<I: IntoIterator<Item = (usize, f64)>>(&mut self, entries: I) {
        for (c, v) in entries {
            assert!(c < self.ncols, "column {c} out of range");
            if v != 0.0 {
                self.indices.push(c);
                self.values.push(v);
            }
        }
        self.indptr.push(self.indices.len());
    }

    /// Appends every row of a dense block, scaled by `scale`.
    pub fn push_dense(&mut self, block: &DMatrix<f64>, scale: f64) {
        assert_eq!(block.ncols(), self.ncols);
        for r in 0..block.nrows() {
            self.push_row((0..block.ncols()).map(|c| (c, scale * block[(r, c)])));
        }
    }

    pub fn from_dense(a: &DMatrix<f64>) -> Self {
        let mut m = CsrMatrix::with_capacity(a.ncols(), a.nrows(), a.len());
        m.push_dense(a, 1.0);
        m
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let mut d = DMatrix::zeros(self.nrows(), self.ncols);
        for r in 0..self.nrows() {
            for k in self.indptr[r]..self.indptr[r + 1] {
                d[(r, self.indices[k])] += self.values[k];
            }
        }
        d
    }

    /// `y = A x`
    pub fn mul_vec(&self, x: &DVector<f64>, y: &mut DVector<f64>) {
        debug_assert_eq!(x.len(), self.ncols);
        debug_assert_eq!(y.len(), self.nrows());
        for r in 0..self.nrows() {
            let mut acc = 0.0;
            for k in self.indptr[r]..self.indptr[r + 1] {
                acc += self.values[k] * x[self.indices[k]];
            }
            y[r] = acc;
        }
    }

    /// `x = Aᵀ y`
    pub fn tr_mul_vec(&self, y: &DVector<f64>, x: &mut DVector<f64>) {
        debug_assert_eq!(y.len(), self.nrows());
        x.fill(0.0);
        for r in 0..self.nrows() {
            let yr = y[r];
            if yr == 0.0 {
                continue;
            }
            for k in self.indptr[r]..self.indptr[r + 1] {
                x[self.indices[k]] += self.values[k] * yr;
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn products_match_dense() {
        let a = DMatrix::from_row_slice(3, 4, &[1.0, 0.0, 2.0, 0.0, 0.0, 0.0, 0.0, 0.0, -1.0, 3.0, 0.0, 4.0]);
        let m = CsrMatrix::from_dense(&a);
        assert_eq!(m.nnz(), 5);
        assert_eq!(m.to_dense(), a);
        let x = DVector::from_vec(vec![1.0, 2.0, 3.0, 4.0]);
        let mut y = DVector::zeros(3);
        m.mul_vec(&x, &mut y);
        assert_eq!(y, &a * &x);
        let mut z = DVector::zeros(4);
        m.tr_mul_vec(&y, &mut z);
        assert_eq!(z, a.transpose() * &y);
    }
}
