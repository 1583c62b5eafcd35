//! Dense row-major matrix of `f64`.

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MatrixError {
    #[error("row {row} has {found} columns, expected {expected}")]
    Ragged { row: usize, expected: usize, found: usize },
}

/// Row-major numeric matrix. A matrix may have zero rows but always knows
/// its column count.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Matrix {
    data: Vec<f64>,
    ncols: usize,
}

impl Matrix {
    pub fn empty(ncols: usize) -> Self {
        Self { data: Vec::new(), ncols }
    }

    pub fn from_rows<R: AsRef<[f64]>>(ncols: usize, rows: &[R]) -> Result<Self, MatrixError> {
        let mut m = Self::empty(ncols);
        m.data.reserve(rows.len() * ncols);
        for (i, r) in rows.iter().enumerate() {
            let r = r.as_ref();
            if r.len() != ncols {
                return Err(MatrixError::Ragged { row: i, expected: ncols, found: r.len() });
            }
            m.data.extend_from_slice(r);
        }
        Ok(m)
    }

    /// Builds a matrix from a flat row-major buffer.
    ///
    /// Panics if `data.len()` is not a multiple of `ncols`.
    pub fn from_flat(ncols: usize, data: Vec<f64>) -> Self {
        if ncols == 0 {
            assert!(data.is_empty(), "zero-column matrix cannot hold data");
        } else {
            assert_eq!(data.len() % ncols, 0, "flat buffer is not a whole number of rows");
        }
        Self { data, ncols }
    }

    pub fn push_row(&mut self, row: &[f64]) {
        assert_eq!(row.len(), self.ncols, "row width mismatch");
        self.data.extend_from_slice(row);
    }

    pub fn nrows(&self) -> usize {
        // a zero-width matrix has no rows
        self.data.len().checked_div(self.ncols).unwrap_or(0)
    }

    pub fn ncols(&self) -> usize {
        self.ncols
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.ncols..(i + 1) * self.ncols]
    }

    pub fn rows(&self) -> impl ExactSizeIterator<Item = &[f64]> + '_ {
        // chunks_exact panics on a zero chunk size
        let size = self.ncols.max(1);
        self.data.chunks_exact(size)
    }

    pub fn column(&self, j: usize) -> impl Iterator<Item = f64> + '_ {
        assert!(j < self.ncols);
        self.rows().map(move |r| r[j])
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    /// Projects every row onto the given columns, in the given order.
    pub fn select_columns(&self, columns: &[usize]) -> Matrix {
        let mut out = Matrix::empty(columns.len());
        out.data.reserve(self.nrows() * columns.len());
        for r in self.rows() {
            out.data.extend(columns.iter().map(|&c| r[c]));
        }
        out
    }

    /// Keeps the rows whose index is listed, in the listed order.
    pub fn select_rows(&self, rows: &[usize]) -> Matrix {
        let mut out = Matrix::empty(self.ncols);
        out.data.reserve(rows.len() * self.ncols);
        for &i in rows {
            out.data.extend_from_slice(self.row(i));
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ragged_rows_are_rejected() {
        let err = Matrix::from_rows(2, &[vec![1.0, 2.0], vec![3.0]]).unwrap_err();
        assert_eq!(err, MatrixError::Ragged { row: 1, expected: 2, found: 1 });
    }

    #[test]
    fn projection_keeps_row_order() {
        let m = Matrix::from_rows(3, &[[1.0, 2.0, 3.0], [4.0, 5.0, 6.0]]).unwrap();
        let p = m.select_columns(&[2, 0]);
        assert_eq!(p.row(0), &[3.0, 1.0]);
        assert_eq!(p.row(1), &[6.0, 4.0]);
        assert_eq!(m.select_rows(&[1]).row(0), &[4.0, 5.0, 6.0]);
        assert_eq!(m.column(1).collect::<Vec<_>>(), vec![2.0, 5.0]);
    }

    #[test]
    fn zero_width_matrix_has_no_rows() {
        let m = Matrix::empty(0);
        assert_eq!(m.nrows(), 0);
        assert_eq!(m.rows().count(), 0);
    }
}
