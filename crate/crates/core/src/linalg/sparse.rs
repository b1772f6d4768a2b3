use faer::Mat;
use num_complex::Complex64;

use super::banded::{BandMatrix, Scalar, SymBandMatrix};

/// Real compressed-sparse-row matrix with sorted, duplicate-free columns.
#[derive(Debug, Clone, PartialEq)]
pub struct CsrMatrix {
    nrows: usize,
    ncols: usize,
    indptr: Vec<usize>,
    indices: Vec<usize>,
    values: Vec<f64>,
}

impl CsrMatrix {
    pub fn zeros(nrows: usize, ncols: usize) -> Self {
        Self {
            nrows,
            ncols,
            indptr: vec![0; nrows + 1],
            indices: Vec::new(),
            values: Vec::new(),
        }
    }

    /// Builds the matrix from `(row, col, value)` triplets. Duplicates are
    /// summed in the order given, so the result is deterministic.
    pub fn from_triplets(nrows: usize, ncols: usize, triplets: &[(usize, usize, f64)]) -> Self {
        let mut rows: Vec<Vec<(usize, f64)>> = vec![Vec::new(); nrows];
        for &(i, j, v) in triplets {
            assert!(i < nrows && j < ncols, "triplet ({i},{j}) out of bounds");
            rows[i].push((j, v));
        }
        let mut indptr = Vec::with_capacity(nrows + 1);
        let mut indices = Vec::new();
        let mut values = Vec::new();
        indptr.push(0);
        for mut row in rows {
            // stable sort keeps insertion order among duplicates
            row.sort_by_key(|&(j, _)| j);
            let mut iter = row.into_iter().peekable();
            while let Some((j, mut v)) = iter.next() {
                while let Some(&(j2, v2)) = iter.peek() {
                    if j2 != j {
                        break;
                    }
                    v += v2;
                    iter.next();
                }
                indices.push(j);
                values.push(v);
            }
            indptr.push(indices.len());
        }
        Self {
            nrows,
            ncols,
            indptr,
            indices,
            values,
        }
    }

    pub fn nrows(&self) -> usize {
        self.nrows
    }

    pub fn ncols(&self) -> usize {
        self.ncols
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn row(&self, i: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let range = self.indptr[i]..self.indptr[i + 1];
        self.indices[range.clone()]
            .iter()
            .copied()
            .zip(self.values[range].iter().copied())
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        let range = self.indptr[i]..self.indptr[i + 1];
        match self.indices[range.clone()].binary_search(&j) {
            Ok(pos) => self.values[range.start + pos],
            Err(_) => 0.0,
        }
    }

    pub fn diagonal(&self) -> Vec<f64> {
        (0..self.nrows.min(self.ncols)).map(|i| self.get(i, i)).collect()
    }

    /// Entrywise sum `self + other` over the union pattern; each entry is a
    /// single floating-point addition.
    pub fn add(&self, other: &CsrMatrix) -> CsrMatrix {
        assert_eq!((self.nrows, self.ncols), (other.nrows, other.ncols));
        let mut indptr = vec![0];
        let mut indices = Vec::new();
        let mut values = Vec::new();
        for i in 0..self.nrows {
            let mut a = self.row(i).peekable();
            let mut b = other.row(i).peekable();
            loop {
                match (a.peek().copied(), b.peek().copied()) {
                    (Some((ja, va)), Some((jb, vb))) => {
                        if ja == jb {
                            indices.push(ja);
                            values.push(va + vb);
                            a.next();
                            b.next();
                        } else if ja < jb {
                            indices.push(ja);
                            values.push(va);
                            a.next();
                        } else {
                            indices.push(jb);
                            values.push(vb);
                            b.next();
                        }
                    }
                    (Some((ja, va)), None) => {
                        indices.push(ja);
                        values.push(va);
                        a.next();
                    }
                    (None, Some((jb, vb))) => {
                        indices.push(jb);
                        values.push(vb);
                        b.next();
                    }
                    (None, None) => break,
                }
            }
            indptr.push(indices.len());
        }
        CsrMatrix {
            nrows: self.nrows,
            ncols: self.ncols,
            indptr,
            indices,
            values,
        }
    }

    /// Largest absolute entry of `self - other`.
    pub fn max_abs_diff(&self, other: &CsrMatrix) -> f64 {
        let neg = CsrMatrix {
            values: other.values.iter().map(|v| -v).collect(),
            ..other.clone()
        };
        self.add(&neg)
            .values
            .iter()
            .fold(0.0_f64, |m, v| m.max(v.abs()))
    }

    pub fn matvec<T: Scalar>(&self, x: &[T]) -> Vec<T> {
        assert_eq!(x.len(), self.ncols);
        (0..self.nrows)
            .map(|i| {
                self.row(i)
                    .fold(T::zero(), |acc, (j, v)| acc + x[j].scale(v))
            })
            .collect()
    }

    /// Infinity norm (max absolute row sum). Equals the 1-norm for symmetric
    /// matrices and bounds the spectral norm.
    pub fn norm_inf(&self) -> f64 {
        (0..self.nrows)
            .map(|i| self.row(i).map(|(_, v)| v.abs()).sum::<f64>())
            .fold(0.0, f64::max)
    }

    pub fn is_symmetric(&self) -> bool {
        self.nrows == self.ncols
            && (0..self.nrows).all(|i| self.row(i).all(|(j, v)| self.get(j, i) == v))
    }

    /// Restriction to the given row and column index lists (each ascending).
    pub fn submatrix(&self, rows: &[usize], cols: &[usize]) -> CsrMatrix {
        let mut local = vec![usize::MAX; self.ncols];
        for (k, &j) in cols.iter().enumerate() {
            local[j] = k;
        }
        let mut indptr = vec![0];
        let mut indices = Vec::new();
        let mut values = Vec::new();
        for &i in rows {
            for (j, v) in self.row(i) {
                let lj = local[j];
                if lj != usize::MAX {
                    indices.push(lj);
                    values.push(v);
                }
            }
            indptr.push(indices.len());
        }
        CsrMatrix {
            nrows: rows.len(),
            ncols: cols.len(),
            indptr,
            indices,
            values,
        }
    }

    /// Largest `|i - j|` over stored entries.
    pub fn bandwidth(&self) -> usize {
        (0..self.nrows)
            .flat_map(|i| self.row(i).map(move |(j, _)| i.abs_diff(j)))
            .max()
            .unwrap_or(0)
    }

    pub fn to_dense(&self) -> Mat<f64> {
        let mut m = Mat::zeros(self.nrows, self.ncols);
        for i in 0..self.nrows {
            for (j, v) in self.row(i) {
                m[(i, j)] = v;
            }
        }
        m
    }

    /// Banded copy of the square matrix `self - shift * diag(d)` with complex
    /// entries, ready for LU.
    pub fn to_band_shifted(&self, shift: Complex64, d: &[f64]) -> BandMatrix<Complex64> {
        assert_eq!(self.nrows, self.ncols);
        let bw = self.bandwidth();
        let mut band = BandMatrix::zeros(self.nrows, bw, bw);
        for i in 0..self.nrows {
            for (j, v) in self.row(i) {
                band.set(i, j, Complex64::new(v, 0.0));
            }
            let dii = band.get(i, i) - shift * d[i];
            band.set(i, i, dii);
        }
        band
    }

    /// Lower symmetric band of `diag(s) (self - shift * diag(d)) diag(s)`.
    pub fn to_sym_band(&self, shift: f64, d: Option<&[f64]>, s: Option<&[f64]>) -> SymBandMatrix {
        assert_eq!(self.nrows, self.ncols);
        let bw = self.bandwidth();
        let mut band = SymBandMatrix::zeros(self.nrows, bw);
        for i in 0..self.nrows {
            for (j, v) in self.row(i) {
                if j > i {
                    continue;
                }
                let mut a = v;
                if i == j {
                    a -= shift * d.map_or(1.0, |d| d[i]);
                }
                if let Some(s) = s {
                    a *= s[i] * s[j];
                }
                band.set(i, j, a);
            }
        }
        band
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn duplicate_triplets_are_summed() {
        let m = CsrMatrix::from_triplets(2, 2, &[(0, 0, 1.0), (0, 0, 2.0), (1, 0, -1.0)]);
        assert_eq!(m.get(0, 0), 3.0);
        assert_eq!(m.get(1, 0), -1.0);
        assert_eq!(m.get(1, 1), 0.0);
        assert_eq!(m.nnz(), 2);
    }

    #[test]
    fn add_and_submatrix() {
        let a = CsrMatrix::from_triplets(3, 3, &[(0, 0, 1.0), (1, 2, 2.0), (2, 1, 2.0)]);
        let b = CsrMatrix::from_triplets(3, 3, &[(0, 0, 1.5), (2, 2, 4.0)]);
        let c = a.add(&b);
        assert_eq!(c.get(0, 0), 2.5);
        assert_eq!(c.get(2, 2), 4.0);
        assert_eq!(c.max_abs_diff(&b.add(&a)), 0.0);
        let s = c.submatrix(&[1, 2], &[1, 2]);
        assert_eq!(s.get(0, 1), 2.0);
        assert_eq!(s.get(1, 1), 4.0);
        assert_eq!(c.bandwidth(), 1);
        assert!(c.is_symmetric());
    }
}
