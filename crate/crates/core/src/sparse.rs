//! Symmetric sparse matrices stored as sorted adjacency rows.

use nalgebra::DMatrix;

/// A symmetric matrix with an explicit diagonal and sparse off-diagonal rows.
///
/// Every off-diagonal entry `(i, j)` is stored in both row `i` and row `j`;
/// rows are kept sorted by column.
#[derive(Debug, Clone, PartialEq)]
pub struct SymSparse {
    diag: Vec<f64>,
    rows: Vec<Vec<(usize, f64)>>,
}

impl SymSparse {
    pub fn from_diag(diag: Vec<f64>) -> Self {
        let p = diag.len();
        SymSparse {
            diag,
            rows: vec![Vec::new(); p],
        }
    }

    pub fn identity(p: usize) -> Self {
        Self::from_diag(vec![1.0; p])
    }

    /// Builds from upper-triangle entries `(i, j, v)` with `i < j`; zeros are dropped
    /// and repeated pairs keep the last value.
    pub fn from_upper(diag: Vec<f64>, entries: impl IntoIterator<Item = (usize, usize, f64)>) -> Self {
        let p = diag.len();
        let mut rows: Vec<Vec<(usize, f64)>> = vec![Vec::new(); p];
        for (i, j, v) in entries {
            debug_assert!(i < j && j < p);
            if v != 0.0 {
                rows[i].push((j, v));
                rows[j].push((i, v));
            }
        }
        for row in &mut rows {
            row.sort_by_key(|&(c, _)| c);
            // keep the last write for duplicated columns
            let mut dedup: Vec<(usize, f64)> = Vec::with_capacity(row.len());
            for &(c, v) in row.iter() {
                match dedup.last_mut() {
                    Some(last) if last.0 == c => last.1 = v,
                    _ => dedup.push((c, v)),
                }
            }
            *row = dedup;
        }
        SymSparse { diag, rows }
    }

    pub fn dim(&self) -> usize {
        self.diag.len()
    }

    pub fn diag(&self) -> &[f64] {
        &self.diag
    }

    /// Off-diagonal neighbours of `i` with their values, sorted by column.
    pub fn row(&self, i: usize) -> &[(usize, f64)] {
        &self.rows[i]
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        if i == j {
            return self.diag[i];
        }
        match self.rows[i].binary_search_by_key(&j, |&(c, _)| c) {
            Ok(pos) => self.rows[i][pos].1,
            Err(_) => 0.0,
        }
    }

    /// Number of stored off-diagonal pairs (each counted once).
    pub fn nnz_offdiag(&self) -> usize {
        self.rows.iter().map(Vec::len).sum::<usize>() / 2
    }

    /// Off-diagonal entries with `i < j`, in row-major order.
    pub fn upper_entries(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        self.rows.iter().enumerate().flat_map(|(i, row)| {
            row.iter()
                .filter(move |&&(j, _)| j > i)
                .map(move |&(j, v)| (i, j, v))
        })
    }

    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.dim());
        self.rows
            .iter()
            .enumerate()
            .map(|(i, row)| {
                self.diag[i] * x[i] + row.iter().map(|&(j, v)| v * x[j]).sum::<f64>()
            })
            .collect()
    }

    /// `self * x` with the diagonal replaced by zero.
    pub fn mul_vec_offdiag(&self, x: &[f64]) -> Vec<f64> {
        self.rows
            .iter()
            .map(|row| row.iter().map(|&(j, v)| v * x[j]).sum::<f64>())
            .collect()
    }

    /// Largest `|i - j|` over stored entries.
    pub fn bandwidth(&self) -> usize {
        self.rows
            .iter()
            .enumerate()
            .flat_map(|(i, row)| row.iter().map(move |&(j, _)| i.abs_diff(j)))
            .max()
            .unwrap_or(0)
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let p = self.dim();
        let mut m = DMatrix::zeros(p, p);
        for i in 0..p {
            m[(i, i)] = self.diag[i];
            for &(j, v) in &self.rows[i] {
                m[(i, j)] = v;
            }
        }
        m
    }

    pub fn submatrix(&self, idx: &[usize]) -> DMatrix<f64> {
        let k = idx.len();
        DMatrix::from_fn(k, k, |a, b| self.get(idx[a], idx[b]))
    }
}
