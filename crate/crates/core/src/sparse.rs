//! Dynamic symmetric sparse storage and its compressed materialization.

use std::fmt::Write as _;
use std::path::Path;

use crate::error::Result;

/// Symmetric sparse operator under mutation: per-row sorted off-diagonal
/// adjacency plus a dense diagonal. Insert/remove keep both `(u,v)` and
/// `(v,u)` so materialization is a deterministic row walk.
#[derive(Debug, Clone, PartialEq)]
pub struct DynamicSparseMatrix {
    rows: Vec<Vec<(usize, f64)>>,
    diag: Vec<f64>,
}

impl DynamicSparseMatrix {
    pub fn new(n: usize) -> Self {
        DynamicSparseMatrix {
            rows: vec![Vec::new(); n],
            diag: vec![0.0; n],
        }
    }

    pub fn dim(&self) -> usize {
        self.diag.len()
    }

    pub fn contains(&self, u: usize, v: usize) -> bool {
        self.rows[u].binary_search_by_key(&v, |&(c, _)| c).is_ok()
    }

    pub fn get(&self, u: usize, v: usize) -> Option<f64> {
        if u == v {
            return Some(self.diag[u]);
        }
        self.rows[u]
            .binary_search_by_key(&v, |&(c, _)| c)
            .ok()
            .map(|i| self.rows[u][i].1)
    }

    /// Inserts the symmetric off-diagonal pair. Panics if already present:
    /// callers track structure transitions and must not double-insert.
    pub fn insert_pair(&mut self, u: usize, v: usize, value: f64) {
        debug_assert_ne!(u, v);
        for (r, c) in [(u, v), (v, u)] {
            match self.rows[r].binary_search_by_key(&c, |&(col, _)| col) {
                Ok(_) => panic!("entry ({r},{c}) already present"),
                Err(pos) => self.rows[r].insert(pos, (c, value)),
            }
        }
    }

    /// Removes the symmetric off-diagonal pair. Panics if absent.
    pub fn remove_pair(&mut self, u: usize, v: usize) {
        debug_assert_ne!(u, v);
        for (r, c) in [(u, v), (v, u)] {
            match self.rows[r].binary_search_by_key(&c, |&(col, _)| col) {
                Ok(pos) => {
                    self.rows[r].remove(pos);
                }
                Err(_) => panic!("entry ({r},{c}) absent"),
            }
        }
    }

    /// Overwrites an existing symmetric pair's value.
    pub fn set_pair(&mut self, u: usize, v: usize, value: f64) {
        debug_assert_ne!(u, v);
        for (r, c) in [(u, v), (v, u)] {
            match self.rows[r].binary_search_by_key(&c, |&(col, _)| col) {
                Ok(pos) => self.rows[r][pos].1 = value,
                Err(_) => panic!("entry ({r},{c}) absent"),
            }
        }
    }

    pub fn diag(&self, u: usize) -> f64 {
        self.diag[u]
    }

    pub fn set_diag(&mut self, u: usize, value: f64) {
        self.diag[u] = value;
    }

    pub fn add_diag(&mut self, u: usize, delta: f64) {
        self.diag[u] += delta;
    }

    /// Off-diagonal stored entries (counting both triangles).
    pub fn off_diagonal_len(&self) -> usize {
        self.rows.iter().map(Vec::len).sum()
    }

    pub fn row(&self, u: usize) -> &[(usize, f64)] {
        &self.rows[u]
    }

    /// Materializes to compressed rows with sorted columns, adding `shift` to
    /// every diagonal entry. All `n` diagonal entries are present.
    pub fn to_csr(&self, shift: f64) -> CsrMatrix {
        let n = self.dim();
        let nnz = self.off_diagonal_len() + n;
        let mut row_ptr = Vec::with_capacity(n + 1);
        let mut col_idx = Vec::with_capacity(nnz);
        let mut values = Vec::with_capacity(nnz);
        row_ptr.push(0);
        for u in 0..n {
            let mut diag_emitted = false;
            for &(c, v) in &self.rows[u] {
                if !diag_emitted && c > u {
                    col_idx.push(u);
                    values.push(self.diag[u] + shift);
                    diag_emitted = true;
                }
                col_idx.push(c);
                values.push(v);
            }
            if !diag_emitted {
                col_idx.push(u);
                values.push(self.diag[u] + shift);
            }
            row_ptr.push(col_idx.len());
        }
        CsrMatrix {
            n,
            row_ptr,
            col_idx,
            values,
        }
    }
}

/// Immutable compressed-row matrix used for solves and parity comparison.
#[derive(Debug, Clone, PartialEq)]
pub struct CsrMatrix {
    pub n: usize,
    pub row_ptr: Vec<usize>,
    pub col_idx: Vec<usize>,
    pub values: Vec<f64>,
}

impl CsrMatrix {
    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    /// y = A x.
    pub fn matvec(&self, x: &[f64], y: &mut [f64]) {
        debug_assert_eq!(x.len(), self.n);
        debug_assert_eq!(y.len(), self.n);
        for r in 0..self.n {
            let mut acc = 0.0;
            for i in self.row_ptr[r]..self.row_ptr[r + 1] {
                acc += self.values[i] * x[self.col_idx[i]];
            }
            y[r] = acc;
        }
    }

    pub fn diagonal(&self) -> Vec<f64> {
        let mut d = vec![0.0; self.n];
        for r in 0..self.n {
            for i in self.row_ptr[r]..self.row_ptr[r + 1] {
                if self.col_idx[i] == r {
                    d[r] = self.values[i];
                }
            }
        }
        d
    }

    /// Builds a dense copy; test-scale sizes only.
    pub fn to_dense(&self) -> Vec<Vec<f64>> {
        let mut dense = vec![vec![0.0; self.n]; self.n];
        for r in 0..self.n {
            for i in self.row_ptr[r]..self.row_ptr[r + 1] {
                dense[r][self.col_idx[i]] = self.values[i];
            }
        }
        dense
    }
}

/// Structural and numeric comparison of two CSR matrices.
///
/// Returns `(mismatch_count, max_abs_diff)`. Entries present in one matrix
/// and absent in the other count as mismatches with their absolute value as
/// the difference; shared entries mismatch when they differ by more than
/// `tol`.
pub fn compare_csr(a: &CsrMatrix, b: &CsrMatrix, tol: f64) -> (u64, f64) {
    assert_eq!(a.n, b.n, "dimension mismatch");
    let mut mismatches = 0u64;
    let mut max_diff = 0.0f64;
    for r in 0..a.n {
        let (mut ia, enda) = (a.row_ptr[r], a.row_ptr[r + 1]);
        let (mut ib, endb) = (b.row_ptr[r], b.row_ptr[r + 1]);
        while ia < enda || ib < endb {
            let ca = if ia < enda { a.col_idx[ia] } else { usize::MAX };
            let cb = if ib < endb { b.col_idx[ib] } else { usize::MAX };
            if ca == cb {
                let diff = (a.values[ia] - b.values[ib]).abs();
                max_diff = max_diff.max(diff);
                if diff > tol {
                    mismatches += 1;
                }
                ia += 1;
                ib += 1;
            } else if ca < cb {
                max_diff = max_diff.max(a.values[ia].abs());
                mismatches += 1;
                ia += 1;
            } else {
                max_diff = max_diff.max(b.values[ib].abs());
                mismatches += 1;
                ib += 1;
            }
        }
    }
    (mismatches, max_diff)
}

/// Writes MatrixMarket coordinate text (general, 1-based, sorted row-major).
pub fn write_matrix_market(m: &CsrMatrix, path: &Path) -> Result<()> {
    let mut out = String::new();
    writeln!(out, "%%MatrixMarket matrix coordinate real general").unwrap();
    writeln!(out, "{} {} {}", m.n, m.n, m.nnz()).unwrap();
    for r in 0..m.n {
        for i in m.row_ptr[r]..m.row_ptr[r + 1] {
            writeln!(out, "{} {} {:.17e}", r + 1, m.col_idx[i] + 1, m.values[i]).unwrap();
        }
    }
    std::fs::write(path, out)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn insert_remove_round_trip() {
        let mut m = DynamicSparseMatrix::new(4);
        m.insert_pair(0, 2, -1.0);
        m.insert_pair(0, 1, -1.0);
        assert!(m.contains(1, 0));
        assert_eq!(m.get(2, 0), Some(-1.0));
        m.remove_pair(0, 2);
        assert!(!m.contains(2, 0));
        assert_eq!(m.off_diagonal_len(), 2);
    }

    #[test]
    #[should_panic(expected = "already present")]
    fn double_insert_panics() {
        let mut m = DynamicSparseMatrix::new(3);
        m.insert_pair(0, 1, -1.0);
        m.insert_pair(1, 0, -1.0);
    }

    #[test]
    fn csr_layout_is_sorted_and_has_full_diagonal() {
        let mut m = DynamicSparseMatrix::new(3);
        m.insert_pair(0, 2, -1.0);
        m.set_diag(0, 1.0);
        m.set_diag(2, 1.0);
        let csr = m.to_csr(0.5);
        assert_eq!(csr.nnz(), 2 + 3);
        for r in 0..3 {
            let cols = &csr.col_idx[csr.row_ptr[r]..csr.row_ptr[r + 1]];
            assert!(cols.windows(2).all(|w| w[0] < w[1]));
            assert!(cols.contains(&r));
        }
        assert_eq!(csr.diagonal(), vec![1.5, 0.5, 1.5]);
    }

    #[test]
    fn finalize_is_idempotent() {
        let mut m = DynamicSparseMatrix::new(5);
        m.insert_pair(1, 3, -1.0);
        m.insert_pair(0, 4, -1.0);
        m.add_diag(1, 1.0);
        let a = m.to_csr(1e-6);
        let b = m.to_csr(1e-6);
        assert_eq!(a, b);
    }

    #[test]
    fn compare_detects_structural_and_value_diffs() {
        let mut m1 = DynamicSparseMatrix::new(3);
        let mut m2 = DynamicSparseMatrix::new(3);
        m1.insert_pair(0, 1, -1.0);
        let a = m1.to_csr(0.0);
        let b = m2.to_csr(0.0);
        let (mis, max) = compare_csr(&a, &b, 0.0);
        assert_eq!(mis, 2);
        assert_eq!(max, 1.0);

        m2.insert_pair(0, 1, -1.0);
        m2.add_diag(2, 1e-13);
        let (mis, max) = compare_csr(&m1.to_csr(0.0), &m2.to_csr(0.0), 1e-12);
        assert_eq!(mis, 0);
        assert!(max > 0.0 && max <= 1e-12);
    }

    #[test]
    fn matvec_matches_dense() {
        let mut m = DynamicSparseMatrix::new(3);
        m.insert_pair(0, 1, -2.0);
        m.insert_pair(1, 2, 3.0);
        m.set_diag(0, 1.0);
        m.set_diag(1, 4.0);
        m.set_diag(2, 2.0);
        let csr = m.to_csr(0.0);
        let x = [1.0, 2.0, 3.0];
        let mut y = [0.0; 3];
        csr.matvec(&x, &mut y);
        let dense = csr.to_dense();
        for r in 0..3 {
            let expect: f64 = (0..3).map(|c| dense[r][c] * x[c]).sum();
            assert!((y[r] - expect).abs() < 1e-14);
        }
    }
}
