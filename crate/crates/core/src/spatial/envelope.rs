//! Envelope (profile) Cholesky factorisation for the sparse symmetric
//! precisions that arise on sub-region graphs.
//!
//! Row `i` of the factor is stored densely from its first structural
//! non-zero `first[i]` up to the diagonal. Fill-in never leaves the envelope,
//! so the pattern is fixed per graph and can be refactored in place with new
//! numeric values. For a row-major `r × c` lattice the envelope width is `c`.

use crate::error::{Error, Result};
use crate::spatial::AdjacencyMatrix;

#[derive(Debug, Clone)]
pub struct EnvelopeCholesky {
    first: Vec<usize>,
    start: Vec<usize>,
    values: Vec<f64>,
    inv_diag: Vec<f64>,
    factored: bool,
}

impl EnvelopeCholesky {
    /// Allocates the envelope for matrices with the sparsity of `adj`
    /// (off-diagonal non-zeros exactly on its edges).
    pub fn with_pattern(adj: &AdjacencyMatrix) -> Self {
        let n = adj.n();
        let mut first = Vec::with_capacity(n);
        let mut start = Vec::with_capacity(n + 1);
        let mut len = 0;
        for i in 0..n {
            let f = adj.neighbors(i).first().copied().filter(|&j| j < i).unwrap_or(i);
            first.push(f);
            start.push(len);
            len += i - f + 1;
        }
        start.push(len);
        Self {
            first,
            start,
            values: vec![0.0; len],
            inv_diag: vec![0.0; n],
            factored: false,
        }
    }

    pub fn n(&self) -> usize {
        self.first.len()
    }

    /// Number of stored factor entries (diagnostic).
    pub fn envelope_size(&self) -> usize {
        self.values.len()
    }

    /// Factors `A` with `A[i][i] = diag(i)` and `A[i][j] = off` for every
    /// edge `(i, j)` of `adj`, zero elsewhere.
    pub fn factor(
        &mut self,
        adj: &AdjacencyMatrix,
        diag: impl Fn(usize) -> f64,
        off: f64,
    ) -> Result<()> {
        debug_assert_eq!(adj.n(), self.n());
        self.factored = false;
        let n = self.n();
        for i in 0..n {
            let fi = self.first[i];
            let si = self.start[i];
            for v in &mut self.values[si..si + i - fi] {
                *v = 0.0;
            }
            for &j in adj.neighbors(i) {
                if j < i {
                    self.values[si + j - fi] = off;
                }
            }
            for j in fi..i {
                let fj = self.first[j];
                let sj = self.start[j];
                let lo = fi.max(fj);
                let mut s = self.values[si + j - fi];
                let (row_i, row_j) = (&self.values[si + lo - fi..si + j - fi], &self.values[sj + lo - fj..sj + j - fj]);
                for (a, b) in row_i.iter().zip(row_j) {
                    s -= a * b;
                }
                self.values[si + j - fi] = s * self.inv_diag[j];
            }
            let mut d = diag(i);
            for v in &self.values[si..si + i - fi] {
                d -= v * v;
            }
            if !(d > 0.0) || !d.is_finite() {
                return Err(Error::NotPositiveDefinite { pivot: i, value: d });
            }
            let l = d.sqrt();
            self.values[si + i - fi] = l;
            self.inv_diag[i] = 1.0 / l;
        }
        self.factored = true;
        Ok(())
    }

    #[inline]
    fn diag_entry(&self, i: usize) -> f64 {
        self.values[self.start[i + 1] - 1]
    }

    /// `log det(A) = 2 Σ log L_ii`.
    pub fn logdet(&self) -> f64 {
        debug_assert!(self.factored);
        2.0 * (0..self.n()).map(|i| self.diag_entry(i).ln()).sum::<f64>()
    }

    /// Solves `L z = b` in place.
    pub fn solve_lower(&self, b: &mut [f64]) {
        for i in 0..self.n() {
            let fi = self.first[i];
            let si = self.start[i];
            let row = &self.values[si..si + i - fi];
            let mut s = b[i];
            for (l, x) in row.iter().zip(&b[fi..i]) {
                s -= l * x;
            }
            b[i] = s * self.inv_diag[i];
        }
    }

    /// Solves `Lᵀ x = z` in place.
    pub fn solve_upper(&self, z: &mut [f64]) {
        for i in (0..self.n()).rev() {
            let fi = self.first[i];
            let si = self.start[i];
            let xi = z[i] * self.inv_diag[i];
            z[i] = xi;
            let row = &self.values[si..si + i - fi];
            for (l, x) in row.iter().zip(&mut z[fi..i]) {
                *x -= l * xi;
            }
        }
    }

    /// Solves `A x = b` in place.
    pub fn solve(&self, b: &mut [f64]) {
        self.solve_lower(b);
        self.solve_upper(b);
    }

    /// Given `b` and standard-normal `z`, overwrites `b` with a draw from
    /// `N(A⁻¹ b, A⁻¹)`: `x = L⁻ᵀ (L⁻¹ b + z)`. `z` is consumed.
    pub fn sample_canonical(&self, b: &mut [f64], z: &[f64]) {
        self.solve_lower(b);
        for (x, e) in b.iter_mut().zip(z) {
            *x += e;
        }
        self.solve_upper(b);
    }

    /// `L` as a dense matrix (tests only).
    pub fn dense_lower(&self) -> nalgebra::DMatrix<f64> {
        let n = self.n();
        let mut l = nalgebra::DMatrix::zeros(n, n);
        for i in 0..n {
            let fi = self.first[i];
            for j in fi..=i {
                l[(i, j)] = self.values[self.start[i] + j - fi];
            }
        }
        l
    }
}
