use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::matrix::{axpy, dot, DenseMatrix};

const BLOCK: usize = 48;

/// Lower-triangular factor stored packed by rows: row `i` holds `i + 1` entries
/// starting at offset `i (i + 1) / 2`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LowerTriangular {
    dim: usize,
    data: Vec<f64>,
}

impl LowerTriangular {
    pub fn dim(&self) -> usize {
        self.dim
    }

    #[inline]
    fn row(&self, i: usize) -> &[f64] {
        let start = i * (i + 1) / 2;
        &self.data[start..start + i + 1]
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        if j > i {
            0.0
        } else {
            self.data[i * (i + 1) / 2 + j]
        }
    }

    pub fn packed(&self) -> &[f64] {
        &self.data
    }

    pub fn to_dense(&self) -> DenseMatrix {
        let n = self.dim;
        let mut m = DenseMatrix::zeros(n, n);
        for i in 0..n {
            for (j, &v) in self.row(i).iter().enumerate() {
                m.set(i, j, v);
            }
        }
        m
    }

    /// Solves `L y = b` in place.
    pub fn forward_solve(&self, b: &mut [f64]) {
        for i in 0..self.dim {
            let row = self.row(i);
            b[i] = (b[i] - dot(&row[..i], &b[..i])) / row[i];
        }
    }

    /// Solves `Lᵀ x = b` in place.
    pub fn backward_solve(&self, b: &mut [f64]) {
        for i in (0..self.dim).rev() {
            let row = self.row(i);
            b[i] /= row[i];
            let bi = b[i];
            for (bj, lij) in b[..i].iter_mut().zip(&row[..i]) {
                *bj -= lij * bi;
            }
        }
    }

    /// Solves `L Lᵀ x = b`.
    pub fn solve_vec(&self, b: &[f64]) -> Result<Vec<f64>> {
        if b.len() != self.dim {
            return Err(Error::DimensionMismatch(format!(
                "right-hand side of length {} for dimension {}",
                b.len(),
                self.dim
            )));
        }
        let mut x = b.to_vec();
        self.forward_solve(&mut x);
        self.backward_solve(&mut x);
        Ok(x)
    }

    /// `diag((L Lᵀ)⁻¹)`: entry `j` is the squared norm of column `j` of `L⁻¹`.
    pub fn inverse_diagonal(&self) -> Vec<f64> {
        let n = self.dim;
        let l = self.to_dense().into_vec();
        // M = L⁻¹, built one block row at a time
        let mut m = vec![0.0; n * n];
        for k0 in (0..n).step_by(BLOCK) {
            let k1 = (k0 + BLOCK).min(n);
            let kb = k1 - k0;
            if k0 > 0 {
                // M[I, ..k0] = -L[I, ..k0] M[..k0, ..k0], finished below by L_II⁻¹
                let (done, rest) = m.split_at_mut(k0 * n);
                // SAFETY: row-major views with leading dimension n, disjoint rows.
                unsafe {
                    matrixmultiply::dgemm(
                        kb,
                        k0,
                        k0,
                        -1.0,
                        l[k0 * n..].as_ptr(),
                        n as isize,
                        1,
                        done.as_ptr(),
                        n as isize,
                        1,
                        0.0,
                        rest.as_mut_ptr(),
                        n as isize,
                        1,
                    );
                }
            }
            for i in k0..k1 {
                m[i * n + i] = 1.0;
                for c in k0..i {
                    let lic = l[i * n + c];
                    let (above, below) = m.split_at_mut(i * n);
                    axpy(-lic, &above[c * n..c * n + k1], &mut below[..k1]);
                }
                let d = 1.0 / l[i * n + i];
                m[i * n..i * n + k1].iter_mut().for_each(|v| *v *= d);
            }
        }
        let mut out = vec![0.0; n];
        for row in m.chunks_exact(n) {
            for (o, v) in out.iter_mut().zip(row) {
                *o += v * v;
            }
        }
        out
    }

    /// `zᵀ (L Lᵀ)⁻¹ z = ‖L⁻¹ z‖²`.
    pub fn inverse_quadratic_form(&self, z: &[f64]) -> f64 {
        let mut y = z.to_vec();
        self.forward_solve(&mut y);
        dot(&y, &y)
    }
}

/// Cholesky factorization `S = L Lᵀ` of a symmetric positive-definite matrix.
///
/// Only the lower triangle of `S` is read.
pub fn cholesky(s: &DenseMatrix) -> Result<LowerTriangular> {
    let n = s.rows();
    if n != s.cols() {
        return Err(Error::DimensionMismatch(format!(
            "Cholesky needs a square matrix, got {}x{}",
            n,
            s.cols()
        )));
    }
    let mut a = s.as_slice().to_vec();
    for k0 in (0..n).step_by(BLOCK) {
        let k1 = (k0 + BLOCK).min(n);
        for i in k0..n {
            for j in k0..k1.min(i + 1) {
                let acc = dot(&a[i * n + k0..i * n + j], &a[j * n + k0..j * n + j]);
                let v = a[i * n + j] - acc;
                if i == j {
                    if v <= 0.0 || !v.is_finite() {
                        return Err(Error::NotPositiveDefinite { pivot: i, value: v });
                    }
                    a[i * n + i] = v.sqrt();
                } else {
                    a[i * n + j] = v / a[j * n + j];
                }
            }
        }
        if k1 < n {
            let rest = n - k1;
            let base = a.as_mut_ptr();
            // SAFETY: reads columns k0..k1 and writes columns k1..n of rows k1..n;
            // the regions are disjoint within one row-major n x n buffer.
            unsafe {
                matrixmultiply::dgemm(
                    rest,
                    k1 - k0,
                    rest,
                    -1.0,
                    base.add(k1 * n + k0),
                    n as isize,
                    1,
                    base.add(k1 * n + k0),
                    1,
                    n as isize,
                    1.0,
                    base.add(k1 * n + k1),
                    n as isize,
                    1,
                );
            }
        }
    }
    let mut data = Vec::with_capacity(n * (n + 1) / 2);
    for i in 0..n {
        data.extend_from_slice(&a[i * n..i * n + i + 1]);
    }
    Ok(LowerTriangular { dim: n, data })
}

/// Solves `S X = B` for symmetric positive-definite `S`.
pub fn spd_solve(s: &DenseMatrix, b: &DenseMatrix) -> Result<DenseMatrix> {
    if b.rows() != s.rows() {
        return Err(Error::DimensionMismatch(format!(
            "{}x{} system with {} right-hand-side rows",
            s.rows(),
            s.cols(),
            b.rows()
        )));
    }
    let l = cholesky(s)?;
    let mut out = DenseMatrix::zeros(b.rows(), b.cols());
    for j in 0..b.cols() {
        let x = l.solve_vec(&b.column_values(j))?;
        for (i, v) in x.into_iter().enumerate() {
            out.set(i, j, v);
        }
    }
    Ok(out)
}

/// `diag(S⁻¹)` through triangular solves on the Cholesky factor.
pub fn spd_inverse_diagonal(s: &DenseMatrix) -> Result<Vec<f64>> {
    Ok(cholesky(s)?.inverse_diagonal())
}
