use crate::error::{Error, Result};
use crate::numerics::matrix::{axpy, dot, DenseMatrix};

/// Thin QR factorization `A = Q R` with `Q` of size `rows x cols` and `R` upper
/// triangular with a nonnegative diagonal.
#[derive(Clone, Debug)]
pub struct QrFactors {
    pub q: DenseMatrix,
    pub r: DenseMatrix,
}

/// Householder QR of a tall matrix.
///
/// Each column of `Q` whose `R` diagonal came out negative is flipped, together
/// with the matching row of `R`, so that `diag(R) >= 0`. With that convention the
/// factorization of a Gaussian matrix yields a Haar-distributed `Q`.
pub fn householder_qr(a: &DenseMatrix) -> Result<QrFactors> {
    let m = a.rows();
    let n = a.cols();
    if m < n {
        return Err(Error::DimensionMismatch(format!(
            "QR needs rows >= cols, got {m}x{n}"
        )));
    }
    let scale = a.max_abs();

    // column-major working copy so reflectors act on contiguous slices
    let mut work = vec![0.0; m * n];
    for i in 0..m {
        for (j, &v) in a.row(i).iter().enumerate() {
            work[j * m + i] = v;
        }
    }

    let mut blocks: Vec<Block> = Vec::with_capacity(n.div_ceil(BLOCK));
    let mut diag = vec![0.0; n];
    for k0 in (0..n).step_by(BLOCK) {
        let kb = BLOCK.min(n - k0);
        let rows = m - k0;
        let mut v = vec![0.0; rows * kb];
        let mut betas = vec![0.0; kb];
        for j in 0..kb {
            let k = k0 + j;
            let (head, tail) = work.split_at_mut((k + 1) * m);
            let x = &mut head[k * m + k..];
            let norm = dot(x, x).sqrt();
            let alpha = if x[0] >= 0.0 { -norm } else { norm };
            let vj = &mut v[j * rows + j..(j + 1) * rows];
            vj.copy_from_slice(x);
            vj[0] -= alpha;
            let vnorm2 = dot(vj, vj);
            let beta = if vnorm2 > 0.0 { 2.0 / vnorm2 } else { 0.0 };
            diag[k] = alpha;
            x[0] = alpha;
            x[1..].iter_mut().for_each(|e| *e = 0.0);
            betas[j] = beta;
            if beta > 0.0 {
                for col in tail.chunks_exact_mut(m).take(kb - j - 1) {
                    let c = &mut col[k..];
                    let s = beta * dot(vj, c);
                    axpy(-s, vj, c);
                }
            }
        }
        let block = Block::new(k0, rows, kb, v, &betas);
        let trailing = n - k0 - kb;
        if trailing > 0 {
            block.apply(&mut work[(k0 + kb) * m..], m, trailing, true);
        }
        blocks.push(block);
    }

    if let Some((column, value)) = diag
        .iter()
        .enumerate()
        .find(|(_, d)| d.abs() < 1e-12 * scale || scale == 0.0)
        .map(|(j, d)| (j, d.abs()))
    {
        return Err(Error::RankDeficient { column, value });
    }

    // Q = H_0 H_1 ... H_{n-1} applied to the first n columns of I
    let mut q = vec![0.0; m * n];
    for j in 0..n {
        q[j * m + j] = 1.0;
    }
    for block in blocks.iter().rev() {
        let k0 = block.offset;
        block.apply(&mut q[k0 * m..], m, n - k0, false);
    }

    let mut r = vec![0.0; n * n];
    for j in 0..n {
        for i in 0..=j {
            r[i * n + j] = work[j * m + i];
        }
    }
    for k in 0..n {
        if diag[k] < 0.0 {
            r[k * n + k..(k + 1) * n].iter_mut().for_each(|v| *v = -*v);
            q[k * m..(k + 1) * m].iter_mut().for_each(|v| *v = -*v);
        }
    }

    let mut q_rows = vec![0.0; m * n];
    for j in 0..n {
        for i in 0..m {
            q_rows[i * n + j] = q[j * m + i];
        }
    }
    Ok(QrFactors {
        q: DenseMatrix::from_raw(m, n, q_rows),
        r: DenseMatrix::from_raw(n, n, r),
    })
}

const BLOCK: usize = 32;

/// A run of reflectors `H_k0 ... H_{k0+kb-1}` in compact form `I - V T Vᵀ`,
/// with `V` stored column-major over rows `k0..m`.
struct Block {
    offset: usize,
    rows: usize,
    width: usize,
    v: Vec<f64>,
    t: Vec<f64>,
}

impl Block {
    fn new(offset: usize, rows: usize, width: usize, v: Vec<f64>, betas: &[f64]) -> Self {
        // T is upper triangular, stored column-major
        let mut t = vec![0.0; width * width];
        for j in 0..width {
            let vj = &v[j * rows..(j + 1) * rows];
            let w: Vec<f64> = (0..j)
                .map(|i| dot(&v[i * rows..(i + 1) * rows], vj))
                .collect();
            for i in 0..j {
                let s: f64 = (i..j).map(|l| t[l * width + i] * w[l]).sum();
                t[j * width + i] = -betas[j] * s;
            }
            t[j * width + j] = betas[j];
        }
        Block {
            offset,
            rows,
            width,
            v,
            t,
        }
    }

    /// Overwrites rows `offset..` of the column-major `c` (leading dimension
    /// `ld`, `cols` columns) with `(I - V Tᵀ Vᵀ) C` when `transpose` is set and
    /// `(I - V T Vᵀ) C` otherwise.
    fn apply(&self, c: &mut [f64], ld: usize, cols: usize, transpose: bool) {
        let (rows, kb) = (self.rows, self.width);
        let c = &mut c[self.offset..];
        let mut w = vec![0.0; kb * cols];
        // W = Vᵀ C, kb x cols row-major
        unsafe {
            matrixmultiply::dgemm(
                kb,
                rows,
                cols,
                1.0,
                self.v.as_ptr(),
                rows as isize,
                1,
                c.as_ptr(),
                1,
                ld as isize,
                0.0,
                w.as_mut_ptr(),
                cols as isize,
                1,
            );
        }
        let mut tw = vec![0.0; kb * cols];
        for i in 0..kb {
            for l in 0..kb {
                let coef = if transpose {
                    self.t[i * kb + l]
                } else {
                    self.t[l * kb + i]
                };
                if coef != 0.0 {
                    axpy(
                        coef,
                        &w[l * cols..(l + 1) * cols],
                        &mut tw[i * cols..(i + 1) * cols],
                    );
                }
            }
        }
        // C -= V (T W)
        unsafe {
            matrixmultiply::dgemm(
                rows,
                kb,
                cols,
                -1.0,
                self.v.as_ptr(),
                1,
                rows as isize,
                tw.as_ptr(),
                cols as isize,
                1,
                1.0,
                c.as_mut_ptr(),
                1,
                ld as isize,
            );
        }
    }
}
