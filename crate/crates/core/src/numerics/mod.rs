//! Dense linear algebra kernels and distribution functions.

mod cholesky;
mod matrix;
mod qr;
mod special;

pub use cholesky::{cholesky, spd_inverse_diagonal, spd_solve, LowerTriangular};
pub use matrix::{dot, DenseMatrix};
pub use qr::{householder_qr, QrFactors};
pub use special::{
    anderson_darling_pvalue, kolmogorov_cdf, kolmogorov_sf, std_normal_cdf, std_normal_sf,
    two_sided_normal_pvalue,
};
