//! Seeded random designs: Haar-uniform orthonormal frames, AR(1) Gaussian
//! rows, column rescaling and sparse signal placement.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::{householder_qr, DenseMatrix};

/// Generator used for every simulated quantity.
pub type SimRng = ChaCha8Rng;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DesignKind {
    /// `n^{-1/2} X` uniform on the Stiefel manifold of orthonormal p-frames.
    StiefelUniform,
    /// Rows i.i.d. `N(0, Σ)` with `Σ_jk = ρ^{|j-k|}`.
    GaussianAr1 { rho: f64 },
}

impl DesignKind {
    pub fn validate(&self) -> Result<()> {
        if let Self::GaussianAr1 { rho } = *self {
            if !(0.0..1.0).contains(&rho) {
                return Err(Error::Config(format!("rho must lie in [0, 1), got {rho}")));
            }
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DesignSpec {
    pub kind: DesignKind,
    pub n: usize,
    pub p: usize,
    pub rescale_columns: bool,
}

impl DesignSpec {
    pub fn new(kind: DesignKind, n: usize, p: usize) -> Result<Self> {
        let spec = Self {
            kind,
            n,
            p,
            rescale_columns: false,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        self.kind.validate()?;
        if self.n == 0 || self.p == 0 {
            return Err(Error::Config(format!(
                "design needs n, p >= 1, got n = {}, p = {}",
                self.n, self.p
            )));
        }
        if matches!(self.kind, DesignKind::StiefelUniform) && self.p > self.n {
            return Err(Error::Config(format!(
                "orthonormal design needs p <= n, got p = {} > n = {}",
                self.p, self.n
            )));
        }
        Ok(())
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<DenseMatrix> {
        self.validate()?;
        let x = match self.kind {
            DesignKind::StiefelUniform => sample_stiefel(self.n, self.p, rng)?,
            DesignKind::GaussianAr1 { rho } => sample_gaussian_ar1(self.n, self.p, rho, rng)?,
        };
        if self.rescale_columns {
            rescale_to_sqrt_n(&x)
        } else {
            Ok(x)
        }
    }
}

/// A master seed plus a path of indices naming one random stream.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct SeedPath {
    pub master_seed: u64,
    pub path: Vec<u64>,
}

impl SeedPath {
    pub fn new(master_seed: u64, path: Vec<u64>) -> Self {
        Self { master_seed, path }
    }

    pub fn child(&self, index: u64) -> Self {
        let mut path = self.path.clone();
        path.push(index);
        Self {
            master_seed: self.master_seed,
            path,
        }
    }
}

const GOLDEN_GAMMA: u64 = 0x9E37_79B9_7F4A_7C15;

/// SplitMix64 finalizer.
#[inline]
fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Deterministic generator for a seed path. Each path element is folded into
/// the state together with its position, so `[a, b]` and `[b, a]` differ.
pub fn derive_rng(seed_path: &SeedPath) -> SimRng {
    let mut state = mix64(seed_path.master_seed ^ GOLDEN_GAMMA);
    for (pos, &idx) in seed_path.path.iter().enumerate() {
        let salt = (pos as u64 + 1).wrapping_mul(GOLDEN_GAMMA);
        state = mix64(state ^ mix64(idx.wrapping_add(salt)));
    }
    let mut seed = [0u8; 32];
    for chunk in seed.chunks_exact_mut(8) {
        state = state.wrapping_add(GOLDEN_GAMMA);
        chunk.copy_from_slice(&mix64(state).to_le_bytes());
    }
    SimRng::from_seed(seed)
}

fn standard_normal_matrix<R: Rng + ?Sized>(n: usize, p: usize, rng: &mut R) -> Vec<f64> {
    (0..n * p).map(|_| StandardNormal.sample(rng)).collect()
}

/// `X = √n Q` where `Q` is the sign-corrected Householder factor of an `n x p`
/// Gaussian matrix, so `n^{-1/2} X` is Haar on the Stiefel manifold.
pub fn sample_stiefel<R: Rng + ?Sized>(n: usize, p: usize, rng: &mut R) -> Result<DenseMatrix> {
    if p == 0 || p > n {
        return Err(Error::Config(format!(
            "orthonormal design needs 1 <= p <= n, got n = {n}, p = {p}"
        )));
    }
    let g = DenseMatrix::from_raw(n, p, standard_normal_matrix(n, p, rng));
    let q = householder_qr(&g)?.q;
    let scale = (n as f64).sqrt();
    let data = q.into_vec().into_iter().map(|v| v * scale).collect();
    Ok(DenseMatrix::from_raw(n, p, data))
}

/// Rows `x_1 = z_1`, `x_j = ρ x_{j-1} + √(1-ρ²) z_j`, exact for AR(1) covariance.
pub fn sample_gaussian_ar1<R: Rng + ?Sized>(
    n: usize,
    p: usize,
    rho: f64,
    rng: &mut R,
) -> Result<DenseMatrix> {
    DesignKind::GaussianAr1 { rho }.validate()?;
    if n == 0 || p == 0 {
        return Err(Error::Config(format!("empty design {n}x{p}")));
    }
    let mut data = standard_normal_matrix(n, p, rng);
    if rho != 0.0 {
        let innov = (1.0 - rho * rho).sqrt();
        for row in data.chunks_exact_mut(p) {
            for j in 1..p {
                row[j] = rho * row[j - 1] + innov * row[j];
            }
        }
    }
    Ok(DenseMatrix::from_raw(n, p, data))
}

/// Scales each column to Euclidean norm `√n`.
pub fn rescale_to_sqrt_n(x: &DenseMatrix) -> Result<DenseMatrix> {
    let (n, p) = (x.rows(), x.cols());
    let mut norms = vec![0.0; p];
    for i in 0..n {
        for (acc, v) in norms.iter_mut().zip(x.row(i)) {
            *acc += v * v;
        }
    }
    if let Some(j) = norms.iter().position(|&s| s == 0.0) {
        return Err(Error::ZeroColumn(j));
    }
    let target = (n as f64).sqrt();
    let factors: Vec<f64> = norms.iter().map(|s| target / s.sqrt()).collect();
    let mut data = x.as_slice().to_vec();
    for row in data.chunks_exact_mut(p) {
        for (v, f) in row.iter_mut().zip(&factors) {
            *v *= f;
        }
    }
    DenseMatrix::from_row_major(n, p, data)
}

/// Sparse coefficient vector: `s` coordinates drawn without replacement from
/// all but the first, half set to `+magnitude` and half to `-magnitude`.
/// The first coordinate is the tested one and always stays zero.
pub fn place_signals<R: Rng + ?Sized>(
    p: usize,
    s: usize,
    magnitude: f64,
    rng: &mut R,
) -> Result<Vec<f64>> {
    if !s.is_multiple_of(2) {
        return Err(Error::Config(format!("sparsity must be even, got {s}")));
    }
    if p == 0 || s > p - 1 {
        return Err(Error::Config(format!(
            "sparsity {s} exceeds the {} non-tested coordinates",
            p.saturating_sub(1)
        )));
    }
    let mut beta = vec![0.0; p];
    if s == 0 {
        return Ok(beta);
    }
    let mut chosen: Vec<usize> = rand::seq::index::sample(rng, p - 1, s)
        .into_iter()
        .map(|i| i + 1)
        .collect();
    chosen.shuffle(rng);
    for (k, &j) in chosen.iter().enumerate() {
        beta[j] = if k < s / 2 { magnitude } else { -magnitude };
    }
    Ok(beta)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::RngCore;

    fn gram_defect(x: &DenseMatrix) -> f64 {
        let n = x.rows() as f64;
        let g = x.transpose().matmul(x).unwrap();
        let mut worst = 0.0_f64;
        for i in 0..x.cols() {
            for j in 0..x.cols() {
                let target = if i == j { 1.0 } else { 0.0 };
                worst = worst.max((g.get(i, j) / n - target).abs());
            }
        }
        worst
    }

    #[test]
    fn rng_is_path_deterministic() {
        let a: Vec<u64> = {
            let mut r = derive_rng(&SeedPath::new(42, vec![1, 2, 3]));
            (0..1000).map(|_| r.next_u64()).collect()
        };
        let b: Vec<u64> = {
            let mut r = derive_rng(&SeedPath::new(42, vec![1, 2, 3]));
            (0..1000).map(|_| r.next_u64()).collect()
        };
        assert_eq!(a, b);
        let mut swapped = derive_rng(&SeedPath::new(42, vec![2, 1, 3]));
        assert_ne!(swapped.next_u64(), a[0]);
        let mut longer = derive_rng(&SeedPath::new(42, vec![1, 2, 3, 0]));
        assert_ne!(longer.next_u64(), a[0]);
        let mut empty = derive_rng(&SeedPath::new(42, vec![]));
        let mut empty2 = derive_rng(&SeedPath::new(42, vec![]));
        assert_eq!(empty.next_u64(), empty2.next_u64());
        let mut other_master = derive_rng(&SeedPath::new(43, vec![]));
        assert_ne!(
            other_master.next_u64(),
            derive_rng(&SeedPath::new(42, vec![])).next_u64()
        );
    }

    #[test]
    fn sibling_streams_look_independent() {
        // chi-square test on the 16x16 contingency table of paired top nibbles
        let mut r0 = derive_rng(&SeedPath::new(7, vec![0]));
        let mut r1 = derive_rng(&SeedPath::new(7, vec![1]));
        let mut table = [[0usize; 16]; 16];
        let draws = 10_000;
        for _ in 0..draws {
            let a = (r0.next_u64() >> 60) as usize;
            let b = (r1.next_u64() >> 60) as usize;
            table[a][b] += 1;
        }
        let rows: Vec<usize> = table.iter().map(|r| r.iter().sum()).collect();
        let cols: Vec<usize> = (0..16).map(|j| table.iter().map(|r| r[j]).sum()).collect();
        let mut chi2 = 0.0;
        for i in 0..16 {
            for j in 0..16 {
                let e = rows[i] as f64 * cols[j] as f64 / draws as f64;
                chi2 += (table[i][j] as f64 - e).powi(2) / e;
            }
        }
        // 225 degrees of freedom; the 1 - 1e-4 quantile is about 318
        assert!(chi2 < 318.0, "chi2 = {chi2}");
    }

    #[test]
    fn stiefel_is_orthonormal() {
        let mut rng = derive_rng(&SeedPath::new(1, vec![]));
        let x = sample_stiefel(200, 40, &mut rng).unwrap();
        assert!(gram_defect(&x) <= 1e-10);
        for j in 0..40 {
            let norm: f64 = x.column_values(j).iter().map(|v| v * v).sum::<f64>().sqrt();
            assert!((norm - 200f64.sqrt()).abs() <= 1e-8);
        }
        let rescaled = rescale_to_sqrt_n(&x).unwrap();
        let worst = rescaled
            .as_slice()
            .iter()
            .zip(x.as_slice())
            .fold(0.0_f64, |m, (a, b)| m.max((a - b).abs()));
        assert!(worst <= 1e-10);
        assert!(sample_stiefel(5, 6, &mut rng).is_err());
    }

    #[test]
    fn stiefel_single_column_is_sign_symmetric() {
        let mut rng = derive_rng(&SeedPath::new(2, vec![]));
        let draws = 10_000;
        let mut positive = 0;
        let mut sum = 0.0;
        for _ in 0..draws {
            let x = sample_stiefel(10, 1, &mut rng).unwrap();
            let v = x.get(0, 0) / 10f64.sqrt();
            sum += v;
            if v > 0.0 {
                positive += 1;
            }
        }
        // 4 sigma binomial band around 5000
        assert!((positive as f64 - 5000.0).abs() <= 200.0, "{positive}");
        // coordinate variance is 1/n = 0.1
        assert!((sum / draws as f64).abs() <= 4.0 * (0.1f64 / draws as f64).sqrt());
    }

    fn corr(x: &DenseMatrix, a: usize, b: usize) -> f64 {
        let n = x.rows() as f64;
        let ca = x.column_values(a);
        let cb = x.column_values(b);
        let ma = ca.iter().sum::<f64>() / n;
        let mb = cb.iter().sum::<f64>() / n;
        let cov: f64 = ca
            .iter()
            .zip(&cb)
            .map(|(u, v)| (u - ma) * (v - mb))
            .sum::<f64>()
            / n;
        let va: f64 = ca.iter().map(|u| (u - ma).powi(2)).sum::<f64>() / n;
        let vb: f64 = cb.iter().map(|v| (v - mb).powi(2)).sum::<f64>() / n;
        cov / (va * vb).sqrt()
    }

    #[test]
    fn ar1_moments() {
        let mut rng = derive_rng(&SeedPath::new(3, vec![]));
        let x = sample_gaussian_ar1(10_000, 10, 0.0, &mut rng).unwrap();
        let n = x.as_slice().len() as f64;
        let mean = x.as_slice().iter().sum::<f64>() / n;
        let var = x.as_slice().iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
        assert!((0.98..=1.02).contains(&var), "{var}");

        let x = sample_gaussian_ar1(100_000, 2, 0.5, &mut rng).unwrap();
        let r = corr(&x, 0, 1);
        assert!((0.49..=0.51).contains(&r), "{r}");

        let x = sample_gaussian_ar1(100_000, 4, 0.8, &mut rng).unwrap();
        let r = corr(&x, 0, 3);
        assert!((r - 0.512).abs() <= 0.01, "{r}");

        assert!(sample_gaussian_ar1(10, 2, 1.0, &mut rng).is_err());
        assert!(sample_gaussian_ar1(10, 2, -0.1, &mut rng).is_err());
    }

    #[test]
    fn rescaling() {
        let ones = DenseMatrix::column(vec![1.0; 4]).unwrap();
        assert_eq!(rescale_to_sqrt_n(&ones).unwrap(), ones);
        let x = DenseMatrix::column(vec![3.0, 4.0, 0.0, 0.0]).unwrap();
        let r = rescale_to_sqrt_n(&x).unwrap();
        for (got, want) in r.as_slice().iter().zip([1.2, 1.6, 0.0, 0.0]) {
            assert!((got - want).abs() <= 1e-15);
        }
        let z = DenseMatrix::from_rows(&[vec![1.0, 0.0], vec![2.0, 0.0]]).unwrap();
        assert!(matches!(rescale_to_sqrt_n(&z), Err(Error::ZeroColumn(1))));
    }

    #[test]
    fn signal_placement() {
        let mut rng = derive_rng(&SeedPath::new(4, vec![]));
        assert_eq!(place_signals(10, 0, 3.0, &mut rng).unwrap(), vec![0.0; 10]);
        for _ in 0..50 {
            let b = place_signals(10, 2, 3.0, &mut rng).unwrap();
            assert_eq!(b[0], 0.0);
            assert_eq!(b.iter().filter(|&&v| v == 3.0).count(), 1);
            assert_eq!(b.iter().filter(|&&v| v == -3.0).count(), 1);
            assert_eq!(b.iter().filter(|&&v| v == 0.0).count(), 8);
        }
        let b = place_signals(5, 4, 3.0, &mut rng).unwrap();
        assert_eq!(b[0], 0.0);
        assert!(b[1..].iter().all(|v| v.abs() == 3.0));
        assert_eq!(b.iter().sum::<f64>(), 0.0);
        assert!(place_signals(10, 3, 3.0, &mut rng).is_err());
        assert!(place_signals(5, 6, 3.0, &mut rng).is_err());
    }

    #[test]
    fn designs_are_reproducible() {
        for kind in [
            DesignKind::StiefelUniform,
            DesignKind::GaussianAr1 { rho: 0.5 },
        ] {
            let spec = DesignSpec::new(kind, 60, 7).unwrap();
            let path = SeedPath::new(99, vec![0, 1]);
            let a = spec.sample(&mut derive_rng(&path)).unwrap();
            let b = spec.sample(&mut derive_rng(&path)).unwrap();
            assert_eq!(a.as_slice(), b.as_slice());
        }
        assert!(DesignSpec::new(DesignKind::StiefelUniform, 5, 6).is_err());
        assert!(DesignSpec::new(DesignKind::GaussianAr1 { rho: 1.0 }, 5, 2).is_err());
    }
}
