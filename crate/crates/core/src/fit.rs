//! Damped Newton (IRLS) maximum likelihood, Wald inference, separation
//! detection, and regularity diagnostics.

use std::borrow::Cow;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::design::{derive_rng, DesignSpec, SeedPath};
use crate::error::{Error, Result};
use crate::glm::{
    log_likelihood_at, sample_response, Family, FamilyKind, LinearPredictor, ResponseVector,
};
use crate::numerics::{cholesky, dot, two_sided_normal_pvalue, DenseMatrix, LowerTriangular};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FitOptions {
    pub max_iter: usize,
    /// Applied to `‖Xᵀ(y − μ)‖∞ / n`.
    pub score_tol: f64,
    /// Divergence threshold on `‖Xβ‖∞`.
    pub theta_cap: f64,
    pub step_halving_max: usize,
    pub include_intercept: bool,
}

impl Default for FitOptions {
    fn default() -> Self {
        Self {
            max_iter: 50,
            score_tol: 1e-8,
            theta_cap: 30.0,
            step_halving_max: 20,
            include_intercept: false,
        }
    }
}

impl FitOptions {
    pub fn validate(&self) -> Result<()> {
        if self.max_iter == 0
            || self.score_tol.is_nan()
            || self.score_tol <= 0.0
            || self.theta_cap.is_nan()
            || self.theta_cap <= 0.0
        {
            return Err(Error::Config(format!(
                "fit options must be positive: {self:?}"
            )));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum FitStatus {
    Converged,
    /// `‖Xβ‖∞` exceeded the cap: the data are (quasi-)separated.
    Diverged,
    MaxIterations,
    SingularInformation,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    pub beta_hat: Vec<f64>,
    /// Cholesky factor of `XᵀΣ(Xβ̂)X`, present when converged.
    pub fisher_chol: Option<LowerTriangular>,
    pub std_errors: Option<Vec<f64>>,
    pub z_scores: Option<Vec<f64>>,
    pub p_values: Option<Vec<f64>>,
    pub status: FitStatus,
    pub iterations: usize,
    pub final_score_norm: f64,
    pub max_abs_theta: f64,
    /// Coordinate 0 of every vector is the intercept.
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub intercept: bool,
}

impl FitResult {
    pub fn is_converged(&self) -> bool {
        self.status == FitStatus::Converged
    }

    /// Position in the coefficient vectors of covariate `j` (1-based).
    fn coordinate(&self, j: usize) -> Result<usize> {
        let offset = usize::from(self.intercept);
        let len = self.beta_hat.len() - offset;
        if j == 0 || j > len {
            return Err(Error::CoordinateOutOfRange { index: j, len });
        }
        Ok(j - 1 + offset)
    }
}

/// One Newton iteration, recorded by [`fit_mle_traced`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IterationTrace {
    pub iteration: usize,
    pub log_likelihood: f64,
    pub max_abs_theta: f64,
    pub score_norm: f64,
    pub step_scale: f64,
}

pub fn fit_mle(
    family: &Family,
    x: &DenseMatrix,
    y: &ResponseVector,
    opts: &FitOptions,
) -> Result<FitResult> {
    fit_impl(family, x, y, opts, None)
}

/// Like [`fit_mle`], also returning the per-iteration path.
pub fn fit_mle_traced(
    family: &Family,
    x: &DenseMatrix,
    y: &ResponseVector,
    opts: &FitOptions,
) -> Result<(FitResult, Vec<IterationTrace>)> {
    let mut trace = Vec::new();
    let fit = fit_impl(family, x, y, opts, Some(&mut trace))?;
    Ok((fit, trace))
}

fn max_abs(v: &[f64]) -> f64 {
    v.iter().fold(0.0_f64, |m, x| m.max(x.abs()))
}

fn fit_impl(
    family: &Family,
    x: &DenseMatrix,
    y: &ResponseVector,
    opts: &FitOptions,
    mut trace: Option<&mut Vec<IterationTrace>>,
) -> Result<FitResult> {
    opts.validate()?;
    family.validate_response(y.as_slice())?;
    let design: Cow<'_, DenseMatrix> = if opts.include_intercept {
        Cow::Owned(x.with_intercept())
    } else {
        Cow::Borrowed(x)
    };
    let x = design.as_ref();
    let (n, p) = (x.rows(), x.cols());
    if y.len() != n {
        return Err(Error::DimensionMismatch(format!(
            "design has {n} rows but response has {} entries",
            y.len()
        )));
    }
    if p > n {
        return Err(Error::DimensionMismatch(format!(
            "need n >= p, got n = {n}, p = {p}"
        )));
    }
    let y = y.as_slice();
    let nf = n as f64;
    // the identity-link Gaussian model has no separation failure mode
    let capped = family.kind() != FamilyKind::Linear;

    let mut beta = vec![0.0; p];
    let mut theta = vec![0.0; n];
    let mut ll = log_likelihood_at(family, y, &theta);
    let mut iterations = 0;
    let mut mu = vec![0.0; n];
    let mut weights = vec![0.0; n];
    let mut resid = vec![0.0; n];

    let finish = |status, beta: Vec<f64>, iterations, score_norm, theta: &[f64]| FitResult {
        beta_hat: beta,
        fisher_chol: None,
        std_errors: None,
        z_scores: None,
        p_values: None,
        status,
        iterations,
        final_score_norm: score_norm,
        max_abs_theta: max_abs(theta),
        intercept: opts.include_intercept,
    };

    let (status, score_norm) = loop {
        for i in 0..n {
            mu[i] = family.mean(theta[i])?;
            weights[i] = family.variance(theta[i])?;
            resid[i] = y[i] - mu[i];
        }
        let score = x.tr_mul_vec(&resid)?;
        let score_norm = max_abs(&score) / nf;
        if let Some(t) = trace.as_deref_mut() {
            if t.is_empty() {
                t.push(IterationTrace {
                    iteration: 0,
                    log_likelihood: ll,
                    max_abs_theta: max_abs(&theta),
                    score_norm,
                    step_scale: 0.0,
                });
            } else if let Some(last) = t.last_mut() {
                last.score_norm = score_norm;
            }
        }
        if score_norm <= opts.score_tol {
            break (FitStatus::Converged, score_norm);
        }
        if iterations >= opts.max_iter {
            break (FitStatus::MaxIterations, score_norm);
        }
        let info = x.weighted_gram(&weights)?;
        let chol = match cholesky(&info) {
            Ok(c) => c,
            Err(Error::NotPositiveDefinite { .. }) => {
                break (FitStatus::SingularInformation, score_norm)
            }
            Err(e) => return Err(e),
        };
        let step = chol.solve_vec(&score)?;

        let slack = 1e-13 * (1.0 + ll.abs());
        let mut scale = 1.0;
        let mut accepted = None;
        for _ in 0..=opts.step_halving_max {
            let cand: Vec<f64> = beta.iter().zip(&step).map(|(b, s)| b + scale * s).collect();
            let cand_theta = x.mul_vec(&cand)?;
            if cand_theta.iter().all(|t| t.is_finite()) {
                let cand_ll = log_likelihood_at(family, y, &cand_theta);
                if cand_ll >= ll - slack {
                    accepted = Some((cand, cand_theta, cand_ll));
                    break;
                }
            }
            scale *= 0.5;
        }
        let Some((cand, cand_theta, cand_ll)) = accepted else {
            // no ascent direction left at working precision
            break (FitStatus::MaxIterations, score_norm);
        };
        beta = cand;
        theta = cand_theta;
        ll = cand_ll;
        iterations += 1;
        if let Some(t) = trace.as_deref_mut() {
            t.push(IterationTrace {
                iteration: iterations,
                log_likelihood: ll,
                max_abs_theta: max_abs(&theta),
                score_norm: f64::NAN,
                step_scale: scale,
            });
        }
        if capped && max_abs(&theta) > opts.theta_cap {
            break (FitStatus::Diverged, f64::NAN);
        }
    };

    if status != FitStatus::Converged {
        let score_norm = if score_norm.is_nan() {
            // diverged right after a step: report the score at the final iterate
            let theta_lp = LinearPredictor::new(theta.clone())?;
            let r: Vec<f64> = y
                .iter()
                .zip(crate::glm::mean_map(family, &theta_lp)?)
                .map(|(a, b)| a - b)
                .collect();
            max_abs(&x.tr_mul_vec(&r)?) / nf
        } else {
            score_norm
        };
        if let Some(last) = trace.and_then(|t| t.last_mut()) {
            last.score_norm = score_norm;
        }
        return Ok(finish(status, beta, iterations, score_norm, &theta));
    }

    let info = x.weighted_gram(&weights)?;
    let chol = match cholesky(&info) {
        Ok(c) => c,
        Err(Error::NotPositiveDefinite { .. }) => {
            return Ok(finish(
                FitStatus::SingularInformation,
                beta,
                iterations,
                score_norm,
                &theta,
            ))
        }
        Err(e) => return Err(e),
    };
    let wald = wald_from_factor(family, &beta, &chol);
    Ok(FitResult {
        beta_hat: beta,
        fisher_chol: Some(chol),
        std_errors: Some(wald.std_errors),
        z_scores: Some(wald.z_scores),
        p_values: Some(wald.p_values),
        status,
        iterations,
        final_score_norm: score_norm,
        max_abs_theta: max_abs(&theta),
        intercept: opts.include_intercept,
    })
}

/// Standard errors, z-scores and two-sided p-values for `H0: β_j = 0`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WaldSummary {
    pub std_errors: Vec<f64>,
    pub z_scores: Vec<f64>,
    pub p_values: Vec<f64>,
}

fn wald_from_factor(family: &Family, beta: &[f64], chol: &LowerTriangular) -> WaldSummary {
    let phi = family.dispersion();
    let std_errors: Vec<f64> = chol
        .inverse_diagonal()
        .into_iter()
        .map(|v| (phi * v).sqrt())
        .collect();
    let z_scores: Vec<f64> = beta.iter().zip(&std_errors).map(|(b, s)| b / s).collect();
    let p_values = z_scores
        .iter()
        .map(|&z| two_sided_normal_pvalue(z))
        .collect();
    WaldSummary {
        std_errors,
        z_scores,
        p_values,
    }
}

/// Fisher information `XᵀΣ(θ)X`.
pub fn fisher_information(
    family: &Family,
    x: &DenseMatrix,
    theta: &LinearPredictor,
) -> Result<DenseMatrix> {
    if theta.len() != x.rows() {
        return Err(Error::DimensionMismatch(format!(
            "{} natural parameters for {} rows",
            theta.len(),
            x.rows()
        )));
    }
    x.weighted_gram(&crate::glm::variance_map(family, theta)?)
}

/// Wald summary for `beta` with the information evaluated at a supplied `θ`
/// instead of at the fitted values.
pub fn wald_at(
    family: &Family,
    x: &DenseMatrix,
    beta: &[f64],
    theta: &LinearPredictor,
) -> Result<WaldSummary> {
    if beta.len() != x.cols() {
        return Err(Error::DimensionMismatch(format!(
            "{} coefficients for {} columns",
            beta.len(),
            x.cols()
        )));
    }
    let chol = cholesky(&fisher_information(family, x, theta)?)?;
    Ok(wald_from_factor(family, beta, &chol))
}

/// Two-sided Wald p-value for covariate `j` (1-based, intercept excluded).
pub fn wald_pvalue_for(fit: &FitResult, j: usize) -> Result<f64> {
    if !fit.is_converged() {
        return Err(Error::NotConverged(fit.status));
    }
    let k = fit.coordinate(j)?;
    let se = fit
        .std_errors
        .as_ref()
        .ok_or(Error::NotConverged(fit.status))?[k];
    Ok(two_sided_normal_pvalue(fit.beta_hat[k] / se))
}

/// Quantities entering the regularity conditions for asymptotic normality.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConditionDiagnostics {
    /// `‖(XᵀΣ(θ₀)X)⁻¹‖∞`.
    pub inf_norm_inverse: f64,
    /// Extreme eigenvalues of `n⁻¹ A_n`.
    pub eigen_bounds: (f64, f64),
    /// `Σ_i (z_iᵀ A_n⁻¹ z_i)^{3/2}` over the rows `z_i` of `X`.
    pub lyapunov_sum: f64,
}

pub fn condition_diagnostics(
    x: &DenseMatrix,
    theta0: &LinearPredictor,
    family: &Family,
) -> Result<ConditionDiagnostics> {
    let a = fisher_information(family, x, theta0)?;
    let chol = cholesky(&a)?;
    let p = x.cols();

    let mut inf_norm_inverse = 0.0_f64;
    let mut inverse = DenseMatrix::zeros(p, p);
    for j in 0..p {
        let mut e = vec![0.0; p];
        e[j] = 1.0;
        for (i, v) in chol.solve_vec(&e)?.into_iter().enumerate() {
            inverse.set(i, j, v);
        }
    }
    for i in 0..p {
        inf_norm_inverse = inf_norm_inverse.max(inverse.row(i).iter().map(|v| v.abs()).sum());
    }

    let n = x.rows() as f64;
    let lambda_max = power_iteration(p, |v| a.mul_vec(v).expect("square")) / n;
    let inv_max = power_iteration(p, |v| chol.solve_vec(v).expect("square"));
    let lambda_min = 1.0 / (inv_max * n);

    let lyapunov_sum = (0..x.rows())
        .map(|i| chol.inverse_quadratic_form(x.row(i)).powf(1.5))
        .sum();

    Ok(ConditionDiagnostics {
        inf_norm_inverse,
        eigen_bounds: (lambda_min.min(lambda_max), lambda_max.max(lambda_min)),
        lyapunov_sum,
    })
}

/// Dominant eigenvalue of a symmetric positive-definite operator via the
/// Rayleigh quotient of power iteration.
fn power_iteration(dim: usize, apply: impl Fn(&[f64]) -> Vec<f64>) -> f64 {
    let mut v: Vec<f64> = (0..dim)
        .map(|i| 1.0 + (i as f64 + 1.0).sqrt().fract())
        .collect();
    let norm = dot(&v, &v).sqrt();
    v.iter_mut().for_each(|e| *e /= norm);
    let mut lambda = 0.0;
    for _ in 0..20_000 {
        let w = apply(&v);
        let next = dot(&v, &w);
        let norm = dot(&w, &w).sqrt();
        if norm == 0.0 {
            return 0.0;
        }
        v = w.into_iter().map(|e| e / norm).collect();
        if (next - lambda).abs() <= 1e-12 * next.abs() {
            return next;
        }
        lambda = next;
    }
    lambda
}

/// Spread of `β̂₁` over repeated null fits, against the asymptotic theory value.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VarianceProbe {
    pub empirical_sd_beta1: f64,
    /// `√(φ / (n b''(0)))`: `2/√n` for logistic.
    pub theoretical_sd: f64,
    pub converged: usize,
    pub nonconverged_fraction: f64,
}

impl VarianceProbe {
    pub fn ratio(&self) -> f64 {
        self.empirical_sd_beta1 / self.theoretical_sd
    }
}

/// Fits `reps` global-null datasets and reports the sample SD of `β̂₁`.
/// Replication `r` draws from the stream `seed.child(r)`.
pub fn mle_variance_probe(
    family: &Family,
    design: &DesignSpec,
    reps: usize,
    seed: &SeedPath,
    opts: &FitOptions,
) -> Result<VarianceProbe> {
    if reps < 2 {
        return Err(Error::Config(format!(
            "need at least 2 replications, got {reps}"
        )));
    }
    design.validate()?;
    let estimates: Vec<Option<f64>> = (0..reps)
        .into_par_iter()
        .map(|r| -> Result<Option<f64>> {
            let mut rng = derive_rng(&seed.child(r as u64));
            let x = design.sample(&mut rng)?;
            let y = sample_response(family, &LinearPredictor::zeros(design.n), &mut rng)?;
            let fit = fit_mle(family, &x, &y, opts)?;
            Ok(if fit.is_converged() {
                Some(fit.beta_hat[usize::from(fit.intercept)])
            } else {
                None
            })
        })
        .collect::<Result<_>>()?;
    let values: Vec<f64> = estimates.iter().flatten().copied().collect();
    if values.len() < 2 {
        return Err(Error::TooFewConverged {
            converged: values.len(),
            total: reps,
        });
    }
    let m = values.len() as f64;
    let mean = values.iter().sum::<f64>() / m;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (m - 1.0);
    let theoretical_sd = (family.dispersion() / (design.n as f64 * family.variance(0.0)?)).sqrt();
    Ok(VarianceProbe {
        empirical_sd_beta1: var.sqrt(),
        theoretical_sd,
        converged: values.len(),
        nonconverged_fraction: 1.0 - m / reps as f64,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::design::{sample_stiefel, DesignKind};
    use crate::numerics::spd_solve;
    use rand_distr::{Distribution, StandardNormal};

    fn normal_matrix(n: usize, p: usize, seed: u64) -> DenseMatrix {
        let mut rng = derive_rng(&SeedPath::new(seed, vec![]));
        DenseMatrix::from_row_major(
            n,
            p,
            (0..n * p)
                .map(|_| StandardNormal.sample(&mut rng))
                .collect(),
        )
        .unwrap()
    }

    fn least_squares(x: &DenseMatrix, y: &[f64]) -> Vec<f64> {
        let xtx = x.transpose().matmul(x).unwrap();
        let xty = DenseMatrix::column(x.tr_mul_vec(y).unwrap()).unwrap();
        spd_solve(&xtx, &xty).unwrap().into_vec()
    }

    #[test]
    fn linear_family_matches_normal_equations() {
        let lin = Family::linear(1.0).unwrap();
        for (n, p) in [(50, 2), (50, 10), (200, 2), (200, 10)] {
            let x = normal_matrix(n, p, (n * p) as u64);
            let mut rng = derive_rng(&SeedPath::new(1, vec![n as u64, p as u64]));
            let theta = LinearPredictor::new(x.mul_vec(&vec![0.5; p]).unwrap()).unwrap();
            let y = sample_response(&lin, &theta, &mut rng).unwrap();
            let fit = fit_mle(&lin, &x, &y, &FitOptions::default()).unwrap();
            assert_eq!(fit.status, FitStatus::Converged);
            assert_eq!(fit.iterations, 1);
            let ls = least_squares(&x, y.as_slice());
            for (a, b) in fit.beta_hat.iter().zip(&ls) {
                assert!((a - b).abs() <= 1e-8 * b.abs().max(1.0));
            }
        }
    }

    #[test]
    fn balanced_toy_has_zero_mle() {
        let logit = Family::logistic();
        let x = DenseMatrix::column(vec![1.0, 1.0, -1.0, -1.0]).unwrap();
        let y = ResponseVector::new(&logit, vec![1.0, 0.0, 0.0, 1.0]).unwrap();
        let fit = fit_mle(&logit, &x, &y, &FitOptions::default()).unwrap();
        assert_eq!(fit.status, FitStatus::Converged);
        assert_eq!(fit.iterations, 0);
        assert_eq!(fit.beta_hat, vec![0.0]);
        assert_eq!(wald_pvalue_for(&fit, 1).unwrap(), 1.0);
        // A(0) = 4 * 1/4, se = 1
        assert!((fit.std_errors.as_ref().unwrap()[0] - 1.0).abs() < 1e-15);
    }

    #[test]
    fn separated_toy_diverges() {
        let logit = Family::logistic();
        let x = DenseMatrix::column(vec![-2.0, -1.0, 1.0, 2.0]).unwrap();
        let y = ResponseVector::new(&logit, vec![0.0, 0.0, 1.0, 1.0]).unwrap();
        let (fit, trace) = fit_mle_traced(&logit, &x, &y, &FitOptions::default()).unwrap();
        assert_eq!(fit.status, FitStatus::Diverged);
        assert!(fit.p_values.is_none());
        assert!(fit.max_abs_theta > 30.0);
        for w in trace.windows(2) {
            assert!(w[1].max_abs_theta > w[0].max_abs_theta);
            assert!(w[1].log_likelihood >= w[0].log_likelihood);
        }
        assert!(matches!(
            wald_pvalue_for(&fit, 1),
            Err(Error::NotConverged(FitStatus::Diverged))
        ));
    }

    #[test]
    fn max_iterations_status() {
        let logit = Family::logistic();
        let x = normal_matrix(100, 3, 5);
        let mut rng = derive_rng(&SeedPath::new(5, vec![1]));
        let y = sample_response(&logit, &LinearPredictor::zeros(100), &mut rng).unwrap();
        let opts = FitOptions {
            max_iter: 1,
            ..FitOptions::default()
        };
        let fit = fit_mle(&logit, &x, &y, &opts).unwrap();
        assert_eq!(fit.status, FitStatus::MaxIterations);
        assert_eq!(fit.iterations, 1);
    }

    #[test]
    fn wald_pvalue_lookup() {
        let fit = FitResult {
            beta_hat: vec![1.959963985, 0.0],
            fisher_chol: None,
            std_errors: Some(vec![1.0, 0.5]),
            z_scores: Some(vec![1.959963985, 0.0]),
            p_values: None,
            status: FitStatus::Converged,
            iterations: 1,
            final_score_norm: 0.0,
            max_abs_theta: 0.0,
            intercept: false,
        };
        assert!((wald_pvalue_for(&fit, 1).unwrap() - 0.05).abs() < 1e-8);
        assert_eq!(wald_pvalue_for(&fit, 2).unwrap(), 1.0);
        assert!(matches!(
            wald_pvalue_for(&fit, 3),
            Err(Error::CoordinateOutOfRange { index: 3, len: 2 })
        ));
        assert!(wald_pvalue_for(&fit, 0).is_err());
        let with_intercept = FitResult {
            intercept: true,
            ..fit
        };
        assert_eq!(wald_pvalue_for(&with_intercept, 1).unwrap(), 1.0);
        assert!(wald_pvalue_for(&with_intercept, 2).is_err());
    }

    #[test]
    fn intercept_is_coordinate_zero() {
        let logit = Family::logistic();
        let x = normal_matrix(300, 2, 8);
        let mut rng = derive_rng(&SeedPath::new(8, vec![1]));
        let theta = LinearPredictor::new(vec![1.0; 300]).unwrap();
        let y = sample_response(&logit, &theta, &mut rng).unwrap();
        let opts = FitOptions {
            include_intercept: true,
            ..FitOptions::default()
        };
        let fit = fit_mle(&logit, &x, &y, &opts).unwrap();
        assert!(fit.is_converged());
        assert_eq!(fit.beta_hat.len(), 3);
        assert!((fit.beta_hat[0] - 1.0).abs() < 0.5);
        let p1 = wald_pvalue_for(&fit, 1).unwrap();
        assert_eq!(p1, fit.p_values.as_ref().unwrap()[1]);
    }

    #[test]
    fn global_null_information_identity() {
        let logit = Family::logistic();
        let n = 400;
        let mut rng = derive_rng(&SeedPath::new(10, vec![]));
        let x = sample_stiefel(n, 20, &mut rng).unwrap();
        let info = fisher_information(&logit, &x, &LinearPredictor::zeros(n)).unwrap();
        for i in 0..20 {
            for j in 0..20 {
                let target = if i == j { n as f64 / 4.0 } else { 0.0 };
                assert!((info.get(i, j) - target).abs() <= 1e-8 * n as f64);
            }
        }
        let wald = wald_at(&logit, &x, &[0.0; 20], &LinearPredictor::zeros(n)).unwrap();
        for se in wald.std_errors {
            assert!((se - 2.0 / (n as f64).sqrt()).abs() <= 1e-10);
        }
    }

    #[test]
    fn diagnostics_closed_forms() {
        let logit = Family::logistic();
        let n = 1000;
        let p = 10;
        let mut rng = derive_rng(&SeedPath::new(11, vec![]));
        let x = sample_stiefel(n, p, &mut rng).unwrap();
        let d = condition_diagnostics(&x, &LinearPredictor::zeros(n), &logit).unwrap();
        assert!((d.inf_norm_inverse - 4.0 / n as f64).abs() <= 1e-10);
        assert!((d.eigen_bounds.0 - 0.25).abs() <= 1e-6 * 0.25);
        assert!((d.eigen_bounds.1 - 0.25).abs() <= 1e-6 * 0.25);
        let closed: f64 = (0..n)
            .map(|i| (4.0 * dot(x.row(i), x.row(i)) / n as f64).powf(1.5))
            .sum();
        assert!((d.lyapunov_sum - closed).abs() <= 1e-8 * closed);

        let lin = Family::linear(1.0).unwrap();
        let d = condition_diagnostics(&DenseMatrix::identity(6), &LinearPredictor::zeros(6), &lin)
            .unwrap();
        assert!((d.inf_norm_inverse - 1.0).abs() < 1e-14);
        assert!((d.eigen_bounds.0 - 1.0 / 6.0).abs() < 1e-12);
        assert!((d.eigen_bounds.1 - 1.0 / 6.0).abs() < 1e-12);
    }

    #[test]
    fn diagnostics_eigen_bounds_on_skewed_spectrum() {
        let lin = Family::linear(1.0).unwrap();
        // X = diag(1, 2, 3) stacked on zeros: A = diag(1, 4, 9), n = 4
        let x = DenseMatrix::from_rows(&[
            vec![1.0, 0.0, 0.0],
            vec![0.0, 2.0, 0.0],
            vec![0.0, 0.0, 3.0],
            vec![0.0, 0.0, 0.0],
        ])
        .unwrap();
        let d = condition_diagnostics(&x, &LinearPredictor::zeros(4), &lin).unwrap();
        assert!((d.eigen_bounds.0 - 0.25).abs() <= 1e-6 * 0.25);
        assert!((d.eigen_bounds.1 - 2.25).abs() <= 1e-6 * 2.25);
        assert!((d.inf_norm_inverse - 1.0).abs() < 1e-14);
        // rows: 1/1 + 4/4 + 9/9 each to the 3/2
        assert!((d.lyapunov_sum - 3.0).abs() < 1e-12);
    }

    #[test]
    fn diagnostics_lyapunov_grows_with_p() {
        let logit = Family::logistic();
        let n = 1000;
        let mut rng = derive_rng(&SeedPath::new(12, vec![]));
        let full = sample_stiefel(n, 200, &mut rng).unwrap();
        let mut prev = 0.0;
        for p in [10, 50, 200] {
            let cols: Vec<usize> = (0..p).collect();
            let x = full.select_columns(&cols).unwrap();
            let d = condition_diagnostics(&x, &LinearPredictor::zeros(n), &logit).unwrap();
            assert!(d.lyapunov_sum > prev);
            prev = d.lyapunov_sum;
        }
    }

    #[test]
    fn singular_design_reports_status() {
        let logit = Family::logistic();
        let x = DenseMatrix::from_rows(&[
            vec![1.0, 2.0],
            vec![2.0, 4.0],
            vec![-1.0, -2.0],
            vec![0.5, 1.0],
        ])
        .unwrap();
        let y = ResponseVector::new(&logit, vec![1.0, 0.0, 1.0, 0.0]).unwrap();
        let fit = fit_mle(&logit, &x, &y, &FitOptions::default()).unwrap();
        assert_eq!(fit.status, FitStatus::SingularInformation);
        assert!(fit.std_errors.is_none());
    }

    #[test]
    fn dimension_errors() {
        let logit = Family::logistic();
        let x = DenseMatrix::from_rows(&[vec![1.0, 2.0, 3.0]]).unwrap();
        let y = ResponseVector::new(&logit, vec![1.0]).unwrap();
        assert!(matches!(
            fit_mle(&logit, &x, &y, &FitOptions::default()),
            Err(Error::DimensionMismatch(_))
        ));
        let x = DenseMatrix::column(vec![1.0, 2.0, 3.0]).unwrap();
        assert!(fit_mle(&logit, &x, &y, &FitOptions::default()).is_err());
    }

    #[test]
    fn variance_probe_linear() {
        let lin = Family::linear(1.0).unwrap();
        let spec = DesignSpec::new(DesignKind::StiefelUniform, 200, 5).unwrap();
        let probe = mle_variance_probe(
            &lin,
            &spec,
            500,
            &SeedPath::new(13, vec![]),
            &FitOptions::default(),
        )
        .unwrap();
        assert_eq!(probe.converged, 500);
        assert!((0.9..=1.1).contains(&probe.ratio()), "{}", probe.ratio());
        assert!(mle_variance_probe(
            &lin,
            &spec,
            1,
            &SeedPath::new(13, vec![]),
            &FitOptions::default()
        )
        .is_err());
    }

    proptest::proptest! {
        #![proptest_config(proptest::prelude::ProptestConfig::with_cases(16))]
        #[test]
        fn logistic_fits_ascend_and_solve_the_score_equation(seed in 0u64..100_000) {
            let logit = Family::logistic();
            let x = normal_matrix(120, 6, seed);
            let mut rng = derive_rng(&SeedPath::new(seed, vec![1]));
            let beta0 = [0.5, -0.3, 0.0, 0.2, 0.0, 0.1];
            let theta = LinearPredictor::from_design(&x, &beta0).unwrap();
            let y = sample_response(&logit, &theta, &mut rng).unwrap();
            let (fit, trace) = fit_mle_traced(&logit, &x, &y, &FitOptions::default()).unwrap();
            for w in trace.windows(2) {
                proptest::prop_assert!(w[1].log_likelihood >= w[0].log_likelihood - 1e-12);
            }
            if fit.is_converged() {
                let s = crate::glm::score(&logit, &x, &y, &fit.beta_hat).unwrap();
                proptest::prop_assert!(max_abs(&s) / 120.0 <= 1e-8);
                for (p, z) in fit.p_values.as_ref().unwrap().iter().zip(fit.z_scores.as_ref().unwrap()) {
                    let expected = 2.0 * (1.0 - crate::numerics::std_normal_cdf(z.abs()));
                    proptest::prop_assert!((p - expected).abs() <= 1e-12);
                }
            }
        }

        #[test]
        fn column_permutation_permutes_results(seed in 0u64..100_000) {
            let logit = Family::logistic();
            let x = normal_matrix(150, 4, seed);
            let mut rng = derive_rng(&SeedPath::new(seed, vec![2]));
            let y = sample_response(&logit, &LinearPredictor::zeros(150), &mut rng).unwrap();
            let perm = [2usize, 0, 3, 1];
            let xp = x.select_columns(&perm).unwrap();
            let a = fit_mle(&logit, &x, &y, &FitOptions::default()).unwrap();
            let b = fit_mle(&logit, &xp, &y, &FitOptions::default()).unwrap();
            proptest::prop_assert_eq!(a.status, b.status);
            if a.is_converged() {
                let (sa, sb) = (a.std_errors.unwrap(), b.std_errors.unwrap());
                let (pa, pb) = (a.p_values.unwrap(), b.p_values.unwrap());
                for (k, &j) in perm.iter().enumerate() {
                    proptest::prop_assert!((a.beta_hat[j] - b.beta_hat[k]).abs() <= 1e-10);
                    proptest::prop_assert!((sa[j] - sb[k]).abs() <= 1e-10);
                    proptest::prop_assert!((pa[j] - pb[k]).abs() <= 1e-10);
                }
            }
        }
    }
}
