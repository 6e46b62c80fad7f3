//! Kolmogorov-Smirnov and Anderson-Darling tests of a p-value sample against
//! the uniform distribution on `[0, 1]`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::{anderson_darling_pvalue, kolmogorov_sf};

/// Values are clamped to `[AD_CLAMP, 1 - AD_CLAMP]` before taking logarithms.
pub const AD_CLAMP: f64 = 1e-15;

/// Below this size the asymptotic null distributions are not trusted.
pub const DEFAULT_MIN_SAMPLE: usize = 10;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PValueSample {
    values: Vec<f64>,
}

impl PValueSample {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::SampleTooSmall { got: 0, need: 1 });
        }
        if let Some(index) = values.iter().position(|v| !(0.0..=1.0).contains(v)) {
            return Err(Error::Config(format!(
                "p-value {} at index {index} is outside [0, 1]",
                values[index]
            )));
        }
        Ok(Self { values })
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    fn sorted(&self) -> Vec<f64> {
        let mut v = self.values.clone();
        v.sort_by(f64::total_cmp);
        v
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct UniformityResult {
    pub ks_stat: f64,
    pub ks_pvalue: f64,
    pub ad_stat: f64,
    pub ad_pvalue: f64,
    pub m: usize,
    /// Sample values that hit the AD clamp (exact 0 or 1 p-values).
    pub boundary_clamped: usize,
}

/// `sup_x |F_m(x) − x|` from the order statistics.
pub fn ks_statistic(sample: &PValueSample) -> f64 {
    let u = sample.sorted();
    let m = u.len() as f64;
    u.iter()
        .enumerate()
        .map(|(i, &ui)| {
            let above = (i + 1) as f64 / m - ui;
            let below = ui - i as f64 / m;
            above.max(below)
        })
        .fold(0.0, f64::max)
}

/// Asymptotic KS p-value `1 − K(√m · d)`.
pub fn ks_pvalue(d: f64, m: usize) -> f64 {
    kolmogorov_sf((m as f64).sqrt() * d)
}

/// Anderson-Darling `A²` via the order-statistic closed form, plus the number
/// of values that were clamped away from 0 or 1.
pub fn ad_statistic(sample: &PValueSample) -> (f64, usize) {
    let u = sample.sorted();
    let mut clamped = 0;
    let logs: Vec<(f64, f64)> = u
        .iter()
        .map(|&v| {
            let c = v.clamp(AD_CLAMP, 1.0 - AD_CLAMP);
            if c != v {
                clamped += 1;
            }
            (c.ln(), (-c).ln_1p())
        })
        .collect();
    let m = u.len();
    let sum: f64 = (0..m)
        .map(|i| (2 * i + 1) as f64 * (logs[i].0 + logs[m - 1 - i].1))
        .sum();
    (-(m as f64) - sum / m as f64, clamped)
}

pub fn ad_pvalue(a2: f64, m: usize) -> f64 {
    anderson_darling_pvalue(a2, m)
}

pub fn test_uniformity(sample: &PValueSample) -> Result<UniformityResult> {
    test_uniformity_with_min(sample, DEFAULT_MIN_SAMPLE)
}

pub fn test_uniformity_with_min(
    sample: &PValueSample,
    min_size: usize,
) -> Result<UniformityResult> {
    let m = sample.len();
    if m < min_size.max(1) {
        return Err(Error::SampleTooSmall {
            got: m,
            need: min_size,
        });
    }
    let ks_stat = ks_statistic(sample);
    let (ad_stat, boundary_clamped) = ad_statistic(sample);
    Ok(UniformityResult {
        ks_stat,
        ks_pvalue: ks_pvalue(ks_stat, m),
        ad_stat,
        ad_pvalue: ad_pvalue(ad_stat, m),
        m,
        boundary_clamped,
    })
}
