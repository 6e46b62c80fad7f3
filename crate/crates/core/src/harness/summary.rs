use std::path::Path;

use serde::{Deserialize, Serialize};

use super::runner::{load_results, OuterResultRow};
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum UniformityTest {
    Ks,
    Ad,
}

/// Boxplot statistics of one test's p-values at one grid point.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub alpha0: f64,
    pub p: usize,
    pub test: UniformityTest,
    pub rows: usize,
    pub min: f64,
    pub q1: f64,
    pub median: f64,
    pub q3: f64,
    pub max: f64,
    pub frac_below_005: f64,
    pub mean_diverged_fraction: f64,
    pub mean_converged_fraction: f64,
    pub degenerate_batches: usize,
    pub mean_sd_beta1: f64,
    /// `mean_sd_beta1` over the asymptotic SD (`2/√n` for logistic).
    pub sd_ratio: f64,
}

/// Interpolated quantile of sorted data (the `(m − 1) q` position rule).
pub fn quantile_sorted(sorted: &[f64], q: f64) -> f64 {
    if sorted.is_empty() {
        return f64::NAN;
    }
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (pos - lo as f64) * (sorted[hi] - sorted[lo])
}

/// Five-number summary and rejection fraction at 0.05, ignoring NaN entries.
pub fn five_number(values: &[f64]) -> ([f64; 5], f64) {
    let mut v: Vec<f64> = values.iter().copied().filter(|x| !x.is_nan()).collect();
    v.sort_by(f64::total_cmp);
    let rejected = v.iter().filter(|&&x| x < 0.05).count();
    let frac = if v.is_empty() {
        f64::NAN
    } else {
        rejected as f64 / v.len() as f64
    };
    (
        [0.0, 0.25, 0.5, 0.75, 1.0].map(|q| quantile_sorted(&v, q)),
        frac,
    )
}

fn mean_finite(values: impl Iterator<Item = f64>) -> f64 {
    let (sum, count) = values
        .filter(|v| v.is_finite())
        .fold((0.0, 0usize), |(s, c), v| (s + v, c + 1));
    if count == 0 {
        f64::NAN
    } else {
        sum / count as f64
    }
}

/// Summary rows for one grid point: one for KS, one for AD.
pub fn summarize_rows(
    alpha0: f64,
    p: usize,
    rows: &[OuterResultRow],
    r_inner: usize,
    theoretical_sd: f64,
) -> Vec<SummaryRow> {
    let inner = r_inner as f64;
    let mean_diverged_fraction = mean_finite(rows.iter().map(|r| r.n_diverged as f64 / inner));
    let mean_converged_fraction = mean_finite(rows.iter().map(|r| r.n_converged as f64 / inner));
    let degenerate_batches = rows.iter().filter(|r| 2 * r.n_converged < r_inner).count();
    let mean_sd_beta1 = mean_finite(rows.iter().map(|r| r.sd_beta1));
    [UniformityTest::Ks, UniformityTest::Ad]
        .into_iter()
        .map(|test| {
            let pvals: Vec<f64> = rows
                .iter()
                .map(|r| match test {
                    UniformityTest::Ks => r.ks_pvalue,
                    UniformityTest::Ad => r.ad_pvalue,
                })
                .collect();
            let ([min, q1, median, q3, max], frac_below_005) = five_number(&pvals);
            SummaryRow {
                alpha0,
                p,
                test,
                rows: rows.len(),
                min,
                q1,
                median,
                q3,
                max,
                frac_below_005,
                mean_diverged_fraction,
                mean_converged_fraction,
                degenerate_batches,
                mean_sd_beta1,
                sd_ratio: mean_sd_beta1 / theoretical_sd,
            }
        })
        .collect()
}

/// Boxplot-ready summary of a result directory. Grid points without any
/// completed rows are omitted.
pub fn summarize(result_dir: &Path) -> Result<Vec<SummaryRow>> {
    let (manifest, grid_rows) = load_results(result_dir)?;
    let cfg = &manifest.config;
    let family = cfg.family()?;
    let theoretical_sd = (family.dispersion() / (cfg.n as f64 * family.variance(0.0)?)).sqrt();
    let mut out = Vec::new();
    for (g, rows) in &grid_rows {
        if rows.is_empty() {
            continue;
        }
        out.extend(summarize_rows(
            g.alpha0,
            g.p,
            rows,
            cfg.r_inner,
            theoretical_sd,
        ));
    }
    if out.is_empty() {
        return Err(Error::EmptyResults(result_dir.to_path_buf()));
    }
    Ok(out)
}

pub fn write_summary_csv<W: std::io::Write>(rows: &[SummaryRow], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}
