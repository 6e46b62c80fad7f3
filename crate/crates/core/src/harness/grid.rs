use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridPoint {
    /// Position in the experiment grid; part of every seed path.
    pub index: usize,
    pub alpha0: f64,
    pub p: usize,
}

/// `[n^α]` as a floor, except that a power landing within `1e-9` relative of an
/// integer is taken to be that integer (so `1000^{2/3}` gives 100, not 99).
pub fn dimension_for(n: usize, alpha0: f64) -> usize {
    let value = (n as f64).powf(alpha0);
    let nearest = value.round();
    if nearest > 0.0 && (nearest - value).abs() < 1e-9 * nearest {
        nearest as usize
    } else {
        value.floor() as usize
    }
}

pub fn grid_point(index: usize, n: usize, alpha0: f64) -> Result<GridPoint> {
    if !(alpha0 > 0.0 && alpha0 <= 1.0) {
        return Err(Error::Config(format!("alpha0 = {alpha0} outside (0, 1]")));
    }
    let p = dimension_for(n, alpha0);
    if p < 1 || p > n {
        return Err(Error::Config(format!(
            "alpha0 = {alpha0} gives p = {p} outside [1, {n}]"
        )));
    }
    Ok(GridPoint { index, alpha0, p })
}

/// Nine points `2/3 + kδ`, `k = -4..=4`, followed by `(log n − log 2)/log n`
/// (where `p = n/2`).
pub fn build_grid(n: usize, delta: f64) -> Result<Vec<GridPoint>> {
    let ln = (n as f64).ln();
    let alphas = (-4..=4)
        .map(|k| 2.0 / 3.0 + k as f64 * delta)
        .chain(std::iter::once((ln - 2f64.ln()) / ln));
    alphas
        .enumerate()
        .map(|(i, a)| grid_point(i, n, a))
        .collect()
}

/// Grid from explicit α₀ values.
pub fn explicit_grid(n: usize, alphas: &[f64]) -> Result<Vec<GridPoint>> {
    alphas
        .iter()
        .enumerate()
        .map(|(i, &a)| grid_point(i, n, a))
        .collect()
}
