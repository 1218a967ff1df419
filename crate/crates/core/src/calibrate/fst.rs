//! Fixed-sequence testing over an ordered parameter grid.

use crate::error::{Error, Result};

/// Smallest 0-based `k` such that every p-value from `k` onwards is at most
/// `alpha_fst`; `None` when even the last one fails.
pub fn fst_select(p_values: &[f64], alpha_fst: f64) -> Option<usize> {
    let failing = p_values.iter().rposition(|p| *p > alpha_fst);
    match failing {
        None if p_values.is_empty() => None,
        None => Some(0),
        Some(k) if k + 1 == p_values.len() => None,
        Some(k) => Some(k + 1),
    }
}

/// `n_points` evenly spaced values `span * k / n_points`, `k = 1..=n_points`.
pub fn even_grid(span: f64, n_points: usize) -> Result<Vec<f64>> {
    if n_points == 0 {
        return Err(Error::domain("grid needs at least one point"));
    }
    if !(span > 0.0 && span.is_finite()) {
        return Err(Error::domain(format!("grid span must be positive, got {span}")));
    }
    Ok((1..=n_points).map(|k| span * k as f64 / n_points as f64).collect())
}

pub(crate) fn validate_grid(grid: &[f64]) -> Result<()> {
    if grid.is_empty() {
        return Err(Error::domain("empty grid"));
    }
    if grid[0] <= 0.0 || grid.iter().any(|g| !g.is_finite()) || grid.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::domain("grid must be positive and strictly increasing"));
    }
    Ok(())
}
