//! Smoothing applied before estimation.

use nalgebra::DMatrix;

use crate::error::{CliError, Result};

/// Centered moving average of each row.
///
/// Near the edges the window shrinks to the columns that exist, so the first
/// entry of `(1, 2, 3, 4)` with window 3 is `(1 + 2) / 2`.
pub fn moving_average(y: &DMatrix<f64>, window: usize) -> Result<DMatrix<f64>> {
    if window == 0 || window.is_multiple_of(2) {
        return Err(CliError::Config(format!(
            "moving-average window must be odd and at least 1, got {window}"
        )));
    }
    let t = y.ncols();
    if window > t {
        return Err(CliError::Config(format!(
            "moving-average window {window} exceeds the {t} time periods"
        )));
    }
    let h = window / 2;
    Ok(DMatrix::from_fn(y.nrows(), t, |i, c| {
        let lo = c.saturating_sub(h);
        let hi = (c + h).min(t - 1);
        let row = y.row(i);
        (lo..=hi).map(|j| row[j]).sum::<f64>() / (hi - lo + 1) as f64
    }))
}
