//! Dense truncated SVD and rank selection.

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::error::{Error, Result};

/// Top-`r` singular triplets of a dense matrix.
///
/// `u` is n×r and `v` is m×r, both with orthonormal columns; `s` is sorted
/// non-increasing. Each column of `v` has its largest-magnitude entry made
/// nonnegative (first such entry on ties) and the matching column of `u` is
/// flipped with it, so the factorization is deterministic.
#[derive(Debug, Clone, PartialEq)]
pub struct TruncatedSvd {
    pub u: DMatrix<f64>,
    pub s: DVector<f64>,
    pub v: DMatrix<f64>,
}

impl TruncatedSvd {
    pub fn rank(&self) -> usize {
        self.s.len()
    }

    /// `U diag(S) Vᵀ`.
    pub fn reconstruct(&self) -> DMatrix<f64> {
        let mut us = self.u.clone();
        for (j, mut col) in us.column_iter_mut().enumerate() {
            col *= self.s[j];
        }
        us * self.v.transpose()
    }
}

fn to_faer(a: &DMatrix<f64>) -> faer::Mat<f64> {
    faer::Mat::from_fn(a.nrows(), a.ncols(), |i, j| a[(i, j)])
}

pub(crate) fn check_finite(a: &DMatrix<f64>, what: &str) -> Result<()> {
    if let Some(pos) = a.iter().position(|x| !x.is_finite()) {
        let (i, j) = (pos % a.nrows(), pos / a.nrows());
        return Err(Error::Input(format!(
            "{what} has non-finite entry at ({i}, {j})"
        )));
    }
    Ok(())
}

/// All singular values of `a`, sorted non-increasing.
pub fn singular_values(a: &DMatrix<f64>) -> Result<Vec<f64>> {
    check_finite(a, "matrix")?;
    if a.is_empty() {
        return Ok(Vec::new());
    }
    let mut s = to_faer(a)
        .singular_values()
        .map_err(|e| Error::Input(format!("SVD did not converge: {e:?}")))?;
    s.sort_by(|x, y| y.total_cmp(x));
    Ok(s)
}

/// Rank-`r` truncated SVD of `a`.
pub fn truncated_svd(a: &DMatrix<f64>, r: usize) -> Result<TruncatedSvd> {
    let (n, m) = a.shape();
    if r == 0 || r > n.min(m) {
        return Err(Error::Dimension(format!(
            "rank {r} must lie in [1, {}] for a {n}x{m} matrix",
            n.min(m)
        )));
    }
    check_finite(a, "matrix")?;

    let svd = to_faer(a)
        .thin_svd()
        .map_err(|e| Error::Input(format!("SVD did not converge: {e:?}")))?;
    let (full_u, full_v) = (svd.U(), svd.V());
    let sv = svd.S().column_vector();

    let mut order: Vec<usize> = (0..sv.nrows()).collect();
    order.sort_by(|&i, &j| sv[j].total_cmp(&sv[i]).then(i.cmp(&j)));

    let mut u = DMatrix::zeros(n, r);
    let mut v = DMatrix::zeros(m, r);
    let mut s = DVector::zeros(r);
    for (dst, &src) in order.iter().take(r).enumerate() {
        s[dst] = sv[src].max(0.0);
        for i in 0..n {
            u[(i, dst)] = full_u[(i, src)];
        }
        for k in 0..m {
            v[(k, dst)] = full_v[(k, src)];
        }

        let mut pivot = 0;
        for k in 1..m {
            if v[(k, dst)].abs() > v[(pivot, dst)].abs() {
                pivot = k;
            }
        }
        if v[(pivot, dst)] < 0.0 {
            u.column_mut(dst).neg_mut();
            v.column_mut(dst).neg_mut();
        }
    }

    Ok(TruncatedSvd { u, s, v })
}

/// Picks the rank at the sharpest drop of a scree profile.
///
/// Returns the 1-indexed `j` maximizing `s[j] / s[j+1]` over gaps
/// `j = 1..=min(max_rank, len - 1)`, preferring the smaller `j` on ties. A gap
/// whose lower value is zero counts as infinitely sharp; the first such gap wins.
pub fn select_rank(singular_values: &[f64], max_rank: usize) -> Result<usize> {
    if singular_values.len() < 2 {
        return Err(Error::Input(format!(
            "rank selection needs at least 2 singular values, got {}",
            singular_values.len()
        )));
    }
    if max_rank == 0 {
        return Err(Error::Input("max_rank must be positive".into()));
    }
    if singular_values.iter().any(|s| !s.is_finite() || *s < 0.0) {
        return Err(Error::Input(
            "singular values must be finite and nonnegative".into(),
        ));
    }

    let last_gap = max_rank.min(singular_values.len() - 1);
    let mut best = 1;
    let mut best_ratio = f64::NEG_INFINITY;
    for j in 1..=last_gap {
        let (hi, lo) = (singular_values[j - 1], singular_values[j]);
        if lo == 0.0 {
            return Ok(j);
        }
        let ratio = hi / lo;
        if ratio > best_ratio {
            best_ratio = ratio;
            best = j;
        }
    }
    Ok(best)
}

/// Scree profile reported alongside an automatic rank choice.
#[derive(Debug, Clone, Serialize)]
pub struct Scree {
    pub singular_values: Vec<f64>,
    pub selected_rank: usize,
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn constant_matrix_rank_one() {
        let a = DMatrix::from_element(3, 3, 1.0);
        let svd = truncated_svd(&a, 1).unwrap();
        assert_abs_diff_eq!(svd.s[0], 3.0, epsilon = 1e-12);
        let e = 1.0 / 3f64.sqrt();
        for k in 0..3 {
            assert_abs_diff_eq!(svd.u[(k, 0)], e, epsilon = 1e-12);
            assert_abs_diff_eq!(svd.v[(k, 0)], e, epsilon = 1e-12);
        }
    }

    #[test]
    fn identity_rank_two() {
        let a = DMatrix::<f64>::identity(4, 4);
        let svd = truncated_svd(&a, 2).unwrap();
        assert_abs_diff_eq!(svd.s[0], 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(svd.s[1], 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(svd.reconstruct().norm(), 2f64.sqrt(), epsilon = 1e-12);
    }

    #[test]
    fn rejects_bad_rank_and_nan() {
        let a = DMatrix::<f64>::identity(3, 2);
        assert!(matches!(truncated_svd(&a, 3), Err(Error::Dimension(_))));
        assert!(matches!(truncated_svd(&a, 0), Err(Error::Dimension(_))));
        let mut b = a.clone();
        b[(1, 1)] = f64::NAN;
        assert!(matches!(truncated_svd(&b, 1), Err(Error::Input(_))));
    }

    #[test]
    fn sign_convention_holds() {
        let a = DMatrix::from_fn(7, 5, |i, j| ((i * 5 + j) as f64 * 0.7).sin() - 0.3);
        let svd = truncated_svd(&a, 4).unwrap();
        for j in 0..4 {
            let col = svd.v.column(j);
            let pivot = col.iamax();
            assert!(col[pivot] >= 0.0);
        }
        let neg = truncated_svd(&(-&a), 4).unwrap();
        // Negating the input flips U only.
        assert_eq!(svd.v, neg.v);
        assert_abs_diff_eq!(svd.u, -neg.u, epsilon = 1e-12);
    }

    #[test]
    fn select_rank_examples() {
        assert_eq!(select_rank(&[10.0, 9.0, 0.1, 0.09], 4).unwrap(), 2);
        assert_eq!(select_rank(&[5.0, 1.0], 4).unwrap(), 1);
        assert_eq!(select_rank(&[8.0, 4.0, 2.0, 1.0], 4).unwrap(), 1);
        assert_eq!(select_rank(&[3.0, 2.0, 0.0, 0.0], 4).unwrap(), 2);
        // the cap limits which gaps are considered
        assert_eq!(select_rank(&[10.0, 9.0, 0.1, 0.09], 1).unwrap(), 1);
        assert!(select_rank(&[1.0], 3).is_err());
    }
}
