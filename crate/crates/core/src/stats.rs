//! Small descriptive statistics shared by the simulation and limit-law code.

use nalgebra::{DMatrix, DVector};

/// Quantile of sorted data by the Hyndman–Fan type 8 rule (approximately
/// median-unbiased): `h = (n + 1/3)·prob + 1/3`, linear interpolation between
/// the order statistics around `h` (1-based), clamped at the extremes.
pub fn quantile_sorted(sorted: &[f64], prob: f64) -> f64 {
    let n = sorted.len();
    assert!(n > 0, "quantile of empty sample");
    let h = (n as f64 + 1.0 / 3.0) * prob + 1.0 / 3.0;
    if h <= 1.0 {
        return sorted[0];
    }
    if h >= n as f64 {
        return sorted[n - 1];
    }
    let lo = h.floor();
    let g = h - lo;
    let i = lo as usize - 1;
    if g == 0.0 {
        return sorted[i];
    }
    sorted[i] + g * (sorted[i + 1] - sorted[i])
}

/// First, second and third quartiles.
pub fn quartiles(values: &[f64]) -> [f64; 3] {
    let mut s = values.to_vec();
    s.sort_by(f64::total_cmp);
    [
        quantile_sorted(&s, 0.25),
        quantile_sorted(&s, 0.5),
        quantile_sorted(&s, 0.75),
    ]
}

/// `sqrt(p̂(1 − p̂)/m)`.
pub fn binomial_se(p_hat: f64, m: usize) -> f64 {
    if m == 0 {
        return f64::NAN;
    }
    (p_hat * (1.0 - p_hat) / m as f64).sqrt()
}

pub fn column_means(rows: &DMatrix<f64>) -> DVector<f64> {
    let n = rows.nrows() as f64;
    DVector::from_iterator(rows.ncols(), rows.column_iter().map(|c| c.sum() / n))
}

/// Unbiased covariance of the rows of `rows` (observations × variables).
pub fn sample_covariance(rows: &DMatrix<f64>) -> DMatrix<f64> {
    let n = rows.nrows();
    let mean = column_means(rows);
    let mut centered = rows.clone();
    for mut r in centered.row_iter_mut() {
        r -= mean.transpose();
    }
    centered.tr_mul(&centered) / (n as f64 - 1.0)
}
