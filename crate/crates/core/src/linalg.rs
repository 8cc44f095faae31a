//! Small dense linear-algebra helpers on top of nalgebra.

use nalgebra::DMatrix;
use ndarray::{Array2, ArrayView2};

pub(crate) fn to_na(a: ArrayView2<'_, f64>) -> DMatrix<f64> {
    DMatrix::from_fn(a.nrows(), a.ncols(), |i, j| a[[i, j]])
}

pub(crate) fn from_na(m: &DMatrix<f64>) -> Array2<f64> {
    Array2::from_shape_fn((m.nrows(), m.ncols()), |(i, j)| m[(i, j)])
}

/// Singular value decomposition `M = X Σ Y^T` of a square matrix with full
/// orthogonal factors.
///
/// Each left singular vector is signed so that its largest-magnitude entry
/// is positive (the first such entry on ties); the right vector is flipped
/// with it so the product is unchanged.
pub(crate) fn svd_square(m: &DMatrix<f64>) -> (DMatrix<f64>, Vec<f64>, DMatrix<f64>) {
    let n = m.nrows();
    let svd = m.clone().svd(true, true);
    let mut x = svd.u.expect("requested U");
    let mut y = svd.v_t.expect("requested V^T").transpose();
    let s: Vec<f64> = svd.singular_values.iter().copied().collect();
    // order singular triples descending so rank truncation is a prefix
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| s[b].total_cmp(&s[a]).then(a.cmp(&b)));
    let x_sorted = DMatrix::from_fn(n, n, |i, j| x[(i, order[j])]);
    let y_sorted = DMatrix::from_fn(n, n, |i, j| y[(i, order[j])]);
    let s_sorted: Vec<f64> = order.iter().map(|&k| s[k]).collect();
    x = x_sorted;
    y = y_sorted;
    for j in 0..n {
        let col = x.column(j);
        let mut best = 0;
        for i in 1..n {
            if col[i].abs() > col[best].abs() {
                best = i;
            }
        }
        if x[(best, j)] < 0.0 {
            x.column_mut(j).neg_mut();
            y.column_mut(j).neg_mut();
        }
    }
    (x, s_sorted, y)
}

/// Maximizer of `tr(Q^T M)` over orthogonal `Q`.
///
/// On the range of `M` the answer is `X Y^T`. On a rank-deficient `M` the
/// null-space block is completed with the maximizer for `fallback`
/// restricted to the left and right null spaces, so the result is the
/// minimizer closest to `fallback`. With `M = 0` this returns the polar
/// factor of `fallback` itself.
pub(crate) fn procrustes(m: &DMatrix<f64>, fallback: &DMatrix<f64>) -> DMatrix<f64> {
    let n = m.nrows();
    let (x, s, y) = svd_square(m);
    let smax = s.first().copied().unwrap_or(0.0);
    let tol = n as f64 * f64::EPSILON * smax;
    let rank = s.iter().filter(|&&v| v > tol && v > 0.0).count();
    let xr = x.columns(0, rank);
    let yr = y.columns(0, rank);
    let mut q = xr * yr.transpose();
    if rank < n {
        let xn = x.columns(rank, n - rank).into_owned();
        let yn = y.columns(rank, n - rank).into_owned();
        let inner = xn.transpose() * fallback * &yn;
        let (xi, _, yi) = svd_square(&inner);
        q += xn * xi * yi.transpose() * yn.transpose();
    }
    q
}

pub(crate) fn orthogonality_defect(d: &DMatrix<f64>) -> f64 {
    let n = d.nrows();
    let g = d * d.transpose();
    let mut worst = 0.0f64;
    for i in 0..n {
        for j in 0..n {
            let e = g[(i, j)] - if i == j { 1.0 } else { 0.0 };
            worst = worst.max(e.abs());
        }
    }
    worst
}
