//! Dense linear-algebra kernels: Cholesky factorization, triangular solves,
//! and stabilized log-sum-exp. Everything here is row-major and allocation
//! conscious; matrices stay small enough (a few thousand rows) that blocked
//! BLAS is not worth the dependency.

use ndarray::{Array1, Array2};

/// Lower-triangular Cholesky factor of a symmetric positive definite matrix.
///
/// Returns `None` when a pivot falls below `pivot_floor` (the matrix is
/// numerically semidefinite and needs jitter).
pub fn cholesky_lower(a: &Array2<f64>, pivot_floor: f64) -> Option<Array2<f64>> {
    let n = a.nrows();
    assert_eq!(n, a.ncols(), "cholesky needs a square matrix");
    let mut l = a.clone();
    {
        let data = l.as_slice_mut().expect("contiguous");
        for j in 0..n {
            let mut pivot = data[j * n + j];
            for k in 0..j {
                pivot -= data[j * n + k] * data[j * n + k];
            }
            if !(pivot > pivot_floor) {
                return None;
            }
            let ljj = pivot.sqrt();
            data[j * n + j] = ljj;
            for i in (j + 1)..n {
                let mut acc = data[i * n + j];
                let (row_i, row_j) = (&data[i * n..i * n + j], &data[j * n..j * n + j]);
                for k in 0..j {
                    acc -= row_i[k] * row_j[k];
                }
                data[i * n + j] = acc / ljj;
            }
            for i in 0..j {
                data[i * n + j] = 0.0;
            }
        }
    }
    Some(l)
}

/// Solve L Y = B in place (forward substitution), B has shape (n, k).
pub fn solve_lower(l: &Array2<f64>, b: &mut Array2<f64>) {
    let n = l.nrows();
    let k = b.ncols();
    debug_assert_eq!(b.nrows(), n);
    let ld = l.as_slice().expect("contiguous");
    let bd = b.as_slice_mut().expect("contiguous");
    for i in 0..n {
        for p in 0..i {
            let lip = ld[i * n + p];
            if lip != 0.0 {
                for c in 0..k {
                    bd[i * k + c] -= lip * bd[p * k + c];
                }
            }
        }
        let inv = 1.0 / ld[i * n + i];
        for c in 0..k {
            bd[i * k + c] *= inv;
        }
    }
}

/// Solve L^T Y = B in place (back substitution), B has shape (n, k).
pub fn solve_lower_transpose(l: &Array2<f64>, b: &mut Array2<f64>) {
    let n = l.nrows();
    let k = b.ncols();
    debug_assert_eq!(b.nrows(), n);
    let ld = l.as_slice().expect("contiguous");
    let bd = b.as_slice_mut().expect("contiguous");
    for i in (0..n).rev() {
        for p in (i + 1)..n {
            // (L^T)[i, p] = L[p, i]
            let lpi = ld[p * n + i];
            if lpi != 0.0 {
                for c in 0..k {
                    bd[i * k + c] -= lpi * bd[p * k + c];
                }
            }
        }
        let inv = 1.0 / ld[i * n + i];
        for c in 0..k {
            bd[i * k + c] *= inv;
        }
    }
}

/// Inverse transpose of a lower-triangular factor: returns U = L^{-T}.
///
/// With G = L L^T this gives G^{-1} = U U^T.
pub fn inverse_transpose_lower(l: &Array2<f64>) -> Array2<f64> {
    let n = l.nrows();
    let mut eye = Array2::<f64>::eye(n);
    solve_lower_transpose(l, &mut eye);
    eye
}

/// log(sum(exp(xs))) without overflow. Returns -inf on an empty slice.
pub fn logsumexp(xs: &[f64]) -> f64 {
    let m = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !m.is_finite() {
        return m;
    }
    let s: f64 = xs.iter().map(|&x| (x - m).exp()).sum();
    m + s.ln()
}

/// Column-wise log-sum-exp of a row-major matrix, written into `out`.
pub fn logsumexp_columns(a: &Array2<f64>, out: &mut Array1<f64>) {
    let (n, k) = (a.nrows(), a.ncols());
    debug_assert_eq!(out.len(), k);
    let ad = a.as_slice().expect("contiguous");
    let mut maxes = vec![f64::NEG_INFINITY; k];
    for i in 0..n {
        for c in 0..k {
            let x = ad[i * k + c];
            if x > maxes[c] {
                maxes[c] = x;
            }
        }
    }
    let mut sums = vec![0.0f64; k];
    for i in 0..n {
        for c in 0..k {
            sums[c] += (ad[i * k + c] - maxes[c]).exp();
        }
    }
    for c in 0..k {
        out[c] = maxes[c] + sums[c].ln();
    }
}
