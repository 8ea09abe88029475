//! Small dense and tridiagonal solvers used by the collision step.

use ndarray::Array2;

use crate::scalar::Scalar;

/// Lower Cholesky factor of a symmetric positive definite matrix, or `None`
/// if a pivot is not positive.
pub fn cholesky<T: Scalar>(a: &Array2<T>) -> Option<Array2<T>> {
    let n = a.nrows();
    let mut l = Array2::zeros((n, n));
    for j in 0..n {
        let mut d = a[[j, j]];
        for k in 0..j {
            d = d - l[[j, k]] * l[[j, k]];
        }
        if !(d > T::zero()) || !d.is_finite() {
            return None;
        }
        let d = d.sqrt();
        l[[j, j]] = d;
        for i in j + 1..n {
            let mut s = a[[i, j]];
            for k in 0..j {
                s = s - l[[i, k]] * l[[j, k]];
            }
            l[[i, j]] = s / d;
        }
    }
    Some(l)
}

/// Solves `L Lᵀ x = b` given the Cholesky factor.
pub fn cholesky_solve<T: Scalar>(l: &Array2<T>, b: &[T]) -> Vec<T> {
    let n = b.len();
    let mut y = b.to_vec();
    for i in 0..n {
        let mut s = y[i];
        for k in 0..i {
            s = s - l[[i, k]] * y[k];
        }
        y[i] = s / l[[i, i]];
    }
    for i in (0..n).rev() {
        let mut s = y[i];
        for k in i + 1..n {
            s = s - l[[k, i]] * y[k];
        }
        y[i] = s / l[[i, i]];
    }
    y
}

/// Thomas algorithm for a tridiagonal system with sub-, main and
/// super-diagonals `a`, `b`, `c` (`a[0]` and `c[n-1]` are ignored). Returns
/// `None` on a zero pivot.
pub fn solve_tridiagonal<T: Scalar>(a: &[T], b: &[T], c: &[T], d: &[T]) -> Option<Vec<T>> {
    let n = b.len();
    let mut cp = vec![T::zero(); n];
    let mut dp = vec![T::zero(); n];
    let mut denom = b[0];
    if denom == T::zero() || !denom.is_finite() {
        return None;
    }
    cp[0] = c[0] / denom;
    dp[0] = d[0] / denom;
    for i in 1..n {
        denom = b[i] - a[i] * cp[i - 1];
        if denom == T::zero() || !denom.is_finite() {
            return None;
        }
        cp[i] = if i + 1 < n { c[i] / denom } else { T::zero() };
        dp[i] = (d[i] - a[i] * dp[i - 1]) / denom;
    }
    let mut x = dp;
    for i in (0..n - 1).rev() {
        x[i] = x[i] - cp[i] * x[i + 1];
    }
    Some(x)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn cholesky_solves_spd_system() {
        let a = ndarray::arr2(&[[4.0, 1.0, 0.5], [1.0, 3.0, 0.2], [0.5, 0.2, 2.0]]);
        let l = cholesky(&a).unwrap();
        let x = cholesky_solve(&l, &[1.0, 2.0, 3.0]);
        let back = a.dot(&ndarray::arr1(&x));
        for (u, v) in back.iter().zip([1.0, 2.0, 3.0]) {
            assert_relative_eq!(*u, v, epsilon = 1e-13);
        }
        assert!(cholesky(&ndarray::arr2(&[[1.0, 2.0], [2.0, 1.0]])).is_none());
    }

    #[test]
    fn thomas_matches_dense() {
        let a = [0.0, -1.0, -1.0, -1.0];
        let b = [2.0, 2.0, 2.0, 2.0];
        let c = [-1.0, -1.0, -1.0, 0.0];
        let x = solve_tridiagonal(&a, &b, &c, &[1.0, 0.0, 0.0, 1.0]).unwrap();
        for v in x {
            assert_relative_eq!(v, 1.0, epsilon = 1e-14);
        }
    }
}
