//! Monotone piecewise cubic Hermite interpolation (Fritsch–Carlson slopes
//! with the weighted harmonic mean of Fritsch–Butland and shape-preserving
//! one-sided end slopes).

use crate::scalar::{lit, Scalar};

/// A shape-preserving cubic Hermite interpolant through `(x_k, y_k)`.
///
/// Queries outside `[x_0, x_{n-1}]` return the nearest end value.
#[derive(Debug, Clone)]
pub struct Pchip<T> {
    x: Vec<T>,
    y: Vec<T>,
    d: Vec<T>,
}

impl<T: Scalar> Pchip<T> {
    /// `x` must be strictly increasing with at least two entries.
    pub fn new(x: Vec<T>, y: Vec<T>) -> Self {
        assert_eq!(x.len(), y.len(), "pchip: abscissa/ordinate length mismatch");
        assert!(x.len() >= 2, "pchip: need at least two points");
        let d = slopes(&x, &y);
        Self { x, y, d }
    }

    pub fn eval(&self, q: T) -> T {
        let n = self.x.len();
        if q <= self.x[0] {
            return self.y[0];
        }
        if q >= self.x[n - 1] {
            return self.y[n - 1];
        }
        // first index with x > q, minus one
        let k = self.x.partition_point(|&xk| xk <= q) - 1;
        let h = self.x[k + 1] - self.x[k];
        let t = (q - self.x[k]) / h;
        let one = T::one();
        let two = lit::<T>(2.0);
        let three = lit::<T>(3.0);
        let t2 = t * t;
        let t3 = t2 * t;
        let h00 = two * t3 - three * t2 + one;
        let h10 = t3 - two * t2 + t;
        let h01 = three * t2 - two * t3;
        let h11 = t3 - t2;
        h00 * self.y[k] + h10 * h * self.d[k] + h01 * self.y[k + 1] + h11 * h * self.d[k + 1]
    }

    pub fn eval_many(&self, queries: &[T]) -> Vec<T> {
        queries.iter().map(|&q| self.eval(q)).collect()
    }
}

fn slopes<T: Scalar>(x: &[T], y: &[T]) -> Vec<T> {
    let n = x.len();
    let h: Vec<T> = x.windows(2).map(|w| w[1] - w[0]).collect();
    let del: Vec<T> = (0..n - 1).map(|k| (y[k + 1] - y[k]) / h[k]).collect();
    let mut d = vec![T::zero(); n];
    if n == 2 {
        d[0] = del[0];
        d[1] = del[0];
        return d;
    }
    let two = lit::<T>(2.0);
    for k in 1..n - 1 {
        let (a, b) = (del[k - 1], del[k]);
        if a * b > T::zero() {
            let w1 = two * h[k] + h[k - 1];
            let w2 = h[k] + two * h[k - 1];
            d[k] = (w1 + w2) / (w1 / a + w2 / b);
        }
    }
    d[0] = end_slope(h[0], h[1], del[0], del[1]);
    d[n - 1] = end_slope(h[n - 2], h[n - 3], del[n - 2], del[n - 3]);
    d
}

fn end_slope<T: Scalar>(h0: T, h1: T, del0: T, del1: T) -> T {
    let two = lit::<T>(2.0);
    let three = lit::<T>(3.0);
    let d = ((two * h0 + h1) * del0 - h0 * del1) / (h0 + h1);
    if d.signum() != del0.signum() || del0 == T::zero() {
        T::zero()
    } else if del0.signum() != del1.signum() && d.abs() > (three * del0).abs() {
        three * del0
    } else {
        d
    }
}
