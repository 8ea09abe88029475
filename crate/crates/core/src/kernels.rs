//! Power-law interaction kernels `W(v) = |v|^γ / γ` (or `|v|^γ`).

use ndarray::Array2;

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Interaction kernel of power-law type.
///
/// With `normalized = true` the kernel is `|v|^γ / γ`, otherwise `|v|^γ`.
/// The inelasticity strength is not part of the kernel; the collision
/// operator scales the assembled matrix separately.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KernelSpec<T> {
    pub gamma: T,
    pub normalized: bool,
}

impl<T: Scalar> KernelSpec<T> {
    pub fn new(gamma: T, normalized: bool) -> Result<Self> {
        if !(gamma >= T::one()) || !gamma.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "kernel exponent must be >= 1, got {gamma}"
            )));
        }
        Ok(Self { gamma, normalized })
    }

    fn scale(&self) -> T {
        if self.normalized {
            T::one() / self.gamma
        } else {
            T::one()
        }
    }

    /// `W(v)`; exactly zero at the origin.
    pub fn value(&self, v: T) -> T {
        if v == T::zero() {
            return T::zero();
        }
        self.scale() * v.abs().powf(self.gamma)
    }

    /// `W'(v) = c·sign(v)|v|^{γ-1}` with `c = 1` (normalized) or `γ`.
    ///
    /// For `γ = 1` the derivative jumps at the origin; the value there is 0.
    pub fn grad(&self, v: T) -> T {
        if v == T::zero() {
            return T::zero();
        }
        let c = if self.normalized { T::one() } else { self.gamma };
        c * v.signum() * v.abs().powf(self.gamma - T::one())
    }

    /// Pairwise matrix `W(v_i - v_l)`: symmetric with zero diagonal.
    pub fn matrix(&self, nodes: &[T]) -> Array2<T> {
        let n = nodes.len();
        let mut w = Array2::zeros((n, n));
        for i in 0..n {
            for l in (i + 1)..n {
                let value = self.value(nodes[i] - nodes[l]);
                w[[i, l]] = value;
                w[[l, i]] = value;
            }
        }
        w
    }
}
