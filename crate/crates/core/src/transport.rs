//! Semi-Lagrangian free transport `∂_t f + v ∂_x f = 0` with periodic
//! boundaries in `x`.

use ndarray::Array2;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::grid::{quadrature_mass, rescale_mass, Grid1D, PhaseField};
use crate::pchip::Pchip;
use crate::scalar::{lit, Scalar};

const GHOSTS: usize = 3;

/// Wraps `y` into `[-L, L)`.
pub fn wrap_periodic<T: Scalar>(y: T, half_length: T) -> T {
    let period = lit::<T>(2.0) * half_length;
    let shifted = (y + half_length) % period;
    let shifted = if shifted < T::zero() { shifted + period } else { shifted };
    let out = shifted - half_length;
    if out >= half_length {
        -half_length
    } else {
        out
    }
}

/// Interpolant of a periodic profile, extended by a few ghost nodes on each
/// side so the seam is handled like the interior.
fn periodic_interpolant<T: Scalar>(grid: &Grid1D<T>, f: &[T]) -> Pchip<T> {
    let n = grid.len();
    let g = GHOSTS.min(n - 1);
    let period = lit::<T>(2.0) * grid.half_length();
    let nodes = grid.nodes();
    let mut x = Vec::with_capacity(n + 2 * g);
    let mut y = Vec::with_capacity(n + 2 * g);
    for k in n - g..n {
        x.push(nodes[k] - period);
        y.push(f[k]);
    }
    x.extend_from_slice(nodes);
    y.extend_from_slice(f);
    for k in 0..g {
        x.push(nodes[k] + period);
        y.push(f[k]);
    }
    Pchip::new(x, y)
}

/// One velocity slice: samples `f_old` at the feet `x - v dt` of the query
/// nodes and re-weights the result to the slice's old mass.
pub fn advect_slice<T: Scalar>(
    x_old: &Grid1D<T>,
    f_old: &[T],
    x_new: &Grid1D<T>,
    v: T,
    dt: T,
) -> Result<Vec<T>> {
    if !(dt >= T::zero()) {
        return Err(Error::InvalidParameter(format!("time step must be >= 0, got {dt}")));
    }
    let mass = quadrature_mass(x_old, f_old)?;
    let interp = periodic_interpolant(x_old, f_old);
    let l = x_old.half_length();
    let sampled: Vec<T> = x_new
        .nodes()
        .iter()
        .map(|&x| interp.eval(wrap_periodic(x - v * dt, l)))
        .collect();
    if mass > T::zero() {
        rescale_mass(x_new, &sampled, mass)
    } else {
        Ok(sampled)
    }
}

/// Transports every velocity slice of `field` over `dt`, sampling the result
/// on `x_new`.
pub fn transport_step<T: Scalar>(
    field: &PhaseField<T>,
    x_new: &Grid1D<T>,
    dt: T,
) -> Result<PhaseField<T>> {
    let columns: Vec<Vec<T>> = field
        .values
        .columns()
        .into_iter()
        .map(|c| c.to_vec())
        .collect();
    let v_nodes = field.v_grid.nodes();
    let advected = columns
        .par_iter()
        .zip(v_nodes.par_iter())
        .map(|(col, &v)| advect_slice(&field.x_grid, col, x_new, v, dt))
        .collect::<Result<Vec<_>>>()?;
    let mut values = Array2::zeros((x_new.len(), field.nv()));
    for (j, col) in advected.into_iter().enumerate() {
        for (i, f) in col.into_iter().enumerate() {
            values[[i, j]] = f;
        }
    }
    PhaseField::new(x_new.clone(), field.v_grid.clone(), values)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    #[test]
    fn wrap_stays_in_domain() {
        assert_relative_eq!(wrap_periodic(2.5, 2.0), -1.5);
        assert_relative_eq!(wrap_periodic(-2.5, 2.0), 1.5);
        assert_relative_eq!(wrap_periodic(2.0, 2.0), -2.0);
        assert_relative_eq!(wrap_periodic(0.3, 2.0), 0.3);
        assert_relative_eq!(wrap_periodic(-9.7, 2.0), -1.7, epsilon = 1e-12);
    }

    #[test]
    fn zero_velocity_is_identity() {
        let g: Grid1D<f64> = Grid1D::uniform(3.0, 31).unwrap();
        let f: Vec<f64> = g.nodes().iter().map(|x| (-x * x).exp()).collect();
        let out = advect_slice(&g, &f, &g, 0.0, 0.1).unwrap();
        for (a, b) in out.iter().zip(&f) {
            assert_relative_eq!(*a, *b, epsilon = 1e-14);
        }
        let c = vec![0.7; 31];
        let out = advect_slice(&g, &c, &g, 1.3, 0.37).unwrap();
        for a in out {
            assert_relative_eq!(a, 0.7, epsilon = 1e-14);
        }
    }

    #[test]
    fn one_cell_shift_is_circular() {
        let g: Grid1D<f64> = Grid1D::uniform(2.0, 20).unwrap();
        let f: Vec<f64> = g.nodes().iter().map(|x| 3.0 + (3.0 * x).sin().powi(2) + x).collect();
        let dx = 0.2;
        let out = advect_slice(&g, &f, &g, 2.0, dx / 2.0).unwrap();
        for i in 0..20 {
            assert_relative_eq!(out[i], f[(i + 19) % 20], epsilon = 1e-12);
        }
        let back = advect_slice(&g, &f, &g, -1.0, dx).unwrap();
        for i in 0..20 {
            assert_relative_eq!(back[i], f[(i + 1) % 20], epsilon = 1e-12);
        }
    }

    #[test]
    fn separable_field_matches_slice_shifts() {
        let xg = Grid1D::uniform(2.0, 20).unwrap();
        // v = ±1 and 2 shift by -1, +1 and +2 cells at dt = 0.2
        let vg = Grid1D::from_nodes(vec![-1.0, 0.0, 1.0, 2.0], 2.5).unwrap();
        let gx = |x: f64| 1.0 + (-4.0 * x * x).exp();
        let hv = |v: f64| 1.0 + v * v;
        let field = PhaseField::from_fn(xg.clone(), vg, |x, v| gx(x) * hv(v));
        let out = transport_step(&field, &xg, 0.2).unwrap();
        for (j, shift) in [(0usize, -1i64), (1, 0), (2, 1), (3, 2)] {
            for i in 0..20i64 {
                let src = (i - shift).rem_euclid(20) as usize;
                assert_relative_eq!(
                    out.values[[i as usize, j]],
                    field.values[[src, j]],
                    epsilon = 1e-12
                );
            }
        }
    }

    #[test]
    fn point_symmetry_is_kept() {
        let g = Grid1D::uniform(4.0, 41).unwrap();
        let field = PhaseField::from_fn(g.clone(), g.clone(), |x: f64, v: f64| {
            (-6.0 * (x + 1.5).powi(2) - 6.0 * (v - 2.0).powi(2)).exp()
                + (-6.0 * (x - 1.5).powi(2) - 6.0 * (v + 2.0).powi(2)).exp()
        });
        let out = transport_step(&field, &g, 0.05).unwrap();
        for i in 0..41 {
            for j in 0..41 {
                assert_relative_eq!(
                    out.values[[i, j]],
                    out.values[[40 - i, 40 - j]],
                    epsilon = 1e-14,
                    max_relative = 1e-12
                );
            }
        }
    }

    fn random_grid(l: f64) -> impl Strategy<Value = Grid1D<f64>> {
        proptest::collection::vec(0.2f64..1.0, 20..40).prop_map(move |gaps| {
            let total: f64 = gaps.iter().sum();
            let mut acc = 0.0;
            let mut nodes = Vec::new();
            for g in &gaps[..gaps.len() - 1] {
                acc += g;
                nodes.push(-l + 2.0 * l * acc / total);
            }
            Grid1D::from_nodes(nodes, l).unwrap()
        })
    }

    proptest! {
        #[test]
        fn slice_mass_is_conserved(old in random_grid(3.0), new in random_grid(3.0), v in -4.0f64..4.0, dt in 0.0f64..2.0) {
            let f: Vec<f64> = old.nodes().iter().map(|x| (-2.0 * (x - 0.5).powi(2)).exp()).collect();
            let out = advect_slice(&old, &f, &new, v, dt).unwrap();
            let m0 = quadrature_mass(&old, &f).unwrap();
            let m1 = quadrature_mass(&new, &out).unwrap();
            prop_assert!((m1 - m0).abs() <= 1e-12 * m0);
            prop_assert!(out.iter().all(|x| x.is_finite()));
        }

        #[test]
        fn max_principle(v in -4.0f64..4.0, dt in 0.0f64..0.5) {
            let g: Grid1D<f64> = Grid1D::uniform(3.0, 61).unwrap();
            let f: Vec<f64> = g.nodes().iter().map(|x| (-2.0 * x * x).exp() + 1e-3).collect();
            let out = advect_slice(&g, &f, &g, v, dt).unwrap();
            let top = f.iter().cloned().fold(0.0, f64::max);
            prop_assert!(out.iter().all(|x| *x <= top * (1.0 + 1e-6)));
        }
    }
}
