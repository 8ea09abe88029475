//! Conserved and dissipated functionals, peak tracking and level-set checks.

use crate::error::{Error, Result};
use crate::grid::{Grid1D, PhaseField};
use crate::scalar::{count, Scalar};

fn velocity_weight<T: Scalar>(v: T, p: u32, signed: bool) -> T {
    if signed {
        v.powi(p as i32)
    } else {
        v.abs().powi(p as i32)
    }
}

/// `∫ v^p f dv` (signed) or `∫ |v|^p f dv`.
pub fn moment_1d<T: Scalar>(grid: &Grid1D<T>, f: &[T], p: u32, signed: bool) -> T {
    grid.nodes()
        .iter()
        .zip(grid.weights())
        .zip(f)
        .map(|((v, w), fv)| velocity_weight(*v, p, signed) * *w * *fv)
        .sum()
}

/// `∬ v^p f dx dv` (signed) or `∬ |v|^p f dx dv`.
pub fn moment<T: Scalar>(field: &PhaseField<T>, p: u32, signed: bool) -> T {
    let vw: Vec<T> = field
        .v_grid
        .nodes()
        .iter()
        .zip(field.v_grid.weights())
        .map(|(v, w)| velocity_weight(*v, p, signed) * *w)
        .collect();
    field
        .values
        .rows()
        .into_iter()
        .zip(field.x_grid.weights())
        .map(|(row, wx)| *wx * row.iter().zip(&vw).map(|(f, w)| *f * *w).sum::<T>())
        .sum()
}

fn neg_f_log_f<T: Scalar>(f: T) -> T {
    if f > T::zero() {
        -f * f.ln()
    } else {
        T::zero()
    }
}

/// `-∫ f ln f dv`.
pub fn entropy_1d<T: Scalar>(grid: &Grid1D<T>, f: &[T]) -> T {
    grid.weights()
        .iter()
        .zip(f)
        .map(|(w, fv)| *w * neg_f_log_f(*fv))
        .sum()
}

/// `-∬ f ln f dx dv`.
pub fn entropy<T: Scalar>(field: &PhaseField<T>) -> T {
    let wv = field.v_grid.weights();
    field
        .values
        .rows()
        .into_iter()
        .zip(field.x_grid.weights())
        .map(|(row, wx)| *wx * row.iter().zip(wv).map(|(f, w)| *w * neg_f_log_f(*f)).sum::<T>())
        .sum()
}

/// Node of the maximum of `f` over `v > 0`.
pub fn peak_position<T: Scalar>(grid: &Grid1D<T>, f: &[T]) -> Result<T> {
    let mut best: Option<(T, T)> = None;
    for (v, fv) in grid.nodes().iter().zip(f) {
        if *v > T::zero() && *fv > T::zero() && best.is_none_or(|(_, b)| *fv > b) {
            best = Some((*v, *fv));
        }
    }
    best.map(|(v, _)| v).ok_or(Error::EmptyField)
}

/// Position `(x, v)` of the maximum of a phase field over `v > 0`, which
/// follows one bump of a point-symmetric pair.
pub fn peak_location<T: Scalar>(field: &PhaseField<T>) -> (T, T) {
    let start = field.v_grid.nodes().partition_point(|v| *v <= T::zero()).min(field.nv() - 1);
    let mut best = (0, start);
    for ((i, j), f) in field.values.indexed_iter() {
        if j >= start && *f > field.values[best] {
            best = (i, j);
        }
    }
    (field.x_grid.nodes()[best.0], field.v_grid.nodes()[best.1])
}

/// Largest number of separate runs of `f > level` along a single x-column.
pub fn level_set_vertical_components<T: Scalar>(field: &PhaseField<T>, level: T) -> usize {
    field
        .values
        .rows()
        .into_iter()
        .map(|row| {
            let mut runs = 0;
            let mut inside = false;
            for f in row.iter() {
                let above = *f > level;
                if above && !inside {
                    runs += 1;
                }
                inside = above;
            }
            runs
        })
        .max()
        .unwrap_or(0)
}

/// `ln ρ / ln m` on the x-column nearest the origin, with `ρ` the velocity
/// integral and `m` the maximum of that column. `None` until both exceed `e`.
pub fn log_ratio_rho_m<T: Scalar>(field: &PhaseField<T>) -> Option<T> {
    let i = field.x_grid.nearest(T::zero());
    let row = field.values.row(i);
    let rho: T = row.iter().zip(field.v_grid.weights()).map(|(f, w)| *f * *w).sum();
    let m = row.iter().fold(T::zero(), |a, b| a.max(*b));
    let e = T::one().exp();
    (rho > e && m > e).then(|| rho.ln() / m.ln())
}

/// Least-squares slope of `ln y` against `ln t`.
pub fn loglog_slope<T: Scalar>(t: &[T], y: &[T]) -> Result<T> {
    if t.len() != y.len() {
        return Err(Error::LengthMismatch {
            expected: t.len(),
            got: y.len(),
        });
    }
    if t.len() < 2 || t.iter().chain(y).any(|v| !(*v > T::zero())) {
        return Err(Error::InvalidParameter("need two or more positive samples".into()));
    }
    let n = count::<T>(t.len());
    let lx: Vec<T> = t.iter().map(|v| v.ln()).collect();
    let ly: Vec<T> = y.iter().map(|v| v.ln()).collect();
    let mx = lx.iter().copied().sum::<T>() / n;
    let my = ly.iter().copied().sum::<T>() / n;
    let sxy: T = lx.iter().zip(&ly).map(|(a, b)| (*a - mx) * (*b - my)).sum();
    let sxx: T = lx.iter().map(|a| (*a - mx) * (*a - mx)).sum();
    Ok(sxy / sxx)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use ndarray::Array2;
    use proptest::prelude::*;
    use std::f64::consts::PI;

    fn gaussian_field(nx: usize, nv: usize, s: f64) -> PhaseField<f64> {
        let xg = Grid1D::uniform(1.0, nx).unwrap();
        let vg = Grid1D::uniform(8.0, nv).unwrap();
        PhaseField::from_fn(xg, vg, |_, v: f64| (-v * v / (2.0 * s * s)).exp() / (2.0 * PI * s * s).sqrt())
    }

    #[test]
    fn moments() {
        let field = gaussian_field(5, 201, 1.0);
        assert!(moment(&field, 1, true).abs() < 1e-14);
        // unit Gaussian on [-1, 1] in x: mass 2, second moment 2
        assert_relative_eq!(moment(&field, 0, false), 2.0, epsilon = 1e-4);
        assert_relative_eq!(moment(&field, 2, false), 2.0, epsilon = 1e-4);

        let xg = Grid1D::uniform(2.0, 7).unwrap();
        let vg = Grid1D::uniform(3.0, 9).unwrap();
        let c = PhaseField::new(xg, vg, Array2::from_elem((7, 9), 0.25)).unwrap();
        assert_relative_eq!(moment(&c, 0, false), 0.25 * 4.0 * 6.0, epsilon = 1e-13);
    }

    #[test]
    fn entropy_values() {
        let xg = Grid1D::uniform(2.0, 7).unwrap();
        let vg = Grid1D::uniform(3.0, 9).unwrap();
        let one = PhaseField::new(xg, vg, Array2::from_elem((7, 9), 1.0)).unwrap();
        assert_eq!(entropy(&one), 0.0);

        let s = 0.7;
        let field = gaussian_field(3, 401, s);
        let exact = 2.0 * 0.5 * (2.0 * PI * std::f64::consts::E * s * s).ln();
        assert_relative_eq!(entropy(&field), exact, epsilon = 1e-3);
        let wide = gaussian_field(3, 401, 1.4);
        assert!(entropy(&wide) > entropy(&field));
    }

    #[test]
    fn peaks() {
        let g = Grid1D::uniform(3.0, 61).unwrap();
        let mut f = vec![0.0; 61];
        f[45] = 1.0;
        assert_eq!(peak_position(&g, &f).unwrap(), g.nodes()[45]);
        let two: Vec<f64> = g
            .nodes()
            .iter()
            .map(|v| (-10.0 * (v - 1.5f64).powi(2)).exp() + (-10.0 * (v + 1.5f64).powi(2)).exp())
            .collect();
        let h = g.spacings()[0];
        assert!((peak_position(&g, &two).unwrap() - 1.5).abs() <= 0.5 * h + 1e-12);
        assert!(peak_position(&g, &vec![0.0; 61]).is_err());
    }

    #[test]
    fn level_set_components() {
        let xg = Grid1D::uniform(2.0, 41).unwrap();
        let vg = Grid1D::uniform(3.0, 61).unwrap();
        let one = PhaseField::from_fn(xg.clone(), vg.clone(), |x: f64, v: f64| (-x * x - v * v).exp());
        assert_eq!(level_set_vertical_components(&one, 0.1), 1);
        let two = PhaseField::from_fn(xg, vg, |x: f64, v: f64| {
            (-x * x - 8.0 * (v - 1.5).powi(2)).exp() + (-x * x - 8.0 * (v + 1.5).powi(2)).exp()
        });
        assert_eq!(level_set_vertical_components(&two, 0.1), 2);
    }

    #[test]
    fn log_ratio() {
        let xg = Grid1D::uniform(1.0, 3).unwrap();
        let vg = Grid1D::uniform(0.5, 5).unwrap();
        // unit v-length: a constant column has ρ = m
        let e2 = (2.0f64).exp();
        let field = PhaseField::new(xg.clone(), vg.clone(), Array2::from_elem((3, 5), e2)).unwrap();
        assert_relative_eq!(log_ratio_rho_m(&field).unwrap(), 1.0, epsilon = 1e-12);
        let small = PhaseField::new(xg, vg, Array2::from_elem((3, 5), 1.5)).unwrap();
        assert!(log_ratio_rho_m(&small).is_none());
    }

    #[test]
    fn slope_of_power_law() {
        let t: Vec<f64> = (1..20).map(|k| k as f64).collect();
        let y: Vec<f64> = t.iter().map(|t| 3.0 / t).collect();
        assert_relative_eq!(loglog_slope(&t, &y).unwrap(), -1.0, epsilon = 1e-12);
    }

    proptest! {
        #[test]
        fn level_components_bounded(seed in proptest::collection::vec(0.0f64..1.0, 64), level in 0.0f64..1.0) {
            let xg = Grid1D::uniform(1.0, 8).unwrap();
            let vg = Grid1D::uniform(1.0, 8).unwrap();
            let field = PhaseField::new(xg, vg, Array2::from_shape_vec((8, 8), seed).unwrap()).unwrap();
            let n = level_set_vertical_components(&field, level);
            prop_assert!(n <= 4);
            prop_assert_eq!(level_set_vertical_components(&field, 1.0), 0);
            let above = field.values.iter().any(|f| *f > level);
            prop_assert_eq!(n > 0, above);
        }

        #[test]
        fn entropy_invariant_under_permutation(seed in proptest::collection::vec(0.01f64..2.0, 10), rot in 0usize..10) {
            let g = Grid1D::uniform(1.0, 10).unwrap();
            let mut p = seed.clone();
            p.rotate_left(rot);
            prop_assert!((entropy_1d(&g, &seed) - entropy_1d(&g, &p)).abs() < 1e-12);
        }
    }
}
