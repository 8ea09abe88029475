//! Named initial conditions.

use std::collections::BTreeMap;
use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::grid::{Grid1D, PhaseField, FLOOR};
use crate::scalar::{lit, to_f64, Scalar};

/// Registry of the initial conditions understood by [`InitialCondition::from_name`].
pub const NAMES: [&str; 7] = ["g1", "g2", "g3", "g4", "in_two", "f0", "ic_g2"];

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum InitialCondition {
    /// `e^{-2v²}`
    G1,
    /// `2e^{-2v²}`
    G2,
    /// `4e^{-2v²}`
    G3,
    /// `e^{-10(v-1.5)²} + e^{-10(v+1.5)²}`; `in_two` is the same profile.
    G4,
    /// `e^{-a(x+c)²} e^{-b(v-d)²} + e^{-a(x-c)²} e^{-b(v+d)²}`
    F0 { a: f64, b: f64, c: f64, d: f64 },
    /// Sheared Gaussian `(2π)^{-1/2} e^{-a(bx+v)²}`, cut off by
    /// `e^{-1000(|x|-x1)²}` outside `|x| <= x1`.
    IcG2 { a: f64, b: f64, x1: f64 },
}

impl InitialCondition {
    /// Looks up `name`, filling missing parameters with their defaults.
    /// Unknown parameters are rejected.
    pub fn from_name(name: &str, params: &BTreeMap<String, f64>) -> Result<Self> {
        let allowed: &[&str] = match name {
            "f0" => &["a", "b", "c", "d"],
            "ic_g2" => &["a", "b", "x1"],
            _ => &[],
        };
        if let Some(k) = params.keys().find(|k| !allowed.contains(&k.as_str())) {
            return Err(Error::InvalidParameter(format!(
                "initial condition '{name}' has no parameter '{k}'"
            )));
        }
        let get = |k: &str, default: f64| params.get(k).copied().unwrap_or(default);
        Ok(match name {
            "g1" => Self::G1,
            "g2" => Self::G2,
            "g3" => Self::G3,
            "g4" | "in_two" => Self::G4,
            "f0" => Self::F0 {
                a: get("a", 6.0),
                b: get("b", 6.0),
                c: get("c", 1.5),
                d: get("d", 2.0),
            },
            "ic_g2" => Self::IcG2 {
                a: get("a", 120.0),
                b: get("b", 10.0),
                x1: get("x1", 0.2),
            },
            _ => {
                return Err(Error::InvalidParameter(format!(
                    "unknown initial condition '{name}', expected one of: {}",
                    NAMES.join(", ")
                )))
            }
        })
    }

    /// Whether the profile depends on velocity only.
    pub fn is_homogeneous(&self) -> bool {
        matches!(self, Self::G1 | Self::G2 | Self::G3 | Self::G4)
    }

    /// Velocity profile; `None` for phase-space conditions.
    pub fn profile(&self, v: f64) -> Option<f64> {
        let gauss = (-2.0 * v * v).exp();
        match self {
            Self::G1 => Some(gauss),
            Self::G2 => Some(2.0 * gauss),
            Self::G3 => Some(4.0 * gauss),
            Self::G4 => Some((-10.0 * (v - 1.5).powi(2)).exp() + (-10.0 * (v + 1.5).powi(2)).exp()),
            _ => None,
        }
    }

    /// Phase-space density. Velocity profiles are extended constantly in `x`.
    pub fn density(&self, x: f64, v: f64) -> f64 {
        match *self {
            Self::F0 { a, b, c, d } => {
                (-a * (x + c).powi(2) - b * (v - d).powi(2)).exp()
                    + (-a * (x - c).powi(2) - b * (v + d).powi(2)).exp()
            }
            Self::IcG2 { a, b, x1 } => {
                let core = (-a * (b * x + v).powi(2)).exp() / (2.0 * PI).sqrt();
                if x.abs() <= x1 {
                    core
                } else {
                    core * (-1000.0 * (x.abs() - x1).powi(2)).exp()
                }
            }
            _ => self.profile(v).unwrap_or(0.0),
        }
    }

    /// Samples the velocity profile on `grid`, floored.
    pub fn sample_profile<T: Scalar>(&self, grid: &Grid1D<T>) -> Result<Vec<T>> {
        if !self.is_homogeneous() {
            return Err(Error::InvalidParameter(
                "phase-space initial condition used for a homogeneous run".into(),
            ));
        }
        Ok(grid
            .nodes()
            .iter()
            .map(|v| lit::<T>(self.density(0.0, to_f64(*v)).max(FLOOR)))
            .collect())
    }

    /// Samples the density on the tensor grid, floored.
    pub fn sample_field<T: Scalar>(&self, x_grid: Grid1D<T>, v_grid: Grid1D<T>) -> PhaseField<T> {
        PhaseField::from_fn(x_grid, v_grid, |x, v| {
            lit(self.density(to_f64(x), to_f64(v)).max(FLOOR))
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn none() -> BTreeMap<String, f64> {
        BTreeMap::new()
    }

    #[test]
    fn registry() {
        for name in NAMES {
            assert!(InitialCondition::from_name(name, &none()).is_ok(), "{name}");
        }
        let err = InitialCondition::from_name("g7", &none()).unwrap_err().to_string();
        assert!(err.contains("g1") && err.contains("ic_g2"));
        let mut p = none();
        p.insert("q".into(), 1.0);
        assert!(InitialCondition::from_name("f0", &p).is_err());
        assert!(InitialCondition::from_name("g1", &p).is_err());
    }

    #[test]
    fn g2_peak() {
        let g = Grid1D::<f64>::uniform(3.0, 121).unwrap();
        let f = InitialCondition::G2.sample_profile(&g).unwrap();
        let k = g.nearest(0.0);
        assert_relative_eq!(f[k], 2.0, epsilon = 1e-12);
        assert!(f.iter().all(|x| *x <= f[k]));
    }

    #[test]
    fn f0_peak_value() {
        let ic = InitialCondition::from_name("f0", &none()).unwrap();
        let expect = 1.0 + (-6.0f64 * 9.0).exp() * (-6.0f64 * 16.0).exp();
        assert_relative_eq!(ic.density(-1.5, 2.0), expect, epsilon = 1e-15);
        assert!(!ic.is_homogeneous());
    }

    #[test]
    fn ic_g2_density_integral() {
        let ic = InitialCondition::from_name("ic_g2", &none()).unwrap();
        let vg = Grid1D::<f64>::uniform(3.0, 2001).unwrap();
        let rho0 = (1.0f64 / 240.0).sqrt();
        for x in [0.0, -0.1, 0.15] {
            let col: Vec<f64> = vg.nodes().iter().map(|v| ic.density(x, *v)).collect();
            let rho = crate::grid::quadrature_mass(&vg, &col).unwrap();
            assert_relative_eq!(rho, rho0, max_relative = 1e-4);
        }
        // cut off beyond x1
        assert!(ic.density(0.3, -3.0) < 1e-4 * ic.density(0.2, -2.0));
    }
}
