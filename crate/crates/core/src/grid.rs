//! Non-uniform cell-centred grids on `[-L, L]`, their quadrature, the
//! phase-space field, mass-conserving rescaling and snapshot IO.

use std::io::{BufRead, Write};

use ndarray::Array2;

use crate::error::{Error, Result};
use crate::pchip::Pchip;
use crate::scalar::{count, lit, to_f64, Scalar};

/// Positivity floor applied whenever values are re-sampled.
pub const FLOOR: f64 = 1e-10;

/// Ordered nodes on `[-L, L]` with boundary-corrected quadrature weights.
///
/// Interior weights are `(v_{j+1} - v_{j-1}) / 2`; the two boundary weights
/// extend the first and last half-cells to the domain edges so the weights
/// telescope to `2L`.
#[derive(Debug, Clone, PartialEq)]
pub struct Grid1D<T> {
    nodes: Vec<T>,
    half_length: T,
    weights: Vec<T>,
}

impl<T: Scalar> Grid1D<T> {
    /// Cell-centred uniform grid `x_i = -L + (i - 1/2)·2L/N`, `i = 1..N`.
    pub fn uniform(half_length: T, n: usize) -> Result<Self> {
        if n < 3 {
            return Err(Error::InvalidGrid(format!("need at least 3 nodes, got {n}")));
        }
        if !(half_length > T::zero()) {
            return Err(Error::InvalidGrid("half length must be positive".into()));
        }
        let spacing = lit::<T>(2.0) * half_length / count(n);
        let nodes = (0..n)
            .map(|i| -half_length + (count::<T>(i) + lit(0.5)) * spacing)
            .collect();
        Self::from_nodes(nodes, half_length)
    }

    pub fn from_nodes(nodes: Vec<T>, half_length: T) -> Result<Self> {
        let n = nodes.len();
        if n < 3 {
            return Err(Error::InvalidGrid(format!("need at least 3 nodes, got {n}")));
        }
        if !(half_length > T::zero()) || !half_length.is_finite() {
            return Err(Error::InvalidGrid("half length must be positive".into()));
        }
        if nodes.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidGrid("non-finite node".into()));
        }
        if let Some(k) = nodes.windows(2).position(|w| !(w[1] > w[0])) {
            return Err(Error::InvalidGrid(format!(
                "nodes not strictly increasing at index {}",
                k + 1
            )));
        }
        if !(nodes[0] > -half_length) || !(nodes[n - 1] < half_length) {
            return Err(Error::InvalidGrid("nodes must lie strictly inside (-L, L)".into()));
        }
        let weights = boundary_weights(&nodes, half_length);
        if let Some(k) = weights.iter().position(|w| !(*w > T::zero())) {
            return Err(Error::InvalidGrid(format!("non-positive quadrature weight at {k}")));
        }
        Ok(Self {
            nodes,
            half_length,
            weights,
        })
    }

    pub fn nodes(&self) -> &[T] {
        &self.nodes
    }

    pub fn weights(&self) -> &[T] {
        &self.weights
    }

    pub fn half_length(&self) -> T {
        self.half_length
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Spacings `v_{j+1} - v_j`.
    pub fn spacings(&self) -> Vec<T> {
        self.nodes.windows(2).map(|w| w[1] - w[0]).collect()
    }

    pub fn min_spacing(&self) -> T {
        self.nodes
            .windows(2)
            .map(|w| w[1] - w[0])
            .fold(T::infinity(), T::min)
    }

    /// Index of the node closest to `target`.
    pub fn nearest(&self, target: T) -> usize {
        let mut best = 0;
        for (k, v) in self.nodes.iter().enumerate() {
            if (*v - target).abs() < (self.nodes[best] - target).abs() {
                best = k;
            }
        }
        best
    }
}

fn boundary_weights<T: Scalar>(nodes: &[T], half_length: T) -> Vec<T> {
    let n = nodes.len();
    let half = lit::<T>(0.5);
    let mut w = Vec::with_capacity(n);
    w.push(half_length + half * (nodes[1] + nodes[0]));
    for j in 1..n - 1 {
        w.push(half * (nodes[j + 1] - nodes[j - 1]));
    }
    w.push(half_length - half * (nodes[n - 1] + nodes[n - 2]));
    w
}

/// `Σ_j values_j · weights_j`.
pub fn quadrature_mass<T: Scalar>(grid: &Grid1D<T>, values: &[T]) -> Result<T> {
    if values.len() != grid.len() {
        return Err(Error::LengthMismatch {
            expected: grid.len(),
            got: values.len(),
        });
    }
    Ok(values
        .iter()
        .zip(grid.weights())
        .map(|(f, w)| *f * *w)
        .sum())
}

/// Shape-preserving cubic interpolation of `values` (sampled on `src`) at
/// `query`. Queries beyond the outermost nodes take the end value.
pub fn interpolate<T: Scalar>(src: &Grid1D<T>, values: &[T], query: &[T]) -> Result<Vec<T>> {
    if values.len() != src.len() {
        return Err(Error::LengthMismatch {
            expected: src.len(),
            got: values.len(),
        });
    }
    Ok(Pchip::new(src.nodes().to_vec(), values.to_vec()).eval_many(query))
}

/// Floors values at [`FLOOR`] and rescales them to carry `target_mass`.
pub fn rescale_mass<T: Scalar>(grid: &Grid1D<T>, values: &[T], target_mass: T) -> Result<Vec<T>> {
    if !(target_mass > T::zero()) {
        return Err(Error::InvalidParameter(format!(
            "target mass must be positive, got {target_mass}"
        )));
    }
    let floor = lit::<T>(FLOOR);
    let mut out: Vec<T> = values.iter().map(|v| v.max(floor)).collect();
    let mass = quadrature_mass(grid, &out)?;
    let ratio = target_mass / mass;
    for v in out.iter_mut() {
        *v = *v * ratio;
    }
    Ok(out)
}

/// Density `f(x_i, v_j)` on a tensor grid, stored as an `N_x × N_v` matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct PhaseField<T> {
    pub x_grid: Grid1D<T>,
    pub v_grid: Grid1D<T>,
    pub values: Array2<T>,
}

impl<T: Scalar> PhaseField<T> {
    pub fn new(x_grid: Grid1D<T>, v_grid: Grid1D<T>, values: Array2<T>) -> Result<Self> {
        let shape = (x_grid.len(), v_grid.len());
        if values.dim() != shape {
            return Err(Error::InvalidGrid(format!(
                "field shape {:?} does not match grids {:?}",
                values.dim(),
                shape
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidParameter("non-finite field value".into()));
        }
        Ok(Self {
            x_grid,
            v_grid,
            values,
        })
    }

    /// Samples `f(x, v)` on the tensor product of the two grids.
    pub fn from_fn(x_grid: Grid1D<T>, v_grid: Grid1D<T>, f: impl Fn(T, T) -> T) -> Self {
        let values = Array2::from_shape_fn((x_grid.len(), v_grid.len()), |(i, j)| {
            f(x_grid.nodes()[i], v_grid.nodes()[j])
        });
        Self {
            x_grid,
            v_grid,
            values,
        }
    }

    pub fn nx(&self) -> usize {
        self.x_grid.len()
    }

    pub fn nv(&self) -> usize {
        self.v_grid.len()
    }

    /// Velocity mass of every x-row.
    pub fn row_masses(&self) -> Vec<T> {
        let wv = self.v_grid.weights();
        self.values
            .rows()
            .into_iter()
            .map(|row| row.iter().zip(wv).map(|(f, w)| *f * *w).sum())
            .collect()
    }

    /// Spatial mass of every v-column.
    pub fn column_masses(&self) -> Vec<T> {
        let wx = self.x_grid.weights();
        self.values
            .columns()
            .into_iter()
            .map(|col| col.iter().zip(wx).map(|(f, w)| *f * *w).sum())
            .collect()
    }

    pub fn total_mass(&self) -> T {
        self.row_masses()
            .iter()
            .zip(self.x_grid.weights())
            .map(|(m, w)| *m * *w)
            .sum()
    }

    pub fn max_value(&self) -> T {
        self.values.iter().fold(T::neg_infinity(), |a, b| a.max(*b))
    }

    /// Writes the plain-text snapshot format: a `# t=.. Nx=.. Nv=..` header
    /// followed by `x v f` rows, x-major.
    pub fn write_snapshot<W: Write>(&self, mut out: W, t: T) -> Result<()> {
        writeln!(out, "# t={:.16e} Nx={} Nv={}", to_f64(t), self.nx(), self.nv())?;
        for (i, x) in self.x_grid.nodes().iter().enumerate() {
            for (j, v) in self.v_grid.nodes().iter().enumerate() {
                writeln!(
                    out,
                    "{:.16e} {:.16e} {:.16e}",
                    to_f64(*x),
                    to_f64(*v),
                    to_f64(self.values[[i, j]])
                )?;
            }
        }
        Ok(())
    }
}

/// Contents of a snapshot file.
#[derive(Debug, Clone, PartialEq)]
pub struct Snapshot {
    pub t: f64,
    pub x: Vec<f64>,
    pub v: Vec<f64>,
    pub values: Array2<f64>,
}

pub fn read_snapshot<R: BufRead>(input: R) -> Result<Snapshot> {
    let mut lines = input.lines().enumerate();
    let (_, header) = lines.next().ok_or(Error::Snapshot {
        line: 1,
        msg: "missing header".into(),
    })?;
    let header = header?;
    let bad = |line: usize, msg: &str| Error::Snapshot {
        line,
        msg: msg.to_string(),
    };
    let rest = header
        .strip_prefix("# ")
        .ok_or_else(|| bad(1, "header must start with '# '"))?;
    let mut t = None;
    let mut nx = None;
    let mut nv = None;
    for token in rest.split_whitespace() {
        let (key, value) = token
            .split_once('=')
            .ok_or_else(|| bad(1, "malformed header token"))?;
        match key {
            "t" => t = value.parse::<f64>().ok(),
            "Nx" => nx = value.parse::<usize>().ok(),
            "Nv" => nv = value.parse::<usize>().ok(),
            _ => return Err(bad(1, "unknown header key")),
        }
    }
    let (t, nx, nv) = match (t, nx, nv) {
        (Some(t), Some(nx), Some(nv)) => (t, nx, nv),
        _ => return Err(bad(1, "header needs t, Nx and Nv")),
    };
    let mut x = vec![0.0; nx];
    let mut v = vec![0.0; nv];
    let mut values = Array2::zeros((nx, nv));
    let mut seen = 0;
    for (k, line) in lines {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        if seen >= nx * nv {
            return Err(bad(k + 1, "more rows than Nx*Nv"));
        }
        let cols: Vec<f64> = line
            .split_whitespace()
            .map(|c| c.parse::<f64>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| bad(k + 1, &e.to_string()))?;
        if cols.len() != 3 {
            return Err(bad(k + 1, "expected three columns"));
        }
        let (i, j) = (seen / nv, seen % nv);
        x[i] = cols[0];
        v[j] = cols[1];
        values[[i, j]] = cols[2];
        seen += 1;
    }
    if seen != nx * nv {
        return Err(bad(nx * nv + 1, "fewer rows than Nx*Nv"));
    }
    Ok(Snapshot { t, x, v, values })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    #[test]
    fn uniform_grid_is_cell_centred() {
        let g = Grid1D::uniform(2.0, 4).unwrap();
        assert_eq!(g.nodes(), &[-1.5, -0.5, 0.5, 1.5]);
        assert_eq!(g.weights(), &[1.0, 1.0, 1.0, 1.0]);
    }

    #[test]
    fn constant_integrates_to_domain_length() {
        let g = Grid1D::uniform(2.0, 40).unwrap();
        assert_relative_eq!(quadrature_mass(&g, &vec![1.0; 40]).unwrap(), 4.0, epsilon = 1e-13);
        assert_eq!(quadrature_mass(&g, &vec![0.0; 40]).unwrap(), 0.0);
        let mut spike = vec![0.0; 40];
        spike[17] = 1.0 / g.weights()[17];
        assert_relative_eq!(quadrature_mass(&g, &spike).unwrap(), 1.0, epsilon = 1e-15);
    }

    #[test]
    fn rejects_bad_grids() {
        assert!(Grid1D::from_nodes(vec![0.0, 0.5], 1.0).is_err());
        assert!(Grid1D::from_nodes(vec![-0.5, 0.5, 0.4], 1.0).is_err());
        assert!(Grid1D::from_nodes(vec![-1.0, 0.0, 0.5], 1.0).is_err());
        assert!(Grid1D::uniform(-1.0, 5).is_err());
        let g = Grid1D::uniform(1.0, 5).unwrap();
        assert!(matches!(
            quadrature_mass(&g, &[1.0, 2.0]),
            Err(Error::LengthMismatch { expected: 5, got: 2 })
        ));
    }

    #[test]
    fn interpolation_reproduces_nodes_and_lines() {
        let g = Grid1D::from_nodes(vec![-0.9, -0.4, 0.05, 0.3, 0.85], 1.0).unwrap();
        let vals: Vec<f64> = g.nodes().iter().map(|x| 2.0 * x + 0.5).collect();
        let same = interpolate(&g, &vals, g.nodes()).unwrap();
        assert_eq!(same, vals);
        let q = [-0.7, 0.0, 0.6];
        let out = interpolate(&g, &vals, &q).unwrap();
        for (o, x) in out.iter().zip(q) {
            assert_relative_eq!(*o, 2.0 * x + 0.5, epsilon = 1e-14);
        }
    }

    #[test]
    fn rescale_examples() {
        let g = Grid1D::uniform(1.0, 10).unwrap();
        let vals: Vec<f64> = (0..10).map(|k| 0.1 + k as f64 * 0.05).collect();
        let m = quadrature_mass(&g, &vals).unwrap();
        let same = rescale_mass(&g, &vals, m).unwrap();
        for (a, b) in same.iter().zip(&vals) {
            assert_relative_eq!(*a, *b, epsilon = 1e-15);
        }
        let halved = rescale_mass(&g, &vals, 0.5 * m).unwrap();
        for (a, b) in halved.iter().zip(&vals) {
            assert_relative_eq!(*a, 0.5 * b, epsilon = 1e-15);
        }

        let mut artefact = vals.clone();
        artefact[3] = -1e-4;
        let out = rescale_mass(&g, &artefact, 1.0).unwrap();
        assert!(out.iter().all(|v| *v > 0.0));
        assert_relative_eq!(quadrature_mass(&g, &out).unwrap(), 1.0, epsilon = 1e-15);
        assert!(rescale_mass(&g, &vals, 0.0).is_err());
    }

    #[test]
    fn snapshot_round_trip() {
        let xg = Grid1D::uniform(1.0, 3).unwrap();
        let vg = Grid1D::uniform(2.0, 4).unwrap();
        let field = PhaseField::from_fn(xg, vg, |x: f64, v: f64| (x * v).exp() / 3.0);
        let mut buf = Vec::new();
        field.write_snapshot(&mut buf, 0.125).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("# t=1.2500000000000000e-1 Nx=3 Nv=4\n"));
        let snap = read_snapshot(buf.as_slice()).unwrap();
        assert_eq!(snap.t, 0.125);
        assert_eq!(snap.x, field.x_grid.nodes());
        assert_eq!(snap.v, field.v_grid.nodes());
        assert_eq!(snap.values, field.values);
        assert!(read_snapshot("# t=1 Nx=2\n".as_bytes()).is_err());
    }

    fn random_grid() -> impl Strategy<Value = Grid1D<f64>> {
        (proptest::collection::vec(0.05f64..1.0, 4..30), 0.5f64..5.0).prop_map(|(gaps, l)| {
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
        fn weights_telescope(g in random_grid(), c in 0.1f64..10.0) {
            let m = quadrature_mass(&g, &vec![c; g.len()]).unwrap();
            let exact = 2.0 * g.half_length() * c;
            prop_assert!((m - exact).abs() <= 1e-12 * exact);
        }

        #[test]
        fn rescale_is_idempotent(g in random_grid(), seed in proptest::collection::vec(-0.1f64..3.0, 30), target in 0.1f64..5.0) {
            let vals: Vec<f64> = seed.into_iter().take(g.len()).collect();
            prop_assume!(vals.len() == g.len());
            let once = rescale_mass(&g, &vals, target).unwrap();
            let twice = rescale_mass(&g, &once, target).unwrap();
            // entries sitting at the floor may be re-floored on the second pass
            for (a, b) in once.iter().zip(&twice) {
                prop_assert!((a - b).abs() <= 1e-12 * a.abs() + 2.0 * FLOOR);
            }
            let m = quadrature_mass(&g, &once).unwrap();
            prop_assert!((m - target).abs() <= 1e-12 * target);
        }

        #[test]
        fn interpolation_is_bounded(g in random_grid(), seed in proptest::collection::vec(0.0f64..3.0, 30)) {
            let vals: Vec<f64> = seed.into_iter().take(g.len()).collect();
            prop_assume!(vals.len() == g.len());
            let lo = vals.iter().cloned().fold(f64::INFINITY, f64::min);
            let hi = vals.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let l = g.half_length();
            let q: Vec<f64> = (0..200).map(|k| -l + 2.0 * l * k as f64 / 199.0).collect();
            for v in interpolate(&g, &vals, &q).unwrap() {
                prop_assert!(v >= lo - 1e-12 && v <= hi + 1e-12);
            }
        }
    }
}
