//! Adaptive mesh refinement by monotone maps `μ: [0, 1] → [0, L]`.
//!
//! A map is built on the positive half-axis from the super-level set of the
//! current profile and extended oddly, so a uniform cell-centred grid in
//! `s ∈ [-1, 1]` is pulled back to a grid that is dense where the profile
//! concentrates.

use ndarray::Array2;

use crate::error::{Error, Result};
use crate::grid::{interpolate, quadrature_mass, rescale_mass, Grid1D, PhaseField};
use crate::scalar::{count, lit, Scalar};

/// Shape of the concentration the map resolves.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BumpMode {
    /// A single concentration centred at the origin.
    OneBump,
    /// Two concentrations placed symmetrically about the origin.
    TwoBump,
}

/// Detection and map parameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RefineParams<T> {
    pub mode: BumpMode,
    /// Level-set threshold relative to the maximum.
    pub delta0: T,
    /// Fraction of the `s`-interval given to the concentration region.
    pub delta: T,
}

impl<T: Scalar> RefineParams<T> {
    pub fn new(mode: BumpMode, delta0: T, delta: T) -> Result<Self> {
        let unit = |x: T| x > T::zero() && x < T::one();
        if !unit(delta0) || !unit(delta) {
            return Err(Error::InvalidParameter(format!(
                "delta0 and delta must lie in (0, 1), got {delta0} and {delta}"
            )));
        }
        Ok(Self {
            mode,
            delta0,
            delta,
        })
    }
}

/// One branch of a piecewise map.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Piece<T> {
    /// `y0 + k (s - s0)`
    Line { s0: T, y0: T, k: T },
    /// `a s^5 + b s`
    Quintic { a: T, b: T },
    /// `a / (1 + e^{-b s})`
    Sigmoid { a: T, b: T },
    /// `a tanh(b s)`, the logistic curve shifted to pass through the origin.
    Tanh { a: T, b: T },
}

impl<T: Scalar> Piece<T> {
    pub fn eval(&self, s: T) -> T {
        match *self {
            Piece::Line { s0, y0, k } => y0 + k * (s - s0),
            Piece::Quintic { a, b } => a * s.powi(5) + b * s,
            Piece::Sigmoid { a, b } => a / (T::one() + (-b * s).exp()),
            Piece::Tanh { a, b } => a * (b * s).tanh(),
        }
    }

    pub fn slope(&self, s: T) -> T {
        match *self {
            Piece::Line { k, .. } => k,
            Piece::Quintic { a, b } => lit::<T>(5.0) * a * s.powi(4) + b,
            Piece::Sigmoid { a, b } => {
                let e = (-b * s).exp();
                a * b * e / ((T::one() + e) * (T::one() + e))
            }
            Piece::Tanh { a, b } => {
                let c = (b * s).cosh();
                a * b / (c * c)
            }
        }
    }
}

/// Piecewise monotone map with `μ(0) = 0`, `μ(1) = L`.
#[derive(Debug, Clone, PartialEq)]
pub struct MeshMap<T> {
    pub kind: BumpMode,
    pub delta: T,
    pub half_length: T,
    /// `[r]` or `[r1, r2]`.
    pub knots: Vec<T>,
    /// Pieces with the right end of their `s`-interval, in increasing order.
    pub pieces: Vec<(T, Piece<T>)>,
}

const MONOTONE_SAMPLES: usize = 1000;

impl<T: Scalar> MeshMap<T> {
    /// `μ(s) = L s`.
    pub fn identity(half_length: T) -> Self {
        Self {
            kind: BumpMode::OneBump,
            delta: lit(0.5),
            half_length,
            knots: vec![lit::<T>(0.5) * half_length],
            pieces: vec![(
                T::one(),
                Piece::Line {
                    s0: T::zero(),
                    y0: T::zero(),
                    k: half_length,
                },
            )],
        }
    }

    /// Line `(r/δ) s` on `[0, δ]`, then a quintic (`r/δ < L`) or a logistic
    /// curve (`r/δ ≥ L`) through `(δ, r)` and `(1, L)`.
    pub fn one_bump(r: T, delta: T, half_length: T) -> Result<Self> {
        let l = half_length;
        if !(r > T::zero() && r < l) || !(delta > T::zero() && delta < T::one()) {
            return Err(Error::MapConstruction(format!(
                "need 0 < r < L and 0 < delta < 1 (r = {r}, delta = {delta}, L = {l})"
            )));
        }
        let k = r / delta;
        let line = Piece::Line {
            s0: T::zero(),
            y0: T::zero(),
            k,
        };
        let prefer_quintic = k < l;
        let tail = outer_right(delta, r, l, k, prefer_quintic)?;
        let map = Self {
            kind: BumpMode::OneBump,
            delta,
            half_length: l,
            knots: vec![r],
            pieces: vec![(delta, line), (T::one(), tail)],
        };
        map.check()?;
        Ok(map)
    }

    /// Chord through `(½-δ/2, r1)` and `(½+δ/2, r2)` with outer pieces
    /// joining it to `(0, 0)` and `(1, L)`. Requires `r1 < r2`.
    pub fn two_bump(r1: T, r2: T, delta: T, half_length: T) -> Result<Self> {
        let l = half_length;
        if !(r1 > T::zero() && r1 < r2 && r2 < l) || !(delta > T::zero() && delta < T::one()) {
            return Err(Error::MapConstruction(format!(
                "need 0 < r1 < r2 < L and 0 < delta < 1 (r1 = {r1}, r2 = {r2}, L = {l})"
            )));
        }
        let half = lit::<T>(0.5);
        let s1 = half - half * delta;
        let s2 = half + half * delta;
        let k = (r2 - r1) / delta;
        let steep = k >= l;
        let left = outer_left(s1, r1, k, steep)?;
        let right = outer_right(s2, r2, l, k, !steep)?;
        let map = Self {
            kind: BumpMode::TwoBump,
            delta,
            half_length: l,
            knots: vec![r1, r2],
            pieces: vec![
                (s1, left),
                (s2, Piece::Line { s0: s1, y0: r1, k }),
                (T::one(), right),
            ],
        };
        map.check()?;
        Ok(map)
    }

    /// `μ(s)` for `s ∈ [0, 1]`, extended oddly to `[-1, 0)`.
    pub fn eval(&self, s: T) -> T {
        if s < T::zero() {
            return -self.eval(-s);
        }
        let piece = self
            .pieces
            .iter()
            .find(|(end, _)| s <= *end)
            .unwrap_or_else(|| self.pieces.last().expect("map has pieces"));
        piece.1.eval(s)
    }

    /// Knot values the map must hit: `(s, μ(s))` pairs.
    pub fn knot_conditions(&self) -> Vec<(T, T)> {
        let half = lit::<T>(0.5);
        let mut out = vec![(T::zero(), T::zero()), (T::one(), self.half_length)];
        match self.kind {
            BumpMode::OneBump => out.push((self.delta, self.knots[0])),
            BumpMode::TwoBump => {
                out.push((half - half * self.delta, self.knots[0]));
                out.push((half + half * self.delta, self.knots[1]));
            }
        }
        out
    }

    fn check(&self) -> Result<()> {
        let tol = lit::<T>(1e-9) * self.half_length.max(T::one());
        // both sides of every interface must hit the knot
        let mut start = T::zero();
        for (end, piece) in &self.pieces {
            for (s, y) in self.knot_conditions() {
                if (s == start || s == *end) && (piece.eval(s) - y).abs() > tol {
                    return Err(Error::MapConstruction(format!(
                        "knot residual {} at s = {s}",
                        piece.eval(s) - y
                    )));
                }
            }
            start = *end;
        }
        let mut prev = self.eval(T::zero());
        for k in 1..=MONOTONE_SAMPLES {
            let y = self.eval(count::<T>(k) / count(MONOTONE_SAMPLES));
            if !(y > prev) {
                return Err(Error::MapConstruction("map is not strictly increasing".into()));
            }
            prev = y;
        }
        Ok(())
    }

    /// Signed cell-centred nodes `μ(s_j)`, `s_j = -1 + (j - ½)·2/n`.
    pub fn nodes(&self, n: usize) -> Vec<T> {
        let two = lit::<T>(2.0);
        (0..n)
            .map(|j| {
                let s = -T::one() + (count::<T>(j) + lit(0.5)) * two / count(n);
                self.eval(s)
            })
            .collect()
    }

    pub fn grid(&self, n: usize) -> Result<Grid1D<T>> {
        Grid1D::from_nodes(self.nodes(n), self.half_length)
    }
}

/// Piece on `[0, s1]` through the origin and `(s1, r1)` with slope `k` at
/// `s1` where attainable: quintic or shifted logistic.
fn outer_left<T: Scalar>(s1: T, r1: T, k: T, prefer_quintic: bool) -> Result<Piece<T>> {
    let quintic = || {
        // a quintic through the origin cannot be steeper than 5 r1/s1 at s1;
        // beyond that the slope match is given up
        let k = k.min(lit::<T>(4.5) * r1 / s1);
        let a = (k - r1 / s1) / (lit::<T>(4.0) * s1.powi(4));
        let b = (lit::<T>(5.0) * r1 / s1 - k) / lit(4.0);
        (b > T::zero()).then_some(Piece::Quintic { a, b })
    };
    let tanh = || {
        let target = k * s1 / r1;
        if !(target > T::zero() && target < T::one()) {
            return None;
        }
        // 2z / sinh(2z) decreases from 1 to 0
        let ratio = |z: T| {
            let two_z = lit::<T>(2.0) * z;
            two_z / two_z.sinh() - target
        };
        let mut hi = T::one();
        while ratio(hi) > T::zero() {
            hi = hi * lit(2.0);
            if hi > lit(350.0) {
                return None;
            }
        }
        let z = bisect(ratio, lit(1e-12), hi)?;
        Some(Piece::Tanh {
            a: r1 / z.tanh(),
            b: z / s1,
        })
    };
    let found = if prefer_quintic {
        quintic().or_else(tanh)
    } else {
        tanh().or_else(quintic)
    };
    found.ok_or_else(|| {
        Error::MapConstruction(format!("no monotone inner piece for r1 = {r1}, slope {k}"))
    })
}

/// Piece on `[s0, 1]` through `(s0, r)` and `(1, L)`: quintic `a s^5 + b s`
/// or logistic `a / (1 + e^{-b s})`. Among admissible logistic fits the one
/// whose slope at `s0` is closest to `k_in` is taken.
fn outer_right<T: Scalar>(s0: T, r: T, l: T, k_in: T, prefer_quintic: bool) -> Result<Piece<T>> {
    let quintic = || {
        let a = (r - l * s0) / (s0.powi(5) - s0);
        let b = l - a;
        let p = Piece::Quintic { a, b };
        // derivative is monotone in s, so checking both ends suffices
        (p.slope(s0) > T::zero() && p.slope(T::one()) > T::zero()).then_some(p)
    };
    let sigmoid = || {
        let target = l / r;
        let g = |b: T| (T::one() + (-b * s0).exp()) / (T::one() + (-b).exp()) - target;
        let b_peak = golden_max(&g, T::zero(), lit(200.0));
        if !(g(b_peak) > T::zero()) {
            return None;
        }
        let mut candidates = Vec::new();
        if let Some(b) = bisect(&g, lit(1e-12), b_peak) {
            candidates.push(b);
        }
        let mut hi = b_peak * lit(2.0) + T::one();
        while g(hi) > T::zero() && hi < lit(1e4) {
            hi = hi * lit(2.0);
        }
        if let Some(b) = bisect(&g, b_peak, hi) {
            candidates.push(b);
        }
        candidates
            .into_iter()
            .map(|b| Piece::Sigmoid {
                a: r * (T::one() + (-b * s0).exp()),
                b,
            })
            .min_by(|p, q| {
                let dp = (p.slope(s0) - k_in).abs();
                let dq = (q.slope(s0) - k_in).abs();
                dp.partial_cmp(&dq).unwrap_or(std::cmp::Ordering::Equal)
            })
    };
    let found = if prefer_quintic {
        quintic().or_else(sigmoid)
    } else {
        sigmoid().or_else(quintic)
    };
    found.ok_or_else(|| {
        Error::MapConstruction(format!("no monotone outer piece through ({s0}, {r}) and (1, {l})"))
    })
}

/// Bisection for a sign change of `f` on `[lo, hi]`.
fn bisect<T: Scalar>(f: impl Fn(T) -> T, mut lo: T, mut hi: T) -> Option<T> {
    let mut flo = f(lo);
    let fhi = f(hi);
    if flo == T::zero() {
        return Some(lo);
    }
    if fhi == T::zero() {
        return Some(hi);
    }
    if (flo > T::zero()) == (fhi > T::zero()) || !flo.is_finite() || !fhi.is_finite() {
        return None;
    }
    let half = lit::<T>(0.5);
    for _ in 0..200 {
        let mid = half * (lo + hi);
        let fm = f(mid);
        if fm == T::zero() || hi - lo <= T::epsilon() * mid.abs() {
            return Some(mid);
        }
        if (fm > T::zero()) == (flo > T::zero()) {
            lo = mid;
            flo = fm;
        } else {
            hi = mid;
        }
    }
    Some(half * (lo + hi))
}

/// Maximiser of a unimodal function by golden-section search.
fn golden_max<T: Scalar>(f: &impl Fn(T) -> T, mut lo: T, mut hi: T) -> T {
    let inv_phi = lit::<T>(0.618_033_988_749_894_8);
    let mut x1 = hi - inv_phi * (hi - lo);
    let mut x2 = lo + inv_phi * (hi - lo);
    let (mut f1, mut f2) = (f(x1), f(x2));
    for _ in 0..200 {
        if f1 < f2 {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + inv_phi * (hi - lo);
            f2 = f(x2);
        } else {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - inv_phi * (hi - lo);
            f1 = f(x1);
        }
    }
    lit::<T>(0.5) * (lo + hi)
}

/// Positive nodes whose value exceeds `delta0 · max f`.
fn positive_level_set<T: Scalar>(grid: &Grid1D<T>, f: &[T], delta0: T) -> Result<Vec<usize>> {
    if f.len() != grid.len() {
        return Err(Error::LengthMismatch {
            expected: grid.len(),
            got: f.len(),
        });
    }
    let peak = f.iter().fold(T::zero(), |a, b| a.max(*b));
    if !(peak > T::zero()) {
        return Err(Error::EmptyField);
    }
    let level = delta0 * peak;
    Ok(grid
        .nodes()
        .iter()
        .zip(f)
        .enumerate()
        .filter(|(_, (v, fv))| **v > T::zero() && **fv > level)
        .map(|(j, _)| j)
        .collect())
}

fn first_positive<T: Scalar>(grid: &Grid1D<T>) -> usize {
    grid.nodes().partition_point(|v| *v <= T::zero()).min(grid.len() - 1)
}

/// Outer radius of the positive super-level set `{v_j > 0 : f_j > δ₀ max f}`.
///
/// Falls back to the first positive node when the set is empty.
pub fn concentration_radius_one_bump<T: Scalar>(
    grid: &Grid1D<T>,
    f: &[T],
    delta0: T,
) -> Result<T> {
    let set = positive_level_set(grid, f, delta0)?;
    let j = set.last().copied().unwrap_or_else(|| first_positive(grid));
    Ok(grid.nodes()[j])
}

/// Smallest and largest node of the positive super-level set.
pub fn concentration_radii_two_bump<T: Scalar>(
    grid: &Grid1D<T>,
    f: &[T],
    delta0: T,
) -> Result<(T, T)> {
    let set = positive_level_set(grid, f, delta0)?;
    match (set.first(), set.last()) {
        (Some(&a), Some(&b)) => Ok((grid.nodes()[a], grid.nodes()[b])),
        _ => {
            let v = grid.nodes()[first_positive(grid)];
            Ok((v, v))
        }
    }
}

/// Builds the refinement map for profile `f` on `grid`.
///
/// In two-bump mode a chord narrower than one node spacing is widened to the
/// next node, and a set that reaches down to the first positive node is
/// treated as a single bump at the origin.
///
/// A set whose outer edge lies within one uniform cell of `L` is not
/// localized; the uniform map is returned.
pub fn build_map<T: Scalar>(
    grid: &Grid1D<T>,
    f: &[T],
    params: &RefineParams<T>,
) -> Result<MeshMap<T>> {
    let l = grid.half_length();
    let edge = l - lit::<T>(2.0) * l / count::<T>(grid.len());
    match params.mode {
        BumpMode::OneBump => {
            let r = concentration_radius_one_bump(grid, f, params.delta0)?;
            if r > edge {
                return Ok(MeshMap::identity(l));
            }
            MeshMap::one_bump(r, params.delta, l)
        }
        BumpMode::TwoBump => {
            let (r1, mut r2) = concentration_radii_two_bump(grid, f, params.delta0)?;
            if r2 > edge {
                return Ok(MeshMap::identity(l));
            }
            let origin = first_positive(grid);
            if r1 <= grid.nodes()[origin] {
                return MeshMap::one_bump(r2, params.delta, l);
            }
            let j2 = grid.nearest(r2);
            let spacing = if j2 + 1 < grid.len() {
                grid.nodes()[j2 + 1] - grid.nodes()[j2]
            } else {
                grid.nodes()[j2] - grid.nodes()[j2 - 1]
            };
            if r2 - r1 < spacing {
                r2 = (r1 + spacing).min(lit::<T>(0.5) * (r1 + l));
            }
            MeshMap::two_bump(r1, r2, params.delta, l)
        }
    }
}

/// Moves `grid` to the nodes of `map`, interpolating `f` and restoring its
/// mass.
pub fn refine<T: Scalar>(
    grid: &Grid1D<T>,
    f: &[T],
    map: &MeshMap<T>,
) -> Result<(Grid1D<T>, Vec<T>)> {
    let new_grid = map.grid(grid.len())?;
    let mass = quadrature_mass(grid, f)?;
    let values = interpolate(grid, f, new_grid.nodes())?;
    let values = rescale_mass(&new_grid, &values, mass)?;
    Ok((new_grid, values))
}

/// Outcome of one adaptive regrid.
#[derive(Debug, Clone)]
pub struct Regrid<T> {
    pub grid: Grid1D<T>,
    pub values: Vec<T>,
    /// `None` when no admissible map existed and the grid was kept.
    pub map: Option<MeshMap<T>>,
}

/// Detection, map construction and refinement. A failed map construction,
/// or a map whose nodes collapse in floating point, keeps the current grid.
pub fn regrid<T: Scalar>(grid: &Grid1D<T>, f: &[T], params: &RefineParams<T>) -> Result<Regrid<T>> {
    match build_map(grid, f, params).and_then(|map| refine(grid, f, &map).map(|r| (r, map))) {
        Ok(((grid, values), map)) => Ok(Regrid {
            grid,
            values,
            map: Some(map),
        }),
        Err(Error::MapConstruction(msg) | Error::InvalidGrid(msg)) => {
            log::debug!("keeping grid: {msg}");
            Ok(Regrid {
                grid: grid.clone(),
                values: f.to_vec(),
                map: None,
            })
        }
        Err(e) => Err(e),
    }
}

/// Projections `max_j f_ij` (over x) and `max_i f_ij` (over v).
pub fn axis_profiles<T: Scalar>(field: &PhaseField<T>) -> (Vec<T>, Vec<T>) {
    let px = field
        .values
        .rows()
        .into_iter()
        .map(|row| row.iter().fold(T::zero(), |a, b| a.max(*b)))
        .collect();
    let pv = field
        .values
        .columns()
        .into_iter()
        .map(|col| col.iter().fold(T::zero(), |a, b| a.max(*b)))
        .collect();
    (px, pv)
}

/// Remaps a phase field onto new x and v grids: along v for every x-row
/// (row masses kept), then along x for every v-column (column masses kept).
pub fn remap_field<T: Scalar>(
    field: &PhaseField<T>,
    x_new: Grid1D<T>,
    v_new: Grid1D<T>,
) -> Result<PhaseField<T>> {
    let nx = field.nx();
    let nv_new = v_new.len();
    let mut stage = Array2::zeros((nx, nv_new));
    for (i, row) in field.values.rows().into_iter().enumerate() {
        let row = row.to_vec();
        let mass = quadrature_mass(&field.v_grid, &row)?;
        let vals = interpolate(&field.v_grid, &row, v_new.nodes())?;
        let vals = rescale_mass(&v_new, &vals, mass)?;
        for (j, v) in vals.into_iter().enumerate() {
            stage[[i, j]] = v;
        }
    }
    let mut out = Array2::zeros((x_new.len(), nv_new));
    for j in 0..nv_new {
        let col = stage.column(j).to_vec();
        let mass = quadrature_mass(&field.x_grid, &col)?;
        let vals = interpolate(&field.x_grid, &col, x_new.nodes())?;
        let vals = rescale_mass(&x_new, &vals, mass)?;
        for (i, v) in vals.into_iter().enumerate() {
            out[[i, j]] = v;
        }
    }
    PhaseField::new(x_new, v_new, out)
}

/// Refines both axes of a phase field from its axis projections.
pub fn regrid_field<T: Scalar>(
    field: &PhaseField<T>,
    x_params: &RefineParams<T>,
    v_params: &RefineParams<T>,
) -> Result<PhaseField<T>> {
    let (px, pv) = axis_profiles(field);
    let x_new = match build_map(&field.x_grid, &px, x_params).and_then(|m| m.grid(field.nx())) {
        Ok(grid) => grid,
        Err(Error::MapConstruction(msg) | Error::InvalidGrid(msg)) => {
            log::debug!("keeping x grid: {msg}");
            field.x_grid.clone()
        }
        Err(e) => return Err(e),
    };
    let v_new = match build_map(&field.v_grid, &pv, v_params).and_then(|m| m.grid(field.nv())) {
        Ok(grid) => grid,
        Err(Error::MapConstruction(msg) | Error::InvalidGrid(msg)) => {
            log::debug!("keeping v grid: {msg}");
            field.v_grid.clone()
        }
        Err(e) => return Err(e),
    };
    remap_field(field, x_new, v_new)
}
