//! Time loops: the homogeneous refined JKO iteration and the inhomogeneous
//! transport/collision splitting, with blow-up detection.

use ndarray::Array2;
use rayon::prelude::*;

use crate::diagnostics::{entropy, entropy_1d, moment, moment_1d, peak_location, peak_position};
use crate::error::{Error, Result};
use crate::grid::{quadrature_mass, Grid1D, PhaseField};
use crate::initial::InitialCondition;
use crate::jko::{Collision, JkoOptions, JkoOutcome};
use crate::kernels::KernelSpec;
use crate::meshmap::{regrid, regrid_field, BumpMode, RefineParams};
use crate::scalar::{lit, Scalar};
use crate::transport::transport_step;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Strategy {
    /// Constant step; stop when the mesh collapses below `eps`.
    Fixed,
    /// Halve the step whenever the collision solve fails; stop at `eps_t`.
    Adaptive,
}

/// Step-size rule of the inhomogeneous loop.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DtRule {
    Constant,
    /// `min(dt0, 0.9 Δv_min / L_v, 0.9 Δx_min / L_x)`.
    MeshRatio,
    /// `min(dt0, 0.9 Δx_min / max|v|)`.
    Cfl,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Trigger {
    MinDx,
    MinDv,
    ExitFlag,
    Horizon,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig<T> {
    pub gamma: T,
    /// Divide the kernel by `γ`.
    pub normalized_kernel: bool,
    pub lambda: T,
    pub l_x: T,
    pub l_v: T,
    pub n_x: usize,
    pub n_v: usize,
    pub dt0: T,
    pub strategy: Strategy,
    pub dt_rule: DtRule,
    pub t_final: T,
    pub eps_x: T,
    pub eps_v: T,
    pub eps_t: T,
    pub x_refine: RefineParams<T>,
    pub v_refine: RefineParams<T>,
    /// Refine every `refine_stride` steps.
    pub refine_stride: usize,
    /// Fixed strategy only: stop as soon as a collision solve fails.
    pub stop_on_exit_flag: bool,
    pub initial: InitialCondition,
    pub jko: JkoOptions<T>,
}

impl<T: Scalar> RunConfig<T> {
    /// Homogeneous defaults: `W = |v|`, `λ = 2`, `N_v = 121`, `L_v = 3`.
    pub fn homogeneous(initial: InitialCondition) -> Self {
        let half = lit::<T>(0.5);
        let refine = RefineParams {
            mode: BumpMode::OneBump,
            delta0: half,
            delta: half,
        };
        Self {
            gamma: T::one(),
            normalized_kernel: false,
            lambda: lit(2.0),
            l_x: T::one(),
            l_v: lit(3.0),
            n_x: 3,
            n_v: 121,
            dt0: lit(0.01),
            strategy: Strategy::Fixed,
            dt_rule: DtRule::Constant,
            t_final: T::one(),
            eps_x: lit(1e-3 / 16.0),
            eps_v: lit(1e-3 / 16.0),
            eps_t: lit(5e-6),
            x_refine: refine,
            v_refine: refine,
            refine_stride: 1,
            stop_on_exit_flag: false,
            initial,
            jko: JkoOptions::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let pos = |x: T| x > T::zero() && x.is_finite();
        if self.n_x < 3 || self.n_v < 3 {
            return Err(Error::InvalidParameter("grid sizes must be at least 3".into()));
        }
        for (name, x) in [
            ("gamma", self.gamma),
            ("l_x", self.l_x),
            ("l_v", self.l_v),
            ("dt0", self.dt0),
            ("t_final", self.t_final),
            ("eps_x", self.eps_x),
            ("eps_v", self.eps_v),
            ("eps_t", self.eps_t),
        ] {
            if !pos(x) {
                return Err(Error::InvalidParameter(format!("{name} must be positive, got {x}")));
            }
        }
        if !(self.lambda >= T::zero()) {
            return Err(Error::InvalidParameter("lambda must be >= 0".into()));
        }
        if self.refine_stride == 0 {
            return Err(Error::InvalidParameter("refine_stride must be positive".into()));
        }
        RefineParams::new(self.x_refine.mode, self.x_refine.delta0, self.x_refine.delta)?;
        RefineParams::new(self.v_refine.mode, self.v_refine.delta0, self.v_refine.delta)?;
        self.jko.validate()
    }

    pub fn kernel(&self) -> Result<KernelSpec<T>> {
        KernelSpec::new(self.gamma, self.normalized_kernel)
    }
}

/// Diagnostics recorded after every accepted step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HistoryRow<T> {
    pub t: T,
    pub dt: T,
    pub mass: T,
    pub momentum: T,
    pub moment2: T,
    pub moment3: T,
    pub moment4: T,
    pub entropy: T,
    /// NaN for homogeneous runs.
    pub min_dx: T,
    pub min_dv: T,
    pub max_f: T,
    pub exit_flag: bool,
    /// Second moment just before and just after the collision stage, on the
    /// same grid.
    pub moment2_pre_collision: T,
    pub moment2_post_collision: T,
    /// Maximum over `v > 0`: its position (NaN in x for homogeneous runs).
    pub peak_x: T,
    pub peak_v: T,
}

impl<T: Scalar> HistoryRow<T> {
    pub const CSV_HEADER: &'static str =
        "t,dt,mass,momentum,moment2,moment3,moment4,entropy,min_dx,min_dv,max_f,exit_flag";

    pub fn csv_line(&self) -> String {
        format!(
            "{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{}",
            self.t,
            self.dt,
            self.mass,
            self.momentum,
            self.moment2,
            self.moment3,
            self.moment4,
            self.entropy,
            self.min_dx,
            self.min_dv,
            self.max_f,
            u8::from(self.exit_flag)
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BlowupReport<T> {
    pub t_b: T,
    pub b_x: bool,
    pub b_v: bool,
    pub trigger: Trigger,
    pub steps: usize,
}

impl<T> BlowupReport<T> {
    fn new(t_b: T, trigger: Trigger, steps: usize) -> Self {
        Self {
            t_b,
            b_x: trigger == Trigger::MinDx,
            b_v: matches!(trigger, Trigger::MinDv | Trigger::ExitFlag),
            trigger,
            steps,
        }
    }
}

/// Current state handed to observers.
#[derive(Debug, Clone, Copy)]
pub enum StateView<'a, T> {
    Profile { grid: &'a Grid1D<T>, f: &'a [T] },
    Field(&'a PhaseField<T>),
}

/// Called after every accepted step with the step count, its history row and the state.
pub type Observer<'a, T> = dyn FnMut(usize, &HistoryRow<T>, StateView<'_, T>) + 'a;

/// Observer that ignores everything.
pub fn no_observer<T>(_: usize, _: &HistoryRow<T>, _: StateView<'_, T>) {}

#[derive(Debug, Clone)]
pub struct HomogeneousRun<T> {
    pub history: Vec<HistoryRow<T>>,
    pub report: BlowupReport<T>,
    pub grid: Grid1D<T>,
    pub f: Vec<T>,
}

#[derive(Debug, Clone)]
pub struct InhomogeneousRun<T> {
    pub history: Vec<HistoryRow<T>>,
    pub report: BlowupReport<T>,
    pub field: PhaseField<T>,
}

/// Result of [`adapt_dt_on_failure`]: the step that was finally used and the
/// converged result, or `None` once `dt` dropped to `eps_t`.
#[derive(Debug, Clone)]
pub struct Adapted<T, R> {
    pub dt: T,
    pub result: Option<R>,
    pub halvings: usize,
}

/// Calls `solve(dt)`, halving `dt` while it reports failure (`true` in the
/// second slot) and `dt > eps_t`.
pub fn adapt_dt_on_failure<T: Scalar, R>(
    mut dt: T,
    eps_t: T,
    mut solve: impl FnMut(T) -> Result<(R, bool)>,
) -> Result<Adapted<T, R>> {
    if !(dt > T::zero()) {
        return Err(Error::InvalidParameter(format!("time step must be positive, got {dt}")));
    }
    let mut halvings = 0;
    loop {
        let (r, failed) = solve(dt)?;
        if !failed {
            return Ok(Adapted {
                dt,
                result: Some(r),
                halvings,
            });
        }
        dt = dt * lit(0.5);
        halvings += 1;
        if dt <= eps_t {
            return Ok(Adapted {
                dt,
                result: None,
                halvings,
            });
        }
    }
}

fn horizon_reached<T: Scalar>(t: T, t_final: T) -> bool {
    t >= t_final * (T::one() - lit(1e-12))
}

fn profile_row<T: Scalar>(
    grid: &Grid1D<T>,
    f: &[T],
    t: T,
    dt: T,
    exit_flag: bool,
    pre: T,
    post: T,
) -> HistoryRow<T> {
    HistoryRow {
        t,
        dt,
        mass: moment_1d(grid, f, 0, false),
        momentum: moment_1d(grid, f, 1, true),
        moment2: moment_1d(grid, f, 2, false),
        moment3: moment_1d(grid, f, 3, false),
        moment4: moment_1d(grid, f, 4, false),
        entropy: entropy_1d(grid, f),
        min_dx: T::nan(),
        min_dv: grid.min_spacing(),
        max_f: f.iter().fold(T::zero(), |a, b| a.max(*b)),
        exit_flag,
        moment2_pre_collision: pre,
        moment2_post_collision: post,
        peak_x: T::nan(),
        peak_v: peak_position(grid, f).unwrap_or(T::nan()),
    }
}

fn field_row<T: Scalar>(field: &PhaseField<T>, t: T, dt: T, exit_flag: bool, pre: T, post: T) -> HistoryRow<T> {
    let (px, pv) = peak_location(field);
    HistoryRow {
        t,
        dt,
        mass: moment(field, 0, false),
        momentum: moment(field, 1, true),
        moment2: moment(field, 2, false),
        moment3: moment(field, 3, false),
        moment4: moment(field, 4, false),
        entropy: entropy(field),
        min_dx: field.x_grid.min_spacing(),
        min_dv: field.v_grid.min_spacing(),
        max_f: field.max_value(),
        exit_flag,
        moment2_pre_collision: pre,
        moment2_post_collision: post,
        peak_x: px,
        peak_v: pv,
    }
}

fn scale<T: Scalar>(values: &mut [T], s: T) {
    for v in values {
        *v = *v * s;
    }
}

/// Space-homogeneous run on `[-L_v, L_v]`.
pub fn run_homogeneous<T: Scalar>(
    cfg: &RunConfig<T>,
    observer: &mut Observer<'_, T>,
) -> Result<HomogeneousRun<T>> {
    cfg.validate()?;
    let kernel = cfg.kernel()?;
    let mut grid = Grid1D::uniform(cfg.l_v, cfg.n_v)?;
    let mut f = cfg.initial.sample_profile(&grid)?;
    run_homogeneous_from(cfg, &kernel, &mut grid, &mut f, observer)
}

/// Homogeneous run from a given profile; `grid` and `f` hold the final state.
pub fn run_homogeneous_from<T: Scalar>(
    cfg: &RunConfig<T>,
    kernel: &KernelSpec<T>,
    grid: &mut Grid1D<T>,
    f: &mut Vec<T>,
    observer: &mut Observer<'_, T>,
) -> Result<HomogeneousRun<T>> {
    cfg.validate()?;
    let mass0 = quadrature_mass(grid, f)?;
    if !(mass0 > T::zero()) || f.iter().any(|x| *x < T::zero()) {
        return Err(Error::InvalidParameter("initial profile must be nonnegative with positive mass".into()));
    }
    let mut history = Vec::new();
    let mut t = T::zero();
    let mut dt = cfg.dt0;
    let mut steps = 0usize;

    let trigger = loop {
        if horizon_reached(t, cfg.t_final) {
            break Trigger::Horizon;
        }
        if cfg.strategy == Strategy::Fixed && grid.min_spacing() <= cfg.eps_v {
            break Trigger::MinDv;
        }
        let collision = Collision::new(grid, kernel, cfg.lambda);
        let step_dt = dt.min(cfg.t_final - t);
        let (out, used_dt): (JkoOutcome<T>, T) = match cfg.strategy {
            Strategy::Fixed => (collision.solve(f, step_dt, &cfg.jko)?, step_dt),
            Strategy::Adaptive => {
                let adapted = adapt_dt_on_failure(step_dt, cfg.eps_t, |h| {
                    let out = collision.solve(f, h, &cfg.jko)?;
                    let failed = out.exit_flag;
                    Ok((out, failed))
                })?;
                match adapted.result {
                    Some(out) => {
                        if adapted.halvings > 0 {
                            dt = adapted.dt;
                        }
                        (out, adapted.dt)
                    }
                    None => break Trigger::ExitFlag,
                }
            }
        };
        let pre = moment_1d(grid, f, 2, false);
        let mut next = out.f;
        let s = mass0 / quadrature_mass(grid, &next)?;
        scale(&mut next, s);
        let post = moment_1d(grid, &next, 2, false);

        steps += 1;
        if steps % cfg.refine_stride == 0 {
            let r = regrid(grid, &next, &cfg.v_refine)?;
            *grid = r.grid;
            next = r.values;
        }
        *f = next;
        t = if cfg.strategy == Strategy::Fixed && used_dt == cfg.dt0 {
            cfg.dt0 * T::from_usize(steps).unwrap_or(T::infinity())
        } else {
            t + used_dt
        };
        let row = profile_row(grid, f, t, used_dt, out.exit_flag, pre, post);
        history.push(row);
        observer(steps, &row, StateView::Profile { grid, f });
        if out.exit_flag && cfg.strategy == Strategy::Fixed && cfg.stop_on_exit_flag {
            break Trigger::ExitFlag;
        }
    };

    Ok(HomogeneousRun {
        history,
        report: BlowupReport::new(t, trigger, steps),
        grid: grid.clone(),
        f: f.clone(),
    })
}

/// Collision stage on every x-row of `field` with one shared operator.
/// Returns the new values and whether any solve failed.
fn collide_rows<T: Scalar>(
    field: &PhaseField<T>,
    collision: &Collision<T>,
    dt: T,
    opts: &JkoOptions<T>,
) -> Result<(PhaseField<T>, bool)> {
    let rows: Vec<Vec<T>> = field.values.rows().into_iter().map(|r| r.to_vec()).collect();
    let outs = rows
        .par_iter()
        .map(|row| collision.solve(row, dt, opts))
        .collect::<Result<Vec<_>>>()?;
    let failed = outs.iter().any(|o| o.exit_flag);
    let mut values = Array2::zeros(field.values.raw_dim());
    for (i, (out, row)) in outs.into_iter().zip(&rows).enumerate() {
        // restore the row mass lost to the solver tolerance
        let target = quadrature_mass(&field.v_grid, row)?;
        let got = quadrature_mass(&field.v_grid, &out.f)?;
        let s = if got > T::zero() { target / got } else { T::one() };
        for (j, f) in out.f.into_iter().enumerate() {
            values[[i, j]] = f * s;
        }
    }
    Ok((PhaseField::new(field.x_grid.clone(), field.v_grid.clone(), values)?, failed))
}

/// Split-step run on `[-L_x, L_x] × [-L_v, L_v]` with periodic `x`.
pub fn run_inhomogeneous<T: Scalar>(
    cfg: &RunConfig<T>,
    observer: &mut Observer<'_, T>,
) -> Result<InhomogeneousRun<T>> {
    cfg.validate()?;
    let field = cfg
        .initial
        .sample_field(Grid1D::uniform(cfg.l_x, cfg.n_x)?, Grid1D::uniform(cfg.l_v, cfg.n_v)?);
    run_inhomogeneous_from(cfg, field, observer)
}

pub fn run_inhomogeneous_from<T: Scalar>(
    cfg: &RunConfig<T>,
    mut field: PhaseField<T>,
    observer: &mut Observer<'_, T>,
) -> Result<InhomogeneousRun<T>> {
    cfg.validate()?;
    let kernel = cfg.kernel()?;
    let mass0 = field.total_mass();
    if !(mass0 > T::zero()) || field.values.iter().any(|x| *x < T::zero()) {
        return Err(Error::InvalidParameter("initial field must be nonnegative with positive mass".into()));
    }
    let mut history = Vec::new();
    let mut t = T::zero();
    let mut dt_cap = cfg.dt0;
    let mut steps = 0usize;
    let nine = lit::<T>(0.9);

    let trigger = loop {
        if horizon_reached(t, cfg.t_final) {
            break Trigger::Horizon;
        }
        let dx = field.x_grid.min_spacing();
        let dv = field.v_grid.min_spacing();
        if dx <= cfg.eps_x {
            break Trigger::MinDx;
        }
        if dv <= cfg.eps_v {
            break Trigger::MinDv;
        }
        let dt = match cfg.dt_rule {
            DtRule::Constant => dt_cap,
            DtRule::MeshRatio => dt_cap.min(nine * dv / cfg.l_v).min(nine * dx / cfg.l_x),
            DtRule::Cfl => {
                let vmax = field.v_grid.nodes().iter().fold(T::zero(), |a, v| a.max(v.abs()));
                dt_cap.min(nine * dx / vmax)
            }
        }
        .min(cfg.t_final - t);

        let collision = Collision::new(&field.v_grid, &kernel, cfg.lambda);
        let attempt = |h: T| -> Result<((PhaseField<T>, PhaseField<T>), bool)> {
            let moved = transport_step(&field, &field.x_grid, h)?;
            let (collided, failed) = collide_rows(&moved, &collision, h, &cfg.jko)?;
            Ok(((moved, collided), failed))
        };
        let (moved, collided, failed, used_dt) = match cfg.strategy {
            Strategy::Fixed => {
                let ((m, c), failed) = attempt(dt)?;
                (m, c, failed, dt)
            }
            Strategy::Adaptive => {
                let adapted = adapt_dt_on_failure(dt, cfg.eps_t, attempt)?;
                match adapted.result {
                    Some((m, c)) => {
                        if adapted.halvings > 0 {
                            dt_cap = adapted.dt;
                        }
                        (m, c, false, adapted.dt)
                    }
                    None => break Trigger::ExitFlag,
                }
            }
        };
        let pre = moment(&moved, 2, false);
        let post = moment(&collided, 2, false);

        steps += 1;
        let mut next = if steps % cfg.refine_stride == 0 {
            regrid_field(&collided, &cfg.x_refine, &cfg.v_refine)?
        } else {
            collided
        };
        let s = mass0 / next.total_mass();
        next.values.mapv_inplace(|v| v * s);
        field = next;
        t = t + used_dt;

        let row = field_row(&field, t, used_dt, failed, pre, post);
        history.push(row);
        observer(steps, &row, StateView::Field(&field));
        if failed {
            break Trigger::ExitFlag;
        }
    };

    Ok(InhomogeneousRun {
        history,
        report: BlowupReport::new(t, trigger, steps),
        field,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn adapt_keeps_dt_on_success() {
        let a = adapt_dt_on_failure(0.1, 1e-6, |_| Ok(((), false))).unwrap();
        assert_eq!(a.dt, 0.1);
        assert_eq!(a.halvings, 0);
        assert!(a.result.is_some());
    }

    #[test]
    fn adapt_halves_after_failures() {
        let mut calls = 0;
        let a = adapt_dt_on_failure(0.1, 1e-6, |h| {
            calls += 1;
            Ok((h, calls <= 2))
        })
        .unwrap();
        assert_eq!(a.dt, 0.025);
        assert_eq!(a.result, Some(0.025));
    }

    #[test]
    fn adapt_gives_up_at_floor() {
        let a = adapt_dt_on_failure(0.1, 1e-3, |_| Ok(((), true))).unwrap();
        assert!(a.result.is_none());
        assert!(a.dt <= 1e-3 && a.dt > 0.5e-3);
    }

    #[test]
    fn config_validation() {
        let mut cfg = RunConfig::<f64>::homogeneous(InitialCondition::G1);
        assert!(cfg.validate().is_ok());
        cfg.n_v = 2;
        assert!(cfg.validate().is_err());
        let mut cfg = RunConfig::<f64>::homogeneous(InitialCondition::G1);
        cfg.eps_t = 0.0;
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn short_homogeneous_run_conserves_mass() {
        let mut cfg = RunConfig::<f64>::homogeneous(InitialCondition::G1);
        cfg.n_v = 41;
        cfg.dt0 = 0.02;
        cfg.t_final = 0.1;
        let mut seen = 0;
        let mut obs = |_: usize, _: &HistoryRow<f64>, _: StateView<'_, f64>| seen += 1;
        let run = run_homogeneous(&cfg, &mut obs).unwrap();
        assert_eq!(run.report.trigger, Trigger::Horizon);
        assert!(!run.report.b_v && !run.report.b_x);
        assert_eq!(seen, 5);
        assert!((run.report.t_b - 0.1).abs() < 1e-12);
        let m0 = run.history[0].mass;
        for row in &run.history {
            assert!((row.mass - m0).abs() <= 1e-10 * m0);
            assert!(row.moment2_post_collision <= row.moment2_pre_collision);
        }
        assert!(run.history.last().unwrap().max_f > 1.0);
    }

    #[test]
    fn short_inhomogeneous_run() {
        let mut cfg = RunConfig::<f64>::homogeneous(InitialCondition::F0 {
            a: 6.0,
            b: 6.0,
            c: 1.5,
            d: 2.0,
        });
        cfg.gamma = 3.0;
        cfg.lambda = 4.0;
        cfg.l_x = 4.0;
        cfg.l_v = 4.0;
        cfg.n_x = 21;
        cfg.n_v = 21;
        cfg.dt0 = 0.05;
        cfg.t_final = 0.1;
        let run = run_inhomogeneous(&cfg, &mut no_observer).unwrap();
        assert_eq!(run.report.trigger, Trigger::Horizon);
        assert_eq!(run.history.len(), 2);
        let m0 = cfg.initial.sample_field(Grid1D::uniform(4.0, 21).unwrap(), Grid1D::uniform(4.0, 21).unwrap()).total_mass();
        for row in &run.history {
            assert!((row.mass - m0).abs() <= 1e-10 * m0);
            assert!(row.momentum.abs() < 1e-8);
        }
    }
}
