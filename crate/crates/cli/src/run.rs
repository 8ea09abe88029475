//! Scenario execution and artifact output.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use granular_core::analytic::{classify_threshold, closed_form, integrate_ode};
use granular_core::driver::{
    run_homogeneous, run_inhomogeneous, BlowupReport, HistoryRow, RunConfig, StateView, Trigger,
};
use granular_core::grid::Grid1D;
use serde::Serialize;

use crate::config::{Mode, ScenarioSpec};
use crate::error::{CliError, Result};

#[derive(Debug, Clone, Serialize, PartialEq)]
pub struct FinalState {
    pub t: f64,
    pub mass: f64,
    pub momentum: f64,
    pub moment2: f64,
    pub entropy: f64,
    pub max_f: f64,
    pub min_dx: Option<f64>,
    pub min_dv: f64,
}

#[derive(Debug, Clone, Serialize, PartialEq)]
pub struct Expectation {
    pub t_b: f64,
    pub tol: f64,
    pub pass: bool,
}

#[derive(Debug, Clone, Serialize, PartialEq)]
pub struct Summary {
    pub name: String,
    pub mode: Mode,
    /// Stop time of a driver run, or the blow-up time of a self-similar one.
    pub t_b: f64,
    pub b_x: bool,
    pub b_v: bool,
    pub trigger: Option<String>,
    pub steps: usize,
    pub eps_x: Option<f64>,
    pub eps_v: Option<f64>,
    pub eps_t: Option<f64>,
    pub dt0: Option<f64>,
    pub initial_mass: Option<f64>,
    pub final_state: Option<FinalState>,
    pub threshold_number: Option<f64>,
    pub criticality: Option<String>,
    pub expectation: Option<Expectation>,
}

impl Summary {
    /// Whether a blow-up indicator stopped the run before its horizon.
    pub fn stopped_early(&self) -> bool {
        self.b_x || self.b_v
    }
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    File::create(path).map(BufWriter::new).map_err(CliError::io(path))
}

fn write_history(path: &Path, history: &[HistoryRow<f64>]) -> Result<()> {
    let mut out = create(path)?;
    let io = CliError::io(path);
    (|| {
        writeln!(out, "{}", HistoryRow::<f64>::CSV_HEADER)?;
        for row in history {
            writeln!(out, "{}", row.csv_line())?;
        }
        out.flush()
    })()
    .map_err(io)
}

/// Homogeneous profiles use the phase-field snapshot format with a single
/// `x = 0` column.
fn write_profile_snapshot(path: &Path, t: f64, grid: &Grid1D<f64>, f: &[f64]) -> Result<()> {
    let mut out = create(path)?;
    let io = CliError::io(path);
    (|| {
        writeln!(out, "# t={t:.16e} Nx=1 Nv={}", grid.len())?;
        for (v, fv) in grid.nodes().iter().zip(f) {
            writeln!(out, "{:.16e} {v:.16e} {fv:.16e}", 0.0)?;
        }
        out.flush()
    })()
    .map_err(io)
}

fn write_state(dir: &Path, step: usize, t: f64, state: StateView<'_, f64>) -> Result<()> {
    let path = dir.join(format!("snapshot_{step:06}.txt"));
    match state {
        StateView::Profile { grid, f } => write_profile_snapshot(&path, t, grid, f),
        StateView::Field(field) => {
            let out = create(&path)?;
            field.write_snapshot(out, t)?;
            Ok(())
        }
    }
}

fn trigger_name(t: Trigger) -> String {
    format!("{t:?}")
}

fn expectation(spec: &ScenarioSpec, t_b: f64) -> Option<Expectation> {
    spec.expect_t_b.map(|target| {
        let tol = spec.expect_tol.unwrap_or(5e-3);
        Expectation {
            t_b: target,
            tol,
            pass: (t_b - target).abs() <= tol,
        }
    })
}

fn final_state(row: Option<&HistoryRow<f64>>) -> Option<FinalState> {
    row.map(|r| FinalState {
        t: r.t,
        mass: r.mass,
        momentum: r.momentum,
        moment2: r.moment2,
        entropy: r.entropy,
        max_f: r.max_f,
        min_dx: r.min_dx.is_finite().then_some(r.min_dx),
        min_dv: r.min_dv,
    })
}

fn driver_summary(
    name: &str,
    mode: Mode,
    spec: &ScenarioSpec,
    cfg: &RunConfig<f64>,
    report: &BlowupReport<f64>,
    history: &[HistoryRow<f64>],
    initial_mass: f64,
) -> Summary {
    Summary {
        name: name.to_string(),
        mode,
        t_b: report.t_b,
        b_x: report.b_x,
        b_v: report.b_v,
        trigger: Some(trigger_name(report.trigger)),
        steps: report.steps,
        eps_x: (mode == Mode::Inhomogeneous).then_some(cfg.eps_x),
        eps_v: Some(cfg.eps_v),
        eps_t: Some(cfg.eps_t),
        dt0: Some(cfg.dt0),
        initial_mass: Some(initial_mass),
        final_state: final_state(history.last()),
        threshold_number: None,
        criticality: None,
        expectation: expectation(spec, report.t_b),
    }
}

/// Runs one scenario, writing `history.csv`, `summary.json` and (with a
/// positive stride) `snapshots/` under `out_dir`.
pub fn run_scenario(name: &str, spec: &ScenarioSpec, out_dir: &Path, stride: Option<usize>) -> Result<Summary> {
    fs::create_dir_all(out_dir).map_err(CliError::io(out_dir))?;
    let mode = spec.mode()?;
    let stride = stride.or(spec.snapshot_stride).unwrap_or(0);
    let snap_dir: PathBuf = out_dir.join("snapshots");
    if stride > 0 {
        fs::create_dir_all(&snap_dir).map_err(CliError::io(&snap_dir))?;
    }

    let summary = match mode {
        Mode::SelfSimilar => run_self_similar(name, spec, out_dir)?,
        Mode::Homogeneous | Mode::Inhomogeneous => {
            let cfg = spec.run_config()?;
            let mut failure: Option<CliError> = None;
            let mut observer = |step: usize, row: &HistoryRow<f64>, state: StateView<'_, f64>| {
                if stride > 0 && step % stride == 0 && failure.is_none() {
                    if let Err(e) = write_state(&snap_dir, step, row.t, state) {
                        failure = Some(e);
                    }
                }
            };
            let summary = if mode == Mode::Homogeneous {
                let grid = Grid1D::uniform(cfg.l_v, cfg.n_v)?;
                let f0 = cfg.initial.sample_profile(&grid)?;
                if stride > 0 {
                    write_profile_snapshot(&snap_dir.join("snapshot_000000.txt"), 0.0, &grid, &f0)?;
                }
                let mass0 = granular_core::grid::quadrature_mass(&grid, &f0)?;
                let run = run_homogeneous(&cfg, &mut observer)?;
                write_history(&out_dir.join("history.csv"), &run.history)?;
                driver_summary(name, mode, spec, &cfg, &run.report, &run.history, mass0)
            } else {
                let field = cfg.initial.sample_field(
                    Grid1D::uniform(cfg.l_x, cfg.n_x)?,
                    Grid1D::uniform(cfg.l_v, cfg.n_v)?,
                );
                if stride > 0 {
                    write_state(&snap_dir, 0, 0.0, StateView::Field(&field))?;
                }
                let mass0 = field.total_mass();
                let run = run_inhomogeneous(&cfg, &mut observer)?;
                write_history(&out_dir.join("history.csv"), &run.history)?;
                driver_summary(name, mode, spec, &cfg, &run.report, &run.history, mass0)
            };
            if let Some(e) = failure {
                return Err(e);
            }
            summary
        }
    };

    let path = out_dir.join("summary.json");
    let mut out = create(&path)?;
    serde_json::to_writer_pretty(&mut out, &summary)?;
    writeln!(out).and_then(|_| out.flush()).map_err(CliError::io(&path))?;
    Ok(summary)
}

fn run_self_similar(name: &str, spec: &ScenarioSpec, out_dir: &Path) -> Result<Summary> {
    let p = spec.self_similar()?;
    let big_t = p.blowup_time();
    let t_end = spec.t_final.unwrap_or(0.9 * big_t);
    if !(t_end > 0.0 && t_end < big_t) {
        return Err(CliError::Config(format!("t_final must lie in (0, {big_t})")));
    }
    let samples = spec.samples.unwrap_or(10).max(1);
    let path = out_dir.join("history.csv");
    let mut out = create(&path)?;
    writeln!(out, "t,rho,m,b").map_err(CliError::io(&path))?;
    for k in 0..=samples {
        let t = t_end * k as f64 / samples as f64;
        let (rho, m, b) = if p.beta == 0.0 {
            let s = closed_form(&p, t)?;
            (s.rho, s.m, s.b)
        } else if t == 0.0 {
            (p.rho0, p.m0, p.b0)
        } else {
            integrate_ode(&p, t, t / 20_000.0)?
        };
        writeln!(out, "{t:.16e},{rho:.16e},{m:.16e},{b:.16e}").map_err(CliError::io(&path))?;
    }
    out.flush().map_err(CliError::io(&path))?;
    Ok(Summary {
        name: name.to_string(),
        mode: Mode::SelfSimilar,
        t_b: big_t,
        b_x: false,
        b_v: false,
        trigger: None,
        steps: samples,
        eps_x: None,
        eps_v: None,
        eps_t: None,
        dt0: None,
        initial_mass: None,
        final_state: None,
        threshold_number: Some(p.threshold_number()),
        criticality: Some(format!("{:?}", classify_threshold(p.lambda, p.rho0, big_t))),
        expectation: expectation(spec, big_t),
    })
}
