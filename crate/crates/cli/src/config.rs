//! Scenario files: one TOML table per scenario, flat `key = value` entries.

use std::collections::BTreeMap;

use granular_core::analytic::SelfSimilarParams;
use granular_core::driver::{DtRule, RunConfig, Strategy};
use granular_core::initial::InitialCondition;
use granular_core::jko::HessianModel;
use granular_core::meshmap::{BumpMode, RefineParams};
use serde::{Deserialize, Serialize};

use crate::error::{CliError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    Homogeneous,
    Inhomogeneous,
    SelfSimilar,
}

/// One scenario as written in the file. Unset keys fall back to the
/// defaults of the scenario's mode.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioSpec {
    pub mode: Option<Mode>,
    pub initial: Option<String>,
    pub ic_a: Option<f64>,
    pub ic_b: Option<f64>,
    pub ic_c: Option<f64>,
    pub ic_d: Option<f64>,
    pub ic_x1: Option<f64>,

    pub gamma: Option<f64>,
    pub normalized_kernel: Option<bool>,
    pub lambda: Option<f64>,
    pub l_x: Option<f64>,
    pub l_v: Option<f64>,
    pub n_x: Option<usize>,
    pub n_v: Option<usize>,
    pub dt0: Option<f64>,
    /// `fixed` or `adaptive`.
    pub strategy: Option<String>,
    /// `constant`, `mesh_ratio` or `cfl`.
    pub dt_rule: Option<String>,
    pub t_final: Option<f64>,
    pub eps_x: Option<f64>,
    pub eps_v: Option<f64>,
    pub eps_t: Option<f64>,
    /// `one_bump` or `two_bump`.
    pub x_mode: Option<String>,
    pub x_delta0: Option<f64>,
    pub x_delta: Option<f64>,
    pub v_mode: Option<String>,
    pub v_delta0: Option<f64>,
    pub v_delta: Option<f64>,
    pub refine_stride: Option<usize>,
    pub stop_on_exit_flag: Option<bool>,

    pub fisher_beta: Option<f64>,
    pub omega: Option<f64>,
    pub max_iter: Option<usize>,
    pub tol: Option<f64>,
    pub diag_floor: Option<f64>,
    /// `exact` or `diagonal`.
    pub hessian: Option<String>,

    pub rho0: Option<f64>,
    pub m0: Option<f64>,
    pub b0: Option<f64>,
    /// `γ - 2` of the self-similar family.
    pub beta: Option<f64>,
    /// Number of sample times in `[0, t_final]` for self-similar runs.
    pub samples: Option<usize>,

    pub snapshot_stride: Option<usize>,
    /// Reference blow-up time and tolerance checked in the summary.
    pub expect_t_b: Option<f64>,
    pub expect_tol: Option<f64>,
}

/// A scenario file: scenario name to spec, in name order.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ScenarioFile {
    pub scenarios: BTreeMap<String, ScenarioSpec>,
}

impl ScenarioFile {
    pub fn parse(text: &str) -> Result<Self> {
        Self::from_table(parse_table(text)?)
    }

    /// Parses `text` after applying `overrides` of the form `key=value`
    /// (every scenario) or `name.key=value` (one scenario).
    pub fn parse_with_overrides(text: &str, overrides: &[String]) -> Result<Self> {
        let mut table = parse_table(text)?;
        for o in overrides {
            apply_override(&mut table, o)?;
        }
        Self::from_table(table)
    }

    fn from_table(table: toml::Table) -> Result<Self> {
        let file: Self = table.try_into().map_err(|e: toml::de::Error| CliError::Config(e.to_string()))?;
        if file.scenarios.is_empty() {
            return Err(CliError::Config("no scenarios defined".into()));
        }
        Ok(file)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| CliError::Config(e.to_string()))
    }
}

fn parse_table(text: &str) -> Result<toml::Table> {
    text.parse::<toml::Table>().map_err(|e| CliError::Config(e.to_string()))
}

fn parse_value(raw: &str) -> toml::Value {
    let doc = format!("v = {raw}");
    match doc.parse::<toml::Table>() {
        Ok(mut t) => t.remove("v").unwrap_or_else(|| toml::Value::String(raw.into())),
        Err(_) => toml::Value::String(raw.into()),
    }
}

fn apply_override(table: &mut toml::Table, spec: &str) -> Result<()> {
    let (key, raw) = spec
        .split_once('=')
        .ok_or_else(|| CliError::Config(format!("override '{spec}' is not key=value")))?;
    let (key, raw) = (key.trim(), raw.trim());
    let value = parse_value(raw);
    let (target, key) = match key.split_once('.') {
        Some((name, k)) => (Some(name), k),
        None => (None, key),
    };
    let mut hit = false;
    for (name, section) in table.iter_mut() {
        if target.is_some_and(|t| t != name) {
            continue;
        }
        let section = section
            .as_table_mut()
            .ok_or_else(|| CliError::Config(format!("'{name}' is not a scenario table")))?;
        section.insert(key.to_string(), value.clone());
        hit = true;
    }
    if !hit {
        return Err(CliError::Config(format!("override '{spec}' matches no scenario")));
    }
    Ok(())
}

fn choice<T: Copy>(field: &str, value: &Option<String>, default: T, options: &[(&str, T)]) -> Result<T> {
    let Some(v) = value else { return Ok(default) };
    options
        .iter()
        .find(|(name, _)| *name == v)
        .map(|(_, t)| *t)
        .ok_or_else(|| {
            let names: Vec<&str> = options.iter().map(|(n, _)| *n).collect();
            CliError::Config(format!("{field} = '{v}', expected one of: {}", names.join(", ")))
        })
}

/// Defaults of the homogeneous and inhomogeneous runs.
pub const HOMOGENEOUS_FISHER_BETA: f64 = 4500.0;
pub const INHOMOGENEOUS_DELTA0: f64 = 0.02;

impl ScenarioSpec {
    pub fn mode(&self) -> Result<Mode> {
        self.mode.ok_or_else(|| CliError::Config("missing 'mode'".into()))
    }

    pub fn initial_condition(&self) -> Result<InitialCondition> {
        let name = self
            .initial
            .as_deref()
            .ok_or_else(|| CliError::Config("missing 'initial'".into()))?;
        let mut params = BTreeMap::new();
        for (k, v) in [("a", self.ic_a), ("b", self.ic_b), ("c", self.ic_c), ("d", self.ic_d), ("x1", self.ic_x1)] {
            if let Some(v) = v {
                params.insert(k.to_string(), v);
            }
        }
        Ok(InitialCondition::from_name(name, &params)?)
    }

    /// Driver configuration for homogeneous and inhomogeneous scenarios.
    pub fn run_config(&self) -> Result<RunConfig<f64>> {
        let mode = self.mode()?;
        if mode == Mode::SelfSimilar {
            return Err(CliError::Config("self-similar scenarios have no driver config".into()));
        }
        let initial = self.initial_condition()?;
        if initial.is_homogeneous() != (mode == Mode::Homogeneous) {
            return Err(CliError::Config(format!(
                "initial condition '{}' does not fit mode {mode:?}",
                self.initial.as_deref().unwrap_or_default()
            )));
        }
        let mut cfg = RunConfig::homogeneous(initial);
        cfg.jko.beta = HOMOGENEOUS_FISHER_BETA;
        if mode == Mode::Inhomogeneous {
            cfg.x_refine.delta0 = INHOMOGENEOUS_DELTA0;
            cfg.v_refine.delta0 = INHOMOGENEOUS_DELTA0;
            cfg.eps_x = 1e-3 / 8.0;
            cfg.eps_v = 1e-3 / 8.0;
            cfg.l_x = 4.0;
            cfg.l_v = 4.0;
            cfg.n_x = 61;
            cfg.n_v = 61;
        }
        let set = |dst: &mut f64, src: Option<f64>| {
            if let Some(v) = src {
                *dst = v;
            }
        };
        set(&mut cfg.gamma, self.gamma);
        set(&mut cfg.lambda, self.lambda);
        set(&mut cfg.l_x, self.l_x);
        set(&mut cfg.l_v, self.l_v);
        set(&mut cfg.dt0, self.dt0);
        set(&mut cfg.t_final, self.t_final);
        set(&mut cfg.eps_x, self.eps_x);
        set(&mut cfg.eps_v, self.eps_v);
        set(&mut cfg.eps_t, self.eps_t);
        set(&mut cfg.jko.beta, self.fisher_beta);
        set(&mut cfg.jko.omega, self.omega);
        set(&mut cfg.jko.tol, self.tol);
        set(&mut cfg.jko.diag_floor, self.diag_floor);
        cfg.normalized_kernel = self.normalized_kernel.unwrap_or(cfg.normalized_kernel);
        cfg.n_x = self.n_x.unwrap_or(cfg.n_x);
        cfg.n_v = self.n_v.unwrap_or(cfg.n_v);
        cfg.refine_stride = self.refine_stride.unwrap_or(cfg.refine_stride);
        cfg.stop_on_exit_flag = self.stop_on_exit_flag.unwrap_or(cfg.stop_on_exit_flag);
        cfg.jko.max_iter = self.max_iter.unwrap_or(cfg.jko.max_iter);
        cfg.strategy = choice(
            "strategy",
            &self.strategy,
            cfg.strategy,
            &[("fixed", Strategy::Fixed), ("adaptive", Strategy::Adaptive)],
        )?;
        cfg.dt_rule = choice(
            "dt_rule",
            &self.dt_rule,
            cfg.dt_rule,
            &[
                ("constant", DtRule::Constant),
                ("mesh_ratio", DtRule::MeshRatio),
                ("cfl", DtRule::Cfl),
            ],
        )?;
        cfg.jko.hessian = choice(
            "hessian",
            &self.hessian,
            cfg.jko.hessian,
            &[("exact", HessianModel::Exact), ("diagonal", HessianModel::Diagonal)],
        )?;
        let modes = [("one_bump", BumpMode::OneBump), ("two_bump", BumpMode::TwoBump)];
        cfg.x_refine = RefineParams::new(
            choice("x_mode", &self.x_mode, cfg.x_refine.mode, &modes)?,
            self.x_delta0.unwrap_or(cfg.x_refine.delta0),
            self.x_delta.unwrap_or(cfg.x_refine.delta),
        )?;
        cfg.v_refine = RefineParams::new(
            choice("v_mode", &self.v_mode, cfg.v_refine.mode, &modes)?,
            self.v_delta0.unwrap_or(cfg.v_refine.delta0),
            self.v_delta.unwrap_or(cfg.v_refine.delta),
        )?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn self_similar(&self) -> Result<SelfSimilarParams<f64>> {
        let need = |name: &str, v: Option<f64>| v.ok_or_else(|| CliError::Config(format!("missing '{name}'")));
        Ok(SelfSimilarParams::new(
            need("rho0", self.rho0)?,
            need("m0", self.m0)?,
            need("b0", self.b0)?,
            need("lambda", self.lambda)?,
            self.beta.unwrap_or(0.0),
        )?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const TEXT: &str = r#"
[g1]
mode = "homogeneous"
initial = "g1"
dt0 = 0.00125
eps_v = 6.25e-5

[twin]
mode = "inhomogeneous"
initial = "f0"
gamma = 3.0
lambda = 4.0
"#;

    #[test]
    fn parse_and_defaults() {
        let file = ScenarioFile::parse(TEXT).unwrap();
        assert_eq!(file.scenarios.len(), 2);
        let cfg = file.scenarios["g1"].run_config().unwrap();
        assert_eq!(cfg.dt0, 0.00125);
        assert_eq!(cfg.n_v, 121);
        assert_eq!(cfg.jko.beta, HOMOGENEOUS_FISHER_BETA);
        let cfg = file.scenarios["twin"].run_config().unwrap();
        assert_eq!(cfg.x_refine.delta0, INHOMOGENEOUS_DELTA0);
        assert_eq!(cfg.l_x, 4.0);
    }

    #[test]
    fn overrides() {
        let o = vec!["lambda=10".to_string(), "g1.n_v=61".to_string(), "twin.v_mode=two_bump".to_string()];
        let file = ScenarioFile::parse_with_overrides(TEXT, &o).unwrap();
        assert_eq!(file.scenarios["g1"].lambda, Some(10.0));
        assert_eq!(file.scenarios["twin"].lambda, Some(10.0));
        assert_eq!(file.scenarios["g1"].n_v, Some(61));
        assert_eq!(file.scenarios["twin"].n_v, None);
        assert_eq!(file.scenarios["twin"].v_mode.as_deref(), Some("two_bump"));
        assert!(ScenarioFile::parse_with_overrides(TEXT, &["nobody.x=1".into()]).is_err());
        assert!(ScenarioFile::parse_with_overrides(TEXT, &["novalue".into()]).is_err());
    }

    #[test]
    fn rejects_bad_input() {
        assert!(ScenarioFile::parse("[a]\nmode = \"homogeneous\"\nbogus = 1\n").is_err());
        assert!(ScenarioFile::parse("").is_err());
        let bad_ic = ScenarioFile::parse("[a]\nmode = \"homogeneous\"\ninitial = \"f0\"\n").unwrap();
        assert!(bad_ic.scenarios["a"].run_config().is_err());
        let bad_choice = ScenarioFile::parse("[a]\nmode = \"homogeneous\"\ninitial = \"g1\"\nstrategy = \"fast\"\n").unwrap();
        let err = bad_choice.scenarios["a"].run_config().unwrap_err().to_string();
        assert!(err.contains("adaptive"));
    }

    #[test]
    fn round_trip() {
        let file = ScenarioFile::parse(TEXT).unwrap();
        let again = ScenarioFile::parse(&file.to_toml().unwrap()).unwrap();
        assert_eq!(file, again);
    }
}
