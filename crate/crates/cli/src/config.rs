//! Scenario files. Every table rejects unknown keys; errors carry the
//! dotted path of the offending field.

use std::path::Path;

use serde::{Deserialize, Serialize};

use renewal_core::discretization::{sample_kernel, GridSpec, KernelFamily};
use renewal_core::equilibria::SolverOptions;
use renewal_core::lyapunov::ToleranceModel;
use renewal_core::model::{ModelParams, SigmaGrid, SusceptibilityClass};
use renewal_core::simulator::{InitialProfile, RenewalModel};
use renewal_core::ModelError;

use crate::error::CliError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub sigma: SigmaSection,
    pub params: ParamsSection,
    pub kernel: KernelFamily,
    pub initial: InitialProfile,
    pub run: RunSection,
    #[serde(default)]
    pub tolerances: Tolerances,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sweep: Option<SweepSection>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SigmaSection {
    pub classes: Vec<SusceptibilityClass>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ParamsSection {
    pub mu: f64,
}

fn yes() -> bool {
    true
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunSection {
    /// Shared step for infection age and time.
    pub dt: f64,
    pub t_end: f64,
    #[serde(default = "yes")]
    pub corrector: bool,
    #[serde(default = "yes")]
    pub record_u: bool,
    #[serde(default = "yes")]
    pub record_w: bool,
    #[serde(default = "yes")]
    pub monitor: bool,
    /// Grid refinement oracle run by `certify`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub refinement: Option<RefinementSection>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RefinementSection {
    pub levels: usize,
    pub t_end: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Tolerances {
    /// Monotonicity slack is `c_tol · dt²`.
    pub c_tol: f64,
    pub solver_rel_tol: f64,
    pub identity_tol: f64,
    /// Relative distance to an equilibrium accepted as convergence.
    pub convergence: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        let solver = SolverOptions::default();
        Self {
            c_tol: 0.01,
            solver_rel_tol: solver.rel_tol,
            identity_tol: solver.identity_tol,
            convergence: 1e-4,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSection {
    pub axes: Vec<SweepAxis>,
}

/// One swept field: either explicit `values` or `count` points from `start`
/// to `stop` inclusive.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepAxis {
    pub field: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub values: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub start: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub stop: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub count: Option<usize>,
}

impl SweepAxis {
    pub fn points(&self) -> Result<Vec<f64>, CliError> {
        let values = match (&self.values, self.start, self.stop, self.count) {
            (Some(v), None, None, None) => v.clone(),
            (None, Some(a), Some(b), Some(n)) => match n {
                0 => Vec::new(),
                1 => vec![a],
                _ => (0..n).map(|i| a + (b - a) * i as f64 / (n - 1) as f64).collect(),
            },
            _ => {
                return Err(CliError::input(format!(
                    "sweep axis `{}`: give either `values` or all of `start`, `stop`, `count`",
                    self.field
                )))
            }
        };
        if values.is_empty() {
            return Err(CliError::input(format!("empty sweep axis `{}`", self.field)));
        }
        if let Some(v) = values.iter().find(|v| !v.is_finite()) {
            return Err(CliError::input(format!("sweep axis `{}`: non-finite value {v}", self.field)));
        }
        Ok(values)
    }
}

/// Validated module-level objects built from a [`Scenario`].
#[derive(Debug, Clone)]
pub struct Built {
    pub model: RenewalModel,
    pub solver: SolverOptions,
    pub tolerance: ToleranceModel,
}

fn at(prefix: &str, err: ModelError) -> CliError {
    match err {
        ModelError::InvalidParameter { name, reason } => {
            let path = if name.starts_with(prefix) {
                name
            } else {
                format!("{prefix}.{name}")
            };
            CliError::input(format!("{path}: {reason}"))
        }
        other => CliError::input(format!("{prefix}: {other}")),
    }
}

fn positive(path: &str, v: f64) -> Result<(), CliError> {
    if v.is_finite() && v > 0.0 {
        Ok(())
    } else {
        Err(CliError::input(format!("{path}: must be finite and > 0, got {v}")))
    }
}

impl Scenario {
    pub fn from_toml_str(text: &str) -> Result<Self, CliError> {
        let de = toml::Deserializer::parse(text).map_err(|e| CliError::input(format!("config: {e}")))?;
        let scenario: Scenario = serde_path_to_error::deserialize(de).map_err(path_error)?;
        scenario.validate()?;
        Ok(scenario)
    }

    pub fn from_table(table: toml::Table) -> Result<Self, CliError> {
        let scenario: Scenario = serde_path_to_error::deserialize(table).map_err(path_error)?;
        scenario.validate()?;
        Ok(scenario)
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::input(format!("cannot read {}: {e}", path.display())))?;
        Self::from_toml_str(&text)
    }

    pub fn to_toml_string(&self) -> Result<String, CliError> {
        toml::to_string(self).map_err(|e| CliError::input(format!("cannot serialize scenario: {e}")))
    }

    pub fn validate(&self) -> Result<(), CliError> {
        self.build().map(|_| ())
    }

    pub fn build(&self) -> Result<Built, CliError> {
        let grid = SigmaGrid::new(self.sigma.classes.clone()).map_err(|e| at("sigma", e))?;
        let params = ModelParams::new(self.params.mu).map_err(|e| at("params", e))?;
        positive("run.dt", self.run.dt)?;
        positive("run.t_end", self.run.t_end)?;
        let spec = GridSpec::new(self.run.dt).map_err(|e| at("run", e))?;
        let kernel = sample_kernel(&self.kernel, spec).map_err(|e| at("kernel", e))?;
        let model = RenewalModel::new(grid, params, kernel).with_corrector(self.run.corrector);

        // realize once so that bad profiles fail before any run
        let free = renewal_core::equilibria::infection_free(&model.grid, &model.params);
        self.initial.realize(&model, &free).map_err(|e| at("initial", e))?;

        let t = &self.tolerances;
        positive("tolerances.c_tol", t.c_tol)?;
        positive("tolerances.solver_rel_tol", t.solver_rel_tol)?;
        positive("tolerances.identity_tol", t.identity_tol)?;
        positive("tolerances.convergence", t.convergence)?;
        if let Some(r) = &self.run.refinement {
            if r.levels < 3 {
                return Err(CliError::input(format!(
                    "run.refinement.levels: must be >= 3, got {}",
                    r.levels
                )));
            }
            positive("run.refinement.t_end", r.t_end)?;
        }
        if let Some(sweep) = &self.sweep {
            for axis in &sweep.axes {
                axis.points()?;
            }
        }
        Ok(Built {
            model,
            solver: SolverOptions {
                rel_tol: t.solver_rel_tol,
                identity_tol: t.identity_tol,
                ..SolverOptions::default()
            },
            tolerance: ToleranceModel { c_tol: t.c_tol },
        })
    }

    pub fn with_overrides(mut self, dt: Option<f64>, t_end: Option<f64>) -> Result<Self, CliError> {
        if let Some(dt) = dt {
            self.run.dt = dt;
        }
        if let Some(t) = t_end {
            self.run.t_end = t;
        }
        self.validate()?;
        Ok(self)
    }
}

fn path_error<E: std::fmt::Display>(err: serde_path_to_error::Error<E>) -> CliError {
    let path = err.path().to_string();
    let inner = err.into_inner();
    if path == "." {
        CliError::input(format!("config: {inner}"))
    } else {
        CliError::input(format!("{path}: {inner}"))
    }
}

/// Sets the numeric field at a dotted path (`kernel.height`,
/// `sigma.classes.1.eta`) in a parsed config document.
pub fn set_path(doc: &mut toml::Table, field: &str, value: f64) -> Result<(), CliError> {
    let bad = |why: &str| CliError::input(format!("sweep field `{field}`: {why}"));
    let parts: Vec<&str> = field.split('.').collect();
    if parts.iter().any(|p| p.is_empty()) {
        return Err(bad("malformed path"));
    }
    let mut node = doc.get_mut(parts[0]).ok_or_else(|| bad("no such field"))?;
    for part in &parts[1..] {
        node = match node {
            toml::Value::Table(t) => t.get_mut(*part).ok_or_else(|| bad("no such field"))?,
            toml::Value::Array(a) => {
                let i: usize = part.parse().map_err(|_| bad("array segments must be indices"))?;
                a.get_mut(i).ok_or_else(|| bad("index out of range"))?
            }
            _ => return Err(bad("path descends into a scalar")),
        };
    }
    match node {
        toml::Value::Integer(_) if value.fract() == 0.0 => {
            *node = toml::Value::Integer(value as i64);
            Ok(())
        }
        toml::Value::Float(_) | toml::Value::Integer(_) => {
            *node = toml::Value::Float(value);
            Ok(())
        }
        _ => Err(bad("not a numeric field")),
    }
}
