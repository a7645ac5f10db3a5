use std::path::{Path, PathBuf};

use serde::Deserialize;

use nambu_core::discrete::CostateConvention;
use nambu_core::nambu::Polynomial;
use nambu_core::{IntegratorConfig, Method};

use crate::error::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SystemKind {
    Vortex,
    Reduced3,
    Nambu,
    Costate,
    Discrete,
    Qmcheck,
}

impl SystemKind {
    pub fn name(self) -> &'static str {
        match self {
            SystemKind::Vortex => "vortex",
            SystemKind::Reduced3 => "reduced3",
            SystemKind::Nambu => "nambu",
            SystemKind::Costate => "costate",
            SystemKind::Discrete => "discrete",
            SystemKind::Qmcheck => "qmcheck",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FieldKind {
    Rotation,
    Vortex,
    Linear,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MapKind {
    Cat,
    Shear,
    FanOut,
    Euler,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Convention {
    NextState,
    CurrentState,
}

impl From<Convention> for CostateConvention {
    fn from(c: Convention) -> Self {
        match c {
            Convention::NextState => CostateConvention::NextState,
            Convention::CurrentState => CostateConvention::CurrentState,
        }
    }
}

/// Everything a run may be configured with. Every field is optional here;
/// [`RunConfig::validate`] checks that the ones the selected system needs
/// are present and consistent.
#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub system: Option<SystemKind>,

    pub gammas: Option<Vec<f64>>,
    pub state: Option<Vec<f64>>,
    pub costate: Option<Vec<f64>>,
    pub tangent: Option<Vec<f64>>,

    pub field: Option<FieldKind>,
    pub matrix: Option<Vec<Vec<f64>>>,
    pub hamiltonians: Option<Vec<Polynomial>>,
    pub weight: Option<f64>,

    pub map: Option<MapKind>,
    pub steps: Option<usize>,
    pub tau: Option<f64>,
    pub exact: Option<bool>,
    pub convention: Option<Convention>,

    pub d: Option<u32>,
    pub r_min: Option<f64>,
    pub r_max: Option<f64>,
    pub points: Option<usize>,
    pub levels: Option<usize>,

    pub method: Option<Method>,
    pub dt: Option<f64>,
    pub t_end: Option<f64>,
    pub record_every: Option<usize>,

    pub out: Option<PathBuf>,
    pub report: Option<PathBuf>,
    pub timing: Option<bool>,
}

macro_rules! overlay {
    ($dst:ident, $src:ident, $($field:ident),*) => {
        $(if $src.$field.is_some() { $dst.$field = $src.$field; })*
    };
}

impl RunConfig {
    pub fn from_file(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Usage(format!("cannot read config {}: {e}", path.display())))?;
        serde_json::from_str(&text)
            .map_err(|e| CliError::Usage(format!("invalid config {}: {e}", path.display())))
    }

    /// Fields set in `other` take precedence.
    pub fn overlay(mut self, other: RunConfig) -> Self {
        overlay!(
            self, other, system, gammas, state, costate, tangent, field, matrix, hamiltonians,
            weight, map, steps, tau, exact, convention, d, r_min, r_max, points, levels, method,
            dt, t_end, record_every, out, report, timing
        );
        self
    }

    pub fn validate(self) -> Result<Job, CliError> {
        let kind = self.system.ok_or_else(|| usage("no system selected"))?;
        let outputs = Outputs {
            csv: self.out.clone(),
            report: self.report.clone(),
            timing: self.timing.unwrap_or(true),
        };
        let spec = match kind {
            SystemKind::Vortex => {
                let gammas = require(self.gammas.clone(), "gammas")?;
                let state = require(self.state.clone(), "state")?;
                if state.len() != 2 * gammas.len() {
                    return Err(usage(format!(
                        "vortex state needs 2 x {} = {} values (x1,y1,x2,y2,...), got {}",
                        gammas.len(),
                        2 * gammas.len(),
                        state.len()
                    )));
                }
                nambu_core::vortex::VortexConfiguration::from_state(gammas.clone(), &state)
                    .map_err(|e| usage(e.to_string()))?;
                SystemSpec::Vortex { gammas, state }
            }
            SystemKind::Reduced3 => {
                let gammas = triple(require(self.gammas.clone(), "gammas")?, "gammas")?;
                let u = triple(require(self.state.clone(), "state")?, "state")?;
                nambu_core::vortex::ReducedState::new(u, gammas).map_err(|e| usage(e.to_string()))?;
                SystemSpec::Reduced3 { gammas, u }
            }
            SystemKind::Nambu => {
                let state = require(self.state.clone(), "state")?;
                let hamiltonians = match (&self.hamiltonians, &self.gammas) {
                    (Some(h), _) => NambuHamiltonians::Polynomials {
                        polys: h.clone(),
                        weight: self.weight.unwrap_or(1.0),
                    },
                    (None, Some(g)) => NambuHamiltonians::Reduced3(triple(g.clone(), "gammas")?),
                    (None, None) => {
                        return Err(usage("nambu needs `hamiltonians` (polynomials) or `gammas` (three-vortex integrals)"))
                    }
                };
                if let NambuHamiltonians::Polynomials { polys, weight } = &hamiltonians {
                    if polys.is_empty() || polys.len() >= state.len() {
                        return Err(usage(format!(
                            "{} Hamiltonians on a state of length {}: need between 1 and {}",
                            polys.len(),
                            state.len(),
                            state.len().saturating_sub(1)
                        )));
                    }
                    if !(weight.is_finite() && *weight != 0.0) {
                        return Err(usage("weight must be finite and nonzero"));
                    }
                    if let Some(p) = polys.iter().find(|p| p.arity() > state.len()) {
                        return Err(usage(format!(
                            "a Hamiltonian refers to {} variables but the state has {}",
                            p.arity(),
                            state.len()
                        )));
                    }
                }
                if matches!(hamiltonians, NambuHamiltonians::Reduced3(_)) && state.len() != 3 {
                    return Err(usage("three-vortex integrals need a state of length 3"));
                }
                SystemSpec::Nambu { hamiltonians, state }
            }
            SystemKind::Costate => {
                let state = require(self.state.clone(), "state")?;
                let costate = require(self.costate.clone(), "costate")?;
                let field = match self.field.unwrap_or(FieldKind::Rotation) {
                    FieldKind::Rotation => CostateField::Rotation,
                    FieldKind::Vortex => CostateField::Vortex(require(self.gammas.clone(), "gammas")?),
                    FieldKind::Linear => {
                        let m = require(self.matrix.clone(), "matrix")?;
                        if m.is_empty() || m.iter().any(|r| r.len() != m.len()) {
                            return Err(usage("matrix must be square"));
                        }
                        CostateField::Linear(m)
                    }
                };
                let dim = field.dim();
                for (name, v) in [("state", Some(&state)), ("costate", Some(&costate)), ("tangent", self.tangent.as_ref())] {
                    if let Some(v) = v {
                        if v.len() != dim {
                            return Err(usage(format!("{name} needs {dim} values, got {}", v.len())));
                        }
                    }
                }
                if let CostateField::Vortex(g) = &field {
                    nambu_core::vortex::VortexConfiguration::from_state(g.clone(), &state)
                        .map_err(|e| usage(e.to_string()))?;
                }
                SystemSpec::Costate {
                    field,
                    state,
                    costate,
                    tangent: self.tangent.clone(),
                }
            }
            SystemKind::Discrete => {
                let map = self.map.ok_or_else(|| usage("discrete needs `map` (cat, shear, fan_out, euler)"))?;
                let state = require(self.state.clone(), "state")?;
                let costate = require(self.costate.clone(), "costate")?;
                let dim = 2;
                for (name, v) in [("state", Some(&state)), ("costate", Some(&costate)), ("tangent", self.tangent.as_ref())] {
                    if let Some(v) = v {
                        if v.len() != dim {
                            return Err(usage(format!("{name} needs {dim} values, got {}", v.len())));
                        }
                    }
                }
                let exact = self.exact.unwrap_or(false);
                if exact && map == MapKind::Euler {
                    return Err(usage("the euler map has no exact mode"));
                }
                let tau = self.tau.unwrap_or(1e-2);
                if !(tau.is_finite() && tau > 0.0) {
                    return Err(usage("tau must be positive"));
                }
                SystemSpec::Discrete {
                    map,
                    state,
                    costate,
                    tangent: self.tangent.clone(),
                    steps: self.steps.unwrap_or(100),
                    tau,
                    exact,
                    convention: self.convention.unwrap_or(Convention::NextState).into(),
                }
            }
            SystemKind::Qmcheck => {
                let d = self.d.unwrap_or(1);
                let grid = nambu_core::qmcheck::RadialGrid::new(
                    self.r_min.unwrap_or(1.0),
                    self.r_max.unwrap_or(2.0),
                    self.points.unwrap_or(201),
                    d,
                )
                .map_err(|e| usage(e.to_string()))?;
                let levels = self.levels.unwrap_or(3);
                if levels < 2 {
                    return Err(usage("levels must be at least 2"));
                }
                SystemSpec::Qmcheck { grid, levels }
            }
        };
        let integrator = match kind {
            SystemKind::Discrete | SystemKind::Qmcheck => None,
            _ => {
                let dt = require(self.dt, "dt")?;
                let t_end = require(self.t_end, "t_end")?;
                let cfg = IntegratorConfig {
                    method: self.method.unwrap_or(Method::Rk4),
                    dt,
                    t_end,
                    record_every: self.record_every.unwrap_or(1),
                };
                cfg.validate().map_err(|e| usage(e.to_string()))?;
                Some(cfg)
            }
        };
        Ok(Job {
            kind,
            spec,
            integrator,
            outputs,
        })
    }
}

/// Comma-separated reals, as accepted by the inline flags.
pub fn parse_list(s: &str) -> Result<Vec<f64>, String> {
    s.split(',')
        .map(|item| {
            item.trim()
                .parse::<f64>()
                .map_err(|e| format!("`{}` is not a number: {e}", item.trim()))
        })
        .collect()
}

fn usage(msg: impl Into<String>) -> CliError {
    CliError::Usage(msg.into())
}

fn require<T>(v: Option<T>, name: &str) -> Result<T, CliError> {
    v.ok_or_else(|| usage(format!("missing `{name}`")))
}

fn triple(v: Vec<f64>, name: &str) -> Result<[f64; 3], CliError> {
    <[f64; 3]>::try_from(v.as_slice()).map_err(|_| usage(format!("`{name}` needs exactly 3 values, got {}", v.len())))
}

#[derive(Debug, Clone)]
pub struct Outputs {
    pub csv: Option<PathBuf>,
    pub report: Option<PathBuf>,
    pub timing: bool,
}

#[derive(Debug, Clone)]
pub enum NambuHamiltonians {
    Polynomials { polys: Vec<Polynomial>, weight: f64 },
    Reduced3([f64; 3]),
}

#[derive(Debug, Clone)]
pub enum CostateField {
    Rotation,
    Vortex(Vec<f64>),
    Linear(Vec<Vec<f64>>),
}

impl CostateField {
    fn dim(&self) -> usize {
        match self {
            CostateField::Rotation => 2,
            CostateField::Vortex(g) => 2 * g.len(),
            CostateField::Linear(m) => m.len(),
        }
    }
}

#[derive(Debug, Clone)]
pub enum SystemSpec {
    Vortex {
        gammas: Vec<f64>,
        state: Vec<f64>,
    },
    Reduced3 {
        gammas: [f64; 3],
        u: [f64; 3],
    },
    Nambu {
        hamiltonians: NambuHamiltonians,
        state: Vec<f64>,
    },
    Costate {
        field: CostateField,
        state: Vec<f64>,
        costate: Vec<f64>,
        tangent: Option<Vec<f64>>,
    },
    Discrete {
        map: MapKind,
        state: Vec<f64>,
        costate: Vec<f64>,
        tangent: Option<Vec<f64>>,
        steps: usize,
        tau: f64,
        exact: bool,
        convention: CostateConvention,
    },
    Qmcheck {
        grid: nambu_core::qmcheck::RadialGrid,
        levels: usize,
    },
}

/// A validated run.
#[derive(Debug, Clone)]
pub struct Job {
    pub kind: SystemKind,
    pub spec: SystemSpec,
    pub integrator: Option<IntegratorConfig>,
    pub outputs: Outputs,
}
