use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::constraints::CombinatorialBarrier;
use crate::error::{Error, Result};
use crate::logic::{self, LogicTree};
use crate::primitives::{
    make_agent_block, ClassKappa, ControlAffineSystem, LinearSystem, PrimitiveBarrier, Shape,
    SingleIntegrator,
};
use crate::qp::SolverOptions;

pub const SCENARIO_VERSION: u32 = 1;

/// A complete closed-loop experiment, as read from a scenario file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub version: u32,
    pub name: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub description: Option<String>,
    pub system: SystemSpec,
    pub primitives: Vec<PrimitiveSpec>,
    pub logic: LogicTree,
    #[serde(default)]
    pub alpha: ClassKappa,
    #[serde(default)]
    pub margin: f64,
    pub desired: DesiredSpec,
    pub initial_state: Vec<f64>,
    #[serde(default)]
    pub sim: SimSettings,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub regions: Vec<RegionSpec>,
    #[serde(default)]
    pub solver: SolverSettings,
    #[serde(default)]
    pub on_infeasible: InfeasiblePolicy,
    #[serde(default)]
    pub output: OutputOptions,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum SystemSpec {
    SingleIntegrator {
        agents: usize,
        dim: usize,
    },
    Linear {
        #[serde(rename = "A")]
        a: Vec<Vec<f64>>,
        #[serde(rename = "B")]
        b: Vec<Vec<f64>>,
    },
}

impl SystemSpec {
    pub fn build(&self) -> Result<Box<dyn ControlAffineSystem>> {
        match self {
            SystemSpec::SingleIntegrator { agents, dim } => {
                if *agents == 0 || *dim == 0 {
                    return Err(Error::Scenario(
                        "system.single_integrator: agents and dim must be positive".into(),
                    ));
                }
                Ok(Box::new(SingleIntegrator::new(*agents, *dim)))
            }
            SystemSpec::Linear { a, b } => Ok(Box::new(LinearSystem::new(a.clone(), b.clone())?)),
        }
    }

    fn agents(&self) -> Option<(usize, usize)> {
        match self {
            SystemSpec::SingleIntegrator { agents, dim } => Some((*agents, *dim)),
            SystemSpec::Linear { .. } => None,
        }
    }
}

/// One primitive barrier. With `agent` set, the shape lives in that agent's
/// coordinates of a single-integrator stack; otherwise it spans the whole
/// state. The shape key sits next to `label` and `agent`:
/// `{"ball": {"c": [0, 0], "R": 1}, "agent": 2}`.
#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(try_from = "serde_json::Map<String, Value>")]
pub struct PrimitiveSpec {
    pub label: Option<String>,
    pub shape: Shape,
    pub agent: Option<usize>,
}

impl TryFrom<serde_json::Map<String, Value>> for PrimitiveSpec {
    type Error = String;

    fn try_from(mut map: serde_json::Map<String, Value>) -> std::result::Result<Self, String> {
        let label = match map.remove("label") {
            None | Some(Value::Null) => None,
            Some(v) => Some(serde_json::from_value(v).map_err(|e| format!("label: {e}"))?),
        };
        let agent = match map.remove("agent") {
            None | Some(Value::Null) => None,
            Some(v) => Some(serde_json::from_value(v).map_err(|e| format!("agent: {e}"))?),
        };
        if let Some(k) = map.keys().find(|k| !matches!(k.as_str(), "ball" | "halfspace")) {
            return Err(format!("unknown field `{k}`, expected `ball`, `halfspace`, `label` or `agent`"));
        }
        if map.len() != 1 {
            return Err("expected exactly one shape key (`ball` or `halfspace`)".into());
        }
        let shape = serde_json::from_value(Value::Object(map)).map_err(|e| e.to_string())?;
        Ok(Self { label, shape, agent })
    }
}

impl Serialize for PrimitiveSpec {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        use serde::ser::SerializeMap;
        let mut map = s.serialize_map(None)?;
        if let Some(l) = &self.label {
            map.serialize_entry("label", l)?;
        }
        if let Value::Object(shape) = serde_json::to_value(&self.shape).map_err(serde::ser::Error::custom)? {
            for (k, v) in &shape {
                map.serialize_entry(k, v)?;
            }
        }
        if let Some(a) = self.agent {
            map.serialize_entry("agent", &a)?;
        }
        map.end()
    }
}

impl PrimitiveSpec {
    pub fn whole(shape: Shape) -> Self {
        Self {
            label: None,
            shape,
            agent: None,
        }
    }

    pub fn on_agent(shape: Shape, agent: usize) -> Self {
        Self {
            label: None,
            shape,
            agent: Some(agent),
        }
    }

    pub fn labeled(mut self, label: impl Into<String>) -> Self {
        self.label = Some(label.into());
        self
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum DesiredSpec {
    /// One controller per agent of a single-integrator stack.
    PerAgent(Vec<AgentDesired>),
    /// Fixed input vector.
    Constant(Vec<f64>),
    /// `kd = 0`.
    ZeroHold,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum AgentDesired {
    /// Tracks `x_d(t) = offset + amplitude sin(omega t)` on the agent's first
    /// coordinate with `kappa (x_d - x) + xdot_d`; other coordinates get 0.
    Sinusoidal {
        kappa: f64,
        amplitude: f64,
        omega: f64,
        #[serde(default)]
        offset: f64,
    },
    Constant(Vec<f64>),
    ZeroHold,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Integrator {
    #[default]
    Euler,
    Rk4,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimSettings {
    #[serde(default = "default_dt")]
    pub dt: f64,
    #[serde(default = "default_horizon")]
    pub horizon: f64,
    #[serde(default)]
    pub integrator: Integrator,
    /// Primitive values `>= -safety_tol` count as satisfied.
    #[serde(default = "default_safety_tol")]
    pub safety_tol: f64,
}

fn default_dt() -> f64 {
    1e-2
}

fn default_horizon() -> f64 {
    50.0
}

fn default_safety_tol() -> f64 {
    1e-4
}

impl Default for SimSettings {
    fn default() -> Self {
        Self {
            dt: default_dt(),
            horizon: default_horizon(),
            integrator: Integrator::Euler,
            safety_tol: default_safety_tol(),
        }
    }
}

impl SimSettings {
    /// Number of integration steps, `round(horizon / dt)`.
    pub fn steps(&self) -> usize {
        (self.horizon / self.dt).round() as usize
    }
}

/// A named region: agent `j` is inside when `per_agent[j]` holds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RegionSpec {
    pub name: String,
    pub per_agent: Vec<LogicTree>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolverSettings {
    #[serde(default = "default_solver_tol")]
    pub tol: f64,
    #[serde(default = "default_max_iter")]
    pub max_iter: usize,
    #[serde(default = "default_true")]
    pub warm_start: bool,
}

fn default_solver_tol() -> f64 {
    SolverOptions::default().tol
}

fn default_max_iter() -> usize {
    SolverOptions::default().max_iter
}

fn default_true() -> bool {
    true
}

impl Default for SolverSettings {
    fn default() -> Self {
        Self {
            tol: default_solver_tol(),
            max_iter: default_max_iter(),
            warm_start: true,
        }
    }
}

impl SolverSettings {
    pub fn options(&self) -> SolverOptions {
        SolverOptions {
            tol: self.tol,
            max_iter: self.max_iter,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InfeasiblePolicy {
    /// Stop the run and report.
    #[default]
    Halt,
    /// Apply the desired control, flag the step and continue.
    Flag,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TrajectoryFormat {
    #[default]
    Jsonl,
    Csv,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputOptions {
    #[serde(default)]
    pub format: TrajectoryFormat,
    /// Record per-level node values at every step.
    #[serde(default = "default_true")]
    pub levels: bool,
}

impl Default for OutputOptions {
    fn default() -> Self {
        Self {
            format: TrajectoryFormat::Jsonl,
            levels: true,
        }
    }
}

impl ScenarioConfig {
    pub fn from_json_str(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }

    pub fn from_value(v: serde_json::Value) -> Result<Self> {
        Ok(serde_json::from_value(v)?)
    }

    pub fn to_json_pretty(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("scenario serializes");
        s.push('\n');
        s
    }

    pub fn compile(&self) -> Result<Scenario> {
        Scenario::new(self.clone())
    }
}

/// A validated scenario with its system, barriers and controllers built.
pub struct Scenario {
    config: ScenarioConfig,
    system: Box<dyn ControlAffineSystem>,
    barrier: CombinatorialBarrier,
}

impl std::fmt::Debug for Scenario {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Scenario")
            .field("name", &self.config.name)
            .field("primitives", &self.barrier.primitive_count())
            .finish()
    }
}

impl Scenario {
    pub fn new(config: ScenarioConfig) -> Result<Self> {
        if config.version != SCENARIO_VERSION {
            return Err(Error::Scenario(format!(
                "version: expected {SCENARIO_VERSION}, got {}",
                config.version
            )));
        }
        let system = config.system.build()?;
        let n = system.state_dim();
        let m = system.input_dim();
        let agents = config.system.agents();

        let mut barriers = Vec::with_capacity(config.primitives.len());
        for (i, spec) in config.primitives.iter().enumerate() {
            let ctx = |e: Error| Error::Scenario(format!("primitives[{i}]: {e}"));
            let b = match (spec.agent, agents) {
                (Some(j), Some((count, dim))) => {
                    if j >= count {
                        return Err(Error::Scenario(format!(
                            "primitives[{i}].agent: {j} out of range for {count} agents"
                        )));
                    }
                    make_agent_block(spec.shape.clone(), j, dim).map_err(ctx)?
                }
                (Some(_), None) => {
                    return Err(Error::Scenario(format!(
                        "primitives[{i}].agent: only valid for single_integrator systems"
                    )))
                }
                (None, _) => {
                    let b = PrimitiveBarrier::from_shape(spec.shape.clone()).map_err(ctx)?;
                    b.check_state_dim(n).map_err(ctx)?;
                    b
                }
            };
            barriers.push(match &spec.label {
                Some(l) => b.with_label(l.clone()),
                None => b,
            });
        }

        let barrier = CombinatorialBarrier::new(config.logic.clone(), barriers, config.alpha)
            .map_err(|e| match e {
                Error::InvalidTree(v) => Error::InvalidTree(v),
                other => Error::Scenario(format!("alpha: {other}")),
            })?
            .with_margin(config.margin)
            .map_err(|e| Error::Scenario(format!("margin: {e}")))?;

        if config.initial_state.len() != n {
            return Err(Error::Scenario(format!(
                "initial_state: expected {n} entries, got {}",
                config.initial_state.len()
            )));
        }
        if config.initial_state.iter().any(|v| !v.is_finite()) {
            return Err(Error::Scenario("initial_state: non-finite entry".into()));
        }

        let s = &config.sim;
        if !(s.dt.is_finite() && s.dt > 0.0) {
            return Err(Error::Scenario(format!("sim.dt: must be positive, got {}", s.dt)));
        }
        if !(s.horizon.is_finite() && s.horizon >= s.dt) {
            return Err(Error::Scenario(format!(
                "sim.horizon: must be at least dt ({}), got {}",
                s.dt, s.horizon
            )));
        }
        let steps = s.steps();
        if ((steps as f64) * s.dt - s.horizon).abs() > 1e-9 * s.horizon.max(1.0) {
            return Err(Error::Scenario(format!(
                "sim.horizon: {} is not a whole number of steps of {}",
                s.horizon, s.dt
            )));
        }
        if !(s.safety_tol.is_finite() && s.safety_tol >= 0.0) {
            return Err(Error::Scenario("sim.safety_tol: must be nonnegative".into()));
        }
        if !(config.solver.tol.is_finite() && config.solver.tol > 0.0) || config.solver.max_iter == 0 {
            return Err(Error::Scenario(
                "solver: tol must be positive and max_iter at least 1".into(),
            ));
        }

        validate_desired(&config.desired, agents, m)?;

        for (ri, region) in config.regions.iter().enumerate() {
            if let Some((count, _)) = agents {
                if region.per_agent.len() != count {
                    return Err(Error::Scenario(format!(
                        "regions[{ri}].per_agent: expected {count} trees, got {}",
                        region.per_agent.len()
                    )));
                }
            }
            for (j, tree) in region.per_agent.iter().enumerate() {
                let report = logic::validate(tree, config.primitives.len());
                if let Some(v) = report.violations.first() {
                    return Err(Error::Scenario(format!("regions[{ri}].per_agent[{j}]: {v}")));
                }
            }
        }

        Ok(Self {
            config,
            system,
            barrier,
        })
    }

    pub fn config(&self) -> &ScenarioConfig {
        &self.config
    }

    pub fn system(&self) -> &dyn ControlAffineSystem {
        self.system.as_ref()
    }

    pub fn barrier(&self) -> &CombinatorialBarrier {
        &self.barrier
    }

    pub fn rows_per_step(&self) -> usize {
        self.barrier.primitive_count()
    }

    /// Desired input at `(x, t)`.
    pub fn desired(&self, x: &[f64], t: f64) -> Vec<f64> {
        let m = self.system.input_dim();
        match &self.config.desired {
            DesiredSpec::ZeroHold => vec![0.0; m],
            DesiredSpec::Constant(u) => u.clone(),
            DesiredSpec::PerAgent(list) => {
                let dim = m / list.len();
                let mut u = vec![0.0; m];
                for (j, d) in list.iter().enumerate() {
                    let out = &mut u[j * dim..(j + 1) * dim];
                    match d {
                        AgentDesired::Sinusoidal {
                            kappa,
                            amplitude,
                            omega,
                            offset,
                        } => {
                            let xd = offset + amplitude * (omega * t).sin();
                            let xd_dot = amplitude * omega * (omega * t).cos();
                            out[0] = kappa * (xd - x[j * dim]) + xd_dot;
                        }
                        AgentDesired::Constant(v) => out.copy_from_slice(v),
                        AgentDesired::ZeroHold => {}
                    }
                }
                u
            }
        }
    }
}

fn validate_desired(d: &DesiredSpec, agents: Option<(usize, usize)>, m: usize) -> Result<()> {
    match d {
        DesiredSpec::ZeroHold => Ok(()),
        DesiredSpec::Constant(u) => {
            if u.len() != m {
                return Err(Error::Scenario(format!(
                    "desired.constant: expected {m} entries, got {}",
                    u.len()
                )));
            }
            if u.iter().any(|v| !v.is_finite()) {
                return Err(Error::Scenario("desired.constant: non-finite entry".into()));
            }
            Ok(())
        }
        DesiredSpec::PerAgent(list) => {
            let Some((count, dim)) = agents else {
                return Err(Error::Scenario(
                    "desired.per_agent: only valid for single_integrator systems".into(),
                ));
            };
            if list.len() != count {
                return Err(Error::Scenario(format!(
                    "desired.per_agent: expected {count} controllers, got {}",
                    list.len()
                )));
            }
            for (j, a) in list.iter().enumerate() {
                match a {
                    AgentDesired::Sinusoidal {
                        kappa,
                        amplitude,
                        omega,
                        offset,
                    } => {
                        let ok = [*kappa, *amplitude, *omega].iter().all(|v| v.is_finite() && *v > 0.0)
                            && offset.is_finite();
                        if !ok {
                            return Err(Error::Scenario(format!(
                                "desired.per_agent[{j}].sinusoidal: kappa, amplitude and omega must be positive"
                            )));
                        }
                    }
                    AgentDesired::Constant(v) => {
                        if v.len() != dim || v.iter().any(|x| !x.is_finite()) {
                            return Err(Error::Scenario(format!(
                                "desired.per_agent[{j}].constant: expected {dim} finite entries"
                            )));
                        }
                    }
                    AgentDesired::ZeroHold => {}
                }
            }
            Ok(())
        }
    }
}
