use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::logic;
use crate::primitives::ControlAffineSystem;
use crate::qp::{self, QpProblem, QpStatus};

use super::scenario::{InfeasiblePolicy, Integrator, Scenario};
use super::trajectory::{StepRecord, StepStatus, Trajectory, TrajectoryHeader, FORMAT_NAME, FORMAT_VERSION};

/// One integration step of `xdot = f(x) + g(x) u` with `u` held constant.
/// The usual order-1 (Euler) and order-4 (RK4) accuracy assumes `f` and `g`
/// are Lipschitz; nothing checks that.
pub fn integrate(
    system: &dyn ControlAffineSystem,
    x: &[f64],
    u: &[f64],
    dt: f64,
    integrator: Integrator,
) -> Vec<f64> {
    match integrator {
        Integrator::Euler => {
            let k = system.vector_field(x, u);
            x.iter().zip(&k).map(|(xi, ki)| xi + dt * ki).collect()
        }
        Integrator::Rk4 => {
            let shift = |k: &[f64], s: f64| -> Vec<f64> {
                x.iter().zip(k).map(|(xi, ki)| xi + s * ki).collect()
            };
            let k1 = system.vector_field(x, u);
            let k2 = system.vector_field(&shift(&k1, 0.5 * dt), u);
            let k3 = system.vector_field(&shift(&k2, 0.5 * dt), u);
            let k4 = system.vector_field(&shift(&k3, dt), u);
            (0..x.len())
                .map(|i| x[i] + dt / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]))
                .collect()
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegionMin {
    pub name: String,
    pub min_count: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RunOutcome {
    Clean,
    SafetyViolation,
    InfeasibleHalt,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub scenario: String,
    /// Integration steps taken.
    pub steps: usize,
    pub rows_per_step: usize,
    pub min_pivot: f64,
    pub min_pivot_t: f64,
    /// Steps whose pivot fell below `-safety_tol`.
    pub violation_steps: usize,
    /// Steps where the QP did not return an optimum.
    pub infeasible_steps: usize,
    pub halted_at: Option<f64>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub region_min_counts: Vec<RegionMin>,
    /// Largest number of agents outside every region.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_outside_all: Option<usize>,
    pub qp_iterations: usize,
    pub wall_clock_s: f64,
}

impl RunSummary {
    pub fn outcome(&self) -> RunOutcome {
        if self.halted_at.is_some() {
            RunOutcome::InfeasibleHalt
        } else if self.violation_steps > 0 {
            RunOutcome::SafetyViolation
        } else {
            RunOutcome::Clean
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunOutput {
    pub trajectory: Trajectory,
    pub summary: RunSummary,
}

/// Closed-loop simulation: at each step evaluate `kd`, build the rows, solve
/// the QP (warm-started from the previous active set), record, and integrate
/// with zero-order hold. Records cover steps `0..=N`; the last record's
/// control is computed but not applied.
pub fn run(scn: &Scenario) -> Result<RunOutput> {
    let started = Instant::now();
    let cfg = scn.config();
    let system = scn.system();
    let barrier = scn.barrier();
    let tree = barrier.tree();
    let sim = cfg.sim;
    let steps = sim.steps();
    let opts = cfg.solver.options();
    let tol = sim.safety_tol;

    let header = TrajectoryHeader {
        format: FORMAT_NAME.into(),
        version: FORMAT_VERSION,
        scenario: cfg.name.clone(),
        state_dim: system.state_dim(),
        input_dim: system.input_dim(),
        primitives: barrier.primitive_count(),
        rows_per_step: scn.rows_per_step(),
        dt: sim.dt,
        regions: cfg.regions.iter().map(|r| r.name.clone()).collect(),
    };

    let mut summary = RunSummary {
        scenario: cfg.name.clone(),
        steps: 0,
        rows_per_step: scn.rows_per_step(),
        min_pivot: f64::INFINITY,
        min_pivot_t: 0.0,
        violation_steps: 0,
        infeasible_steps: 0,
        halted_at: None,
        region_min_counts: cfg
            .regions
            .iter()
            .map(|r| RegionMin {
                name: r.name.clone(),
                min_count: usize::MAX,
            })
            .collect(),
        max_outside_all: (!cfg.regions.is_empty()).then_some(0),
        qp_iterations: 0,
        wall_clock_s: 0.0,
    };

    let mut records = Vec::with_capacity(steps + 1);
    let mut x = cfg.initial_state.clone();
    let mut seed: Vec<usize> = Vec::new();

    for i in 0..=steps {
        let t = i as f64 * sim.dt;
        let kd = scn.desired(&x, t);
        let compiled = barrier.compile(system, &x)?;
        let problem = QpProblem::new(kd, compiled.rows);
        let sol = if cfg.solver.warm_start {
            qp::solve_warm(&problem, opts, &seed)?
        } else {
            qp::solve(&problem, opts)?
        };
        summary.qp_iterations += sol.iterations;
        let status = StepStatus::from_qp(&sol.status);
        let optimal = matches!(sol.status, QpStatus::Optimal);

        let (u, active, min_slack) = if optimal {
            seed = sol.active_set.clone();
            let ms = sol.min_slack.is_finite().then_some(sol.min_slack);
            (sol.u, sol.active_set.len(), ms)
        } else {
            summary.infeasible_steps += 1;
            seed.clear();
            let kd = problem.kd;
            let ms = problem
                .rows
                .iter()
                .map(|r| r.slack_at(&kd))
                .reduce(f64::min);
            (kd, 0, ms)
        };

        let values = compiled.primitive_values;
        let pivot = compiled.pivot;
        if pivot < summary.min_pivot {
            summary.min_pivot = pivot;
            summary.min_pivot_t = t;
        }
        if pivot < -tol {
            summary.violation_steps += 1;
        }

        let mut inside_any = vec![false; cfg.regions.first().map_or(0, |r| r.per_agent.len())];
        let region_counts: Vec<usize> = cfg
            .regions
            .iter()
            .zip(summary.region_min_counts.iter_mut())
            .map(|(region, min)| {
                let mut n = 0;
                for (j, t) in region.per_agent.iter().enumerate() {
                    if t.satisfied_unchecked(&values, tol) {
                        n += 1;
                        if let Some(flag) = inside_any.get_mut(j) {
                            *flag = true;
                        }
                    }
                }
                min.min_count = min.min_count.min(n);
                n
            })
            .collect();
        if let Some(worst) = summary.max_outside_all.as_mut() {
            *worst = (*worst).max(inside_any.iter().filter(|f| !**f).count());
        }

        let levels = if cfg.output.levels {
            logic::level_values_unchecked(tree, &values).into_values().collect()
        } else {
            Vec::new()
        };

        records.push(StepRecord {
            step: i,
            t,
            x: x.clone(),
            u: u.clone(),
            status,
            pivot,
            primitives: values,
            levels,
            active,
            min_slack,
            region_counts,
        });

        if !optimal && cfg.on_infeasible == InfeasiblePolicy::Halt {
            summary.halted_at = Some(t);
            break;
        }
        if i < steps {
            x = integrate(system, &x, &u, sim.dt, sim.integrator);
            summary.steps += 1;
        }
    }

    summary.wall_clock_s = started.elapsed().as_secs_f64();
    Ok(RunOutput {
        trajectory: Trajectory { header, records },
        summary,
    })
}
