//! Closed-loop simulation under the safety filter, scenario files,
//! trajectory logging and post-hoc auditing.

mod audit;
mod batch;
pub mod demos;
mod runner;
mod scenario;
mod trajectory;

pub use audit::{audit, region_counts, AuditFinding, AuditOptions, AuditReport, AuditViolation, BoundOrders};
pub use batch::run_batch;
pub use runner::{integrate, run, RegionMin, RunOutcome, RunOutput, RunSummary};
pub use scenario::{
    AgentDesired, DesiredSpec, InfeasiblePolicy, Integrator, OutputOptions, PrimitiveSpec, RegionSpec,
    Scenario, ScenarioConfig, SimSettings, SolverSettings, SystemSpec, TrajectoryFormat, SCENARIO_VERSION,
};
pub use trajectory::{
    read_trajectory, write_csv, write_jsonl, StepRecord, StepStatus, Trajectory, TrajectoryHeader,
    FORMAT_NAME, FORMAT_VERSION,
};
