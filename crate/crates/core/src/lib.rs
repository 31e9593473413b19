//! Combinatorial control barrier functions.
//!
//! A p-choose-r safety specification ("at least r of these p constraints
//! hold", nested arbitrarily) is encoded by a single pivot value, the r-th
//! largest primitive barrier value, and enforced with exactly one linear
//! row per primitive in a quadratic-program safety filter.

pub mod constraints;
pub mod error;
pub mod logic;
pub mod mcbf;
pub mod primitives;
pub mod qp;
pub mod sim;

pub use constraints::{build_rows, CombinatorialBarrier, CompiledRows, ConstraintRow};
pub use error::{Error, Result};
pub use logic::{evaluate_pivot, membership_oracle, naive_combination_count, LogicTree};
pub use primitives::{ClassKappa, ControlAffineSystem, PrimitiveBarrier, Shape, SingleIntegrator};
pub use qp::{solve, solve_warm, QpProblem, QpSolution, QpStatus, SolverOptions};
