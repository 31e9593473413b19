//! Post-hoc safety audit of a trajectory. Primitive values are recomputed
//! from the logged states; logged values are ignored.

use serde::{Deserialize, Serialize};

use crate::constraints::CombinatorialBarrier;
use crate::error::{Error, Result};
use crate::logic::LogicTree;

use super::trajectory::StepRecord;

/// Which order statistics `max^j` of a flat tree the discrete decay bound
/// is checked for.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BoundOrders {
    /// `j = 1..=r`.
    #[default]
    UpToPivot,
    /// `j = r..=p`.
    FromPivot,
    /// `j = 1..=p`.
    All,
    Explicit(Vec<usize>),
}

impl BoundOrders {
    fn resolve(&self, r: usize, p: usize) -> Result<Vec<usize>> {
        let v: Vec<usize> = match self {
            BoundOrders::UpToPivot => (1..=r).collect(),
            BoundOrders::FromPivot => (r..=p).collect(),
            BoundOrders::All => (1..=p).collect(),
            BoundOrders::Explicit(js) => js.clone(),
        };
        if let Some(&j) = v.iter().find(|&&j| j == 0 || j > p) {
            return Err(Error::InvalidParameter(format!(
                "order statistic {j} out of range 1..={p}"
            )));
        }
        Ok(v)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AuditOptions {
    /// Values `>= -tol` count as satisfied.
    pub tol: f64,
    /// The decay bound is relaxed by `bound_slack_c * dt^2`.
    pub bound_slack_c: f64,
    pub bound_orders: BoundOrders,
}

impl Default for AuditOptions {
    fn default() -> Self {
        Self {
            tol: 1e-4,
            bound_slack_c: 10.0,
            bound_orders: BoundOrders::UpToPivot,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum AuditFinding {
    /// Pivot below `-tol`.
    Pivot { pivot: f64 },
    /// Tree not satisfied with tolerance.
    Membership,
    /// `max^j` at this step fell below `required`, derived from the previous
    /// step.
    Bound { order: usize, value: f64, required: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AuditViolation {
    pub step: usize,
    pub t: f64,
    #[serde(flatten)]
    pub finding: AuditFinding,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AuditReport {
    pub steps: usize,
    pub min_pivot: f64,
    /// Order statistics checked against the decay bound; empty for nested
    /// trees.
    pub bound_orders: Vec<usize>,
    pub violations: Vec<AuditViolation>,
}

impl AuditReport {
    pub fn is_clean(&self) -> bool {
        self.violations.is_empty()
    }

    pub fn count(&self, pred: impl Fn(&AuditFinding) -> bool) -> usize {
        self.violations.iter().filter(|v| pred(&v.finding)).count()
    }

    /// Bound violations of order `j`.
    pub fn bound_violations(&self, j: usize) -> usize {
        self.count(|f| matches!(f, AuditFinding::Bound { order, .. } if *order == j))
    }
}

/// Checks every step for (i) pivot `>= -tol`, (ii) recursive satisfaction
/// with tolerance and, for flat trees, (iii) the discrete decay bound
/// `max^j(i+1) >= max^j(i) - dt alpha(max^j(i)) - C dt^2`.
pub fn audit(
    records: &[StepRecord],
    barrier: &CombinatorialBarrier,
    opts: &AuditOptions,
) -> Result<AuditReport> {
    if records.is_empty() {
        return Err(Error::Precondition("empty trajectory".into()));
    }
    let tree = barrier.tree();
    let orders = match tree {
        LogicTree::Choose { r, children } if tree.is_flat() => {
            opts.bound_orders.resolve(*r, children.len())?
        }
        _ => Vec::new(),
    };
    let alpha = barrier.alpha();

    let mut violations = Vec::new();
    let mut min_pivot = f64::INFINITY;
    let mut prev: Option<(f64, Vec<f64>)> = None;

    for rec in records {
        let values = barrier.primitive_values(&rec.x)?;
        let pivot = tree.pivot_unchecked(&values);
        min_pivot = min_pivot.min(pivot);
        let mut push = |finding| {
            violations.push(AuditViolation {
                step: rec.step,
                t: rec.t,
                finding,
            })
        };
        if pivot < -opts.tol {
            push(AuditFinding::Pivot { pivot });
        }
        if !tree.satisfied_unchecked(&values, opts.tol) {
            push(AuditFinding::Membership);
        }

        if !orders.is_empty() {
            let leaves = tree.leaf_indices();
            let mut sorted: Vec<f64> = leaves.iter().map(|&k| values[k]).collect();
            sorted.sort_unstable_by(|a, b| b.total_cmp(a));
            if let Some((t_prev, before)) = &prev {
                let dt = rec.t - t_prev;
                let slack = opts.bound_slack_c * dt * dt;
                for &j in &orders {
                    let m = before[j - 1];
                    let required = m - dt * alpha.eval(m) - slack;
                    if sorted[j - 1] < required {
                        push(AuditFinding::Bound {
                            order: j,
                            value: sorted[j - 1],
                            required,
                        });
                    }
                }
            }
            prev = Some((rec.t, sorted));
        }
    }

    Ok(AuditReport {
        steps: records.len(),
        min_pivot,
        bound_orders: orders,
        violations,
    })
}

/// Per step and region, the number of agents whose region tree holds with
/// tolerance `tol`. Values are recomputed from the states.
pub fn region_counts(
    records: &[StepRecord],
    regions: &[super::scenario::RegionSpec],
    barrier: &CombinatorialBarrier,
    tol: f64,
) -> Result<Vec<Vec<usize>>> {
    for (i, r) in regions.iter().enumerate() {
        for t in &r.per_agent {
            if let Some(v) = crate::logic::validate(t, barrier.primitive_count()).violations.first() {
                return Err(Error::Scenario(format!("regions[{i}]: {v}")));
            }
        }
    }
    records
        .iter()
        .map(|rec| {
            let values = barrier.primitive_values(&rec.x)?;
            Ok(regions
                .iter()
                .map(|r| {
                    r.per_agent
                        .iter()
                        .filter(|t| t.satisfied_unchecked(&values, tol))
                        .count()
                })
                .collect())
        })
        .collect()
}
