//! Nested p-choose-r specifications over primitive constraint indices.
//!
//! A [`LogicTree`] is either a leaf naming one primitive, or a `Choose` node
//! requiring at least `r` of its children to hold. The value of a node is the
//! `r`-th largest of its children's values, so the root value (the *pivot*) is
//! nonnegative exactly when the whole specification is satisfied.
//!
//! Canonical JSON form:
//!
//! ```text
//! {"leaf": 3}
//! {"choose": 2, "of": [{"leaf": 0}, {"leaf": 1}, {"leaf": 2}]}
//! ```

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Above this length `kth_largest` switches from a full sort to selection.
const SORT_CUTOFF: usize = 32;

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "RawTree", into = "RawTree")]
pub enum LogicTree {
    Leaf(usize),
    Choose { r: usize, children: Vec<LogicTree> },
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawTree {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    leaf: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    choose: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    of: Option<Vec<LogicTree>>,
}

impl TryFrom<RawTree> for LogicTree {
    type Error = String;

    fn try_from(raw: RawTree) -> std::result::Result<Self, String> {
        match raw {
            RawTree {
                leaf: Some(k),
                choose: None,
                of: None,
            } => Ok(LogicTree::Leaf(k)),
            RawTree {
                leaf: None,
                choose: Some(r),
                of: Some(children),
            } => Ok(LogicTree::Choose { r, children }),
            RawTree { leaf: Some(_), .. } => {
                Err("a leaf node takes only the \"leaf\" key".to_string())
            }
            _ => Err(
                "expected {\"leaf\": k} or {\"choose\": r, \"of\": [...]}".to_string(),
            ),
        }
    }
}

impl From<LogicTree> for RawTree {
    fn from(tree: LogicTree) -> Self {
        match tree {
            LogicTree::Leaf(k) => RawTree {
                leaf: Some(k),
                choose: None,
                of: None,
            },
            LogicTree::Choose { r, children } => RawTree {
                leaf: None,
                choose: Some(r),
                of: Some(children),
            },
        }
    }
}

impl LogicTree {
    pub fn leaf(index: usize) -> Self {
        LogicTree::Leaf(index)
    }

    pub fn choose(r: usize, children: Vec<LogicTree>) -> Self {
        LogicTree::Choose { r, children }
    }

    /// p-choose-p: every child must hold.
    pub fn all(children: Vec<LogicTree>) -> Self {
        let r = children.len();
        LogicTree::Choose { r, children }
    }

    /// p-choose-1: at least one child must hold.
    pub fn any(children: Vec<LogicTree>) -> Self {
        LogicTree::Choose { r: 1, children }
    }

    /// Flat `choose(r)` over a run of consecutive leaves.
    pub fn choose_leaves(r: usize, indices: impl IntoIterator<Item = usize>) -> Self {
        LogicTree::Choose {
            r,
            children: indices.into_iter().map(LogicTree::Leaf).collect(),
        }
    }

    /// Number of levels: 1 for a bare leaf.
    pub fn depth(&self) -> usize {
        match self {
            LogicTree::Leaf(_) => 1,
            LogicTree::Choose { children, .. } => {
                1 + children.iter().map(|c| c.depth()).max().unwrap_or(0)
            }
        }
    }

    /// Height of the node: 0 for leaves, one more than the tallest child otherwise.
    pub fn height(&self) -> usize {
        self.depth() - 1
    }

    /// Leaf indices in left-to-right order, with repetition.
    pub fn leaf_indices(&self) -> Vec<usize> {
        let mut out = Vec::new();
        self.collect_leaves(&mut out);
        out
    }

    fn collect_leaves(&self, out: &mut Vec<usize>) {
        match self {
            LogicTree::Leaf(k) => out.push(*k),
            LogicTree::Choose { children, .. } => {
                for c in children {
                    c.collect_leaves(out);
                }
            }
        }
    }

    pub fn node_count(&self) -> usize {
        match self {
            LogicTree::Leaf(_) => 1,
            LogicTree::Choose { children, .. } => {
                1 + children.iter().map(|c| c.node_count()).sum::<usize>()
            }
        }
    }

    /// True when the tree is a single `Choose` node whose children are all leaves.
    pub fn is_flat(&self) -> bool {
        match self {
            LogicTree::Leaf(_) => false,
            LogicTree::Choose { children, .. } => {
                children.iter().all(|c| matches!(c, LogicTree::Leaf(_)))
            }
        }
    }

    /// Subtree at `path`, if it exists.
    pub fn node(&self, path: &NodePath) -> Option<&LogicTree> {
        let mut cur = self;
        for &i in &path.0 {
            match cur {
                LogicTree::Choose { children, .. } => cur = children.get(i)?,
                LogicTree::Leaf(_) => return None,
            }
        }
        Some(cur)
    }

    /// Pivot value without validation or per-node bookkeeping. The tree must
    /// already have been validated against `values.len()`.
    pub(crate) fn pivot_unchecked(&self, values: &[f64]) -> f64 {
        match self {
            LogicTree::Leaf(k) => values[*k],
            LogicTree::Choose { r, children } => {
                let mut buf: Vec<f64> =
                    children.iter().map(|c| c.pivot_unchecked(values)).collect();
                select_kth_largest(&mut buf, *r)
            }
        }
    }

    pub(crate) fn satisfied_unchecked(&self, values: &[f64], tol: f64) -> bool {
        match self {
            LogicTree::Leaf(k) => values[*k] >= -tol,
            LogicTree::Choose { r, children } => {
                children
                    .iter()
                    .filter(|c| c.satisfied_unchecked(values, tol))
                    .count()
                    >= *r
            }
        }
    }
}

/// Location of a node: child indices from the root.
#[derive(Debug, Clone, Default, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct NodePath(pub Vec<usize>);

impl NodePath {
    pub fn root() -> Self {
        NodePath(Vec::new())
    }

    pub fn child(&self, i: usize) -> Self {
        let mut v = self.0.clone();
        v.push(i);
        NodePath(v)
    }
}

impl fmt::Display for NodePath {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "$")?;
        for i in &self.0 {
            write!(f, ".of[{i}]")?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ViolationKind {
    EmptyChildren,
    ZeroR,
    RExceedsChildren { r: usize, children: usize },
    LeafOutOfRange { index: usize, primitive_count: usize },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Violation {
    pub path: NodePath,
    pub kind: ViolationKind,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.kind {
            ViolationKind::EmptyChildren => write!(f, "node {}: empty children", self.path),
            ViolationKind::ZeroR => write!(f, "node {}: r must be at least 1", self.path),
            ViolationKind::RExceedsChildren { r, children } => write!(
                f,
                "node {}: r exceeds child count ({r} > {children})",
                self.path
            ),
            ViolationKind::LeafOutOfRange {
                index,
                primitive_count,
            } => write!(
                f,
                "node {}: leaf index out of range ({index} >= {primitive_count})",
                self.path
            ),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn is_valid(&self) -> bool {
        self.violations.is_empty()
    }

    pub fn into_result(self) -> Result<()> {
        if self.violations.is_empty() {
            Ok(())
        } else {
            Err(Error::InvalidTree(self.violations))
        }
    }
}

/// Check structural invariants against a primitive count `p`.
pub fn validate(tree: &LogicTree, primitive_count: usize) -> ValidationReport {
    let mut violations = Vec::new();
    validate_node(tree, primitive_count, NodePath::root(), &mut violations);
    ValidationReport { violations }
}

fn validate_node(tree: &LogicTree, p: usize, path: NodePath, out: &mut Vec<Violation>) {
    match tree {
        LogicTree::Leaf(index) => {
            if *index >= p {
                out.push(Violation {
                    path,
                    kind: ViolationKind::LeafOutOfRange {
                        index: *index,
                        primitive_count: p,
                    },
                });
            }
        }
        LogicTree::Choose { r, children } => {
            if children.is_empty() {
                out.push(Violation {
                    path: path.clone(),
                    kind: ViolationKind::EmptyChildren,
                });
            }
            if *r == 0 {
                out.push(Violation {
                    path: path.clone(),
                    kind: ViolationKind::ZeroR,
                });
            } else if !children.is_empty() && *r > children.len() {
                out.push(Violation {
                    path: path.clone(),
                    kind: ViolationKind::RExceedsChildren {
                        r: *r,
                        children: children.len(),
                    },
                });
            }
            for (i, c) in children.iter().enumerate() {
                validate_node(c, p, path.child(i), out);
            }
        }
    }
}

/// The `r`-th largest value (1-based, with multiplicity). Equal to the
/// `(len - r + 1)`-th smallest.
pub fn kth_largest(values: &[f64], r: usize) -> Result<f64> {
    if r == 0 || r > values.len() {
        return Err(Error::Precondition(format!(
            "kth_largest needs 1 <= r <= {}, got r = {r}",
            values.len()
        )));
    }
    let mut buf = values.to_vec();
    Ok(select_kth_largest(&mut buf, r))
}

/// The `k`-th smallest value (1-based).
pub fn kth_smallest(values: &[f64], k: usize) -> Result<f64> {
    if k == 0 || k > values.len() {
        return Err(Error::Precondition(format!(
            "kth_smallest needs 1 <= k <= {}, got k = {k}",
            values.len()
        )));
    }
    let mut buf = values.to_vec();
    if buf.len() <= SORT_CUTOFF {
        buf.sort_unstable_by(f64::total_cmp);
        Ok(buf[k - 1])
    } else {
        Ok(*buf.select_nth_unstable_by(k - 1, f64::total_cmp).1)
    }
}

fn select_kth_largest(buf: &mut [f64], r: usize) -> f64 {
    if buf.len() <= SORT_CUTOFF {
        buf.sort_unstable_by(|a, b| b.total_cmp(a));
        buf[r - 1]
    } else {
        *buf.select_nth_unstable_by(r - 1, |a, b| b.total_cmp(a)).1
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PivotResult {
    pub pivot: f64,
    pub per_node_values: BTreeMap<NodePath, f64>,
}

/// Bottom-up evaluation: leaves take their primitive value, `Choose` nodes
/// take the `r`-th largest child value.
pub fn evaluate_pivot(tree: &LogicTree, primitive_values: &[f64]) -> Result<PivotResult> {
    validate(tree, primitive_values.len()).into_result()?;
    let mut per_node_values = BTreeMap::new();
    let pivot = eval_recording(tree, primitive_values, NodePath::root(), &mut per_node_values);
    Ok(PivotResult {
        pivot,
        per_node_values,
    })
}

fn eval_recording(
    tree: &LogicTree,
    values: &[f64],
    path: NodePath,
    out: &mut BTreeMap<NodePath, f64>,
) -> f64 {
    let v = match tree {
        LogicTree::Leaf(k) => values[*k],
        LogicTree::Choose { r, children } => {
            let mut buf: Vec<f64> = children
                .iter()
                .enumerate()
                .map(|(i, c)| eval_recording(c, values, path.child(i), out))
                .collect();
            select_kth_largest(&mut buf, *r)
        }
    };
    out.insert(path, v);
    v
}

/// Brute-force satisfaction semantics: a leaf holds when its value is
/// nonnegative, a `Choose` node when at least `r` children hold. Shares no
/// code with the pivot evaluation.
pub fn membership_oracle(tree: &LogicTree, primitive_values: &[f64]) -> Result<bool> {
    membership_with_tolerance(tree, primitive_values, 0.0)
}

/// As [`membership_oracle`], counting leaves with value `>= -tol` as satisfied.
pub fn membership_with_tolerance(
    tree: &LogicTree,
    primitive_values: &[f64],
    tol: f64,
) -> Result<bool> {
    validate(tree, primitive_values.len()).into_result()?;
    Ok(tree.satisfied_unchecked(primitive_values, tol))
}

/// Size of the Boolean AND/OR encoding the pivot construction avoids.
///
/// A `Choose{r}` node over `n` children contributes `sum_{k=r}^{n} C(n, k)`
/// clause combinations, multiplied by the count of its most complex child.
/// Structurally repeated children (one copy per agent, say) therefore count
/// once, which reproduces `1816 * 3 = 5448` for the two-region patrolling
/// specification. Saturates at `u128::MAX`.
pub fn naive_combination_count(tree: &LogicTree) -> u128 {
    match tree {
        LogicTree::Leaf(_) => 1,
        LogicTree::Choose { r, children } => {
            let n = children.len() as u64;
            let here = (*r as u64..=n)
                .map(|k| binomial(n, k))
                .fold(0u128, |acc, c| acc.saturating_add(c));
            let inner = children
                .iter()
                .map(naive_combination_count)
                .max()
                .unwrap_or(1);
            here.saturating_mul(inner)
        }
    }
}

fn binomial(n: u64, k: u64) -> u128 {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    let mut acc: u128 = 1;
    for i in 0..k {
        // exact at every step: acc * (n - i) is divisible by (i + 1)
        acc = match acc.checked_mul((n - i) as u128) {
            Some(v) => v / (i as u128 + 1),
            None => return u128::MAX,
        };
    }
    acc
}

/// Node values grouped by height (0 = leaves, root at the top), each group
/// sorted in descending order. For a flat tree, level 0 lists every order
/// statistic `max^j` for `j = 1..=p`.
pub fn level_values(
    tree: &LogicTree,
    primitive_values: &[f64],
) -> Result<BTreeMap<usize, Vec<f64>>> {
    validate(tree, primitive_values.len()).into_result()?;
    Ok(level_values_unchecked(tree, primitive_values))
}

pub(crate) fn level_values_unchecked(
    tree: &LogicTree,
    values: &[f64],
) -> BTreeMap<usize, Vec<f64>> {
    let mut out: BTreeMap<usize, Vec<f64>> = BTreeMap::new();
    collect_levels(tree, values, &mut out);
    for group in out.values_mut() {
        group.sort_unstable_by(|a, b| b.total_cmp(a));
    }
    out
}

/// Returns (height, value) of the node.
fn collect_levels(
    tree: &LogicTree,
    values: &[f64],
    out: &mut BTreeMap<usize, Vec<f64>>,
) -> (usize, f64) {
    let (height, v) = match tree {
        LogicTree::Leaf(k) => (0, values[*k]),
        LogicTree::Choose { r, children } => {
            let mut h = 0;
            let mut buf = Vec::with_capacity(children.len());
            for c in children {
                let (ch, cv) = collect_levels(c, values, out);
                h = h.max(ch + 1);
                buf.push(cv);
            }
            (h, select_kth_largest(&mut buf, *r))
        }
    };
    out.entry(height).or_default().push(v);
    (height, v)
}
