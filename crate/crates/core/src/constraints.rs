//! Compilation of a logic tree and its primitives into linear rows on `u`.
//!
//! Every primitive `h_k` contributes exactly one row
//!
//! ```text
//! Lg h_k(x) . u  >=  -alpha(h(x) + |h_k(x) - h(x)|) - Lf h_k(x)
//! ```
//!
//! where `h` is the pivot of the whole tree. Nesting only changes how `h` is
//! computed; the row count is always the number of primitives.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::logic::{self, LogicTree};
use crate::mcbf::BarrierBlock;
use crate::primitives::{dot, ClassKappa, ControlAffineSystem, PrimitiveBarrier};

/// `a . u >= b`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConstraintRow {
    pub a: Vec<f64>,
    pub b: f64,
    pub source_index: usize,
}

impl ConstraintRow {
    pub fn slack_at(&self, u: &[f64]) -> f64 {
        dot(&self.a, u) - self.b
    }
}

/// Rows for one state, together with the quantities they were built from.
#[derive(Debug, Clone, PartialEq)]
pub struct CompiledRows {
    pub rows: Vec<ConstraintRow>,
    pub primitive_values: Vec<f64>,
    pub pivot: f64,
}

/// A validated specification ready to produce rows at any state.
#[derive(Debug, Clone)]
pub struct CombinatorialBarrier {
    tree: LogicTree,
    barriers: Vec<PrimitiveBarrier>,
    alpha: ClassKappa,
    margin: f64,
}

impl CombinatorialBarrier {
    pub fn new(tree: LogicTree, barriers: Vec<PrimitiveBarrier>, alpha: ClassKappa) -> Result<Self> {
        logic::validate(&tree, barriers.len()).into_result()?;
        alpha.validate()?;
        Ok(Self {
            tree,
            barriers,
            alpha,
            margin: 0.0,
        })
    }

    /// Tightens every row by `margin >= 0` (added to `b`).
    pub fn with_margin(mut self, margin: f64) -> Result<Self> {
        if !(margin.is_finite() && margin >= 0.0) {
            return Err(Error::InvalidParameter(format!(
                "margin must be finite and nonnegative, got {margin}"
            )));
        }
        self.margin = margin;
        Ok(self)
    }

    pub fn tree(&self) -> &LogicTree {
        &self.tree
    }

    pub fn barriers(&self) -> &[PrimitiveBarrier] {
        &self.barriers
    }

    pub fn alpha(&self) -> ClassKappa {
        self.alpha
    }

    pub fn margin(&self) -> f64 {
        self.margin
    }

    pub fn primitive_count(&self) -> usize {
        self.barriers.len()
    }

    pub fn check_system(&self, system: &dyn ControlAffineSystem) -> Result<()> {
        let n = system.state_dim();
        for b in &self.barriers {
            b.check_state_dim(n)?;
        }
        Ok(())
    }

    /// All `h_k(x)`, rejecting non-finite values.
    pub fn primitive_values(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.barriers
            .iter()
            .enumerate()
            .map(|(index, b)| {
                let value = b.value(x);
                if value.is_finite() {
                    Ok(value)
                } else {
                    Err(Error::NonFinitePrimitive {
                        index,
                        label: b.label().to_string(),
                        value,
                    })
                }
            })
            .collect()
    }

    pub fn pivot(&self, x: &[f64]) -> Result<f64> {
        Ok(self.tree.pivot_unchecked(&self.primitive_values(x)?))
    }

    pub fn compile(&self, system: &dyn ControlAffineSystem, x: &[f64]) -> Result<CompiledRows> {
        check_state(system, x)?;
        self.check_system(system)?;
        let values = self.primitive_values(x)?;
        let pivot = self.tree.pivot_unchecked(&values);
        let rows = self
            .barriers
            .iter()
            .zip(&values)
            .enumerate()
            .map(|(k, (barrier, &hk))| {
                let grad = barrier.gradient(x);
                let (lfh, lgh) = system.lie_derivatives_of(&grad, x);
                ConstraintRow {
                    a: lgh,
                    b: -self.alpha.eval(pivot + (hk - pivot).abs()) - lfh + self.margin,
                    source_index: k,
                }
            })
            .collect();
        Ok(CompiledRows {
            rows,
            primitive_values: values,
            pivot,
        })
    }
}

fn check_state(system: &dyn ControlAffineSystem, x: &[f64]) -> Result<()> {
    if x.len() != system.state_dim() {
        return Err(Error::Dimension {
            context: "state".into(),
            expected: system.state_dim(),
            actual: x.len(),
        });
    }
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("state".into()));
    }
    Ok(())
}

/// One row per primitive, in primitive-index order.
pub fn build_rows(
    tree: &LogicTree,
    barriers: &[PrimitiveBarrier],
    system: &dyn ControlAffineSystem,
    alpha: ClassKappa,
    x: &[f64],
) -> Result<Vec<ConstraintRow>> {
    let cb = CombinatorialBarrier::new(tree.clone(), barriers.to_vec(), alpha)?;
    Ok(cb.compile(system, x)?.rows)
}

/// Rows for diagonal matrix barriers whose eigenvalues feed a logic tree.
///
/// The tree's leaves index eigenvalue slots: block by block, each block's
/// eigenvalues in ascending order. Each diagonal entry gets the row
/// `hdot_{k,j} >= -alpha(h + |h - lambda_{k,j}|)`, the scalar form of
/// `H'_k = V_k (h I + diag|h - lambda_{k,j}|) V_k^T`. Rows follow entry order.
pub fn build_rows_mcbf_diag(
    tree: &LogicTree,
    blocks: &[BarrierBlock],
    system: &dyn ControlAffineSystem,
    alpha: ClassKappa,
    x: &[f64],
) -> Result<Vec<ConstraintRow>> {
    check_state(system, x)?;
    alpha.validate()?;
    let mut entries: Vec<&PrimitiveBarrier> = Vec::new();
    for (i, block) in blocks.iter().enumerate() {
        match block {
            BarrierBlock::Diagonal(diag) => entries.extend(diag.iter()),
            BarrierBlock::General(_) => {
                return Err(Error::Unsupported(format!(
                    "block {i} is not diagonal; only diagonal matrix barriers can be enforced as rows"
                )))
            }
        }
    }
    logic::validate(tree, entries.len()).into_result()?;

    let mut values = Vec::with_capacity(entries.len());
    let mut slots = Vec::with_capacity(entries.len());
    for block in blocks {
        if let BarrierBlock::Diagonal(diag) = block {
            let mut vals = Vec::with_capacity(diag.len());
            for b in diag {
                b.check_state_dim(x.len())?;
                let v = b.value(x);
                if !v.is_finite() {
                    return Err(Error::NonFinitePrimitive {
                        index: values.len() + vals.len(),
                        label: b.label().to_string(),
                        value: v,
                    });
                }
                vals.push(v);
            }
            values.extend_from_slice(&vals);
            vals.sort_by(f64::total_cmp);
            slots.extend(vals);
        }
    }
    let pivot = tree.pivot_unchecked(&slots);

    Ok(entries
        .iter()
        .zip(&values)
        .enumerate()
        .map(|(k, (barrier, &lambda))| {
            let (lfh, lgh) = system.lie_derivatives_of(&barrier.gradient(x), x);
            ConstraintRow {
                a: lgh,
                b: -alpha.eval(pivot + (pivot - lambda).abs()) - lfh,
                source_index: k,
            }
        })
        .collect())
}

/// Diagonal form of the indefinite matrix barrier condition
/// `Hdot > -alpha(lambda_max) I - c_perp (lambda_max I - H)`:
/// row `j` is `hdot_j >= -alpha(lambda_max) - c_perp (lambda_max - h_j)`.
pub fn build_indefinite_rows(
    entries: &[PrimitiveBarrier],
    alpha: ClassKappa,
    c_perp: f64,
    system: &dyn ControlAffineSystem,
    x: &[f64],
) -> Result<Vec<ConstraintRow>> {
    if !(c_perp.is_finite() && c_perp >= 0.0) {
        return Err(Error::Precondition(format!(
            "c_perp must be nonnegative, got {c_perp}"
        )));
    }
    if entries.is_empty() {
        return Err(Error::Precondition("indefinite block has no entries".into()));
    }
    check_state(system, x)?;
    alpha.validate()?;
    let values = entries
        .iter()
        .enumerate()
        .map(|(index, b)| {
            b.check_state_dim(x.len())?;
            let value = b.value(x);
            if value.is_finite() {
                Ok(value)
            } else {
                Err(Error::NonFinitePrimitive {
                    index,
                    label: b.label().to_string(),
                    value,
                })
            }
        })
        .collect::<Result<Vec<f64>>>()?;
    let lambda_max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let base = -alpha.eval(lambda_max);

    Ok(entries
        .iter()
        .zip(&values)
        .enumerate()
        .map(|(k, (barrier, &hj))| {
            let (lfh, lgh) = system.lie_derivatives_of(&barrier.gradient(x), x);
            ConstraintRow {
                a: lgh,
                b: base - c_perp * (lambda_max - hj) - lfh,
                source_index: k,
            }
        })
        .collect())
}

/// Node values of the tree at `x`, grouped by height and sorted descending.
pub fn per_level_values(
    tree: &LogicTree,
    barriers: &[PrimitiveBarrier],
    x: &[f64],
) -> Result<BTreeMap<usize, Vec<f64>>> {
    logic::validate(tree, barriers.len()).into_result()?;
    let values: Vec<f64> = barriers.iter().map(|b| b.value(x)).collect();
    Ok(logic::level_values_unchecked(tree, &values))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::primitives::{make_ball_interior, make_halfspace, SingleIntegrator};

    fn constant(label: &str, v: f64, grad: Vec<f64>) -> PrimitiveBarrier {
        PrimitiveBarrier::custom(label, move |_| v, move |_| grad.clone())
    }

    #[test]
    fn single_leaf_row() {
        let sys = SingleIntegrator::new(1, 2);
        let ball = make_ball_interior(vec![0.0, 0.0], 1.0).unwrap();
        let alpha = ClassKappa::linear(2.0).unwrap();
        let x = [0.5, 0.0];
        let rows = build_rows(&LogicTree::leaf(0), &[ball], &sys, alpha, &x).unwrap();
        assert_eq!(rows.len(), 1);
        assert_eq!(rows[0].a, vec![-1.0, 0.0]);
        assert_eq!(rows[0].b, -2.0 * 0.75);
        assert_eq!(rows[0].source_index, 0);
    }

    #[test]
    fn flat_and_matches_classical() {
        let sys = SingleIntegrator::new(1, 2);
        let bs = vec![
            make_halfspace(vec![1.0, 0.0], 1.0).unwrap(),
            make_halfspace(vec![-1.0, 0.0], 1.0).unwrap(),
            make_ball_interior(vec![0.2, 0.1], 1.5).unwrap(),
        ];
        let alpha = ClassKappa::scaled_cubic(0.7).unwrap();
        let x = [0.3, -0.6];
        let rows = build_rows(&LogicTree::choose_leaves(3, 0..3), &bs, &sys, alpha, &x).unwrap();
        for (row, b) in rows.iter().zip(&bs) {
            let classical = -alpha.eval(b.value(&x));
            assert!((row.b - classical).abs() <= 1e-12);
            assert_eq!(row.a, b.gradient(&x));
        }
    }

    #[test]
    fn row_count_is_primitive_count_for_nested_tree() {
        let sys = SingleIntegrator::new(1, 2);
        let bs: Vec<_> = (0..6)
            .map(|i| make_halfspace(vec![1.0, i as f64], -(i as f64)).unwrap())
            .collect();
        let tree = LogicTree::all(vec![
            LogicTree::choose_leaves(4, 0..4),
            LogicTree::choose_leaves(1, 4..6),
        ]);
        let rows = build_rows(&tree, &bs, &sys, ClassKappa::default(), &[0.1, 0.2]).unwrap();
        assert_eq!(rows.len(), 6);
        let idx: Vec<usize> = rows.iter().map(|r| r.source_index).collect();
        assert_eq!(idx, vec![0, 1, 2, 3, 4, 5]);
    }

    #[test]
    fn invalid_tree_and_nonfinite_primitive() {
        let sys = SingleIntegrator::new(1, 1);
        let bs = vec![constant("a", 1.0, vec![1.0])];
        let err = build_rows(&LogicTree::choose_leaves(2, [0]), &bs, &sys, ClassKappa::default(), &[0.0]);
        assert!(matches!(err, Err(Error::InvalidTree(_))));

        let bs = vec![constant("a", 1.0, vec![1.0]), constant("bad", f64::NAN, vec![1.0])];
        let err = build_rows(&LogicTree::choose_leaves(1, 0..2), &bs, &sys, ClassKappa::default(), &[0.0])
            .unwrap_err();
        match err {
            Error::NonFinitePrimitive { index, label, .. } => {
                assert_eq!(index, 1);
                assert_eq!(label, "bad");
            }
            e => panic!("unexpected {e}"),
        }
    }

    #[test]
    fn margin_tightens_rows() {
        let sys = SingleIntegrator::new(1, 1);
        let bs = vec![constant("a", 1.0, vec![1.0])];
        let cb = CombinatorialBarrier::new(LogicTree::leaf(0), bs, ClassKappa::default())
            .unwrap()
            .with_margin(0.25)
            .unwrap();
        let c = cb.compile(&sys, &[0.0]).unwrap();
        assert_eq!(c.rows[0].b, -1.0 + 0.25);
        assert!(CombinatorialBarrier::new(LogicTree::leaf(0), vec![constant("a", 1.0, vec![1.0])], ClassKappa::default())
            .unwrap()
            .with_margin(-1.0)
            .is_err());
    }

    #[test]
    fn mcbf_diag_examples() {
        let sys = SingleIntegrator::new(1, 2);
        let alpha = ClassKappa::default();
        // entries [5, -1], OR over both eigenvalues: pivot 5
        let block = BarrierBlock::Diagonal(vec![
            constant("e0", 5.0, vec![1.0, 0.0]),
            constant("e1", -1.0, vec![0.0, 1.0]),
        ]);
        let rows =
            build_rows_mcbf_diag(&LogicTree::choose_leaves(1, 0..2), &[block], &sys, alpha, &[0.0, 0.0])
                .unwrap();
        assert_eq!(rows[0].b, -5.0);
        assert_eq!(rows[1].b, -11.0);

        // 1x1 block equals the scalar row
        let b = make_ball_interior(vec![0.0, 0.0], 1.0).unwrap();
        let x = [0.2, 0.3];
        let m = build_rows_mcbf_diag(
            &LogicTree::leaf(0),
            &[BarrierBlock::Diagonal(vec![b.clone()])],
            &sys,
            alpha,
            &x,
        )
        .unwrap();
        let s = build_rows(&LogicTree::leaf(0), &[b], &sys, alpha, &x).unwrap();
        assert_eq!(m, s);
    }

    #[test]
    fn mcbf_diag_matches_scalar_rows() {
        let sys = SingleIntegrator::new(1, 2);
        let alpha = ClassKappa::linear(1.3).unwrap();
        let bs = vec![
            make_ball_interior(vec![0.0, 0.0], 1.0).unwrap(),
            make_halfspace(vec![1.0, 1.0], 0.2).unwrap(),
            make_ball_interior(vec![1.0, 0.0], 0.5).unwrap(),
        ];
        let tree = LogicTree::choose_leaves(2, 0..3);
        let x = [0.4, -0.1];
        let m = build_rows_mcbf_diag(&tree, &[BarrierBlock::Diagonal(bs.clone())], &sys, alpha, &x)
            .unwrap();
        let s = build_rows(&tree, &bs, &sys, alpha, &x).unwrap();
        assert_eq!(m.len(), 3);
        for (a, b) in m.iter().zip(&s) {
            assert_eq!(a.a, b.a);
            assert!((a.b - b.b).abs() <= 1e-12);
        }
    }

    #[test]
    fn mcbf_diag_rejects_general_block() {
        let sys = SingleIntegrator::new(1, 1);
        let general = BarrierBlock::general(|_| {
            crate::mcbf::SymmetricMatrix::from_rows(vec![vec![1.0, 0.5], vec![0.5, 1.0]]).unwrap()
        });
        let err = build_rows_mcbf_diag(&LogicTree::leaf(0), &[general], &sys, ClassKappa::default(), &[0.0]);
        assert!(matches!(err, Err(Error::Unsupported(_))));
    }

    #[test]
    fn indefinite_examples() {
        let sys = SingleIntegrator::new(1, 1);
        let alpha = ClassKappa::default();
        let entries = vec![constant("a", 2.0, vec![1.0]), constant("b", -3.0, vec![-1.0])];
        let rows = build_indefinite_rows(&entries, alpha, 0.0, &sys, &[0.0]).unwrap();
        assert_eq!(rows[0].b, -2.0);
        assert_eq!(rows[1].b, -2.0);
        let rows = build_indefinite_rows(&entries, alpha, 1.0, &sys, &[0.0]).unwrap();
        assert_eq!(rows[0].b, -2.0);
        assert_eq!(rows[1].b, -2.0 - 5.0);

        let single = vec![constant("a", 0.4, vec![1.0])];
        let rows = build_indefinite_rows(&single, alpha, 3.0, &sys, &[0.0]).unwrap();
        assert_eq!(rows[0].b, -0.4);

        assert!(matches!(
            build_indefinite_rows(&entries, alpha, -0.1, &sys, &[0.0]),
            Err(Error::Precondition(_))
        ));
    }

    #[test]
    fn per_level_examples() {
        let bs: Vec<_> = [3.0, -1.0, 2.0]
            .iter()
            .map(|&v| constant("c", v, vec![0.0]))
            .collect();
        let lv = per_level_values(&LogicTree::choose_leaves(2, 0..3), &bs, &[0.0]).unwrap();
        assert_eq!(lv[&0], vec![3.0, 2.0, -1.0]);
        let lv = per_level_values(&LogicTree::leaf(1), &bs, &[0.0]).unwrap();
        assert_eq!(lv[&0], vec![-1.0]);
    }
}
