//! Primitive barrier functions, control-affine dynamics and class-K gains.
//!
//! Every barrier carries an analytic gradient. Shapes defined on a single
//! agent's coordinates are lifted to the stacked multi-agent state with
//! [`make_agent_block`]; their gradient is exactly zero outside the block.

use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// `xdot = f(x) + g(x) u`.
///
/// Implementations must be safe to evaluate from several threads at once.
pub trait ControlAffineSystem: Send + Sync {
    fn state_dim(&self) -> usize;
    fn input_dim(&self) -> usize;

    fn drift(&self, x: &[f64]) -> Vec<f64>;

    /// `g(x)` as a row-major `n x m` matrix.
    fn control_matrix(&self, x: &[f64]) -> Vec<f64>;

    /// `(grad . f(x), grad^T g(x))`.
    fn lie_derivatives_of(&self, grad: &[f64], x: &[f64]) -> (f64, Vec<f64>) {
        let n = self.state_dim();
        let m = self.input_dim();
        let f = self.drift(x);
        let g = self.control_matrix(x);
        let lfh = dot(grad, &f);
        let mut lgh = vec![0.0; m];
        for i in 0..n {
            let gi = grad[i];
            if gi == 0.0 {
                continue;
            }
            for (j, l) in lgh.iter_mut().enumerate() {
                *l += gi * g[i * m + j];
            }
        }
        (lfh, lgh)
    }

    /// `f(x) + g(x) u`.
    fn vector_field(&self, x: &[f64], u: &[f64]) -> Vec<f64> {
        let m = self.input_dim();
        let mut out = self.drift(x);
        let g = self.control_matrix(x);
        for (i, o) in out.iter_mut().enumerate() {
            *o += dot(&g[i * m..(i + 1) * m], u);
        }
        out
    }
}

/// `N` decoupled agents with `xdot_j = u_j`, each `dim`-dimensional.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SingleIntegrator {
    pub agents: usize,
    pub dim: usize,
}

impl SingleIntegrator {
    pub fn new(agents: usize, dim: usize) -> Self {
        Self { agents, dim }
    }
}

impl ControlAffineSystem for SingleIntegrator {
    fn state_dim(&self) -> usize {
        self.agents * self.dim
    }

    fn input_dim(&self) -> usize {
        self.agents * self.dim
    }

    fn drift(&self, _x: &[f64]) -> Vec<f64> {
        vec![0.0; self.state_dim()]
    }

    fn control_matrix(&self, _x: &[f64]) -> Vec<f64> {
        let n = self.state_dim();
        let mut g = vec![0.0; n * n];
        for i in 0..n {
            g[i * n + i] = 1.0;
        }
        g
    }

    fn lie_derivatives_of(&self, grad: &[f64], _x: &[f64]) -> (f64, Vec<f64>) {
        (0.0, grad.to_vec())
    }

    fn vector_field(&self, _x: &[f64], u: &[f64]) -> Vec<f64> {
        u.to_vec()
    }
}

/// `xdot = A x + B u` with row-major `A` (`n x n`) and `B` (`n x m`).
#[derive(Debug, Clone, PartialEq)]
pub struct LinearSystem {
    n: usize,
    m: usize,
    a: Vec<f64>,
    b: Vec<f64>,
}

impl LinearSystem {
    pub fn new(a: Vec<Vec<f64>>, b: Vec<Vec<f64>>) -> Result<Self> {
        let n = a.len();
        if n == 0 {
            return Err(Error::InvalidParameter("A must be non-empty".into()));
        }
        if b.len() != n {
            return Err(Error::Dimension {
                context: "B rows".into(),
                expected: n,
                actual: b.len(),
            });
        }
        let m = b[0].len();
        for row in &a {
            if row.len() != n {
                return Err(Error::Dimension {
                    context: "A columns".into(),
                    expected: n,
                    actual: row.len(),
                });
            }
        }
        for row in &b {
            if row.len() != m {
                return Err(Error::Dimension {
                    context: "B columns".into(),
                    expected: m,
                    actual: row.len(),
                });
            }
        }
        let a: Vec<f64> = a.into_iter().flatten().collect();
        let b: Vec<f64> = b.into_iter().flatten().collect();
        if a.iter().chain(&b).any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("linear system matrices".into()));
        }
        Ok(Self { n, m, a, b })
    }
}

impl ControlAffineSystem for LinearSystem {
    fn state_dim(&self) -> usize {
        self.n
    }

    fn input_dim(&self) -> usize {
        self.m
    }

    fn drift(&self, x: &[f64]) -> Vec<f64> {
        (0..self.n)
            .map(|i| dot(&self.a[i * self.n..(i + 1) * self.n], x))
            .collect()
    }

    fn control_matrix(&self, _x: &[f64]) -> Vec<f64> {
        self.b.clone()
    }
}

type VecField = Arc<dyn Fn(&[f64]) -> Vec<f64> + Send + Sync>;

/// User-supplied `f` and `g` callbacks. The callbacks must be safe to call
/// concurrently.
#[derive(Clone)]
pub struct FnSystem {
    n: usize,
    m: usize,
    f: VecField,
    g: VecField,
}

impl FnSystem {
    pub fn new(
        state_dim: usize,
        input_dim: usize,
        f: impl Fn(&[f64]) -> Vec<f64> + Send + Sync + 'static,
        g: impl Fn(&[f64]) -> Vec<f64> + Send + Sync + 'static,
    ) -> Self {
        Self {
            n: state_dim,
            m: input_dim,
            f: Arc::new(f),
            g: Arc::new(g),
        }
    }
}

impl fmt::Debug for FnSystem {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("FnSystem")
            .field("n", &self.n)
            .field("m", &self.m)
            .finish_non_exhaustive()
    }
}

impl ControlAffineSystem for FnSystem {
    fn state_dim(&self) -> usize {
        self.n
    }

    fn input_dim(&self) -> usize {
        self.m
    }

    fn drift(&self, x: &[f64]) -> Vec<f64> {
        let out = (self.f)(x);
        assert_eq!(out.len(), self.n, "drift callback returned wrong length");
        out
    }

    fn control_matrix(&self, x: &[f64]) -> Vec<f64> {
        let out = (self.g)(x);
        assert_eq!(out.len(), self.n * self.m, "control matrix callback returned wrong length");
        out
    }
}

/// Basic shapes, defined on a low-dimensional coordinate block.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum Shape {
    /// Interior of a ball: `R^2 - |c - y|^2`.
    Ball {
        c: Vec<f64>,
        #[serde(rename = "R")]
        radius: f64,
    },
    /// Half space `a . y + b >= 0`.
    Halfspace { a: Vec<f64>, b: f64 },
}

impl Shape {
    pub fn dim(&self) -> usize {
        match self {
            Shape::Ball { c, .. } => c.len(),
            Shape::Halfspace { a, .. } => a.len(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            Shape::Ball { c, radius } => {
                if c.is_empty() {
                    return Err(Error::InvalidParameter("ball center is empty".into()));
                }
                if c.iter().any(|v| !v.is_finite()) {
                    return Err(Error::InvalidParameter("ball center is not finite".into()));
                }
                if !(radius.is_finite() && *radius > 0.0) {
                    return Err(Error::InvalidParameter(format!(
                        "ball radius must be positive, got {radius}"
                    )));
                }
            }
            Shape::Halfspace { a, b } => {
                if a.is_empty() || a.iter().all(|v| *v == 0.0) {
                    return Err(Error::InvalidParameter("half-space normal is zero".into()));
                }
                if a.iter().any(|v| !v.is_finite()) || !b.is_finite() {
                    return Err(Error::InvalidParameter("half-space is not finite".into()));
                }
            }
        }
        Ok(())
    }

    pub fn value(&self, y: &[f64]) -> f64 {
        match self {
            Shape::Ball { c, radius } => {
                let d2: f64 = c.iter().zip(y).map(|(ci, yi)| (ci - yi) * (ci - yi)).sum();
                radius * radius - d2
            }
            Shape::Halfspace { a, b } => dot(a, y) + b,
        }
    }

    /// Writes the gradient into `out` (same length as `y`).
    pub fn gradient_into(&self, y: &[f64], out: &mut [f64]) {
        match self {
            Shape::Ball { c, .. } => {
                for ((o, ci), yi) in out.iter_mut().zip(c).zip(y) {
                    *o = 2.0 * (ci - yi);
                }
            }
            Shape::Halfspace { a, .. } => out.copy_from_slice(a),
        }
    }
}

type ScalarFn = Arc<dyn Fn(&[f64]) -> f64 + Send + Sync>;

#[derive(Clone)]
enum BarrierKind {
    Shape { shape: Shape, offset: usize, block: bool },
    Custom { h: ScalarFn, grad: VecField },
}

/// A scalar function `h_k` over the full state with its gradient.
#[derive(Clone)]
pub struct PrimitiveBarrier {
    label: String,
    kind: BarrierKind,
}

impl fmt::Debug for PrimitiveBarrier {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut d = f.debug_struct("PrimitiveBarrier");
        d.field("label", &self.label);
        match &self.kind {
            BarrierKind::Shape {
                shape,
                offset,
                block,
            } => {
                d.field("shape", shape);
                if *block {
                    d.field("offset", offset);
                }
            }
            BarrierKind::Custom { .. } => {
                d.field("custom", &true);
            }
        }
        d.finish()
    }
}

pub fn make_ball_interior(c: Vec<f64>, radius: f64) -> Result<PrimitiveBarrier> {
    PrimitiveBarrier::from_shape(Shape::Ball { c, radius })
}

/// `h(x) = a . x + b`.
pub fn make_halfspace(a: Vec<f64>, b: f64) -> Result<PrimitiveBarrier> {
    PrimitiveBarrier::from_shape(Shape::Halfspace { a, b })
}

/// Lift `shape` to agent `agent_index` of a stacked state
/// `x = [x_0; x_1; ...]` with `agent_dim` coordinates per agent.
pub fn make_agent_block(shape: Shape, agent_index: usize, agent_dim: usize) -> Result<PrimitiveBarrier> {
    shape.validate()?;
    if shape.dim() != agent_dim {
        return Err(Error::Dimension {
            context: "agent block shape".into(),
            expected: agent_dim,
            actual: shape.dim(),
        });
    }
    let label = format!("{}@agent{}", shape_name(&shape), agent_index);
    Ok(PrimitiveBarrier {
        label,
        kind: BarrierKind::Shape {
            shape,
            offset: agent_index * agent_dim,
            block: true,
        },
    })
}

fn shape_name(shape: &Shape) -> &'static str {
    match shape {
        Shape::Ball { .. } => "ball",
        Shape::Halfspace { .. } => "halfspace",
    }
}

impl PrimitiveBarrier {
    pub fn from_shape(shape: Shape) -> Result<Self> {
        shape.validate()?;
        Ok(Self {
            label: shape_name(&shape).to_string(),
            kind: BarrierKind::Shape {
                shape,
                offset: 0,
                block: false,
            },
        })
    }

    pub fn custom(
        label: impl Into<String>,
        h: impl Fn(&[f64]) -> f64 + Send + Sync + 'static,
        grad: impl Fn(&[f64]) -> Vec<f64> + Send + Sync + 'static,
    ) -> Self {
        Self {
            label: label.into(),
            kind: BarrierKind::Custom {
                h: Arc::new(h),
                grad: Arc::new(grad),
            },
        }
    }

    pub fn with_label(mut self, label: impl Into<String>) -> Self {
        self.label = label.into();
        self
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn shape(&self) -> Option<&Shape> {
        match &self.kind {
            BarrierKind::Shape { shape, .. } => Some(shape),
            BarrierKind::Custom { .. } => None,
        }
    }

    /// Coordinate range the barrier depends on, when known.
    pub fn support(&self) -> Option<std::ops::Range<usize>> {
        match &self.kind {
            BarrierKind::Shape { shape, offset, .. } => Some(*offset..offset + shape.dim()),
            BarrierKind::Custom { .. } => None,
        }
    }

    /// Checks that the barrier can be evaluated on an `n`-dimensional state.
    pub fn check_state_dim(&self, n: usize) -> Result<()> {
        match &self.kind {
            BarrierKind::Shape {
                shape,
                offset,
                block,
            } => {
                let need = offset + shape.dim();
                let ok = if *block { need <= n } else { need == n };
                if ok {
                    Ok(())
                } else {
                    Err(Error::Dimension {
                        context: format!("state for barrier '{}'", self.label),
                        expected: need,
                        actual: n,
                    })
                }
            }
            BarrierKind::Custom { .. } => Ok(()),
        }
    }

    pub fn value(&self, x: &[f64]) -> f64 {
        match &self.kind {
            BarrierKind::Shape { shape, offset, .. } => {
                shape.value(&x[*offset..offset + shape.dim()])
            }
            BarrierKind::Custom { h, .. } => h(x),
        }
    }

    pub fn gradient(&self, x: &[f64]) -> Vec<f64> {
        match &self.kind {
            BarrierKind::Shape { shape, offset, .. } => {
                let mut g = vec![0.0; x.len()];
                let d = shape.dim();
                shape.gradient_into(&x[*offset..offset + d], &mut g[*offset..offset + d]);
                g
            }
            BarrierKind::Custom { grad, .. } => {
                let g = grad(x);
                assert_eq!(g.len(), x.len(), "custom gradient has wrong length");
                g
            }
        }
    }
}

/// Lie derivatives of one barrier along the drift and control fields.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LieDerivatives {
    pub lfh: f64,
    pub lgh: Vec<f64>,
}

impl LieDerivatives {
    /// `hdot(x, u) = lfh + lgh . u`.
    pub fn hdot(&self, u: &[f64]) -> f64 {
        self.lfh + dot(&self.lgh, u)
    }
}

pub fn lie_derivatives(
    barrier: &PrimitiveBarrier,
    system: &dyn ControlAffineSystem,
    x: &[f64],
) -> Result<LieDerivatives> {
    let n = system.state_dim();
    if x.len() != n {
        return Err(Error::Dimension {
            context: "state".into(),
            expected: n,
            actual: x.len(),
        });
    }
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("state".into()));
    }
    barrier.check_state_dim(n)?;
    let grad = barrier.gradient(x);
    let (lfh, lgh) = system.lie_derivatives_of(&grad, x);
    Ok(LieDerivatives { lfh, lgh })
}

/// Central-difference check of the analytic gradient. Returns the largest
/// per-component error, relative to the analytic component where its
/// magnitude is at least one and absolute otherwise.
pub fn check_gradient(barrier: &PrimitiveBarrier, x: &[f64], step: f64) -> f64 {
    let analytic = barrier.gradient(x);
    let mut probe = x.to_vec();
    let mut worst: f64 = 0.0;
    for i in 0..x.len() {
        probe[i] = x[i] + step;
        let hp = barrier.value(&probe);
        probe[i] = x[i] - step;
        let hm = barrier.value(&probe);
        probe[i] = x[i];
        let fd = (hp - hm) / (2.0 * step);
        let err = (fd - analytic[i]).abs() / analytic[i].abs().max(1.0);
        worst = worst.max(err);
    }
    worst
}

/// Extended class-K function.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ClassKappa {
    /// `gamma * s`
    Linear { gamma: f64 },
    /// `gamma * (s + s^3)`
    ScaledCubic { gamma: f64 },
}

impl Default for ClassKappa {
    fn default() -> Self {
        ClassKappa::Linear { gamma: 1.0 }
    }
}

impl ClassKappa {
    pub fn linear(gamma: f64) -> Result<Self> {
        let k = ClassKappa::Linear { gamma };
        k.validate()?;
        Ok(k)
    }

    pub fn scaled_cubic(gamma: f64) -> Result<Self> {
        let k = ClassKappa::ScaledCubic { gamma };
        k.validate()?;
        Ok(k)
    }

    pub fn gamma(&self) -> f64 {
        match self {
            ClassKappa::Linear { gamma } | ClassKappa::ScaledCubic { gamma } => *gamma,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let g = self.gamma();
        if g.is_finite() && g > 0.0 {
            Ok(())
        } else {
            Err(Error::InvalidParameter(format!(
                "class-K gain must be positive, got {g}"
            )))
        }
    }

    pub fn eval(&self, s: f64) -> f64 {
        match self {
            ClassKappa::Linear { gamma } => gamma * s,
            ClassKappa::ScaledCubic { gamma } => gamma * (s + s * s * s),
        }
    }
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}
