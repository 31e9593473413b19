//! Symmetric matrix barriers: eigendecomposition, class-K lifting and the
//! pivot transform `H' = V (h I + diag|h - lambda_j|) V^T`.
//!
//! Only diagonal blocks can be turned into constraint rows (see
//! [`crate::constraints::build_rows_mcbf_diag`]); general blocks are
//! evaluated and inspected here.

use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::primitives::{ClassKappa, PrimitiveBarrier};

pub const SYMMETRY_TOL: f64 = 1e-12;
pub const MAX_EIGEN_DIM: usize = 64;
const MAX_SWEEPS: usize = 100;

/// Dense symmetric matrix, row-major.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<Vec<f64>>", into = "Vec<Vec<f64>>")]
pub struct SymmetricMatrix {
    n: usize,
    data: Vec<f64>,
}

impl SymmetricMatrix {
    pub fn from_rows(rows: Vec<Vec<f64>>) -> Result<Self> {
        let n = rows.len();
        let mut data = Vec::with_capacity(n * n);
        for (i, r) in rows.iter().enumerate() {
            if r.len() != n {
                return Err(Error::Dimension {
                    context: format!("matrix row {i}"),
                    expected: n,
                    actual: r.len(),
                });
            }
            data.extend_from_slice(r);
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("matrix entry".into()));
        }
        let mut asym: f64 = 0.0;
        for i in 0..n {
            for j in i + 1..n {
                asym = asym.max((data[i * n + j] - data[j * n + i]).abs());
            }
        }
        if asym > SYMMETRY_TOL {
            return Err(Error::Asymmetric(asym));
        }
        Ok(Self { n, data })
    }

    pub fn diagonal(entries: &[f64]) -> Self {
        let n = entries.len();
        let mut data = vec![0.0; n * n];
        for (i, v) in entries.iter().enumerate() {
            data[i * n + i] = *v;
        }
        Self { n, data }
    }

    pub fn identity(n: usize) -> Self {
        Self::diagonal(&vec![1.0; n])
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.n + j]
    }

    pub fn rows(&self) -> Vec<Vec<f64>> {
        self.data.chunks(self.n.max(1)).take(self.n).map(|c| c.to_vec()).collect()
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn is_diagonal(&self) -> bool {
        (0..self.n).all(|i| (0..self.n).all(|j| i == j || self.get(i, j) == 0.0))
    }

    /// Max-norm of `self * other - other * self`.
    pub fn commutator_norm(&self, other: &SymmetricMatrix) -> f64 {
        let n = self.n;
        let mut worst: f64 = 0.0;
        for i in 0..n {
            for j in 0..n {
                let mut ab = 0.0;
                let mut ba = 0.0;
                for k in 0..n {
                    ab += self.get(i, k) * other.get(k, j);
                    ba += other.get(i, k) * self.get(k, j);
                }
                worst = worst.max((ab - ba).abs());
            }
        }
        worst
    }

    /// Max-norm distance to `other`.
    pub fn max_diff(&self, other: &SymmetricMatrix) -> f64 {
        self.data
            .iter()
            .zip(&other.data)
            .fold(0.0, |m, (a, b)| m.max((a - b).abs()))
    }

    fn frobenius(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum::<f64>().sqrt()
    }
}

impl TryFrom<Vec<Vec<f64>>> for SymmetricMatrix {
    type Error = Error;

    fn try_from(rows: Vec<Vec<f64>>) -> Result<Self> {
        Self::from_rows(rows)
    }
}

impl From<SymmetricMatrix> for Vec<Vec<f64>> {
    fn from(m: SymmetricMatrix) -> Self {
        m.rows()
    }
}

/// Eigenvalues ascending with matching orthonormal eigenvectors.
#[derive(Debug, Clone, PartialEq)]
pub struct EigenSystem {
    pub values: Vec<f64>,
    /// `vectors[j]` is the eigenvector of `values[j]`.
    pub vectors: Vec<Vec<f64>>,
}

impl EigenSystem {
    /// `V diag(f(lambda_j)) V^T`.
    pub fn map_spectrum(&self, f: impl Fn(f64) -> f64) -> SymmetricMatrix {
        let n = self.values.len();
        let mapped: Vec<f64> = self.values.iter().map(|&l| f(l)).collect();
        let mut data = vec![0.0; n * n];
        for i in 0..n {
            for j in i..n {
                let v: f64 = (0..n)
                    .map(|k| self.vectors[k][i] * mapped[k] * self.vectors[k][j])
                    .sum();
                data[i * n + j] = v;
                data[j * n + i] = v;
            }
        }
        SymmetricMatrix { n, data }
    }

    pub fn reconstruct(&self) -> SymmetricMatrix {
        self.map_spectrum(|l| l)
    }

    /// Max-norm of `V^T V - I`.
    pub fn orthonormality_error(&self) -> f64 {
        let n = self.values.len();
        let mut worst: f64 = 0.0;
        for i in 0..n {
            for j in 0..n {
                let d: f64 = (0..n).map(|k| self.vectors[i][k] * self.vectors[j][k]).sum();
                let target = if i == j { 1.0 } else { 0.0 };
                worst = worst.max((d - target).abs());
            }
        }
        worst
    }

    /// Diagonal of `V^T M V`.
    pub fn rayleigh_diagonal(&self, m: &SymmetricMatrix) -> Vec<f64> {
        let n = self.values.len();
        self.vectors
            .iter()
            .map(|v| {
                (0..n)
                    .map(|i| v[i] * (0..n).map(|j| m.get(i, j) * v[j]).sum::<f64>())
                    .sum()
            })
            .collect()
    }
}

/// Cyclic Jacobi eigendecomposition, sorted ascending. Equal eigenvalues keep
/// the order in which Jacobi left their columns.
pub fn eigen_sorted(h: &SymmetricMatrix) -> Result<EigenSystem> {
    let n = h.n;
    if n > MAX_EIGEN_DIM {
        return Err(Error::Precondition(format!(
            "matrix dimension {n} exceeds {MAX_EIGEN_DIM}"
        )));
    }
    let mut a = h.data.clone();
    // v[k*n + j]: component k of eigenvector j
    let mut v = vec![0.0; n * n];
    for i in 0..n {
        v[i * n + i] = 1.0;
    }
    let threshold = 1e-12 * h.frobenius();

    for _ in 0..MAX_SWEEPS {
        let off: f64 = (0..n)
            .flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j)))
            .map(|(i, j)| a[i * n + j] * a[i * n + j])
            .sum::<f64>()
            .sqrt();
        if off <= threshold {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                let apq = a[p * n + q];
                if apq == 0.0 {
                    continue;
                }
                let tau = (a[q * n + q] - a[p * n + p]) / (2.0 * apq);
                let t = tau.signum() / (tau.abs() + (1.0 + tau * tau).sqrt());
                let t = if tau == 0.0 { 1.0 } else { t };
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = t * c;
                for k in 0..n {
                    let akp = a[k * n + p];
                    let akq = a[k * n + q];
                    a[k * n + p] = c * akp - s * akq;
                    a[k * n + q] = s * akp + c * akq;
                }
                for k in 0..n {
                    let apk = a[p * n + k];
                    let aqk = a[q * n + k];
                    a[p * n + k] = c * apk - s * aqk;
                    a[q * n + k] = s * apk + c * aqk;
                }
                for k in 0..n {
                    let vkp = v[k * n + p];
                    let vkq = v[k * n + q];
                    v[k * n + p] = c * vkp - s * vkq;
                    v[k * n + q] = s * vkp + c * vkq;
                }
            }
        }
    }

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| a[i * n + i].total_cmp(&a[j * n + j]));
    Ok(EigenSystem {
        values: order.iter().map(|&j| a[j * n + j]).collect(),
        vectors: order
            .iter()
            .map(|&j| (0..n).map(|k| v[k * n + j]).collect())
            .collect(),
    })
}

/// `V diag(alpha(lambda_j)) V^T`.
pub fn apply_class_k_matrix(alpha: ClassKappa, h: &SymmetricMatrix) -> Result<SymmetricMatrix> {
    Ok(eigen_sorted(h)?.map_spectrum(|l| alpha.eval(l)))
}

/// `V (h I + diag|h - lambda_j|) V^T` for pivot value `pivot`.
pub fn build_h_prime(h: &SymmetricMatrix, pivot: f64) -> Result<SymmetricMatrix> {
    Ok(eigen_sorted(h)?.map_spectrum(|l| pivot + (pivot - l).abs()))
}

/// Per-eigenvalue right-hand sides `-alpha(H')` read off in the eigenbasis
/// of `h`, ascending eigenvalue order.
pub fn lifted_rhs(alpha: ClassKappa, h: &SymmetricMatrix, pivot: f64) -> Result<Vec<f64>> {
    let es = eigen_sorted(h)?;
    let lifted = apply_class_k_matrix(alpha, &build_h_prime(h, pivot)?)?;
    Ok(es.rayleigh_diagonal(&lifted).into_iter().map(|v| -v).collect())
}

/// Concatenated eigenvalues of all blocks, each block ascending.
pub fn eigenvalue_pivot_inputs(blocks: &[SymmetricMatrix]) -> Result<Vec<f64>> {
    let mut out = Vec::new();
    for b in blocks {
        out.extend(eigen_sorted(b)?.values);
    }
    Ok(out)
}

pub type MatrixFn = Arc<dyn Fn(&[f64]) -> SymmetricMatrix + Send + Sync>;

/// A matrix barrier `H_k(x)`: either built from scalar primitives on the
/// diagonal or given as a general state-dependent matrix.
#[derive(Clone)]
pub enum BarrierBlock {
    Diagonal(Vec<PrimitiveBarrier>),
    General(MatrixFn),
}

impl fmt::Debug for BarrierBlock {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Diagonal(d) => f.debug_tuple("Diagonal").field(d).finish(),
            Self::General(_) => f.write_str("General(<fn>)"),
        }
    }
}

impl BarrierBlock {
    pub fn general(f: impl Fn(&[f64]) -> SymmetricMatrix + Send + Sync + 'static) -> Self {
        Self::General(Arc::new(f))
    }

    pub fn is_diagonal(&self) -> bool {
        matches!(self, Self::Diagonal(_))
    }

    pub fn evaluate(&self, x: &[f64]) -> Result<SymmetricMatrix> {
        match self {
            Self::Diagonal(entries) => {
                let mut vals = Vec::with_capacity(entries.len());
                for (index, b) in entries.iter().enumerate() {
                    b.check_state_dim(x.len())?;
                    let value = b.value(x);
                    if !value.is_finite() {
                        return Err(Error::NonFinitePrimitive {
                            index,
                            label: b.label().to_string(),
                            value,
                        });
                    }
                    vals.push(value);
                }
                Ok(SymmetricMatrix::diagonal(&vals))
            }
            Self::General(f) => Ok(f(x)),
        }
    }
}
