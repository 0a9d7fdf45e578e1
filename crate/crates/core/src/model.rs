//! Problem data: the group partition, concave penalty and loss functions,
//! and evaluation of the objective `Σψ(‖x_Gi‖)` and the constraint
//! `Σφ((aᵢᵀx − bᵢ)²) ≤ σ`.

use std::fmt;

use ndarray::{Array1, Array2, ArrayView1, ArrayView2};
use serde::{Deserialize, Serialize};

use crate::error::{Error, PartitionViolation, Result};
use crate::linalg::{self, TransposedQr};
use crate::prox::CappedLogSpec;

/// Disjoint groups of coordinates covering `0..n`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupPartition {
    n: usize,
    groups: Vec<Vec<usize>>,
}

/// Checks that `groups` are nonempty, pairwise disjoint and cover `0..n`.
pub fn validate_partition(groups: &[Vec<usize>], n: usize) -> std::result::Result<(), PartitionViolation> {
    if groups.is_empty() {
        return Err(PartitionViolation::NoGroups);
    }
    let mut seen = vec![false; n];
    for (gi, group) in groups.iter().enumerate() {
        if group.is_empty() {
            return Err(PartitionViolation::EmptyGroup { group: gi });
        }
        for &index in group {
            if index >= n {
                return Err(PartitionViolation::OutOfRange { index, n });
            }
            if seen[index] {
                return Err(PartitionViolation::Duplicate { index });
            }
            seen[index] = true;
        }
    }
    let uncovered: Vec<usize> = seen
        .iter()
        .enumerate()
        .filter_map(|(i, &s)| (!s).then_some(i))
        .collect();
    if uncovered.is_empty() {
        Ok(())
    } else {
        Err(PartitionViolation::Uncovered { indices: uncovered })
    }
}

impl GroupPartition {
    pub fn new(n: usize, groups: Vec<Vec<usize>>) -> Result<Self> {
        validate_partition(&groups, n)?;
        Ok(Self { n, groups })
    }

    /// Consecutive blocks of `block` coordinates; `block` must divide `n`.
    pub fn contiguous(n: usize, block: usize) -> Result<Self> {
        if block == 0 || !n.is_multiple_of(block) {
            return Err(Error::InvalidParameter(format!(
                "block size {block} does not divide n = {n}"
            )));
        }
        let groups = (0..n / block)
            .map(|g| (g * block..(g + 1) * block).collect())
            .collect();
        Self::new(n, groups)
    }

    pub fn singletons(n: usize) -> Result<Self> {
        Self::contiguous(n, 1)
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn num_groups(&self) -> usize {
        self.groups.len()
    }

    pub fn groups(&self) -> &[Vec<usize>] {
        &self.groups
    }

    pub fn group(&self, i: usize) -> &[usize] {
        &self.groups[i]
    }

    /// Euclidean norm of `x` restricted to group `i`.
    pub fn group_norm(&self, x: ArrayView1<f64>, i: usize) -> f64 {
        self.groups[i]
            .iter()
            .map(|&j| x[j] * x[j])
            .sum::<f64>()
            .sqrt()
    }

    /// `G(x) = (‖x_G1‖, …, ‖x_Gq‖)`.
    pub fn norms(&self, x: ArrayView1<f64>) -> Array1<f64> {
        Array1::from_iter((0..self.groups.len()).map(|i| self.group_norm(x, i)))
    }
}

/// Concave, nondecreasing `ℝ₊ → ℝ₊` function with `f(0) = 0`, used both as
/// the sparsity penalty ψ and as the loss φ.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ConcaveFn {
    /// `t ↦ log(1 + t/ε)`.
    Log { eps: f64 },
    /// `t ↦ log(1 + t/δ²)`.
    Cauchy { delta: f64 },
    /// `t ↦ t`.
    Identity,
    /// `log(1 + t/ε)` below `ν`, the constant `C` from `ν` on.
    CappedLog(CappedLogSpec),
}

impl ConcaveFn {
    pub fn eval(&self, t: f64) -> f64 {
        match *self {
            ConcaveFn::Log { eps } => (t / eps).ln_1p(),
            ConcaveFn::Cauchy { delta } => (t / (delta * delta)).ln_1p(),
            ConcaveFn::Identity => t,
            ConcaveFn::CappedLog(spec) => spec.eval(t),
        }
    }

    /// Right derivative; at 0 this is the exact limit `lim_{t↓0} f'(t)`.
    pub fn rderiv(&self, t: f64) -> f64 {
        match *self {
            ConcaveFn::Log { eps } => 1.0 / (eps + t),
            ConcaveFn::Cauchy { delta } => 1.0 / (delta * delta + t),
            ConcaveFn::Identity => 1.0,
            ConcaveFn::CappedLog(spec) => {
                if t < spec.nu {
                    1.0 / (spec.eps + t)
                } else {
                    0.0
                }
            }
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |what: &str, v: f64| {
            Err(Error::InvalidParameter(format!("{what} must be positive and finite, got {v}")))
        };
        match *self {
            ConcaveFn::Log { eps } if !(eps > 0.0 && eps.is_finite()) => bad("eps", eps),
            ConcaveFn::Cauchy { delta } if !(delta > 0.0 && delta.is_finite()) => bad("delta", delta),
            ConcaveFn::CappedLog(spec) => spec.validate(),
            _ => Ok(()),
        }
    }
}

impl fmt::Display for ConcaveFn {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ConcaveFn::Log { eps } => write!(f, "log(eps={eps})"),
            ConcaveFn::Cauchy { delta } => write!(f, "cauchy(delta={delta})"),
            ConcaveFn::Identity => write!(f, "identity"),
            ConcaveFn::CappedLog(s) => write!(f, "capped-log(eps={}, nu={}, C={})", s.eps, s.nu, s.cap),
        }
    }
}

/// Strictly convex, differentiable `f` defining the Bregman distance
/// `D_f(x, x₀) = f(x) − f(x₀) − ⟨∇f(x₀), x − x₀⟩`.
pub trait Bregman: fmt::Debug + Send + Sync {
    fn eval(&self, x: ArrayView1<f64>) -> f64;
    fn grad(&self, x: ArrayView1<f64>) -> Array1<f64>;

    fn distance(&self, x: ArrayView1<f64>, x0: ArrayView1<f64>) -> f64 {
        let diff = &x - &x0;
        self.eval(x) - self.eval(x0) - self.grad(x0).dot(&diff)
    }
}

/// `f(x) = ‖x‖²`, for which `D_f(y, 0) = ‖y‖²`.
#[derive(Debug, Clone, Copy, Default)]
pub struct SquaredEuclidean;

impl Bregman for SquaredEuclidean {
    fn eval(&self, x: ArrayView1<f64>) -> f64 {
        x.dot(&x)
    }

    fn grad(&self, x: ArrayView1<f64>) -> Array1<f64> {
        &x * 2.0
    }

    fn distance(&self, x: ArrayView1<f64>, x0: ArrayView1<f64>) -> f64 {
        let d = &x - &x0;
        d.dot(&d)
    }
}

/// Tolerance of the power iteration for `λ_max(AᵀA)`.
const LAMBDA_MAX_TOL: f64 = 1e-6;
const LAMBDA_MAX_ITERS: usize = 1000;

/// `min Σψ(‖x_Gi‖)  s.t.  Σφ((aᵢᵀx − bᵢ)²) ≤ σ` with validated data.
///
/// Construction factors `Aᵀ` once; the least-norm point `A†b` and
/// `λ_max(AᵀA)` are cached for the solver.
#[derive(Debug, Clone)]
pub struct Problem {
    a: Array2<f64>,
    b: Array1<f64>,
    sigma: f64,
    partition: GroupPartition,
    psi: ConcaveFn,
    phi: ConcaveFn,
    slater: Array1<f64>,
    lambda_max: f64,
}

impl Problem {
    pub fn new(
        a: Array2<f64>,
        b: Array1<f64>,
        sigma: f64,
        partition: GroupPartition,
        psi: ConcaveFn,
        phi: ConcaveFn,
    ) -> Result<Self> {
        let (m, n) = a.dim();
        if b.len() != m {
            return Err(Error::Dimension { what: "b", expected: m, found: b.len() });
        }
        if partition.dim() != n {
            return Err(Error::Dimension { what: "partition", expected: n, found: partition.dim() });
        }
        if m == 0 || m > n {
            return Err(Error::InvalidParameter(format!("need 0 < m <= n, got {m}x{n}")));
        }
        psi.validate()?;
        phi.validate()?;
        let upper: f64 = b.iter().map(|&bi| phi.eval(bi * bi)).sum();
        if !(sigma > 0.0 && sigma < upper) {
            return Err(Error::InvalidParameter(format!(
                "sigma must lie in (0, {upper:e}), got {sigma:e}"
            )));
        }
        let slater = TransposedQr::new(a.view())?.min_norm_solve(b.view())?;
        let lambda_max = linalg::lambda_max_ata(a.view(), LAMBDA_MAX_TOL, LAMBDA_MAX_ITERS);
        Ok(Self { a, b, sigma, partition, psi, phi, slater, lambda_max })
    }

    pub fn a(&self) -> ArrayView2<'_, f64> {
        self.a.view()
    }

    pub fn b(&self) -> ArrayView1<'_, f64> {
        self.b.view()
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    pub fn partition(&self) -> &GroupPartition {
        &self.partition
    }

    pub fn psi(&self) -> ConcaveFn {
        self.psi
    }

    pub fn phi(&self) -> ConcaveFn {
        self.phi
    }

    pub fn rows(&self) -> usize {
        self.a.nrows()
    }

    pub fn cols(&self) -> usize {
        self.a.ncols()
    }

    /// The least-norm solution `A†b`, which zeroes the residual.
    pub fn slater_point(&self) -> ArrayView1<'_, f64> {
        self.slater.view()
    }

    pub fn lambda_max_ata(&self) -> f64 {
        self.lambda_max
    }

    /// Same data with a different penalty (e.g. the capped-log reformulation).
    pub fn with_penalty(&self, psi: ConcaveFn) -> Result<Self> {
        psi.validate()?;
        Ok(Self { psi, ..self.clone() })
    }

    /// `y = Ax − b`.
    pub fn residual(&self, x: ArrayView1<f64>) -> Array1<f64> {
        self.a.dot(&x) - &self.b
    }
}

pub fn group_norms(x: ArrayView1<f64>, partition: &GroupPartition) -> Array1<f64> {
    partition.norms(x)
}

/// `Ψ(x_G) = Σψ(‖x_Gi‖)`.
pub fn objective_value(x: ArrayView1<f64>, prob: &Problem) -> f64 {
    let psi = prob.psi();
    prob.partition().norms(x).iter().map(|&t| psi.eval(t)).sum()
}

/// `Φ((Ax − b)∘(Ax − b))`; `x` is feasible iff this is at most σ.
pub fn constraint_value(x: ArrayView1<f64>, prob: &Problem) -> f64 {
    loss_sum(prob.residual(x).view(), prob.phi())
}

pub(crate) fn loss_sum(residual: ArrayView1<f64>, phi: ConcaveFn) -> f64 {
    residual.iter().map(|&y| phi.eval(y * y)).sum()
}

/// Reweighting vector `Ψ′₊(x_G)`.
pub fn weights(x: ArrayView1<f64>, prob: &Problem) -> Array1<f64> {
    let psi = prob.psi();
    prob.partition().norms(x).mapv(|t| psi.rderiv(t))
}

pub use crate::linalg::min_norm_solution;
