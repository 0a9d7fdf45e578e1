//! Stationarity, feasibility and complementarity residuals of the
//! first-order system, plus the MFCQ check on the constraint boundary.
//!
//! A feasible `x` is stationary with multiplier `λ ≥ 0` when
//! `λ(Φ − σ) = 0` and `0 ∈ Ψ′₊(x_G)∘∂G(x) + 2λ g(x)`, where
//! `g(x) = Σ φ′₊(yᵢ²) yᵢ aᵢ` and `y = Ax − b`.

use ndarray::{Array1, ArrayView1};
use serde::Serialize;

use crate::model::{self, Problem};

/// Residuals at a point, filled at the best multiplier found.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct KktResidual {
    /// `max{Φ − σ, 0}`.
    pub feasibility: f64,
    pub stationarity: f64,
    /// `λ*·|Φ − σ|`.
    pub complementarity: f64,
    pub lambda_star: f64,
    /// `stationarity / (1 + ‖ω‖)`.
    pub scaled: f64,
}

/// Options for [`kkt_report_with`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KktOptions {
    /// Groups with `‖x_G‖ ≤ zero_tol · max{1, maxᵢ ‖x_Gi‖}` are treated as
    /// zero. `0.0` gives the exact test. The default matches the support
    /// threshold of the benchmark metrics.
    pub zero_tol: f64,
    /// Golden-section iterations for the multiplier search.
    pub search_iters: usize,
}

impl Default for KktOptions {
    fn default() -> Self {
        Self { zero_tol: 1e-5, search_iters: 200 }
    }
}

/// `g(x) = Σ φ′₊((aᵢᵀx − bᵢ)²)(aᵢᵀx − bᵢ) aᵢ`; `2g` is the gradient of the
/// constraint function wherever φ is differentiable.
pub fn constraint_gradient(x: ArrayView1<f64>, prob: &Problem) -> Array1<f64> {
    let phi = prob.phi();
    let y = prob.residual(x);
    let scaled = y.mapv(|yi| phi.rderiv(yi * yi) * yi);
    prob.a().t().dot(&scaled)
}

/// Per-group pieces of the stationarity residual, precomputed once so the
/// multiplier search only redoes cheap vector arithmetic.
struct Pieces {
    /// `(ωᵢ x_G/‖x_G‖, g_G)` for nonzero groups.
    active: Vec<(Array1<f64>, Array1<f64>)>,
    /// `(ωᵢ, ‖g_G‖)` for zero groups.
    inactive: Vec<(f64, f64)>,
    weight_norm: f64,
}

impl Pieces {
    fn new(x: ArrayView1<f64>, prob: &Problem, zero_tol: f64) -> Self {
        let part = prob.partition();
        let norms = part.norms(x);
        let weights = model::weights(x, prob);
        let g = constraint_gradient(x, prob);
        let cutoff = zero_tol * norms.iter().cloned().fold(1.0, f64::max);
        let mut active = Vec::new();
        let mut inactive = Vec::new();
        for (i, group) in part.groups().iter().enumerate() {
            let g_group = Array1::from_iter(group.iter().map(|&j| g[j]));
            if norms[i] > cutoff && norms[i] > 0.0 {
                let dir = Array1::from_iter(group.iter().map(|&j| weights[i] * x[j] / norms[i]));
                active.push((dir, g_group));
            } else {
                inactive.push((weights[i], g_group.dot(&g_group).sqrt()));
            }
        }
        Self { active, inactive, weight_norm: weights.dot(&weights).sqrt() }
    }

    fn squared(&self, lambda: f64) -> f64 {
        let two_l = 2.0 * lambda;
        let mut total = 0.0;
        for (dir, g) in &self.active {
            total += dir.iter().zip(g.iter()).map(|(d, gi)| (d + two_l * gi).powi(2)).sum::<f64>();
        }
        for &(w, g_norm) in &self.inactive {
            total += (two_l * g_norm - w).max(0.0).powi(2);
        }
        total
    }
}

/// Distance from 0 to `Ψ′₊(x_G)∘∂G(x) + 2λ g(x)`, using exact zero tests on
/// group norms.
pub fn stationarity_residual(x: ArrayView1<f64>, lambda: f64, prob: &Problem) -> f64 {
    Pieces::new(x, prob, 0.0).squared(lambda).sqrt()
}

/// [`kkt_report_with`] under default options.
pub fn kkt_report(x: ArrayView1<f64>, prob: &Problem, lambda_hint: f64) -> KktResidual {
    kkt_report_with(x, prob, lambda_hint, &KktOptions::default())
}

/// Minimizes the stationarity residual over `λ ∈ [0, Λ]`,
/// `Λ = max{10(hint + 1), 1e6}`, and fills the residuals there. The squared
/// residual is convex in `λ`, so a golden-section search applies; `hint/2`
/// and `0` are compared as well.
pub fn kkt_report_with(x: ArrayView1<f64>, prob: &Problem, lambda_hint: f64, opts: &KktOptions) -> KktResidual {
    let hint = if lambda_hint.is_finite() { lambda_hint.max(0.0) } else { 0.0 };
    let pieces = Pieces::new(x, prob, opts.zero_tol);
    let f = |l: f64| pieces.squared(l);

    let upper = (10.0 * (hint + 1.0)).max(1e6);
    let inv_phi = 0.5 * (5f64.sqrt() - 1.0);
    let (mut lo, mut hi) = (0.0, upper);
    let mut c = hi - inv_phi * (hi - lo);
    let mut d = lo + inv_phi * (hi - lo);
    let (mut fc, mut fd) = (f(c), f(d));
    for _ in 0..opts.search_iters {
        if fc <= fd {
            hi = d;
            d = c;
            fd = fc;
            c = hi - inv_phi * (hi - lo);
            fc = f(c);
        } else {
            lo = c;
            c = d;
            fc = fd;
            d = lo + inv_phi * (hi - lo);
            fd = f(d);
        }
        if hi - lo <= 1e-15 * hi.max(1.0) {
            break;
        }
    }
    let mut best = (0.5 * (lo + hi), f(0.5 * (lo + hi)));
    for cand in [hint / 2.0, 0.0] {
        let val = f(cand);
        if val < best.1 {
            best = (cand, val);
        }
    }
    let (lambda_star, sq) = best;

    let gap = model::constraint_value(x, prob) - prob.sigma();
    let stationarity = sq.max(0.0).sqrt();
    KktResidual {
        feasibility: gap.max(0.0),
        stationarity,
        complementarity: lambda_star * gap.abs(),
        lambda_star,
        scaled: stationarity / (1.0 + pieces.weight_norm),
    }
}

/// Outcome of the MFCQ check.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum MfcqStatus {
    Pass,
    Fail { norm: f64 },
    /// `x` is not on the constraint boundary.
    NotApplicable,
}

/// Relative boundary tolerance for [`mfcq_boundary_check`].
pub const MFCQ_BOUNDARY_TOL: f64 = 1e-6;

/// On the boundary `|Φ − σ| ≤ 1e−6·σ`, passes iff `‖g(x)‖ > 1e−8`.
pub fn mfcq_boundary_check(x: ArrayView1<f64>, prob: &Problem) -> MfcqStatus {
    let gap = model::constraint_value(x, prob) - prob.sigma();
    if gap.abs() > MFCQ_BOUNDARY_TOL * prob.sigma() {
        return MfcqStatus::NotApplicable;
    }
    let g = constraint_gradient(x, prob);
    let norm = g.dot(&g).sqrt();
    if norm > 1e-8 {
        MfcqStatus::Pass
    } else {
        MfcqStatus::Fail { norm }
    }
}
