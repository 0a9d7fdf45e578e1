//! Closed-form proximal maps and projections.
//!
//! Scalar prox objectives use the `½(u − t)² + λ·penalty(u)` scaling, which
//! has the same minimizer as `penalty(u) + (u − t)²/(2λ)`.

use ndarray::{Array1, ArrayView1};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Capped log penalty: `log(1 + t/ε)` on `[0, ν)`, `C` on `[ν, ∞)`, with
/// `ν = ε(e^C − 1)` so that the two pieces meet continuously.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CappedLogSpec {
    pub eps: f64,
    pub nu: f64,
    #[serde(rename = "C")]
    pub cap: f64,
}

impl CappedLogSpec {
    pub fn new(eps: f64, cap: f64) -> Result<Self> {
        let spec = Self { eps, nu: eps * cap.exp_m1(), cap };
        spec.validate()?;
        Ok(spec)
    }

    /// Cap taken from a feasible point's group norms: `C = Σ log(1 + x̃ᵢ/ε)`.
    /// Any minimizer of the uncapped log objective has all group norms below
    /// the resulting `ν`, so capping does not change the solution set.
    pub fn from_feasible_norms(eps: f64, norms: ArrayView1<f64>) -> Result<Self> {
        let cap = norms.iter().map(|&t| (t / eps).ln_1p()).sum();
        Self::new(eps, cap)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.eps > 0.0 && self.eps.is_finite()) || !(self.cap > 0.0 && self.cap.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "capped log needs eps > 0 and C > 0, got eps={}, C={}",
                self.eps, self.cap
            )));
        }
        let expected = self.eps * self.cap.exp_m1();
        let consistent = if expected.is_infinite() {
            self.nu.is_infinite()
        } else {
            (self.nu - expected).abs() <= 1e-12 * expected.abs()
        };
        if !consistent {
            return Err(Error::InvalidParameter(format!(
                "capped log needs nu = eps(e^C - 1) = {expected:e}, got {:e}",
                self.nu
            )));
        }
        Ok(())
    }

    pub fn eval(&self, t: f64) -> f64 {
        let t = t.abs();
        if t < self.nu {
            (t / self.eps).ln_1p()
        } else {
            self.cap
        }
    }

    /// `f^{C-log}(u) = ½(u − t)² + λ·ψ^CapLog(u)`.
    pub fn prox_objective(&self, u: f64, t: f64, lambda: f64) -> f64 {
        0.5 * (u - t) * (u - t) + lambda * self.eval(u)
    }
}

/// Proximal map of `t‖·‖`: `(1 − t/‖v‖)·v` if `‖v‖ > t`, else 0.
pub fn group_soft_threshold(v: ArrayView1<f64>, t: f64) -> Array1<f64> {
    let norm = v.dot(&v).sqrt();
    if norm > t {
        &v * (1.0 - t / norm)
    } else {
        Array1::zeros(v.len())
    }
}

/// Projection onto `{u : ‖u‖ ≤ radius}`.
pub fn project_ball(v: ArrayView1<f64>, radius: f64) -> Array1<f64> {
    let norm = v.dot(&v).sqrt();
    if norm <= radius {
        v.to_owned()
    } else {
        &v * (radius / norm)
    }
}

/// `½(u − t)² + λ log(1 + u/ε)`.
pub fn log_prox_objective(u: f64, t: f64, lambda: f64, eps: f64) -> f64 {
    0.5 * (u - t) * (u - t) + lambda * (u / eps).ln_1p()
}

/// Global minimizer over `u ≥ 0` of `½(u − t)² + λ log(1 + u/ε)`.
///
/// Stationary points solve `u² + (ε − t)u + (λ − εt) = 0`; the minimizer is
/// the best of `0` and the nonnegative real roots.
pub fn prox_log_scalar(t: f64, lambda: f64, eps: f64) -> f64 {
    let t = t.max(0.0);
    let p = eps - t;
    let q = lambda - eps * t;
    let disc = p * p - 4.0 * q;
    let mut best = 0.0;
    let mut best_val = log_prox_objective(0.0, t, lambda, eps);
    if disc >= 0.0 {
        let sq = disc.sqrt();
        // Stable pair: the larger-magnitude root first, the other via Vieta.
        let big = if p <= 0.0 { (-p + sq) / 2.0 } else { (-p - sq) / 2.0 };
        let small = if big != 0.0 { q / big } else { 0.0 };
        for root in [big, small] {
            if root > 0.0 && root.is_finite() {
                let val = log_prox_objective(root, t, lambda, eps);
                if val < best_val {
                    best = root;
                    best_val = val;
                }
            }
        }
    }
    best
}

/// Scalar prox of the capped log penalty at `t ≥ 0`.
///
/// Compares `u₁ = min{(prox_{λg}(t))₊, ν}` against `u₂ = max{t, ν}` and
/// returns `u₁` on ties.
pub fn prox_capped_log_scalar(t: f64, lambda: f64, spec: &CappedLogSpec) -> f64 {
    let t = t.max(0.0);
    let u1 = prox_log_scalar(t, lambda, spec.eps).max(0.0).min(spec.nu);
    let u2 = t.max(spec.nu);
    if !u2.is_finite() {
        return u1;
    }
    if spec.prox_objective(u1, t, lambda) <= spec.prox_objective(u2, t, lambda) {
        u1
    } else {
        u2
    }
}

/// Prox of `x ↦ ψ^CapLog(‖x‖)`: zero at the origin, otherwise the direction
/// of `x` scaled by the scalar prox of `‖x‖`.
pub fn prox_capped_log_group(x: ArrayView1<f64>, lambda: f64, spec: &CappedLogSpec) -> Array1<f64> {
    let norm = x.dot(&x).sqrt();
    if norm == 0.0 {
        return Array1::zeros(x.len());
    }
    let radius = prox_capped_log_scalar(norm, lambda, spec);
    &x * (radius / norm)
}
