//! The outer reweighting loop.
//!
//! Starting from `x⁰ = A†b`, each outer step linearizes both the penalty and
//! the loss at `x^k`, solves the resulting weighted subproblem inexactly with
//! the proximal ADMM, and retracts the result toward `A†b` so that every
//! iterate stays feasible.

use std::sync::Arc;

use ndarray::{Array1, ArrayView1};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::kkt::{self, KktResidual};
use crate::linalg;
use crate::model::{self, Bregman, Problem, SquaredEuclidean};
use crate::subproblem::{
    self, AdmmParams, AdmmState, InnerStep, SubproblemData, SubproblemSolution,
};

/// `k ↦ max{ratio^{−(k+1)}, floor}`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Schedule {
    pub ratio: f64,
    pub floor: f64,
}

impl Schedule {
    pub const fn geometric(ratio: f64, floor: f64) -> Self {
        Self { ratio, floor }
    }

    pub fn at(&self, k: usize) -> f64 {
        self.ratio.powf(-(k as f64 + 1.0)).max(self.floor)
    }
}

/// Outer-loop configuration.
#[derive(Debug, Clone)]
pub struct IrParams {
    /// Diminishing sequence bounding the inner tolerance.
    pub tau: Schedule,
    /// Allowed increase of the weighted norm per outer step.
    pub mu: Schedule,
    /// Stop when `‖x^{k+1} − x^k‖ / max{‖x^k‖, 1}` falls to this value.
    pub outer_tol: f64,
    pub max_outer: usize,
    pub max_inner: usize,
    /// `ε_k = eps_scale · min{σ_k, √σ_k, τ_k}`; must lie in `(0, 1]`.
    pub eps_scale: f64,
    pub bregman: Arc<dyn Bregman>,
    /// Keep per-sweep inner records in the report.
    pub record_inner: bool,
}

impl Default for IrParams {
    fn default() -> Self {
        Self {
            tau: Schedule::geometric(5.0, 1e-8),
            mu: Schedule::geometric(1.2, 1e-8),
            outer_tol: 1e-4,
            max_outer: 1000,
            max_inner: 50_000,
            eps_scale: 1.0,
            bregman: Arc::new(SquaredEuclidean),
            record_inner: false,
        }
    }
}

impl IrParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.eps_scale > 0.0 && self.eps_scale <= 1.0) {
            return Err(Error::InvalidParameter(format!("eps_scale = {} outside (0, 1]", self.eps_scale)));
        }
        if !(self.outer_tol > 0.0) || self.max_outer == 0 || self.max_inner == 0 {
            return Err(Error::InvalidParameter("outer_tol, max_outer and max_inner must be positive".into()));
        }
        for s in [self.tau, self.mu] {
            if !(s.ratio > 1.0 && s.floor > 0.0) {
                return Err(Error::InvalidParameter(format!("schedule {s:?} must have ratio > 1 and floor > 0")));
            }
        }
        Ok(())
    }
}

/// One outer iteration as logged.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OuterRecord {
    pub k: usize,
    /// `Ψ(x^k_G)`.
    pub objective: f64,
    /// `Φ((Ax^k − b)∘(Ax^k − b))`.
    pub constraint: f64,
    pub sigma_k: f64,
    pub eps_k: f64,
    pub mu_k: f64,
    pub inner_iters: usize,
    pub lambda_tilde: f64,
    /// `‖x^{k+1} − x^k‖ / max{‖x^k‖, 1}`.
    pub rel_step: f64,
    /// `‖x^{k+1} − x̃^{k+1}‖`.
    pub retraction_dist: f64,
    pub objective_next: f64,
    pub constraint_next: f64,
    pub bregman_gap: f64,
    pub primal_residual: f64,
    pub retracted_weighted_norm: f64,
    pub anchor_weighted_norm: f64,
    /// The inner solver hit its cap at this step.
    pub degraded: bool,
}

/// Per-sweep inner record, kept only when requested.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct InnerRecord {
    pub k: usize,
    pub l: usize,
    pub bregman_gap: f64,
    pub primal_residual: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum SolveStatus {
    Converged,
    MaxOuter,
    /// At least one inner solve exhausted its budget.
    Degraded,
}

#[derive(Debug, Clone, Serialize)]
pub struct SolveReport {
    #[serde(skip)]
    pub x: Array1<f64>,
    pub status: SolveStatus,
    pub fval: f64,
    pub constraint_value: f64,
    /// `(Φ − σ)/σ`.
    pub res: f64,
    pub outer_iters: usize,
    pub total_inner_iters: usize,
    pub lambda_tilde: f64,
    pub kkt: KktResidual,
    pub trace: Vec<OuterRecord>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub inner_trace: Vec<InnerRecord>,
}

impl SolveReport {
    /// JSON form; `final_x` is included only when `emit_x` is set.
    pub fn to_json(&self, emit_x: bool) -> serde_json::Value {
        let mut value = serde_json::to_value(self).expect("report serializes");
        if emit_x {
            value["final_x"] = serde_json::Value::from(self.x.to_vec());
        }
        value
    }
}

/// Relative margin by which a retracted point stays inside `{‖A_k x − b_k‖ ≤ √σ_k}`,
/// so that rounding cannot put it outside the feasible set.
pub const RETRACT_MARGIN: f64 = 1e-12;

/// `P_k`: identity on `{‖A_k x − b_k‖² ≤ σ_k}`, otherwise the point on the
/// segment from `A†b` to `x` where the constraint becomes active.
pub fn retract(x: ArrayView1<f64>, sub: &SubproblemData) -> Array1<f64> {
    let fit = linalg::norm(sub.residual(x).view());
    retract_given_residual(x, fit, sub)
}

/// [`retract`] with `‖A_k x − b_k‖` already known.
pub(crate) fn retract_given_residual(x: ArrayView1<f64>, fit_norm: f64, sub: &SubproblemData) -> Array1<f64> {
    let radius = sub.sigma_k.sqrt();
    if fit_norm * fit_norm <= sub.sigma_k {
        return x.to_owned();
    }
    let theta = radius / fit_norm * (1.0 - RETRACT_MARGIN);
    let mut out = &sub.slater * (1.0 - theta);
    out.scaled_add(theta, &x);
    out
}

/// Runs the outer loop from `A†b` until the relative step drops to
/// `outer_tol` or `max_outer` is reached.
///
/// When an inner solve hits `max_inner`, its retracted point is accepted only
/// if it passes the descent test; otherwise `x^k` is kept. Such steps never
/// count toward convergence and mark the report as degraded.
pub fn ir_solve(prob: &Problem, params: &IrParams) -> Result<SolveReport> {
    params.validate()?;
    let mut x = prob.slater_point().to_owned();
    let mut z: Option<Array1<f64>> = None;
    let mut trace: Vec<OuterRecord> = Vec::new();
    let mut inner_trace = Vec::new();
    let mut total_inner = 0;
    let mut lambda_tilde = 0.0;
    let mut status = SolveStatus::MaxOuter;
    let mut any_degraded = false;

    for k in 0..params.max_outer {
        let abort = |source: Error, trace: &Vec<OuterRecord>| Error::OuterAborted {
            k,
            trace: trace.clone(),
            source: Box::new(source),
        };
        let sub = subproblem::build_subproblem(prob, x.view()).map_err(|e| abort(e, &trace))?;
        let mu_k = params.mu.at(k);
        let eps_k = params.eps_scale * sub.sigma_k.min(sub.sigma_k.sqrt()).min(params.tau.at(k));
        let admm = AdmmParams::for_subproblem(&sub, eps_k, mu_k, params.max_inner).map_err(|e| abort(e, &trace))?;
        let warm = AdmmState::warm_start(&sub, z.take());

        let mut observer = |step: &InnerStep<'_>| {
            if params.record_inner {
                inner_trace.push(InnerRecord {
                    k,
                    l: step.curr.iter,
                    bregman_gap: step.bregman_gap,
                    primal_residual: linalg::norm(step.residual.view()),
                });
            }
        };
        let outcome = subproblem::solve_subproblem_observed(&sub, &admm, warm, params.bregman.as_ref(), &mut observer);
        let (sol, degraded): (SubproblemSolution, bool) = match outcome {
            Ok(sol) => (sol, false),
            Err(Error::InnerExhausted { best, .. }) => (*best, true),
            Err(e) => return Err(abort(e, &trace)),
        };

        // A capped inner solve may not certify descent; keep x^k then.
        let x_next = if !degraded || sol.check.crit3 { sol.retracted.clone() } else { x.clone() };
        let step = linalg::norm((&x_next - &x).view());
        let rel_step = step / linalg::norm(x.view()).max(1.0);
        trace.push(OuterRecord {
            k,
            objective: model::objective_value(x.view(), prob),
            constraint: model::constraint_value(x.view(), prob),
            sigma_k: sub.sigma_k,
            eps_k,
            mu_k,
            inner_iters: sol.inner_iters,
            lambda_tilde: sol.lambda_tilde,
            rel_step,
            retraction_dist: linalg::norm((&x_next - &sol.x).view()),
            objective_next: model::objective_value(x_next.view(), prob),
            constraint_next: model::constraint_value(x_next.view(), prob),
            bregman_gap: sol.check.bregman_gap,
            primal_residual: sol.check.primal_residual,
            retracted_weighted_norm: sol.check.retracted_weighted_norm,
            anchor_weighted_norm: sol.check.anchor_weighted_norm,
            degraded,
        });
        debug_assert!(
            trace.last().unwrap().constraint_next <= prob.sigma() + subproblem::FEASIBILITY_SLACK,
            "iterate left the feasible set"
        );

        total_inner += sol.inner_iters;
        lambda_tilde = sol.lambda_tilde;
        x = x_next;
        z = Some(sol.z);

        any_degraded |= degraded;
        if !degraded && rel_step <= params.outer_tol {
            status = SolveStatus::Converged;
            break;
        }
    }

    if any_degraded {
        status = SolveStatus::Degraded;
    }
    let constraint_value = model::constraint_value(x.view(), prob);
    let kkt = kkt::kkt_report(x.view(), prob, lambda_tilde);
    Ok(SolveReport {
        fval: model::objective_value(x.view(), prob),
        constraint_value,
        res: (constraint_value - prob.sigma()) / prob.sigma(),
        outer_iters: trace.len(),
        total_inner_iters: total_inner,
        lambda_tilde,
        kkt,
        trace,
        inner_trace,
        status,
        x,
    })
}
