//! The convex reweighted subproblem
//!
//! ```text
//! min ‖ω ∘ G(x)‖₁   s.t.   A_k x − u = b_k,   ‖u‖² ≤ σ_k
//! ```
//!
//! and the proximal ADMM that solves it inexactly. Each sweep is
//!
//! 1. `x ← prox_{ω/ρ}(v)` group-wise, with
//!    `v = x − (β/ρ) A_kᵀ(A_k x − b_k − u − z/β)`;
//! 2. `u ← Proj_{‖u‖ ≤ √σ_k}(A_k x − b_k − z/β)`;
//! 3. `z ← z − rβ (A_k x − b_k − u)`.
//!
//! The sweep stops once three criteria hold: the Bregman size of a certified
//! element of `∂(ω∘G)(x) + A_kᵀ N_U(u)` is at most `ε_k`, the primal residual
//! is at most `ε_k`, and the retracted point does not increase the weighted
//! norm by more than `μ_k`.

use ndarray::{Array1, Array2, ArrayView1, Zip};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::linalg;
use crate::model::{self, Bregman, GroupPartition, Problem};
use crate::outer::retract_given_residual;
use crate::prox;

/// Slack on the anchor feasibility test.
pub const FEASIBILITY_SLACK: f64 = 1e-10;

/// `ρ = L̄β` uses `r = 0.99·(1 + √5)/2` by default.
pub const DEFAULT_DUAL_STEP: f64 = 0.99 * 1.618_033_988_749_895;

/// `u` is treated as on the boundary of `U^k` when `‖u‖² ≥ σ_k(1 − 1e−8)`.
const BOUNDARY_REL_TOL: f64 = 1e-8;

/// How often the incrementally updated `A_kᵀz` is recomputed from scratch.
const REFRESH_EVERY: usize = 1000;

/// Data of one reweighted subproblem, built around the anchor `x^k`.
#[derive(Debug, Clone)]
pub struct SubproblemData {
    /// `ω = Ψ′₊(x^k_G)`.
    pub weights: Array1<f64>,
    /// `A_k = Diag(υ) A`.
    pub a_k: Array2<f64>,
    /// `b_k = υ ∘ b`.
    pub b_k: Array1<f64>,
    pub sigma_k: f64,
    /// Upper bound on `λ_max(A_kᵀA_k)`.
    pub l_bar: f64,
    pub anchor: Array1<f64>,
    /// A point with `A_k x = b_k`; the retraction pulls toward it.
    pub slater: Array1<f64>,
    pub partition: GroupPartition,
}

impl SubproblemData {
    /// Assembles subproblem data directly. `l_bar` is computed as
    /// `λ_max(A_kᵀA_k)`; `slater` must satisfy `A_k·slater = b_k`.
    pub fn new(
        weights: Array1<f64>,
        a_k: Array2<f64>,
        b_k: Array1<f64>,
        sigma_k: f64,
        anchor: Array1<f64>,
        slater: Array1<f64>,
        partition: GroupPartition,
    ) -> Result<Self> {
        let (m, n) = a_k.dim();
        for (what, expected, found) in [
            ("weights", partition.num_groups(), weights.len()),
            ("b_k", m, b_k.len()),
            ("anchor", n, anchor.len()),
            ("slater point", n, slater.len()),
            ("partition", n, partition.dim()),
        ] {
            if expected != found {
                return Err(Error::Dimension { what, expected, found });
            }
        }
        if weights.iter().any(|&w| !(w > 0.0)) {
            return Err(Error::InvalidParameter("weights must be positive".into()));
        }
        if !(sigma_k > 0.0) {
            return Err(Error::Invariant(format!("sigma_k = {sigma_k:e} is not positive")));
        }
        let l_bar = linalg::lambda_max_ata(a_k.view(), 1e-12, 10_000);
        Ok(Self { weights, a_k, b_k, sigma_k, l_bar, anchor, slater, partition })
    }

    pub fn rows(&self) -> usize {
        self.a_k.nrows()
    }

    pub fn cols(&self) -> usize {
        self.a_k.ncols()
    }

    /// `A_k x − b_k`.
    pub fn residual(&self, x: ArrayView1<f64>) -> Array1<f64> {
        self.a_k.dot(&x) - &self.b_k
    }

    /// `‖ω ∘ G(x)‖₁`.
    pub fn weighted_norm(&self, x: ArrayView1<f64>) -> f64 {
        self.partition
            .norms(x)
            .iter()
            .zip(self.weights.iter())
            .map(|(t, w)| t * w)
            .sum()
    }

    pub fn anchor_weighted_norm(&self) -> f64 {
        self.weighted_norm(self.anchor.view())
    }
}

/// Builds the subproblem at a feasible anchor `x_k`.
pub fn build_subproblem(prob: &Problem, x_k: ArrayView1<f64>) -> Result<SubproblemData> {
    if x_k.len() != prob.cols() {
        return Err(Error::Dimension { what: "anchor", expected: prob.cols(), found: x_k.len() });
    }
    let phi = prob.phi();
    let y = prob.residual(x_k);
    let loss = model::loss_sum(y.view(), phi);
    if loss > prob.sigma() + FEASIBILITY_SLACK {
        return Err(Error::InfeasibleAnchor { value: loss, sigma: prob.sigma() });
    }
    let slopes = y.mapv(|yi| phi.rderiv(yi * yi));
    let upsilon = slopes.mapv(f64::sqrt);
    let a_k = linalg::scale_rows(prob.a(), upsilon.view());
    let b_k = &upsilon * &prob.b();
    let scaled = &upsilon * &y;
    // Concavity gives σ_k ≤ σ; the clamp only removes rounding.
    let sigma_k = (prob.sigma() + scaled.dot(&scaled) - loss).min(prob.sigma());
    if !(sigma_k > 0.0) {
        return Err(Error::Invariant(format!("sigma_k = {sigma_k:e} is not positive")));
    }
    let max_slope = slopes.iter().cloned().fold(0.0, f64::max);
    let l_bar = max_slope * prob.lambda_max_ata();
    Ok(SubproblemData {
        weights: model::weights(x_k, prob),
        a_k,
        b_k,
        sigma_k,
        l_bar,
        anchor: x_k.to_owned(),
        slater: prob.slater_point().to_owned(),
        partition: prob.partition().clone(),
    })
}

/// Step sizes and tolerances of one inner solve.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct AdmmParams {
    pub beta: f64,
    /// Dual step factor, in `(0, (1 + √5)/2)`.
    pub r: f64,
    pub rho: f64,
    pub max_inner: usize,
    pub eps_k: f64,
    pub mu_k: f64,
}

impl AdmmParams {
    /// `β = L̄^{-1/2}`, `ρ = L̄β`, `r = 0.99(1 + √5)/2`.
    pub fn for_subproblem(sub: &SubproblemData, eps_k: f64, mu_k: f64, max_inner: usize) -> Result<Self> {
        if !(sub.l_bar > 0.0) {
            return Err(Error::Invariant(format!("L_bar = {:e} is not positive", sub.l_bar)));
        }
        let beta = sub.l_bar.powf(-0.5);
        let params = Self { beta, r: DEFAULT_DUAL_STEP, rho: sub.l_bar * beta, max_inner, eps_k, mu_k };
        params.validate(sub)?;
        Ok(params)
    }

    pub fn validate(&self, sub: &SubproblemData) -> Result<()> {
        let golden = 0.5 * (1.0 + 5f64.sqrt());
        if !(self.beta > 0.0 && self.rho > 0.0) {
            return Err(Error::InvalidParameter("beta and rho must be positive".into()));
        }
        if !(self.r > 0.0 && self.r < golden) {
            return Err(Error::InvalidParameter(format!("r = {} outside (0, {golden})", self.r)));
        }
        let bound = sub.sigma_k.min(sub.sigma_k.sqrt());
        if !(self.eps_k > 0.0 && self.eps_k <= bound * (1.0 + 1e-12)) {
            return Err(Error::InvalidParameter(format!(
                "eps_k = {:e} outside (0, min(sigma_k, sqrt(sigma_k)) = {bound:e}]",
                self.eps_k
            )));
        }
        if !(self.mu_k > 0.0) {
            return Err(Error::InvalidParameter("mu_k must be positive".into()));
        }
        Ok(())
    }
}

/// Inner iterate `(x, u, z)` and its sweep counter.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AdmmState {
    pub x: Array1<f64>,
    pub u: Array1<f64>,
    pub z: Array1<f64>,
    pub iter: usize,
}

impl AdmmState {
    /// `(x^k, Proj(A_k x^k − b_k), z)` with `z` carried over or zero.
    pub fn warm_start(sub: &SubproblemData, z: Option<Array1<f64>>) -> Self {
        let u = prox::project_ball(sub.residual(sub.anchor.view()).view(), sub.sigma_k.sqrt());
        let z = match z {
            Some(z) if z.len() == sub.rows() => z,
            _ => Array1::zeros(sub.rows()),
        };
        Self { x: sub.anchor.clone(), u, z, iter: 0 }
    }
}

fn group_prox_into(v: &Array1<f64>, sub: &SubproblemData, rho: f64) -> Array1<f64> {
    let mut out = Array1::zeros(v.len());
    for (i, group) in sub.partition.groups().iter().enumerate() {
        let threshold = sub.weights[i] / rho;
        let norm = group.iter().map(|&j| v[j] * v[j]).sum::<f64>().sqrt();
        if norm > threshold {
            let shrink = 1.0 - threshold / norm;
            for &j in group {
                out[j] = shrink * v[j];
            }
        }
    }
    out
}

/// The linearized `x`-step: group soft-thresholding of
/// `v = x − (β/ρ) A_kᵀ(A_k x − b_k − u − z/β)` at thresholds `ωᵢ/ρ`.
pub fn x_update(state: &AdmmState, sub: &SubproblemData, params: &AdmmParams) -> Array1<f64> {
    let inner = sub.residual(state.x.view()) - &state.u - &(&state.z / params.beta);
    let v = &state.x - &(sub.a_k.t().dot(&inner) * (params.beta / params.rho));
    group_prox_into(&v, sub, params.rho)
}

/// `u = √σ_k·w / max{√σ_k, ‖w‖}` with `w = A_k x − b_k − z/β`, using the
/// already updated `x` in `state`.
pub fn u_update(state: &AdmmState, sub: &SubproblemData, params: &AdmmParams) -> Array1<f64> {
    let w = sub.residual(state.x.view()) - &(&state.z / params.beta);
    prox::project_ball(w.view(), sub.sigma_k.sqrt())
}

/// `z − rβ(A_k x − b_k − u)` with `x`, `u` already updated in `state`.
pub fn z_update(state: &AdmmState, sub: &SubproblemData, params: &AdmmParams) -> Array1<f64> {
    let res = sub.residual(state.x.view()) - &state.u;
    &state.z - &(res * (params.r * params.beta))
}

/// One full `x → u → z` sweep using the reference update formulas.
pub fn sweep(state: &AdmmState, sub: &SubproblemData, params: &AdmmParams) -> AdmmState {
    let mut next = state.clone();
    next.x = x_update(&next, sub, params);
    next.u = u_update(&next, sub, params);
    next.z = z_update(&next, sub, params);
    next.iter += 1;
    next
}

/// Outcome of testing the three inexactness criteria at one inner iterate.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TerminationCheck {
    pub crit1: bool,
    pub crit2: bool,
    pub crit3: bool,
    /// Certified element of `∂(ω∘G)(x) + A_kᵀ N_U(u)`.
    #[serde(skip)]
    pub member: Array1<f64>,
    /// `D_f(member, 0)`.
    pub bregman_gap: f64,
    /// `‖A_k x − b_k − u‖`.
    pub primal_residual: f64,
    /// `‖ω ∘ G(P_k(x))‖₁`.
    pub retracted_weighted_norm: f64,
    /// `‖ω ∘ x^k_G‖₁`.
    pub anchor_weighted_norm: f64,
}

/// Evaluates the criteria at `curr`, which must be one sweep after `prev`.
///
/// The member vector is `−βA_kᵀ(u⁺ − u) − (ρI − βA_kᵀA_k)(x⁺ − x)`.
pub fn check_termination(
    prev: &AdmmState,
    curr: &AdmmState,
    sub: &SubproblemData,
    params: &AdmmParams,
    bregman: &dyn Bregman,
    retractor: impl Fn(ArrayView1<f64>) -> Array1<f64>,
) -> TerminationCheck {
    let dx = &curr.x - &prev.x;
    let du = &curr.u - &prev.u;
    let adx = sub.a_k.dot(&dx);
    let member = -(sub.a_k.t().dot(&(&du - &adx)) * params.beta) - &dx * params.rho;
    let zero = Array1::zeros(member.len());
    let bregman_gap = bregman.distance(member.view(), zero.view());
    let res = sub.residual(curr.x.view()) - &curr.u;
    let primal_residual = linalg::norm(res.view());
    let retracted = retractor(curr.x.view());
    let retracted_weighted_norm = sub.weighted_norm(retracted.view());
    let anchor_weighted_norm = sub.anchor_weighted_norm();
    TerminationCheck {
        crit1: bregman_gap <= params.eps_k,
        crit2: primal_residual <= params.eps_k,
        crit3: retracted_weighted_norm <= anchor_weighted_norm + params.mu_k,
        member,
        bregman_gap,
        primal_residual,
        retracted_weighted_norm,
        anchor_weighted_norm,
    }
}

/// What an inner solve returns.
#[derive(Debug, Clone, Serialize)]
pub struct SubproblemSolution {
    pub x: Array1<f64>,
    pub u: Array1<f64>,
    pub z: Array1<f64>,
    /// Normal-cone multiplier estimate for `‖u‖² ≤ σ_k`.
    pub lambda_tilde: f64,
    pub inner_iters: usize,
    pub check: TerminationCheck,
    /// `P_k(x)`.
    #[serde(skip)]
    pub retracted: Array1<f64>,
}

/// Per-sweep view handed to an observer.
#[derive(Debug)]
pub struct InnerStep<'a> {
    pub prev: &'a AdmmState,
    pub curr: &'a AdmmState,
    /// `A_k x⁺ − b_k − u⁺`.
    pub residual: &'a Array1<f64>,
    /// Certified member vector of the first criterion.
    pub member: &'a Array1<f64>,
    pub bregman_gap: f64,
}

pub fn solve_subproblem(
    sub: &SubproblemData,
    params: &AdmmParams,
    warm: AdmmState,
    bregman: &dyn Bregman,
) -> Result<SubproblemSolution> {
    solve_subproblem_observed(sub, params, warm, bregman, &mut |_: &InnerStep<'_>| {})
}

/// Runs the proximal ADMM from `warm` until all three criteria hold.
///
/// The loop keeps `A_k x`, `A_kᵀz` and `A_kᵀ(A_k x − b_k − u)` current so that
/// a sweep costs two matrix-vector products. The member vector is assembled
/// as `ρ(v − x⁺) + A_kᵀ(−z + β(A_k x⁺ − b_k − u⁺))`: the first term lies in
/// `ω∘∂G(x⁺)` by the prox optimality condition and the second in
/// `A_kᵀN_U(u⁺)` by the projection optimality condition. Algebraically it is
/// the same vector as in [`check_termination`].
pub fn solve_subproblem_observed(
    sub: &SubproblemData,
    params: &AdmmParams,
    warm: AdmmState,
    bregman: &dyn Bregman,
    observer: &mut dyn FnMut(&InnerStep<'_>),
) -> Result<SubproblemSolution> {
    params.validate(sub)?;
    let (m, n) = sub.a_k.dim();
    if warm.x.len() != n || warm.u.len() != m || warm.z.len() != m {
        return Err(Error::Dimension { what: "warm start", expected: n, found: warm.x.len() });
    }
    let (beta, rho, r) = (params.beta, params.rho, params.r);
    let radius = sub.sigma_k.sqrt();
    let anchor_norm = sub.anchor_weighted_norm();
    let at = sub.a_k.t();
    let zero_n = Array1::<f64>::zeros(n);

    let mut state = warm;
    let ax0 = sub.a_k.dot(&state.x);
    let mut at_res = at.dot(&(&ax0 - &sub.b_k - &state.u));
    let mut atz = at.dot(&state.z);
    let start_iter = state.iter;

    loop {
        // x-step
        let mut v = &at_res - &(&atz / beta);
        v.zip_mut_with(&state.x, |vi, &xi| *vi = xi - (beta / rho) * *vi);
        let x_new = group_prox_into(&v, sub, rho);
        let ax_new = sub.a_k.dot(&x_new);

        // u-step
        let mut w = &ax_new - &sub.b_k;
        let fit = w.clone();
        w.scaled_add(-1.0 / beta, &state.z);
        let u_new = prox::project_ball(w.view(), radius);

        // residual, member, z-step
        let res = &fit - &u_new;
        let at_res_new = at.dot(&res);
        let mut member = (&v - &x_new) * rho;
        Zip::from(&mut member)
            .and(&at_res_new)
            .and(&atz)
            .for_each(|mi, &ar, &az| *mi += beta * ar - az);
        let d = &res * beta - &state.z;
        let z_new = &state.z - &(&res * (r * beta));
        atz.scaled_add(-r * beta, &at_res_new);

        let next = AdmmState { x: x_new, u: u_new, z: z_new, iter: state.iter + 1 };
        if (next.iter - start_iter).is_multiple_of(REFRESH_EVERY) {
            atz = at.dot(&next.z);
        }

        let bregman_gap = bregman.distance(member.view(), zero_n.view());
        let primal_residual = linalg::norm(res.view());
        observer(&InnerStep { prev: &state, curr: &next, residual: &res, member: &member, bregman_gap });

        let crit1 = bregman_gap <= params.eps_k;
        let crit2 = primal_residual <= params.eps_k;
        let exhausted = next.iter - start_iter >= params.max_inner;
        if (crit1 && crit2) || exhausted {
            let fit_norm = linalg::norm(fit.view());
            let retracted = retract_given_residual(next.x.view(), fit_norm, sub);
            let retracted_weighted_norm = sub.weighted_norm(retracted.view());
            let crit3 = retracted_weighted_norm <= anchor_norm + params.mu_k;
            if (crit1 && crit2 && crit3) || exhausted {
                let lambda_tilde = multiplier_estimate(&d, &next.u, sub.sigma_k);
                let inner_iters = next.iter - start_iter;
                let solution = SubproblemSolution {
                    x: next.x,
                    u: next.u,
                    z: next.z,
                    lambda_tilde,
                    inner_iters,
                    check: TerminationCheck {
                        crit1,
                        crit2,
                        crit3,
                        member,
                        bregman_gap,
                        primal_residual,
                        retracted_weighted_norm,
                        anchor_weighted_norm: anchor_norm,
                    },
                    retracted,
                };
                if crit1 && crit2 && crit3 {
                    return Ok(solution);
                }
                return Err(Error::InnerExhausted { iters: inner_iters, best: Box::new(solution) });
            }
        }

        state = next;
        at_res = at_res_new;
    }
}

/// `λ̃ = max{0, ⟨d, u⟩/‖u‖²}` on the boundary of `U^k`, zero inside, where
/// `d ∈ N_U(u)` comes from the projection step.
pub fn multiplier_estimate(d: &Array1<f64>, u: &Array1<f64>, sigma_k: f64) -> f64 {
    let uu = u.dot(u);
    if uu >= sigma_k * (1.0 - BOUNDARY_REL_TOL) && uu > 0.0 {
        (d.dot(u) / uu).max(0.0)
    } else {
        0.0
    }
}
