//! Group-sparse recovery under a concave loss constraint:
//!
//! ```text
//! min Σ ψ(‖x_Gi‖)   s.t.   Σ φ((aᵢᵀx − bᵢ)²) ≤ σ
//! ```
//!
//! solved by a doubly iteratively reweighted outer loop ([`ir_solve`]) whose
//! convex subproblems go to a proximal ADMM ([`solve_subproblem`]). Every
//! outer iterate is feasible. [`kkt_report`] measures first-order
//! stationarity of a point, and [`bench`] generates synthetic recovery
//! instances and runs batches of them.
//!
//! ```
//! use irgroup::{bench, ir_solve, IrParams, InstanceSpec};
//!
//! let spec = InstanceSpec { seed: 1, ..InstanceSpec::new(20, 64, 3) };
//! let inst = bench::generate_instance(&spec).unwrap();
//! let report = ir_solve(&inst.problem, &IrParams::default()).unwrap();
//! assert!(report.constraint_value <= inst.problem.sigma());
//! ```

pub mod bench;
pub mod error;
pub mod io;
pub mod kkt;
pub mod linalg;
pub mod model;
pub mod outer;
pub mod prox;
pub mod subproblem;

pub use bench::{generate_instance, recovery_metrics, run_experiment, InstanceSpec, LossKind, NoiseKind};
pub use error::{Error, PartitionViolation, Result};
pub use kkt::{constraint_gradient, kkt_report, mfcq_boundary_check, stationarity_residual, KktResidual, MfcqStatus};
pub use model::{
    constraint_value, group_norms, min_norm_solution, objective_value, validate_partition, weights, Bregman,
    ConcaveFn, GroupPartition, Problem, SquaredEuclidean,
};
pub use outer::{ir_solve, retract, IrParams, OuterRecord, Schedule, SolveReport, SolveStatus};
pub use prox::{
    group_soft_threshold, project_ball, prox_capped_log_group, prox_capped_log_scalar, prox_log_scalar,
    CappedLogSpec,
};
pub use subproblem::{
    build_subproblem, check_termination, solve_subproblem, AdmmParams, AdmmState, SubproblemData,
    SubproblemSolution, TerminationCheck,
};

#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/intro.md")]
    mod intro {}
    #[doc = include_str!("../../../book/src/model.md")]
    mod model {}
    #[doc = include_str!("../../../book/src/prox.md")]
    mod prox {}
    #[doc = include_str!("../../../book/src/subproblem.md")]
    mod subproblem {}
    #[doc = include_str!("../../../book/src/outer.md")]
    mod outer {}
    #[doc = include_str!("../../../book/src/kkt.md")]
    mod kkt {}
    #[doc = include_str!("../../../book/src/bench.md")]
    mod bench {}
}
