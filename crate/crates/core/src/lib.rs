//! Constrained optimal transport between a finitely supported population of
//! types and a finite set of alternatives.
//!
//! The crate covers the whole pipeline for the discretized problem:
//!
//! * [`model`]: scenario data, validation, marginals and primal feasibility.
//! * [`dual_solver`]: the reduced dual potential `F(p, q)`, its subgradients and
//!   projected subgradient minimization over `R^k_+ x R^l`.
//! * [`lp_oracle`]: a dense two-phase simplex used as ground truth.
//! * [`primal_recovery`]: optimal couplings from prices via active arcs, and
//!   duality / complementary-slackness reports.
//! * [`market`]: the indivisible-goods economy (bundles, demand, tatonnement,
//!   equilibrium checks) and the exact dyadic non-compactness example.
//! * [`scenario`]: JSON scenario files and seeded random generators.

// `!(x > 0.0)` style checks are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod dual_solver;
pub mod error;
pub mod lp_oracle;
pub mod market;
pub mod model;
pub mod primal_recovery;
pub mod scenario;

pub use dual_solver::{
    indirect_utility, minimize_potential, potential, price_box, project_to_box, subgradient, DualSolution,
    IndirectUtilityRow, PriceBox, PricePair, SolverOptions, StepRule, TieRule,
};
pub use error::{Error, Result};
pub use lp_oracle::{
    feasibility_on_face, feasibility_on_support, solve_discretized_primal, solve_lp, LpSolution, LpStatus,
    PrimalSolution, StandardFormLp,
};
pub use market::{
    aww_surplus, demand, dyadic_allocation, dyadic_l1_distance, enumerate_bundles, extract_allocation, tatonnement,
    verify_equilibrium, AllocationLottery, DyadicAllocation, EquilibriumReport, GoodsEconomy, IncidenceMatrix,
};
pub use model::{
    check_primal_feasibility, coupling_surplus, marginals, validate_scenario, AlternativeSet, ConstraintSystem,
    Coupling, FeasibilityReport, SurplusMatrix, TypeCloud, ValidatedModel,
};
pub use primal_recovery::{
    active_arcs, duality_report, duality_report_with_tol, recover_primal, DualityReport, Recovery, DEFAULT_EPS_SCHEDULE,
};
pub use scenario::Scenario;
