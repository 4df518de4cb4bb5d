//! Optimal couplings from (near-)optimal prices, and the report that
//! certifies a coupling/price pair.
//!
//! At optimal prices every optimal coupling lives on the active arcs, the
//! pairs `(i, x)` whose net payoff attains `u_{p,q}(t_i)`, and every
//! inequality row with a positive price binds. Recovery solves a feasibility
//! LP restricted to that face, widening the tolerance when the prices are
//! inexact.

use serde::Serialize;

use crate::dual_solver::{potential, PricePair};
use crate::error::{Error, Result};
use crate::lp_oracle::feasibility_on_face;
use crate::model::{
    check_primal_feasibility, coupling_surplus, marginals, Coupling, FeasibilityReport, ValidatedModel,
};

pub const DEFAULT_EPS_SCHEDULE: [f64; 4] = [1e-9, 1e-7, 1e-5, 1e-3];

/// Feasibility tolerance used by [`duality_report`].
pub const REPORT_FEASIBILITY_TOL: f64 = 1e-8;

/// Couplings entries at or below this mass are not counted as support.
pub const SUPPORT_MASS_TOL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DualityReport {
    pub primal_value: f64,
    pub dual_value: f64,
    pub gap: f64,
    pub cs_ineq_residual: f64,
    pub support_residual: f64,
    pub feasibility: FeasibilityReport,
}

impl DualityReport {
    /// Zero gap up to `gap_tol` and a feasible coupling.
    pub fn certifies(&self, gap_tol: f64) -> bool {
        self.gap.abs() <= gap_tol && self.feasibility.feasible
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Recovery {
    pub coupling: Coupling,
    /// The schedule entry that produced a feasible support.
    pub eps: f64,
}

fn net_rows(model: &ValidatedModel, prices: &PricePair) -> Result<Vec<Vec<f64>>> {
    // `potential` validates the prices against the model and K.
    potential(model, prices)?;
    let stacked = prices.stacked();
    Ok((0..model.n_points())
        .map(|i| {
            (0..model.n_alts())
                .map(|x| {
                    let cost: f64 = model.cost_column(x).iter().zip(&stacked).map(|(c, v)| c * v).sum();
                    model.surplus()[[i, x]] - cost
                })
                .collect()
        })
        .collect())
}

/// `{(i, x) : Φ(t_i, x) − c_x·(p, q) ≥ u_{p,q}(t_i) − eps}`, row-major.
pub fn active_arcs(model: &ValidatedModel, prices: &PricePair, eps: f64) -> Result<Vec<(usize, usize)>> {
    if !(eps >= 0.0) {
        return Err(Error::InvalidOption(format!("eps must be nonnegative, got {eps}")));
    }
    let rows = net_rows(model, prices)?;
    let mut arcs = Vec::new();
    for (i, row) in rows.iter().enumerate() {
        let u = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        arcs.extend(
            row.iter()
                .enumerate()
                .filter(|(_, v)| **v >= u - eps)
                .map(|(x, _)| (i, x)),
        );
    }
    Ok(arcs)
}

/// Tries each `eps` in turn and returns the first coupling supported on the
/// `eps`-active arcs whose inequality rows with `p_j > eps` hold at equality.
pub fn recover_primal(model: &ValidatedModel, prices: &PricePair, eps_schedule: &[f64]) -> Result<Recovery> {
    if eps_schedule.is_empty() {
        return Err(Error::InvalidOption("eps schedule is empty".into()));
    }
    if eps_schedule.windows(2).any(|w| !(w[0] < w[1])) {
        return Err(Error::InvalidOption("eps schedule must be strictly increasing".into()));
    }
    for &eps in eps_schedule {
        let support = active_arcs(model, prices, eps)?;
        let binding: Vec<usize> = (0..prices.p.len()).filter(|j| prices.p[*j] > eps).collect();
        match feasibility_on_face(model, &support, &binding) {
            Ok(coupling) => return Ok(Recovery { coupling, eps }),
            Err(Error::Infeasible) => continue,
            Err(e) => return Err(e),
        }
    }
    Err(Error::RecoveryFailed)
}

pub fn duality_report(model: &ValidatedModel, coupling: &Coupling, prices: &PricePair) -> Result<DualityReport> {
    duality_report_with_tol(model, coupling, prices, REPORT_FEASIBILITY_TOL)
}

pub fn duality_report_with_tol(
    model: &ValidatedModel,
    coupling: &Coupling,
    prices: &PricePair,
    feasibility_tol: f64,
) -> Result<DualityReport> {
    let primal_value = coupling_surplus(coupling, model)?;
    let dual_value = potential(model, prices)?;
    let feasibility = check_primal_feasibility(coupling, model, feasibility_tol)?;

    let (_, alt_marginal) = marginals(coupling, model)?;
    let cons = model.constraints();
    let cs_ineq_residual = (0..cons.n_ineq())
        .map(|j| {
            let lhs: f64 = cons
                .ineq_matrix
                .row(j)
                .iter()
                .zip(&alt_marginal)
                .map(|(a, m)| a * m)
                .sum();
            (prices.p[j] * (cons.ineq_rhs[j] - lhs)).abs()
        })
        .fold(0.0, f64::max);

    let rows = net_rows(model, prices)?;
    let mut support_residual = 0.0_f64;
    for (i, row) in rows.iter().enumerate() {
        let u = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        for (x, net) in row.iter().enumerate() {
            if coupling.mass[[i, x]] > SUPPORT_MASS_TOL {
                support_residual = support_residual.max(u - net);
            }
        }
    }

    Ok(DualityReport {
        primal_value,
        dual_value,
        gap: dual_value - primal_value,
        cs_ineq_residual,
        support_residual,
        feasibility,
    })
}
