//! Ground-truth solver for the discretized primal.
//!
//! A dense-tableau two-phase simplex with Bland's rule. Every row gets an
//! artificial column that stays in the tableau for the whole solve, so the
//! final artificial columns hold `B⁻¹` and the row duals `c_B·B⁻¹` can be read
//! off directly.

use ndarray::Array2;
use serde::Serialize;

use crate::dual_solver::PricePair;
use crate::error::{Error, Result};
use crate::model::{Coupling, ValidatedModel};

/// Default cap on `|points| · |X|` for [`solve_discretized_primal`].
pub const DEFAULT_VARIABLE_CAP: usize = 20_000;

const PIVOT_TOL: f64 = 1e-11;
const REDUCED_COST_TOL: f64 = 1e-10;
const FEASIBILITY_TOL: f64 = 1e-9;

/// `maximize c·x` s.t. `E x = e`, `G x ≤ h`, `x ≥ 0`.
#[derive(Debug, Clone, PartialEq)]
pub struct StandardFormLp {
    pub objective: Vec<f64>,
    pub eq_matrix: Array2<f64>,
    pub eq_rhs: Vec<f64>,
    pub ineq_matrix: Array2<f64>,
    pub ineq_rhs: Vec<f64>,
}

impl StandardFormLp {
    pub fn n_vars(&self) -> usize {
        self.objective.len()
    }

    fn validate(&self) -> Result<()> {
        let n = self.n_vars();
        let ok = self.eq_matrix.ncols() == n
            && self.ineq_matrix.ncols() == n
            && self.eq_matrix.nrows() == self.eq_rhs.len()
            && self.ineq_matrix.nrows() == self.ineq_rhs.len();
        if !ok {
            return Err(Error::DimensionMismatch(format!(
                "LP with {n} variables: eq {:?}/{}, ineq {:?}/{}",
                self.eq_matrix.dim(),
                self.eq_rhs.len(),
                self.ineq_matrix.dim(),
                self.ineq_rhs.len()
            )));
        }
        let finite = self
            .objective
            .iter()
            .chain(self.eq_matrix.iter())
            .chain(&self.eq_rhs)
            .chain(self.ineq_matrix.iter())
            .chain(&self.ineq_rhs)
            .all(|v| v.is_finite());
        if !finite {
            return Err(Error::NonFiniteEntry("LP data".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum LpStatus {
    Optimal,
    Infeasible,
    Unbounded,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LpSolution {
    pub status: LpStatus,
    pub primal: Vec<f64>,
    pub value: f64,
    /// One multiplier per row: equality rows first, then inequality rows.
    /// Inequality multipliers are nonnegative.
    pub duals: Vec<f64>,
    pub pivots: usize,
}

struct Tableau {
    width: usize,
    rows: usize,
    data: Vec<f64>,
    /// Reduced costs `c_j − c_B B⁻¹ A_j`, plus `−c_B x_B` in the last slot.
    cost: Vec<f64>,
    basis: Vec<usize>,
    pivots: usize,
}

impl Tableau {
    fn at(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.width + c]
    }

    fn rhs(&self, r: usize) -> f64 {
        self.at(r, self.width - 1)
    }

    fn pivot(&mut self, r: usize, col: usize) {
        let w = self.width;
        let piv = self.data[r * w + col];
        for v in &mut self.data[r * w..(r + 1) * w] {
            *v /= piv;
        }
        let (before, rest) = self.data.split_at_mut(r * w);
        let (prow, after) = rest.split_at_mut(w);
        for other in before.chunks_exact_mut(w).chain(after.chunks_exact_mut(w)) {
            let f = other[col];
            if f != 0.0 {
                for (o, p) in other.iter_mut().zip(prow.iter()) {
                    *o -= f * p;
                }
                other[col] = 0.0;
            }
        }
        let f = self.cost[col];
        if f != 0.0 {
            for (o, p) in self.cost.iter_mut().zip(prow.iter()) {
                *o -= f * p;
            }
            self.cost[col] = 0.0;
        }
        self.basis[r] = col;
        self.pivots += 1;
    }

    fn set_costs(&mut self, costs: &[f64]) {
        let w = self.width;
        self.cost = vec![0.0; w];
        self.cost[..costs.len()].copy_from_slice(costs);
        for r in 0..self.rows {
            let cb = costs[self.basis[r]];
            if cb != 0.0 {
                for (o, v) in self.cost.iter_mut().zip(&self.data[r * w..(r + 1) * w]) {
                    *o -= cb * v;
                }
            }
        }
    }

    /// Runs Bland's rule over columns `< n_enter`. Returns `Ok(false)` when
    /// unbounded.
    fn optimize(&mut self, n_enter: usize, max_pivots: usize) -> Result<bool> {
        loop {
            let Some(col) = (0..n_enter).find(|&j| self.cost[j] > REDUCED_COST_TOL) else {
                return Ok(true);
            };
            let mut leave: Option<(usize, f64)> = None;
            let mut tiny = false;
            for r in 0..self.rows {
                let a = self.at(r, col);
                if a > PIVOT_TOL {
                    let ratio = self.rhs(r).max(0.0) / a;
                    leave = match leave {
                        None => Some((r, ratio)),
                        Some((lr, lratio)) => {
                            let tie = (ratio - lratio).abs() <= 1e-12 * (1.0 + lratio.abs());
                            if ratio < lratio && !tie || tie && self.basis[r] < self.basis[lr] {
                                Some((r, ratio))
                            } else {
                                Some((lr, lratio))
                            }
                        }
                    };
                } else if a > 0.0 {
                    tiny = true;
                }
            }
            match leave {
                Some((r, _)) => self.pivot(r, col),
                None if tiny => {
                    return Err(Error::NumericalBreakdown(format!(
                        "column {col} has only pivots below {PIVOT_TOL:e}"
                    )))
                }
                None => return Ok(false),
            }
            if self.pivots > max_pivots {
                return Err(Error::NumericalBreakdown(format!(
                    "no convergence after {max_pivots} pivots"
                )));
            }
        }
    }
}

pub fn solve_lp(lp: &StandardFormLp) -> Result<LpSolution> {
    lp.validate()?;
    let n = lp.n_vars();
    let me = lp.eq_rhs.len();
    let mi = lp.ineq_rhs.len();
    let m = me + mi;
    let slack0 = n;
    let art0 = n + mi;
    let width = n + mi + m + 1;

    let mut data = vec![0.0; m * width];
    let mut sign = vec![1.0; m];
    for r in 0..m {
        let (row, rhs) = if r < me {
            (lp.eq_matrix.row(r), lp.eq_rhs[r])
        } else {
            (lp.ineq_matrix.row(r - me), lp.ineq_rhs[r - me])
        };
        let s = if rhs < 0.0 { -1.0 } else { 1.0 };
        sign[r] = s;
        let base = r * width;
        for (j, v) in row.iter().enumerate() {
            data[base + j] = s * v;
        }
        if r >= me {
            data[base + slack0 + (r - me)] = s;
        }
        data[base + art0 + r] = 1.0;
        data[base + width - 1] = s * rhs;
    }
    let mut t = Tableau {
        width,
        rows: m,
        data,
        cost: Vec::new(),
        basis: (art0..art0 + m).collect(),
        pivots: 0,
    };
    let max_pivots = 50_000 + 200 * (m + width);

    // Phase one: maximize −Σ artificials.
    let mut phase1 = vec![0.0; width - 1];
    phase1[art0..].iter_mut().for_each(|c| *c = -1.0);
    t.set_costs(&phase1);
    t.optimize(art0, max_pivots)?;
    let infeasibility: f64 = (0..m).filter(|&r| t.basis[r] >= art0).map(|r| t.rhs(r).abs()).sum();
    let scale = 1.0
        + lp.eq_rhs
            .iter()
            .chain(&lp.ineq_rhs)
            .fold(0.0_f64, |a, v| a.max(v.abs()));
    if infeasibility > FEASIBILITY_TOL * scale {
        return Ok(LpSolution {
            status: LpStatus::Infeasible,
            primal: vec![],
            value: f64::NAN,
            duals: vec![],
            pivots: t.pivots,
        });
    }
    // Drive remaining artificials out of the basis; rows where that is
    // impossible are redundant and keep their artificial at zero.
    for r in 0..m {
        if t.basis[r] >= art0 {
            if let Some(col) = (0..art0).find(|&j| t.at(r, j).abs() > 1e-9) {
                t.pivot(r, col);
            }
        }
    }

    let mut phase2 = vec![0.0; width - 1];
    phase2[..n].copy_from_slice(&lp.objective);
    t.set_costs(&phase2);
    if !t.optimize(art0, max_pivots)? {
        return Ok(LpSolution {
            status: LpStatus::Unbounded,
            primal: vec![],
            value: f64::INFINITY,
            duals: vec![],
            pivots: t.pivots,
        });
    }

    let mut primal = vec![0.0; n];
    for r in 0..m {
        if t.basis[r] < n {
            primal[t.basis[r]] = t.rhs(r).max(0.0);
        }
    }
    let value = primal.iter().zip(&lp.objective).map(|(x, c)| x * c).sum();
    let duals = (0..m)
        .map(|r| {
            let y: f64 = (0..m).map(|i| phase2[t.basis[i]] * t.at(i, art0 + r)).sum();
            let y = sign[r] * y;
            if r >= me {
                y.max(0.0)
            } else {
                y
            }
        })
        .collect();
    Ok(LpSolution {
        status: LpStatus::Optimal,
        primal,
        value,
        duals,
        pivots: t.pivots,
    })
}

/// Optimal coupling of the discretized primal together with its duals.
#[derive(Debug, Clone, PartialEq)]
pub struct PrimalSolution {
    pub coupling: Coupling,
    pub value: f64,
    /// `u_i`, the multipliers of the rows `Σ_x π_{i,x} = w_i`.
    pub type_potentials: Vec<f64>,
    pub prices: PricePair,
    pub pivots: usize,
}

/// Rows listed in `binding` move from the inequality block to the equality
/// block, after the `B` rows.
fn primal_lp(
    model: &ValidatedModel,
    support: Option<&[(usize, usize)]>,
    binding: &[usize],
) -> (StandardFormLp, Vec<(usize, usize)>) {
    let n_alts = model.n_alts();
    let vars: Vec<(usize, usize)> = match support {
        Some(s) => s.to_vec(),
        None => (0..model.n_points())
            .flat_map(|i| (0..n_alts).map(move |x| (i, x)))
            .collect(),
    };
    let cons = model.constraints();
    let n = model.n_points();
    let l = cons.n_eq();
    let slack: Vec<usize> = (0..cons.n_ineq()).filter(|j| !binding.contains(j)).collect();
    let nv = vars.len();
    let mut eq = Array2::zeros((n + l + binding.len(), nv));
    let mut ineq = Array2::zeros((slack.len(), nv));
    let mut objective = vec![0.0; nv];
    for (v, &(i, x)) in vars.iter().enumerate() {
        eq[[i, v]] = 1.0;
        for j in 0..l {
            eq[[n + j, v]] = cons.eq_matrix[[j, x]];
        }
        for (r, &j) in binding.iter().enumerate() {
            eq[[n + l + r, v]] = cons.ineq_matrix[[j, x]];
        }
        for (r, &j) in slack.iter().enumerate() {
            ineq[[r, v]] = cons.ineq_matrix[[j, x]];
        }
        if support.is_none() {
            objective[v] = model.surplus()[[i, x]];
        }
    }
    let eq_rhs = model
        .weights()
        .iter()
        .chain(&cons.eq_rhs)
        .chain(binding.iter().map(|j| &cons.ineq_rhs[*j]))
        .copied()
        .collect();
    let lp = StandardFormLp {
        objective,
        eq_matrix: eq,
        eq_rhs,
        ineq_matrix: ineq,
        ineq_rhs: slack.iter().map(|j| cons.ineq_rhs[*j]).collect(),
    };
    (lp, vars)
}

fn check_cap(vars: usize, cap: usize) -> Result<()> {
    if vars > cap {
        return Err(Error::TooLarge { vars, cap });
    }
    Ok(())
}

pub fn solve_discretized_primal(model: &ValidatedModel) -> Result<PrimalSolution> {
    solve_discretized_primal_capped(model, DEFAULT_VARIABLE_CAP)
}

pub fn solve_discretized_primal_capped(model: &ValidatedModel, cap: usize) -> Result<PrimalSolution> {
    check_cap(model.n_points() * model.n_alts(), cap)?;
    let (lp, vars) = primal_lp(model, None, &[]);
    let sol = solve_lp(&lp)?;
    match sol.status {
        LpStatus::Infeasible => return Err(Error::Infeasible),
        LpStatus::Unbounded => return Err(Error::Unbounded),
        LpStatus::Optimal => {}
    }
    let mut coupling = Coupling::zeros(model.n_points(), model.n_alts());
    for (&(i, x), v) in vars.iter().zip(&sol.primal) {
        coupling.mass[[i, x]] = *v;
    }
    let n = model.n_points();
    let l = model.n_eq();
    let type_potentials = sol.duals[..n].to_vec();
    let q = sol.duals[n..n + l].to_vec();
    let p = sol.duals[n + l..].to_vec();
    Ok(PrimalSolution {
        coupling,
        value: sol.value,
        type_potentials,
        prices: PricePair::new(p, q),
        pivots: sol.pivots,
    })
}

/// Any coupling supported on `support` that satisfies the primal constraints.
pub fn feasibility_on_support(model: &ValidatedModel, support: &[(usize, usize)]) -> Result<Coupling> {
    feasibility_on_face(model, support, &[])
}

/// As [`feasibility_on_support`], with the inequality rows in `binding` held
/// at equality.
pub fn feasibility_on_face(model: &ValidatedModel, support: &[(usize, usize)], binding: &[usize]) -> Result<Coupling> {
    if support.is_empty() {
        return Err(Error::InvalidOption("support must be nonempty".into()));
    }
    if let Some(&(i, x)) = support
        .iter()
        .find(|(i, x)| *i >= model.n_points() || *x >= model.n_alts())
    {
        return Err(Error::ShapeMismatch(format!(
            "support arc ({i}, {x}) outside the model"
        )));
    }
    if let Some(&j) = binding.iter().find(|j| **j >= model.n_ineq()) {
        return Err(Error::IndexOutOfRange {
            index: j,
            len: model.n_ineq(),
        });
    }
    check_cap(support.len(), DEFAULT_VARIABLE_CAP)?;
    let (lp, vars) = primal_lp(model, Some(support), binding);
    let sol = solve_lp(&lp)?;
    if sol.status != LpStatus::Optimal {
        return Err(Error::Infeasible);
    }
    let mut coupling = Coupling::zeros(model.n_points(), model.n_alts());
    for (&(i, x), v) in vars.iter().zip(&sol.primal) {
        coupling.mass[[i, x]] += *v;
    }
    Ok(coupling)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::tests::e1;
    use crate::model::{validate_scenario, AlternativeSet, ConstraintSystem, SurplusMatrix, TypeCloud};
    use ndarray::array;

    fn lp(objective: Vec<f64>, eq: Array2<f64>, e: Vec<f64>, ineq: Array2<f64>, h: Vec<f64>) -> StandardFormLp {
        StandardFormLp {
            objective,
            eq_matrix: eq,
            eq_rhs: e,
            ineq_matrix: ineq,
            ineq_rhs: h,
        }
    }

    #[test]
    fn single_bounded_variable() {
        let s = solve_lp(&lp(vec![1.0], Array2::zeros((0, 1)), vec![], array![[1.0]], vec![1.0])).unwrap();
        assert_eq!(s.status, LpStatus::Optimal);
        assert_eq!(s.value, 1.0);
    }

    #[test]
    fn negative_equality_is_infeasible() {
        let s = solve_lp(&lp(vec![1.0], array![[1.0]], vec![-1.0], Array2::zeros((0, 1)), vec![])).unwrap();
        assert_eq!(s.status, LpStatus::Infeasible);
    }

    #[test]
    fn simplex_row_dual() {
        let s = solve_lp(&lp(
            vec![1.0, 1.0],
            Array2::zeros((0, 2)),
            vec![],
            array![[1.0, 1.0]],
            vec![1.0],
        ))
        .unwrap();
        assert_eq!(s.status, LpStatus::Optimal);
        assert!((s.value - 1.0).abs() < 1e-12);
        assert!((s.duals[0] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn unbounded_is_reported() {
        let s = solve_lp(&lp(
            vec![1.0, 0.0],
            Array2::zeros((0, 2)),
            vec![],
            array![[-1.0, 1.0]],
            vec![1.0],
        ))
        .unwrap();
        assert_eq!(s.status, LpStatus::Unbounded);
    }

    #[test]
    fn dimension_errors() {
        let bad = lp(vec![1.0, 2.0], array![[1.0]], vec![1.0], Array2::zeros((0, 2)), vec![]);
        assert!(matches!(solve_lp(&bad), Err(Error::DimensionMismatch(_))));
    }

    #[test]
    fn redundant_rows_keep_valid_duals() {
        // x1 + x2 = 1 twice, maximize 2 x1 + x2.
        let s = solve_lp(&lp(
            vec![2.0, 1.0],
            array![[1.0, 1.0], [1.0, 1.0]],
            vec![1.0, 1.0],
            Array2::zeros((0, 2)),
            vec![],
        ))
        .unwrap();
        assert_eq!(s.status, LpStatus::Optimal);
        assert!((s.value - 2.0).abs() < 1e-12);
        let dual_obj: f64 = s.duals.iter().sum();
        assert!((dual_obj - 2.0).abs() < 1e-12);
    }

    #[test]
    fn e1_primal() {
        let sol = solve_discretized_primal(&e1()).unwrap();
        assert!((sol.value - 1.0).abs() <= 1e-9);
        assert!((sol.coupling.mass[[0, 1]] - 0.5).abs() < 1e-12);
        assert!((sol.coupling.mass[[1, 0]] - 0.5).abs() < 1e-12);
        let q = sol.prices.q[0];
        assert!((1.0 - 1e-12..=2.0 + 1e-12).contains(&q));
        assert!((sol.type_potentials[0] - (2.0 - q)).abs() < 1e-12);
        assert!((sol.type_potentials[1] - (1.0 - q).max(0.0)).abs() < 1e-12);
    }

    #[test]
    fn infeasible_supply() {
        let m = e1();
        let m = validate_scenario(
            m.cloud().clone(),
            m.alternatives().clone(),
            SurplusMatrix::new(m.surplus().clone()),
            ConstraintSystem::equalities(array![[0.0, 1.0]], vec![2.0]),
        )
        .unwrap();
        assert!(matches!(solve_discretized_primal(&m), Err(Error::Infeasible)));
    }

    #[test]
    fn unconstrained_assignment() {
        let m = validate_scenario(
            TypeCloud {
                points: vec![vec![0.0], vec![1.0]],
                weights: vec![0.5, 0.5],
            },
            AlternativeSet::new(["a", "b"]),
            SurplusMatrix::new(array![[1.0, 0.0], [0.0, 1.0]]),
            ConstraintSystem::empty(2),
        )
        .unwrap();
        let sol = solve_discretized_primal(&m).unwrap();
        assert!((sol.value - 1.0).abs() < 1e-12);
        assert_eq!(sol.prices.dim(), 0);
    }

    #[test]
    fn cap_is_enforced() {
        assert!(matches!(
            solve_discretized_primal_capped(&e1(), 3),
            Err(Error::TooLarge { vars: 4, cap: 3 })
        ));
    }

    #[test]
    fn support_feasibility() {
        let m = e1();
        let c = feasibility_on_support(&m, &[(0, 1), (1, 0)]).unwrap();
        assert_eq!(c.mass, array![[0.0, 0.5], [0.5, 0.0]]);
        assert!(matches!(
            feasibility_on_support(&m, &[(0, 0), (1, 0)]),
            Err(Error::Infeasible)
        ));
        let full: Vec<_> = (0..2).flat_map(|i| (0..2).map(move |x| (i, x))).collect();
        assert!(feasibility_on_support(&m, &full).is_ok());
        assert!(feasibility_on_support(&m, &[]).is_err());
    }
}
