//! Scenario data for the discretized problem.
//!
//! A population of types is a weighted point cloud, the surplus `Φ(t_i, x)` is
//! tabulated, and the alternative side carries linear constraints
//! `A·π^X ≤ a`, `B·π^X = b` on the alternative marginal of a coupling.

use ndarray::{Array2, ArrayView1, Axis};
use serde::Serialize;

use crate::error::{Error, Result};

/// Tolerance on `Σ w_i = 1`. Near-misses are renormalized.
pub const WEIGHT_SUM_TOL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub struct TypeCloud {
    pub points: Vec<Vec<f64>>,
    pub weights: Vec<f64>,
}

impl TypeCloud {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.points.first().map_or(0, Vec::len)
    }

    /// `n` points with weight `1/n` each.
    pub fn uniform(points: Vec<Vec<f64>>) -> Self {
        let n = points.len();
        let weights = vec![1.0 / n as f64; n];
        Self { points, weights }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AlternativeSet {
    pub labels: Vec<String>,
}

impl AlternativeSet {
    pub fn new<S: Into<String>>(labels: impl IntoIterator<Item = S>) -> Self {
        Self {
            labels: labels.into_iter().map(Into::into).collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }
}

/// `values[[i, x]] = Φ(t_i, x)`.
#[derive(Debug, Clone, PartialEq)]
pub struct SurplusMatrix {
    pub values: Array2<f64>,
}

impl SurplusMatrix {
    pub fn new(values: Array2<f64>) -> Self {
        Self { values }
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        Ok(Self::new(rows_to_array(rows, "surplus")?))
    }
}

/// Linear constraints on the alternative marginal: `A·π^X ≤ a` (k rows) and
/// `B·π^X = b` (ℓ rows). Either block may be empty.
#[derive(Debug, Clone, PartialEq)]
pub struct ConstraintSystem {
    pub ineq_matrix: Array2<f64>,
    pub ineq_rhs: Vec<f64>,
    pub eq_matrix: Array2<f64>,
    pub eq_rhs: Vec<f64>,
}

impl ConstraintSystem {
    /// No constraints on `n_alts` alternatives.
    pub fn empty(n_alts: usize) -> Self {
        Self {
            ineq_matrix: Array2::zeros((0, n_alts)),
            ineq_rhs: Vec::new(),
            eq_matrix: Array2::zeros((0, n_alts)),
            eq_rhs: Vec::new(),
        }
    }

    pub fn equalities(eq_matrix: Array2<f64>, eq_rhs: Vec<f64>) -> Self {
        let n_alts = eq_matrix.ncols();
        Self {
            ineq_matrix: Array2::zeros((0, n_alts)),
            ineq_rhs: Vec::new(),
            eq_matrix,
            eq_rhs,
        }
    }

    pub fn n_ineq(&self) -> usize {
        self.ineq_rhs.len()
    }

    pub fn n_eq(&self) -> usize {
        self.eq_rhs.len()
    }
}

/// Nonnegative mass matrix over (type point, alternative).
#[derive(Debug, Clone, PartialEq)]
pub struct Coupling {
    pub mass: Array2<f64>,
}

impl Coupling {
    pub fn new(mass: Array2<f64>) -> Result<Self> {
        if let Some(v) = mass.iter().find(|v| !v.is_finite() || **v < 0.0) {
            return Err(Error::InvalidScenario(format!(
                "coupling entries must be finite and nonnegative, found {v}"
            )));
        }
        Ok(Self { mass })
    }

    pub fn zeros(n_points: usize, n_alts: usize) -> Self {
        Self {
            mass: Array2::zeros((n_points, n_alts)),
        }
    }

    /// Nonzero entries as `(i, x, mass)`, row-major.
    pub fn triplets(&self) -> Vec<(usize, usize, f64)> {
        self.mass
            .indexed_iter()
            .filter(|(_, v)| **v != 0.0)
            .map(|((i, x), v)| (i, x, *v))
            .collect()
    }

    pub fn from_triplets(n_points: usize, n_alts: usize, triplets: &[(usize, usize, f64)]) -> Result<Self> {
        let mut mass = Array2::zeros((n_points, n_alts));
        for &(i, x, v) in triplets {
            if i >= n_points || x >= n_alts {
                return Err(Error::ShapeMismatch(format!(
                    "triplet ({i}, {x}) outside {n_points}x{n_alts}"
                )));
            }
            mass[[i, x]] += v;
        }
        Self::new(mass)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FeasibilityReport {
    pub type_marginal_residual: f64,
    pub ineq_residual: f64,
    pub eq_residual: f64,
    pub tolerance: f64,
    pub feasible: bool,
}

/// A scenario whose invariants have been checked. Immutable.
#[derive(Debug, Clone)]
pub struct ValidatedModel {
    cloud: TypeCloud,
    alts: AlternativeSet,
    surplus: SurplusMatrix,
    constraints: ConstraintSystem,
    /// Row `x` is `c_x = (A_x, B_x)`.
    cost_columns: Array2<f64>,
    /// `(a, b)`.
    rhs: Vec<f64>,
}

impl ValidatedModel {
    pub fn cloud(&self) -> &TypeCloud {
        &self.cloud
    }

    pub fn alternatives(&self) -> &AlternativeSet {
        &self.alts
    }

    pub fn surplus(&self) -> &Array2<f64> {
        &self.surplus.values
    }

    pub fn constraints(&self) -> &ConstraintSystem {
        &self.constraints
    }

    pub fn weights(&self) -> &[f64] {
        &self.cloud.weights
    }

    pub fn n_points(&self) -> usize {
        self.cloud.len()
    }

    pub fn n_alts(&self) -> usize {
        self.alts.len()
    }

    /// k, the number of inequality rows.
    pub fn n_ineq(&self) -> usize {
        self.constraints.n_ineq()
    }

    /// ℓ, the number of equality rows.
    pub fn n_eq(&self) -> usize {
        self.constraints.n_eq()
    }

    /// k + ℓ.
    pub fn n_prices(&self) -> usize {
        self.n_ineq() + self.n_eq()
    }

    /// `c_x = (A_x, B_x)`.
    pub fn cost_column(&self, x: usize) -> ArrayView1<'_, f64> {
        self.cost_columns.row(x)
    }

    /// `(a, b)` stacked.
    pub fn rhs(&self) -> &[f64] {
        &self.rhs
    }

    fn check_shape(&self, coupling: &Coupling) -> Result<()> {
        let shape = coupling.mass.dim();
        if shape != (self.n_points(), self.n_alts()) {
            return Err(Error::ShapeMismatch(format!(
                "coupling is {}x{}, model is {}x{}",
                shape.0,
                shape.1,
                self.n_points(),
                self.n_alts()
            )));
        }
        Ok(())
    }
}

pub(crate) fn rows_to_array(rows: &[Vec<f64>], what: &str) -> Result<Array2<f64>> {
    let ncols = rows.first().map_or(0, Vec::len);
    if rows.iter().any(|r| r.len() != ncols) {
        return Err(Error::DimensionMismatch(format!("{what} rows differ in length")));
    }
    let flat: Vec<f64> = rows.iter().flatten().copied().collect();
    Array2::from_shape_vec((rows.len(), ncols), flat).map_err(|e| Error::DimensionMismatch(format!("{what}: {e}")))
}

fn check_finite<'a>(values: impl IntoIterator<Item = &'a f64>, what: &str) -> Result<()> {
    if values.into_iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFiniteEntry(what.to_string()));
    }
    Ok(())
}

pub fn validate_scenario(
    cloud: TypeCloud,
    alts: AlternativeSet,
    surplus: SurplusMatrix,
    constraints: ConstraintSystem,
) -> Result<ValidatedModel> {
    let mut cloud = cloud;
    let n = cloud.points.len();
    if n == 0 {
        return Err(Error::DimensionMismatch("type cloud has no points".into()));
    }
    if cloud.weights.len() != n {
        return Err(Error::DimensionMismatch(format!(
            "{} points but {} weights",
            n,
            cloud.weights.len()
        )));
    }
    let dim = cloud.points[0].len();
    if dim == 0 {
        return Err(Error::DimensionMismatch("type points have dimension 0".into()));
    }
    if let Some(i) = cloud.points.iter().position(|p| p.len() != dim) {
        return Err(Error::DimensionMismatch(format!(
            "point {i} has dimension {}, expected {dim}",
            cloud.points[i].len()
        )));
    }
    check_finite(cloud.points.iter().flatten(), "points")?;
    check_finite(&cloud.weights, "weights")?;
    if let Some((index, &weight)) = cloud.weights.iter().enumerate().find(|(_, w)| **w <= 0.0) {
        return Err(Error::NonPositiveWeight { index, weight });
    }
    let sum: f64 = cloud.weights.iter().sum();
    if (sum - 1.0).abs() > WEIGHT_SUM_TOL {
        return Err(Error::WeightSumOff { sum });
    }
    cloud.weights.iter_mut().for_each(|w| *w /= sum);

    let n_alts = alts.len();
    if n_alts == 0 {
        return Err(Error::DimensionMismatch("no alternatives".into()));
    }
    let mut seen = std::collections::HashSet::new();
    if let Some(dup) = alts.labels.iter().find(|l| !seen.insert(l.as_str())) {
        return Err(Error::InvalidScenario(format!("duplicate alternative label {dup:?}")));
    }

    if surplus.values.dim() != (n, n_alts) {
        let (r, c) = surplus.values.dim();
        return Err(Error::DimensionMismatch(format!(
            "surplus is {r}x{c}, expected {n}x{n_alts}"
        )));
    }
    check_finite(surplus.values.iter(), "surplus")?;

    let cons = &constraints;
    if cons.ineq_matrix.ncols() != n_alts || cons.ineq_matrix.nrows() != cons.ineq_rhs.len() {
        return Err(Error::DimensionMismatch(format!(
            "A is {}x{}, a has {} entries, |X| = {n_alts}",
            cons.ineq_matrix.nrows(),
            cons.ineq_matrix.ncols(),
            cons.ineq_rhs.len()
        )));
    }
    if cons.eq_matrix.ncols() != n_alts || cons.eq_matrix.nrows() != cons.eq_rhs.len() {
        return Err(Error::DimensionMismatch(format!(
            "B is {}x{}, b has {} entries, |X| = {n_alts}",
            cons.eq_matrix.nrows(),
            cons.eq_matrix.ncols(),
            cons.eq_rhs.len()
        )));
    }
    check_finite(cons.ineq_matrix.iter(), "A")?;
    check_finite(&cons.ineq_rhs, "a")?;
    check_finite(cons.eq_matrix.iter(), "B")?;
    check_finite(&cons.eq_rhs, "b")?;

    let k = cons.n_ineq();
    let l = cons.n_eq();
    let mut cost_columns = Array2::zeros((n_alts, k + l));
    for x in 0..n_alts {
        for j in 0..k {
            cost_columns[[x, j]] = cons.ineq_matrix[[j, x]];
        }
        for j in 0..l {
            cost_columns[[x, k + j]] = cons.eq_matrix[[j, x]];
        }
    }
    let rhs = cons.ineq_rhs.iter().chain(&cons.eq_rhs).copied().collect();

    Ok(ValidatedModel {
        cloud,
        alts,
        surplus,
        constraints,
        cost_columns,
        rhs,
    })
}

/// Row sums (type marginal) and column sums (alternative marginal).
pub fn marginals(coupling: &Coupling, model: &ValidatedModel) -> Result<(Vec<f64>, Vec<f64>)> {
    model.check_shape(coupling)?;
    let rows = coupling.mass.sum_axis(Axis(1)).to_vec();
    let cols = coupling.mass.sum_axis(Axis(0)).to_vec();
    Ok((rows, cols))
}

/// `Σ_{i,x} Φ(t_i, x) π_{i,x}`.
pub fn coupling_surplus(coupling: &Coupling, model: &ValidatedModel) -> Result<f64> {
    model.check_shape(coupling)?;
    Ok(coupling
        .mass
        .iter()
        .zip(model.surplus().iter())
        .map(|(m, phi)| m * phi)
        .sum())
}

pub fn check_primal_feasibility(coupling: &Coupling, model: &ValidatedModel, tol: f64) -> Result<FeasibilityReport> {
    if !(tol > 0.0) {
        return Err(Error::InvalidOption(format!("tolerance must be positive, got {tol}")));
    }
    let (rows, cols) = marginals(coupling, model)?;
    let type_marginal_residual = rows
        .iter()
        .zip(model.weights())
        .map(|(r, w)| (r - w).abs())
        .fold(0.0, f64::max);
    let cons = model.constraints();
    let cols = ndarray::Array1::from(cols);
    let ineq_residual = cons
        .ineq_matrix
        .dot(&cols)
        .iter()
        .zip(&cons.ineq_rhs)
        .map(|(lhs, a)| (lhs - a).max(0.0))
        .fold(0.0, f64::max);
    let eq_residual = cons
        .eq_matrix
        .dot(&cols)
        .iter()
        .zip(&cons.eq_rhs)
        .map(|(lhs, b)| (lhs - b).abs())
        .fold(0.0, f64::max);
    let feasible = type_marginal_residual <= tol && ineq_residual <= tol && eq_residual <= tol;
    Ok(FeasibilityReport {
        type_marginal_residual,
        ineq_residual,
        eq_residual,
        tolerance: tol,
        feasible,
    })
}
