//! Large markets with indivisible goods.
//!
//! Alternatives are bundles `x ∈ {0,1}^G`, indexed by binary counting so that
//! bit `g` of the index is `x_g`. A type is a valuation vector over the
//! nonempty bundles (the empty bundle is worth 0), the surplus is
//! `Φ(t, x) = t_x`, and market clearing is the equality block `B·π^X = s`
//! with `B` the goods/bundles incidence matrix. The dual potential is then
//! `L(p) = Σ_i w_i max_x {t_x − p·x} + p·s`, and minimizing it by subgradient
//! steps is tatonnement: the subgradient is supply minus aggregate demand.

mod dyadic;

use ndarray::Array2;
use serde::Serialize;

pub use dyadic::{
    dyadic_allocation, dyadic_l1_distance, DyadicAllocation, Piece, BUNDLE_FIRST, BUNDLE_SECOND, MAX_LEVEL,
};

use crate::dual_solver::{minimize_potential, DualSolution, PriceBox, SolverOptions, DEFAULT_TIE_TOL};
use crate::error::{Error, Result};
use crate::model::{
    validate_scenario, AlternativeSet, ConstraintSystem, Coupling, SurplusMatrix, TypeCloud, ValidatedModel,
};

pub const MAX_GOODS: usize = 12;

#[derive(Debug, Clone, PartialEq)]
pub struct IncidenceMatrix {
    /// `|G| × 2^|G|`, entry `(g, x) = x_g`.
    pub matrix: Array2<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GoodsEconomy {
    pub goods: Vec<String>,
    pub supply: Vec<f64>,
    /// Points are valuations of the nonempty bundles, in bundle order.
    pub cloud: TypeCloud,
}

pub fn contains(bundle: usize, good: usize) -> bool {
    (bundle >> good) & 1 == 1
}

fn bundle_label(bundle: usize, n_goods: usize) -> String {
    let bits: Vec<&str> = (0..n_goods)
        .map(|g| if contains(bundle, g) { "1" } else { "0" })
        .collect();
    format!("({})", bits.join(","))
}

/// Bundles in binary-counting order (empty bundle first) and their incidence
/// matrix.
pub fn enumerate_bundles(goods: &[String]) -> Result<(AlternativeSet, IncidenceMatrix)> {
    let g = goods.len();
    if !(1..=MAX_GOODS).contains(&g) {
        return Err(Error::TooManyGoods(g));
    }
    let n = 1 << g;
    let alts = AlternativeSet::new((0..n).map(|x| bundle_label(x, g)));
    let matrix = Array2::from_shape_fn((g, n), |(good, x)| if contains(x, good) { 1.0 } else { 0.0 });
    Ok((alts, IncidenceMatrix { matrix }))
}

impl GoodsEconomy {
    pub fn new(goods: Vec<String>, supply: Vec<f64>, cloud: TypeCloud) -> Result<Self> {
        let g = goods.len();
        if !(1..=MAX_GOODS).contains(&g) {
            return Err(Error::TooManyGoods(g));
        }
        if supply.len() != g {
            return Err(Error::DimensionMismatch(format!(
                "{} supplies for {g} goods",
                supply.len()
            )));
        }
        if let Some(s) = supply.iter().find(|s| !(**s > 0.0 && **s < 1.0)) {
            return Err(Error::InvalidScenario(format!("supply {s} outside (0, 1)")));
        }
        let dim = (1 << g) - 1;
        if let Some(p) = cloud.points.iter().find(|p| p.len() != dim) {
            return Err(Error::DimensionMismatch(format!(
                "valuation has {} entries, expected 2^{g} - 1 = {dim}",
                p.len()
            )));
        }
        Ok(Self { goods, supply, cloud })
    }

    pub fn n_goods(&self) -> usize {
        self.goods.len()
    }

    pub fn n_bundles(&self) -> usize {
        1 << self.goods.len()
    }

    /// Surplus rows, incidence equalities `B·π^X = s`, no inequalities.
    pub fn model(&self) -> Result<ValidatedModel> {
        let (alts, incidence) = enumerate_bundles(&self.goods)?;
        let surplus = aww_surplus(self)?;
        validate_scenario(
            self.cloud.clone(),
            alts,
            surplus,
            ConstraintSystem::equalities(incidence.matrix, self.supply.clone()),
        )
    }

    /// Recognizes a validated model with the goods-economy structure: `2^G`
    /// alternatives, zero surplus on the empty bundle, no inequalities and
    /// `B` equal to the incidence matrix.
    pub fn from_model(model: &ValidatedModel) -> Result<Self> {
        let n_alts = model.n_alts();
        let g = model.n_eq();
        if g == 0 || g > MAX_GOODS || n_alts != 1 << g || model.n_ineq() != 0 {
            return Err(Error::InvalidScenario("model is not a goods economy".into()));
        }
        let goods: Vec<String> = (1..=g).map(|i| format!("g{i}")).collect();
        let (_, incidence) = enumerate_bundles(&goods)?;
        if incidence.matrix != model.constraints().eq_matrix {
            return Err(Error::InvalidScenario("B is not the bundle incidence matrix".into()));
        }
        let surplus = model.surplus();
        if surplus.column(0).iter().any(|v| *v != 0.0) {
            return Err(Error::InvalidScenario("surplus of the empty bundle must be 0".into()));
        }
        let points = surplus
            .rows()
            .into_iter()
            .map(|r| r.iter().skip(1).copied().collect())
            .collect();
        let cloud = TypeCloud {
            points,
            weights: model.weights().to_vec(),
        };
        Self::new(goods, model.constraints().eq_rhs.clone(), cloud)
    }
}

/// `Φ(t, x) = t_x` with `t_∅ = 0`.
pub fn aww_surplus(economy: &GoodsEconomy) -> Result<SurplusMatrix> {
    let n = economy.n_bundles();
    let points = &economy.cloud.points;
    if let Some(p) = points.iter().find(|p| p.len() != n - 1) {
        return Err(Error::DimensionMismatch(format!(
            "valuation has {} entries, expected {}",
            p.len(),
            n - 1
        )));
    }
    let values = Array2::from_shape_fn((points.len(), n), |(i, x)| if x == 0 { 0.0 } else { points[i][x - 1] });
    Ok(SurplusMatrix::new(values))
}

fn bundle_cost(bundle: usize, prices: &[f64]) -> f64 {
    prices
        .iter()
        .enumerate()
        .filter(|(g, _)| contains(bundle, *g))
        .map(|(_, p)| p)
        .sum()
}

fn net_utilities(valuations: &[f64], prices: &[f64]) -> Result<Vec<f64>> {
    let n = 1usize << prices.len();
    if valuations.len() + 1 != n {
        return Err(Error::DimensionMismatch(format!(
            "{} valuations for {} goods",
            valuations.len(),
            prices.len()
        )));
    }
    Ok((0..n)
        .map(|x| {
            let t = if x == 0 { 0.0 } else { valuations[x - 1] };
            t - bundle_cost(x, prices)
        })
        .collect())
}

/// `D(p, t) = argmax_x {t_x − p·x}`, with ties within `1e-9`.
pub fn demand(valuations: &[f64], prices: &[f64]) -> Result<Vec<usize>> {
    demand_with_tol(valuations, prices, DEFAULT_TIE_TOL)
}

pub fn demand_with_tol(valuations: &[f64], prices: &[f64], tie_tol: f64) -> Result<Vec<usize>> {
    let nets = net_utilities(valuations, prices)?;
    let best = nets.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    Ok(nets
        .iter()
        .enumerate()
        .filter(|(_, v)| **v >= best - tie_tol)
        .map(|(x, _)| x)
        .collect())
}

/// Per-good bounds `[p̲_g, p̄_g]` outside of which the potential strictly
/// decreases towards the box. Above `p̄_g` (the largest marginal value of `g`
/// to any type) no type demands `g`; below `p̲_g` (the smallest) every type
/// does.
pub fn goods_price_box(economy: &GoodsEconomy) -> PriceBox {
    let g = economy.n_goods();
    let mut lower = vec![f64::INFINITY; g];
    let mut upper = vec![f64::NEG_INFINITY; g];
    let value = |t: &[f64], x: usize| if x == 0 { 0.0 } else { t[x - 1] };
    for t in &economy.cloud.points {
        for x in 0..economy.n_bundles() {
            for good in 0..g {
                if contains(x, good) {
                    let marginal = value(t, x) - value(t, x & !(1 << good));
                    upper[good] = upper[good].max(marginal);
                    lower[good] = lower[good].min(marginal);
                }
            }
        }
    }
    PriceBox { lower, upper }
}

/// Minimizes `L(p)` by projected subgradient steps inside
/// [`goods_price_box`] unless `options` carries its own box.
pub fn tatonnement(economy: &GoodsEconomy, options: &SolverOptions) -> Result<DualSolution> {
    let model = economy.model()?;
    let mut options = options.clone();
    if options.price_box.is_none() {
        options.price_box = Some(goods_price_box(economy));
    }
    minimize_potential(&model, &options)
}

/// Bundle probabilities per type point.
#[derive(Debug, Clone, PartialEq)]
pub struct AllocationLottery {
    pub probs: Array2<f64>,
}

const EXTRACT_TOL: f64 = 1e-8;

/// `x*_x(t_i) = π_{i,x} / w_i`.
pub fn extract_allocation(coupling: &Coupling, cloud: &TypeCloud) -> Result<AllocationLottery> {
    if coupling.mass.nrows() != cloud.len() {
        return Err(Error::ShapeMismatch(format!(
            "coupling has {} rows, cloud has {} points",
            coupling.mass.nrows(),
            cloud.len()
        )));
    }
    let mut probs = coupling.mass.clone();
    for (row, (mut out, &weight)) in probs.rows_mut().into_iter().zip(&cloud.weights).enumerate() {
        let sum: f64 = out.sum();
        if (sum - weight).abs() > EXTRACT_TOL {
            return Err(Error::MarginalMismatch { row, sum, weight });
        }
        out.mapv_inplace(|v| v / weight);
    }
    Ok(AllocationLottery { probs })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EquilibriumReport {
    pub aggregate_demand: Vec<f64>,
    pub excess_demand: Vec<f64>,
    pub feasibility_residual: f64,
    /// Largest `max_x Σ lottery − 1` deviation over types.
    pub lottery_residual: f64,
    /// Largest payoff shortfall `V_t(p) − (t_x − p·x)` over bundles with
    /// probability above the tolerance.
    pub max_utility_shortfall: f64,
    /// `(type, bundle, shortfall)` for every bundle outside demand.
    pub violations: Vec<(usize, usize, f64)>,
    pub tolerance: f64,
    pub feasible: bool,
    pub utility_maximizing: bool,
}

impl EquilibriumReport {
    pub fn is_equilibrium(&self) -> bool {
        self.feasible && self.utility_maximizing
    }
}

/// Checks market clearing `Σ_i w_i x̃(t_i) = s` and that every bundle drawn
/// with probability above `tol` is in the demand set, both at tolerance `tol`.
pub fn verify_equilibrium(
    economy: &GoodsEconomy,
    lottery: &AllocationLottery,
    prices: &[f64],
    tol: f64,
) -> Result<EquilibriumReport> {
    let g = economy.n_goods();
    let nb = economy.n_bundles();
    if lottery.probs.dim() != (economy.cloud.len(), nb) {
        return Err(Error::ShapeMismatch(format!(
            "lottery is {:?}, economy has {} types and {nb} bundles",
            lottery.probs.dim(),
            economy.cloud.len()
        )));
    }
    if prices.len() != g {
        return Err(Error::ShapeMismatch(format!("{} prices for {g} goods", prices.len())));
    }
    let mut aggregate = vec![0.0; g];
    let mut lottery_residual = 0.0_f64;
    let mut violations = Vec::new();
    let mut max_shortfall = 0.0_f64;
    for (i, (row, w)) in lottery.probs.rows().into_iter().zip(&economy.cloud.weights).enumerate() {
        lottery_residual = lottery_residual.max((row.sum() - 1.0).abs());
        let nets = net_utilities(&economy.cloud.points[i], prices)?;
        let best = nets.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        for (x, prob) in row.iter().enumerate() {
            for (good, agg) in aggregate.iter_mut().enumerate() {
                if contains(x, good) {
                    *agg += w * prob;
                }
            }
            if *prob > tol {
                let shortfall = best - nets[x];
                max_shortfall = max_shortfall.max(shortfall);
                if shortfall > tol {
                    violations.push((i, x, shortfall));
                }
            }
        }
    }
    let excess: Vec<f64> = aggregate.iter().zip(&economy.supply).map(|(d, s)| d - s).collect();
    let feasibility_residual = excess.iter().fold(0.0_f64, |m, e| m.max(e.abs()));
    Ok(EquilibriumReport {
        feasible: feasibility_residual <= tol && lottery_residual <= tol,
        utility_maximizing: violations.is_empty(),
        aggregate_demand: aggregate,
        excess_demand: excess,
        feasibility_residual,
        lottery_residual,
        max_utility_shortfall: max_shortfall,
        violations,
        tolerance: tol,
    })
}

/// The two-good economy in which every type values each nonempty bundle at
/// `1 + t̄`, with `t̄` on an equally weighted midpoint grid of `[0, 1]`.
pub fn equal_valuation_economy(n_types: usize, supply: [f64; 2]) -> Result<GoodsEconomy> {
    if n_types == 0 {
        return Err(Error::SizeOutOfRange("at least one type".into()));
    }
    let points = (0..n_types)
        .map(|j| {
            let v = 1.0 + (j as f64 + 0.5) / n_types as f64;
            vec![v, v, v]
        })
        .collect();
    GoodsEconomy::new(
        vec!["g1".into(), "g2".into()],
        supply.to_vec(),
        TypeCloud::uniform(points),
    )
}
