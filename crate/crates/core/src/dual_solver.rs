//! The reduced dual potential
//!
//! ```text
//! F(p, q) = Σ_i w_i u_{p,q}(t_i) + a·p + b·q,
//! u_{p,q}(t) = max_x { Φ(t, x) − c_x·(p, q) },
//! ```
//!
//! over `K = R^k_+ × R^ℓ`, and its minimization by projected subgradient
//! descent inside a compact price box. `F` is convex and piecewise linear; a
//! subgradient at `(p, q)` is `(a, b) − Σ_i w_i c_{x_i}` for any selection
//! `x_i` of maximizers.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::model::ValidatedModel;

/// Default tie tolerance for argmax sets.
pub const DEFAULT_TIE_TOL: f64 = 1e-9;

/// Dual variables: `p ≥ 0` for the inequality rows, free `q` for the equality
/// rows.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PricePair {
    pub p: Vec<f64>,
    pub q: Vec<f64>,
}

impl PricePair {
    pub fn new(p: Vec<f64>, q: Vec<f64>) -> Self {
        Self { p, q }
    }

    pub fn zeros(k: usize, l: usize) -> Self {
        Self::new(vec![0.0; k], vec![0.0; l])
    }

    /// Splits a stacked `(p, q)` vector after its first `k` entries.
    pub fn from_stacked(k: usize, stacked: &[f64]) -> Self {
        let (p, q) = stacked.split_at(k);
        Self::new(p.to_vec(), q.to_vec())
    }

    pub fn stacked(&self) -> Vec<f64> {
        self.p.iter().chain(&self.q).copied().collect()
    }

    pub fn dim(&self) -> usize {
        self.p.len() + self.q.len()
    }

    fn check(&self, model: &ValidatedModel) -> Result<()> {
        if self.p.len() != model.n_ineq() || self.q.len() != model.n_eq() {
            return Err(Error::ShapeMismatch(format!(
                "prices have (k, l) = ({}, {}), model has ({}, {})",
                self.p.len(),
                self.q.len(),
                model.n_ineq(),
                model.n_eq()
            )));
        }
        check_in_k(&self.p)
    }
}

fn check_in_k(p: &[f64]) -> Result<()> {
    match p.iter().position(|v| !(*v >= 0.0)) {
        Some(index) => Err(Error::PricesOutsideK { index, value: p[index] }),
        None => Ok(()),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct IndirectUtilityRow {
    pub value: f64,
    /// Alternatives within `tie_tol` of the maximum, ascending.
    pub argmax_set: Vec<usize>,
}

/// Axis-aligned box inside `K`, on the stacked `(p, q)` coordinates.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PriceBox {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

impl PriceBox {
    pub fn dim(&self) -> usize {
        self.lower.len()
    }

    pub fn diameter(&self) -> f64 {
        self.lower
            .iter()
            .zip(&self.upper)
            .map(|(l, u)| (u - l).powi(2))
            .sum::<f64>()
            .sqrt()
    }

    pub fn contains(&self, stacked: &[f64]) -> bool {
        stacked.len() == self.dim()
            && stacked
                .iter()
                .zip(self.lower.iter().zip(&self.upper))
                .all(|(v, (l, u))| *l <= *v && *v <= *u)
    }

    /// The box scaled by `factor` about the origin, with nonnegative
    /// coordinates kept nonnegative.
    pub fn scaled(&self, factor: f64) -> Self {
        Self {
            lower: self
                .lower
                .iter()
                .map(|l| if *l >= 0.0 { *l } else { l * factor })
                .collect(),
            upper: self.upper.iter().map(|u| u * factor).collect(),
        }
    }

    fn clamp(&self, stacked: &mut [f64]) {
        for (v, (l, u)) in stacked.iter_mut().zip(self.lower.iter().zip(&self.upper)) {
            *v = v.clamp(*l, *u);
        }
    }
}

/// How the subgradient selects one alternative from a tied argmax.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub enum TieRule {
    #[default]
    LowestIndex,
    HighestIndex,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(tag = "rule", rename_all = "snake_case")]
pub enum StepRule {
    /// `α_k = step0 / √(k+1)` along the normalized subgradient. `None` means
    /// one tenth of the box diameter.
    Diminishing { step0: Option<f64> },
    /// `α_k = (F(x_k) − target) / ‖g_k‖²` with a known optimal value.
    Polyak { target: f64 },
    /// Restarted normalized steps: stage `s` takes `stage_len` steps of
    /// length `step0 / 2^s` starting from the best point so far. `None`
    /// defaults are one tenth of the box diameter and
    /// `max(max_iters / 40, 250)`.
    Restarted {
        step0: Option<f64>,
        stage_len: Option<usize>,
    },
}

impl Default for StepRule {
    fn default() -> Self {
        StepRule::Restarted {
            step0: None,
            stage_len: None,
        }
    }
}

/// Number of halvings the restarted rule plans for when `stage_len` is not
/// given, and the shortest default stage: fewer steps per stage cannot
/// cross the box before the step shrinks.
const RESTART_STAGES: usize = 40;
const MIN_STAGE_LEN: usize = 250;

#[derive(Debug, Clone)]
pub struct SolverOptions {
    pub max_iters: usize,
    pub stop_tol: f64,
    pub step_rule: StepRule,
    pub trace: bool,
    /// Overrides [`price_box`].
    pub price_box: Option<PriceBox>,
    pub initial: Option<PricePair>,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            max_iters: 5000,
            stop_tol: 1e-6,
            step_rule: StepRule::default(),
            trace: false,
            price_box: None,
            initial: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TraceEntry {
    pub iter: usize,
    pub value: f64,
    pub grad_norm: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DualSolution {
    pub prices: PricePair,
    pub potential_value: f64,
    pub iterations: usize,
    pub subgradient_norm_at_best: f64,
    pub price_box: PriceBox,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub trace: Option<Vec<TraceEntry>>,
}

fn dot(c: impl IntoIterator<Item = f64>, v: &[f64]) -> f64 {
    c.into_iter().zip(v).map(|(a, b)| a * b).sum()
}

/// Net payoffs `Φ(t_i, x) − c_x·v` for every alternative.
fn net_payoffs<'a>(model: &'a ValidatedModel, i: usize, stacked: &'a [f64]) -> impl Iterator<Item = f64> + 'a {
    let row = model.surplus().row(i);
    (0..model.n_alts()).map(move |x| row[x] - dot(model.cost_column(x).iter().copied(), stacked))
}

pub fn indirect_utility(
    model: &ValidatedModel,
    i: usize,
    prices: &PricePair,
    tie_tol: f64,
) -> Result<IndirectUtilityRow> {
    if i >= model.n_points() {
        return Err(Error::IndexOutOfRange {
            index: i,
            len: model.n_points(),
        });
    }
    prices.check(model)?;
    let stacked = prices.stacked();
    let nets: Vec<f64> = net_payoffs(model, i, &stacked).collect();
    let value = nets.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let argmax_set = nets
        .iter()
        .enumerate()
        .filter(|(_, v)| **v >= value - tie_tol)
        .map(|(x, _)| x)
        .collect();
    Ok(IndirectUtilityRow { value, argmax_set })
}

/// `F(p, q)`.
pub fn potential(model: &ValidatedModel, prices: &PricePair) -> Result<f64> {
    prices.check(model)?;
    Ok(evaluate(model, &prices.stacked(), TieRule::LowestIndex).0)
}

/// `(a, b) − Σ_i w_i c_{x_i}` where `x_i` is picked from the exact argmax by
/// `tie_rule`.
pub fn subgradient(model: &ValidatedModel, prices: &PricePair, tie_rule: TieRule) -> Result<Vec<f64>> {
    prices.check(model)?;
    Ok(evaluate(model, &prices.stacked(), tie_rule).1)
}

/// `F` and one subgradient at the stacked point, in a single pass.
pub(crate) fn evaluate(model: &ValidatedModel, stacked: &[f64], tie_rule: TieRule) -> (f64, Vec<f64>) {
    let mut value = dot(model.rhs().iter().copied(), stacked);
    let mut grad = model.rhs().to_vec();
    for (i, w) in model.weights().iter().enumerate() {
        let mut best = f64::NEG_INFINITY;
        let mut arg = 0;
        for (x, net) in net_payoffs(model, i, stacked).enumerate() {
            let better = match tie_rule {
                TieRule::LowestIndex => net > best,
                TieRule::HighestIndex => net >= best,
            };
            if better {
                best = net;
                arg = x;
            }
        }
        value += w * best;
        for (g, c) in grad.iter_mut().zip(model.cost_column(arg)) {
            *g -= w * c;
        }
    }
    (value, grad)
}

/// `[0, M]^k × [−M, M]^ℓ` with
/// `M = 2·(max|Φ| + max_x ‖c_x‖₁ + ‖a‖₁ + ‖b‖₁ + 1)`.
pub fn price_box(model: &ValidatedModel) -> PriceBox {
    let k = model.n_ineq();
    let l = model.n_eq();
    let max_phi = model.surplus().iter().fold(0.0_f64, |m, v| m.max(v.abs()));
    let max_col = (0..model.n_alts())
        .map(|x| model.cost_column(x).iter().map(|c| c.abs()).sum::<f64>())
        .fold(0.0, f64::max);
    let rhs_l1: f64 = model.rhs().iter().map(|v| v.abs()).sum();
    let m = 2.0 * (max_phi + max_col + rhs_l1 + 1.0);
    PriceBox {
        lower: std::iter::repeat_n(0.0, k).chain(std::iter::repeat_n(-m, l)).collect(),
        upper: vec![m; k + l],
    }
}

/// Componentwise clamp of the stacked prices into the box.
pub fn project_to_box(prices: &PricePair, price_box: &PriceBox) -> PricePair {
    let mut stacked = prices.stacked();
    price_box.clamp(&mut stacked);
    PricePair::from_stacked(prices.p.len(), &stacked)
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|g| g * g).sum::<f64>().sqrt()
}

/// Projected subgradient descent on `F` inside the price box. Returns the
/// best iterate seen.
pub fn minimize_potential(model: &ValidatedModel, options: &SolverOptions) -> Result<DualSolution> {
    if options.max_iters == 0 {
        return Err(Error::InvalidOption("max_iters must be at least 1".into()));
    }
    if !(options.stop_tol > 0.0) {
        return Err(Error::InvalidOption("stop_tol must be positive".into()));
    }
    let k = model.n_ineq();
    let dim = model.n_prices();
    let bx = options.price_box.clone().unwrap_or_else(|| price_box(model));
    if bx.dim() != dim || bx.lower.iter().zip(&bx.upper).any(|(l, u)| !(l <= u)) {
        return Err(Error::InvalidOption(format!(
            "price box must be a nonempty box of dimension {dim}"
        )));
    }
    if bx.lower[..k].iter().any(|l| *l < 0.0) {
        return Err(Error::InvalidOption("price box leaves K".into()));
    }

    let mut x = match &options.initial {
        Some(init) => {
            init.check(model)?;
            init.stacked()
        }
        None => vec![0.0; dim],
    };
    bx.clamp(&mut x);

    let diameter = bx.diameter();
    let mut trace = options.trace.then(Vec::new);
    let mut best_x = x.clone();
    let mut best_f = f64::INFINITY;
    let mut best_gnorm = f64::INFINITY;
    let mut iterations = 0;

    for iter in 0..options.max_iters {
        iterations = iter + 1;
        let (f, g) = evaluate(model, &x, TieRule::LowestIndex);
        let gnorm = norm(&g);
        if !f.is_finite() || !gnorm.is_finite() {
            return Err(Error::NonFiniteEncountered { iteration: iter });
        }
        if let Some(t) = trace.as_mut() {
            t.push(TraceEntry {
                iter,
                value: f,
                grad_norm: gnorm,
            });
        }
        if f < best_f {
            best_f = f;
            best_gnorm = gnorm;
            best_x.clone_from(&x);
        }
        if gnorm <= options.stop_tol || dim == 0 {
            break;
        }

        let step = match options.step_rule {
            StepRule::Diminishing { step0 } => {
                let a0 = step0.unwrap_or(diameter / 10.0);
                a0 / ((iter + 1) as f64).sqrt() / gnorm
            }
            StepRule::Polyak { target } => (f - target).max(0.0) / (gnorm * gnorm),
            StepRule::Restarted { step0, stage_len } => {
                let len = stage_len
                    .unwrap_or((options.max_iters / RESTART_STAGES).max(MIN_STAGE_LEN))
                    .max(1);
                if iter > 0 && iter % len == 0 && x != best_x {
                    x.clone_from(&best_x);
                    continue;
                }
                let stage = (iter / len).min(1000) as i32;
                step0.unwrap_or(diameter / 10.0) * 0.5_f64.powi(stage) / gnorm
            }
        };
        for (xi, gi) in x.iter_mut().zip(&g) {
            *xi -= step * gi;
        }
        bx.clamp(&mut x);
    }

    let prices = PricePair::from_stacked(k, &best_x);
    Ok(DualSolution {
        prices,
        potential_value: best_f,
        iterations,
        subgradient_norm_at_best: best_gnorm,
        price_box: bx,
        trace,
    })
}
