//! Scenario documents and deterministic random generators.
//!
//! A scenario file is a JSON object with `points`, `weights`, `alternatives`,
//! `surplus` (row-major, one row per point) and optional constraint blocks
//! `A`/`a` (inequalities) and `B`/`b` (equalities). A missing block means no
//! rows of that kind.

use std::path::Path;

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::market::{contains, GoodsEconomy};
use crate::model::{
    rows_to_array, validate_scenario, AlternativeSet, ConstraintSystem, SurplusMatrix, TypeCloud, ValidatedModel,
};

pub const MAX_GENERATED_GOODS: usize = 6;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub points: Vec<Vec<f64>>,
    pub weights: Vec<f64>,
    pub alternatives: Vec<String>,
    pub surplus: Vec<Vec<f64>>,
    #[serde(rename = "A", default, skip_serializing_if = "Option::is_none")]
    pub ineq_matrix: Option<Vec<Vec<f64>>>,
    #[serde(rename = "a", default, skip_serializing_if = "Option::is_none")]
    pub ineq_rhs: Option<Vec<f64>>,
    #[serde(rename = "B", default, skip_serializing_if = "Option::is_none")]
    pub eq_matrix: Option<Vec<Vec<f64>>>,
    #[serde(rename = "b", default, skip_serializing_if = "Option::is_none")]
    pub eq_rhs: Option<Vec<f64>>,
}

fn block(
    matrix: &Option<Vec<Vec<f64>>>,
    rhs: &Option<Vec<f64>>,
    n_alts: usize,
    name: &str,
) -> Result<(Array2<f64>, Vec<f64>)> {
    match (matrix, rhs) {
        (None, None) => Ok((Array2::zeros((0, n_alts)), Vec::new())),
        (Some(m), Some(r)) if m.is_empty() && r.is_empty() => Ok((Array2::zeros((0, n_alts)), Vec::new())),
        (Some(m), Some(r)) => Ok((rows_to_array(m, name)?, r.clone())),
        _ => Err(Error::InvalidScenario(format!(
            "constraint matrix {name} and its right-hand side must be given together"
        ))),
    }
}

fn array_rows(a: &Array2<f64>) -> Vec<Vec<f64>> {
    a.rows().into_iter().map(|r| r.to_vec()).collect()
}

impl Scenario {
    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn validate(&self) -> Result<ValidatedModel> {
        let n_alts = self.alternatives.len();
        let (ineq_matrix, ineq_rhs) = block(&self.ineq_matrix, &self.ineq_rhs, n_alts, "A")?;
        let (eq_matrix, eq_rhs) = block(&self.eq_matrix, &self.eq_rhs, n_alts, "B")?;
        let surplus = if self.surplus.is_empty() {
            Array2::zeros((0, n_alts))
        } else {
            rows_to_array(&self.surplus, "surplus")?
        };
        validate_scenario(
            TypeCloud {
                points: self.points.clone(),
                weights: self.weights.clone(),
            },
            AlternativeSet::new(self.alternatives.iter().cloned()),
            SurplusMatrix::new(surplus),
            ConstraintSystem {
                ineq_matrix,
                ineq_rhs,
                eq_matrix,
                eq_rhs,
            },
        )
    }

    pub fn from_model(model: &ValidatedModel) -> Self {
        let cons = model.constraints();
        let (ineq_matrix, ineq_rhs) = if cons.n_ineq() == 0 {
            (None, None)
        } else {
            (Some(array_rows(&cons.ineq_matrix)), Some(cons.ineq_rhs.clone()))
        };
        let (eq_matrix, eq_rhs) = if cons.n_eq() == 0 {
            (None, None)
        } else {
            (Some(array_rows(&cons.eq_matrix)), Some(cons.eq_rhs.clone()))
        };
        Self {
            points: model.cloud().points.clone(),
            weights: model.weights().to_vec(),
            alternatives: model.alternatives().labels.clone(),
            surplus: array_rows(model.surplus()),
            ineq_matrix,
            ineq_rhs,
            eq_matrix,
            eq_rhs,
        }
    }
}

/// Dirichlet(1, ..., 1) draw.
fn random_simplex(rng: &mut impl Rng, n: usize) -> Vec<f64> {
    let mut v: Vec<f64> = (0..n).map(|_| -(1.0 - rng.gen::<f64>()).ln()).collect();
    let s: f64 = v.iter().sum();
    v.iter_mut().for_each(|x| *x /= s);
    v
}

/// Random goods economy: valuations uniform on `[0, 1]` per nonempty bundle,
/// made monotone so supersets weakly dominate subsets, and supply equal to
/// the aggregate of a random lottery profile so the market can clear.
pub fn random_economy(seed: u64, n_types: usize, n_goods: usize) -> Result<GoodsEconomy> {
    if n_types == 0 {
        return Err(Error::SizeOutOfRange("n_types must be at least 1".into()));
    }
    if !(1..=MAX_GENERATED_GOODS).contains(&n_goods) {
        return Err(Error::SizeOutOfRange(format!(
            "n_goods must be in 1..={MAX_GENERATED_GOODS}, got {n_goods}"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let nb = 1usize << n_goods;
    let mut points = Vec::with_capacity(n_types);
    for _ in 0..n_types {
        let mut v = vec![0.0; nb];
        for x in 1..nb {
            let raw: f64 = rng.gen();
            // Subsets of x have smaller indices and are already final.
            let sub = (0..n_goods)
                .filter(|g| contains(x, *g))
                .map(|g| v[x & !(1 << g)])
                .fold(0.0, f64::max);
            v[x] = raw.max(sub);
        }
        points.push(v[1..].to_vec());
    }
    let cloud = TypeCloud::uniform(points);
    let mut supply = vec![0.0; n_goods];
    for w in &cloud.weights {
        let lottery = random_simplex(&mut rng, nb);
        for (x, prob) in lottery.iter().enumerate() {
            for (g, s) in supply.iter_mut().enumerate() {
                if contains(x, g) {
                    *s += w * prob;
                }
            }
        }
    }
    let goods = (1..=n_goods).map(|g| format!("g{g}")).collect();
    GoodsEconomy::new(goods, supply, cloud)
}

pub fn generate_random_scenario(seed: u64, n_types: usize, n_goods: usize) -> Result<Scenario> {
    let economy = random_economy(seed, n_types, n_goods)?;
    Ok(Scenario::from_model(&economy.model()?))
}

/// Random scenario with general constraint blocks. Points lie in `[0, 1]^2`,
/// surplus and constraint entries are uniform on `[-1, 1]`, and the
/// right-hand sides come from a random coupling `π̂`: `b = B·π̂^X`,
/// `a = A·π̂^X + slack` with slack uniform on `[0, 0.2]`.
pub fn random_constrained_scenario(seed: u64, n_types: usize, n_alts: usize, k: usize, l: usize) -> Result<Scenario> {
    if n_types == 0 || n_alts == 0 {
        return Err(Error::SizeOutOfRange(
            "need at least one type and one alternative".into(),
        ));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let uniform = |rng: &mut ChaCha8Rng| 2.0 * rng.gen::<f64>() - 1.0;
    let points: Vec<Vec<f64>> = (0..n_types).map(|_| vec![rng.gen(), rng.gen()]).collect();
    let surplus: Vec<Vec<f64>> = (0..n_types)
        .map(|_| (0..n_alts).map(|_| uniform(&mut rng)).collect())
        .collect();
    let ineq: Vec<Vec<f64>> = (0..k)
        .map(|_| (0..n_alts).map(|_| uniform(&mut rng)).collect())
        .collect();
    let eq: Vec<Vec<f64>> = (0..l)
        .map(|_| (0..n_alts).map(|_| uniform(&mut rng)).collect())
        .collect();
    let weights = vec![1.0 / n_types as f64; n_types];
    let mut marginal = vec![0.0; n_alts];
    for w in &weights {
        for (m, p) in marginal.iter_mut().zip(random_simplex(&mut rng, n_alts)) {
            *m += w * p;
        }
    }
    let apply = |row: &Vec<f64>| -> f64 { row.iter().zip(&marginal).map(|(a, m)| a * m).sum() };
    let ineq_rhs: Vec<f64> = ineq.iter().map(|r| apply(r) + 0.2 * rng.gen::<f64>()).collect();
    let eq_rhs: Vec<f64> = eq.iter().map(apply).collect();
    Ok(Scenario {
        points,
        weights,
        alternatives: (0..n_alts).map(|x| format!("x{x}")).collect(),
        surplus,
        ineq_matrix: (k > 0).then_some(ineq),
        ineq_rhs: (k > 0).then_some(ineq_rhs),
        eq_matrix: (l > 0).then_some(eq),
        eq_rhs: (l > 0).then_some(eq_rhs),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lp_oracle::solve_discretized_primal;

    #[test]
    fn parse_minimal_document() {
        let s = Scenario::from_json(
            r#"{"points": [[2.0], [1.0]], "weights": [0.5, 0.5], "alternatives": ["skip", "buy"],
                "surplus": [[0, 2], [0, 1]], "B": [[0, 1]], "b": [0.5]}"#,
        )
        .unwrap();
        let m = s.validate().unwrap();
        assert_eq!((m.n_ineq(), m.n_eq()), (0, 1));
    }

    #[test]
    fn half_given_block_is_rejected() {
        let s = Scenario::from_json(
            r#"{"points": [[0]], "weights": [1], "alternatives": ["x"], "surplus": [[0]], "A": [[1]]}"#,
        )
        .unwrap();
        assert!(matches!(s.validate(), Err(Error::InvalidScenario(_))));
    }

    #[test]
    fn unknown_fields_are_rejected() {
        assert!(Scenario::from_json(
            r#"{"points": [[0]], "weights": [1], "alternatives": ["x"], "surplus": [[0]], "C": 1}"#
        )
        .is_err());
    }

    #[test]
    fn generator_is_deterministic() {
        let a = generate_random_scenario(1, 10, 2).unwrap().to_json().unwrap();
        let b = generate_random_scenario(1, 10, 2).unwrap().to_json().unwrap();
        assert_eq!(a, b);
        assert_ne!(a, generate_random_scenario(2, 10, 2).unwrap().to_json().unwrap());
    }

    #[test]
    fn generated_scenarios_validate_and_are_feasible() {
        for seed in 0..10 {
            let s = generate_random_scenario(seed, 1 + seed as usize * 3, 1 + seed as usize % 3).unwrap();
            let round = Scenario::from_json(&s.to_json().unwrap()).unwrap();
            assert_eq!(round, s);
            let m = s.validate().unwrap();
            assert!(solve_discretized_primal(&m).is_ok());
            let e = GoodsEconomy::from_model(&m).unwrap();
            for t in &e.cloud.points {
                // Monotone: the full bundle is worth at least every single good.
                assert!(t.iter().all(|v| *v <= *t.last().unwrap() + 1e-15));
            }
        }
    }

    #[test]
    fn generator_size_limits() {
        assert!(generate_random_scenario(0, 0, 2).is_err());
        assert!(generate_random_scenario(0, 5, 0).is_err());
        assert!(generate_random_scenario(0, 5, 7).is_err());
    }

    #[test]
    fn constrained_scenarios_are_feasible() {
        for seed in 0..10 {
            let s = random_constrained_scenario(seed, 12, 5, 2, 2).unwrap();
            let m = s.validate().unwrap();
            assert!(solve_discretized_primal(&m).is_ok());
        }
    }
}
