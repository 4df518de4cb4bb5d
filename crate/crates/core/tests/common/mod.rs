//! Shared generators for the integration suites.
#![allow(dead_code)]

use cotm_core::scenario::{generate_random_scenario, random_constrained_scenario};
use cotm_core::{
    price_box, solve_discretized_primal, validate_scenario, Coupling, PricePair, Scenario, SurplusMatrix,
    ValidatedModel,
};
use ndarray::Array2;
use rand::Rng;

pub const E1_JSON: &str = r#"{
  "points": [[2.0], [1.0]],
  "weights": [0.5, 0.5],
  "alternatives": ["skip", "buy"],
  "surplus": [[0.0, 2.0], [0.0, 1.0]],
  "B": [[0.0, 1.0]],
  "b": [0.5]
}"#;

pub fn e1() -> ValidatedModel {
    Scenario::from_json(E1_JSON).unwrap().validate().unwrap()
}

/// Alternates between goods economies and scenarios with both constraint
/// kinds, small enough for the dense oracle.
pub fn random_model(rng: &mut impl Rng) -> ValidatedModel {
    let seed: u64 = rng.gen();
    let scenario = if rng.gen_bool(0.5) {
        generate_random_scenario(seed, rng.gen_range(1..=12), rng.gen_range(1..=3)).unwrap()
    } else {
        let n_alts = rng.gen_range(2..=6);
        random_constrained_scenario(
            seed,
            rng.gen_range(1..=10),
            n_alts,
            rng.gen_range(0..=2),
            rng.gen_range(0..=2),
        )
        .unwrap()
    };
    scenario.validate().unwrap()
}

/// Uniform draw from the model's price box.
pub fn random_prices(rng: &mut impl Rng, model: &ValidatedModel) -> PricePair {
    let bx = price_box(model);
    let stacked: Vec<f64> = bx
        .lower
        .iter()
        .zip(&bx.upper)
        .map(|(l, u)| rng.gen_range(*l..=*u))
        .collect();
    PricePair::from_stacked(model.n_ineq(), &stacked)
}

/// A feasible coupling: the LP optimum for a random surplus under the same
/// constraints, which lands on a random vertex of the feasible polytope.
pub fn random_feasible_coupling(rng: &mut impl Rng, model: &ValidatedModel) -> Coupling {
    let surplus = Array2::from_shape_fn((model.n_points(), model.n_alts()), |_| rng.gen_range(-1.0..1.0));
    let twin = validate_scenario(
        model.cloud().clone(),
        model.alternatives().clone(),
        SurplusMatrix::new(surplus),
        model.constraints().clone(),
    )
    .unwrap();
    solve_discretized_primal(&twin).unwrap().coupling
}

pub fn combine(a: f64, x: &[f64], b: f64, y: &[f64]) -> Vec<f64> {
    x.iter().zip(y).map(|(u, v)| a * u + b * v).collect()
}

pub fn dot(x: &[f64], y: &[f64]) -> f64 {
    x.iter().zip(y).map(|(u, v)| u * v).sum()
}
