//! Acceptance criteria, one PASS/FAIL line each. Runs without the libtest
//! harness so the summary reads top to bottom; exits nonzero on any FAIL.

mod common;

use std::process::ExitCode;
use std::time::{Duration, Instant};

use cotm_core::scenario::{generate_random_scenario, random_economy};
use cotm_core::{
    check_primal_feasibility, coupling_surplus, duality_report, dyadic_allocation, dyadic_l1_distance,
    extract_allocation, minimize_potential, potential, recover_primal, solve_discretized_primal, subgradient,
    tatonnement, verify_equilibrium, PricePair, SolverOptions, TieRule, DEFAULT_EPS_SCHEDULE,
};
use num_rational::Ratio;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use common::{combine, dot, e1, random_feasible_coupling, random_model, random_prices};

const STRONG_DUALITY_REL_TOL: f64 = 1e-3;
const STRONG_DUALITY_BUDGET: Duration = Duration::from_secs(60);
const WEAK_DUALITY_SLACK: f64 = 1e-9;
const CONVEXITY_SLACK: f64 = 1e-9;
const DYADIC_BUDGET: Duration = Duration::from_secs(1);
const MARKET_FEASIBILITY_TOL: f64 = 1e-4;
const UTILITY_TOL: f64 = 1e-6;
const PIPELINE_GAP_TOL: f64 = 1e-3;
/// Tatonnement budget for the pipeline: 40 restart stages of 2000 steps.
const PIPELINE_ITERS: usize = 80_000;
const E1_VALUE_TOL: f64 = 1e-4;
const E1_PRICE_TOL: f64 = 1e-3;
const E1_LP_TOL: f64 = 1e-9;

type Check = (&'static str, fn() -> Outcome);

struct Outcome {
    pass: bool,
    detail: String,
}

fn strong_duality() -> Outcome {
    let start = Instant::now();
    let mut worst = 0.0_f64;
    let mut errors = Vec::new();
    for seed in 0..50u64 {
        let n_types = 1 + (seed as usize * 7) % 50;
        let n_goods = 1 + seed as usize % 3;
        let run = || -> cotm_core::Result<f64> {
            let model = generate_random_scenario(seed, n_types, n_goods)?.validate()?;
            let opt = solve_discretized_primal(&model)?.value;
            let best = minimize_potential(&model, &SolverOptions::default())?.potential_value;
            Ok((best - opt).abs() / opt.abs().max(1.0))
        };
        match run() {
            Ok(rel) => worst = worst.max(rel),
            Err(e) => errors.push(format!("seed {seed}: {e}")),
        }
    }
    let elapsed = start.elapsed();
    Outcome {
        pass: errors.is_empty() && worst <= STRONG_DUALITY_REL_TOL && elapsed <= STRONG_DUALITY_BUDGET,
        detail: format!(
            "50 scenarios, worst relative gap {worst:.3e} (tol {STRONG_DUALITY_REL_TOL:e}), {:.2} s (budget {} s), {} errors {:?}",
            elapsed.as_secs_f64(),
            STRONG_DUALITY_BUDGET.as_secs(),
            errors.len(),
            errors
        ),
    }
}

fn weak_duality() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut violations = 0;
    let mut worst = f64::NEG_INFINITY;
    for _ in 0..500 {
        let model = random_model(&mut rng);
        let coupling = random_feasible_coupling(&mut rng, &model);
        assert!(check_primal_feasibility(&coupling, &model, 1e-8).unwrap().feasible);
        let prices = random_prices(&mut rng, &model);
        let excess = coupling_surplus(&coupling, &model).unwrap() - potential(&model, &prices).unwrap();
        worst = worst.max(excess);
        if excess > WEAK_DUALITY_SLACK {
            violations += 1;
        }
    }
    Outcome {
        pass: violations == 0,
        detail: format!(
            "500 pairs, {violations} violations, max surplus - F = {worst:.3e} (slack {WEAK_DUALITY_SLACK:e})"
        ),
    }
}

fn convexity_and_subgradient() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let (mut convex_bad, mut subgrad_bad) = (0, 0);
    for _ in 0..1000 {
        let model = random_model(&mut rng);
        let k = model.n_ineq();
        let x = random_prices(&mut rng, &model).stacked();
        let y = random_prices(&mut rng, &model).stacked();
        let lambda: f64 = rng.gen();
        let f = |v: &[f64]| potential(&model, &PricePair::from_stacked(k, v)).unwrap();
        let mid = combine(lambda, &x, 1.0 - lambda, &y);
        if f(&mid) > lambda * f(&x) + (1.0 - lambda) * f(&y) + CONVEXITY_SLACK {
            convex_bad += 1;
        }
    }
    for _ in 0..1000 {
        let model = random_model(&mut rng);
        let x = random_prices(&mut rng, &model);
        let y = random_prices(&mut rng, &model);
        let tie = if rng.gen_bool(0.5) {
            TieRule::LowestIndex
        } else {
            TieRule::HighestIndex
        };
        let g = subgradient(&model, &x, tie).unwrap();
        let step = combine(1.0, &y.stacked(), -1.0, &x.stacked());
        let lower = potential(&model, &x).unwrap() + dot(&g, &step);
        if potential(&model, &y).unwrap() < lower - CONVEXITY_SLACK {
            subgrad_bad += 1;
        }
    }
    Outcome {
        pass: convex_bad == 0 && subgrad_bad == 0,
        detail: format!(
            "1000 convexity triples ({convex_bad} violations), 1000 subgradient pairs ({subgrad_bad} violations), slack {CONVEXITY_SLACK:e}"
        ),
    }
}

fn dyadic_exactness() -> Outcome {
    let start = Instant::now();
    let one = Ratio::from_integer(1u64);
    let half = Ratio::new(1u64, 2);
    let mut bad_pairs = Vec::new();
    let mut pairs = 0;
    for n in 1..=12u32 {
        for m in n + 1..=12 {
            pairs += 1;
            if dyadic_l1_distance(n, m).unwrap() != one {
                bad_pairs.push((n, m));
            }
        }
    }
    let bad_levels: Vec<u32> = (1..=12)
        .filter(|n| dyadic_allocation(*n).unwrap().aggregate_demand() != [half, half])
        .collect();
    let elapsed = start.elapsed();
    Outcome {
        pass: pairs == 66 && bad_pairs.is_empty() && bad_levels.is_empty() && elapsed <= DYADIC_BUDGET,
        detail: format!(
            "{pairs} pairs with distance != 1: {bad_pairs:?}; levels with demand != (1/2, 1/2): {bad_levels:?}; {:.3} ms (budget 1 s)",
            elapsed.as_secs_f64() * 1e3
        ),
    }
}

fn equilibrium_pipeline() -> Outcome {
    let mut failures = Vec::new();
    let (mut worst_feas, mut worst_short, mut worst_gap) = (0.0_f64, 0.0_f64, 0.0_f64);
    for seed in 0..20u64 {
        let n_types = 10 + (seed as usize * 13) % 51;
        let n_goods = 1 + seed as usize % 3;
        let run = || -> cotm_core::Result<(f64, f64, f64)> {
            let economy = random_economy(1000 + seed, n_types, n_goods)?;
            let model = economy.model()?;
            let options = SolverOptions {
                max_iters: PIPELINE_ITERS,
                ..Default::default()
            };
            let sol = tatonnement(&economy, &options)?;
            let recovery = recover_primal(&model, &sol.prices, &DEFAULT_EPS_SCHEDULE)?;
            let lottery = extract_allocation(&recovery.coupling, &economy.cloud)?;
            let eq = verify_equilibrium(&economy, &lottery, &sol.prices.q, UTILITY_TOL)?;
            let report = duality_report(&model, &recovery.coupling, &sol.prices)?;
            Ok((eq.feasibility_residual, eq.max_utility_shortfall, report.gap))
        };
        match run() {
            Ok((feas, short, gap)) => {
                worst_feas = worst_feas.max(feas);
                worst_short = worst_short.max(short);
                worst_gap = worst_gap.max(gap.abs());
                if feas > MARKET_FEASIBILITY_TOL || short > UTILITY_TOL || gap.abs() > PIPELINE_GAP_TOL {
                    failures.push(seed);
                }
            }
            Err(e) => failures.push({
                eprintln!("  economy {seed}: {e}");
                seed
            }),
        }
    }
    Outcome {
        pass: failures.is_empty(),
        detail: format!(
            "20 economies, failing seeds {failures:?}; worst feasibility {worst_feas:.3e} (tol {MARKET_FEASIBILITY_TOL:e}), \
             worst utility shortfall {worst_short:.3e} (tol {UTILITY_TOL:e}), worst |gap| {worst_gap:.3e} (tol {PIPELINE_GAP_TOL:e})"
        ),
    }
}

fn analytic_instance() -> Outcome {
    let model = e1();
    let sol = minimize_potential(&model, &SolverOptions::default()).unwrap();
    let lp = solve_discretized_primal(&model).unwrap();
    let q = sol.prices.q[0];
    let pass = (sol.potential_value - 1.0).abs() <= E1_VALUE_TOL
        && (1.0 - E1_PRICE_TOL..=2.0 + E1_PRICE_TOL).contains(&q)
        && (lp.value - 1.0).abs() <= E1_LP_TOL;
    Outcome {
        pass,
        detail: format!(
            "solver L* = {:.12} at q = {q:.6} (tol {E1_VALUE_TOL:e}, prices in [1, 2] +- {E1_PRICE_TOL:e}); LP value = {:.15} (tol {E1_LP_TOL:e})",
            sol.potential_value, lp.value
        ),
    }
}

fn main() -> ExitCode {
    let criteria: [Check; 6] = [
        ("1 strong duality vs LP oracle", strong_duality),
        ("2 weak duality", weak_duality),
        ("3 convexity and subgradient inequality", convexity_and_subgradient),
        ("4 dyadic counterexample exactness", dyadic_exactness),
        ("5 equilibrium pipeline", equilibrium_pipeline),
        ("6 analytic instance E1", analytic_instance),
    ];
    let mut all = true;
    for (name, check) in criteria {
        let outcome = check();
        all &= outcome.pass;
        println!(
            "{} criterion {name}: {}",
            if outcome.pass { "PASS" } else { "FAIL" },
            outcome.detail
        );
    }
    println!(
        "N/A  criterion 7 continuum existence: not reproducible on finite discretizations; \
         covered by criteria 1-5 and the property suites"
    );
    if all {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
