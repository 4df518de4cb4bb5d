//! The `cotm` command-line tool. Exit codes: 0 success, 1 usage or
//! operational error, 2 certification failure.

pub mod config;
pub mod format;

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use cotm_core::market::{equal_valuation_economy, MAX_LEVEL};
use cotm_core::scenario::{generate_random_scenario, random_economy};
use cotm_core::{
    duality_report_with_tol, dyadic_allocation, dyadic_l1_distance, extract_allocation, minimize_potential,
    recover_primal, solve_discretized_primal, subgradient, tatonnement, verify_equilibrium, Coupling, DualSolution,
    DualityReport, EquilibriumReport, GoodsEconomy, PriceBox, PricePair, Scenario, SolverOptions, StepRule, TieRule,
    ValidatedModel, DEFAULT_EPS_SCHEDULE,
};
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use config::{parse_config, EconomySource, InputSource, RunConfig, Tolerances};

#[derive(Debug, Clone, PartialEq, Error)]
#[error("{flag}: {message}")]
pub struct UsageError {
    pub flag: String,
    pub message: String,
}

#[derive(Debug, Error)]
pub enum CliError {
    #[error(transparent)]
    Core(#[from] cotm_core::Error),
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{path}: {source}")]
    Json { path: PathBuf, source: serde_json::Error },
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error("{0}")]
    Input(String),
}

/// What a successful run concluded.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Outcome {
    Certified,
    NotCertified,
}

impl Outcome {
    fn from_bool(ok: bool) -> Self {
        if ok {
            Outcome::Certified
        } else {
            Outcome::NotCertified
        }
    }

    pub fn exit_code(self) -> u8 {
        match self {
            Outcome::Certified => 0,
            Outcome::NotCertified => 2,
        }
    }
}

pub fn main_with_args<I, T>(argv: I) -> ExitCode
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let config = match parse_config(argv) {
        Ok(Some(config)) => config,
        Ok(None) => return ExitCode::SUCCESS,
        // Clap renders its own `error:` prefix and usage hint.
        Err(e) if e.message.starts_with("error:") => {
            eprintln!("{}", e.message);
            return ExitCode::from(1);
        }
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(1);
        }
    };
    match run(&config) {
        Ok(outcome) => {
            if outcome == Outcome::NotCertified {
                eprintln!("{}: certification failed", config.subcommand());
            }
            ExitCode::from(outcome.exit_code())
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}

pub fn run(config: &RunConfig) -> Result<Outcome, CliError> {
    match config {
        RunConfig::Solve {
            input,
            solver,
            tolerances,
            trace,
            out,
        } => solve(input, solver, tolerances, trace.as_deref(), out.as_deref()),
        RunConfig::Oracle { input, out } => oracle(input, out.as_deref()),
        RunConfig::Verify {
            scenario,
            coupling,
            prices,
            tolerances,
            out,
        } => verify(scenario, coupling, prices, tolerances, out.as_deref()),
        RunConfig::Equilibrium {
            source,
            solver,
            tolerances,
            trace,
            out,
        } => equilibrium(source, solver, tolerances, trace.as_deref(), out.as_deref()),
        RunConfig::Counterexample { max_level, out } => counterexample(*max_level, out.as_deref()),
        RunConfig::Generate {
            seed,
            n_types,
            n_goods,
            out,
        } => {
            let scenario = generate_random_scenario(*seed, *n_types, *n_goods)?;
            emit(out.as_deref(), &scenario)?;
            Ok(Outcome::Certified)
        }
    }
}

fn read(path: &Path) -> Result<String, CliError> {
    fs::read_to_string(path).map_err(|source| CliError::Io {
        path: path.to_path_buf(),
        source,
    })
}

fn write_text(path: Option<&Path>, text: &str) -> Result<(), CliError> {
    match path {
        Some(path) => fs::write(path, text).map_err(|source| CliError::Io {
            path: path.to_path_buf(),
            source,
        }),
        None => std::io::stdout()
            .write_all(text.as_bytes())
            .map_err(|source| CliError::Io {
                path: PathBuf::from("<stdout>"),
                source,
            }),
    }
}

fn emit<T: Serialize>(path: Option<&Path>, value: &T) -> Result<(), CliError> {
    let text = format::to_json(value).map_err(|source| CliError::Json {
        path: path.map(Path::to_path_buf).unwrap_or_else(|| "<stdout>".into()),
        source,
    })?;
    write_text(path, &text)
}

fn load_scenario(path: &Path) -> Result<Scenario, CliError> {
    Scenario::from_json(&read(path)?).map_err(|e| match e {
        cotm_core::Error::Json(source) => CliError::Json {
            path: path.to_path_buf(),
            source,
        },
        other => other.into(),
    })
}

#[derive(Debug, Serialize)]
#[serde(untagged)]
enum InputReport {
    File { scenario: String },
    Generator { seed: u64, types: usize, goods: usize },
}

fn load_input(input: &InputSource) -> Result<(ValidatedModel, InputReport), CliError> {
    match input {
        InputSource::File(path) => Ok((
            load_scenario(path)?.validate()?,
            InputReport::File {
                scenario: path.display().to_string(),
            },
        )),
        InputSource::Generator { seed, n_types, n_goods } => Ok((
            generate_random_scenario(*seed, *n_types, *n_goods)?.validate()?,
            InputReport::Generator {
                seed: *seed,
                types: *n_types,
                goods: *n_goods,
            },
        )),
    }
}

#[derive(Debug, Serialize)]
struct SolverReport {
    max_iters: usize,
    stop_tol: f64,
    step_rule: StepRule,
    iterations: usize,
    potential_value: f64,
    subgradient_norm_at_best: f64,
    price_box: PriceBox,
}

impl SolverReport {
    fn new(options: &SolverOptions, sol: &DualSolution) -> Self {
        Self {
            max_iters: options.max_iters,
            stop_tol: options.stop_tol,
            step_rule: options.step_rule,
            iterations: sol.iterations,
            potential_value: sol.potential_value,
            subgradient_norm_at_best: sol.subgradient_norm_at_best,
            price_box: sol.price_box.clone(),
        }
    }
}

#[derive(Debug, Serialize)]
struct ToleranceReport {
    gap: f64,
    feasibility: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    equilibrium: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    eps_schedule: Option<Vec<f64>>,
}

fn write_trace(path: Option<&Path>, sol: &DualSolution) -> Result<(), CliError> {
    let (Some(path), Some(trace)) = (path, &sol.trace) else {
        return Ok(());
    };
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["iter", "F", "grad_norm"])?;
    for t in trace {
        w.write_record([t.iter.to_string(), format::float(t.value), format::float(t.grad_norm)])?;
    }
    w.flush().map_err(|source| CliError::Io {
        path: path.to_path_buf(),
        source,
    })
}

#[derive(Debug, Serialize)]
struct SolveReport {
    command: &'static str,
    input: InputReport,
    tolerances: ToleranceReport,
    solver: SolverReport,
    prices: PricePair,
    recovery_eps: Option<f64>,
    coupling: Option<Vec<(usize, usize, f64)>>,
    duality_report: Option<DualityReport>,
    certified: bool,
}

fn solve(
    input: &InputSource,
    options: &SolverOptions,
    tol: &Tolerances,
    trace: Option<&Path>,
    out: Option<&Path>,
) -> Result<Outcome, CliError> {
    let (model, input) = load_input(input)?;
    let options = SolverOptions {
        trace: trace.is_some(),
        ..options.clone()
    };
    let sol = minimize_potential(&model, &options)?;
    write_trace(trace, &sol)?;
    let recovery = match recover_primal(&model, &sol.prices, &DEFAULT_EPS_SCHEDULE) {
        Ok(r) => Some(r),
        Err(cotm_core::Error::RecoveryFailed) => {
            eprintln!("solve: no coupling found on the active arcs for any eps in the schedule");
            None
        }
        Err(e) => return Err(e.into()),
    };
    let report = recovery
        .as_ref()
        .map(|r| duality_report_with_tol(&model, &r.coupling, &sol.prices, tol.feasibility))
        .transpose()?;
    let certified = report.as_ref().is_some_and(|r| r.certifies(tol.gap));
    emit(
        out,
        &SolveReport {
            command: "solve",
            input,
            tolerances: ToleranceReport {
                gap: tol.gap,
                feasibility: tol.feasibility,
                equilibrium: None,
                eps_schedule: Some(DEFAULT_EPS_SCHEDULE.to_vec()),
            },
            solver: SolverReport::new(&options, &sol),
            prices: sol.prices.clone(),
            recovery_eps: recovery.as_ref().map(|r| r.eps),
            coupling: recovery.as_ref().map(|r| r.coupling.triplets()),
            duality_report: report,
            certified,
        },
    )?;
    Ok(Outcome::from_bool(certified))
}

#[derive(Debug, Serialize)]
struct Duals {
    type_potentials: Vec<f64>,
    p: Vec<f64>,
    q: Vec<f64>,
}

#[derive(Debug, Serialize)]
struct OracleReport {
    command: &'static str,
    input: InputReport,
    status: &'static str,
    value: f64,
    coupling: Vec<(usize, usize, f64)>,
    duals: Duals,
    pivots: usize,
}

fn oracle(input: &InputSource, out: Option<&Path>) -> Result<Outcome, CliError> {
    let (model, input) = load_input(input)?;
    let sol = solve_discretized_primal(&model)?;
    emit(
        out,
        &OracleReport {
            command: "oracle",
            input,
            status: "optimal",
            value: sol.value,
            coupling: sol.coupling.triplets(),
            duals: Duals {
                type_potentials: sol.type_potentials,
                p: sol.prices.p,
                q: sol.prices.q,
            },
            pivots: sol.pivots,
        },
    )?;
    Ok(Outcome::Certified)
}

#[derive(Debug, Deserialize)]
struct CouplingFile {
    coupling: Vec<(usize, usize, f64)>,
}

#[derive(Debug, Deserialize)]
struct PriceVectors {
    #[serde(default)]
    p: Vec<f64>,
    #[serde(default)]
    q: Vec<f64>,
}

/// Accepts bare `{p, q}`, a solve report (`prices`) or an oracle report
/// (`duals`).
#[derive(Debug, Deserialize)]
#[serde(untagged)]
enum PricesFile {
    Prices { prices: PriceVectors },
    Duals { duals: PriceVectors },
    Bare(PriceVectors),
}

fn parse_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T, CliError> {
    serde_json::from_str(&read(path)?).map_err(|source| CliError::Json {
        path: path.to_path_buf(),
        source,
    })
}

#[derive(Debug, Serialize)]
struct VerifyReport {
    command: &'static str,
    scenario: String,
    tolerances: ToleranceReport,
    duality_report: DualityReport,
    certified: bool,
}

fn verify(
    scenario: &Path,
    coupling: &Path,
    prices: &Path,
    tol: &Tolerances,
    out: Option<&Path>,
) -> Result<Outcome, CliError> {
    let model = load_scenario(scenario)?.validate()?;
    let triplets: CouplingFile = parse_json(coupling)?;
    let pi = Coupling::from_triplets(model.n_points(), model.n_alts(), &triplets.coupling)?;
    let v = match parse_json::<PricesFile>(prices)? {
        PricesFile::Prices { prices } | PricesFile::Duals { duals: prices } | PricesFile::Bare(prices) => prices,
    };
    let report = duality_report_with_tol(&model, &pi, &PricePair::new(v.p, v.q), tol.feasibility)?;
    let certified = report.certifies(tol.gap);
    emit(
        out,
        &VerifyReport {
            command: "verify",
            scenario: scenario.display().to_string(),
            tolerances: ToleranceReport {
                gap: tol.gap,
                feasibility: tol.feasibility,
                equilibrium: None,
                eps_schedule: None,
            },
            duality_report: report,
            certified,
        },
    )?;
    Ok(Outcome::from_bool(certified))
}

fn apply_supply(economy: &mut GoodsEconomy, supply: &[(String, f64)]) -> Result<(), CliError> {
    for (good, value) in supply {
        let index = economy
            .goods
            .iter()
            .position(|g| g == good)
            .or_else(|| {
                good.parse::<usize>()
                    .ok()
                    .filter(|i| (1..=economy.n_goods()).contains(i))
                    .map(|i| i - 1)
            })
            .ok_or_else(|| CliError::Input(format!("--supply: unknown good {good:?}")))?;
        economy.supply[index] = *value;
    }
    // Re-run the constructor checks on the new supply.
    *economy = GoodsEconomy::new(economy.goods.clone(), economy.supply.clone(), economy.cloud.clone())?;
    Ok(())
}

fn load_economy(source: &EconomySource) -> Result<(GoodsEconomy, serde_json::Value), CliError> {
    match source {
        EconomySource::File(path) => {
            let model = load_scenario(path)?.validate()?;
            Ok((
                GoodsEconomy::from_model(&model)?,
                serde_json::json!({ "scenario": path.display().to_string() }),
            ))
        }
        EconomySource::Random {
            seed,
            n_types,
            n_goods,
            supply,
        } => {
            let mut economy = random_economy(*seed, *n_types, *n_goods)?;
            apply_supply(&mut economy, supply)?;
            Ok((
                economy,
                serde_json::json!({ "seed": seed, "types": n_types, "goods": n_goods }),
            ))
        }
        EconomySource::Grid { n_types, supply } => {
            let mut economy = equal_valuation_economy(*n_types, [0.5, 0.5])?;
            apply_supply(&mut economy, supply)?;
            Ok((
                economy,
                serde_json::json!({ "grid": "equal_valuation", "types": n_types }),
            ))
        }
    }
}

#[derive(Debug, Serialize)]
struct EquilibriumOutput {
    command: &'static str,
    economy: serde_json::Value,
    goods: Vec<String>,
    supply: Vec<f64>,
    tolerances: ToleranceReport,
    solver: SolverReport,
    prices: Vec<f64>,
    /// `recovered_lottery` when recovery succeeded, otherwise the
    /// lowest-index pure demand selection at the prices.
    excess_demand_basis: &'static str,
    excess_demand: Vec<f64>,
    recovery_eps: Option<f64>,
    equilibrium_report: Option<EquilibriumReport>,
    duality_report: Option<DualityReport>,
    certified: bool,
}

fn equilibrium(
    source: &EconomySource,
    options: &SolverOptions,
    tol: &Tolerances,
    trace: Option<&Path>,
    out: Option<&Path>,
) -> Result<Outcome, CliError> {
    let (economy, description) = load_economy(source)?;
    let model = economy.model()?;
    let options = SolverOptions {
        trace: trace.is_some(),
        ..options.clone()
    };
    let sol = tatonnement(&economy, &options)?;
    write_trace(trace, &sol)?;
    let recovery = match recover_primal(&model, &sol.prices, &DEFAULT_EPS_SCHEDULE) {
        Ok(r) => Some(r),
        Err(cotm_core::Error::RecoveryFailed) => {
            eprintln!("equilibrium: no coupling found on the active arcs for any eps in the schedule");
            None
        }
        Err(e) => return Err(e.into()),
    };
    let (eq_report, dual_report) = match &recovery {
        Some(r) => {
            let lottery = extract_allocation(&r.coupling, &economy.cloud)?;
            (
                Some(verify_equilibrium(&economy, &lottery, &sol.prices.q, tol.equilibrium)?),
                Some(duality_report_with_tol(
                    &model,
                    &r.coupling,
                    &sol.prices,
                    tol.feasibility,
                )?),
            )
        }
        None => (None, None),
    };
    let (basis, excess) = match &eq_report {
        Some(rep) => ("recovered_lottery", rep.excess_demand.clone()),
        None => (
            "lowest_index_demand",
            subgradient(&model, &sol.prices, TieRule::LowestIndex)?
                .iter()
                .map(|g| -g)
                .collect(),
        ),
    };
    let certified =
        matches!((&eq_report, &dual_report), (Some(e), Some(d)) if e.is_equilibrium() && d.certifies(tol.gap));
    emit(
        out,
        &EquilibriumOutput {
            command: "equilibrium",
            economy: description,
            goods: economy.goods.clone(),
            supply: economy.supply.clone(),
            tolerances: ToleranceReport {
                gap: tol.gap,
                feasibility: tol.feasibility,
                equilibrium: Some(tol.equilibrium),
                eps_schedule: Some(DEFAULT_EPS_SCHEDULE.to_vec()),
            },
            solver: SolverReport::new(&options, &sol),
            prices: sol.prices.q.clone(),
            excess_demand_basis: basis,
            excess_demand: excess,
            recovery_eps: recovery.as_ref().map(|r| r.eps),
            equilibrium_report: eq_report,
            duality_report: dual_report,
            certified,
        },
    )?;
    Ok(Outcome::from_bool(certified))
}

fn counterexample(max_level: u32, out: Option<&Path>) -> Result<Outcome, CliError> {
    if !(1..=MAX_LEVEL).contains(&max_level) {
        return Err(cotm_core::Error::LevelOutOfRange(max_level).into());
    }
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["n", "m", "distance"])?;
    let mut all_one = true;
    for n in 1..=max_level {
        // Every level must also clear the market at (1/2, 1/2).
        let half = num_rational::Ratio::new(1, 2);
        all_one &= dyadic_allocation(n)?.aggregate_demand() == [half, half];
        for m in n + 1..=max_level {
            let d = dyadic_l1_distance(n, m)?;
            all_one &= d == num_rational::Ratio::from_integer(1);
            w.write_record([n.to_string(), m.to_string(), d.to_string()])?;
        }
    }
    let bytes = w.into_inner().map_err(|e| CliError::Input(e.to_string()))?;
    write_text(out, &String::from_utf8(bytes).expect("CSV of integers is UTF-8"))?;
    Ok(Outcome::from_bool(all_one))
}
