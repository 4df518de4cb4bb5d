//! Command-line parsing into a validated [`RunConfig`].

use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use cotm_core::{SolverOptions, StepRule};

use crate::UsageError;

pub const DEFAULT_GAP_TOL: f64 = 1e-3;
pub const DEFAULT_FEASIBILITY_TOL: f64 = 1e-8;
pub const DEFAULT_EQUILIBRIUM_TOL: f64 = 1e-6;
pub const DEFAULT_TYPES: usize = 10;
pub const DEFAULT_GOODS: usize = 2;
pub const DEFAULT_GRID_TYPES: usize = 50;
pub const DEFAULT_MAX_LEVEL: u32 = 12;

#[derive(Debug, Parser)]
#[command(
    name = "cotm",
    version,
    about = "Constrained semi-discrete optimal transport and indivisible-goods markets"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Minimize the dual potential, recover a coupling and report the gap.
    Solve {
        #[command(flatten)]
        input: InputArgs,
        #[command(flatten)]
        solver: SolverArgs,
        /// Certification threshold on the duality gap.
        #[arg(long, default_value_t = DEFAULT_GAP_TOL, allow_hyphen_values = true)]
        gap_tol: f64,
        #[arg(long, default_value_t = DEFAULT_FEASIBILITY_TOL, allow_hyphen_values = true)]
        feas_tol: f64,
        /// CSV file receiving `iter,F,grad_norm` per iteration.
        #[arg(long)]
        trace: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Solve the discretized primal exactly with the simplex oracle.
    Oracle {
        #[command(flatten)]
        input: InputArgs,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Certify a (coupling, prices) pair against a scenario.
    Verify {
        #[arg(long)]
        scenario: Option<PathBuf>,
        /// JSON with a `coupling` array of `[i, x, mass]` triplets.
        #[arg(long)]
        coupling: Option<PathBuf>,
        /// JSON with `{p, q}` at the top level or under `prices` / `duals`.
        #[arg(long)]
        prices: Option<PathBuf>,
        #[arg(long, default_value_t = DEFAULT_GAP_TOL, allow_hyphen_values = true)]
        gap_tol: f64,
        #[arg(long, default_value_t = DEFAULT_FEASIBILITY_TOL, allow_hyphen_values = true)]
        feas_tol: f64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Tatonnement on a goods economy, then equilibrium extraction.
    Equilibrium {
        /// Goods economy scenario; excludes the generator flags.
        #[arg(long)]
        scenario: Option<PathBuf>,
        /// Random economy seed; without it the equal-valuation grid economy is used.
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        goods: Option<usize>,
        #[arg(long)]
        types: Option<usize>,
        /// Per-good supply as `g=v,...`, goods by name or 1-based index.
        #[arg(long)]
        supply: Option<String>,
        #[command(flatten)]
        solver: SolverArgs,
        #[arg(long, default_value_t = DEFAULT_GAP_TOL, allow_hyphen_values = true)]
        gap_tol: f64,
        #[arg(long, default_value_t = DEFAULT_FEASIBILITY_TOL, allow_hyphen_values = true)]
        feas_tol: f64,
        /// Market clearing and demand tolerance.
        #[arg(long, default_value_t = DEFAULT_EQUILIBRIUM_TOL, allow_hyphen_values = true)]
        eq_tol: f64,
        #[arg(long)]
        trace: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Exact L1 distances between the dyadic allocations.
    Counterexample {
        #[arg(long, default_value_t = DEFAULT_MAX_LEVEL)]
        max_level: u32,
        /// CSV `n,m,distance`; stdout when absent.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Write a random goods-economy scenario.
    Generate {
        #[arg(long)]
        seed: u64,
        #[arg(long, default_value_t = DEFAULT_TYPES)]
        types: usize,
        #[arg(long, default_value_t = DEFAULT_GOODS)]
        goods: usize,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Debug, Args)]
struct InputArgs {
    #[arg(long)]
    scenario: Option<PathBuf>,
    /// Generate a random goods economy instead of reading a file.
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    types: Option<usize>,
    #[arg(long)]
    goods: Option<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum RuleName {
    Restarted,
    Diminishing,
}

#[derive(Debug, Args)]
struct SolverArgs {
    #[arg(long, default_value_t = 5000)]
    max_iters: usize,
    #[arg(long, default_value_t = 1e-6, allow_hyphen_values = true)]
    stop_tol: f64,
    /// Initial step length; one tenth of the price-box diameter when absent.
    #[arg(long, allow_hyphen_values = true)]
    step0: Option<f64>,
    #[arg(long, value_enum, default_value_t = RuleName::Restarted)]
    step_rule: RuleName,
    /// Steps per halving for the restarted rule.
    #[arg(long)]
    stage_len: Option<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum InputSource {
    File(PathBuf),
    Generator { seed: u64, n_types: usize, n_goods: usize },
}

#[derive(Debug, Clone, PartialEq)]
pub enum EconomySource {
    File(PathBuf),
    Random {
        seed: u64,
        n_types: usize,
        n_goods: usize,
        supply: Vec<(String, f64)>,
    },
    /// Equally weighted grid of types with equal valuations for every
    /// nonempty bundle, two goods.
    Grid {
        n_types: usize,
        supply: Vec<(String, f64)>,
    },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Tolerances {
    pub gap: f64,
    pub feasibility: f64,
    pub equilibrium: f64,
}

#[derive(Debug, Clone)]
pub enum RunConfig {
    Solve {
        input: InputSource,
        solver: SolverOptions,
        tolerances: Tolerances,
        trace: Option<PathBuf>,
        out: Option<PathBuf>,
    },
    Oracle {
        input: InputSource,
        out: Option<PathBuf>,
    },
    Verify {
        scenario: PathBuf,
        coupling: PathBuf,
        prices: PathBuf,
        tolerances: Tolerances,
        out: Option<PathBuf>,
    },
    Equilibrium {
        source: EconomySource,
        solver: SolverOptions,
        tolerances: Tolerances,
        trace: Option<PathBuf>,
        out: Option<PathBuf>,
    },
    Counterexample {
        max_level: u32,
        out: Option<PathBuf>,
    },
    Generate {
        seed: u64,
        n_types: usize,
        n_goods: usize,
        out: Option<PathBuf>,
    },
}

impl RunConfig {
    pub fn subcommand(&self) -> &'static str {
        match self {
            RunConfig::Solve { .. } => "solve",
            RunConfig::Oracle { .. } => "oracle",
            RunConfig::Verify { .. } => "verify",
            RunConfig::Equilibrium { .. } => "equilibrium",
            RunConfig::Counterexample { .. } => "counterexample",
            RunConfig::Generate { .. } => "generate",
        }
    }
}

fn usage(flag: &str, message: impl Into<String>) -> UsageError {
    UsageError {
        flag: flag.to_string(),
        message: message.into(),
    }
}

fn positive(flag: &str, v: f64) -> Result<f64, UsageError> {
    if v > 0.0 && v.is_finite() {
        Ok(v)
    } else {
        Err(usage(flag, format!("must be a positive number, got {v}")))
    }
}

fn input_source(args: InputArgs) -> Result<InputSource, UsageError> {
    match (args.scenario, args.seed) {
        (Some(_), Some(_)) => Err(usage("--seed", "give either --scenario or --seed, not both")),
        (None, None) => Err(usage(
            "--scenario",
            "an input is required: --scenario <path> or --seed <u64>",
        )),
        (Some(path), None) => {
            if args.types.is_some() {
                return Err(usage("--types", "only applies to generated scenarios (--seed)"));
            }
            if args.goods.is_some() {
                return Err(usage("--goods", "only applies to generated scenarios (--seed)"));
            }
            Ok(InputSource::File(path))
        }
        (None, Some(seed)) => Ok(InputSource::Generator {
            seed,
            n_types: args.types.unwrap_or(DEFAULT_TYPES),
            n_goods: args.goods.unwrap_or(DEFAULT_GOODS),
        }),
    }
}

fn solver_options(args: SolverArgs) -> Result<SolverOptions, UsageError> {
    if args.max_iters == 0 {
        return Err(usage("--max-iters", "must be at least 1"));
    }
    let stop_tol = positive("--stop-tol", args.stop_tol)?;
    let step0 = args.step0.map(|s| positive("--step0", s)).transpose()?;
    let step_rule = match args.step_rule {
        RuleName::Restarted => {
            if args.stage_len == Some(0) {
                return Err(usage("--stage-len", "must be at least 1"));
            }
            StepRule::Restarted {
                step0,
                stage_len: args.stage_len,
            }
        }
        RuleName::Diminishing => {
            if args.stage_len.is_some() {
                return Err(usage("--stage-len", "only applies to --step-rule restarted"));
            }
            StepRule::Diminishing { step0 }
        }
    };
    Ok(SolverOptions {
        max_iters: args.max_iters,
        stop_tol,
        step_rule,
        ..SolverOptions::default()
    })
}

/// Parses `g=v,...`; the good names are resolved against the economy later.
pub fn parse_supply(text: &str) -> Result<Vec<(String, f64)>, UsageError> {
    let mut out: Vec<(String, f64)> = Vec::new();
    for item in text.split(',').map(str::trim).filter(|s| !s.is_empty()) {
        let (good, value) = item
            .split_once('=')
            .ok_or_else(|| usage("--supply", format!("expected g=v, got {item:?}")))?;
        let good = good.trim().to_string();
        let value: f64 = value
            .trim()
            .parse()
            .map_err(|_| usage("--supply", format!("bad supply value in {item:?}")))?;
        if out.iter().any(|(g, _)| *g == good) {
            return Err(usage("--supply", format!("good {good} given twice")));
        }
        out.push((good, value));
    }
    if out.is_empty() {
        return Err(usage("--supply", "no entries"));
    }
    Ok(out)
}

fn tolerances(gap: f64, feasibility: f64, equilibrium: f64) -> Result<Tolerances, UsageError> {
    Ok(Tolerances {
        gap: positive("--gap-tol", gap)?,
        feasibility: positive("--feas-tol", feasibility)?,
        equilibrium: positive("--eq-tol", equilibrium)?,
    })
}

fn required(flag: &str, v: Option<PathBuf>) -> Result<PathBuf, UsageError> {
    v.ok_or_else(|| usage(flag, "is required"))
}

/// `Ok(None)` means clap already printed help or version output.
pub fn parse_config<I, T>(argv: I) -> Result<Option<RunConfig>, UsageError>
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                print!("{e}");
                return Ok(None);
            }
            let flag = e
                .get(clap::error::ContextKind::InvalidArg)
                .and_then(|a| a.to_string().split_whitespace().next().map(str::to_string))
                .unwrap_or_default();
            return Err(UsageError {
                flag,
                message: e.render().to_string().trim_end().to_string(),
            });
        }
    };
    let config = match cli.command {
        Command::Solve {
            input,
            solver,
            gap_tol,
            feas_tol,
            trace,
            out,
        } => RunConfig::Solve {
            input: input_source(input)?,
            solver: solver_options(solver)?,
            tolerances: tolerances(gap_tol, feas_tol, DEFAULT_EQUILIBRIUM_TOL)?,
            trace,
            out,
        },
        Command::Oracle { input, out } => RunConfig::Oracle {
            input: input_source(input)?,
            out,
        },
        Command::Verify {
            scenario,
            coupling,
            prices,
            gap_tol,
            feas_tol,
            out,
        } => RunConfig::Verify {
            scenario: required("--scenario", scenario)?,
            coupling: required("--coupling", coupling)?,
            prices: required("--prices", prices)?,
            tolerances: tolerances(gap_tol, feas_tol, DEFAULT_EQUILIBRIUM_TOL)?,
            out,
        },
        Command::Equilibrium {
            scenario,
            seed,
            goods,
            types,
            supply,
            solver,
            gap_tol,
            feas_tol,
            eq_tol,
            trace,
            out,
        } => {
            let supply = supply.as_deref().map(parse_supply).transpose()?;
            let source = match (scenario, seed) {
                (Some(path), _) => {
                    for (flag, given) in [
                        ("--seed", seed.is_some()),
                        ("--goods", goods.is_some()),
                        ("--types", types.is_some()),
                        ("--supply", supply.is_some()),
                    ] {
                        if given {
                            return Err(usage(flag, "cannot be combined with --scenario"));
                        }
                    }
                    EconomySource::File(path)
                }
                (None, Some(seed)) => EconomySource::Random {
                    seed,
                    n_types: types.unwrap_or(DEFAULT_TYPES),
                    n_goods: goods.unwrap_or(DEFAULT_GOODS),
                    supply: supply.unwrap_or_default(),
                },
                (None, None) => {
                    if goods.is_some_and(|g| g != 2) {
                        return Err(usage(
                            "--goods",
                            "the grid economy has exactly 2 goods; use --seed for others",
                        ));
                    }
                    EconomySource::Grid {
                        n_types: types.unwrap_or(DEFAULT_GRID_TYPES),
                        supply: supply.unwrap_or_default(),
                    }
                }
            };
            RunConfig::Equilibrium {
                source,
                solver: solver_options(solver)?,
                tolerances: tolerances(gap_tol, feas_tol, eq_tol)?,
                trace,
                out,
            }
        }
        Command::Counterexample { max_level, out } => RunConfig::Counterexample { max_level, out },
        Command::Generate {
            seed,
            types,
            goods,
            out,
        } => RunConfig::Generate {
            seed,
            n_types: types,
            n_goods: goods,
            out,
        },
    };
    Ok(Some(config))
}
