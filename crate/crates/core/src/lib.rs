//! Fully polynomial-time approximation schemes for finite-horizon constrained
//! (C-MDP) and chance-constrained (CC-MDP) Markov decision processes.
//!
//! The crate is organised bottom-up:
//!
//! - [`mdp`]: instances, policies and validation.
//! - [`layers`]: the time-layered And-Or graph with reachability sets,
//!   clusters and the structural constants `gamma` / `psi`.
//! - [`eval`]: exact policy evaluation and Monte Carlo risk estimation.
//! - [`discretize`]: utility grids, floor rounding and `U_max` trimming.
//! - [`knapsack`]: multiple-choice minimum knapsack (scalar and vector valued).
//! - [`solver`]: the three dynamic programs and policy extraction.
//! - [`oracle`]: brute-force ground truth and the SSP horizon search.
//! - [`io`] and [`generate`]: the text instance format and seeded generators.
//! - [`report`]: run summaries shared with the command-line driver.

pub mod discretize;
pub mod error;
pub mod eval;
pub mod generate;
pub mod io;
pub mod knapsack;
pub mod layers;
pub mod mdp;
pub mod oracle;
pub mod report;
pub mod solver;

pub use discretize::{grid_for_level, round_down, trim_umax, ActionMask, GridScheme, TrimResult, ValueGrid};
pub use error::{Error, Result};
pub use eval::{evaluate_policy, simulate_risk, EvalReport};
pub use knapsack::{exact_mcminks, solve_mcminks, solve_mmcminks, Allocation, Choice, KnapsackInstance};
pub use layers::{build_layers, LayeredGraph};
pub use mdp::{validate_instance, ActionId, InstanceBuilder, MdpInstance, Mode, Policy, StateId};
pub use oracle::{enumerate_optimal, ssp_solve, OracleResult};
pub use report::RunReport;
pub use solver::{solve, solve_dis, solve_lim, solve_local, Algorithm, Solution, SolverConfig};

/// Absolute slack applied when comparing a risk or cost against the budget.
pub const FEASIBILITY_SLACK: f64 = 1e-12;

/// Absolute tolerance on successor probability sums.
pub const PROBABILITY_TOLERANCE: f64 = 1e-9;
