use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

use ccmdp::generate::{generate_gridworld, generate_layered, Budget, GeneratorParams, GridParams};
use ccmdp::io::{read_instance, write_instance};
use ccmdp::oracle::ssp_solve;
use ccmdp::{
    build_layers, enumerate_optimal, evaluate_policy, simulate_risk, solve, Algorithm, Error, MdpInstance, Mode,
    Policy, RunReport, SolverConfig,
};
use clap::{ArgAction, Args, Parser, Subcommand, ValueEnum};

#[derive(Parser)]
#[command(name = "ccmdp", version, about = "Approximation schemes for constrained finite-horizon MDPs")]
struct Cli {
    /// Worker threads; defaults to all cores.
    #[arg(long, global = true, env = "CCMDP_THREADS")]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Solve an instance and print a run report.
    Solve(SolveArgs),
    /// Evaluate a policy file on an instance.
    Verify(VerifyArgs),
    /// Solve and compare against the exhaustive optimum.
    Compare(SolveArgs),
    /// Write a random instance.
    #[command(subcommand)]
    Generate(GenerateCmd),
    /// Search the smallest horizon reaching a goal with a given probability.
    Ssp(SspArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum AlgArg {
    Lim,
    Dis,
    Local,
    Auto,
}

impl From<AlgArg> for Algorithm {
    fn from(a: AlgArg) -> Self {
        match a {
            AlgArg::Lim => Algorithm::Lim,
            AlgArg::Dis => Algorithm::Dis,
            AlgArg::Local => Algorithm::Local,
            AlgArg::Auto => Algorithm::Auto,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum ModeArg {
    Cc,
    C,
}

impl From<ModeArg> for Mode {
    fn from(m: ModeArg) -> Self {
        match m {
            ModeArg::Cc => Mode::ChanceConstrained,
            ModeArg::C => Mode::CostConstrained,
        }
    }
}

#[derive(Args)]
struct SolverArgs {
    #[arg(long, default_value_t = 0.1)]
    eps: f64,
    #[arg(long, value_enum, default_value = "auto")]
    algorithm: AlgArg,
    /// Override the instance's constraint mode.
    #[arg(long, value_enum)]
    mode: Option<ModeArg>,
    #[arg(long, action = ArgAction::Set, default_value_t = true)]
    trim_umax: bool,
    #[arg(long, default_value_t = 3)]
    gamma_cap: usize,
    #[arg(long, default_value_t = 3)]
    cluster_cap: usize,
}

impl SolverArgs {
    fn config(&self) -> SolverConfig {
        SolverConfig {
            eps: self.eps,
            gamma_cap: self.gamma_cap,
            cluster_cap: self.cluster_cap,
            trim_umax: self.trim_umax,
        }
    }
}

#[derive(Args)]
struct SolveArgs {
    instance: PathBuf,
    #[command(flatten)]
    solver: SolverArgs,
    /// Write the policy as `state step action` lines.
    #[arg(long)]
    policy_out: Option<PathBuf>,
    /// Monte Carlo samples for an independent risk estimate (0 = off).
    #[arg(long, default_value_t = 0)]
    samples: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    json: bool,
}

#[derive(Args)]
struct VerifyArgs {
    instance: PathBuf,
    policy: PathBuf,
    #[arg(long, value_enum)]
    mode: Option<ModeArg>,
    #[arg(long, default_value_t = 0)]
    samples: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    json: bool,
}

#[derive(Subcommand)]
enum GenerateCmd {
    /// Layered instance with bounded branching and cluster size.
    Layered(LayeredArgs),
    /// Gridworld with cliffs, unrolled to a finite horizon.
    Grid(GridArgs),
}

#[derive(Args)]
struct LayeredArgs {
    #[arg(long, default_value_t = 4)]
    states_per_level: usize,
    #[arg(long, default_value_t = 2)]
    actions: usize,
    #[arg(long, default_value_t = 3)]
    horizon: usize,
    #[arg(long, default_value_t = 2)]
    gamma: usize,
    #[arg(long, default_value_t = 1)]
    psi: usize,
    #[arg(long, num_args = 2, default_values_t = [0.0, 0.2])]
    risk: Vec<f64>,
    #[arg(long, num_args = 2, default_values_t = [0.0, 10.0])]
    utility: Vec<f64>,
    #[arg(long, num_args = 2, default_values_t = [0.0, 5.0])]
    cost: Vec<f64>,
    /// Absolute budget; overrides --budget-fraction.
    #[arg(long)]
    budget: Option<f64>,
    #[arg(long, default_value_t = 0.5)]
    budget_fraction: f64,
    #[arg(long, value_enum, default_value = "cc")]
    mode: ModeArg,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, short)]
    out: PathBuf,
}

#[derive(Args)]
struct GridArgs {
    #[arg(long, default_value_t = 3)]
    width: usize,
    #[arg(long, default_value_t = 3)]
    height: usize,
    #[arg(long, num_args = 2, default_values_t = [0, 0])]
    start: Vec<usize>,
    #[arg(long, num_args = 2, default_values_t = [2, 2])]
    goal: Vec<usize>,
    /// Cliff cell as `x,y`; repeatable.
    #[arg(long = "cliff", value_parser = parse_cell)]
    cliffs: Vec<(usize, usize)>,
    #[arg(long, default_value_t = 0.1)]
    slip: f64,
    #[arg(long, default_value_t = 1.0)]
    cliff_risk: f64,
    #[arg(long, default_value_t = 0.3)]
    science_density: f64,
    #[arg(long, default_value_t = 4)]
    horizon: usize,
    #[arg(long, default_value_t = 0.2)]
    budget: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, short)]
    out: PathBuf,
}

#[derive(Args)]
struct SspArgs {
    instance: PathBuf,
    /// Goal state name; repeatable.
    #[arg(long = "goal", required = true)]
    goals: Vec<String>,
    #[arg(long)]
    threshold: f64,
    #[arg(long, default_value_t = 20)]
    h_max: usize,
    #[command(flatten)]
    solver: SolverArgs,
    #[arg(long)]
    policy_out: Option<PathBuf>,
}

fn parse_cell(s: &str) -> Result<(usize, usize), String> {
    let (x, y) = s.split_once(',').ok_or_else(|| format!("expected x,y, got {s:?}"))?;
    let p = |v: &str| v.trim().parse::<usize>().map_err(|e| format!("{v:?}: {e}"));
    Ok((p(x)?, p(y)?))
}

fn pair<T: Copy>(v: &[T]) -> (T, T) {
    (v[0], v[1])
}

fn load(path: &PathBuf, mode: Option<ModeArg>) -> ccmdp::Result<MdpInstance> {
    let mut inst = read_instance(path)?;
    if let Some(m) = mode {
        inst.set_mode(m.into());
    }
    Ok(inst)
}

fn is_infeasible(e: &Error) -> bool {
    matches!(e, Error::Infeasible(_) | Error::NoFeasiblePolicy | Error::NoFeasibleHorizon(_))
}

fn run_solve(a: &SolveArgs, with_oracle: bool) -> ccmdp::Result<bool> {
    let inst = load(&a.instance, a.solver.mode)?;
    let g = build_layers(&inst);
    let cfg = a.solver.config();
    let start = Instant::now();
    let sol = solve(&inst, &g, &cfg, a.solver.algorithm.into())?;
    let ms = start.elapsed().as_secs_f64() * 1e3;
    let mut report = RunReport::new(&inst, &g, &sol, cfg.eps, ms);
    if with_oracle {
        report = report.with_oracle(enumerate_optimal(&inst, &g)?.optimal_value);
    }
    if let Some(path) = &a.policy_out {
        std::fs::write(path, sol.policy.to_text(&inst))?;
    }
    let simulated = if a.samples > 0 && inst.mode == Mode::ChanceConstrained {
        Some(simulate_risk(&inst, &g, &sol.policy, a.samples, a.seed)?)
    } else {
        None
    };
    if a.json {
        let mut v = serde_json::to_value(&report).expect("report serializes");
        if let Some(r) = simulated {
            v["simulated_risk"] = r.into();
        }
        println!("{}", serde_json::to_string_pretty(&v).expect("json"));
    } else {
        print!("{}", report.to_text());
        if let Some(r) = simulated {
            println!("simulated_risk={r}");
        }
    }
    Ok(report.feasible)
}

fn run_verify(a: &VerifyArgs) -> ccmdp::Result<bool> {
    let inst = load(&a.instance, a.mode)?;
    let g = build_layers(&inst);
    let policy = Policy::parse(&inst, &std::fs::read_to_string(&a.policy)?)?;
    let rep = evaluate_policy(&inst, &g, &policy)?;
    let simulated = if a.samples > 0 {
        Some(simulate_risk(&inst, &g, &policy, a.samples, a.seed)?)
    } else {
        None
    };
    if a.json {
        let mut v = serde_json::to_value(rep).expect("report serializes");
        if let Some(r) = simulated {
            v["simulated_risk"] = r.into();
        }
        println!("{}", serde_json::to_string_pretty(&v).expect("json"));
    } else {
        println!("value={}", rep.value);
        println!("{}={}", if inst.mode == Mode::CostConstrained { "cost" } else { "risk" }, rep.risk_or_cost);
        println!("budget={}", inst.budget);
        println!("feasible={}", rep.feasible);
        if let Some(r) = simulated {
            println!("simulated_risk={r}");
        }
    }
    Ok(rep.feasible)
}

fn run_generate(cmd: &GenerateCmd) -> ccmdp::Result<bool> {
    let (inst, out) = match cmd {
        GenerateCmd::Layered(a) => {
            let p = GeneratorParams {
                n_states_per_level: a.states_per_level,
                n_actions: a.actions,
                horizon: a.horizon,
                gamma_target: a.gamma,
                psi_target: a.psi,
                risk_range: pair(&a.risk),
                utility_range: pair(&a.utility),
                cost_range: pair(&a.cost),
                budget: a.budget.map_or(Budget::Fraction(a.budget_fraction), Budget::Absolute),
                mode: a.mode.into(),
                seed: a.seed,
            };
            (generate_layered(&p)?, &a.out)
        }
        GenerateCmd::Grid(a) => {
            let p = GridParams {
                width: a.width,
                height: a.height,
                start: pair(&a.start),
                goal: pair(&a.goal),
                cliffs: a.cliffs.clone(),
                slip: a.slip,
                cliff_risk: a.cliff_risk,
                science_density: a.science_density,
                horizon: a.horizon,
                budget: a.budget,
                seed: a.seed,
            };
            (generate_gridworld(&p)?, &a.out)
        }
    };
    write_instance(out, &inst)?;
    let g = build_layers(&inst);
    println!("states={}", inst.n_states());
    println!("gamma={}", g.gamma);
    println!("psi_inclusive={}", g.psi_inclusive);
    Ok(true)
}

fn run_ssp(a: &SspArgs) -> ccmdp::Result<bool> {
    let base = load(&a.instance, None)?;
    let goals = a
        .goals
        .iter()
        .map(|n| base.state_index(n).ok_or_else(|| Error::InvalidArgument(format!("unknown goal state {n:?}"))))
        .collect::<ccmdp::Result<Vec<_>>>()?;
    let r = ssp_solve(&base, &goals, a.threshold, a.h_max, &a.solver.config(), a.solver.algorithm.into())?;
    if let Some(path) = &a.policy_out {
        std::fs::write(path, r.solution.policy.to_text(&r.instance))?;
    }
    println!("horizon={}", r.horizon);
    println!("algorithm={}", r.solution.algorithm);
    println!("value={}", r.solution.eval.value);
    println!("risk={}", r.solution.eval.risk_or_cost);
    println!("success_probability={}", 1.0 - r.solution.eval.risk_or_cost);
    Ok(r.solution.eval.feasible)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(n) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("error: {e}");
            return ExitCode::from(1);
        }
    }
    let result = match &cli.command {
        Command::Solve(a) => run_solve(a, false),
        Command::Compare(a) => run_solve(a, true),
        Command::Verify(a) => run_verify(a),
        Command::Generate(c) => run_generate(c),
        Command::Ssp(a) => run_ssp(a),
    };
    match result {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => {
            println!("status=infeasible");
            ExitCode::from(2)
        }
        Err(e) if is_infeasible(&e) => {
            println!("status=infeasible");
            eprintln!("{e}");
            ExitCode::from(2)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}
