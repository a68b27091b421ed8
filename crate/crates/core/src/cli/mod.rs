//! Batch front end: each subcommand runs one experiment and writes tables plus a
//! manifest into the output directory.
mod output;

use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};

use crate::cfmm::ModifiedExchangeCurve;
use crate::error::Error;
use crate::liquidation::{
    compare_vs_twamm, simulate_policy, value_iteration, MdpConfig, MispricingParams, PoolParams,
};
use crate::noncomposable::{efficient_frontier, mean_variance_sweep, HookScenario};
use crate::routing::{output_curve, scenarios, RoutingProblem, SolveOptions, Status};

pub use output::{gnuplot_stub, sha256_hex, write_atomic, Cell, Format, RunManifest, Table};

#[derive(Debug, Parser)]
#[command(name = "hookroute", version, about = "Routing, liquidation and hook experiments")]
pub struct Cli {
    /// Directory receiving the output tables and manifest.
    #[arg(long, global = true, default_value = "out")]
    pub out: PathBuf,
    #[arg(long, global = true, value_enum, default_value_t = Format::Csv)]
    pub format: Format,
    /// Seed for every random draw; recorded in all outputs.
    #[arg(long, global = true, default_value_t = 0)]
    pub seed: u64,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Subcommand)]
pub enum Command {
    /// Output of the two-link pool + limit order network against the composed curve.
    Pigou {
        #[arg(long, default_value = "0:10:100", allow_hyphen_values = true)]
        grid: Grid,
        #[arg(long)]
        with_order: bool,
    },
    /// Output curve u(s) with and without the limit orders.
    Route {
        /// Problem JSON file, or a built-in name (`pigou`, `table1`).
        #[arg(long, alias = "config", default_value = "table1")]
        problem: String,
        #[arg(long = "s", alias = "grid", default_value = "0:500:100", allow_hyphen_values = true)]
        s: Grid,
    },
    /// Value iteration; dumps value and policy.
    LiquidateSolve {
        #[arg(long)]
        config: PathBuf,
        /// Dump every block instead of only the first.
        #[arg(long)]
        all_steps: bool,
    },
    /// Monte Carlo paths of the optimal policy.
    LiquidateSimulate {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, default_value_t = 200)]
        paths: usize,
    },
    /// Optimal policy minus TWAMM on common random numbers, per volatility.
    CompareTwamm {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, alias = "grid", default_value = "0:0.03:5", allow_hyphen_values = true)]
        sigma: Grid,
        #[arg(long, default_value_t = 500)]
        paths: usize,
    },
    /// Optimal hook trade over (α, β).
    HookMeanVariance {
        #[command(flatten)]
        hook: HookArgs,
        #[arg(long, alias = "grid", default_value = "0:1:50", allow_hyphen_values = true)]
        alpha: Grid,
        /// Exponents of β: the sweep uses 10^x for x on this grid.
        #[arg(long, default_value = "-3:3:50", allow_hyphen_values = true)]
        log_beta: Grid,
    },
    /// Least-variance hook trade for each target output.
    HookFrontier {
        #[command(flatten)]
        hook: HookArgs,
        #[arg(long, alias = "grid", default_value = "49:56:71", allow_hyphen_values = true)]
        tau: Grid,
    },
    /// Gnuplot script for an output CSV.
    Plot { csv: PathBuf },
}

#[derive(Debug, Clone, Args)]
pub struct HookArgs {
    /// Scenario JSON; defaults to D = 100 with unit-price pools.
    #[arg(long)]
    config: Option<PathBuf>,
}

/// Inclusive `start:stop:count` grid.
#[derive(Debug, Clone, PartialEq)]
pub struct Grid(pub Vec<f64>);

impl std::str::FromStr for Grid {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        let parts: Vec<&str> = s.split(':').collect();
        let [a, b, n] = parts.as_slice() else {
            return Err(format!("expected start:stop:count, got `{s}`"));
        };
        let num = |x: &str| x.trim().parse::<f64>().map_err(|e| format!("`{x}`: {e}"));
        let (a, b) = (num(a)?, num(b)?);
        let n: usize = n.trim().parse().map_err(|e| format!("`{n}`: {e}"))?;
        if !(a.is_finite() && b.is_finite()) {
            return Err("grid ends must be finite".into());
        }
        match n {
            0 => Err("grid must have at least one point".into()),
            1 => Ok(Grid(vec![a])),
            _ => Ok(Grid(
                (0..n)
                    .map(|i| if i + 1 == n { b } else { a + (b - a) * i as f64 / (n - 1) as f64 })
                    .collect(),
            )),
        }
    }
}

/// Configuration file of the liquidation commands.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LiquidationConfig {
    pub pool: PoolParams,
    pub mispricing: MispricingParams,
    pub mdp: MdpConfig,
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum CliError {
    #[error(transparent)]
    Model(#[from] Error),
    #[error("{0}: {1}")]
    Io(String, String),
    #[error("solver did not converge: {0}")]
    Nonconvergence(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Model(Error::NoFeasibleRoute { .. }) => 4,
            CliError::Model(_) => 2,
            CliError::Nonconvergence(_) => 3,
            CliError::Io(..) => 1,
        }
    }

    pub fn to_json(&self) -> serde_json::Value {
        let kind = match self {
            CliError::Model(Error::Config { .. }) => "config",
            CliError::Model(Error::InvalidInput(_)) => "invalid_input",
            CliError::Model(Error::Domain { .. }) => "domain",
            CliError::Model(Error::NoFeasibleRoute { .. }) => "infeasible",
            CliError::Model(Error::OracleRefused(_)) => "oracle_refused",
            CliError::Nonconvergence(_) => "nonconvergence",
            CliError::Io(..) => "io",
        };
        let mut v = serde_json::json!({
            "error": kind,
            "message": self.to_string(),
            "exit_code": self.exit_code(),
        });
        if let CliError::Model(Error::Config {
            suggested: Some((lo, hi)),
            ..
        }) = self
        {
            v["suggested"] = serde_json::json!([lo, hi]);
        }
        v
    }
}

fn config_error(message: String) -> CliError {
    CliError::Model(Error::Config {
        message,
        suggested: None,
    })
}

fn read_config(path: &Path) -> Result<String, CliError> {
    std::fs::read_to_string(path).map_err(|e| config_error(format!("{}: {e}", path.display())))
}

fn parse_json<T: serde::de::DeserializeOwned>(text: &str) -> Result<T, CliError> {
    let de = &mut serde_json::Deserializer::from_str(text);
    serde_path_to_error::deserialize(de).map_err(|e| {
        let path = e.path().to_string();
        config_error(format!("{path}: {}", e.inner()))
    })
}

fn load_liquidation(path: &Path) -> Result<(LiquidationConfig, String), CliError> {
    let text = read_config(path)?;
    let cfg: LiquidationConfig = parse_json(&text)?;
    cfg.mdp.validate()?;
    cfg.mispricing.validate()?;
    Ok((cfg, text))
}

fn load_hook(args: &HookArgs) -> Result<(HookScenario, String), CliError> {
    match &args.config {
        Some(p) => {
            let text = read_config(p)?;
            Ok((HookScenario::from_json(&text)?, text))
        }
        None => {
            let s = HookScenario::default();
            Ok((s, serde_json::to_string(&s).expect("scenario serializes")))
        }
    }
}

/// Executes one command and returns the files written.
pub fn run(cli: &Cli) -> Result<Vec<PathBuf>, CliError> {
    let (tables, config_text) = match &cli.command {
        Command::Plot { csv } => {
            return match gnuplot_stub(csv)? {
                Some(p) => Ok(vec![p]),
                None => {
                    eprintln!("warning: unrecognized CSV schema in {}; no script written", csv.display());
                    Ok(Vec::new())
                }
            };
        }
        Command::Pigou { grid, with_order } => (pigou(&grid.0, *with_order)?, "builtin:pigou".to_string()),
        Command::Route { problem, s } => {
            let (p, text) = match scenarios::by_name(problem) {
                Some(p) => (p, format!("builtin:{problem}")),
                None => {
                    let text = read_config(Path::new(problem))?;
                    (RoutingProblem::from_json(&text)?, text)
                }
            };
            (route(&p, &s.0)?, text)
        }
        Command::LiquidateSolve { config, all_steps } => {
            let (cfg, text) = load_liquidation(config)?;
            (liquidate_solve(&cfg, *all_steps)?, text)
        }
        Command::LiquidateSimulate { config, paths } => {
            let (cfg, text) = load_liquidation(config)?;
            (liquidate_simulate(&cfg, *paths, cli.seed)?, text)
        }
        Command::CompareTwamm { config, sigma, paths } => {
            let (cfg, text) = load_liquidation(config)?;
            let rows = compare_vs_twamm(&sigma.0, &cfg.mdp, &cfg.pool, &cfg.mispricing, *paths, cli.seed)?;
            let mut t = Table::new("comparison", vec!["sigma", "mean_excess", "stderr"]);
            for r in rows {
                t.push(vec![r.sigma.into(), r.mean_excess.into(), r.stderr.into()]);
            }
            (vec![t], text)
        }
        Command::HookMeanVariance { hook, alpha, log_beta } => {
            let (s, text) = load_hook(hook)?;
            let betas: Vec<f64> = log_beta.0.iter().map(|x| 10f64.powf(*x)).collect();
            let mut t = Table::new(
                "mean_variance",
                vec!["alpha", "beta", "variance_form", "delta_star", "objective"],
            );
            for r in mean_variance_sweep(&s, &alpha.0, &betas)? {
                t.push(vec![
                    r.alpha.into(),
                    r.beta.into(),
                    r.variance_form.into(),
                    r.delta_star.into(),
                    r.objective.into(),
                ]);
            }
            (vec![t], text)
        }
        Command::HookFrontier { hook, tau } => {
            let (s, text) = load_hook(hook)?;
            let mut t = Table::new("frontier", vec!["tau", "delta_star", "variance_star", "feasible"]);
            for p in efficient_frontier(&s, &tau.0)? {
                t.push(vec![p.tau.into(), p.delta_star.into(), p.variance_star.into(), p.feasible.into()]);
            }
            (vec![t], text)
        }
    };

    let version = env!("CARGO_PKG_VERSION");
    let config_hash = sha256_hex(config_text.as_bytes());
    let command = format!("{:?}", cli.command);
    let run_hash = sha256_hex(format!("{command}\n{config_hash}\n{}\n{version}", cli.seed).as_bytes());
    let manifest = RunManifest {
        command,
        config_hash,
        run_hash,
        seed: cli.seed,
        version: version.to_string(),
        outputs: tables.iter().map(|t| t.file_name(cli.format)).collect(),
    };
    output::write_outputs(&cli.out, &tables, cli.format, manifest)
}

fn pigou(grid: &[f64], with_order: bool) -> Result<Vec<Table>, CliError> {
    let full = scenarios::pigou();
    let p = if with_order { full.clone() } else { full.without_orders() };
    let curve = output_curve(&p, grid, SolveOptions::default())?;
    let (market, order) = scenarios::pigou_parts();
    let (input, output) = (full.input(), full.output());
    let composed = ModifiedExchangeCurve::new(market.clone(), input, output, order)?;
    let mut t = Table::new("pigou", vec!["d", "u", if with_order { "g_tilde" } else { "g" }]);
    for pt in curve {
        check_converged(&pt.solution.status, pt.s)?;
        let reference = if with_order {
            composed.eval(pt.s)?
        } else {
            market.forward_exchange(input, output, pt.s)?
        };
        t.push(vec![pt.s.into(), pt.utility.into(), reference.into()]);
    }
    Ok(vec![t])
}

fn check_converged(status: &Status, s: f64) -> Result<(), CliError> {
    match status {
        Status::Optimal => Ok(()),
        Status::MaxIter => Err(CliError::Nonconvergence(format!(
            "iteration cap reached at budget {s}"
        ))),
    }
}

fn route(p: &RoutingProblem, grid: &[f64]) -> Result<Vec<Table>, CliError> {
    let with = output_curve(p, grid, SolveOptions::default())?;
    let without = output_curve(&p.without_orders(), grid, SolveOptions::default())?;
    let mut t = Table::new("route", vec!["s", "u_with", "u_without", "order_output"]);
    for (a, b) in with.iter().zip(&without) {
        check_converged(&a.solution.status, a.s)?;
        check_converged(&b.solution.status, b.s)?;
        t.push(vec![
            a.s.into(),
            a.utility.into(),
            b.utility.into(),
            a.solution.order_output().into(),
        ]);
    }
    Ok(vec![t])
}

fn liquidate_solve(cfg: &LiquidationConfig, all_steps: bool) -> Result<Vec<Table>, CliError> {
    let (v, p) = value_iteration(&cfg.mdp, &cfg.pool, &cfg.mispricing)?;
    let steps = if all_steps { cfg.mdp.horizon } else { 1 };
    let mut t = Table::new("value_policy", vec!["t", "I", "z", "value", "action"]);
    for step in 0..steps {
        for i in 0..v.inventory.n {
            for j in 0..v.mispricing.n {
                t.push(vec![
                    step.into(),
                    v.inventory.point(i).into(),
                    v.mispricing.point(j).into(),
                    v.at(step, i, j).into(),
                    p.trade(step, i, j).into(),
                ]);
            }
        }
    }
    Ok(vec![t])
}

fn liquidate_simulate(cfg: &LiquidationConfig, paths: usize, seed: u64) -> Result<Vec<Table>, CliError> {
    let (_, policy) = value_iteration(&cfg.mdp, &cfg.pool, &cfg.mispricing)?;
    let sim = simulate_policy(&policy, &cfg.mdp, &cfg.pool, &cfg.mispricing, paths, seed)?;
    let mut inv = Table::new("inventory", vec!["path", "t", "inventory"]);
    let mut out = Table::new("outputs", vec!["path", "output", "reward"]);
    for (n, path) in sim.inventory.iter().enumerate() {
        for (t, x) in path.iter().enumerate() {
            inv.push(vec![n.into(), t.into(), (*x).into()]);
        }
        out.push(vec![
            n.into(),
            sim.output[n].into(),
            sim.rewards[n].iter().sum::<f64>().into(),
        ]);
    }
    Ok(vec![inv, out])
}

/// Entry point for the binary: parses arguments, runs, and maps failures to
/// exit codes with a JSON error on stderr.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = e.exit_code();
            let _ = e.print();
            return code;
        }
    };
    match run(&cli) {
        Ok(files) => {
            for f in files {
                println!("{}", f.display());
            }
            0
        }
        Err(e) => {
            eprintln!("{}", e.to_json());
            e.exit_code()
        }
    }
}
