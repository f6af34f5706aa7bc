//! `dmono` command-line front end.
//!
//! Exit codes: 0 success, 1 verification or assumption failure, 2 input error.
//!
//! Model files are TOML. Unknown keys are rejected.
//!
//! ```toml
//! name = "optional label"
//! x_lo = 0.5             # smallest allocation, > 0
//! x_hi = 3.0             # largest allocation
//! delta = 0.99           # discount factor in [0, 1), default 0.9
//!
//! [value]                # v(x)
//! family = "quadratic"   # a x - b x^2 / 2
//! a = 1.0
//! b = 1.0
//! # or: family = "piecewise_marginal", knots = [[z, v'(z)], ...]
//!
//! [dist]                 # continuous type distribution
//! family = "uniform"     # or "linear_density" with `slope`
//! lo = 0.1
//! hi = 2.0
//!
//! [discrete]             # finite-type models, used by `discrete`
//! types = [1.1, 2.1, 3.1]
//! probs = [0.96, 0.03, 0.01]
//! free_disposal = true
//! [discrete.cost]        # optional: "zero", "linear" (c1), "quadratic" (c1, c2)
//! family = "linear"
//! c1 = 0.01
//! ```
//!
//! CSV columns: `check` id,holds,margin,witness; `static` theta,alloc,consumption,price,rent;
//! `coase`/`folk` t,x,p,cutoff_hi,cutoff_lo,mass; `weakmarkov` theta,V,policy,price;
//! `discrete` t,x,p,buyers; `sweep` delta,V,margin,T (weakmarkov) or
//! delta,n,s,payoff,ic_margin,reversion_margin,markov_margin,pass (folk).

use std::io::Write;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use rayon::prelude::*;
use serde::Serialize;
use serde_json::json;

use crate::coase_solver::{clearing_diagnostics, solve_weak_markov, uniform_coase_check, CoaseOptions};
use crate::config::{preset, ModelFile, PRESET_NAMES};
use crate::discrete::{self, DiscreteMode};
use crate::error::{Error, Result};
use crate::model::Primitives;
use crate::paths::{self, EquilibriumPath, PathKind, TailParams};
use crate::static_mech::{self, DEFAULT_GRID};
use crate::verify::{default_reversion, verify_path, Tolerances, VerificationReport, VerifyContext};

#[derive(Debug, Parser)]
#[command(name = "dmono", version, about = "Durable-goods monopoly laboratory")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Args)]
pub struct Common {
    /// Model file (TOML).
    #[arg(long, conflicts_with = "preset")]
    pub model: Option<PathBuf>,
    /// Bundled model: cm, rm, three-type, three-type-disposal, three-type-cost, marketing, saas, data, land.
    #[arg(long)]
    pub preset: Option<String>,
    /// Override the model's discount factor.
    #[arg(long)]
    pub delta: Option<f64>,
    #[arg(long, value_enum, default_value_t = Format::Json)]
    pub format: Format,
    /// Write the main output here instead of stdout.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Json,
    Csv,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SweepVar {
    Delta,
    N,
    S,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SweepSolver {
    Weakmarkov,
    Folk,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum DisposalMode {
    Coasian,
    Reputational,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Check the model assumptions.
    Check {
        #[command(flatten)]
        common: Common,
        /// Assumptions that must hold for exit code 0 (default: all).
        #[arg(long, value_delimiter = ',')]
        require: Vec<String>,
    },
    /// Static commitment benchmark.
    Static {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value_t = DEFAULT_GRID)]
        grid_n: usize,
        /// Require the lowest type's efficient consumption for every type.
        #[arg(long)]
        constrained: bool,
    },
    /// Immediate-clearing path with its verification report.
    Coase {
        #[command(flatten)]
        common: Common,
    },
    /// Skimming path: segment construction, interpolation, payoff target, or relaxed tail.
    Folk {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value_t = 50)]
        n: usize,
        #[arg(long, conflicts_with = "target")]
        s: Option<f64>,
        #[arg(long)]
        target: Option<f64>,
        /// Build the relaxed-tail path (lowest type's efficient consumption above x_lo).
        #[arg(long, conflicts_with_all = ["s", "target"])]
        relaxed: bool,
        #[arg(long, requires = "relaxed")]
        eps_prime: Option<f64>,
        #[arg(long, requires = "relaxed")]
        theta_dd: Option<f64>,
        /// Grid size of the weak-Markov reversion solves.
        #[arg(long, default_value_t = 2001)]
        grid_n: usize,
        /// Emit the path even when verification fails.
        #[arg(long)]
        unchecked: bool,
    },
    /// Weak-Markov dynamics with a fixed on-path allocation.
    Weakmarkov {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        x_cap: Option<f64>,
        #[arg(long)]
        theta_top: Option<f64>,
        #[arg(long, default_value_t = 2001)]
        grid_n: usize,
        #[arg(long, default_value_t = 1e-10)]
        tol: f64,
        /// Cross-check by restarting from three initial guesses.
        #[arg(long)]
        restarts: bool,
    },
    /// Finite-type game.
    Discrete {
        #[command(flatten)]
        common: Common,
        /// Treat buyers as unable to discard excess allocation.
        #[arg(long)]
        no_disposal: bool,
        /// Outcome to construct when buyers can discard.
        #[arg(long, value_enum)]
        mode: Option<DisposalMode>,
    },
    /// One CSV row per grid point.
    Sweep {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_enum, default_value_t = SweepSolver::Weakmarkov)]
        solver: SweepSolver,
        #[arg(long, value_enum)]
        var: SweepVar,
        #[arg(long)]
        from: f64,
        #[arg(long)]
        to: f64,
        #[arg(long, default_value_t = 10)]
        points: usize,
        /// Segment count for folk sweeps over delta or s.
        #[arg(long, default_value_t = 50)]
        n: usize,
        /// Interpolation parameter for folk sweeps over delta or n.
        #[arg(long, default_value_t = 1.0)]
        s: f64,
        #[arg(long)]
        x_cap: Option<f64>,
        #[arg(long)]
        theta_top: Option<f64>,
        #[arg(long, default_value_t = 2001)]
        grid_n: usize,
    },
    /// Verify a path exported as JSON by `folk` or `coase`.
    Verify {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        path: PathBuf,
        #[arg(long, default_value_t = 2001)]
        grid_n: usize,
    },
}

/// Result of a command that ran to completion.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Status {
    Ok,
    Failed,
}

impl Common {
    fn model_file(&self) -> Result<ModelFile> {
        let mut m = match (&self.model, &self.preset) {
            (Some(p), _) => ModelFile::from_path(p)?,
            (None, Some(name)) => preset(name)?,
            (None, None) => {
                return Err(Error::Invalid(format!("give --model FILE or --preset NAME ({})", PRESET_NAMES.join(", "))))
            }
        };
        if let Some(d) = self.delta {
            m.delta = d;
        }
        Ok(m)
    }

    fn primitives(&self) -> Result<Primitives> {
        self.model_file()?.primitives()
    }

    fn sink(&self) -> Result<Box<dyn Write>> {
        Ok(match &self.out {
            Some(p) => Box::new(std::fs::File::create(p).map_err(|e| Error::Invalid(format!("{}: {e}", p.display())))?),
            None => Box::new(std::io::stdout().lock()),
        })
    }

    fn emit_json<T: Serialize>(&self, value: &T) -> Result<()> {
        let mut w = self.sink()?;
        serde_json::to_writer_pretty(&mut w, value).map_err(|e| Error::Invalid(e.to_string()))?;
        writeln!(w).map_err(|e| Error::Invalid(e.to_string()))
    }
}

fn io_err(e: std::io::Error) -> Error {
    Error::Invalid(e.to_string())
}

pub fn main() -> i32 {
    main_with(std::env::args_os())
}

/// Parse `args` (program name first) and run; returns the process exit code.
pub fn main_with<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    match run(cli) {
        Ok(Status::Ok) => 0,
        Ok(Status::Failed) => 1,
        Err(e) => {
            eprintln!("error: {e}");
            2
        }
    }
}

pub fn run(cli: Cli) -> Result<Status> {
    match cli.command {
        Command::Check { common, require } => cmd_check(&common, &require),
        Command::Static { common, grid_n, constrained } => cmd_static(&common, grid_n, constrained),
        Command::Coase { common } => cmd_coase(&common),
        Command::Folk { common, n, s, target, relaxed, eps_prime, theta_dd, grid_n, unchecked } => {
            let prim = common.primitives()?;
            let path = if relaxed {
                paths::build_relaxed_tail(&prim, n, TailParams { eps_prime, theta_dd })?
            } else if let Some(t) = target {
                paths::target_payoff(&prim, n, prim.delta, t)?
            } else if let Some(s) = s {
                paths::interpolate_family(&prim, n, s)?
            } else {
                paths::build_reputational(&prim, n)?
            };
            emit_verified(&common, &prim, &path, grid_n, unchecked)
        }
        Command::Weakmarkov { common, x_cap, theta_top, grid_n, tol, restarts } => {
            cmd_weakmarkov(&common, x_cap, theta_top, grid_n, tol, restarts)
        }
        Command::Discrete { common, no_disposal, mode } => cmd_discrete(&common, no_disposal, mode),
        Command::Sweep { common, solver, var, from, to, points, n, s, x_cap, theta_top, grid_n } => {
            cmd_sweep(&common, solver, var, (from, to, points), n, s, x_cap, theta_top, grid_n)
        }
        Command::Verify { common, path, grid_n } => cmd_verify(&common, &path, grid_n),
    }
}

pub fn cmd_check(common: &Common, require: &[String]) -> Result<Status> {
    let report = common.primitives()?.check_assumptions();
    let ids: Vec<&str> = if require.is_empty() {
        report.records.iter().map(|r| r.id.as_str()).collect()
    } else {
        require.iter().map(|s| s.trim()).collect()
    };
    let verdict = report.require(&ids);
    if let Err(Error::Invalid(msg)) = &verdict {
        return Err(Error::Invalid(msg.clone()));
    }
    match common.format {
        Format::Json => common.emit_json(&report)?,
        Format::Csv => {
            let mut wtr = csv::Writer::from_writer(common.sink()?);
            wtr.write_record(["id", "holds", "margin", "witness"]).map_err(|e| Error::Invalid(e.to_string()))?;
            for r in &report.records {
                wtr.serialize((&r.id, r.holds, r.margin, r.witness)).map_err(|e| Error::Invalid(e.to_string()))?;
            }
            wtr.flush().map_err(io_err)?;
        }
    }
    Ok(if verdict.is_ok() { Status::Ok } else { Status::Failed })
}

pub fn cmd_static(common: &Common, grid_n: usize, constrained: bool) -> Result<Status> {
    let prim = common.primitives()?;
    let sched = if constrained {
        static_mech::solve_constrained(&prim, grid_n)?
    } else {
        static_mech::solve_unconstrained(&prim, grid_n)?
    };
    match common.format {
        Format::Csv => sched.write_csv(common.sink()?)?,
        Format::Json => common.emit_json(&json!({
            "variant": sched.variant,
            "payoff": sched.payoff,
            "payoff_virtual": sched.payoff_virtual,
            "min_virtual_surplus": sched.min_virtual_surplus,
            "negative_virtual_surplus": sched.negative_virtual_surplus,
            "grid_n": sched.theta_grid.len(),
        }))?,
    }
    Ok(Status::Ok)
}

pub fn cmd_coase(common: &Common) -> Result<Status> {
    let prim = common.primitives()?;
    let path = paths::coasian_path(&prim)?;
    emit_verified(common, &prim, &path, 2001, false)
}

/// Audit a path against the model it was built from.
pub fn verify_with_model(prim: &Primitives, path: &EquilibriumPath, grid_n: usize) -> Result<VerificationReport> {
    let prim = prim.with_delta(path.delta);
    let sched = static_mech::solve_unconstrained(&prim, DEFAULT_GRID)?;
    let constrained = if path.kind == PathKind::RelaxedTail {
        Some(static_mech::solve_constrained(&prim, DEFAULT_GRID)?)
    } else {
        None
    };
    let opts = CoaseOptions { grid_n, ..CoaseOptions::default() };
    let reversion = default_reversion(&prim, path, opts)?;
    let ctx = VerifyContext {
        benchmark: &sched,
        constrained: constrained.as_ref(),
        reversion: reversion.as_ref(),
        tol: Tolerances::default(),
    };
    verify_path(&prim, path, &ctx)
}

fn emit_verified(
    common: &Common,
    prim: &Primitives,
    path: &EquilibriumPath,
    grid_n: usize,
    unchecked: bool,
) -> Result<Status> {
    let report = verify_with_model(prim, path, grid_n)?;
    if !report.overall && !unchecked {
        eprintln!("{report}");
        eprintln!("path not emitted: verification failed (pass --unchecked to emit anyway)");
        return Ok(Status::Failed);
    }
    match common.format {
        Format::Json => common.emit_json(&json!({ "path": path, "report": report }))?,
        Format::Csv => {
            path.write_csv(common.sink()?)?;
            eprintln!("{report}");
        }
    }
    Ok(if report.overall { Status::Ok } else { Status::Failed }.max_ok(unchecked))
}

impl Status {
    fn max_ok(self, unchecked: bool) -> Status {
        if unchecked {
            Status::Ok
        } else {
            self
        }
    }
}

fn default_cap_and_top(prim: &Primitives, x_cap: Option<f64>, theta_top: Option<f64>) -> (f64, f64) {
    (x_cap.unwrap_or(prim.x_hi), theta_top.unwrap_or(prim.theta_hi()))
}

pub fn cmd_weakmarkov(
    common: &Common,
    x_cap: Option<f64>,
    theta_top: Option<f64>,
    grid_n: usize,
    tol: f64,
    restarts: bool,
) -> Result<Status> {
    let prim = common.primitives()?;
    let (x, t) = default_cap_and_top(&prim, x_cap, theta_top);
    let opts = CoaseOptions { grid_n, tol, check_uniqueness: restarts, ..CoaseOptions::default() };
    let sol = solve_weak_markov(&prim, x, t, &opts)?;
    let diag = clearing_diagnostics(&sol);
    let floor = prim.utility_u(x, prim.theta_lo())?;
    match common.format {
        Format::Csv => sol.write_csv(common.sink()?)?,
        Format::Json => {
            let path: Vec<_> = sol
                .trajectory
                .windows(2)
                .map(|w| json!({ "from": sol.grid[w[0]], "to": sol.grid[w[1]], "price": sol.price[w[1]] }))
                .collect();
            common.emit_json(&json!({
                "x_cap": x,
                "theta_top": t,
                "delta": prim.delta,
                "value": sol.top_value(),
                "margin": sol.top_value() / prim.dist.cdf(t) - floor,
                "clearing_time": sol.clearing_time,
                "converged": sol.converged,
                "sweeps": sol.sweeps,
                "bellman_residual": sol.bellman_residual,
                "indifference_residual": sol.indifference_residual,
                "restart_spread": sol.restart_spread,
                "diagnostics": diag,
                "on_path": path,
            }))?
        }
    }
    let ok = diag.finite
        && diag.price_cap_holds
        && sol.bellman_residual <= 1e-8
        && sol.restart_spread.is_none_or(|s| s <= 1e-7);
    Ok(if ok { Status::Ok } else { Status::Failed })
}

pub fn cmd_discrete(common: &Common, no_disposal: bool, mode: Option<DisposalMode>) -> Result<Status> {
    let mf = common.model_file()?;
    let model = mf.discrete_model()?;
    let delta = mf.delta;
    let sol = if no_disposal || !model.free_disposal {
        discrete::solve_no_disposal(&model, delta)?
    } else if let Some(m) = mode {
        let m = match m {
            DisposalMode::Coasian => DiscreteMode::Coasian,
            DisposalMode::Reputational => DiscreteMode::Reputational,
        };
        discrete::solve_with_disposal(&model, delta, m)?
    } else if !model.cost.is_zero() {
        discrete::solve_with_cost(&model, delta)?
    } else {
        return Err(Error::Invalid("model allows disposal at zero cost; pick --mode coasian|reputational".into()));
    };
    match common.format {
        Format::Csv => sol.write_csv(common.sink()?)?,
        Format::Json => common.emit_json(&sol)?,
    }
    let ok = sol.checks.iter().all(|c| c.pass);
    Ok(if ok { Status::Ok } else { Status::Failed })
}

/// delta, n, s, payoff, report
type FolkRow = (f64, usize, f64, f64, VerificationReport);

#[allow(clippy::too_many_arguments)]
pub fn cmd_sweep(
    common: &Common,
    solver: SweepSolver,
    var: SweepVar,
    range: (f64, f64, usize),
    n: usize,
    s: f64,
    x_cap: Option<f64>,
    theta_top: Option<f64>,
    grid_n: usize,
) -> Result<Status> {
    let prim = common.primitives()?;
    let (from, to, points) = range;
    if points == 0 {
        return Err(Error::Invalid("points must be positive".into()));
    }
    let values = crate::quad::linspace(from, to, points);
    let mut out = common.sink()?;
    let to_err = |e: csv::Error| Error::Invalid(e.to_string());
    match solver {
        SweepSolver::Weakmarkov => {
            if var != SweepVar::Delta {
                return Err(Error::Invalid("weakmarkov sweeps run over delta only".into()));
            }
            let (x, t) = default_cap_and_top(&prim, x_cap, theta_top);
            let opts = CoaseOptions { grid_n, ..CoaseOptions::default() };
            let rows = uniform_coase_check(&prim, x, t, &values, &opts)?;
            let mut wtr = csv::Writer::from_writer(&mut out);
            wtr.write_record(["delta", "V", "margin", "T"]).map_err(to_err)?;
            for r in &rows {
                wtr.serialize((r.delta, r.value, r.margin, r.clearing_time)).map_err(to_err)?;
            }
            wtr.flush().map_err(io_err)?;
            Ok(Status::Ok)
        }
        SweepSolver::Folk => {
            let rows: Vec<Result<FolkRow>> = values
                .par_iter()
                .map(|&v| {
                    let (d, nn, ss) = match var {
                        SweepVar::Delta => (v, n, s),
                        SweepVar::N => (prim.delta, v.round() as usize, s),
                        SweepVar::S => (prim.delta, n, v),
                    };
                    let p = prim.with_delta(d);
                    p.validate()?;
                    let path = paths::interpolate_family(&p, nn, ss)?;
                    let rep = verify_with_model(&p, &path, grid_n)?;
                    Ok((d, nn, ss, path.payoff, rep))
                })
                .collect();
            let mut wtr = csv::Writer::from_writer(&mut out);
            wtr.write_record(["delta", "n", "s", "payoff", "ic_margin", "reversion_margin", "markov_margin", "pass"])
                .map_err(to_err)?;
            for r in rows {
                let (d, nn, ss, payoff, rep) = r?;
                let m = |name: &str| rep.get(name).map_or(f64::NAN, |c| c.margin);
                wtr.serialize((
                    d,
                    nn,
                    ss,
                    payoff,
                    m("buyer_ic_sampled"),
                    m("seller_reversion"),
                    m("onpath_markov"),
                    rep.overall,
                ))
                .map_err(to_err)?;
            }
            wtr.flush().map_err(io_err)?;
            Ok(Status::Ok)
        }
    }
}

/// Accepts either a bare path document or the `{path, report}` output of `folk`.
pub fn read_path_json(text: &str) -> Result<EquilibriumPath> {
    let v: serde_json::Value = serde_json::from_str(text).map_err(|e| Error::Parse(e.to_string()))?;
    let inner = v.get("path").cloned().unwrap_or(v);
    serde_json::from_value(inner).map_err(|e| Error::Parse(e.to_string()))
}

pub fn cmd_verify(common: &Common, file: &std::path::Path, grid_n: usize) -> Result<Status> {
    let prim = common.primitives()?;
    let text = std::fs::read_to_string(file).map_err(|e| Error::Parse(format!("{}: {e}", file.display())))?;
    let path = read_path_json(&text)?;
    let report = verify_with_model(&prim, &path, grid_n)?;
    match common.format {
        Format::Json => common.emit_json(&report)?,
        Format::Csv => {
            let mut w = common.sink()?;
            writeln!(w, "{report}").map_err(io_err)?;
        }
    }
    Ok(if report.overall { Status::Ok } else { Status::Failed })
}
