use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand, ValueEnum};
use num_traits::Signed;

use crate::continuous::{compute_flows, simulate, throughput_estimate, ContinuousState, SimOptions};
use crate::discrete::{asymptotic_behavior, simulate_counters_with, time_grid, CounterOptions};
use crate::export::{counter_csv, read_solutions, solution_json, stationary_json, trajectory_csv, write_atomic};
use crate::net::{validate, PetriNet};
use crate::netfile::parse_net;
use crate::policy::p_invariants;
use crate::rational::{format_decimal, format_exact, parse_rat, to_f64};
use crate::stationary::{check_stationary, limit_solution, solve_stationary};
use crate::sweep::{run_sweep, sweep_csv, SweepSpec};

#[derive(Debug, Parser)]
#[command(name = "fluidnet", version, about = "Timed Petri nets with free-choice and priority routing")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Mode {
    Continuous,
    Discrete,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Check the structural rules of a net.
    Validate { file: PathBuf },
    /// List the generators of the nonnegative P-invariants.
    Invariants { file: PathBuf },
    /// Flows and bottleneck policy at a given state.
    Flows {
        file: PathBuf,
        #[arg(long)]
        state: PathBuf,
    },
    /// Simulate from the initial marking.
    Simulate {
        file: PathBuf,
        #[arg(long, value_enum, default_value = "continuous")]
        mode: Mode,
        #[arg(long)]
        horizon: String,
        /// Integration step (continuous mode).
        #[arg(long)]
        dt: Option<f64>,
        /// Keep a sample at most this often (continuous) or every N grid steps (discrete).
        #[arg(long)]
        every: Option<String>,
        /// Keep integrating after the flows have converged.
        #[arg(long)]
        full: bool,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Stationary flow cones per policy, or the limit flow from the initial marking.
    Stationary {
        file: PathBuf,
        #[arg(long)]
        from_marking: bool,
        /// Simulation horizon used to find the policy reached from the marking.
        #[arg(long, default_value = "500")]
        horizon: f64,
        #[arg(long)]
        json: bool,
    },
    /// Verify stationary solutions stored as JSON.
    Check {
        file: PathBuf,
        #[arg(long)]
        solution: PathBuf,
    },
    /// Run a parameter sweep described by a TOML file.
    Sweep {
        file: PathBuf,
        #[arg(long)]
        spec: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

/// A failure reported on standard error with its exit code.
struct Failure {
    code: i32,
    message: String,
}

impl Failure {
    fn input(message: impl Into<String>) -> Failure {
        Failure { code: 1, message: message.into() }
    }

    fn usage(message: impl Into<String>) -> Failure {
        Failure { code: 2, message: message.into() }
    }
}

type Outcome = Result<i32, Failure>;

/// Runs the command line and returns the process exit code.
pub fn run_cli<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = e.exit_code();
            let text = e.render().to_string();
            let _ = if code == 0 { write!(out, "{text}") } else { write!(err, "{text}") };
            return code;
        }
    };
    match dispatch(cli.command, out, err) {
        Ok(code) => code,
        Err(f) => {
            let _ = writeln!(err, "error: {}", f.message);
            f.code
        }
    }
}

fn dispatch(command: Command, out: &mut dyn Write, err: &mut dyn Write) -> Outcome {
    match command {
        Command::Validate { file } => cmd_validate(&file, out, err),
        Command::Invariants { file } => cmd_invariants(&load(&file, err)?, out),
        Command::Flows { file, state } => cmd_flows(&load(&file, err)?, &state, out),
        Command::Simulate { file, mode, horizon, dt, every, full, out: path } => {
            let net = load(&file, err)?;
            let horizon = parse_rat(&horizon).map_err(|e| Failure::usage(format!("--horizon: {e}")))?;
            if !horizon.is_positive() {
                return Err(Failure::usage("--horizon must be positive"));
            }
            match mode {
                Mode::Continuous => cmd_continuous(&net, to_f64(&horizon), dt, every, full, path, out),
                Mode::Discrete => cmd_discrete(&net, &horizon, every, path, out),
            }
        }
        Command::Stationary { file, from_marking, horizon, json } => {
            let net = load(&file, err)?;
            if from_marking {
                cmd_from_marking(&net, horizon, json, out)
            } else {
                cmd_stationary(&net, json, out)
            }
        }
        Command::Check { file, solution } => cmd_check(&load(&file, err)?, &solution, out, err),
        Command::Sweep { file, spec, out: path } => cmd_sweep(&load(&file, err)?, &spec, path, out),
    }
}

fn read(path: &Path) -> Result<String, Failure> {
    std::fs::read_to_string(path).map_err(|e| Failure::input(format!("{}: {e}", path.display())))
}

fn parse(path: &Path) -> Result<PetriNet, Failure> {
    let text = read(path)?;
    parse_net(&text).map_err(|e| {
        let lines: Vec<String> = e.0.iter().map(|d| format!("{}:{d}", path.display())).collect();
        Failure::input(lines.join("\n"))
    })
}

/// Parses and validates; structural violations stop every command but `validate`.
fn load(path: &Path, err: &mut dyn Write) -> Result<PetriNet, Failure> {
    let net = parse(path)?;
    let report = validate(&net);
    for w in &report.warnings {
        let _ = writeln!(err, "warning: {w}");
    }
    if !report.is_ok() {
        let lines: Vec<String> = report.violations.iter().map(ToString::to_string).collect();
        return Err(Failure::input(format!("invalid net:\n{}", lines.join("\n"))));
    }
    Ok(net)
}

fn write_output(path: Option<PathBuf>, contents: &str, out: &mut dyn Write) -> Result<(), Failure> {
    match path {
        Some(p) => write_atomic(&p, contents.as_bytes()).map_err(|e| Failure::input(e.to_string())),
        None => out.write_all(contents.as_bytes()).map_err(|e| Failure::input(e.to_string())),
    }
}

fn cmd_validate(file: &Path, out: &mut dyn Write, err: &mut dyn Write) -> Outcome {
    let net = parse(file)?;
    let report = validate(&net);
    for w in &report.warnings {
        let _ = writeln!(err, "warning: {w}");
    }
    for v in &report.violations {
        let _ = writeln!(err, "violation: {v}");
    }
    if report.is_ok() {
        let _ = writeln!(out, "{}: valid ({} places, {} transitions)", net.name, net.n_places(), net.n_transitions());
        Ok(0)
    } else {
        Ok(1)
    }
}

fn cmd_invariants(net: &PetriNet, out: &mut dyn Write) -> Outcome {
    let inv = p_invariants(net).map_err(|e| Failure::input(e.to_string()))?;
    if inv.is_empty() {
        let _ = writeln!(out, "no nonnegative P-invariant");
    }
    for y in &inv {
        let terms: Vec<String> = y
            .support()
            .into_iter()
            .map(|p| format!("{}:{}", net.place(p).id, format_exact(&y.y[p])))
            .collect();
        let _ = writeln!(out, "{}", terms.join(" "));
    }
    Ok(0)
}

fn state_value(v: &toml::Value) -> Option<f64> {
    match v {
        toml::Value::Float(x) => Some(*x),
        toml::Value::Integer(i) => Some(*i as f64),
        toml::Value::String(s) => parse_rat(s).ok().map(|r| to_f64(&r)),
        _ => None,
    }
}

/// A TOML state with optional `t` and tables `m` and `w` keyed by place id.
fn read_state(net: &PetriNet, path: &Path) -> Result<ContinuousState, Failure> {
    let text = read(path)?;
    let doc: toml::Table = toml::from_str(&text).map_err(|e| Failure::input(format!("{}: {}", path.display(), e.message())))?;
    let mut state = ContinuousState { t: 0.0, m: vec![0.0; net.n_places()], w: vec![0.0; net.n_places()] };
    for (key, value) in &doc {
        let bad = || Failure::input(format!("{}: bad entry `{key}`", path.display()));
        match key.as_str() {
            "t" => state.t = state_value(value).ok_or_else(bad)?,
            "m" | "w" => {
                let table = value.as_table().ok_or_else(bad)?;
                for (id, v) in table {
                    let p = net
                        .place_index(id)
                        .ok_or_else(|| Failure::input(format!("{}: unknown place `{id}`", path.display())))?;
                    let x = state_value(v).ok_or_else(bad)?;
                    if key == "m" {
                        state.m[p] = x;
                    } else {
                        state.w[p] = x;
                    }
                }
            }
            _ => return Err(bad()),
        }
    }
    Ok(state)
}

fn cmd_flows(net: &PetriNet, state: &Path, out: &mut dyn Write) -> Outcome {
    let state = read_state(net, state)?;
    let (flows, policy) = compute_flows(net, &state, SimOptions::default().eps_w).map_err(|e| Failure::input(e.to_string()))?;
    for (q, id) in net.transitions().iter().enumerate() {
        let _ = writeln!(out, "{id} {} bottleneck {}", format_decimal(flows.f[q]), net.place(policy.choice[q]).id);
    }
    Ok(0)
}

fn cmd_continuous(
    net: &PetriNet,
    horizon: f64,
    dt: Option<f64>,
    every: Option<String>,
    full: bool,
    path: Option<PathBuf>,
    out: &mut dyn Write,
) -> Outcome {
    let sample_interval = match every {
        Some(s) => Some(s.parse::<f64>().map_err(|_| Failure::usage(format!("--every: bad number `{s}`")))?),
        None => Some(horizon / 10_000.0),
    };
    let opts = SimOptions { dt, sample_interval, stop_on_convergence: !full, ..SimOptions::default() };
    let traj = simulate(net, &ContinuousState::from_net(net), horizon, &opts).map_err(|e| Failure::input(e.to_string()))?;
    let tail = if traj.converged { traj.last().flows.f.clone() } else { throughput_estimate(&traj, 0.2) };
    if let Some(p) = path {
        write_output(Some(p), &trajectory_csv(net, &traj), out)?;
    }
    let status = match traj.converged_at {
        Some(t) => format!("converged at t = {}", format_decimal(t)),
        None => format!("not converged by t = {}", format_decimal(traj.end_time())),
    };
    let _ = writeln!(out, "{status}; {} policy switches", traj.switches.len());
    let _ = writeln!(out, "policy {}", traj.final_policy().describe(net));
    for (q, id) in net.transitions().iter().enumerate() {
        let _ = writeln!(out, "{id} {}", format_decimal(tail[q]));
    }
    Ok(0)
}

fn cmd_discrete(
    net: &PetriNet,
    horizon: &crate::rational::Rat,
    every: Option<String>,
    path: Option<PathBuf>,
    out: &mut dyn Write,
) -> Outcome {
    let stride = match every {
        Some(s) => s.parse::<usize>().map_err(|_| Failure::usage(format!("--every: bad step count `{s}`")))?,
        None => 1,
    };
    let grid = time_grid(net).map_err(|e| Failure::input(e.to_string()))?.with_horizon(horizon);
    let opts = CounterOptions { record_from: 0, stride };
    let traj = simulate_counters_with(net, &grid, &opts).map_err(|e| Failure::input(e.to_string()))?;
    if let Some(p) = path {
        write_output(Some(p), &counter_csv(net, &traj), out)?;
    }
    let asym = asymptotic_behavior(&traj, 0.5);
    let _ = writeln!(out, "grid step {} ({} steps)", format_exact(&grid.delta), grid.steps);
    match &asym.period {
        Some(p) => {
            let _ = writeln!(out, "periodic tail, period {}", format_exact(p));
        }
        None => {
            let _ = writeln!(out, "no joint period in the tail");
        }
    }
    for (q, id) in net.transitions().iter().enumerate() {
        let exact = asym.exact_slope_z[q].as_ref().map(|r| format!(" exact {}", format_exact(r))).unwrap_or_default();
        let _ = writeln!(out, "{id} {}{exact}", format_decimal(asym.slope_z[q]));
    }
    Ok(0)
}

fn cmd_stationary(net: &PetriNet, json: bool, out: &mut dyn Write) -> Outcome {
    let cones = solve_stationary(net).map_err(|e| Failure::input(e.to_string()))?;
    if json {
        let text = serde_json::to_string_pretty(&stationary_json(net, &cones)).map_err(|e| Failure::input(e.to_string()))?;
        let _ = writeln!(out, "{text}");
        return Ok(0);
    }
    if cones.is_empty() {
        let _ = writeln!(out, "no stationary flow (not partially repetitive under any policy)");
    }
    for pc in &cones {
        let _ = writeln!(out, "policy {} (dimension {})", pc.system.policy.describe(net), pc.cone.dimension());
        for ray in &pc.cone.rays {
            let terms: Vec<String> = ray.iter().map(format_exact).collect();
            let _ = writeln!(out, "  ray ({})", terms.join(", "));
        }
    }
    Ok(0)
}

fn cmd_from_marking(net: &PetriNet, horizon: f64, json: bool, out: &mut dyn Write) -> Outcome {
    let opts = SimOptions { sample_interval: Some(horizon / 1000.0), ..SimOptions::default() };
    let traj = simulate(net, &ContinuousState::from_net(net), horizon, &opts).map_err(|e| Failure::input(e.to_string()))?;
    let policy = traj.final_policy().clone();
    let sol = limit_solution(net, &policy, &net.initial_marking())
        .map_err(|e| Failure::input(format!("policy {}: {e}", policy.describe(net))))?;
    if json {
        let text = serde_json::to_string_pretty(&solution_json(net, &sol)).map_err(|e| Failure::input(e.to_string()))?;
        let _ = writeln!(out, "{text}");
        return Ok(0);
    }
    let _ = writeln!(out, "policy {}", policy.describe(net));
    let terms: Vec<String> = sol.f.iter().map(format_exact).collect();
    let _ = writeln!(out, "f = ({})", terms.join(", "));
    for (q, id) in net.transitions().iter().enumerate() {
        let _ = writeln!(out, "{id} {} {}", format_exact(&sol.f[q]), format_decimal(to_f64(&sol.f[q])));
    }
    Ok(0)
}

fn cmd_check(net: &PetriNet, path: &Path, out: &mut dyn Write, err: &mut dyn Write) -> Outcome {
    let text = read(path)?;
    let sols = read_solutions(net, &text).map_err(|e| Failure::input(format!("{}: {e}", path.display())))?;
    let mut failed = 0;
    for (i, sol) in sols.iter().enumerate() {
        let report = check_stationary(net, sol);
        if report.is_ok() {
            let _ = writeln!(out, "solution {}: stationary", i + 1);
        } else {
            failed += 1;
            for v in &report.violations {
                let _ = writeln!(err, "solution {}: {v}", i + 1);
            }
        }
    }
    Ok(if failed == 0 { 0 } else { 1 })
}

fn cmd_sweep(net: &PetriNet, spec: &Path, path: Option<PathBuf>, out: &mut dyn Write) -> Outcome {
    let text = read(spec)?;
    let spec = SweepSpec::parse(net, &text).map_err(|e| Failure::input(format!("{}: {e}", spec.display())))?;
    let rows = run_sweep(net, &spec);
    write_output(path, &sweep_csv(net, &rows), out)?;
    Ok(0)
}
