//! Command-line front end. Exit codes: 0 success, 1 runtime failure,
//! 2 usage or configuration error.

use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

use super::config::{parse_synth_kind, ExperimentConfig, TopologySource, TraceSpec};
use super::output::{summary_text, write_design, write_outputs};
use super::{load_network, load_trace, run_idealized, run_simulation};
use crate::design::{
    export_canonical_socp, solve_classical_e, solve_myopic, solve_naive, solve_steady_state_e, DEFAULT_TOL_THETA,
};
use crate::error::{Error, Result};
use crate::model::validate_problem;
use crate::network::{
    build_measurement_model, read_bundle, route_flows, synth_topology, write_bundle, BudgetMode, SynthParams,
};

#[derive(Debug, Parser)]
#[command(name = "flowdesign", version, about = "Sampling-rate design for Kalman tracking of network flows")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Solve one design for a topology bundle and export ξ, θ and the SOCP.
    Design(DesignArgs),
    /// Closed-loop sampling simulation.
    Simulate(RunArgs),
    /// Noise-free propagation of the posterior variances.
    Idealized(RunArgs),
    /// Write a synthetic topology bundle.
    Synth(SynthArgs),
    /// Check a topology bundle or an experiment config.
    Validate(ValidateArgs),
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum SchemeArg {
    SteadyState,
    Classical,
    Myopic,
    Naive,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum ConstraintArg {
    Inequality,
    EqualityWithZeroing,
}

impl From<ConstraintArg> for BudgetMode {
    fn from(c: ConstraintArg) -> Self {
        match c {
            ConstraintArg::Inequality => BudgetMode::Inequality,
            ConstraintArg::EqualityWithZeroing => BudgetMode::EqualityWithZeroing,
        }
    }
}

#[derive(Debug, Args)]
struct DesignArgs {
    #[arg(long)]
    topology: PathBuf,
    #[arg(long, value_enum, default_value = "steady-state")]
    scheme: SchemeArg,
    #[arg(long, default_value = ".")]
    out: PathBuf,
    #[arg(long, value_enum, default_value = "inequality")]
    constraint_mode: ConstraintArg,
    /// Per-interface rate cap, or `none`.
    #[arg(long, default_value = "1")]
    rate_cap: String,
    #[arg(long, default_value_t = DEFAULT_TOL_THETA)]
    tol_theta: f64,
}

#[derive(Debug, Args)]
struct RunArgs {
    #[arg(long)]
    config: PathBuf,
    #[arg(long, default_value = "results")]
    out: PathBuf,
    /// Overrides the sampling seed.
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    trace_seed: Option<u64>,
    #[arg(long)]
    synth_seed: Option<u64>,
    #[arg(long)]
    replications: Option<usize>,
}

#[derive(Debug, Args)]
struct SynthArgs {
    /// `line:N`, `star:N`, `grid:RxC` or `random:N:L`.
    #[arg(long)]
    shape: String,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    #[arg(long)]
    flow_fraction: Option<f64>,
    #[arg(long)]
    budget: Option<f64>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
#[group(required = true, multiple = false)]
struct ValidateArgs {
    #[arg(long)]
    topology: Option<PathBuf>,
    #[arg(long)]
    config: Option<PathBuf>,
}

/// Runs the CLI on `argv` (program name first) and returns the exit code.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    match dispatch(cli.command) {
        Ok(msg) => {
            print!("{msg}");
            0
        }
        Err(e @ Error::Config { .. }) => {
            eprintln!("error: {e}");
            2
        }
        Err(e) => {
            eprintln!("error: {e}");
            1
        }
    }
}

fn dispatch(cmd: Command) -> Result<String> {
    match cmd {
        Command::Design(a) => design(a),
        Command::Simulate(a) => {
            let cfg = load_config(&a)?;
            let series = run_simulation(&cfg)?;
            write_outputs(&series, &a.out, cfg.dump_flows)?;
            Ok(summary_text(&series))
        }
        Command::Idealized(a) => {
            let cfg = load_config(&a)?;
            let series = run_idealized(&cfg)?;
            write_outputs(&series, &a.out, cfg.dump_flows)?;
            Ok(summary_text(&series))
        }
        Command::Synth(a) => {
            let kind = parse_synth_kind(&a.shape).map_err(|reason| Error::Config {
                field: "shape".into(),
                reason,
            })?;
            let mut params = SynthParams::new(kind);
            params.flow_fraction = a.flow_fraction.unwrap_or(params.flow_fraction);
            params.budget = a.budget.unwrap_or(params.budget);
            let topo = synth_topology(&params, a.seed)?;
            write_bundle(&topo, &a.out)?;
            Ok(format!(
                "wrote {} nodes, {} flows to {}\n",
                topo.nodes.len(),
                topo.flows.len(),
                a.out.display()
            ))
        }
        Command::Validate(a) => validate(a),
    }
}

fn load_config(a: &RunArgs) -> Result<ExperimentConfig> {
    let mut cfg = ExperimentConfig::from_file(&a.config)?;
    if let Some(s) = a.seed {
        cfg.seed = s;
    }
    if let Some(r) = a.replications {
        cfg.replications = r;
    }
    if let (Some(s), TraceSpec::RandomWalk { seed, .. }) = (a.trace_seed, &mut cfg.trace) {
        *seed = s;
    }
    if let (Some(s), TopologySource::Synth { seed, .. }) = (a.synth_seed, &mut cfg.topology) {
        *seed = s;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn design(a: DesignArgs) -> Result<String> {
    let rate_cap = match a.rate_cap.as_str() {
        "none" => None,
        v => Some(v.parse::<f64>().ok().filter(|c| *c > 0.0).ok_or_else(|| Error::Config {
            field: "rate-cap".into(),
            reason: format!("expected a positive number or none, got `{v}`"),
        })?),
    };
    let topo = read_bundle(&a.topology)?;
    let mm = build_measurement_model(&topo, &route_flows(&topo)?)?;
    let p = mm.design_problem(a.constraint_mode.into(), rate_cap, None);
    let fm = &mm.flow_model;
    let res = match a.scheme {
        SchemeArg::SteadyState => solve_steady_state_e(&p, fm, a.tol_theta)?,
        SchemeArg::Classical => solve_classical_e(&p)?,
        SchemeArg::Myopic => solve_myopic(&p, fm, &vec![0.0; p.n_flows()], true)?,
        SchemeArg::Naive => solve_naive(&p, &mm.traversal)?,
    };
    let socp = export_canonical_socp(&p, fm)?.to_text();
    write_design(&res, Some(&socp), &a.out)?;
    Ok(format!(
        "scheme = {}\ntheta = {}\noutput = {}\n",
        res.scheme,
        res.theta,
        a.out.display()
    ))
}

fn validate(a: ValidateArgs) -> Result<String> {
    if let Some(path) = a.config {
        let cfg = ExperimentConfig::from_file(&path)?;
        let mm = load_network(&cfg)?;
        let trace = load_trace(&cfg, &mm)?;
        return Ok(format!(
            "ok: config {} ({} flows, {} observation points, {} periods)\n",
            path.display(),
            mm.n_flows(),
            mm.n_ops(),
            trace.periods()
        ));
    }
    let dir = a.topology.expect("clap enforces one of --topology/--config");
    let topo = read_bundle(&dir)?;
    let mm = build_measurement_model(&topo, &route_flows(&topo)?)?;
    let report = validate_problem(&mm.design_problem(BudgetMode::Inequality, Some(1.0), None), &mm.flow_model)?;
    let mut out = format!(
        "ok: {} flows, {} observation points, {} measurements\n",
        mm.n_flows(),
        mm.n_ops(),
        mm.n_measurements()
    );
    for w in report.warnings() {
        out.push_str(&format!("warning: {w}\n"));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn usage_errors_exit_two() {
        assert_eq!(run(["flowdesign", "design", "--bogus"]), 2);
        assert_eq!(run(["flowdesign"]), 2);
        assert_eq!(run(["flowdesign", "validate"]), 2);
        assert_eq!(run(["flowdesign", "--help"]), 0);
    }

    #[test]
    fn missing_files_exit_one() {
        let dir = tempfile::tempdir().unwrap();
        let missing = dir.path().join("nope");
        assert_eq!(run(["flowdesign".into(), "validate".into(), "--topology".into(), missing.into_os_string()]), 1);
    }

    #[test]
    fn malformed_config_exits_two() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = dir.path().join("bad.cfg");
        std::fs::write(&cfg, "synth = grid:3x3\nhorizon = -4\n").unwrap();
        let code = run([
            "flowdesign".into(),
            "simulate".into(),
            "--config".into(),
            cfg.into_os_string(),
        ]);
        assert_eq!(code, 2);
    }
}
