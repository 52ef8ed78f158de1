//! Experiment orchestration: the idealized information recursion, the
//! closed-loop batch design simulation, metrics and file output.

pub mod cli;
pub mod config;
pub mod output;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::design::{solve_myopic, solve_naive, solve_steady_state_e, DesignResult};
use crate::error::{Error, Result};
use crate::filtering::{riccati_step, FilterState};
use crate::model::{DesignProblem, DesignVector, FEASIBILITY_TOL};
use crate::network::{build_measurement_model, read_bundle, route_flows, synth_topology, MeasurementModel};
use crate::simulate::{fuse_gls, gen_random_walk_trace_with_floor, sample_packets, Trace};

pub use config::{ExperimentConfig, MuMode, RunScheme, TopologySource, TraceSpec};

/// Floor applied to plug-in means taken from filtered estimates.
pub const PLUGIN_FLOOR: f64 = 1.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RunMode {
    Idealized,
    Simulation,
}

impl std::fmt::Display for RunMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            RunMode::Idealized => "idealized",
            RunMode::Simulation => "simulation",
        })
    }
}

/// Rates in force from period `start` until the next record.
#[derive(Debug, Clone, PartialEq)]
pub struct RateRecord {
    pub block: usize,
    pub start: usize,
    pub xi: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MetricsSeries {
    pub mode: RunMode,
    pub scheme: RunScheme,
    /// Periods per design block; the whole horizon for fixed designs.
    pub block_size: usize,
    pub replications: usize,
    /// `flow_mse[t-1][i]`: theoretical variance (idealized) or mean squared
    /// error over replications (simulation). Infinite with no information.
    pub flow_mse: Vec<Vec<f64>>,
    pub max_mse: Vec<f64>,
    /// Design log of the first replication.
    pub rates: Vec<RateRecord>,
    /// Inclusive period range of the median.
    pub median_window: (usize, usize),
    pub median_max_mse: f64,
}

impl MetricsSeries {
    fn assemble(
        mode: RunMode,
        scheme: RunScheme,
        block_size: usize,
        replications: usize,
        flow_mse: Vec<Vec<f64>>,
        rates: Vec<RateRecord>,
        median_window: (usize, usize),
    ) -> Self {
        let max_mse: Vec<f64> = flow_mse
            .iter()
            .map(|row| row.iter().copied().fold(0.0, f64::max))
            .collect();
        let median_max_mse = median(&max_mse[median_window.0 - 1..median_window.1]);
        MetricsSeries {
            mode,
            scheme,
            block_size,
            replications,
            flow_mse,
            max_mse,
            rates,
            median_window,
            median_max_mse,
        }
    }

    pub fn horizon(&self) -> usize {
        self.max_mse.len()
    }

    /// Rates in force during period `t` (1-based).
    pub fn rates_at(&self, t: usize) -> Option<&[f64]> {
        self.rates
            .iter()
            .rev()
            .find(|r| r.start <= t)
            .map(|r| r.xi.as_slice())
    }
}

pub fn median(values: &[f64]) -> f64 {
    if values.is_empty() {
        return f64::NAN;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let mid = v.len() / 2;
    if v.len() % 2 == 1 {
        v[mid]
    } else {
        0.5 * (v[mid - 1] + v[mid])
    }
}

/// Loads or synthesizes the configured network and builds its measurement
/// model.
pub fn load_network(cfg: &ExperimentConfig) -> Result<MeasurementModel> {
    let topo = match &cfg.topology {
        TopologySource::Bundle(dir) => read_bundle(dir)?,
        TopologySource::Synth { params, seed } => synth_topology(params, *seed)?,
    };
    build_measurement_model(&topo, &route_flows(&topo)?)
}

/// Replays or generates the ground-truth trace for `cfg.horizon` periods.
pub fn load_trace(cfg: &ExperimentConfig, mm: &MeasurementModel) -> Result<Trace> {
    match &cfg.trace {
        TraceSpec::RandomWalk { seed, floor } => gen_random_walk_trace_with_floor(
            &mm.flow_model,
            cfg.horizon,
            mm.flow_model.mu(),
            *seed,
            *floor,
        ),
        TraceSpec::Replay(path) => {
            let file = std::fs::File::open(path)
                .map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
            let trace = Trace::read_csv(file)?;
            if trace.n_flows() != mm.n_flows() {
                return Err(Error::Config {
                    field: "trace".into(),
                    reason: format!("trace has {} flows, network has {}", trace.n_flows(), mm.n_flows()),
                });
            }
            if trace.periods() < cfg.horizon {
                return Err(Error::Config {
                    field: "horizon".into(),
                    reason: format!("trace covers only {} periods", trace.periods()),
                });
            }
            Ok(trace)
        }
    }
}

fn design_with(
    scheme: RunScheme,
    p: &DesignProblem,
    mm: &MeasurementModel,
    prior_info: &[f64],
    cfg: &ExperimentConfig,
) -> Result<DesignResult> {
    let res = match scheme {
        RunScheme::Naive => solve_naive(p, &mm.traversal)?,
        RunScheme::Myopic => solve_myopic(p, &mm.flow_model, prior_info, cfg.use_prediction)?,
        RunScheme::SteadyState => solve_steady_state_e(p, &mm.flow_model, cfg.tol_theta)?,
    };
    let violation = p.max_violation(res.xi.as_slice());
    if violation > FEASIBILITY_TOL {
        return Err(Error::Numerical(format!(
            "{scheme} design violates its constraints by {violation:e}"
        )));
    }
    Ok(res)
}

pub fn run_idealized(cfg: &ExperimentConfig) -> Result<MetricsSeries> {
    cfg.validate()?;
    run_idealized_with(&load_network(cfg)?, cfg)
}

/// Propagates the posterior variances analytically under the scheme's
/// rates: fixed designs are solved once, myopic is re-solved every period.
pub fn run_idealized_with(mm: &MeasurementModel, cfg: &ExperimentConfig) -> Result<MetricsSeries> {
    if cfg.mu_mode != MuMode::TrueMu {
        return Err(Error::Config {
            field: "mu_mode".into(),
            reason: "idealized runs need true_mu".into(),
        });
    }
    let p = mm.design_problem(cfg.constraint_mode, cfg.rate_cap, None);
    let s2 = mm.flow_model.sigma2();
    let n = mm.n_flows();
    let mut info = vec![0.0; n];
    let mut rates = Vec::new();
    let mut xi = Vec::new();
    if cfg.scheme != RunScheme::Myopic {
        xi = design_with(cfg.scheme, &p, mm, &info, cfg)?.xi.into_inner();
        rates.push(RateRecord {
            block: 1,
            start: 1,
            xi: xi.clone(),
        });
    }
    let mut flow_mse = Vec::with_capacity(cfg.horizon);
    for t in 1..=cfg.horizon {
        if cfg.scheme == RunScheme::Myopic {
            xi = design_with(RunScheme::Myopic, &p, mm, &info, cfg)?.xi.into_inner();
            rates.push(RateRecord {
                block: t,
                start: t,
                xi: xi.clone(),
            });
        }
        let m = p.information(&xi);
        for i in 0..n {
            info[i] = riccati_step(info[i], m[i].max(0.0), s2[i]);
        }
        flow_mse.push(info.iter().map(|v| 1.0 / v).collect());
    }
    let block_size = if cfg.scheme == RunScheme::Myopic { 1 } else { cfg.horizon };
    Ok(MetricsSeries::assemble(
        RunMode::Idealized,
        cfg.scheme,
        block_size,
        1,
        flow_mse,
        rates,
        cfg.median_window(),
    ))
}

pub fn run_simulation(cfg: &ExperimentConfig) -> Result<MetricsSeries> {
    cfg.validate()?;
    let mm = load_network(cfg)?;
    let trace = load_trace(cfg, &mm)?;
    run_simulation_with(&mm, &trace, cfg)
}

struct Replication {
    /// Squared errors, period-major.
    sq: Vec<f64>,
    rates: Vec<RateRecord>,
}

/// Closed-loop batch design over a shared trace, averaged over
/// replications of the sampling noise.
pub fn run_simulation_with(mm: &MeasurementModel, trace: &Trace, cfg: &ExperimentConfig) -> Result<MetricsSeries> {
    cfg.validate()?;
    if trace.n_flows() != mm.n_flows() || trace.periods() < cfg.horizon {
        return Err(Error::DimensionMismatch {
            what: "trace",
            expected: mm.n_flows(),
            got: trace.n_flows(),
        });
    }
    let reps: Vec<Replication> = (0..cfg.replications)
        .into_par_iter()
        .map(|r| replicate(mm, trace, cfg, r))
        .collect::<Result<_>>()?;

    let n = mm.n_flows();
    let mut total = vec![0.0; cfg.horizon * n];
    for rep in &reps {
        for (acc, v) in total.iter_mut().zip(&rep.sq) {
            *acc += v;
        }
    }
    let denom = cfg.replications as f64;
    let flow_mse = total.chunks(n).map(|row| row.iter().map(|v| v / denom).collect()).collect();
    let rates = reps.into_iter().next().map(|r| r.rates).unwrap_or_default();
    Ok(MetricsSeries::assemble(
        RunMode::Simulation,
        cfg.scheme,
        cfg.block_size,
        cfg.replications,
        flow_mse,
        rates,
        cfg.median_window(),
    ))
}

fn plugin_means(state: &FilterState, mu: &[f64], mode: MuMode) -> Vec<f64> {
    match mode {
        MuMode::TrueMu => mu.to_vec(),
        MuMode::Plugin => state
            .info
            .iter()
            .zip(&state.mean)
            .zip(mu)
            .map(|((&info, &mean), &mu)| if info > 0.0 { mean.max(PLUGIN_FLOOR) } else { mu })
            .collect(),
    }
}

fn replicate(mm: &MeasurementModel, trace: &Trace, cfg: &ExperimentConfig, rep: usize) -> Result<Replication> {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    rng.set_stream(rep as u64);
    let fm = &mm.flow_model;
    let n = mm.n_flows();
    let mut state = FilterState::diffuse(n);
    let mut xi = DesignVector::new(vec![0.0; mm.n_ops()]);
    let mut sq = Vec::with_capacity(cfg.horizon * n);
    let mut rates = Vec::new();
    for t in 1..=cfg.horizon {
        let mu_hat = plugin_means(&state, fm.mu(), cfg.mu_mode);
        if (t - 1) % cfg.block_size == 0 {
            let block = (t - 1) / cfg.block_size + 1;
            let scheme = if block == 1 { cfg.warmup_scheme } else { cfg.scheme };
            let plug = (cfg.mu_mode == MuMode::Plugin).then_some(mu_hat.as_slice());
            let p = mm.design_problem(cfg.constraint_mode, cfg.rate_cap, plug);
            xi = design_with(scheme, &p, mm, &state.info, cfg)?.xi;
            log::debug!("replication {rep}, block {block}: {scheme} design");
            rates.push(RateRecord {
                block,
                start: t,
                xi: xi.as_slice().to_vec(),
            });
        }
        let x = trace.period(t);
        let raw = sample_packets(&x, mm, &xi, &mut rng)?;
        let (y, m) = fuse_gls(&raw, mm, &xi, &mu_hat)?;
        state = state.predict_update(fm, &m, &y)?;
        sq.extend((0..n).map(|i| {
            if state.info[i] > 0.0 {
                (state.mean[i] - x[i]).powi(2)
            } else {
                f64::INFINITY
            }
        }));
    }
    Ok(Replication { sq, rates })
}
