//! Flat `key = value` experiment configuration.
//!
//! ```text
//! # network: a bundle directory or a synthetic shape
//! topology        = nets/backbone       # relative to this file
//! synth           = grid:3x3            # line:N | star:N | grid:RxC | random:N:L
//! synth_seed      = 1
//! flow_fraction   = 0.25
//! budget          = 0.01
//! # ground truth: replayed CSV or a random walk started at μ
//! trace           = traces/week.csv
//! trace_seed      = 1
//! trace_floor     = 1
//! scheme          = steady_state        # naive | myopic | steady_state
//! warmup_scheme   = naive
//! horizon         = 200
//! block_size      = 40
//! replications    = 200
//! seed            = 1
//! mu_mode         = plugin              # true_mu | plugin
//! constraint_mode = inequality          # inequality | equality_with_zeroing
//! rate_cap        = 1                   # or none
//! use_prediction  = true
//! median_start    = 41
//! median_end      = 200
//! dump_flows      = false
//! ```
//!
//! Exactly one of `topology` and `synth` must be given. Every other key is
//! optional.

use std::collections::HashMap;
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::design::DEFAULT_TOL_THETA;
use crate::error::{Error, Result};
use crate::network::{BudgetMode, SynthKind, SynthParams};

#[derive(Debug, Clone, PartialEq)]
pub enum TopologySource {
    Bundle(PathBuf),
    Synth { params: SynthParams, seed: u64 },
}

#[derive(Debug, Clone, PartialEq)]
pub enum TraceSpec {
    Replay(PathBuf),
    /// Random walk started at each flow's mean volume.
    RandomWalk { seed: u64, floor: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum RunScheme {
    Naive,
    Myopic,
    SteadyState,
}

impl fmt::Display for RunScheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            RunScheme::Naive => "naive",
            RunScheme::Myopic => "myopic",
            RunScheme::SteadyState => "steady_state",
        })
    }
}

impl FromStr for RunScheme {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "naive" => Ok(RunScheme::Naive),
            "myopic" => Ok(RunScheme::Myopic),
            "steady_state" | "steady-state" => Ok(RunScheme::SteadyState),
            _ => Err(format!("expected naive, myopic or steady_state, got `{s}`")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum MuMode {
    #[default]
    TrueMu,
    /// Previous filtered estimate, floored at 1.
    Plugin,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub topology: TopologySource,
    pub trace: TraceSpec,
    pub scheme: RunScheme,
    pub warmup_scheme: RunScheme,
    pub horizon: usize,
    pub block_size: usize,
    pub replications: usize,
    pub seed: u64,
    pub mu_mode: MuMode,
    pub constraint_mode: BudgetMode,
    pub rate_cap: Option<f64>,
    pub use_prediction: bool,
    /// Inclusive period range for the summary median; `None` is `(0.2T, T]`.
    pub median_window: Option<(usize, usize)>,
    pub dump_flows: bool,
    pub tol_theta: f64,
}

impl ExperimentConfig {
    pub fn new(topology: TopologySource) -> Self {
        ExperimentConfig {
            topology,
            trace: TraceSpec::RandomWalk { seed: 1, floor: 1.0 },
            scheme: RunScheme::SteadyState,
            warmup_scheme: RunScheme::Naive,
            horizon: 200,
            block_size: 40,
            replications: 200,
            seed: 1,
            mu_mode: MuMode::TrueMu,
            constraint_mode: BudgetMode::Inequality,
            rate_cap: Some(1.0),
            use_prediction: true,
            median_window: None,
            dump_flows: false,
            tol_theta: DEFAULT_TOL_THETA,
        }
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
        Self::parse(&text, path.parent().unwrap_or(Path::new(".")))
    }

    /// Parses config text; relative paths resolve against `base`.
    pub fn parse(text: &str, base: &Path) -> Result<Self> {
        let mut kv: HashMap<String, String> = HashMap::new();
        for (n, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| Error::Config {
                field: format!("line {}", n + 1),
                reason: "expected `key = value`".into(),
            })?;
            let key = key.trim().to_string();
            if kv.insert(key.clone(), value.trim().to_string()).is_some() {
                return Err(cfg_err(&key, "given more than once"));
            }
        }
        let mut r = Reader { kv };

        let topology = match (r.take("topology"), r.take("synth")) {
            (Some(dir), None) => TopologySource::Bundle(base.join(dir)),
            (None, Some(shape)) => {
                let mut params =
                    SynthParams::new(parse_synth_kind(&shape).map_err(|e| cfg_err("synth", e))?);
                params.flow_fraction = r.parse("flow_fraction")?.unwrap_or(params.flow_fraction);
                params.budget = r.parse("budget")?.unwrap_or(params.budget);
                let seed = r.parse("synth_seed")?.unwrap_or(1);
                TopologySource::Synth { params, seed }
            }
            (Some(_), Some(_)) => return Err(cfg_err("topology", "give either `topology` or `synth`, not both")),
            (None, None) => return Err(cfg_err("topology", "missing; set `topology` or `synth`")),
        };
        let mut cfg = ExperimentConfig::new(topology);

        let trace_seed = r.parse("trace_seed")?.unwrap_or(1);
        let trace_floor = r.parse("trace_floor")?.unwrap_or(1.0);
        cfg.trace = match r.take("trace") {
            Some(path) => TraceSpec::Replay(base.join(path)),
            None => TraceSpec::RandomWalk {
                seed: trace_seed,
                floor: trace_floor,
            },
        };
        if let Some(v) = r.parse("scheme")? {
            cfg.scheme = v;
        }
        if let Some(v) = r.parse("warmup_scheme")? {
            cfg.warmup_scheme = v;
        }
        cfg.horizon = r.parse("horizon")?.unwrap_or(cfg.horizon);
        cfg.block_size = r.parse("block_size")?.unwrap_or(cfg.block_size);
        cfg.replications = r.parse("replications")?.unwrap_or(cfg.replications);
        cfg.seed = r.parse("seed")?.unwrap_or(cfg.seed);
        if let Some(v) = r.take("mu_mode") {
            cfg.mu_mode = match v.as_str() {
                "true_mu" => MuMode::TrueMu,
                "plugin" => MuMode::Plugin,
                _ => return Err(cfg_err("mu_mode", format!("expected true_mu or plugin, got `{v}`"))),
            };
        }
        if let Some(v) = r.take("constraint_mode") {
            cfg.constraint_mode = match v.as_str() {
                "inequality" => BudgetMode::Inequality,
                "equality_with_zeroing" => BudgetMode::EqualityWithZeroing,
                _ => {
                    return Err(cfg_err(
                        "constraint_mode",
                        format!("expected inequality or equality_with_zeroing, got `{v}`"),
                    ))
                }
            };
        }
        if let Some(v) = r.take("rate_cap") {
            cfg.rate_cap = if v == "none" {
                None
            } else {
                Some(v.parse().map_err(|_| cfg_err("rate_cap", format!("expected a number or none, got `{v}`")))?)
            };
        }
        cfg.use_prediction = r.parse("use_prediction")?.unwrap_or(cfg.use_prediction);
        let start: Option<usize> = r.parse("median_start")?;
        let end: Option<usize> = r.parse("median_end")?;
        if start.is_some() || end.is_some() {
            let (lo, hi) = default_window(cfg.horizon);
            cfg.median_window = Some((start.unwrap_or(lo), end.unwrap_or(hi)));
        }
        cfg.dump_flows = r.parse("dump_flows")?.unwrap_or(false);
        cfg.tol_theta = r.parse("tol_theta")?.unwrap_or(cfg.tol_theta);

        if let Some(key) = r.kv.keys().min() {
            return Err(cfg_err(key, "unknown key"));
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.horizon == 0 {
            return Err(cfg_err("horizon", "must be at least 1"));
        }
        if self.block_size == 0 {
            return Err(cfg_err("block_size", "must be at least 1"));
        }
        if self.replications == 0 {
            return Err(cfg_err("replications", "must be at least 1"));
        }
        if let Some(c) = self.rate_cap {
            if !(c > 0.0) {
                return Err(cfg_err("rate_cap", "must be positive"));
            }
        }
        if !(self.tol_theta > 0.0) {
            return Err(cfg_err("tol_theta", "must be positive"));
        }
        if let TraceSpec::RandomWalk { floor, .. } = self.trace {
            if !(floor >= 0.0) {
                return Err(cfg_err("trace_floor", "must be nonnegative"));
            }
        }
        if let TopologySource::Synth { params, .. } = &self.topology {
            if !(params.flow_fraction > 0.0 && params.flow_fraction <= 1.0) {
                return Err(cfg_err("flow_fraction", "must lie in (0, 1]"));
            }
            if !(params.budget > 0.0) {
                return Err(cfg_err("budget", "must be positive"));
            }
        }
        let (lo, hi) = self.median_window();
        if lo < 1 || lo > hi || hi > self.horizon {
            return Err(cfg_err(
                "median_start",
                format!("window {lo}..={hi} must lie within 1..={}", self.horizon),
            ));
        }
        Ok(())
    }

    /// Inclusive period range used for the summary median.
    pub fn median_window(&self) -> (usize, usize) {
        self.median_window.unwrap_or_else(|| default_window(self.horizon))
    }
}

/// `(0.2 T, T]` as an inclusive range.
pub fn default_window(horizon: usize) -> (usize, usize) {
    (horizon / 5 + 1, horizon)
}

/// `line:N`, `star:N`, `grid:RxC` or `random:N:L`.
pub fn parse_synth_kind(s: &str) -> std::result::Result<SynthKind, String> {
    let num = |v: &str| {
        v.parse::<usize>()
            .map_err(|_| format!("bad size `{v}` in synthetic shape `{s}`"))
    };
    let parts: Vec<&str> = s.split(':').collect();
    match parts.as_slice() {
        ["line", n] => Ok(SynthKind::Line { nodes: num(n)? }),
        ["star", n] => Ok(SynthKind::Star { leaves: num(n)? }),
        ["grid", dims] => {
            let (r, c) = dims
                .split_once('x')
                .ok_or_else(|| format!("grid shape must look like grid:RxC, got `{s}`"))?;
            Ok(SynthKind::Grid {
                rows: num(r)?,
                cols: num(c)?,
            })
        }
        ["random", n, l] => Ok(SynthKind::Random {
            nodes: num(n)?,
            links: num(l)?,
        }),
        _ => Err(format!(
            "expected line:N, star:N, grid:RxC or random:N:L, got `{s}`"
        )),
    }
}

fn cfg_err(field: &str, reason: impl Into<String>) -> Error {
    Error::Config {
        field: field.to_string(),
        reason: reason.into(),
    }
}

struct Reader {
    kv: HashMap<String, String>,
}

impl Reader {
    fn take(&mut self, key: &str) -> Option<String> {
        self.kv.remove(key)
    }

    fn parse<T: FromStr>(&mut self, key: &str) -> Result<Option<T>> {
        match self.kv.remove(key) {
            None => Ok(None),
            Some(v) => v
                .parse()
                .map(Some)
                .map_err(|_| cfg_err(key, format!("cannot parse `{v}`"))),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(text: &str) -> Result<ExperimentConfig> {
        ExperimentConfig::parse(text, Path::new("/base"))
    }

    fn field(e: Error) -> String {
        match e {
            Error::Config { field, .. } => field,
            other => panic!("expected a config error, got {other:?}"),
        }
    }

    #[test]
    fn defaults_and_overrides() {
        let cfg = parse(
            "synth = grid:3x3   # comment\nsynth_seed=7\nscheme = myopic\nhorizon = 100\n\
             block_size = 1\nmu_mode = plugin\nrate_cap = none\nconstraint_mode = equality_with_zeroing\n",
        )
        .unwrap();
        match cfg.topology {
            TopologySource::Synth { params, seed } => {
                assert_eq!(params.kind, SynthKind::Grid { rows: 3, cols: 3 });
                assert_eq!(seed, 7);
            }
            _ => panic!(),
        }
        assert_eq!(cfg.scheme, RunScheme::Myopic);
        assert_eq!(cfg.warmup_scheme, RunScheme::Naive);
        assert_eq!(cfg.block_size, 1);
        assert_eq!(cfg.mu_mode, MuMode::Plugin);
        assert_eq!(cfg.rate_cap, None);
        assert_eq!(cfg.constraint_mode, BudgetMode::EqualityWithZeroing);
        assert_eq!(cfg.median_window(), (21, 100));
        assert_eq!(cfg.trace, TraceSpec::RandomWalk { seed: 1, floor: 1.0 });
    }

    #[test]
    fn paths_resolve_against_base() {
        let cfg = parse("topology = net\ntrace = t.csv\n").unwrap();
        assert_eq!(cfg.topology, TopologySource::Bundle(PathBuf::from("/base/net")));
        assert_eq!(cfg.trace, TraceSpec::Replay(PathBuf::from("/base/t.csv")));
    }

    #[test]
    fn default_window_matches_two_hundred_periods() {
        assert_eq!(default_window(200), (41, 200));
        assert_eq!(default_window(1), (1, 1));
    }

    #[test]
    fn errors_name_the_field() {
        assert_eq!(field(parse("synth = grid:3x3\nhorizon = 0\n").unwrap_err()), "horizon");
        assert_eq!(field(parse("synth = grid:3x3\nhorizon = ten\n").unwrap_err()), "horizon");
        assert_eq!(field(parse("synth = grid:3x3\nblock_size = 0\n").unwrap_err()), "block_size");
        assert_eq!(field(parse("synth = grid:3x3\nreplications = 0\n").unwrap_err()), "replications");
        assert_eq!(field(parse("synth = hex:3\n").unwrap_err()), "synth");
        assert_eq!(field(parse("synth = grid:3x3\nscheme = best\n").unwrap_err()), "scheme");
        assert_eq!(field(parse("synth = grid:3x3\ncolour = red\n").unwrap_err()), "colour");
        assert_eq!(field(parse("synth = grid:3x3\nseed = 1\nseed = 2\n").unwrap_err()), "seed");
        assert_eq!(field(parse("horizon = 5\n").unwrap_err()), "topology");
        assert_eq!(field(parse("synth = grid:3x3\njunk\n").unwrap_err()), "line 2");
        assert_eq!(
            field(parse("synth = grid:3x3\nhorizon = 10\nmedian_start = 11\n").unwrap_err()),
            "median_start"
        );
    }

    #[test]
    fn synth_shapes() {
        assert_eq!(parse_synth_kind("line:5"), Ok(SynthKind::Line { nodes: 5 }));
        assert_eq!(parse_synth_kind("star:4"), Ok(SynthKind::Star { leaves: 4 }));
        assert_eq!(
            parse_synth_kind("random:10:15"),
            Ok(SynthKind::Random { nodes: 10, links: 15 })
        );
        assert!(parse_synth_kind("grid:3").is_err());
        assert!(parse_synth_kind("line:x").is_err());
    }
}
