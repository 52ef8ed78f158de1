//! Ground-truth volumes, per-packet sampling, and GLS fusion of the raw
//! per-interface estimates into one estimate per flow.

use std::io::{Read, Write};

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Binomial, Distribution, Normal};

use crate::error::{Error, Result};
use crate::model::{DesignVector, FlowModel, InformationVector};
use crate::network::MeasurementModel;

pub const DEFAULT_FLOOR: f64 = 1.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TraceSource {
    SyntheticRandomWalk,
    FileReplay,
}

/// True flow volumes, one row per period (`t = 1..=T`).
#[derive(Debug, Clone, PartialEq)]
pub struct Trace {
    pub x: DMatrix<f64>,
    pub source: TraceSource,
}

impl Trace {
    pub fn periods(&self) -> usize {
        self.x.nrows()
    }

    pub fn n_flows(&self) -> usize {
        self.x.ncols()
    }

    /// Volumes in period `t` (1-based).
    pub fn period(&self, t: usize) -> Vec<f64> {
        self.x.row(t - 1).iter().copied().collect()
    }

    /// Period-major CSV: header `t,flow_1,...,flow_nr`, integer volumes.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(w);
        let mut header = vec!["t".to_string()];
        header.extend((1..=self.n_flows()).map(|i| format!("flow_{i}")));
        wtr.write_record(&header)?;
        for t in 0..self.periods() {
            let mut rec = vec![(t + 1).to_string()];
            rec.extend(self.x.row(t).iter().map(|v| format!("{}", v.round() as i64)));
            wtr.write_record(&rec)?;
        }
        wtr.flush()?;
        Ok(())
    }

    pub fn read_csv<R: Read>(r: R) -> Result<Trace> {
        let mut rdr = csv::ReaderBuilder::new()
            .trim(csv::Trim::All)
            .comment(Some(b'#'))
            .from_reader(r);
        let header = rdr.headers()?.clone();
        let n_r = header.len().saturating_sub(1);
        if n_r == 0 || &header[0] != "t" {
            return Err(Error::Io("trace header must be `t,flow_1,...,flow_nr`".into()));
        }
        let mut values = Vec::new();
        let mut rows = 0;
        for (line, rec) in rdr.records().enumerate() {
            let rec = rec?;
            if rec.len() != n_r + 1 {
                return Err(Error::Io(format!("trace row {}: expected {} columns", line + 1, n_r + 1)));
            }
            let t: usize = rec[0]
                .parse()
                .map_err(|_| Error::Io(format!("trace row {}: bad period index", line + 1)))?;
            if t != rows + 1 {
                return Err(Error::Io(format!("trace row {}: periods must run 1, 2, ...", line + 1)));
            }
            for field in rec.iter().skip(1) {
                let v: f64 = field
                    .parse()
                    .map_err(|_| Error::Io(format!("trace row {}: bad volume `{field}`", line + 1)))?;
                if !(v >= 0.0) || v.fract() != 0.0 {
                    return Err(Error::Io(format!(
                        "trace row {}: volumes must be nonnegative integers, got {v}",
                        line + 1
                    )));
                }
                values.push(v);
            }
            rows += 1;
        }
        if rows == 0 {
            return Err(Error::Io("trace has no periods".into()));
        }
        Ok(Trace {
            x: DMatrix::from_row_slice(rows, n_r, &values),
            source: TraceSource::FileReplay,
        })
    }
}

/// Integer random walk `x(t) = round(x(t−1) + ε)`, `ε ~ N(0, σ²)`, clamped
/// below at `floor`.
pub fn gen_random_walk_trace(fm: &FlowModel, periods: usize, x0: &[f64], seed: u64) -> Result<Trace> {
    gen_random_walk_trace_with_floor(fm, periods, x0, seed, DEFAULT_FLOOR)
}

pub fn gen_random_walk_trace_with_floor(
    fm: &FlowModel,
    periods: usize,
    x0: &[f64],
    seed: u64,
    floor: f64,
) -> Result<Trace> {
    if periods == 0 {
        return Err(Error::invalid("periods", "need at least one period"));
    }
    if x0.len() != fm.n_flows() {
        return Err(Error::DimensionMismatch {
            what: "initial volumes",
            expected: fm.n_flows(),
            got: x0.len(),
        });
    }
    if let Some(i) = x0.iter().position(|v| !(*v > 0.0)) {
        return Err(Error::invalid(format!("x0[{i}]"), "initial volume must be positive"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let steps: Vec<Normal<f64>> = fm
        .sigma2()
        .iter()
        .map(|s2| Normal::new(0.0, s2.sqrt()).expect("σ² > 0"))
        .collect();
    let mut cur = x0.to_vec();
    let mut x = DMatrix::zeros(periods, fm.n_flows());
    for t in 0..periods {
        for (i, step) in steps.iter().enumerate() {
            cur[i] = (cur[i] + step.sample(&mut rng)).round().max(floor);
            x[(t, i)] = cur[i];
        }
    }
    Ok(Trace {
        x,
        source: TraceSource::SyntheticRandomWalk,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PacketSample {
    /// Sampled packets `N`.
    pub count: u64,
    /// Volume estimate `N / ξ`.
    pub estimate: f64,
}

/// Raw measurements of one period, indexed like `mm.measurements`. Entries
/// are `None` where the observation point's rate is zero.
#[derive(Debug, Clone, PartialEq)]
pub struct RawMeasurements {
    pub samples: Vec<Option<PacketSample>>,
}

/// Independent binomial thinning of every flow at every observation point
/// it crosses.
pub fn sample_packets<R: Rng + ?Sized>(
    x_t: &[f64],
    mm: &MeasurementModel,
    xi: &DesignVector,
    rng: &mut R,
) -> Result<RawMeasurements> {
    if x_t.len() != mm.n_flows() {
        return Err(Error::DimensionMismatch {
            what: "flow volumes",
            expected: mm.n_flows(),
            got: x_t.len(),
        });
    }
    if xi.len() != mm.n_ops() {
        return Err(Error::DimensionMismatch {
            what: "sampling rates",
            expected: mm.n_ops(),
            got: xi.len(),
        });
    }
    if let Some(k) = xi.as_slice().iter().position(|v| !(0.0..=1.0).contains(v)) {
        return Err(Error::invalid(
            format!("xi[{k}]"),
            format!("sampling rate must lie in [0, 1], got {}", xi.as_slice()[k]),
        ));
    }
    let samples = mm
        .measurements
        .iter()
        .map(|m| {
            let rate = xi.as_slice()[m.op];
            if rate == 0.0 {
                return None;
            }
            let packets = x_t[m.flow].max(0.0).round() as u64;
            let count = if rate >= 1.0 {
                packets
            } else {
                Binomial::new(packets, rate).expect("rate in (0,1)").sample(rng)
            };
            Some(PacketSample {
                count,
                estimate: count as f64 / rate,
            })
        })
        .collect();
    Ok(RawMeasurements { samples })
}

/// Diagonal GLS fusion with measurement variances `μ_flow / ξ_op`.
///
/// Returns the fused estimate per flow (`None` with no measurement) and its
/// information `Σ ξ / μ`.
pub fn fuse_gls(
    raw: &RawMeasurements,
    mm: &MeasurementModel,
    xi: &DesignVector,
    mu_plugin: &[f64],
) -> Result<(Vec<Option<f64>>, InformationVector)> {
    if raw.samples.len() != mm.n_measurements() {
        return Err(Error::DimensionMismatch {
            what: "raw measurements",
            expected: mm.n_measurements(),
            got: raw.samples.len(),
        });
    }
    if mu_plugin.len() != mm.n_flows() {
        return Err(Error::DimensionMismatch {
            what: "plug-in means",
            expected: mm.n_flows(),
            got: mu_plugin.len(),
        });
    }
    if let Some(i) = mu_plugin.iter().position(|v| !(*v > 0.0)) {
        return Err(Error::invalid(format!("mu_plugin[{i}]"), "must be positive"));
    }
    let n = mm.n_flows();
    let mut weight = vec![0.0; n];
    let mut weighted = vec![0.0; n];
    for (m, s) in mm.measurements.iter().zip(&raw.samples) {
        if let Some(s) = s {
            let w = xi.as_slice()[m.op] / mu_plugin[m.flow];
            weight[m.flow] += w;
            weighted[m.flow] += w * s.estimate;
        }
    }
    let y = weight
        .iter()
        .zip(&weighted)
        .map(|(&w, &s)| (w > 0.0).then(|| s / w))
        .collect();
    Ok((y, InformationVector::new(weight)?))
}

/// Period-major dump of raw estimates (`t,m_1,...,m_ng`; empty when absent).
pub fn write_raw_csv<W: Write>(w: W, periods: &[RawMeasurements]) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(w);
    let n_g = periods.first().map_or(0, |p| p.samples.len());
    let mut header = vec!["t".to_string()];
    header.extend((1..=n_g).map(|g| format!("m_{g}")));
    wtr.write_record(&header)?;
    for (t, p) in periods.iter().enumerate() {
        let mut rec = vec![(t + 1).to_string()];
        rec.extend(
            p.samples
                .iter()
                .map(|s| s.map_or_else(String::new, |s| s.estimate.to_string())),
        );
        wtr.write_record(&rec)?;
    }
    wtr.flush()?;
    Ok(())
}
