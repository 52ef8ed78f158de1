//! Versioned CSV and summary outputs. Each CSV starts with one `#` line
//! naming the schema and its version.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::Path;

use super::MetricsSeries;
use crate::design::DesignResult;
use crate::error::Result;

pub const SCHEMA_VERSION: u32 = 1;

/// `t,max_mse,scheme`.
pub fn write_metrics_csv<W: Write>(s: &MetricsSeries, mut w: W) -> Result<()> {
    writeln!(
        w,
        "# flowdesign metrics v{SCHEMA_VERSION} mode={} replications={} median_window={}..{}",
        s.mode, s.replications, s.median_window.0, s.median_window.1
    )?;
    let mut wtr = csv::Writer::from_writer(w);
    wtr.write_record(["t", "max_mse", "scheme"])?;
    let scheme = s.scheme.to_string();
    for (t, v) in s.max_mse.iter().enumerate() {
        wtr.write_record([(t + 1).to_string(), v.to_string(), scheme.clone()])?;
    }
    wtr.flush()?;
    Ok(())
}

/// `block,op_id,xi` with 1-based observation point ids.
pub fn write_rates_csv<W: Write>(s: &MetricsSeries, mut w: W) -> Result<()> {
    writeln!(w, "# flowdesign rates v{SCHEMA_VERSION} block_size={}", s.block_size)?;
    let mut wtr = csv::Writer::from_writer(w);
    wtr.write_record(["block", "op_id", "xi"])?;
    for r in &s.rates {
        for (k, x) in r.xi.iter().enumerate() {
            wtr.write_record([r.block.to_string(), (k + 1).to_string(), x.to_string()])?;
        }
    }
    wtr.flush()?;
    Ok(())
}

/// `t,flow_id,mse`, one row per period and flow.
pub fn write_flows_csv<W: Write>(s: &MetricsSeries, mut w: W) -> Result<()> {
    writeln!(w, "# flowdesign flows v{SCHEMA_VERSION}")?;
    let mut wtr = csv::Writer::from_writer(w);
    wtr.write_record(["t", "flow_id", "mse"])?;
    for (t, row) in s.flow_mse.iter().enumerate() {
        for (i, v) in row.iter().enumerate() {
            wtr.write_record([(t + 1).to_string(), (i + 1).to_string(), v.to_string()])?;
        }
    }
    wtr.flush()?;
    Ok(())
}

pub fn summary_text(s: &MetricsSeries) -> String {
    format!(
        "mode = {}\nscheme = {}\nhorizon = {}\nblock_size = {}\nreplications = {}\n\
         median_window = {}..{}\nmedian_max_mse = {}\nfinal_max_mse = {}\n",
        s.mode,
        s.scheme,
        s.horizon(),
        s.block_size,
        s.replications,
        s.median_window.0,
        s.median_window.1,
        s.median_max_mse,
        s.max_mse.last().copied().unwrap_or(f64::NAN),
    )
}

/// Writes `metrics.csv`, `rates.csv`, `summary.txt` and, on request,
/// `flows.csv` into `dir`.
pub fn write_outputs(s: &MetricsSeries, dir: &Path, dump_flows: bool) -> Result<()> {
    fs::create_dir_all(dir)?;
    write_metrics_csv(s, BufWriter::new(File::create(dir.join("metrics.csv"))?))?;
    write_rates_csv(s, BufWriter::new(File::create(dir.join("rates.csv"))?))?;
    fs::write(dir.join("summary.txt"), summary_text(s))?;
    if dump_flows {
        write_flows_csv(s, BufWriter::new(File::create(dir.join("flows.csv"))?))?;
    }
    Ok(())
}

/// `xi.csv` (`op_id,xi`), `theta.txt`, and `socp.txt` when given.
pub fn write_design(res: &DesignResult, socp: Option<&str>, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir)?;
    let mut f = BufWriter::new(File::create(dir.join("xi.csv"))?);
    writeln!(f, "# flowdesign xi v{SCHEMA_VERSION} scheme={}", res.scheme)?;
    let mut wtr = csv::Writer::from_writer(f);
    wtr.write_record(["op_id", "xi"])?;
    for (k, x) in res.xi.as_slice().iter().enumerate() {
        wtr.write_record([(k + 1).to_string(), x.to_string()])?;
    }
    wtr.flush()?;
    fs::write(dir.join("theta.txt"), format!("{}\n", res.theta))?;
    if let Some(text) = socp {
        fs::write(dir.join("socp.txt"), text)?;
    }
    Ok(())
}
