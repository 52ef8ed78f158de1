//! Network measurement model: topology, hop-count routing, and the linear
//! map from per-interface sampling rates to per-flow information.
//!
//! Each directed edge `u → v` is one observation point, the incoming
//! interface of router `v`. A flow routed over a path produces one raw
//! measurement at every observation point on that path. With the measurement
//! variance approximated as `μ_flow / ξ_op`, the GLS precision of the fused
//! flow estimates is `L' D⁻¹ L` with `D⁻¹ = Σ_k ξ_k Ψ_k`; it is diagonal
//! because each measurement belongs to exactly one flow, and its diagonal is
//! `J ξ`.

use std::collections::{BTreeSet, HashMap, VecDeque};
use std::fs;
use std::path::Path;

use nalgebra::DMatrix;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{DesignProblem, DesignVector, FlowModel, InformationVector};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Edge {
    pub from: usize,
    pub to: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FlowSpec {
    pub origin: usize,
    pub destination: usize,
    pub sigma2: f64,
    pub mu: f64,
    /// Explicit node path; routed by hop count when absent.
    pub path: Option<Vec<usize>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TopologySpec {
    pub nodes: Vec<String>,
    /// Observation point `k` is `edges[k]`.
    pub edges: Vec<Edge>,
    pub flows: Vec<FlowSpec>,
    /// Per-router budget, parallel to `nodes`.
    pub budgets: Vec<f64>,
}

impl TopologySpec {
    pub fn n_ops(&self) -> usize {
        self.edges.len()
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.nodes.len();
        if n == 0 {
            return Err(Error::Topology("no nodes".into()));
        }
        let distinct: BTreeSet<&String> = self.nodes.iter().collect();
        if distinct.len() != n {
            return Err(Error::Topology("duplicate node ids".into()));
        }
        if self.budgets.len() != n {
            return Err(Error::DimensionMismatch {
                what: "router budgets",
                expected: n,
                got: self.budgets.len(),
            });
        }
        if let Some(j) = self.budgets.iter().position(|b| !(*b >= 0.0)) {
            return Err(Error::Topology(format!(
                "router {} has negative budget {}",
                self.nodes[j], self.budgets[j]
            )));
        }
        for (k, e) in self.edges.iter().enumerate() {
            if e.from >= n || e.to >= n {
                return Err(Error::Topology(format!("edge {} has an unknown endpoint", k + 1)));
            }
        }
        for (i, f) in self.flows.iter().enumerate() {
            if f.origin >= n || f.destination >= n {
                return Err(Error::Topology(format!("flow {} has an unknown endpoint", i + 1)));
            }
        }
        Ok(())
    }

    pub fn flow_model(&self) -> Result<FlowModel> {
        FlowModel::new(
            self.flows.iter().map(|f| f.sigma2).collect(),
            self.flows.iter().map(|f| f.mu).collect(),
        )
    }

    fn node_index(&self) -> HashMap<&str, usize> {
        self.nodes.iter().enumerate().map(|(i, s)| (s.as_str(), i)).collect()
    }
}

/// A routed flow: its node sequence and the observation points it crosses.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Route {
    pub nodes: Vec<usize>,
    pub edges: Vec<usize>,
}

/// Lowest-index edge for each ordered node pair.
fn edge_lookup(t: &TopologySpec) -> HashMap<(usize, usize), usize> {
    let mut map = HashMap::new();
    for (k, e) in t.edges.iter().enumerate() {
        map.entry((e.from, e.to)).or_insert(k);
    }
    map
}

/// Shortest hop-count path per flow. Among equal-length paths the one with
/// the lexicographically smallest node-id sequence wins.
pub fn route_flows(t: &TopologySpec) -> Result<Vec<Route>> {
    t.validate()?;
    let n = t.nodes.len();
    let lookup = edge_lookup(t);
    let mut out_adj = vec![Vec::new(); n];
    let mut in_adj = vec![Vec::new(); n];
    for e in &t.edges {
        out_adj[e.from].push(e.to);
        in_adj[e.to].push(e.from);
    }
    for adj in out_adj.iter_mut() {
        adj.sort_by(|a, b| t.nodes[*a].cmp(&t.nodes[*b]));
        adj.dedup();
    }

    let mut dist_cache: HashMap<usize, Vec<usize>> = HashMap::new();
    let mut routes = Vec::with_capacity(t.flows.len());
    for (i, flow) in t.flows.iter().enumerate() {
        let unreachable = || Error::Unreachable {
            flow: i + 1,
            origin: t.nodes[flow.origin].clone(),
            destination: t.nodes[flow.destination].clone(),
        };
        let nodes = match &flow.path {
            Some(path) => {
                if path.first() != Some(&flow.origin) || path.last() != Some(&flow.destination) {
                    return Err(Error::Topology(format!(
                        "flow {}: explicit path does not join its endpoints",
                        i + 1
                    )));
                }
                path.clone()
            }
            None => {
                let dist = dist_cache
                    .entry(flow.destination)
                    .or_insert_with(|| hops_to(flow.destination, &in_adj));
                if dist[flow.origin] == usize::MAX {
                    return Err(unreachable());
                }
                let mut path = vec![flow.origin];
                let mut cur = flow.origin;
                while cur != flow.destination {
                    // out_adj is sorted by id, so the first match is smallest.
                    cur = *out_adj[cur]
                        .iter()
                        .find(|&&w| dist[w] != usize::MAX && dist[w] + 1 == dist[cur])
                        .ok_or_else(unreachable)?;
                    path.push(cur);
                }
                path
            }
        };
        let edges = nodes
            .windows(2)
            .map(|w| {
                lookup.get(&(w[0], w[1])).copied().ok_or_else(|| {
                    Error::Topology(format!(
                        "flow {}: no edge {} -> {}",
                        i + 1,
                        t.nodes[w[0]],
                        t.nodes[w[1]]
                    ))
                })
            })
            .collect::<Result<Vec<_>>>()?;
        routes.push(Route { nodes, edges });
    }
    Ok(routes)
}

fn hops_to(dest: usize, in_adj: &[Vec<usize>]) -> Vec<usize> {
    let mut dist = vec![usize::MAX; in_adj.len()];
    dist[dest] = 0;
    let mut queue = VecDeque::from([dest]);
    while let Some(v) = queue.pop_front() {
        for &u in &in_adj[v] {
            if dist[u] == usize::MAX {
                dist[u] = dist[v] + 1;
                queue.push_back(u);
            }
        }
    }
    dist
}

/// One raw measurement: flow `flow` observed at observation point `op`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Measurement {
    pub op: usize,
    pub flow: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum BudgetMode {
    /// `R ξ ≤ b`.
    #[default]
    Inequality,
    /// `R ξ = b` on routers carrying tracked flows; interfaces that carry
    /// none are pinned to zero.
    EqualityWithZeroing,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MeasurementModel {
    /// Ordered by observation point, then by flow.
    pub measurements: Vec<Measurement>,
    /// `n_g × n_r` with a single 1 per row.
    pub l: DMatrix<f64>,
    /// Diagonal of `Ψ_k` for each observation point `k` (length `n_g`).
    pub psi: Vec<Vec<f64>>,
    /// `n_r × n_o` information map.
    pub j: DMatrix<f64>,
    /// `n_v × n_o` router membership of observation points.
    pub r: DMatrix<f64>,
    pub b: Vec<f64>,
    /// `traversal[j][k]`: interface `k` of router `j` carries a tracked flow.
    pub traversal: Vec<Vec<bool>>,
    pub flow_model: FlowModel,
    pub routes: Vec<Route>,
}

/// Assembles `L`, `Ψ_k`, `J`, `R` and `b` for routed flows.
pub fn build_measurement_model(t: &TopologySpec, routes: &[Route]) -> Result<MeasurementModel> {
    t.validate()?;
    if routes.len() != t.flows.len() {
        return Err(Error::DimensionMismatch {
            what: "routes",
            expected: t.flows.len(),
            got: routes.len(),
        });
    }
    let flow_model = t.flow_model()?;
    let n_r = t.flows.len();
    let n_o = t.n_ops();
    let n_v = t.nodes.len();

    let mut through: Vec<Vec<usize>> = vec![Vec::new(); n_o];
    for (i, route) in routes.iter().enumerate() {
        for &k in &route.edges {
            if k >= n_o {
                return Err(Error::Topology(format!("flow {} uses unknown edge {}", i + 1, k + 1)));
            }
            through[k].push(i);
        }
    }
    let measurements: Vec<Measurement> = through
        .iter()
        .enumerate()
        .flat_map(|(op, flows)| flows.iter().map(move |&flow| Measurement { op, flow }))
        .collect();
    let n_g = measurements.len();

    let l = DMatrix::from_fn(n_g, n_r, |g, i| if measurements[g].flow == i { 1.0 } else { 0.0 });
    let mu = flow_model.mu();
    let psi: Vec<Vec<f64>> = (0..n_o)
        .map(|k| {
            measurements
                .iter()
                .map(|m| if m.op == k { 1.0 / mu[m.flow] } else { 0.0 })
                .collect()
        })
        .collect();
    // [J]_ik = L_{·,i}' Ψ_k L_{·,i}
    let j = DMatrix::from_fn(n_r, n_o, |i, k| {
        (0..n_g).map(|g| l[(g, i)] * psi[k][g] * l[(g, i)]).sum()
    });

    let r = DMatrix::from_fn(n_v, n_o, |row, k| if t.edges[k].to == row { 1.0 } else { 0.0 });
    let traversal = (0..n_v)
        .map(|row| {
            (0..n_o)
                .map(|k| t.edges[k].to == row && !through[k].is_empty())
                .collect()
        })
        .collect();

    Ok(MeasurementModel {
        measurements,
        l,
        psi,
        j,
        r,
        b: t.budgets.clone(),
        traversal,
        flow_model,
        routes: routes.to_vec(),
    })
}

impl MeasurementModel {
    pub fn n_flows(&self) -> usize {
        self.l.ncols()
    }

    pub fn n_ops(&self) -> usize {
        self.psi.len()
    }

    pub fn n_measurements(&self) -> usize {
        self.measurements.len()
    }

    /// Whether each observation point carries at least one tracked flow.
    pub fn op_is_traversed(&self) -> Vec<bool> {
        let mut used = vec![false; self.n_ops()];
        for m in &self.measurements {
            used[m.op] = true;
        }
        used
    }

    /// `J` recomputed with plug-in mean volumes in place of the true `μ`.
    pub fn information_map(&self, mu: &[f64]) -> DMatrix<f64> {
        let mut j = DMatrix::zeros(self.n_flows(), self.n_ops());
        for m in &self.measurements {
            j[(m.flow, m.op)] += 1.0 / mu[m.flow];
        }
        j
    }

    /// Design problem over this network. `mu` overrides the true means in
    /// `J`; `cap` is the per-interface upper bound (`None` for uncapped).
    pub fn design_problem(&self, mode: BudgetMode, cap: Option<f64>, mu: Option<&[f64]>) -> DesignProblem {
        let j = match mu {
            Some(mu) => self.information_map(mu),
            None => self.j.clone(),
        };
        let mut p = DesignProblem::new(j, self.r.clone(), self.b.clone());
        p.upper = vec![cap; self.n_ops()];
        if mode == BudgetMode::EqualityWithZeroing {
            let used = self.op_is_traversed();
            for (k, &u) in used.iter().enumerate() {
                if !u {
                    p.upper[k] = Some(0.0);
                }
            }
            p.row_is_equality = self.traversal.iter().map(|row| row.iter().any(|t| *t)).collect();
        }
        p
    }

    /// `L' D⁻¹ L` assembled densely from `Ψ_k` and `ξ`.
    pub fn gls_precision_dense(&self, xi: &DesignVector) -> DMatrix<f64> {
        let n_g = self.n_measurements();
        let mut d_inv = DMatrix::zeros(n_g, n_g);
        for (k, diag) in self.psi.iter().enumerate() {
            let x = xi.as_slice()[k];
            for g in 0..n_g {
                d_inv[(g, g)] += x * diag[g];
            }
        }
        self.l.transpose() * d_inv * &self.l
    }
}

/// Per-flow information `m = J ξ`.
pub fn effective_information(mm: &MeasurementModel, xi: &DesignVector) -> InformationVector {
    let m = (0..mm.n_flows())
        .map(|i| mm.j.row(i).iter().zip(xi.as_slice()).map(|(a, x)| a * x).sum::<f64>().max(0.0))
        .collect();
    InformationVector::new(m).expect("J ≥ 0 and ξ ≥ 0 give nonnegative information")
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SynthKind {
    Line { nodes: usize },
    Star { leaves: usize },
    Grid { rows: usize, cols: usize },
    Random { nodes: usize, links: usize },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SynthParams {
    pub kind: SynthKind,
    /// Fraction of origin-destination pairs kept, heaviest first.
    pub flow_fraction: f64,
    pub budget: f64,
    /// Mean volumes are log-uniform on this range (packets/period).
    pub mu_range: (f64, f64),
    /// Innovation standard deviation as a fraction of the mean volume.
    pub cv_range: (f64, f64),
}

impl SynthParams {
    pub fn new(kind: SynthKind) -> Self {
        SynthParams {
            kind,
            flow_fraction: 0.25,
            budget: 0.01,
            mu_range: (1e5, 1e7),
            cv_range: (0.01, 0.05),
        }
    }
}

/// Reproducible synthetic topology with every link bidirectional.
pub fn synth_topology(params: &SynthParams, seed: u64) -> Result<TopologySpec> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (n, links): (usize, Vec<(usize, usize)>) = match params.kind {
        SynthKind::Line { nodes } => {
            if nodes < 2 {
                return Err(Error::invalid("nodes", "a line needs at least 2 nodes"));
            }
            (nodes, (0..nodes - 1).map(|i| (i, i + 1)).collect())
        }
        SynthKind::Star { leaves } => {
            if leaves < 1 {
                return Err(Error::invalid("leaves", "a star needs at least 1 leaf"));
            }
            (leaves + 1, (1..=leaves).map(|i| (0, i)).collect())
        }
        SynthKind::Grid { rows, cols } => {
            if rows == 0 || cols == 0 || rows * cols < 2 {
                return Err(Error::invalid("grid", "a grid needs at least 2 cells"));
            }
            let at = |r: usize, c: usize| r * cols + c;
            let mut links = Vec::new();
            for r in 0..rows {
                for c in 0..cols {
                    if c + 1 < cols {
                        links.push((at(r, c), at(r, c + 1)));
                    }
                    if r + 1 < rows {
                        links.push((at(r, c), at(r + 1, c)));
                    }
                }
            }
            (rows * cols, links)
        }
        SynthKind::Random { nodes, links } => {
            if nodes < 2 {
                return Err(Error::invalid("nodes", "a random graph needs at least 2 nodes"));
            }
            let max_links = nodes * (nodes - 1) / 2;
            if links < nodes - 1 || links > max_links {
                return Err(Error::invalid(
                    "links",
                    format!("need between {} and {max_links} links for {nodes} nodes", nodes - 1),
                ));
            }
            (nodes, random_connected(nodes, links, &mut rng))
        }
    };
    if !(params.flow_fraction > 0.0 && params.flow_fraction <= 1.0) {
        return Err(Error::invalid("flow_fraction", "must lie in (0, 1]"));
    }
    if !(params.budget >= 0.0) {
        return Err(Error::invalid("budget", "must be nonnegative"));
    }

    let width = (n - 1).to_string().len().max(2);
    let nodes: Vec<String> = (0..n).map(|i| format!("n{i:0width$}")).collect();
    let edges = links
        .iter()
        .flat_map(|&(u, v)| [Edge { from: u, to: v }, Edge { from: v, to: u }])
        .collect();

    let (mu_lo, mu_hi) = params.mu_range;
    let (cv_lo, cv_hi) = params.cv_range;
    let mut candidates: Vec<FlowSpec> = Vec::with_capacity(n * (n - 1));
    for o in 0..n {
        for d in 0..n {
            if o == d {
                continue;
            }
            let mu = (mu_lo.ln() + rng.random::<f64>() * (mu_hi / mu_lo).ln()).exp().round();
            let cv = cv_lo + rng.random::<f64>() * (cv_hi - cv_lo);
            candidates.push(FlowSpec {
                origin: o,
                destination: d,
                sigma2: (cv * mu).powi(2),
                mu,
                path: None,
            });
        }
    }
    // Stable sort keeps generation order among equal volumes.
    candidates.sort_by(|a, b| b.mu.partial_cmp(&a.mu).unwrap());
    let keep = ((params.flow_fraction * candidates.len() as f64).ceil() as usize).max(1);
    candidates.truncate(keep);
    candidates.sort_by_key(|f| (f.origin, f.destination));

    Ok(TopologySpec {
        nodes,
        edges,
        flows: candidates,
        budgets: vec![params.budget; n],
    })
}

fn random_connected(n: usize, links: usize, rng: &mut ChaCha8Rng) -> Vec<(usize, usize)> {
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(rng);
    let mut set = BTreeSet::new();
    for i in 1..n {
        let parent = order[rng.random_range(0..i)];
        let (a, b) = (order[i].min(parent), order[i].max(parent));
        set.insert((a, b));
    }
    let mut missing: Vec<(usize, usize)> = (0..n)
        .flat_map(|a| (a + 1..n).map(move |b| (a, b)))
        .filter(|p| !set.contains(p))
        .collect();
    missing.shuffle(rng);
    set.extend(missing.into_iter().take(links - (n - 1)));
    set.into_iter().collect()
}

#[derive(Debug, Serialize, Deserialize)]
struct NodeRow {
    id: String,
}

#[derive(Debug, Serialize, Deserialize)]
struct LinkRow {
    u: String,
    v: String,
}

#[derive(Debug, Serialize, Deserialize)]
struct FlowRow {
    origin: String,
    destination: String,
    sigma2: f64,
    mu: f64,
    #[serde(default)]
    path: Option<String>,
}

#[derive(Debug, Serialize, Deserialize)]
struct BudgetRow {
    router: String,
    b: f64,
}

fn read_rows<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<Vec<T>> {
    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .comment(Some(b'#'))
        .from_path(path)
        .map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
    rdr.deserialize()
        .map(|r| r.map_err(|e| Error::Io(format!("{}: {e}", path.display()))))
        .collect()
}

fn write_rows<T: Serialize>(path: &Path, rows: &[T]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

/// Reads `nodes.csv`, `links.csv`, `flows.csv` and `budgets.csv` from `dir`.
/// Link `l` becomes observation points `2l+1` (`u → v`) and `2l+2` (`v → u`).
pub fn read_bundle(dir: &Path) -> Result<TopologySpec> {
    let nodes: Vec<String> = read_rows::<NodeRow>(&dir.join("nodes.csv"))?
        .into_iter()
        .map(|r| r.id)
        .collect();
    let mut t = TopologySpec {
        budgets: vec![f64::NAN; nodes.len()],
        nodes,
        edges: Vec::new(),
        flows: Vec::new(),
    };
    let index: HashMap<String, usize> = t.node_index().into_iter().map(|(k, v)| (k.to_string(), v)).collect();
    let lookup = |id: &str, file: &str| -> Result<usize> {
        index
            .get(id)
            .copied()
            .ok_or_else(|| Error::Topology(format!("{file}: unknown node `{id}`")))
    };
    for link in read_rows::<LinkRow>(&dir.join("links.csv"))? {
        let u = lookup(&link.u, "links.csv")?;
        let v = lookup(&link.v, "links.csv")?;
        t.edges.push(Edge { from: u, to: v });
        t.edges.push(Edge { from: v, to: u });
    }
    for row in read_rows::<FlowRow>(&dir.join("flows.csv"))? {
        let path = match row.path.as_deref().map(str::trim) {
            None | Some("") => None,
            Some(p) => Some(
                p.split_whitespace()
                    .map(|id| lookup(id, "flows.csv"))
                    .collect::<Result<Vec<_>>>()?,
            ),
        };
        t.flows.push(FlowSpec {
            origin: lookup(&row.origin, "flows.csv")?,
            destination: lookup(&row.destination, "flows.csv")?,
            sigma2: row.sigma2,
            mu: row.mu,
            path,
        });
    }
    for row in read_rows::<BudgetRow>(&dir.join("budgets.csv"))? {
        let j = lookup(&row.router, "budgets.csv")?;
        t.budgets[j] = row.b;
    }
    if let Some(j) = t.budgets.iter().position(|b| b.is_nan()) {
        return Err(Error::Topology(format!("budgets.csv: router `{}` has no budget", t.nodes[j])));
    }
    t.validate()?;
    Ok(t)
}

/// Writes the four bundle files. Edges must come in `(u→v, v→u)` pairs.
pub fn write_bundle(t: &TopologySpec, dir: &Path) -> Result<()> {
    t.validate()?;
    fs::create_dir_all(dir)?;
    let name = |i: usize| t.nodes[i].clone();
    let mut links = Vec::new();
    for pair in t.edges.chunks(2) {
        match pair {
            [a, b] if a.from == b.to && a.to == b.from => links.push(LinkRow {
                u: name(a.from),
                v: name(a.to),
            }),
            _ => {
                return Err(Error::Topology(
                    "edges are not bidirectional pairs; cannot write links.csv".into(),
                ))
            }
        }
    }
    let nodes: Vec<NodeRow> = t.nodes.iter().map(|id| NodeRow { id: id.clone() }).collect();
    let flows: Vec<FlowRow> = t
        .flows
        .iter()
        .map(|f| FlowRow {
            origin: name(f.origin),
            destination: name(f.destination),
            sigma2: f.sigma2,
            mu: f.mu,
            path: f
                .path
                .as_ref()
                .map(|p| p.iter().map(|&i| name(i)).collect::<Vec<_>>().join(" ")),
        })
        .collect();
    let budgets: Vec<BudgetRow> = t
        .nodes
        .iter()
        .zip(&t.budgets)
        .map(|(id, &b)| BudgetRow { router: id.clone(), b })
        .collect();
    write_rows(&dir.join("nodes.csv"), &nodes)?;
    write_rows(&dir.join("links.csv"), &links)?;
    write_rows(&dir.join("flows.csv"), &flows)?;
    write_rows(&dir.join("budgets.csv"), &budgets)?;
    Ok(())
}
