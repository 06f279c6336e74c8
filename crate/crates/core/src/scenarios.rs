//! Experiment runners: link-failure suites, dynamic traffic replay and
//! dataset sweeps, with CSV results and SVG plots.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::sync::Arc;
use std::time::Instant;

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::env::EnvConfig;
use crate::error::{Error, Result};
use crate::gnn::PolicyParams;
use crate::network::Network;
use crate::pipeline::{enero_optimize, evaluate_config};
use crate::routing::{LinkState, RoutingConfig};
use crate::search::{ls_baseline, sap_route, SapResult, SearchBudget};
use crate::topology::{parse_graphml, parse_topology, GraphmlOptions, NodeId, ParseOptions, Topology};
use crate::traffic::{calibrate_scale, generate_tm, TrafficMatrix};

/// Attempts per requested variant before giving up.
pub const MAX_FAILURE_ATTEMPTS: usize = 10_000;

#[derive(Debug, Clone, PartialEq)]
pub struct FailureVariant {
    /// Removed undirected edges, `(u, v)` with `u < v`, sorted.
    pub removed: Vec<(NodeId, NodeId)>,
    pub topology: Topology,
}

/// `count` distinct connected variants of `topo` with `k` undirected edges
/// removed, each edge subset drawn uniformly and rejected if it disconnects
/// the graph or repeats an earlier draw.
pub fn gen_failures(topo: &Topology, k: usize, count: usize, seed: u64) -> Result<Vec<FailureVariant>> {
    let edges = topo.edges();
    if k == 0 || k > edges.len() {
        return Err(Error::FailuresExhausted { k, count });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut seen: BTreeSet<Vec<(NodeId, NodeId)>> = BTreeSet::new();
    let mut out = Vec::with_capacity(count);
    while out.len() < count {
        let mut accepted = None;
        for _ in 0..MAX_FAILURE_ATTEMPTS {
            let mut removed: Vec<(NodeId, NodeId)> = sample(&mut rng, edges.len(), k)
                .into_iter()
                .map(|i| edges[i])
                .collect();
            removed.sort_unstable();
            if seen.contains(&removed) {
                continue;
            }
            if let Ok(t) = remove_all(topo, &removed) {
                accepted = Some((removed, t));
                break;
            }
        }
        let Some((removed, topology)) = accepted else {
            return Err(Error::FailuresExhausted { k, count });
        };
        seen.insert(removed.clone());
        out.push(FailureVariant { removed, topology });
    }
    Ok(out)
}

fn remove_all(topo: &Topology, removed: &[(NodeId, NodeId)]) -> Result<Topology> {
    let mut t = topo.clone();
    for &(u, v) in removed {
        t = t.remove_link_pair(u, v)?;
    }
    Ok(t)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Method {
    Ospf,
    Sap,
    Ls,
    Drl,
    Enero,
}

impl Method {
    pub const ALL: [Method; 5] = [Method::Ospf, Method::Sap, Method::Ls, Method::Drl, Method::Enero];

    pub fn needs_policy(self) -> bool {
        matches!(self, Method::Drl | Method::Enero)
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Method::Ospf => "ospf",
            Method::Sap => "sap",
            Method::Ls => "ls",
            Method::Drl => "drl",
            Method::Enero => "enero",
        })
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s.to_ascii_lowercase().as_str() {
            "ospf" => Method::Ospf,
            "sap" => Method::Sap,
            "ls" => Method::Ls,
            "drl" => Method::Drl,
            "enero" => Method::Enero,
            other => return Err(Error::Config(format!("unknown method {other:?}"))),
        })
    }
}

/// Shared settings for scenario runs.
#[derive(Debug, Clone)]
pub struct RunContext {
    pub params: Option<Arc<PolicyParams>>,
    pub env: EnvConfig,
    pub budget: SearchBudget,
    /// Where routing results are stored; nothing is written when unset.
    pub out_dir: Option<PathBuf>,
}

impl RunContext {
    pub fn new(params: Option<Arc<PolicyParams>>, budget: SearchBudget) -> Self {
        Self {
            params,
            env: EnvConfig::default(),
            budget,
            out_dir: None,
        }
    }

    fn policy(&self, method: Method) -> Result<&PolicyParams> {
        self.params
            .as_deref()
            .ok_or_else(|| Error::Config(format!("method {method} needs a trained policy")))
    }
}

/// A method's output: an SR configuration, or explicit paths for SAP.
#[derive(Debug, Clone)]
pub enum Routing {
    Sr(RoutingConfig),
    Paths(SapResult),
}

impl Routing {
    pub fn to_csv(&self) -> String {
        match self {
            Routing::Sr(cfg) => cfg.to_csv(),
            Routing::Paths(sap) => sap.to_csv(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Phase {
    Initial,
    Drl,
    Ls,
}

impl fmt::Display for Phase {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Phase::Initial => "initial",
            Phase::Drl => "drl",
            Phase::Ls => "ls",
        })
    }
}

/// One point of a max-utilization trajectory.
#[derive(Debug, Clone, PartialEq)]
pub struct TracePoint {
    pub elapsed_ms: f64,
    pub maxu: f64,
    pub phase: Phase,
}

#[derive(Debug, Clone)]
pub struct MethodRun {
    pub method: Method,
    pub init_maxu: f64,
    pub final_maxu: f64,
    pub wall_ms: f64,
    /// The search stopped on its budget rather than at a local optimum.
    pub truncated: bool,
    pub routing: Routing,
    pub trajectory: Vec<TracePoint>,
}

/// Optimizes one instance from OSPF routing with `method`.
pub fn run_method(
    method: Method,
    net: &Arc<Network>,
    tm: &Arc<TrafficMatrix>,
    ctx: &RunContext,
) -> Result<MethodRun> {
    let start = Instant::now();
    let direct = RoutingConfig::all_direct(net.num_nodes());
    let init_maxu = evaluate_config(net, tm, &direct)?;
    let mut trajectory = vec![TracePoint {
        elapsed_ms: 0.0,
        maxu: init_maxu,
        phase: Phase::Initial,
    }];
    let (final_maxu, routing, truncated) = match method {
        Method::Ospf => (init_maxu, Routing::Sr(direct), false),
        Method::Sap => {
            let sap = sap_route(&net.topology, tm)?;
            (sap.maxu, Routing::Paths(sap), false)
        }
        Method::Ls => {
            let out = ls_baseline(net, tm, &ctx.env, &ctx.budget)?;
            trajectory.extend(out.trace.iter().map(|s| TracePoint {
                elapsed_ms: s.elapsed_ms,
                maxu: s.maxu,
                phase: Phase::Ls,
            }));
            (out.maxu, Routing::Sr(out.config), !out.converged)
        }
        Method::Drl | Method::Enero => {
            let budget = if method == Method::Drl {
                SearchBudget {
                    time: None,
                    max_iterations: Some(0),
                }
            } else {
                ctx.budget
            };
            let r = enero_optimize(net, tm, ctx.policy(method)?, &ctx.env, &budget)?;
            // per-step DRL timings are not measured; spread the steps evenly
            // over the stage
            let steps = r.drl_trace.len().max(1) as f64;
            trajectory.extend(r.drl_trace.iter().enumerate().map(|(i, s)| TracePoint {
                elapsed_ms: r.drl_ms * (i + 1) as f64 / steps,
                maxu: s.maxu,
                phase: Phase::Drl,
            }));
            trajectory.extend(r.ls_trace.iter().map(|s| TracePoint {
                elapsed_ms: r.drl_ms + s.elapsed_ms,
                maxu: s.maxu,
                phase: Phase::Ls,
            }));
            let truncated = method == Method::Enero && !r.ls_converged;
            (r.final_maxu, Routing::Sr(r.final_config), truncated)
        }
    };
    Ok(MethodRun {
        method,
        init_maxu,
        final_maxu,
        wall_ms: start.elapsed().as_secs_f64() * 1e3,
        truncated,
        routing,
        trajectory,
    })
}

/// One row of the results table.
#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioRecord {
    pub scenario: String,
    pub topology: String,
    pub k_failures: usize,
    pub tm_id: usize,
    pub method: Method,
    pub init_maxu: f64,
    pub final_maxu: f64,
    pub wall_ms: f64,
    pub config_path: Option<PathBuf>,
}

pub const RESULTS_HEADER: &str =
    "scenario,topology,k_failures,tm_id,method,init_maxu,final_maxu,wall_ms,config_path";

pub fn write_results_csv<W: Write>(mut out: W, records: &[ScenarioRecord]) -> std::io::Result<()> {
    writeln!(out, "{RESULTS_HEADER}")?;
    for r in records {
        writeln!(
            out,
            "{},{},{},{},{},{},{},{:.3},{}",
            r.scenario,
            r.topology,
            r.k_failures,
            r.tm_id,
            r.method,
            r.init_maxu,
            r.final_maxu,
            r.wall_ms,
            r.config_path
                .as_ref()
                .map(|p| p.display().to_string())
                .unwrap_or_default()
        )?;
    }
    Ok(())
}

fn store_run(
    ctx: &RunContext,
    scenario: &str,
    topology: &str,
    k: usize,
    tm_id: usize,
    run: &MethodRun,
) -> Result<ScenarioRecord> {
    let config_path = match &ctx.out_dir {
        Some(dir) => {
            let dir = dir.join("configs").join(scenario).join(topology);
            std::fs::create_dir_all(&dir)?;
            let path = dir.join(format!("k{k}_tm{tm_id}_{}.csv", run.method));
            std::fs::write(&path, run.routing.to_csv())?;
            Some(path)
        }
        None => None,
    };
    Ok(ScenarioRecord {
        scenario: scenario.into(),
        topology: topology.into(),
        k_failures: k,
        tm_id,
        method: run.method,
        init_maxu: run.init_maxu,
        final_maxu: run.final_maxu,
        wall_ms: run.wall_ms,
        config_path,
    })
}

/// Max utilization of a stored routing file: either an SR configuration
/// (`src,dst,midpoint`) or explicit paths (`src,dst,bandwidth,path`).
pub fn evaluate_stored(net: &Network, tm: &TrafficMatrix, text: &str) -> Result<f64> {
    let header = text.lines().next().unwrap_or("").trim();
    if header == "src,dst,bandwidth,path" {
        let mut ls = LinkState::empty(&net.topology);
        for (i, line) in text.lines().enumerate().skip(1) {
            if line.trim().is_empty() {
                continue;
            }
            let fields: Vec<&str> = line.split(',').collect();
            if fields.len() != 4 {
                return Err(Error::Parse {
                    line: i + 1,
                    msg: "expected src,dst,bandwidth,path".into(),
                });
            }
            let nodes: Vec<NodeId> = fields[3]
                .split('-')
                .map(|v| v.parse())
                .collect::<std::result::Result<_, _>>()
                .map_err(|e| Error::Parse {
                    line: i + 1,
                    msg: format!("bad path: {e}"),
                })?;
            let (s, d) = (nodes[0], *nodes.last().unwrap());
            let mut links = Vec::with_capacity(nodes.len());
            for w in nodes.windows(2) {
                links.push(
                    net.topology
                        .link_id(w[0], w[1])
                        .ok_or(Error::LinkNotFound(w[0], w[1]))?,
                );
            }
            ls.add_path(links, tm.get(s, d));
        }
        Ok(ls.max_utilization())
    } else {
        let cfg = RoutingConfig::from_csv(text, net.num_nodes())?;
        evaluate_config(net, tm, &cfg)
    }
}

/// Runs every method on every variant of a failure suite. The traffic
/// matrices are those of the intact topology.
pub fn run_failures(
    name: &str,
    base: &Topology,
    tms: &[Arc<TrafficMatrix>],
    ks: &[usize],
    variants: usize,
    seed: u64,
    methods: &[Method],
    ctx: &RunContext,
) -> Result<Vec<ScenarioRecord>> {
    let mut records = Vec::new();
    for &k in ks {
        for (v, variant) in gen_failures(base, k, variants, seed.wrapping_add(k as u64))?
            .into_iter()
            .enumerate()
        {
            let net = Network::new(format!("{name}_k{k}_v{v}"), variant.topology);
            for (tm_id, tm) in tms.iter().enumerate() {
                for &m in methods {
                    let run = run_method(m, &net, tm, ctx)?;
                    records.push(store_run(ctx, "failure", &net.name, k, tm_id, &run)?);
                }
            }
        }
    }
    Ok(records)
}

/// Result of replaying a TM sequence.
#[derive(Debug, Clone)]
pub struct DynamicRun {
    pub records: Vec<ScenarioRecord>,
    /// Per TM: the trajectory and whether it was cut by the budget.
    pub series: Vec<(Vec<TracePoint>, bool)>,
}

/// Optimizes each TM of a sequence from scratch, starting at OSPF.
pub fn run_dynamic_tm(
    net: &Arc<Network>,
    tms: &[Arc<TrafficMatrix>],
    method: Method,
    ctx: &RunContext,
) -> Result<DynamicRun> {
    let mut records = Vec::with_capacity(tms.len());
    let mut series = Vec::with_capacity(tms.len());
    for (tm_id, tm) in tms.iter().enumerate() {
        let run = run_method(method, net, tm, ctx)?;
        if run.truncated {
            log::info!("{} tm {tm_id}: budget exhausted, keeping best found", net.name);
        }
        records.push(store_run(ctx, "dynamic", &net.name, 0, tm_id, &run)?);
        series.push((run.trajectory, run.truncated));
    }
    Ok(DynamicRun { records, series })
}

/// CSV header `tm_id,elapsed_ms,maxu,phase,truncated`.
pub fn write_series_csv<W: Write>(mut out: W, series: &[(Vec<TracePoint>, bool)]) -> std::io::Result<()> {
    writeln!(out, "tm_id,elapsed_ms,maxu,phase,truncated")?;
    for (tm_id, (points, truncated)) in series.iter().enumerate() {
        for p in points {
            writeln!(out, "{tm_id},{:.3},{},{},{truncated}", p.elapsed_ms, p.maxu, p.phase)?;
        }
    }
    Ok(())
}

/// A topology of a sweep dataset with its traffic matrices.
pub struct DatasetEntry {
    pub network: Arc<Network>,
    pub tms: Vec<Arc<TrafficMatrix>>,
}

#[derive(Debug, Clone)]
pub struct DatasetOptions {
    pub graphml: GraphmlOptions,
    pub text: ParseOptions,
    /// TMs generated per topology when it ships none.
    pub tms_per_topology: usize,
    /// Generated TMs are scaled so OSPF routing averages this max
    /// utilization.
    pub target_maxu: f64,
    pub seed: u64,
}

impl Default for DatasetOptions {
    fn default() -> Self {
        Self {
            graphml: GraphmlOptions::default(),
            text: ParseOptions::default(),
            tms_per_topology: 10,
            target_maxu: 1.0,
            seed: 0,
        }
    }
}

/// Loads one topology file (`.graphml` or `.topo`) with its TMs: the `*.tm`
/// files of a sibling `<stem>.tms/` directory if present, generated ones
/// otherwise.
pub fn load_dataset_entry(path: &Path, opts: &DatasetOptions) -> Result<DatasetEntry> {
    let text = std::fs::read_to_string(path)?;
    let topo = match path.extension().and_then(|e| e.to_str()) {
        Some("graphml") => parse_graphml(&text, &opts.graphml)?,
        _ => parse_topology(&text, &opts.text)?,
    };
    let stem = path
        .file_stem()
        .and_then(|s| s.to_str())
        .unwrap_or("topology")
        .to_string();
    let net = Network::new(stem.clone(), topo);
    let tm_dir = path.with_file_name(format!("{stem}.tms"));
    let tms = if tm_dir.is_dir() {
        let mut files: Vec<PathBuf> = std::fs::read_dir(&tm_dir)?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.extension().is_some_and(|e| e == "tm"))
            .collect();
        files.sort();
        files
            .iter()
            .map(|f| {
                let tm = TrafficMatrix::parse(&std::fs::read_to_string(f)?)?;
                if tm.num_nodes() != net.num_nodes() {
                    return Err(Error::Shape(format!("{}: wrong node count", f.display())));
                }
                Ok(Arc::new(tm))
            })
            .collect::<Result<Vec<_>>>()?
    } else {
        let scale = calibrate_scale(&net.topology, &net.paths, opts.seed, 10, opts.target_maxu);
        (0..opts.tms_per_topology as u64)
            .map(|i| generate_tm(&net.topology, opts.seed.wrapping_add(1000 + i), scale).map(Arc::new))
            .collect::<Result<Vec<_>>>()?
    };
    Ok(DatasetEntry { network: net, tms })
}

#[derive(Debug, Clone, Default)]
pub struct SweepResult {
    pub records: Vec<ScenarioRecord>,
    /// Instances or files that failed, with the reason.
    pub errors: Vec<(String, String)>,
}

impl SweepResult {
    /// Mean over TMs of `final / LS final`, per topology and method. Lower
    /// is better; LS itself scores 1.
    pub fn relative_to_ls(&self) -> BTreeMap<(String, Method), f64> {
        let mut ls: BTreeMap<(&str, usize), f64> = BTreeMap::new();
        for r in self.records.iter().filter(|r| r.method == Method::Ls) {
            ls.insert((&r.topology, r.tm_id), r.final_maxu);
        }
        let mut acc: BTreeMap<(String, Method), (f64, usize)> = BTreeMap::new();
        for r in &self.records {
            if let Some(&base) = ls.get(&(r.topology.as_str(), r.tm_id)) {
                let ratio = if base > 0.0 { r.final_maxu / base } else { 1.0 };
                let e = acc.entry((r.topology.clone(), r.method)).or_default();
                e.0 += ratio;
                e.1 += 1;
            }
        }
        acc.into_iter().map(|(k, (s, n))| (k, s / n as f64)).collect()
    }
}

/// Runs `methods` on every topology file in `dir`. Failures are logged and
/// collected; the sweep continues.
pub fn run_sweep(
    dir: &Path,
    methods: &[Method],
    opts: &DatasetOptions,
    ctx: &RunContext,
) -> Result<SweepResult> {
    let mut files: Vec<PathBuf> = std::fs::read_dir(dir)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| {
            p.is_file()
                && p
                    .extension()
                    .is_some_and(|e| e == "graphml" || e == "topo")
        })
        .collect();
    files.sort();
    let mut result = SweepResult::default();
    for file in files {
        let entry = match load_dataset_entry(&file, opts) {
            Ok(e) => e,
            Err(e) => {
                log::warn!("skipping {}: {e}", file.display());
                result.errors.push((file.display().to_string(), e.to_string()));
                continue;
            }
        };
        for (tm_id, tm) in entry.tms.iter().enumerate() {
            for &m in methods {
                let outcome = run_method(m, &entry.network, tm, ctx)
                    .and_then(|run| store_run(ctx, "sweep", &entry.network.name, 0, tm_id, &run));
                match outcome {
                    Ok(rec) => result.records.push(rec),
                    Err(e) => {
                        let id = format!("{} tm {tm_id} {m}", entry.network.name);
                        log::warn!("{id}: {e}");
                        result.errors.push((id, e.to_string()));
                    }
                }
            }
        }
    }
    Ok(result)
}

fn plot_error(e: impl fmt::Display) -> Error {
    Error::Io(std::io::Error::other(e.to_string()))
}

const PALETTE: [plotters::style::RGBColor; 6] = [
    plotters::style::RGBColor(31, 119, 180),
    plotters::style::RGBColor(255, 127, 14),
    plotters::style::RGBColor(44, 160, 44),
    plotters::style::RGBColor(214, 39, 40),
    plotters::style::RGBColor(148, 103, 189),
    plotters::style::RGBColor(140, 86, 75),
];

fn plot_lines(
    path: &Path,
    title: &str,
    x_label: &str,
    y_label: &str,
    series: &[(String, Vec<(f64, f64)>)],
) -> Result<()> {
    use plotters::prelude::*;

    let points = series.iter().flat_map(|(_, s)| s.iter());
    let (mut x0, mut x1, mut y0, mut y1) = (f64::MAX, f64::MIN, f64::MAX, f64::MIN);
    for &(x, y) in points {
        x0 = x0.min(x);
        x1 = x1.max(x);
        y0 = y0.min(y);
        y1 = y1.max(y);
    }
    if x0 > x1 {
        (x0, x1, y0, y1) = (0.0, 1.0, 0.0, 1.0);
    }
    if x1 - x0 < 1e-12 {
        x1 = x0 + 1.0;
    }
    let pad = ((y1 - y0) * 0.05).max(1e-3);

    let root = SVGBackend::new(path, (800, 500)).into_drawing_area();
    root.fill(&WHITE).map_err(plot_error)?;
    let mut chart = ChartBuilder::on(&root)
        .caption(title, ("sans-serif", 20))
        .margin(12)
        .x_label_area_size(40)
        .y_label_area_size(55)
        .build_cartesian_2d(x0..x1, (y0 - pad)..(y1 + pad))
        .map_err(plot_error)?;
    chart
        .configure_mesh()
        .x_desc(x_label)
        .y_desc(y_label)
        .draw()
        .map_err(plot_error)?;
    for (i, (label, pts)) in series.iter().enumerate() {
        let color = PALETTE[i % PALETTE.len()];
        chart
            .draw_series(LineSeries::new(pts.iter().copied(), color.stroke_width(2)))
            .map_err(plot_error)?
            .label(label.as_str())
            .legend(move |(x, y)| PathElement::new(vec![(x, y), (x + 18, y)], color));
    }
    chart
        .configure_series_labels()
        .background_style(WHITE.mix(0.8))
        .border_style(BLACK)
        .draw()
        .map_err(plot_error)?;
    root.present().map_err(plot_error)?;
    Ok(())
}

/// Max utilization against time, one line per labelled trajectory.
pub fn plot_time_series(path: &Path, title: &str, series: &[(String, Vec<TracePoint>)]) -> Result<()> {
    let lines: Vec<(String, Vec<(f64, f64)>)> = series
        .iter()
        .map(|(label, pts)| {
            (
                label.clone(),
                pts.iter().map(|p| (p.elapsed_ms / 1e3, p.maxu)).collect(),
            )
        })
        .collect();
    plot_lines(path, title, "time (s)", "max link utilization", &lines)
}

/// Empirical CDF per labelled sample.
pub fn plot_cdf(path: &Path, title: &str, x_label: &str, samples: &[(String, Vec<f64>)]) -> Result<()> {
    let lines: Vec<(String, Vec<(f64, f64)>)> = samples
        .iter()
        .map(|(label, values)| {
            let mut v = values.clone();
            v.sort_by(f64::total_cmp);
            let n = v.len() as f64;
            let pts = v
                .iter()
                .enumerate()
                .flat_map(|(i, &x)| [(x, i as f64 / n), (x, (i + 1) as f64 / n)])
                .collect();
            (label.clone(), pts)
        })
        .collect();
    plot_lines(path, title, x_label, "CDF", &lines)
}
