//! Hill-climbing local search over midpoint assignments, and the
//! shortest-available-path (SAP) baseline.

use std::collections::VecDeque;
use std::io::Write;
use std::time::{Duration, Instant};

use crate::env::EnvConfig;
use crate::error::{Error, Result};
use crate::network::Network;
use crate::routing::{
    apply_routing, demand_index, distances_to, on_shortest, Demand, LinkState, Midpoint,
    RoutingConfig,
};
use crate::topology::{LinkId, NodeId, Topology};
use crate::traffic::{order_by_bandwidth, select_critical, CriticalSet, TrafficMatrix};

/// A move must lower max utilization by more than this (relative to
/// `max(1, maxU)`) to count as an improvement.
pub const IMPROVEMENT_TOLERANCE: f64 = 1e-12;

pub fn improves(candidate: f64, current: f64) -> bool {
    candidate < current - IMPROVEMENT_TOLERANCE * current.max(1.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct SearchBudget {
    pub time: Option<Duration>,
    pub max_iterations: Option<usize>,
}

impl SearchBudget {
    pub fn seconds(s: f64) -> Self {
        Self {
            time: Some(Duration::from_secs_f64(s.max(0.0))),
            max_iterations: None,
        }
    }

    pub fn unlimited() -> Self {
        Self::default()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SearchStep {
    pub iteration: usize,
    pub demand: Demand,
    pub midpoint: Midpoint,
    pub maxu: f64,
    pub elapsed_ms: f64,
}

#[derive(Debug, Clone)]
pub struct SearchOutcome {
    pub config: RoutingConfig,
    pub maxu: f64,
    pub trace: Vec<SearchStep>,
    /// True when the search stopped because no move improves.
    pub converged: bool,
}

/// Scores single-demand moves against a fixed link state in time
/// proportional to the two path lengths.
struct MoveScorer {
    // links by decreasing utilization
    order: Vec<LinkId>,
    stamp: Vec<u32>,
    generation: u32,
    scratch: Vec<f64>,
}

impl MoveScorer {
    fn new(ls: &LinkState) -> Self {
        let mut s = Self {
            order: (0..ls.loads().len()).collect(),
            stamp: vec![0; ls.loads().len()],
            generation: 0,
            scratch: vec![0.0; ls.loads().len()],
        };
        s.refresh(ls);
        s
    }

    fn refresh(&mut self, ls: &LinkState) {
        let u = ls.utilizations();
        self.order
            .sort_by(|&a, &b| u[b].total_cmp(&u[a]).then(a.cmp(&b)));
    }

    /// Max utilization after moving `bw` from `old` to `new`, with the same
    /// arithmetic as `LinkState::move_demand`.
    fn score(&mut self, ls: &LinkState, bw: f64, old: &[LinkId], new: &[LinkId]) -> f64 {
        self.generation = self.generation.wrapping_add(1);
        if self.generation == 0 {
            self.stamp.iter_mut().for_each(|s| *s = 0);
            self.generation = 1;
        }
        let g = self.generation;
        let load = ls.loads();
        let cap = ls.capacities();
        for &l in old.iter().chain(new) {
            self.stamp[l] = g;
            self.scratch[l] = load[l];
        }
        for &l in old {
            self.scratch[l] = (self.scratch[l] - bw).max(0.0);
        }
        for &l in new {
            self.scratch[l] += bw;
        }
        let mut best = 0.0f64;
        for &l in old.iter().chain(new) {
            best = best.max(self.scratch[l] / cap[l]);
        }
        if let Some(&l) = self.order.iter().find(|&&l| self.stamp[l] != g) {
            best = best.max(load[l] / cap[l]);
        }
        best
    }
}

fn check_shapes(net: &Network, tm: &TrafficMatrix, cfg: &RoutingConfig) -> Result<()> {
    if tm.num_nodes() != net.num_nodes() || cfg.num_nodes() != net.num_nodes() {
        return Err(Error::Shape(format!(
            "topology has {} nodes, TM {}, config {}",
            net.num_nodes(),
            tm.num_nodes(),
            cfg.num_nodes()
        )));
    }
    Ok(())
}

fn candidate_midpoints(n: usize, d: &Demand) -> impl Iterator<Item = Midpoint> + '_ {
    std::iter::once(Midpoint::Direct).chain(
        (0..n)
            .filter(move |&m| m != d.src && m != d.dst)
            .map(Midpoint::Node),
    )
}

/// The best strictly improving single move, if any: `(demand, midpoint,
/// maxU after the move)`. Ties go to the lower demand index, then the lower
/// midpoint (`Direct` first).
pub fn best_move(
    net: &Network,
    tm: &TrafficMatrix,
    cfg: &RoutingConfig,
    critical: &CriticalSet,
) -> Result<Option<(Demand, Midpoint, f64)>> {
    check_shapes(net, tm, cfg)?;
    let ls = apply_routing(&net.topology, &net.paths, tm, cfg);
    let mut scorer = MoveScorer::new(&ls);
    Ok(scan(net, &ls, cfg, &sorted_by_index(net, critical), &mut scorer, None))
}

fn sorted_by_index(net: &Network, critical: &CriticalSet) -> Vec<(usize, Demand)> {
    let n = net.num_nodes();
    let mut v: Vec<(usize, Demand)> = critical
        .demands
        .iter()
        .map(|d| (demand_index(n, d.src, d.dst), *d))
        .collect();
    v.sort_by_key(|(i, _)| *i);
    v
}

// Returns None when the deadline passes mid-scan as well as when nothing
// improves; callers tell the two apart by checking the clock.
fn scan(
    net: &Network,
    ls: &LinkState,
    cfg: &RoutingConfig,
    demands: &[(usize, Demand)],
    scorer: &mut MoveScorer,
    deadline: Option<Instant>,
) -> Option<(Demand, Midpoint, f64)> {
    let n = net.num_nodes();
    let current = ls.max_utilization();
    let mut best: Option<(Demand, Midpoint, f64)> = None;
    let mut new_path = Vec::new();
    for &(idx, d) in demands {
        if deadline.is_some_and(|t| Instant::now() >= t) {
            return None;
        }
        if d.bandwidth == 0.0 {
            continue;
        }
        let old_path: Vec<LinkId> = net.paths.sr_links(d.src, d.dst, cfg.get(idx)).collect();
        for m in candidate_midpoints(n, &d) {
            if m == cfg.get(idx) {
                continue;
            }
            new_path.clear();
            new_path.extend(net.paths.sr_links(d.src, d.dst, m));
            if new_path == old_path {
                continue;
            }
            let u = scorer.score(ls, d.bandwidth, &old_path, &new_path);
            let bar = best.map_or(current, |b| b.2);
            let better = match best {
                None => improves(u, current),
                Some(_) => u < bar,
            };
            if better {
                best = Some((d, m, u));
            }
        }
    }
    best
}

/// Repeatedly applies the best strictly improving single move among the
/// critical demands until none improves or the budget runs out. Anytime:
/// the returned configuration is always the best reached.
pub fn hill_climb(
    net: &Network,
    tm: &TrafficMatrix,
    start: &RoutingConfig,
    critical: &CriticalSet,
    budget: &SearchBudget,
) -> Result<SearchOutcome> {
    check_shapes(net, tm, start)?;
    let begin = Instant::now();
    let deadline = budget.time.map(|t| begin + t);
    let mut cfg = start.clone();
    let mut ls = apply_routing(&net.topology, &net.paths, tm, &cfg);
    let mut maxu = ls.max_utilization();
    let demands = sorted_by_index(net, critical);
    let mut scorer = MoveScorer::new(&ls);
    let mut trace = Vec::new();
    let n = net.num_nodes();

    let converged = loop {
        if budget.max_iterations.is_some_and(|k| trace.len() >= k)
            || deadline.is_some_and(|t| Instant::now() >= t)
        {
            break false;
        }
        let Some((d, m, _)) = scan(net, &ls, &cfg, &demands, &mut scorer, deadline) else {
            break !deadline.is_some_and(|t| Instant::now() >= t);
        };
        let idx = demand_index(n, d.src, d.dst);
        let old: Vec<LinkId> = net.paths.sr_links(d.src, d.dst, cfg.get(idx)).collect();
        let new: Vec<LinkId> = net.paths.sr_links(d.src, d.dst, m).collect();
        ls.move_demand(d.bandwidth, &old, &new);
        cfg.set(idx, m)?;
        maxu = ls.max_utilization();
        scorer.refresh(&ls);
        trace.push(SearchStep {
            iteration: trace.len() + 1,
            demand: d,
            midpoint: m,
            maxu,
            elapsed_ms: begin.elapsed().as_secs_f64() * 1e3,
        });
    };
    if !trace.is_empty() {
        // drop the rounding drift of the incremental updates
        maxu = apply_routing(&net.topology, &net.paths, tm, &cfg).max_utilization();
    }
    Ok(SearchOutcome {
        config: cfg,
        maxu,
        trace,
        converged,
    })
}

/// Hill climbing from OSPF routing, with critical demands chosen on the
/// OSPF state.
pub fn ls_baseline(
    net: &Network,
    tm: &TrafficMatrix,
    env: &EnvConfig,
    budget: &SearchBudget,
) -> Result<SearchOutcome> {
    let start = RoutingConfig::all_direct(net.num_nodes());
    check_shapes(net, tm, &start)?;
    let critical = select_critical(
        &net.topology,
        &net.paths,
        tm,
        &start,
        env.critical_fraction,
        env.top_links,
    );
    hill_climb(net, tm, &start, &critical, budget)
}

/// CSV header `iteration,src,dst,midpoint,maxu,elapsed_ms`.
pub fn write_search_trace<W: Write>(mut out: W, trace: &[SearchStep]) -> std::io::Result<()> {
    writeln!(out, "iteration,src,dst,midpoint,maxu,elapsed_ms")?;
    for s in trace {
        writeln!(
            out,
            "{},{},{},{},{},{:.3}",
            s.iteration,
            s.demand.src,
            s.demand.dst,
            s.midpoint.to_i64(),
            s.maxu,
            s.elapsed_ms
        )?;
    }
    Ok(())
}

#[derive(Debug, Clone)]
pub struct SapRoute {
    pub demand: Demand,
    pub nodes: Vec<NodeId>,
    pub links: Vec<LinkId>,
}

#[derive(Debug, Clone)]
pub struct SapResult {
    /// In routing order.
    pub routes: Vec<SapRoute>,
    pub link_state: LinkState,
    pub maxu: f64,
}

impl SapResult {
    /// CSV header `src,dst,bandwidth,path`, path nodes joined by `-`, rows
    /// in routing order.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("src,dst,bandwidth,path\n");
        for r in &self.routes {
            let path: Vec<String> = r.nodes.iter().map(|v| v.to_string()).collect();
            s.push_str(&format!(
                "{},{},{},{}\n",
                r.demand.src,
                r.demand.dst,
                r.demand.bandwidth,
                path.join("-")
            ));
        }
        s
    }
}

/// Links `u -> v` that lie on some minimum-OSPF-weight path to `dst`.
fn shortest_dag(topo: &Topology, dist: &[f64]) -> Vec<bool> {
    topo.links()
        .iter()
        .map(|l| on_shortest(l.ospf_weight + dist[l.head], dist[l.tail]))
        .collect()
}

/// Largest bottleneck residual over the admissible links from `src` to `dst`.
/// Admissible links form a DAG ordered by `dist`.
fn widest_bottleneck(
    topo: &Topology,
    residual: &[f64],
    admissible: &[bool],
    dist: &[f64],
    src: NodeId,
    dst: NodeId,
) -> f64 {
    let mut order: Vec<NodeId> = (0..topo.num_nodes()).collect();
    order.sort_by(|&a, &b| dist[a].total_cmp(&dist[b]));
    let mut width = vec![f64::NEG_INFINITY; topo.num_nodes()];
    width[dst] = f64::INFINITY;
    for u in order {
        for &l in topo.out_links(u) {
            if admissible[l] {
                let w = residual[l].min(width[topo.link(l).head]);
                width[u] = width[u].max(w);
            }
        }
    }
    width[src]
}

/// Among admissible paths whose every link has residual at least `floor`:
/// fewest hops, then lexicographically smallest node sequence.
fn shortest_in(
    topo: &Topology,
    admissible: &[bool],
    residual: &[f64],
    floor: f64,
    src: NodeId,
    dst: NodeId,
) -> (Vec<NodeId>, Vec<LinkId>) {
    let n = topo.num_nodes();
    let ok = |l: LinkId| admissible[l] && residual[l] >= floor;
    let mut hops = vec![usize::MAX; n];
    hops[dst] = 0;
    let mut queue = VecDeque::from([dst]);
    // reverse BFS over usable links
    let mut incoming: Vec<Vec<NodeId>> = vec![Vec::new(); n];
    for (l, link) in topo.links().iter().enumerate() {
        if ok(l) {
            incoming[link.head].push(link.tail);
        }
    }
    while let Some(v) = queue.pop_front() {
        for &u in &incoming[v] {
            if hops[u] == usize::MAX {
                hops[u] = hops[v] + 1;
                queue.push_back(u);
            }
        }
    }
    let mut nodes = vec![src];
    let mut links = Vec::new();
    let mut u = src;
    while u != dst {
        let (v, l) = topo
            .out_links(u)
            .iter()
            .filter(|&&l| ok(l))
            .map(|&l| (topo.link(l).head, l))
            .filter(|&(v, _)| hops[v] != usize::MAX && hops[v] + 1 == hops[u])
            .min()
            .expect("usable path exists");
        nodes.push(v);
        links.push(l);
        u = v;
    }
    (nodes, links)
}

/// Shortest available path: routes demands one at a time, largest first
/// (ties by `(src, dst)`). Each goes on the minimum-OSPF-weight path with the
/// most residual capacity left by the demands routed before it.
pub fn sap_route(topo: &Topology, tm: &TrafficMatrix) -> Result<SapResult> {
    if tm.num_nodes() != topo.num_nodes() {
        return Err(Error::Shape(format!(
            "topology has {} nodes, TM {}",
            topo.num_nodes(),
            tm.num_nodes()
        )));
    }
    let mut ls = LinkState::empty(topo);
    let mut residual = topo.capacities();
    let mut routes = Vec::with_capacity(tm.values().len());
    let mut dags: Vec<Option<(Vec<f64>, Vec<bool>)>> = vec![None; topo.num_nodes()];
    for d in order_by_bandwidth(tm) {
        let (dist, dag) = dags[d.dst].get_or_insert_with(|| {
            let dist = distances_to(topo, d.dst);
            let dag = shortest_dag(topo, &dist);
            (dist, dag)
        });
        let floor = widest_bottleneck(topo, &residual, dag, dist, d.src, d.dst);
        let (nodes, links) = shortest_in(topo, dag, &residual, floor, d.src, d.dst);
        for &l in &links {
            residual[l] -= d.bandwidth;
        }
        ls.add_path(links.iter().copied(), d.bandwidth);
        routes.push(SapRoute {
            demand: d,
            nodes,
            links,
        });
    }
    let maxu = ls.max_utilization();
    Ok(SapResult {
        routes,
        link_state: ls,
        maxu,
    })
}
