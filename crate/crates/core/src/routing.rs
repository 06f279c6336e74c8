//! OSPF shortest paths, 2-segment SR paths, and link load accounting.

use std::cmp::Ordering;
use std::collections::BinaryHeap;
use std::fmt;

use crate::error::{Error, Result};
use crate::topology::{LinkId, NodeId, Topology};
use crate::traffic::TrafficMatrix;

/// The SR decision for one demand: stay on the OSPF path, or detour via one
/// intermediate node.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Midpoint {
    Direct,
    Node(NodeId),
}

impl Midpoint {
    /// `-1` encodes `Direct`.
    pub fn to_i64(self) -> i64 {
        match self {
            Midpoint::Direct => -1,
            Midpoint::Node(n) => n as i64,
        }
    }

    pub fn from_i64(v: i64) -> Option<Self> {
        match v {
            -1 => Some(Midpoint::Direct),
            v if v >= 0 => Some(Midpoint::Node(v as usize)),
            _ => None,
        }
    }
}

impl fmt::Display for Midpoint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Midpoint::Direct => write!(f, "DIRECT"),
            Midpoint::Node(n) => write!(f, "{n}"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Demand {
    pub src: NodeId,
    pub dst: NodeId,
    pub bandwidth: f64,
}

pub fn num_demands(num_nodes: usize) -> usize {
    num_nodes * (num_nodes - 1)
}

/// Dense index of the ordered pair `(src, dst)`, increasing in `(src, dst)`.
pub fn demand_index(num_nodes: usize, src: NodeId, dst: NodeId) -> usize {
    debug_assert!(src != dst && src < num_nodes && dst < num_nodes);
    src * (num_nodes - 1) + if dst < src { dst } else { dst - 1 }
}

pub fn demand_pair(num_nodes: usize, index: usize) -> (NodeId, NodeId) {
    let src = index / (num_nodes - 1);
    let r = index % (num_nodes - 1);
    (src, if r < src { r } else { r + 1 })
}

/// Per-demand midpoint assignment, indexed by [`demand_index`].
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct RoutingConfig {
    num_nodes: usize,
    midpoints: Vec<Midpoint>,
}

impl RoutingConfig {
    /// Every demand on its OSPF path.
    pub fn all_direct(num_nodes: usize) -> Self {
        Self {
            num_nodes,
            midpoints: vec![Midpoint::Direct; num_demands(num_nodes)],
        }
    }

    pub fn num_nodes(&self) -> usize {
        self.num_nodes
    }

    pub fn len(&self) -> usize {
        self.midpoints.len()
    }

    pub fn is_empty(&self) -> bool {
        self.midpoints.is_empty()
    }

    pub fn get(&self, demand: usize) -> Midpoint {
        self.midpoints[demand]
    }

    pub fn midpoints(&self) -> &[Midpoint] {
        &self.midpoints
    }

    pub fn set(&mut self, demand: usize, midpoint: Midpoint) -> Result<()> {
        let (src, dst) = demand_pair(self.num_nodes, demand);
        check_midpoint(self.num_nodes, src, dst, midpoint)?;
        self.midpoints[demand] = midpoint;
        Ok(())
    }

    /// Number of demands not on their direct path.
    pub fn num_detoured(&self) -> usize {
        self.midpoints
            .iter()
            .filter(|m| **m != Midpoint::Direct)
            .count()
    }

    /// `src,dst,midpoint` records ordered by `(src, dst)`, `-1` for DIRECT.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("src,dst,midpoint\n");
        for (i, m) in self.midpoints.iter().enumerate() {
            let (s, d) = demand_pair(self.num_nodes, i);
            out.push_str(&format!("{s},{d},{}\n", m.to_i64()));
        }
        out
    }

    pub fn from_csv(text: &str, num_nodes: usize) -> Result<Self> {
        let mut cfg = Self::all_direct(num_nodes);
        let mut seen = vec![false; cfg.len()];
        for (i, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || (i == 0 && line.starts_with("src")) {
                continue;
            }
            let fields: Vec<&str> = line.split(',').map(str::trim).collect();
            let bad = || Error::parse(i + 1, format!("invalid config record `{line}`"));
            if fields.len() != 3 {
                return Err(bad());
            }
            let src: usize = fields[0].parse().map_err(|_| bad())?;
            let dst: usize = fields[1].parse().map_err(|_| bad())?;
            let mid = fields[2]
                .parse::<i64>()
                .ok()
                .and_then(Midpoint::from_i64)
                .ok_or_else(bad)?;
            if src >= num_nodes || dst >= num_nodes || src == dst {
                return Err(bad());
            }
            let idx = demand_index(num_nodes, src, dst);
            cfg.set(idx, mid)?;
            seen[idx] = true;
        }
        if let Some(missing) = seen.iter().position(|s| !s) {
            let (s, d) = demand_pair(num_nodes, missing);
            return Err(Error::parse(0, format!("no record for demand {s}->{d}")));
        }
        Ok(cfg)
    }
}

fn check_midpoint(num_nodes: usize, src: NodeId, dst: NodeId, m: Midpoint) -> Result<()> {
    match m {
        Midpoint::Node(k) if k == src || k == dst || k >= num_nodes => {
            Err(Error::InvalidMidpoint {
                src,
                dst,
                midpoint: m,
            })
        }
        _ => Ok(()),
    }
}

#[derive(Clone, Copy, PartialEq)]
struct HeapEntry {
    dist: f64,
    node: NodeId,
}

impl Eq for HeapEntry {}

impl Ord for HeapEntry {
    fn cmp(&self, other: &Self) -> Ordering {
        other
            .dist
            .total_cmp(&self.dist)
            .then_with(|| other.node.cmp(&self.node))
    }
}

impl PartialOrd for HeapEntry {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// OSPF distance from every node to `dst` (Dijkstra on reversed links).
pub fn distances_to(topo: &Topology, dst: NodeId) -> Vec<f64> {
    let n = topo.num_nodes();
    let mut incoming: Vec<Vec<LinkId>> = vec![Vec::new(); n];
    for (id, l) in topo.links().iter().enumerate() {
        incoming[l.head].push(id);
    }
    let mut dist = vec![f64::INFINITY; n];
    dist[dst] = 0.0;
    let mut heap = BinaryHeap::from([HeapEntry { dist: 0.0, node: dst }]);
    while let Some(HeapEntry { dist: d, node: v }) = heap.pop() {
        if d > dist[v] {
            continue;
        }
        for &l in &incoming[v] {
            let link = topo.link(l);
            let nd = d + link.ospf_weight;
            if nd < dist[link.tail] {
                dist[link.tail] = nd;
                heap.push(HeapEntry {
                    dist: nd,
                    node: link.tail,
                });
            }
        }
    }
    dist
}

pub(crate) fn on_shortest(through: f64, best: f64) -> bool {
    (through - best).abs() <= 1e-9 * best.abs().max(1.0)
}

// Walks from src choosing, at every hop, the smallest-id neighbour that stays
// on a shortest path. All candidate sequences share the prefix walked so far,
// so this yields the lexicographically smallest node sequence.
fn walk_shortest(topo: &Topology, src: NodeId, dst: NodeId, dist: &[f64]) -> Vec<LinkId> {
    let mut path = Vec::new();
    let mut at = src;
    while at != dst {
        let next = topo
            .out_links(at)
            .iter()
            .copied()
            .filter(|&l| {
                let link = topo.link(l);
                on_shortest(link.ospf_weight + dist[link.head], dist[at])
            })
            .min_by_key(|&l| topo.link(l).head)
            .expect("connected topology has a shortest-path successor");
        path.push(next);
        at = topo.link(next).head;
    }
    path
}

/// Minimum-OSPF-weight path from `src` to `dst` as a list of link ids. Among
/// equal-cost paths the lexicographically smallest node sequence is chosen.
pub fn ospf_path(topo: &Topology, src: NodeId, dst: NodeId) -> Vec<LinkId> {
    let dist = distances_to(topo, dst);
    walk_shortest(topo, src, dst, &dist)
}

/// All-pairs OSPF path table.
#[derive(Debug, Clone, PartialEq)]
pub struct PathTable {
    num_nodes: usize,
    paths: Vec<Vec<LinkId>>,
}

impl PathTable {
    pub fn compute(topo: &Topology) -> Self {
        let n = topo.num_nodes();
        let mut paths = vec![Vec::new(); n * n];
        for dst in 0..n {
            let dist = distances_to(topo, dst);
            for src in (0..n).filter(|&s| s != dst) {
                paths[src * n + dst] = walk_shortest(topo, src, dst, &dist);
            }
        }
        Self {
            num_nodes: n,
            paths,
        }
    }

    pub fn ospf(&self, src: NodeId, dst: NodeId) -> &[LinkId] {
        &self.paths[src * self.num_nodes + dst]
    }

    /// The two segments of an SR path. For `Direct` the second is empty.
    pub fn segments(
        &self,
        src: NodeId,
        dst: NodeId,
        midpoint: Midpoint,
    ) -> Result<(&[LinkId], &[LinkId])> {
        check_midpoint(self.num_nodes, src, dst, midpoint)?;
        Ok(match midpoint {
            Midpoint::Direct => (self.ospf(src, dst), &[][..]),
            Midpoint::Node(m) => (self.ospf(src, m), self.ospf(m, dst)),
        })
    }

    /// Concatenated SR path. Segments overlapping each other are kept as is,
    /// so a link may appear twice.
    pub fn sr_path(&self, src: NodeId, dst: NodeId, midpoint: Midpoint) -> Result<Vec<LinkId>> {
        let (a, b) = self.segments(src, dst, midpoint)?;
        Ok(a.iter().chain(b).copied().collect())
    }

    pub(crate) fn sr_links(
        &self,
        src: NodeId,
        dst: NodeId,
        midpoint: Midpoint,
    ) -> impl Iterator<Item = LinkId> + '_ {
        let (a, b) = self
            .segments(src, dst, midpoint)
            .expect("midpoint validated by caller");
        a.iter().chain(b).copied()
    }
}

/// SR path for a single demand, computed without a path table.
pub fn sr_path(topo: &Topology, demand: &Demand, midpoint: Midpoint) -> Result<Vec<LinkId>> {
    check_midpoint(topo.num_nodes(), demand.src, demand.dst, midpoint)?;
    Ok(match midpoint {
        Midpoint::Direct => ospf_path(topo, demand.src, demand.dst),
        Midpoint::Node(m) => {
            let mut p = ospf_path(topo, demand.src, m);
            p.extend(ospf_path(topo, m, demand.dst));
            p
        }
    })
}

/// Per-link carried load against capacity.
#[derive(Debug, Clone, PartialEq)]
pub struct LinkState {
    load: Vec<f64>,
    capacity: Vec<f64>,
}

impl LinkState {
    pub fn empty(topo: &Topology) -> Self {
        Self {
            load: vec![0.0; topo.num_links()],
            capacity: topo.capacities(),
        }
    }

    pub fn from_loads(load: Vec<f64>, capacity: Vec<f64>) -> Result<Self> {
        if load.len() != capacity.len() {
            return Err(Error::Shape(format!(
                "{} loads for {} capacities",
                load.len(),
                capacity.len()
            )));
        }
        Ok(Self { load, capacity })
    }

    pub fn loads(&self) -> &[f64] {
        &self.load
    }

    pub fn capacities(&self) -> &[f64] {
        &self.capacity
    }

    pub fn utilization(&self, link: LinkId) -> f64 {
        self.load[link] / self.capacity[link]
    }

    pub fn utilizations(&self) -> Vec<f64> {
        self.load
            .iter()
            .zip(&self.capacity)
            .map(|(l, c)| l / c)
            .collect()
    }

    pub fn max_utilization(&self) -> f64 {
        self.load
            .iter()
            .zip(&self.capacity)
            .map(|(l, c)| l / c)
            .fold(0.0, f64::max)
    }

    pub fn add_path(&mut self, path: impl IntoIterator<Item = LinkId>, bandwidth: f64) {
        for l in path {
            self.load[l] += bandwidth;
        }
    }

    /// Removes `bandwidth` from each link of `path`. Rounding residue below
    /// zero is clamped.
    pub fn remove_path(&mut self, path: impl IntoIterator<Item = LinkId>, bandwidth: f64) {
        for l in path {
            self.load[l] = (self.load[l] - bandwidth).max(0.0);
        }
    }

    /// Moves a demand from `old_path` to `new_path` in place.
    pub fn move_demand(&mut self, bandwidth: f64, old_path: &[LinkId], new_path: &[LinkId]) {
        if old_path == new_path {
            return;
        }
        self.remove_path(old_path.iter().copied(), bandwidth);
        self.add_path(new_path.iter().copied(), bandwidth);
    }
}

/// Accumulates every demand's SR path load.
pub fn apply_routing(
    topo: &Topology,
    paths: &PathTable,
    tm: &TrafficMatrix,
    cfg: &RoutingConfig,
) -> LinkState {
    let mut ls = LinkState::empty(topo);
    let n = topo.num_nodes();
    for (idx, &m) in cfg.midpoints().iter().enumerate() {
        let (s, d) = demand_pair(n, idx);
        let bw = tm.get(s, d);
        if bw != 0.0 {
            ls.add_path(paths.sr_links(s, d, m), bw);
        }
    }
    ls
}

pub fn max_utilization(ls: &LinkState) -> f64 {
    ls.max_utilization()
}

/// Returns `ls` with demand `d` moved from `old_path` to `new_path`; cost is
/// proportional to the path lengths.
pub fn incremental_move(
    ls: &LinkState,
    d: &Demand,
    old_path: &[LinkId],
    new_path: &[LinkId],
) -> LinkState {
    let mut out = ls.clone();
    out.move_demand(d.bandwidth, old_path, new_path);
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synthetic;
    use crate::topology::{EdgeSpec, WeightPolicy};
    use crate::traffic::generate_tm;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn nodes_of(topo: &Topology, src: usize, path: &[LinkId]) -> Vec<usize> {
        let mut v = vec![src];
        v.extend(path.iter().map(|&l| topo.link(l).head));
        v
    }

    #[test]
    fn demand_index_round_trip() {
        for n in 2..8 {
            let mut expected = 0;
            for s in 0..n {
                for d in (0..n).filter(|&d| d != s) {
                    assert_eq!(demand_index(n, s, d), expected);
                    assert_eq!(demand_pair(n, expected), (s, d));
                    expected += 1;
                }
            }
            assert_eq!(expected, num_demands(n));
        }
    }

    #[test]
    fn line_path() {
        let t = synthetic::line(3, 10.0);
        let p = ospf_path(&t, 0, 2);
        assert_eq!(p, vec![t.link_id(0, 1).unwrap(), t.link_id(1, 2).unwrap()]);
    }

    #[test]
    fn square_tie_break_is_lexicographic_and_stable() {
        let t = synthetic::ring(4, 10.0);
        let p = ospf_path(&t, 0, 2);
        assert_eq!(nodes_of(&t, 0, &p), vec![0, 1, 2]);
        assert_eq!(p, ospf_path(&t, 0, 2));
        let table = PathTable::compute(&t);
        assert_eq!(table.ospf(0, 2), &p[..]);
        assert_eq!(nodes_of(&t, 2, table.ospf(2, 0)), vec![2, 1, 0]);
    }

    /// Exhaustive simple-path enumeration; returns the minimum weight and the
    /// lexicographically smallest node sequence attaining it.
    fn brute_force_best(topo: &Topology, src: usize, dst: usize) -> (f64, Vec<usize>) {
        fn rec(
            t: &Topology,
            at: usize,
            dst: usize,
            path: &mut Vec<usize>,
            w: f64,
            best: &mut Option<(f64, Vec<usize>)>,
        ) {
            if at == dst {
                let better = match best {
                    None => true,
                    Some((bw, bp)) => {
                        w < *bw - 1e-9 || ((w - *bw).abs() <= 1e-9 && path < bp)
                    }
                };
                if better {
                    *best = Some((w, path.clone()));
                }
                return;
            }
            for &l in t.out_links(at) {
                let link = t.link(l);
                if !path.contains(&link.head) {
                    path.push(link.head);
                    rec(t, link.head, dst, path, w + link.ospf_weight, best);
                    path.pop();
                }
            }
        }
        let mut best = None;
        rec(topo, src, dst, &mut vec![src], 0.0, &mut best);
        best.unwrap()
    }

    fn weighted(n: usize, seed: u64) -> Topology {
        let base = synthetic::random_connected(n, n + 3, &[10.0], seed);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let specs: Vec<EdgeSpec> = base
            .edges()
            .into_iter()
            .map(|(u, v)| EdgeSpec {
                u,
                v,
                capacity: 10.0,
                weight: Some(rng.gen_range(1..4) as f64),
            })
            .collect();
        Topology::from_edges(n, &specs, WeightPolicy::Unit).unwrap()
    }

    #[test]
    fn weighted_paths_match_enumeration() {
        for seed in 0..10 {
            let t = weighted(4 + (seed as usize % 5), seed);
            let table = PathTable::compute(&t);
            for s in 0..t.num_nodes() {
                for d in (0..t.num_nodes()).filter(|&d| d != s) {
                    let (w, seq) = brute_force_best(&t, s, d);
                    let p = table.ospf(s, d);
                    let pw: f64 = p.iter().map(|&l| t.link(l).ospf_weight).sum();
                    assert!((pw - w).abs() < 1e-9);
                    assert_eq!(nodes_of(&t, s, p), seq);
                }
            }
        }
    }

    /// Floyd-Warshall distances as an independent all-pairs reference.
    fn floyd(t: &Topology) -> Vec<Vec<f64>> {
        let n = t.num_nodes();
        let mut d = vec![vec![f64::INFINITY; n]; n];
        for (i, row) in d.iter_mut().enumerate() {
            row[i] = 0.0;
        }
        for l in t.links() {
            d[l.tail][l.head] = d[l.tail][l.head].min(l.ospf_weight);
        }
        for k in 0..n {
            for i in 0..n {
                for j in 0..n {
                    let via = d[i][k] + d[k][j];
                    if via < d[i][j] {
                        d[i][j] = via;
                    }
                }
            }
        }
        d
    }

    #[test]
    fn path_weight_equals_all_pairs_distance() {
        for seed in 20..40 {
            let t = weighted(3 + (seed as usize % 6), seed);
            let d = floyd(&t);
            let table = PathTable::compute(&t);
            for s in 0..t.num_nodes() {
                for e in (0..t.num_nodes()).filter(|&e| e != s) {
                    let pw: f64 = table.ospf(s, e).iter().map(|&l| t.link(l).ospf_weight).sum();
                    assert!((pw - d[s][e]).abs() < 1e-9);
                }
            }
        }
    }

    #[test]
    fn sr_direct_is_ospf() {
        let t = synthetic::random_connected(7, 11, &[10.0], 5);
        let table = PathTable::compute(&t);
        for s in 0..7 {
            for d in (0..7).filter(|&d| d != s) {
                let dem = Demand {
                    src: s,
                    dst: d,
                    bandwidth: 1.0,
                };
                assert_eq!(sr_path(&t, &dem, Midpoint::Direct).unwrap(), ospf_path(&t, s, d));
                assert_eq!(table.sr_path(s, d, Midpoint::Direct).unwrap(), table.ospf(s, d));
            }
        }
    }

    /// The example network: A=0 B=1 C=2 D=3 E=4. OSPF sends A->E over
    /// A-B-E; SR via C gives A-C-E.
    fn detour_example() -> Topology {
        let specs = [
            EdgeSpec::new(0, 1, 10.0),
            EdgeSpec::new(1, 4, 10.0),
            EdgeSpec {
                weight: Some(2.0),
                ..EdgeSpec::new(0, 2, 10.0)
            },
            EdgeSpec {
                weight: Some(2.0),
                ..EdgeSpec::new(2, 4, 10.0)
            },
            EdgeSpec::new(1, 3, 10.0),
            EdgeSpec::new(3, 4, 10.0),
        ];
        Topology::from_edges(5, &specs, WeightPolicy::Unit).unwrap()
    }

    #[test]
    fn detour_via_c() {
        let t = detour_example();
        let dem = Demand {
            src: 0,
            dst: 4,
            bandwidth: 9.0,
        };
        let direct = sr_path(&t, &dem, Midpoint::Direct).unwrap();
        assert_eq!(nodes_of(&t, 0, &direct), vec![0, 1, 4]);
        let via = sr_path(&t, &dem, Midpoint::Node(2)).unwrap();
        assert_eq!(nodes_of(&t, 0, &via), vec![0, 2, 4]);
    }

    #[test]
    fn midpoint_on_direct_path_concatenates_to_direct() {
        let t = synthetic::line(4, 10.0);
        let table = PathTable::compute(&t);
        for mid in [1, 2] {
            let p = table.sr_path(0, 3, Midpoint::Node(mid)).unwrap();
            let mut concat = table.ospf(0, mid).to_vec();
            concat.extend_from_slice(table.ospf(mid, 3));
            assert_eq!(p, concat);
            assert_eq!(p, table.ospf(0, 3));
        }
    }

    #[test]
    fn invalid_midpoint() {
        let t = synthetic::ring(4, 1.0);
        let table = PathTable::compute(&t);
        assert!(matches!(
            table.sr_path(0, 2, Midpoint::Node(0)),
            Err(Error::InvalidMidpoint { .. })
        ));
        assert!(table.sr_path(0, 2, Midpoint::Node(2)).is_err());
        assert!(table.sr_path(0, 2, Midpoint::Node(9)).is_err());
    }

    #[test]
    fn single_demand_utilization() {
        let t = synthetic::line(3, 10.0);
        let table = PathTable::compute(&t);
        let mut tm = TrafficMatrix::zeros(3);
        tm.set(0, 2, 9.0);
        let ls = apply_routing(&t, &table, &tm, &RoutingConfig::all_direct(3));
        for (id, l) in t.links().iter().enumerate() {
            let expect = if l.tail < l.head { 0.9 } else { 0.0 };
            assert!((ls.utilization(id) - expect).abs() < 1e-12);
        }
        assert!((ls.max_utilization() - 0.9).abs() < 1e-12);
    }

    #[test]
    fn zero_tm_zero_state() {
        let t = synthetic::complete(4, 10.0);
        let table = PathTable::compute(&t);
        let ls = apply_routing(&t, &table, &TrafficMatrix::zeros(4), &RoutingConfig::all_direct(4));
        assert!(ls.loads().iter().all(|&l| l == 0.0));
        assert_eq!(max_utilization(&ls), 0.0);
    }

    #[test]
    fn max_utilization_scan() {
        let ls = LinkState::from_loads(vec![0.3, 1.1, 0.9], vec![1.0; 3]).unwrap();
        assert_eq!(ls.max_utilization(), 1.1);
    }

    fn random_config(n: usize, rng: &mut ChaCha8Rng) -> RoutingConfig {
        let mut cfg = RoutingConfig::all_direct(n);
        for i in 0..cfg.len() {
            let (s, d) = demand_pair(n, i);
            let choices: Vec<Midpoint> = std::iter::once(Midpoint::Direct)
                .chain((0..n).filter(|&k| k != s && k != d).map(Midpoint::Node))
                .collect();
            cfg.set(i, choices[rng.gen_range(0..choices.len())]).unwrap();
        }
        cfg
    }

    /// Re-derives loads from scratch, one path per demand, using
    /// single-source routing rather than the path table.
    fn naive_loads(t: &Topology, tm: &TrafficMatrix, cfg: &RoutingConfig) -> Vec<f64> {
        let n = t.num_nodes();
        let mut load = vec![0.0; t.num_links()];
        for i in 0..cfg.len() {
            let (s, d) = demand_pair(n, i);
            let dem = Demand {
                src: s,
                dst: d,
                bandwidth: tm.get(s, d),
            };
            for l in sr_path(t, &dem, cfg.get(i)).unwrap() {
                load[l] += dem.bandwidth;
            }
        }
        load
    }

    #[test]
    fn apply_routing_matches_superposition() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let t = synthetic::complete(4, 10.0);
        let table = PathTable::compute(&t);
        for seed in 0..10 {
            let tm = generate_tm(&t, seed, 5.0).unwrap();
            let cfg = random_config(4, &mut rng);
            let ls = apply_routing(&t, &table, &tm, &cfg);
            for (a, b) in ls.loads().iter().zip(naive_loads(&t, &tm, &cfg)) {
                assert!((a - b).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn incremental_moves_match_batch() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let t = synthetic::random_connected(7, 12, &[10.0, 40.0], 2);
        let n = 7;
        let table = PathTable::compute(&t);
        let tm = generate_tm(&t, 1, 3.0).unwrap();
        let mut cfg = random_config(n, &mut rng);
        let mut ls = apply_routing(&t, &table, &tm, &cfg);
        for _ in 0..200 {
            let i = rng.gen_range(0..cfg.len());
            let (s, d) = demand_pair(n, i);
            let mid = random_config(n, &mut rng).get(i);
            let old = table.sr_path(s, d, cfg.get(i)).unwrap();
            let new = table.sr_path(s, d, mid).unwrap();
            let dem = Demand {
                src: s,
                dst: d,
                bandwidth: tm.get(s, d),
            };
            ls = incremental_move(&ls, &dem, &old, &new);
            cfg.set(i, mid).unwrap();
        }
        let fresh = apply_routing(&t, &table, &tm, &cfg);
        for (a, b) in ls.loads().iter().zip(fresh.loads()) {
            assert!((a - b).abs() <= 1e-9 * b.abs().max(1.0));
        }
    }

    #[test]
    fn noop_and_zero_bandwidth_moves() {
        let t = synthetic::ring(5, 10.0);
        let table = PathTable::compute(&t);
        let tm = generate_tm(&t, 4, 2.0).unwrap();
        let cfg = RoutingConfig::all_direct(5);
        let ls = apply_routing(&t, &table, &tm, &cfg);
        let p = table.ospf(0, 2).to_vec();
        let dem = Demand {
            src: 0,
            dst: 2,
            bandwidth: tm.get(0, 2),
        };
        assert_eq!(incremental_move(&ls, &dem, &p, &p), ls);
        let other = table.sr_path(0, 2, Midpoint::Node(4)).unwrap();
        let zero = Demand {
            bandwidth: 0.0,
            ..dem
        };
        assert_eq!(incremental_move(&ls, &zero, &p, &other), ls);
    }

    #[test]
    fn config_csv_round_trip() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let cfg = random_config(5, &mut rng);
        let text = cfg.to_csv();
        assert!(text.starts_with("src,dst,midpoint\n0,1,"));
        assert_eq!(RoutingConfig::from_csv(&text, 5).unwrap(), cfg);
        assert!(RoutingConfig::from_csv("src,dst,midpoint\n0,1,-1\n", 5).is_err());
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #![proptest_config(ProptestConfig::with_cases(48))]

            #[test]
            fn superposition(seed in 0u64..1000, a in 0.1f64..5.0, b in 0.1f64..5.0) {
                let t = synthetic::random_connected(6, 9, &[10.0, 25.0], seed);
                let table = PathTable::compute(&t);
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                let cfg = random_config(6, &mut rng);
                let tm1 = generate_tm(&t, seed, a).unwrap();
                let tm2 = generate_tm(&t, seed + 1, b).unwrap();
                let sum = tm1.add(&tm2).unwrap();
                let l1 = apply_routing(&t, &table, &tm1, &cfg);
                let l2 = apply_routing(&t, &table, &tm2, &cfg);
                let ls = apply_routing(&t, &table, &sum, &cfg);
                for i in 0..t.num_links() {
                    let want = l1.loads()[i] + l2.loads()[i];
                    prop_assert!((ls.loads()[i] - want).abs() <= 1e-9 * want.max(1.0));
                }
            }
        }
    }
}
