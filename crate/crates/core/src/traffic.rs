//! Traffic matrices: generation, file format, bandwidth ordering and
//! critical-demand selection.

use std::cmp::Ordering;
use std::collections::BTreeSet;
use std::fmt::Write as _;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::routing::{self, demand_index, demand_pair, num_demands, Demand, PathTable, RoutingConfig};
use crate::topology::{NodeId, Topology};

/// Bandwidth for every ordered node pair, indexed by
/// [`routing::demand_index`].
#[derive(Debug, Clone, PartialEq)]
pub struct TrafficMatrix {
    num_nodes: usize,
    bandwidth: Vec<f64>,
}

impl TrafficMatrix {
    pub fn zeros(num_nodes: usize) -> Self {
        Self {
            num_nodes,
            bandwidth: vec![0.0; num_demands(num_nodes)],
        }
    }

    pub fn from_vec(num_nodes: usize, bandwidth: Vec<f64>) -> Result<Self> {
        if bandwidth.len() != num_demands(num_nodes) {
            return Err(Error::InvalidTrafficMatrix(format!(
                "{} entries for {num_nodes} nodes",
                bandwidth.len()
            )));
        }
        if let Some(bad) = bandwidth.iter().find(|b| !(b.is_finite() && **b >= 0.0)) {
            return Err(Error::InvalidTrafficMatrix(format!(
                "bandwidth must be finite and nonnegative, got {bad}"
            )));
        }
        Ok(Self {
            num_nodes,
            bandwidth,
        })
    }

    pub fn num_nodes(&self) -> usize {
        self.num_nodes
    }

    pub fn get(&self, src: NodeId, dst: NodeId) -> f64 {
        self.bandwidth[demand_index(self.num_nodes, src, dst)]
    }

    pub fn set(&mut self, src: NodeId, dst: NodeId, bandwidth: f64) {
        assert!(bandwidth >= 0.0, "negative bandwidth");
        self.bandwidth[demand_index(self.num_nodes, src, dst)] = bandwidth;
    }

    pub fn by_index(&self, index: usize) -> f64 {
        self.bandwidth[index]
    }

    pub fn values(&self) -> &[f64] {
        &self.bandwidth
    }

    pub fn demand(&self, index: usize) -> Demand {
        let (src, dst) = demand_pair(self.num_nodes, index);
        Demand {
            src,
            dst,
            bandwidth: self.bandwidth[index],
        }
    }

    pub fn demands(&self) -> impl Iterator<Item = Demand> + '_ {
        (0..self.bandwidth.len()).map(|i| self.demand(i))
    }

    pub fn scaled(&self, factor: f64) -> Self {
        Self {
            num_nodes: self.num_nodes,
            bandwidth: self.bandwidth.iter().map(|b| b * factor).collect(),
        }
    }

    pub fn add(&self, other: &Self) -> Result<Self> {
        if self.num_nodes != other.num_nodes {
            return Err(Error::Shape("traffic matrices differ in size".into()));
        }
        Ok(Self {
            num_nodes: self.num_nodes,
            bandwidth: self
                .bandwidth
                .iter()
                .zip(&other.bandwidth)
                .map(|(a, b)| a + b)
                .collect(),
        })
    }

    /// `TM <N>` followed by `src dst bandwidth` lines in `(src, dst)` order.
    pub fn to_text(&self) -> String {
        let mut out = format!("TM {}\n", self.num_nodes);
        for d in self.demands() {
            let _ = writeln!(out, "{} {} {}", d.src, d.dst, d.bandwidth);
        }
        out
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut lines = text
            .lines()
            .enumerate()
            .map(|(i, l)| (i + 1, l.split('#').next().unwrap_or("").trim()))
            .filter(|(_, l)| !l.is_empty());
        let (line_no, header) = lines.next().ok_or_else(|| Error::parse(1, "empty TM file"))?;
        let n: usize = match header.split_whitespace().collect::<Vec<_>>()[..] {
            ["TM", n] => n
                .parse()
                .map_err(|_| Error::parse(line_no, "invalid node count"))?,
            _ => return Err(Error::parse(line_no, "expected `TM <N>`")),
        };
        if n < 2 {
            return Err(Error::parse(line_no, "TM needs at least two nodes"));
        }
        let mut tm = Self::zeros(n);
        let mut seen = vec![false; num_demands(n)];
        for (line_no, line) in lines {
            let f: Vec<&str> = line.split_whitespace().collect();
            let bad = || Error::parse(line_no, format!("invalid demand line `{line}`"));
            if f.len() != 3 {
                return Err(bad());
            }
            let s: usize = f[0].parse().map_err(|_| bad())?;
            let d: usize = f[1].parse().map_err(|_| bad())?;
            let bw: f64 = f[2].parse().map_err(|_| bad())?;
            if s >= n || d >= n || s == d || !(bw.is_finite() && bw >= 0.0) {
                return Err(bad());
            }
            let idx = demand_index(n, s, d);
            if seen[idx] {
                return Err(Error::parse(line_no, format!("duplicate demand {s}->{d}")));
            }
            seen[idx] = true;
            tm.bandwidth[idx] = bw;
        }
        if let Some(missing) = seen.iter().position(|s| !s) {
            let (s, d) = demand_pair(n, missing);
            return Err(Error::parse(0, format!("missing demand {s}->{d}")));
        }
        Ok(tm)
    }
}

/// Every entry i.i.d. uniform on `[0.5, 1]`, times `scale`.
pub fn generate_tm(topo: &Topology, seed: u64, scale: f64) -> Result<TrafficMatrix> {
    if !(scale.is_finite() && scale > 0.0) {
        return Err(Error::InvalidTrafficMatrix(format!(
            "scale must be positive, got {scale}"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = topo.num_nodes();
    let bandwidth = (0..num_demands(n))
        .map(|_| rng.gen_range(0.5..=1.0) * scale)
        .collect();
    Ok(TrafficMatrix {
        num_nodes: n,
        bandwidth,
    })
}

/// Scale factor for which the OSPF max utilization of generated TMs averages
/// `target` over `samples` seeds starting at `seed`.
pub fn calibrate_scale(
    topo: &Topology,
    paths: &PathTable,
    seed: u64,
    samples: usize,
    target: f64,
) -> f64 {
    let direct = RoutingConfig::all_direct(topo.num_nodes());
    let mean = (0..samples as u64)
        .map(|i| {
            let tm = generate_tm(topo, seed.wrapping_add(i), 1.0).expect("unit scale");
            routing::apply_routing(topo, paths, &tm, &direct).max_utilization()
        })
        .sum::<f64>()
        / samples.max(1) as f64;
    target / mean
}

fn by_bandwidth_desc(a: &Demand, b: &Demand) -> Ordering {
    b.bandwidth
        .total_cmp(&a.bandwidth)
        .then_with(|| (a.src, a.dst).cmp(&(b.src, b.dst)))
}

/// All demands by non-increasing bandwidth, ties by `(src, dst)`.
pub fn order_by_bandwidth(tm: &TrafficMatrix) -> Vec<Demand> {
    let mut demands: Vec<Demand> = tm.demands().collect();
    demands.sort_by(by_bandwidth_desc);
    demands
}

/// The demands an optimizer is allowed to re-route, by non-increasing
/// bandwidth.
#[derive(Debug, Clone, PartialEq)]
pub struct CriticalSet {
    pub demands: Vec<Demand>,
}

impl CriticalSet {
    pub fn len(&self) -> usize {
        self.demands.len()
    }

    pub fn is_empty(&self) -> bool {
        self.demands.is_empty()
    }

    pub fn indices(&self, num_nodes: usize) -> Vec<usize> {
        self.demands
            .iter()
            .map(|d| demand_index(num_nodes, d.src, d.dst))
            .collect()
    }
}

/// Number of critical demands for a topology size; at least one.
pub fn critical_count(num_nodes: usize, fraction: f64) -> usize {
    ((fraction * num_demands(num_nodes) as f64).round() as usize)
        .clamp(1, num_demands(num_nodes))
}

fn same_level(a: f64, b: f64) -> bool {
    (a - b).abs() <= 1e-12 * a.abs().max(b.abs()).max(1.0)
}

/// Picks `round(fraction * N(N-1))` demands, largest first, from those
/// crossing the `top_links` most utilized links. Links tied with the last of
/// those count as top links. If too few demands cross them, the next
/// utilization levels are opened one at a time.
pub fn select_critical(
    topo: &Topology,
    paths: &PathTable,
    tm: &TrafficMatrix,
    cfg: &RoutingConfig,
    fraction: f64,
    top_links: usize,
) -> CriticalSet {
    assert!(fraction > 0.0 && fraction <= 1.0, "fraction must be in (0, 1]");
    assert!(top_links >= 1, "top_links must be at least 1");
    let n = topo.num_nodes();
    let k = critical_count(n, fraction);

    let mut crossing: Vec<BTreeSet<usize>> = vec![BTreeSet::new(); topo.num_links()];
    for idx in 0..cfg.len() {
        let (s, d) = demand_pair(n, idx);
        for l in paths.sr_links(s, d, cfg.get(idx)) {
            crossing[l].insert(idx);
        }
    }
    let ls = routing::apply_routing(topo, paths, tm, cfg);
    let util = ls.utilizations();
    let mut order: Vec<usize> = (0..topo.num_links()).collect();
    order.sort_by(|&a, &b| util[b].total_cmp(&util[a]).then(a.cmp(&b)));

    let cutoff = util[order[top_links.min(order.len()) - 1]];
    let mut pos = order
        .iter()
        .position(|&l| util[l] < cutoff && !same_level(util[l], cutoff))
        .unwrap_or(order.len());

    let mut chosen: BTreeSet<usize> = BTreeSet::new();
    let mut level: Vec<usize> = order[..pos].to_vec();
    loop {
        let mut fresh: Vec<Demand> = level
            .iter()
            .flat_map(|&l| crossing[l].iter().copied())
            .filter(|i| !chosen.contains(i))
            .collect::<BTreeSet<_>>()
            .into_iter()
            .map(|i| tm.demand(i))
            .collect();
        fresh.sort_by(by_bandwidth_desc);
        for d in fresh.into_iter().take(k - chosen.len()) {
            chosen.insert(demand_index(n, d.src, d.dst));
        }
        if chosen.len() >= k || pos >= order.len() {
            break;
        }
        let head = util[order[pos]];
        let end = order[pos..]
            .iter()
            .position(|&l| !same_level(util[l], head))
            .map_or(order.len(), |p| pos + p);
        level = order[pos..end].to_vec();
        pos = end;
    }
    let mut demands: Vec<Demand> = chosen.into_iter().map(|i| tm.demand(i)).collect();
    demands.sort_by(by_bandwidth_desc);
    CriticalSet { demands }
}
