//! The episodic re-routing environment.
//!
//! An episode starts from the OSPF routing, fixes the critical demands in
//! decreasing bandwidth order, and asks for one midpoint per critical demand.
//! The reward of a step is the drop in maximum link utilization it causes.
//! The best configuration seen during the episode is kept, so the result of
//! an episode is never worse than its starting routing.

use std::io::Write;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::network::Network;
use crate::routing::{apply_routing, demand_index, Demand, LinkState, Midpoint, RoutingConfig};
use crate::topology::LinkId;
use crate::traffic::{select_critical, CriticalSet, TrafficMatrix};

pub const NUM_FEATURES: usize = 4;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EnvConfig {
    pub critical_fraction: f64,
    pub top_links: usize,
}

impl Default for EnvConfig {
    fn default() -> Self {
        Self {
            critical_fraction: 0.15,
            top_links: 5,
        }
    }
}

/// Per-link input features: utilization, capacity relative to the largest
/// link, whether the link lies on the candidate path, and the candidate
/// demand's bandwidth relative to the link capacity (0 off the path).
#[derive(Debug, Clone, PartialEq)]
pub struct ActionGraph {
    pub features: Vec<[f64; NUM_FEATURES]>,
}

impl ActionGraph {
    pub fn num_links(&self) -> usize {
        self.features.len()
    }

    pub fn marked_links(&self) -> Vec<LinkId> {
        (0..self.features.len())
            .filter(|&l| self.features[l][2] == 1.0)
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepResult {
    pub reward: f64,
    pub done: bool,
    pub next_demand: Option<Demand>,
}

#[derive(Debug, Clone)]
pub struct EnvState {
    net: Arc<Network>,
    tm: Arc<TrafficMatrix>,
    config: RoutingConfig,
    link_state: LinkState,
    critical: CriticalSet,
    critical_idx: Vec<usize>,
    cursor: usize,
    initial_maxu: f64,
    maxu: f64,
    best_config: RoutingConfig,
    best_maxu: f64,
}

impl EnvState {
    /// Starts an episode from OSPF routing (the topology's link weights).
    pub fn reset(net: Arc<Network>, tm: Arc<TrafficMatrix>, cfg: &EnvConfig) -> Result<Self> {
        let start = RoutingConfig::all_direct(net.num_nodes());
        Self::reset_from(net, tm, start, cfg)
    }

    /// Starts an episode from an arbitrary routing configuration.
    pub fn reset_from(
        net: Arc<Network>,
        tm: Arc<TrafficMatrix>,
        start: RoutingConfig,
        cfg: &EnvConfig,
    ) -> Result<Self> {
        if tm.num_nodes() != net.num_nodes() || start.num_nodes() != net.num_nodes() {
            return Err(Error::Shape(format!(
                "topology has {} nodes, TM {}, config {}",
                net.num_nodes(),
                tm.num_nodes(),
                start.num_nodes()
            )));
        }
        let link_state = apply_routing(&net.topology, &net.paths, &tm, &start);
        let critical = select_critical(
            &net.topology,
            &net.paths,
            &tm,
            &start,
            cfg.critical_fraction,
            cfg.top_links,
        );
        let critical_idx = critical.indices(net.num_nodes());
        let maxu = link_state.max_utilization();
        Ok(Self {
            net,
            tm,
            best_config: start.clone(),
            config: start,
            link_state,
            critical,
            critical_idx,
            cursor: 0,
            initial_maxu: maxu,
            maxu,
            best_maxu: maxu,
        })
    }

    pub fn network(&self) -> &Arc<Network> {
        &self.net
    }

    pub fn traffic(&self) -> &TrafficMatrix {
        &self.tm
    }

    pub fn config(&self) -> &RoutingConfig {
        &self.config
    }

    pub fn link_state(&self) -> &LinkState {
        &self.link_state
    }

    pub fn critical(&self) -> &CriticalSet {
        &self.critical
    }

    pub fn initial_maxu(&self) -> f64 {
        self.initial_maxu
    }

    pub fn maxu(&self) -> f64 {
        self.maxu
    }

    pub fn step_index(&self) -> usize {
        self.cursor
    }

    pub fn is_done(&self) -> bool {
        self.cursor >= self.critical.len()
    }

    /// Demands still to be decided, including the current one.
    pub fn pending(&self) -> &[Demand] {
        &self.critical.demands[self.cursor.min(self.critical.len())..]
    }

    pub fn current_demand(&self) -> Option<Demand> {
        self.critical.demands.get(self.cursor).copied()
    }

    /// `Direct` followed by every node other than the demand's endpoints.
    pub fn candidate_midpoints(&self) -> Vec<Midpoint> {
        match self.current_demand() {
            None => Vec::new(),
            Some(d) => std::iter::once(Midpoint::Direct)
                .chain(
                    (0..self.net.num_nodes())
                        .filter(|&k| k != d.src && k != d.dst)
                        .map(Midpoint::Node),
                )
                .collect(),
        }
    }

    fn current_path(&self, idx: usize) -> Vec<LinkId> {
        let (s, d) = crate::routing::demand_pair(self.net.num_nodes(), idx);
        self.net
            .paths
            .sr_links(s, d, self.config.get(idx))
            .collect()
    }

    /// One graph per candidate midpoint, each showing the network with the
    /// current demand lifted off its present path and placed on the
    /// candidate's.
    pub fn candidate_actions(&self) -> Vec<(Midpoint, ActionGraph)> {
        let Some(demand) = self.current_demand() else {
            return Vec::new();
        };
        let idx = self.critical_idx[self.cursor];
        let mut base = self.link_state.clone();
        base.remove_path(self.current_path(idx), demand.bandwidth);
        let utils = base.utilizations();
        let max_cap = self.net.topology.max_capacity();
        let caps = base.capacities();
        let template: Vec<[f64; NUM_FEATURES]> = utils
            .iter()
            .zip(caps)
            .map(|(&u, &c)| [u, c / max_cap, 0.0, 0.0])
            .collect();
        self.candidate_midpoints()
            .into_iter()
            .map(|m| {
                let mut features = template.clone();
                for l in self.net.paths.sr_links(demand.src, demand.dst, m) {
                    features[l][2] = 1.0;
                    features[l][3] += demand.bandwidth / caps[l];
                }
                (m, ActionGraph { features })
            })
            .collect()
    }

    /// The current network without any path marked.
    pub fn state_graph(&self) -> ActionGraph {
        let max_cap = self.net.topology.max_capacity();
        let features = self
            .link_state
            .loads()
            .iter()
            .zip(self.link_state.capacities())
            .map(|(&load, &c)| [load / c, c / max_cap, 0.0, 0.0])
            .collect();
        ActionGraph { features }
    }

    /// Re-routes the current demand via `midpoint` and advances.
    pub fn step(&mut self, midpoint: Midpoint) -> Result<StepResult> {
        let demand = self
            .current_demand()
            .ok_or_else(|| Error::InvalidAction("episode is finished".into()))?;
        let n = self.net.num_nodes();
        if let Midpoint::Node(k) = midpoint {
            if k >= n || k == demand.src || k == demand.dst {
                return Err(Error::InvalidAction(format!(
                    "midpoint {midpoint} for demand {}->{}",
                    demand.src, demand.dst
                )));
            }
        }
        let idx = demand_index(n, demand.src, demand.dst);
        let old = self.current_path(idx);
        self.config.set(idx, midpoint)?;
        let new = self.current_path(idx);
        self.link_state.move_demand(demand.bandwidth, &old, &new);

        let before = self.maxu;
        self.maxu = self.link_state.max_utilization();
        if self.maxu < self.best_maxu {
            self.best_maxu = self.maxu;
            self.best_config = self.config.clone();
        }
        self.cursor += 1;
        Ok(StepResult {
            reward: before - self.maxu,
            done: self.is_done(),
            next_demand: self.current_demand(),
        })
    }

    /// Best configuration visited in this episode and its max utilization.
    pub fn best_result(&self) -> (RoutingConfig, f64) {
        (self.best_config.clone(), self.best_maxu)
    }

    pub fn best_maxu(&self) -> f64 {
        self.best_maxu
    }
}

/// One row of an episode trace.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TraceRecord {
    pub step: usize,
    pub demand: Demand,
    pub midpoint: Midpoint,
    pub reward: f64,
    pub maxu: f64,
}

pub fn write_trace_csv<W: Write>(mut out: W, trace: &[TraceRecord]) -> std::io::Result<()> {
    writeln!(out, "step,src,dst,bandwidth,midpoint,reward,maxu")?;
    for r in trace {
        writeln!(
            out,
            "{},{},{},{},{},{},{}",
            r.step,
            r.demand.src,
            r.demand.dst,
            r.demand.bandwidth,
            r.midpoint.to_i64(),
            r.reward,
            r.maxu
        )?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synthetic;
    use crate::topology::{EdgeSpec, Topology, WeightPolicy};
    use crate::traffic::generate_tm;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn env(net: &Arc<Network>, tm: TrafficMatrix) -> EnvState {
        EnvState::reset(net.clone(), Arc::new(tm), &EnvConfig::default()).unwrap()
    }

    #[test]
    fn zero_tm_reset() {
        let net = Network::new("k5", synthetic::complete(5, 10.0));
        let e = env(&net, TrafficMatrix::zeros(5));
        assert_eq!(e.best_maxu(), 0.0);
        assert_eq!(e.pending().len(), 3);
        assert!(e.pending().iter().all(|d| d.bandwidth == 0.0));
    }

    #[test]
    fn single_demand_congestion() {
        let net = Network::new("line", synthetic::line(4, 10.0));
        let mut tm = TrafficMatrix::zeros(4);
        tm.set(0, 3, 7.0);
        tm.set(1, 2, 5.0);
        let e = env(&net, tm.clone());
        let oracle = apply_routing(
            &net.topology,
            &net.paths,
            &tm,
            &RoutingConfig::all_direct(4),
        );
        assert_eq!(e.best_maxu(), oracle.max_utilization());
        assert!((e.best_maxu() - 1.2).abs() < 1e-12);
    }

    #[test]
    fn reset_is_deterministic() {
        let net = Network::new("r", synthetic::random_connected(8, 12, &[10.0, 40.0], 1));
        let tm = generate_tm(&net.topology, 3, 4.0).unwrap();
        let a = env(&net, tm.clone());
        let b = env(&net, tm);
        assert_eq!(a.config(), b.config());
        assert_eq!(a.link_state(), b.link_state());
        assert_eq!(a.critical(), b.critical());
        assert_eq!(a.candidate_actions(), b.candidate_actions());
    }

    #[test]
    fn candidate_count() {
        let net = Network::new("k5", synthetic::complete(5, 10.0));
        let e = env(&net, generate_tm(&net.topology, 1, 1.0).unwrap());
        let c = e.candidate_actions();
        assert_eq!(c.len(), 4);
        assert_eq!(c[0].0, Midpoint::Direct);
    }

    #[test]
    fn candidate_marking_matches_sr_paths() {
        let net = Network::new("six", synthetic::random_connected(6, 9, &[10.0, 40.0], 7));
        let tm = generate_tm(&net.topology, 2, 5.0).unwrap();
        let mut e = env(&net, tm);
        while let Some(d) = e.current_demand() {
            let cands = e.candidate_actions();
            assert_eq!(cands.len(), 5);
            for (m, g) in &cands {
                let path = crate::routing::sr_path(&net.topology, &d, *m).unwrap();
                let mut expect = path.clone();
                expect.sort_unstable();
                expect.dedup();
                assert_eq!(g.marked_links(), expect);
                if *m == Midpoint::Direct {
                    let mut ospf = crate::routing::ospf_path(&net.topology, d.src, d.dst);
                    ospf.sort_unstable();
                    assert_eq!(g.marked_links(), ospf);
                }
                for l in 0..g.num_links() {
                    let times = path.iter().filter(|&&p| p == l).count() as f64;
                    let cap = net.topology.link(l).capacity;
                    assert!((g.features[l][3] - times * d.bandwidth / cap).abs() < 1e-12);
                }
            }
            e.step(cands[1].0).unwrap();
        }
    }

    #[test]
    fn candidate_graphs_exclude_current_demand() {
        let net = Network::new("line", synthetic::line(3, 10.0));
        let mut tm = TrafficMatrix::zeros(3);
        tm.set(0, 2, 4.0);
        let e = EnvState::reset(
            net.clone(),
            Arc::new(tm),
            &EnvConfig {
                critical_fraction: 1.0 / 6.0,
                top_links: 1,
            },
        )
        .unwrap();
        let cands = e.candidate_actions();
        // the 0->2 demand is lifted off, so background utilization is zero
        assert!(cands[0].1.features.iter().all(|f| f[0] == 0.0));
        assert!((e.state_graph().features[net.topology.link_id(0, 1).unwrap()][0] - 0.4).abs() < 1e-12);
    }

    #[test]
    fn direct_when_direct_is_noop() {
        let net = Network::new("r", synthetic::random_connected(6, 9, &[10.0], 3));
        let mut e = env(&net, generate_tm(&net.topology, 1, 3.0).unwrap());
        let before = e.link_state().clone();
        let r = e.step(Midpoint::Direct).unwrap();
        assert_eq!(r.reward, 0.0);
        assert_eq!(e.link_state(), &before);
        assert_eq!(e.step_index(), 1);
    }

    fn detour_example() -> Arc<Network> {
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
        Network::new(
            "detour",
            Topology::from_edges(5, &specs, WeightPolicy::Unit).unwrap(),
        )
    }

    #[test]
    fn detour_relieves_bottleneck() {
        let net = detour_example();
        let mut tm = TrafficMatrix::zeros(5);
        tm.set(0, 4, 9.0);
        tm.set(1, 4, 5.0);
        let mut e = env(&net, tm);
        let d = e.current_demand().unwrap();
        assert_eq!((d.src, d.dst, d.bandwidth), (0, 4, 9.0));
        assert!((e.maxu() - 1.4).abs() < 1e-12);
        let r = e.step(Midpoint::Node(2)).unwrap();
        // B-E drops from 14/10 to 5/10; A-C and C-E now carry 9/10
        assert!((r.reward - 0.5).abs() < 1e-12);
        assert!(r.reward > 0.0);
    }

    #[test]
    fn illegal_actions() {
        let net = detour_example();
        let mut tm = TrafficMatrix::zeros(5);
        tm.set(0, 4, 9.0);
        let mut e = env(&net, tm);
        assert!(matches!(e.step(Midpoint::Node(0)), Err(Error::InvalidAction(_))));
        assert!(matches!(e.step(Midpoint::Node(4)), Err(Error::InvalidAction(_))));
        assert!(matches!(e.step(Midpoint::Node(5)), Err(Error::InvalidAction(_))));
        while !e.is_done() {
            e.step(Midpoint::Direct).unwrap();
        }
        assert!(e.step(Midpoint::Direct).is_err());
    }

    #[test]
    fn direct_only_policy_keeps_ospf() {
        let net = Network::new("r", synthetic::random_connected(7, 10, &[10.0, 40.0], 5));
        let mut e = env(&net, generate_tm(&net.topology, 9, 2.0).unwrap());
        let init = e.initial_maxu();
        while !e.is_done() {
            e.step(Midpoint::Direct).unwrap();
        }
        let (cfg, u) = e.best_result();
        assert_eq!(u, init);
        assert_eq!(cfg, RoutingConfig::all_direct(7));
    }

    /// Random rollout; returns rewards and the recomputed maxU of every
    /// visited configuration.
    fn random_rollout(e: &mut EnvState, rng: &mut ChaCha8Rng) -> (Vec<f64>, Vec<f64>) {
        let net = e.network().clone();
        let mut rewards = Vec::new();
        let mut visited = vec![e.maxu()];
        while !e.is_done() {
            let c = e.candidate_midpoints();
            let m = c[rng.gen_range(0..c.len())];
            rewards.push(e.step(m).unwrap().reward);
            let fresh = apply_routing(&net.topology, &net.paths, e.traffic(), e.config());
            for (a, b) in e.link_state().loads().iter().zip(fresh.loads()) {
                assert!((a - b).abs() <= 1e-9 * b.abs().max(1.0));
            }
            visited.push(fresh.max_utilization());
        }
        (rewards, visited)
    }

    #[test]
    fn rollout_invariants() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for seed in 0..20 {
            let net = Network::new(
                "r",
                synthetic::random_connected(6 + seed as usize % 4, 12, &[10.0, 40.0], seed),
            );
            let tm = generate_tm(&net.topology, seed, 4.0).unwrap();
            let mut e = env(&net, tm);
            let init = e.initial_maxu();
            let (rewards, visited) = random_rollout(&mut e, &mut rng);
            let sum: f64 = rewards.iter().sum();
            assert!((sum - (init - e.maxu())).abs() < 1e-9);
            let (cfg, best) = e.best_result();
            assert!(best <= init);
            let replay_min = visited.iter().copied().fold(f64::INFINITY, f64::min);
            assert!((best - replay_min).abs() < 1e-9);
            let recomputed =
                apply_routing(&net.topology, &net.paths, e.traffic(), &cfg).max_utilization();
            assert!((recomputed - best).abs() < 1e-9);
        }
    }

    #[test]
    fn trace_csv() {
        let mut buf = Vec::new();
        write_trace_csv(
            &mut buf,
            &[TraceRecord {
                step: 0,
                demand: Demand {
                    src: 1,
                    dst: 2,
                    bandwidth: 3.5,
                },
                midpoint: Midpoint::Direct,
                reward: 0.0,
                maxu: 1.25,
            }],
        )
        .unwrap();
        assert_eq!(
            String::from_utf8(buf).unwrap(),
            "step,src,dst,bandwidth,midpoint,reward,maxu\n0,1,2,3.5,-1,0,1.25\n"
        );
    }
}
