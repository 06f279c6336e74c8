//! The two-stage optimizer: a greedy pass of the trained policy over the
//! critical demands, then hill climbing from the best configuration it
//! visited.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Instant;

use crate::checkpoint::load_checkpoint;
use crate::env::{write_trace_csv, EnvConfig, EnvState, TraceRecord};
use crate::error::{Error, Result};
use crate::gnn::PolicyParams;
use crate::network::Network;
use crate::ppo::greedy_rollout;
use crate::routing::{apply_routing, RoutingConfig};
use crate::search::{hill_climb, write_search_trace, SearchBudget, SearchStep};
use crate::traffic::{select_critical, TrafficMatrix};

#[derive(Debug, Clone, PartialEq)]
pub struct EneroConfig {
    pub checkpoint: PathBuf,
    pub env: EnvConfig,
    pub ls_budget_seconds: f64,
    pub seed: u64,
    pub out_dir: PathBuf,
}

impl Default for EneroConfig {
    fn default() -> Self {
        Self {
            checkpoint: PathBuf::from("best.ckpt"),
            env: EnvConfig::default(),
            ls_budget_seconds: 10.0,
            seed: 0,
            out_dir: PathBuf::from("out"),
        }
    }
}

#[derive(Debug, Clone)]
pub struct OptimizationReport {
    pub topology: String,
    pub initial_maxu: f64,
    pub drl_maxu: f64,
    pub final_maxu: f64,
    pub drl_ms: f64,
    pub ls_ms: f64,
    /// True when the policy produced non-finite scores and stage 1 fell
    /// back to OSPF routing.
    pub drl_degraded: bool,
    pub ls_converged: bool,
    pub drl_config: RoutingConfig,
    pub final_config: RoutingConfig,
    pub drl_trace: Vec<TraceRecord>,
    pub ls_trace: Vec<SearchStep>,
}

impl OptimizationReport {
    pub fn total_ms(&self) -> f64 {
        self.drl_ms + self.ls_ms
    }

    pub const CSV_HEADER: &'static str =
        "topology,initial_maxu,drl_maxu,final_maxu,drl_ms,ls_ms,total_ms,drl_degraded,ls_converged";

    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{},{},{:.3},{:.3},{:.3},{},{}",
            self.topology,
            self.initial_maxu,
            self.drl_maxu,
            self.final_maxu,
            self.drl_ms,
            self.ls_ms,
            self.total_ms(),
            self.drl_degraded,
            self.ls_converged
        )
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let pct = |v: f64| {
            if self.initial_maxu > 0.0 {
                100.0 * (1.0 - v / self.initial_maxu)
            } else {
                0.0
            }
        };
        writeln!(s, "topology         {}", self.topology).unwrap();
        writeln!(s, "initial maxU     {:.6}", self.initial_maxu).unwrap();
        writeln!(
            s,
            "after DRL        {:.6}  (-{:.2}%, {} moves, {:.1} ms{})",
            self.drl_maxu,
            pct(self.drl_maxu),
            self.drl_config.num_detoured(),
            self.drl_ms,
            if self.drl_degraded { ", degraded to OSPF" } else { "" }
        )
        .unwrap();
        writeln!(
            s,
            "after LS         {:.6}  (-{:.2}%, {} iterations, {:.1} ms{})",
            self.final_maxu,
            pct(self.final_maxu),
            self.ls_trace.len(),
            self.ls_ms,
            if self.ls_converged { ", local optimum" } else { ", budget exhausted" }
        )
        .unwrap();
        writeln!(s, "total            {:.1} ms", self.total_ms()).unwrap();
        s
    }

    /// Writes `report.txt`, `report.csv`, `config.csv` (final routing),
    /// `drl_config.csv`, `drl_trace.csv` and `ls_trace.csv` into `dir`.
    pub fn write_to(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir)?;
        std::fs::write(dir.join("report.txt"), self.to_text())?;
        std::fs::write(
            dir.join("report.csv"),
            format!("{}\n{}\n", Self::CSV_HEADER, self.csv_row()),
        )?;
        std::fs::write(dir.join("config.csv"), self.final_config.to_csv())?;
        std::fs::write(dir.join("drl_config.csv"), self.drl_config.to_csv())?;
        write_trace_csv(std::fs::File::create(dir.join("drl_trace.csv"))?, &self.drl_trace)?;
        write_search_trace(std::fs::File::create(dir.join("ls_trace.csv"))?, &self.ls_trace)?;
        Ok(())
    }
}

/// Loaded policy plus pipeline settings.
pub struct Enero {
    pub params: PolicyParams,
    pub config: EneroConfig,
}

impl Enero {
    pub fn load(config: EneroConfig) -> Result<Self> {
        let (params, _, _) = load_checkpoint(&config.checkpoint)?;
        Ok(Self { params, config })
    }

    pub fn optimize(&self, net: &Arc<Network>, tm: &Arc<TrafficMatrix>) -> Result<OptimizationReport> {
        enero_optimize(
            net,
            tm,
            &self.params,
            &self.config.env,
            &SearchBudget::seconds(self.config.ls_budget_seconds),
        )
    }
}

/// Runs both stages from OSPF routing. The three reported utilizations are
/// non-increasing.
pub fn enero_optimize(
    net: &Arc<Network>,
    tm: &Arc<TrafficMatrix>,
    params: &PolicyParams,
    env_cfg: &EnvConfig,
    budget: &SearchBudget,
) -> Result<OptimizationReport> {
    let t0 = Instant::now();
    let mut env = EnvState::reset(net.clone(), tm.clone(), env_cfg)?;
    let initial_maxu = env.initial_maxu();
    let (drl_config, drl_maxu, drl_trace, drl_degraded) = match greedy_rollout(&mut env, params) {
        Ok(trace) => {
            // report a from-scratch evaluation so every stage is measured
            // the same way
            let (cfg, _) = env.best_result();
            let u = evaluate_config(net, tm, &cfg)?;
            if u <= initial_maxu {
                (cfg, u, trace, false)
            } else {
                (RoutingConfig::all_direct(net.num_nodes()), initial_maxu, trace, false)
            }
        }
        Err(Error::NonFinite { detail, .. }) => {
            log::warn!("policy output not finite ({detail}); continuing from OSPF");
            (RoutingConfig::all_direct(net.num_nodes()), initial_maxu, Vec::new(), true)
        }
        Err(e) => return Err(e),
    };
    let drl_ms = t0.elapsed().as_secs_f64() * 1e3;

    let t1 = Instant::now();
    let critical = select_critical(
        &net.topology,
        &net.paths,
        tm,
        &drl_config,
        env_cfg.critical_fraction,
        env_cfg.top_links,
    );
    let ls = hill_climb(net, tm, &drl_config, &critical, budget)?;
    let ls_ms = t1.elapsed().as_secs_f64() * 1e3;

    Ok(OptimizationReport {
        topology: net.name.clone(),
        initial_maxu,
        drl_maxu,
        final_maxu: ls.maxu,
        drl_ms,
        ls_ms,
        drl_degraded,
        ls_converged: ls.converged,
        drl_config,
        final_config: ls.config,
        drl_trace,
        ls_trace: ls.trace,
    })
}

/// Max utilization of `cfg` recomputed from scratch.
pub fn evaluate_config(net: &Network, tm: &TrafficMatrix, cfg: &RoutingConfig) -> Result<f64> {
    if cfg.num_nodes() != net.num_nodes() || tm.num_nodes() != net.num_nodes() {
        return Err(Error::Shape(format!(
            "topology has {} nodes, TM {}, config {}",
            net.num_nodes(),
            tm.num_nodes(),
            cfg.num_nodes()
        )));
    }
    Ok(apply_routing(&net.topology, &net.paths, tm, cfg).max_utilization())
}
