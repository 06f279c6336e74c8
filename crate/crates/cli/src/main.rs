use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};

use enero::checkpoint::{load_checkpoint, save_checkpoint};
use enero::config::Settings;
use enero::env::EnvConfig;
use enero::network::Network;
use enero::pipeline::enero_optimize;
use enero::ppo::{write_train_log, TrainTopology, Trainer};
use enero::scenarios::{
    evaluate_stored, gen_failures, load_dataset_entry, plot_cdf, plot_time_series, run_sweep,
    write_results_csv, DatasetOptions, Method, Phase, RunContext, TracePoint,
};
use enero::search::{ls_baseline, sap_route, write_search_trace, SearchBudget};
use enero::topology::{compute_metrics, parse_graphml, parse_topology, GraphmlOptions, ParseOptions, Topology};
use enero::traffic::{calibrate_scale, generate_tm, TrafficMatrix};

#[derive(Parser)]
#[command(name = "enero", version, about = "Segment-routing traffic engineering with a GNN policy and local search")]
struct Cli {
    /// Seed for every random choice.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Flat TOML file of hyperparameters and pipeline settings.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory.
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train a policy on one or more topologies.
    Train(TrainArgs),
    /// Run the two-stage optimizer on one instance.
    Optimize(OptimizeArgs),
    /// Max utilization of a stored routing.
    Evaluate(EvaluateArgs),
    /// Generate traffic matrices for a topology.
    GenTm(GenTmArgs),
    /// Generate connected link-failure variants of a topology.
    GenFailures(GenFailuresArgs),
    /// Run methods over every topology of a dataset directory.
    Sweep(SweepArgs),
    /// Node degree and edge betweenness summaries.
    Metrics(MetricsArgs),
    /// Run a baseline on one instance.
    Baseline(BaselineArgs),
}

#[derive(Args)]
struct TrainArgs {
    /// Topology files (.topo or .graphml).
    #[arg(required = true)]
    topologies: Vec<PathBuf>,
    /// Training TMs per topology.
    #[arg(long, default_value_t = 100)]
    train_tms: usize,
    /// Held-out TMs per topology.
    #[arg(long, default_value_t = 50)]
    eval_tms: usize,
    /// Generated TMs are scaled so OSPF averages this max utilization.
    #[arg(long, default_value_t = 1.0)]
    target_maxu: f64,
    #[arg(long)]
    episodes: Option<usize>,
}

#[derive(Args)]
struct InstanceArgs {
    #[arg(long)]
    topology: PathBuf,
    #[arg(long)]
    tm: PathBuf,
}

#[derive(Args)]
struct OptimizeArgs {
    #[command(flatten)]
    instance: InstanceArgs,
    #[arg(long)]
    checkpoint: PathBuf,
    /// Local-search time budget in seconds.
    #[arg(long)]
    budget: Option<f64>,
}

#[derive(Args)]
struct EvaluateArgs {
    #[command(flatten)]
    instance: InstanceArgs,
    /// Routing file written by optimize, baseline or sweep.
    #[arg(long)]
    routing: PathBuf,
}

#[derive(Args)]
struct GenTmArgs {
    #[arg(long)]
    topology: PathBuf,
    #[arg(long, default_value_t = 150)]
    n: usize,
    /// Fixed bandwidth scale; overrides --target-maxu.
    #[arg(long)]
    scale: Option<f64>,
    #[arg(long, default_value_t = 1.0)]
    target_maxu: f64,
}

#[derive(Args)]
struct GenFailuresArgs {
    #[arg(long)]
    topology: PathBuf,
    /// Undirected links removed per variant.
    #[arg(long)]
    k: usize,
    #[arg(long, default_value_t = 20)]
    count: usize,
}

#[derive(Args)]
struct SweepArgs {
    #[arg(long)]
    dataset: PathBuf,
    #[arg(long, value_delimiter = ',', default_value = "ospf,sap,ls,enero")]
    methods: Vec<String>,
    #[arg(long)]
    checkpoint: Option<PathBuf>,
    #[arg(long)]
    budget: Option<f64>,
    /// TMs generated per topology without a `<name>.tms` directory.
    #[arg(long, default_value_t = 10)]
    tms: usize,
    #[arg(long, default_value_t = 1.0)]
    target_maxu: f64,
}

#[derive(Args)]
struct MetricsArgs {
    #[arg(long)]
    topology: PathBuf,
}

#[derive(Clone, Copy, ValueEnum)]
enum Baseline {
    Sap,
    Ls,
}

#[derive(Args)]
struct BaselineArgs {
    #[arg(value_enum)]
    kind: Baseline,
    #[command(flatten)]
    instance: InstanceArgs,
    #[arg(long)]
    budget: Option<f64>,
}

struct Ctx {
    seed: u64,
    settings: Settings,
    out: PathBuf,
}

impl Ctx {
    fn env(&self) -> EnvConfig {
        let d = EnvConfig::default();
        EnvConfig {
            critical_fraction: self.settings.critical_fraction.unwrap_or(d.critical_fraction),
            top_links: self.settings.top_links.unwrap_or(d.top_links),
        }
    }

    fn budget(&self, flag: Option<f64>) -> Result<SearchBudget> {
        let s = flag.or(self.settings.ls_budget_seconds).unwrap_or(10.0);
        if !(s.is_finite() && s >= 0.0) {
            bail!("budget must be a nonnegative number of seconds");
        }
        Ok(SearchBudget::seconds(s))
    }

    fn out_dir(&self) -> Result<&Path> {
        std::fs::create_dir_all(&self.out)
            .with_context(|| format!("creating {}", self.out.display()))?;
        Ok(&self.out)
    }
}

fn read(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))
}

fn load_topology(path: &Path) -> Result<Topology> {
    let text = read(path)?;
    let topo = if path.extension().is_some_and(|e| e == "graphml") {
        parse_graphml(&text, &GraphmlOptions::default())
    } else {
        parse_topology(&text, &ParseOptions::default())
    };
    topo.with_context(|| format!("parsing {}", path.display()))
}

fn stem(path: &Path) -> String {
    path.file_stem()
        .and_then(|s| s.to_str())
        .unwrap_or("topology")
        .to_string()
}

fn load_instance(args: &InstanceArgs) -> Result<(Arc<Network>, Arc<TrafficMatrix>)> {
    let net = Network::new(stem(&args.topology), load_topology(&args.topology)?);
    let tm = TrafficMatrix::parse(&read(&args.tm)?)
        .with_context(|| format!("parsing {}", args.tm.display()))?;
    if tm.num_nodes() != net.num_nodes() {
        bail!(
            "traffic matrix has {} nodes, topology {}",
            tm.num_nodes(),
            net.num_nodes()
        );
    }
    Ok((net, Arc::new(tm)))
}

fn train(ctx: &Ctx, args: &TrainArgs) -> Result<()> {
    let mut cfg = ctx.settings.train_config()?;
    if let Some(e) = args.episodes {
        cfg.episodes = e;
    }
    let opts = DatasetOptions {
        tms_per_topology: args.train_tms + args.eval_tms,
        target_maxu: args.target_maxu,
        seed: ctx.seed,
        ..Default::default()
    };
    let mut topologies = Vec::new();
    for path in &args.topologies {
        let entry = load_dataset_entry(path, &opts).with_context(|| format!("loading {}", path.display()))?;
        if entry.tms.len() <= args.train_tms {
            bail!("{}: need more than {} TMs", path.display(), args.train_tms);
        }
        let (train, eval) = entry.tms.split_at(args.train_tms);
        topologies.push(TrainTopology {
            network: entry.network,
            train_tms: train.to_vec(),
            eval_tms: eval.to_vec(),
        });
    }
    let names: Vec<String> = topologies.iter().map(|t| t.network.name.clone()).collect();
    let out = ctx.out_dir()?;
    let ckpt_dir = out.join("checkpoints");
    std::fs::create_dir_all(&ckpt_dir)?;

    let episodes = cfg.episodes;
    let mut trainer = Trainer::new(topologies, cfg.clone(), ctx.seed)?;
    let mut best_episode = None;
    for _ in 0..episodes {
        let row = trainer.run_episode()?;
        if let Some(eval) = &row.eval_maxu {
            log::info!("episode {}: reward {:.4}, eval maxU {:?}", row.episode, row.mean_reward, eval);
            let path = ckpt_dir.join(format!("episode_{:05}.ckpt", row.episode));
            save_checkpoint(&path, trainer.params(), &cfg, row.episode)?;
            if let Some((score, ep, params)) = trainer.best() {
                if best_episode != Some(ep) {
                    save_checkpoint(&out.join("best.ckpt"), params, &cfg, ep)?;
                    std::fs::write(
                        out.join("best.txt"),
                        format!("episode {ep}\nscore {score}\ncheckpoint checkpoints/episode_{ep:05}.ckpt\n"),
                    )?;
                    best_episode = Some(ep);
                }
            }
        }
        write_train_log(std::fs::File::create(out.join("train_log.csv"))?, &names, trainer.log())?;
    }
    if best_episode.is_none() {
        save_checkpoint(&out.join("best.ckpt"), trainer.params(), &cfg, trainer.episode())?;
    }
    println!(
        "trained {} episodes; best checkpoint {}",
        trainer.episode(),
        out.join("best.ckpt").display()
    );
    Ok(())
}

fn optimize(ctx: &Ctx, args: &OptimizeArgs) -> Result<()> {
    let (net, tm) = load_instance(&args.instance)?;
    let (params, _, _) = load_checkpoint(&args.checkpoint)?;
    let report = enero_optimize(&net, &tm, &params, &ctx.env(), &ctx.budget(args.budget)?)?;
    let out = ctx.out_dir()?;
    report.write_to(out)?;
    let mut points = vec![TracePoint {
        elapsed_ms: 0.0,
        maxu: report.initial_maxu,
        phase: Phase::Initial,
    }];
    let steps = report.drl_trace.len().max(1) as f64;
    points.extend(report.drl_trace.iter().enumerate().map(|(i, s)| TracePoint {
        elapsed_ms: report.drl_ms * (i + 1) as f64 / steps,
        maxu: s.maxu,
        phase: Phase::Drl,
    }));
    points.extend(report.ls_trace.iter().map(|s| TracePoint {
        elapsed_ms: report.drl_ms + s.elapsed_ms,
        maxu: s.maxu,
        phase: Phase::Ls,
    }));
    plot_time_series(&out.join("trajectory.svg"), &net.name, &[("enero".into(), points)])?;
    print!("{}", report.to_text());
    Ok(())
}

fn evaluate(args: &EvaluateArgs) -> Result<()> {
    let (net, tm) = load_instance(&args.instance)?;
    let u = evaluate_stored(&net, &tm, &read(&args.routing)?)?;
    println!("{u}");
    Ok(())
}

fn gen_tm(ctx: &Ctx, args: &GenTmArgs) -> Result<()> {
    let net = Network::new(stem(&args.topology), load_topology(&args.topology)?);
    let scale = match args.scale {
        Some(s) => s,
        None => calibrate_scale(&net.topology, &net.paths, ctx.seed, 10, args.target_maxu),
    };
    let out = ctx.out_dir()?;
    for i in 0..args.n {
        let tm = generate_tm(&net.topology, ctx.seed.wrapping_mul(1_000_003).wrapping_add(i as u64), scale)?;
        std::fs::write(out.join(format!("tm_{i:04}.tm")), tm.to_text())?;
    }
    println!("wrote {} TMs (scale {scale}) to {}", args.n, out.display());
    Ok(())
}

fn gen_failures_cmd(ctx: &Ctx, args: &GenFailuresArgs) -> Result<()> {
    let topo = load_topology(&args.topology)?;
    let variants = gen_failures(&topo, args.k, args.count, ctx.seed)?;
    let out = ctx.out_dir()?;
    let name = stem(&args.topology);
    let mut index = String::from("file,removed\n");
    for (i, v) in variants.iter().enumerate() {
        let file = format!("{name}_k{}_v{i:02}.topo", args.k);
        std::fs::write(out.join(&file), v.topology.to_topo_string())?;
        let removed: Vec<String> = v.removed.iter().map(|(a, b)| format!("{a}-{b}")).collect();
        index.push_str(&format!("{file},{}\n", removed.join(" ")));
    }
    std::fs::write(out.join("failures.csv"), index)?;
    println!("wrote {} variants to {}", variants.len(), out.display());
    Ok(())
}

fn sweep(ctx: &Ctx, args: &SweepArgs) -> Result<()> {
    let methods: Vec<Method> = args
        .methods
        .iter()
        .map(|m| m.parse())
        .collect::<std::result::Result<_, _>>()?;
    let params = match &args.checkpoint {
        Some(p) => Some(Arc::new(load_checkpoint(p)?.0)),
        None if methods.iter().any(|m| m.needs_policy()) => {
            bail!("methods drl/enero need --checkpoint")
        }
        None => None,
    };
    let out = ctx.out_dir()?.to_path_buf();
    let mut run_ctx = RunContext::new(params, ctx.budget(args.budget)?);
    run_ctx.env = ctx.env();
    run_ctx.out_dir = Some(out.clone());
    let opts = DatasetOptions {
        tms_per_topology: args.tms,
        target_maxu: args.target_maxu,
        seed: ctx.seed,
        ..Default::default()
    };
    let result = run_sweep(&args.dataset, &methods, &opts, &run_ctx)?;
    write_results_csv(std::fs::File::create(out.join("results.csv"))?, &result.records)?;

    let relative = result.relative_to_ls();
    let mut rel = String::from("topology,method,relative_to_ls\n");
    for ((topo, m), v) in &relative {
        rel.push_str(&format!("{topo},{m},{v}\n"));
    }
    std::fs::write(out.join("relative.csv"), rel)?;
    let mut errs = String::from("instance,error\n");
    for (id, e) in &result.errors {
        errs.push_str(&format!("{id},{}\n", e.replace(',', ";")));
    }
    std::fs::write(out.join("errors.csv"), errs)?;

    if methods.contains(&Method::Ls) {
        let samples: Vec<(String, Vec<f64>)> = methods
            .iter()
            .map(|&m| {
                let v = relative
                    .iter()
                    .filter(|((_, mm), _)| *mm == m)
                    .map(|(_, &v)| v)
                    .collect();
                (m.to_string(), v)
            })
            .collect();
        plot_cdf(&out.join("relative_cdf.svg"), "final maxU relative to LS", "ratio", &samples)?;
    }
    println!(
        "{} runs, {} errors; results in {}",
        result.records.len(),
        result.errors.len(),
        out.join("results.csv").display()
    );
    Ok(())
}

fn metrics(args: &MetricsArgs) -> Result<()> {
    let topo = load_topology(&args.topology)?;
    let m = compute_metrics(&topo);
    println!("nodes {} edges {}", topo.num_nodes(), topo.num_edges());
    println!(
        "node_degree min {} max {} mean {:.4}",
        m.node_degree.min, m.node_degree.max, m.node_degree.mean
    );
    println!(
        "edge_betweenness min {:.6} max {:.6} mean {:.6}",
        m.edge_betweenness.min, m.edge_betweenness.max, m.edge_betweenness.mean
    );
    Ok(())
}

fn baseline(ctx: &Ctx, args: &BaselineArgs) -> Result<()> {
    let (net, tm) = load_instance(&args.instance)?;
    let out = ctx.out_dir()?;
    let maxu = match args.kind {
        Baseline::Sap => {
            let sap = sap_route(&net.topology, &tm)?;
            std::fs::write(out.join("sap_paths.csv"), sap.to_csv())?;
            sap.maxu
        }
        Baseline::Ls => {
            let res = ls_baseline(&net, &tm, &ctx.env(), &ctx.budget(args.budget)?)?;
            std::fs::write(out.join("ls_config.csv"), res.config.to_csv())?;
            write_search_trace(std::fs::File::create(out.join("ls_trace.csv"))?, &res.trace)?;
            res.maxu
        }
    };
    println!("{maxu}");
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    let settings = match &cli.config {
        Some(p) => Settings::load(p)?,
        None => Settings::default(),
    };
    let ctx = Ctx {
        seed: cli.seed.or(settings.seed).unwrap_or(0),
        settings,
        out: cli.out,
    };
    match &cli.command {
        Command::Train(a) => train(&ctx, a),
        Command::Optimize(a) => optimize(&ctx, a),
        Command::Evaluate(a) => evaluate(a),
        Command::GenTm(a) => gen_tm(&ctx, a),
        Command::GenFailures(a) => gen_failures_cmd(&ctx, a),
        Command::Sweep(a) => sweep(&ctx, a),
        Command::Metrics(a) => metrics(a),
        Command::Baseline(a) => baseline(&ctx, a),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    // clap exits with status 2 on usage errors
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
