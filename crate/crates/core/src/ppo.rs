//! Actor-critic PPO training of the GNN policy.
//!
//! One training episode runs one rollout per training topology with a random
//! training TM, estimates advantages with GAE, and then performs several
//! epochs of clipped-surrogate updates over shuffled minibatches. Gradients
//! are clipped by global norm and applied with Adam.

use std::io::Write;
use std::sync::Arc;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::env::{ActionGraph, EnvConfig, EnvState, TraceRecord};
use crate::error::{Error, Result};
use crate::gnn::{self, ActionDistribution, GnnNet, PolicyParams};
use crate::network::Network;
use crate::routing::{Midpoint, RoutingConfig};
use crate::traffic::TrafficMatrix;

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub episodes: usize,
    pub epochs: usize,
    pub minibatch: usize,
    pub learning_rate: f64,
    pub lr_decay_rate: f64,
    /// Episodes between learning-rate decays.
    pub lr_decay_steps: usize,
    pub entropy_beta: f64,
    pub entropy_beta_after: f64,
    /// Last episode (1-based) that uses `entropy_beta`.
    pub entropy_switch_episode: usize,
    pub gamma: f64,
    pub lambda: f64,
    pub grad_clip: f64,
    pub actor_l2: f64,
    pub clip_epsilon: f64,
    pub normalize_advantages: bool,
    /// Held-out TMs evaluated per topology in each validation round.
    pub eval_episodes: usize,
    /// Episodes between validation rounds; 0 disables validation.
    pub eval_every: usize,
    pub hidden_state: usize,
    pub readout_units: usize,
    pub message_steps: usize,
    pub env: EnvConfig,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            episodes: 200,
            epochs: 8,
            minibatch: 55,
            learning_rate: 2e-4,
            lr_decay_rate: 0.96,
            lr_decay_steps: 60,
            entropy_beta: 0.01,
            entropy_beta_after: 0.001,
            entropy_switch_episode: 60,
            gamma: 0.99,
            lambda: 0.95,
            grad_clip: 0.5,
            actor_l2: 1e-4,
            clip_epsilon: 0.2,
            normalize_advantages: true,
            eval_episodes: 20,
            eval_every: 10,
            hidden_state: gnn::HIDDEN_STATE,
            readout_units: gnn::READOUT_UNITS,
            message_steps: gnn::MESSAGE_STEPS,
            env: EnvConfig::default(),
        }
    }
}

impl TrainConfig {
    /// Staircase decay, `episode` counted from 1.
    pub fn learning_rate_at(&self, episode: usize) -> f64 {
        let decays = episode.saturating_sub(1) / self.lr_decay_steps.max(1);
        self.learning_rate * self.lr_decay_rate.powi(decays as i32)
    }

    pub fn entropy_beta_at(&self, episode: usize) -> f64 {
        if episode <= self.entropy_switch_episode {
            self.entropy_beta
        } else {
            self.entropy_beta_after
        }
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("learning_rate", self.learning_rate),
            ("lr_decay_rate", self.lr_decay_rate),
            ("entropy_beta", self.entropy_beta),
            ("entropy_beta_after", self.entropy_beta_after),
            ("gamma", self.gamma),
            ("lambda", self.lambda),
            ("grad_clip", self.grad_clip),
            ("clip_epsilon", self.clip_epsilon),
        ];
        for (name, v) in positive {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::Config(format!("{name} must be positive, got {v}")));
            }
        }
        if self.actor_l2 < 0.0 {
            return Err(Error::Config("actor_l2 must be nonnegative".into()));
        }
        if self.epochs == 0 || self.minibatch == 0 || self.lr_decay_steps == 0 {
            return Err(Error::Config(
                "epochs, minibatch and lr_decay_steps must be positive".into(),
            ));
        }
        if !(self.env.critical_fraction > 0.0 && self.env.critical_fraction <= 1.0) {
            return Err(Error::Config("critical fraction must be in (0, 1]".into()));
        }
        if self.env.top_links == 0 {
            return Err(Error::Config("top_links must be at least 1".into()));
        }
        if self.hidden_state < crate::env::NUM_FEATURES {
            return Err(Error::Config("hidden state too small for the link features".into()));
        }
        Ok(())
    }

    pub fn init_params<R: Rng + ?Sized>(&self, rng: &mut R) -> PolicyParams {
        PolicyParams::init_with(self.hidden_state, self.readout_units, self.message_steps, rng)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    /// Sample actions from the policy.
    Train,
    /// Take the most probable action.
    Eval,
}

/// Everything needed to re-evaluate one decision under new parameters.
#[derive(Debug, Clone)]
pub struct Transition {
    pub network: Arc<Network>,
    pub candidates: Vec<ActionGraph>,
    pub midpoints: Vec<Midpoint>,
    pub state: ActionGraph,
    pub probabilities: Vec<f64>,
    pub value: f64,
    pub action: usize,
    pub reward: f64,
    pub done: bool,
}

#[derive(Debug, Clone)]
pub struct Episode {
    pub transitions: Vec<Transition>,
    /// Critic value of the state reached after the last step.
    pub bootstrap_value: f64,
    pub initial_maxu: f64,
    pub final_maxu: f64,
    pub best_maxu: f64,
    pub best_config: RoutingConfig,
    pub trace: Vec<TraceRecord>,
}

impl Episode {
    pub fn total_reward(&self) -> f64 {
        self.transitions.iter().map(|t| t.reward).sum()
    }
}

/// Runs one episode from the OSPF routing.
pub fn collect_episode<R: Rng + ?Sized>(
    net: &Arc<Network>,
    tm: &Arc<TrafficMatrix>,
    params: &PolicyParams,
    env_cfg: &EnvConfig,
    mode: Mode,
    rng: &mut R,
) -> Result<Episode> {
    let mut env = EnvState::reset(net.clone(), tm.clone(), env_cfg)?;
    let mut transitions = Vec::with_capacity(env.critical().len());
    let mut trace = Vec::with_capacity(env.critical().len());
    while let Some(demand) = env.current_demand() {
        let (midpoints, candidates): (Vec<Midpoint>, Vec<ActionGraph>) =
            env.candidate_actions().into_iter().unzip();
        let dist = gnn::score_actions(&env, &candidates, params);
        let value = gnn::critic_value(&env, params);
        let action = match mode {
            Mode::Train => sample(&dist, rng),
            Mode::Eval => dist.argmax(),
        };
        let state = env.state_graph();
        let step = env.step(midpoints[action])?;
        trace.push(TraceRecord {
            step: trace.len(),
            demand,
            midpoint: midpoints[action],
            reward: step.reward,
            maxu: env.maxu(),
        });
        transitions.push(Transition {
            network: net.clone(),
            candidates,
            midpoints,
            state,
            probabilities: dist.probabilities,
            value,
            action,
            reward: step.reward,
            done: step.done,
        });
    }
    let (best_config, best_maxu) = env.best_result();
    Ok(Episode {
        transitions,
        bootstrap_value: gnn::critic_value(&env, params),
        initial_maxu: env.initial_maxu(),
        final_maxu: env.maxu(),
        best_maxu,
        best_config,
        trace,
    })
}

/// Greedy pass over the critical demands of `env`, without the critic.
/// Returns the per-step trace; the best configuration stays in `env`.
pub fn greedy_rollout(env: &mut EnvState, params: &PolicyParams) -> Result<Vec<TraceRecord>> {
    let mut trace = Vec::with_capacity(env.critical().len());
    while let Some(demand) = env.current_demand() {
        let (midpoints, candidates): (Vec<Midpoint>, Vec<ActionGraph>) =
            env.candidate_actions().into_iter().unzip();
        let dist = gnn::score_actions(env, &candidates, params);
        if dist.logits.iter().any(|z| !z.is_finite()) {
            return Err(Error::NonFinite {
                episode: 0,
                detail: format!("policy logits {:?}", dist.logits),
            });
        }
        let action = dist.argmax();
        let step = env.step(midpoints[action])?;
        trace.push(TraceRecord {
            step: trace.len(),
            demand,
            midpoint: midpoints[action],
            reward: step.reward,
            maxu: env.maxu(),
        });
    }
    Ok(trace)
}

fn sample<R: Rng + ?Sized>(dist: &ActionDistribution, rng: &mut R) -> usize {
    let u: f64 = rng.gen();
    let mut acc = 0.0;
    for (i, p) in dist.probabilities.iter().enumerate() {
        acc += p;
        if u < acc {
            return i;
        }
    }
    dist.probabilities.len() - 1
}

/// Generalized advantage estimation. `values` holds one entry per step plus
/// the bootstrap value of the state after the last step. A `done` step cuts
/// the bootstrap and the advantage recursion.
pub fn compute_gae(
    values: &[f64],
    rewards: &[f64],
    dones: &[bool],
    gamma: f64,
    lambda: f64,
) -> Result<(Vec<f64>, Vec<f64>)> {
    let n = rewards.len();
    if values.len() != n + 1 || dones.len() != n {
        return Err(Error::Shape(format!(
            "{} values, {} rewards, {} dones (want n+1, n, n)",
            values.len(),
            n,
            dones.len()
        )));
    }
    let mut advantages = vec![0.0; n];
    let mut gae = 0.0;
    for t in (0..n).rev() {
        let live = if dones[t] { 0.0 } else { 1.0 };
        let delta = rewards[t] + gamma * values[t + 1] * live - values[t];
        gae = delta + gamma * lambda * live * gae;
        advantages[t] = gae;
    }
    let returns = advantages.iter().zip(values).map(|(a, v)| a + v).collect();
    Ok((returns, advantages))
}

/// A transition with its advantage and return target.
#[derive(Debug, Clone)]
pub struct Sample {
    pub transition: Transition,
    pub advantage: f64,
    pub ret: f64,
}

/// Builds samples from an episode's transitions.
pub fn episode_samples(episode: &Episode, gamma: f64, lambda: f64) -> Result<Vec<Sample>> {
    let mut values: Vec<f64> = episode.transitions.iter().map(|t| t.value).collect();
    values.push(episode.bootstrap_value);
    let rewards: Vec<f64> = episode.transitions.iter().map(|t| t.reward).collect();
    let dones: Vec<bool> = episode.transitions.iter().map(|t| t.done).collect();
    let (returns, advantages) = compute_gae(&values, &rewards, &dones, gamma, lambda)?;
    Ok(episode
        .transitions
        .iter()
        .cloned()
        .zip(advantages.into_iter().zip(returns))
        .map(|(transition, (advantage, ret))| Sample {
            transition,
            advantage,
            ret,
        })
        .collect())
}

/// Zero mean, unit variance in place. No-op for fewer than two samples or
/// zero spread.
pub fn normalize_advantages(samples: &mut [Sample]) {
    if samples.len() < 2 {
        return;
    }
    let n = samples.len() as f64;
    let mean = samples.iter().map(|s| s.advantage).sum::<f64>() / n;
    let var = samples
        .iter()
        .map(|s| (s.advantage - mean).powi(2))
        .sum::<f64>()
        / n;
    let std = var.sqrt();
    if std > 1e-12 {
        samples
            .iter_mut()
            .for_each(|s| s.advantage = (s.advantage - mean) / std);
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossConfig {
    pub clip_epsilon: f64,
    pub actor_l2: f64,
    pub entropy_beta: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Losses {
    /// Clipped surrogate loss plus the actor L2 penalty.
    pub actor: f64,
    pub critic: f64,
    /// Mean policy entropy (before the beta factor).
    pub entropy: f64,
    /// `actor + critic - beta * entropy`.
    pub total: f64,
}

impl Losses {
    pub fn is_finite(&self) -> bool {
        self.actor.is_finite()
            && self.critic.is_finite()
            && self.entropy.is_finite()
            && self.total.is_finite()
    }
}

// Per-sample terms and d(term)/d(logit).
struct ActorTerms {
    surrogate: f64,
    entropy: f64,
    d_surrogate: Vec<f64>,
    d_entropy: Vec<f64>,
}

fn actor_terms(logits: Vec<f64>, s: &Sample, clip: f64) -> ActorTerms {
    let dist = ActionDistribution::from_logits(logits);
    let p = &dist.probabilities;
    let a = s.transition.action;
    let ratio = p[a] / s.transition.probabilities[a];
    let adv = s.advantage;
    let unclipped = ratio * adv;
    let clipped = ratio.clamp(1.0 - clip, 1.0 + clip) * adv;
    let surrogate = unclipped.min(clipped);
    // the gradient flows only through the unclipped branch when it is the
    // active minimum
    let d_ratio = if unclipped <= clipped { adv } else { 0.0 };
    let d_surrogate = p
        .iter()
        .enumerate()
        .map(|(c, &pc)| d_ratio * ratio * (if c == a { 1.0 } else { 0.0 } - pc))
        .collect();
    let entropy = dist.entropy();
    let d_entropy = p
        .iter()
        .map(|&pc| if pc > 0.0 { -pc * (pc.ln() + entropy) } else { 0.0 })
        .collect();
    ActorTerms {
        surrogate,
        entropy,
        d_surrogate,
        d_entropy,
    }
}

fn actor_logits(params: &PolicyParams, t: &Transition) -> Vec<f64> {
    let g = &t.network.link_graph;
    t.candidates
        .iter()
        .map(|c| params.actor.evaluate(g, &c.features, params.message_steps))
        .collect()
}

/// Losses of a minibatch under `params`.
pub fn ppo_losses(batch: &[Sample], params: &PolicyParams, cfg: &LossConfig) -> Losses {
    let b = batch.len() as f64;
    let mut surrogate = 0.0;
    let mut entropy = 0.0;
    let mut critic = 0.0;
    for s in batch {
        let terms = actor_terms(actor_logits(params, &s.transition), s, cfg.clip_epsilon);
        surrogate += terms.surrogate;
        entropy += terms.entropy;
        let t = &s.transition;
        let v = params
            .critic
            .evaluate(&t.network.link_graph, &t.state.features, params.message_steps);
        critic += (s.ret - v).powi(2);
    }
    finish_losses(surrogate / b, critic / b, entropy / b, params, cfg)
}

fn finish_losses(
    mean_surrogate: f64,
    critic: f64,
    entropy: f64,
    params: &PolicyParams,
    cfg: &LossConfig,
) -> Losses {
    let actor = -mean_surrogate + cfg.actor_l2 * params.actor_weight_sq_norm();
    Losses {
        actor,
        critic,
        entropy,
        total: actor + critic - cfg.entropy_beta * entropy,
    }
}

/// Losses and exact gradients of `total` with respect to every parameter.
/// Each sample is taped, back-propagated and dropped before the next.
pub fn ppo_gradients(
    batch: &[Sample],
    params: &PolicyParams,
    cfg: &LossConfig,
) -> (Losses, PolicyParams) {
    let b = batch.len() as f64;
    let steps = params.message_steps;
    let mut grads = params.zeros_like();
    let (mut surrogate, mut entropy, mut critic) = (0.0, 0.0, 0.0);
    for s in batch {
        let t = &s.transition;
        let g = &t.network.link_graph;
        let tapes: Vec<_> = t
            .candidates
            .iter()
            .map(|c| params.actor.forward(g, &c.features, steps))
            .collect();
        let terms = actor_terms(
            tapes.iter().map(|tp| tp.output).collect(),
            s,
            cfg.clip_epsilon,
        );
        surrogate += terms.surrogate;
        entropy += terms.entropy;
        for (c, tape) in tapes.iter().enumerate() {
            let d = -(terms.d_surrogate[c] + cfg.entropy_beta * terms.d_entropy[c]) / b;
            params.actor.backward(g, tape, d, &mut grads.actor);
        }

        let tape = params.critic.forward(g, &t.state.features, steps);
        let err = s.ret - tape.output;
        critic += err * err;
        params
            .critic
            .backward(g, &tape, -2.0 * err / b, &mut grads.critic);
    }
    if cfg.actor_l2 > 0.0 {
        add_l2_grad(&mut grads.actor, &params.actor, cfg.actor_l2);
    }
    (
        finish_losses(surrogate / b, critic / b, entropy / b, params, cfg),
        grads,
    )
}

fn add_l2_grad(grads: &mut GnnNet, weights: &GnnNet, coeff: f64) {
    for ((_, g), (_, w)) in grads.layers_mut().into_iter().zip(weights.layers()) {
        for (gv, wv) in g.weight.iter_mut().zip(&w.weight) {
            *gv += 2.0 * coeff * wv;
        }
    }
}

/// Rescales `grads` so its global norm is at most `max_norm`. Returns the
/// norm before clipping.
pub fn clip_global_norm(grads: &mut PolicyParams, max_norm: f64) -> f64 {
    let norm = grads.global_norm();
    if norm > max_norm {
        grads.scale(max_norm / norm);
    }
    norm
}

#[derive(Debug, Clone)]
pub struct Adam {
    beta1: f64,
    beta2: f64,
    eps: f64,
    step: i32,
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
}

impl Adam {
    pub fn new(params: &PolicyParams) -> Self {
        let zeros: Vec<Vec<f64>> = params
            .tensors()
            .iter()
            .map(|t| vec![0.0; t.2.len()])
            .collect();
        Self {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            step: 0,
            m: zeros.clone(),
            v: zeros,
        }
    }

    pub fn apply(&mut self, params: &mut PolicyParams, grads: &PolicyParams, lr: f64) {
        self.step += 1;
        let c1 = 1.0 - self.beta1.powi(self.step);
        let c2 = 1.0 - self.beta2.powi(self.step);
        let grads = grads.tensors();
        for (i, w) in params.tensors_mut().into_iter().enumerate() {
            let g = grads[i].2;
            let (m, v) = (&mut self.m[i], &mut self.v[i]);
            for k in 0..w.len() {
                m[k] = self.beta1 * m[k] + (1.0 - self.beta1) * g[k];
                v[k] = self.beta2 * v[k] + (1.0 - self.beta2) * g[k] * g[k];
                w[k] -= lr * (m[k] / c1) / ((v[k] / c2).sqrt() + self.eps);
            }
        }
    }
}

/// A training topology with its train / held-out traffic matrices.
#[derive(Debug, Clone)]
pub struct TrainTopology {
    pub network: Arc<Network>,
    pub train_tms: Vec<Arc<TrafficMatrix>>,
    pub eval_tms: Vec<Arc<TrafficMatrix>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainLogRow {
    pub episode: usize,
    /// Mean total episode reward over this round's rollouts.
    pub mean_reward: f64,
    /// Mean post-DRL max utilization on held-out TMs, per topology, when
    /// validated this episode.
    pub eval_maxu: Option<Vec<f64>>,
    pub learning_rate: f64,
    pub entropy_beta: f64,
    /// Losses averaged over the minibatches of the last epoch.
    pub losses: Losses,
}

pub struct TrainOutcome {
    pub params: PolicyParams,
    pub best_params: PolicyParams,
    pub best_episode: usize,
    pub log: Vec<TrainLogRow>,
}

/// Episode-by-episode trainer.
pub struct Trainer {
    cfg: TrainConfig,
    topologies: Vec<TrainTopology>,
    params: PolicyParams,
    adam: Adam,
    rng: ChaCha8Rng,
    episode: usize,
    best: Option<(f64, usize, PolicyParams)>,
    log: Vec<TrainLogRow>,
}

impl Trainer {
    pub fn new(topologies: Vec<TrainTopology>, cfg: TrainConfig, seed: u64) -> Result<Self> {
        cfg.validate()?;
        if topologies.is_empty() {
            return Err(Error::Config("need at least one training topology".into()));
        }
        if let Some(t) = topologies.iter().find(|t| t.train_tms.is_empty()) {
            return Err(Error::Config(format!(
                "topology {} has no training TMs",
                t.network.name
            )));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let params = cfg.init_params(&mut rng);
        Ok(Self::with_params(topologies, cfg, params, rng))
    }

    /// Continues from existing parameters.
    pub fn resume(
        topologies: Vec<TrainTopology>,
        cfg: TrainConfig,
        params: PolicyParams,
        seed: u64,
    ) -> Result<Self> {
        cfg.validate()?;
        Ok(Self::with_params(
            topologies,
            cfg,
            params,
            ChaCha8Rng::seed_from_u64(seed),
        ))
    }

    fn with_params(
        topologies: Vec<TrainTopology>,
        cfg: TrainConfig,
        params: PolicyParams,
        rng: ChaCha8Rng,
    ) -> Self {
        Self {
            adam: Adam::new(&params),
            cfg,
            topologies,
            params,
            rng,
            episode: 0,
            best: None,
            log: Vec::new(),
        }
    }

    pub fn params(&self) -> &PolicyParams {
        &self.params
    }

    pub fn config(&self) -> &TrainConfig {
        &self.cfg
    }

    pub fn episode(&self) -> usize {
        self.episode
    }

    pub fn log(&self) -> &[TrainLogRow] {
        &self.log
    }

    /// Best validated parameters so far: `(score, episode, params)`, where
    /// score is the mean ratio of post-DRL to OSPF max utilization.
    pub fn best(&self) -> Option<(f64, usize, &PolicyParams)> {
        self.best.as_ref().map(|(s, e, p)| (*s, *e, p))
    }

    /// Mean post-DRL max utilization per topology and the mean ratio to
    /// the OSPF starting point, over the first `eval_episodes` held-out TMs.
    pub fn validate(&self) -> Result<(Vec<f64>, f64)> {
        let mut per_topology = Vec::with_capacity(self.topologies.len());
        let mut ratios = Vec::new();
        for topo in &self.topologies {
            let tms = &topo.eval_tms[..self.cfg.eval_episodes.min(topo.eval_tms.len())];
            let mut sum = 0.0;
            for tm in tms {
                let mut env = EnvState::reset(topo.network.clone(), tm.clone(), &self.cfg.env)?;
                greedy_rollout(&mut env, &self.params)?;
                sum += env.best_maxu();
                if env.initial_maxu() > 0.0 {
                    ratios.push(env.best_maxu() / env.initial_maxu());
                }
            }
            per_topology.push(sum / tms.len().max(1) as f64);
        }
        let score = ratios.iter().sum::<f64>() / ratios.len().max(1) as f64;
        Ok((per_topology, score))
    }

    /// Runs one training episode over every topology.
    pub fn run_episode(&mut self) -> Result<TrainLogRow> {
        self.episode += 1;
        let ep = self.episode;
        let lr = self.cfg.learning_rate_at(ep);
        let beta = self.cfg.entropy_beta_at(ep);

        let mut samples = Vec::new();
        let mut reward_sum = 0.0;
        for i in 0..self.topologies.len() {
            let topo = &self.topologies[i];
            let tm = topo.train_tms[self.rng.gen_range(0..topo.train_tms.len())].clone();
            let net = topo.network.clone();
            let episode = collect_episode(
                &net,
                &tm,
                &self.params,
                &self.cfg.env,
                Mode::Train,
                &mut self.rng,
            )?;
            reward_sum += episode.total_reward();
            samples.extend(episode_samples(&episode, self.cfg.gamma, self.cfg.lambda)?);
        }
        if self.cfg.normalize_advantages {
            normalize_advantages(&mut samples);
        }

        let loss_cfg = LossConfig {
            clip_epsilon: self.cfg.clip_epsilon,
            actor_l2: self.cfg.actor_l2,
            entropy_beta: beta,
        };
        let mut order: Vec<usize> = (0..samples.len()).collect();
        let mut last_epoch = Losses::default();
        for _ in 0..self.cfg.epochs {
            order.shuffle(&mut self.rng);
            let mut acc = Losses::default();
            let mut batches = 0;
            for chunk in order.chunks(self.cfg.minibatch) {
                let batch: Vec<Sample> = chunk.iter().map(|&i| samples[i].clone()).collect();
                let (losses, mut grads) = ppo_gradients(&batch, &self.params, &loss_cfg);
                let norm = clip_global_norm(&mut grads, self.cfg.grad_clip);
                if !losses.is_finite() || !norm.is_finite() {
                    return Err(Error::NonFinite {
                        episode: ep,
                        detail: format!(
                            "losses {losses:?}, gradient norm {norm}, lr {lr}, batch of {}",
                            batch.len()
                        ),
                    });
                }
                self.adam.apply(&mut self.params, &grads, lr);
                acc.actor += losses.actor;
                acc.critic += losses.critic;
                acc.entropy += losses.entropy;
                acc.total += losses.total;
                batches += 1;
            }
            let k = batches.max(1) as f64;
            last_epoch = Losses {
                actor: acc.actor / k,
                critic: acc.critic / k,
                entropy: acc.entropy / k,
                total: acc.total / k,
            };
        }
        if !self.params.is_finite() {
            return Err(Error::NonFinite {
                episode: ep,
                detail: format!("parameters diverged; last losses {last_epoch:?}"),
            });
        }

        let mut eval_maxu = None;
        let due = self.cfg.eval_every > 0
            && (ep % self.cfg.eval_every == 0 || ep == self.cfg.episodes);
        if due {
            let (per_topology, score) = self.validate()?;
            let better = self.best.as_ref().is_none_or(|(s, _, _)| score < *s);
            if better {
                self.best = Some((score, ep, self.params.clone()));
            }
            eval_maxu = Some(per_topology);
        }
        let row = TrainLogRow {
            episode: ep,
            mean_reward: reward_sum / self.topologies.len() as f64,
            eval_maxu,
            learning_rate: lr,
            entropy_beta: beta,
            losses: last_epoch,
        };
        log::debug!(
            "episode {ep}: reward {:.4} total loss {:.4}",
            row.mean_reward,
            row.losses.total
        );
        self.log.push(row.clone());
        Ok(row)
    }

    pub fn finish(self) -> TrainOutcome {
        let (best_episode, best_params) = match self.best {
            Some((_, e, p)) => (e, p),
            None => (self.episode, self.params.clone()),
        };
        TrainOutcome {
            params: self.params,
            best_params,
            best_episode,
            log: self.log,
        }
    }
}

/// Trains for `cfg.episodes` episodes.
pub fn train(topologies: Vec<TrainTopology>, cfg: TrainConfig, seed: u64) -> Result<TrainOutcome> {
    let episodes = cfg.episodes;
    let mut trainer = Trainer::new(topologies, cfg, seed)?;
    for _ in 0..episodes {
        trainer.run_episode()?;
    }
    Ok(trainer.finish())
}

/// Per-episode CSV: `episode,mean_reward,eval_maxu_<name>...,lr,entropy_beta,
/// actor_loss,critic_loss,entropy,total_loss`. Empty eval cells for episodes
/// without validation.
pub fn write_train_log<W: Write>(
    mut out: W,
    topology_names: &[String],
    log: &[TrainLogRow],
) -> std::io::Result<()> {
    write!(out, "episode,mean_reward")?;
    for name in topology_names {
        write!(out, ",eval_maxu_{name}")?;
    }
    writeln!(out, ",lr,entropy_beta,actor_loss,critic_loss,entropy,total_loss")?;
    for row in log {
        write!(out, "{},{}", row.episode, row.mean_reward)?;
        for i in 0..topology_names.len() {
            match &row.eval_maxu {
                Some(v) => write!(out, ",{}", v[i])?,
                None => write!(out, ",")?,
            }
        }
        let l = &row.losses;
        writeln!(
            out,
            ",{},{},{},{},{},{}",
            row.learning_rate, row.entropy_beta, l.actor, l.critic, l.entropy, l.total
        )?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synthetic;
    use crate::traffic::generate_tm;

    /// `A_t = sum_l (gamma lambda)^l delta_{t+l}`, truncated at the first
    /// terminal step.
    fn gae_double_loop(values: &[f64], rewards: &[f64], dones: &[bool], g: f64, l: f64) -> Vec<f64> {
        let n = rewards.len();
        let delta = |t: usize| {
            let live = if dones[t] { 0.0 } else { 1.0 };
            rewards[t] + g * values[t + 1] * live - values[t]
        };
        (0..n)
            .map(|t| {
                let mut sum = 0.0;
                for k in t..n {
                    sum += (g * l).powi((k - t) as i32) * delta(k);
                    if dones[k] {
                        break;
                    }
                }
                sum
            })
            .collect()
    }

    #[test]
    fn gae_single_step() {
        let (ret, adv) = compute_gae(&[0.0, 0.0], &[0.15], &[true], 0.99, 0.95).unwrap();
        assert!((adv[0] - 0.15).abs() < 1e-15);
        assert!((ret[0] - 0.15).abs() < 1e-15);
    }

    #[test]
    fn gae_lambda_zero_is_td() {
        let values = [0.2, -0.1, 0.4, 0.3];
        let rewards = [0.1, 0.0, -0.2];
        let dones = [false, false, false];
        let (_, adv) = compute_gae(&values, &rewards, &dones, 0.9, 0.0).unwrap();
        for t in 0..3 {
            let td = rewards[t] + 0.9 * values[t + 1] - values[t];
            assert!((adv[t] - td).abs() < 1e-15);
        }
    }

    #[test]
    fn gae_length_five_matches_definition() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let values: Vec<f64> = (0..6).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let rewards: Vec<f64> = (0..5).map(|_| rng.gen_range(-0.5..0.5)).collect();
        let dones = [false, false, false, false, true];
        let (ret, adv) = compute_gae(&values, &rewards, &dones, 0.99, 0.95).unwrap();
        let oracle = gae_double_loop(&values, &rewards, &dones, 0.99, 0.95);
        for t in 0..5 {
            assert!((adv[t] - oracle[t]).abs() < 1e-12);
            assert!((ret[t] - (oracle[t] + values[t])).abs() < 1e-12);
        }
    }

    #[test]
    fn gae_shape_errors() {
        assert!(matches!(
            compute_gae(&[0.0], &[1.0], &[true], 0.9, 0.9),
            Err(Error::Shape(_))
        ));
        assert!(compute_gae(&[0.0, 0.0], &[1.0], &[], 0.9, 0.9).is_err());
    }

    #[test]
    fn schedules() {
        let cfg = TrainConfig::default();
        assert_eq!(cfg.entropy_beta_at(1), 0.01);
        assert_eq!(cfg.entropy_beta_at(60), 0.01);
        assert_eq!(cfg.entropy_beta_at(61), 0.001);
        assert_eq!(cfg.learning_rate_at(1), 2e-4);
        assert_eq!(cfg.learning_rate_at(60), 2e-4);
        assert!((cfg.learning_rate_at(61) - 2e-4 * 0.96).abs() < 1e-18);
        let mut prev = f64::INFINITY;
        let mut switches = 0;
        for ep in 1..500 {
            let lr = cfg.learning_rate_at(ep);
            assert!(lr <= prev);
            prev = lr;
            if cfg.entropy_beta_at(ep) != cfg.entropy_beta_at(ep + 1) {
                switches += 1;
            }
        }
        assert_eq!(switches, 1);
    }

    fn small_setup() -> (Arc<Network>, Arc<TrafficMatrix>) {
        let net = Network::new("t", synthetic::random_connected(6, 9, &[10.0, 40.0], 3));
        let tm = Arc::new(generate_tm(&net.topology, 1, 6.0).unwrap());
        (net, tm)
    }

    #[test]
    fn eval_episode_is_deterministic() {
        let (net, tm) = small_setup();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let params = PolicyParams::init(&mut rng);
        let cfg = EnvConfig::default();
        let a = collect_episode(&net, &tm, &params, &cfg, Mode::Eval, &mut rng).unwrap();
        let b = collect_episode(&net, &tm, &params, &cfg, Mode::Eval, &mut rng).unwrap();
        assert_eq!(a.trace, b.trace);
        assert_eq!(a.best_config, b.best_config);
        let env = EnvState::reset(net.clone(), tm.clone(), &cfg).unwrap();
        assert_eq!(a.transitions.len(), env.critical().len());
        assert!(a.transitions.last().unwrap().done);
        for t in &a.transitions {
            assert!((t.probabilities.iter().sum::<f64>() - 1.0).abs() < 1e-9);
        }
        let mut env = env;
        greedy_rollout(&mut env, &params).unwrap();
        assert_eq!(env.best_maxu(), a.best_maxu);
    }

    #[test]
    fn sampling_frequencies_match_probabilities() {
        let dist = ActionDistribution::from_logits(vec![0.4, -0.3]);
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let n = 10_000;
        let hits = (0..n).filter(|_| sample(&dist, &mut rng) == 0).count();
        let freq = hits as f64 / n as f64;
        assert!((freq - dist.probabilities[0]).abs() < 0.02, "{freq}");
    }

    fn samples_for(params: &PolicyParams, seed: u64) -> Vec<Sample> {
        let (net, tm) = small_setup();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let ep = collect_episode(&net, &tm, params, &EnvConfig::default(), Mode::Train, &mut rng)
            .unwrap();
        let mut s = episode_samples(&ep, 0.99, 0.95).unwrap();
        normalize_advantages(&mut s);
        s
    }

    #[test]
    fn ratio_one_surrogate_is_negative_mean_advantage() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let params = PolicyParams::init(&mut rng);
        let batch = samples_for(&params, 2);
        let cfg = LossConfig {
            clip_epsilon: 0.2,
            actor_l2: 0.0,
            entropy_beta: 0.0,
        };
        let l = ppo_losses(&batch, &params, &cfg);
        let mean_adv = batch.iter().map(|s| s.advantage).sum::<f64>() / batch.len() as f64;
        assert!((l.actor + mean_adv).abs() < 1e-12);
    }

    #[test]
    fn perfect_critic_has_zero_loss() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let params = PolicyParams::init(&mut rng);
        let mut batch = samples_for(&params, 3);
        for s in &mut batch {
            let t = &s.transition;
            s.ret = params
                .critic
                .evaluate(&t.network.link_graph, &t.state.features, params.message_steps);
        }
        let l = ppo_losses(
            &batch,
            &params,
            &LossConfig {
                clip_epsilon: 0.2,
                actor_l2: 0.0,
                entropy_beta: 0.01,
            },
        );
        assert_eq!(l.critic, 0.0);
    }

    #[test]
    fn clipping_inactive_inside_trust_region() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let params = PolicyParams::init(&mut rng);
        let batch = samples_for(&params, 6);
        // nudge the actor so ratios move off 1 but stay well inside the clip range
        let mut moved = params.clone();
        for w in moved.actor.readout_out.weight.iter_mut() {
            *w *= 1.05;
        }
        let clipped = ppo_losses(
            &batch,
            &moved,
            &LossConfig {
                clip_epsilon: 0.2,
                actor_l2: 0.0,
                entropy_beta: 0.0,
            },
        );
        // unclipped surrogate computed directly
        let mut sum = 0.0;
        for s in &batch {
            let d = ActionDistribution::from_logits(actor_logits(&moved, &s.transition));
            let a = s.transition.action;
            let ratio = d.probabilities[a] / s.transition.probabilities[a];
            assert!((ratio - 1.0).abs() < 0.2);
            sum += ratio * s.advantage;
        }
        assert!((clipped.actor + sum / batch.len() as f64).abs() < 1e-12);
    }

    #[test]
    fn gradient_linearity_and_constant_loss() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let params = PolicyParams::init(&mut rng);
        let batch = samples_for(&params, 9);
        let cfg = LossConfig {
            clip_epsilon: 0.2,
            actor_l2: 1e-4,
            entropy_beta: 0.01,
        };
        let (_, g) = ppo_gradients(&batch, &params, &cfg);
        // with ratios at 1 the surrogate gradient is linear in the advantages
        let cfg0 = LossConfig {
            actor_l2: 0.0,
            entropy_beta: 0.0,
            ..cfg
        };
        let (_, g1) = ppo_gradients(&batch, &params, &cfg0);
        let doubled: Vec<Sample> = batch
            .iter()
            .cloned()
            .map(|mut s| {
                s.advantage *= 2.0;
                s
            })
            .collect();
        let (_, g2) = ppo_gradients(&doubled, &params, &cfg0);
        for ((_, a), (_, b)) in g1.actor.layers().into_iter().zip(g2.actor.layers()) {
            for (x, y) in a.weight.iter().zip(&b.weight) {
                assert!((2.0 * x - y).abs() <= 1e-9 * y.abs().max(1e-9));
            }
        }
        assert!(g.is_finite());

        // zero advantages, zero entropy weight, no L2 and a perfect critic:
        // the loss is constant in the parameters
        let flat: Vec<Sample> = batch
            .iter()
            .cloned()
            .map(|mut s| {
                s.advantage = 0.0;
                let t = &s.transition;
                s.ret = params
                    .critic
                    .evaluate(&t.network.link_graph, &t.state.features, params.message_steps);
                s
            })
            .collect();
        let (_, g0) = ppo_gradients(&flat, &params, &cfg0);
        assert_eq!(g0.global_norm(), 0.0);
    }

    #[test]
    fn clip_contract() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let mut g = PolicyParams::init(&mut rng);
        let before = clip_global_norm(&mut g, 0.5);
        assert!(before > 0.5);
        assert!(g.global_norm() <= 0.5 + 1e-9);
        let mut small = g.clone();
        small.scale(0.1);
        let copy = small.clone();
        clip_global_norm(&mut small, 0.5);
        assert_eq!(small, copy);
    }

    fn tiny_topologies() -> Vec<TrainTopology> {
        (0..2)
            .map(|i| {
                let net = Network::new(
                    format!("t{i}"),
                    synthetic::random_connected(5, 7, &[10.0, 40.0], i),
                );
                let tms: Vec<Arc<TrafficMatrix>> = (0..6)
                    .map(|s| Arc::new(generate_tm(&net.topology, s, 8.0).unwrap()))
                    .collect();
                TrainTopology {
                    network: net,
                    train_tms: tms[..4].to_vec(),
                    eval_tms: tms[4..].to_vec(),
                }
            })
            .collect()
    }

    #[test]
    fn seeded_smoke_run_is_reproducible() {
        let cfg = TrainConfig {
            episodes: 2,
            eval_every: 1,
            ..Default::default()
        };
        let a = train(tiny_topologies(), cfg.clone(), 77).unwrap();
        let b = train(tiny_topologies(), cfg, 77).unwrap();
        assert_eq!(a.log, b.log);
        assert_eq!(a.params, b.params);
        assert!(a.params.is_finite());
        let mut csv_a = Vec::new();
        let mut csv_b = Vec::new();
        let names = vec!["t0".to_string(), "t1".to_string()];
        write_train_log(&mut csv_a, &names, &a.log).unwrap();
        write_train_log(&mut csv_b, &names, &b.log).unwrap();
        assert_eq!(csv_a, csv_b);
        assert!(String::from_utf8(csv_a)
            .unwrap()
            .starts_with("episode,mean_reward,eval_maxu_t0,eval_maxu_t1,lr"));
    }

    #[test]
    fn rejects_bad_config() {
        let cfg = TrainConfig {
            gamma: -1.0,
            ..Default::default()
        };
        assert!(Trainer::new(tiny_topologies(), cfg, 0).is_err());
        assert!(Trainer::new(vec![], TrainConfig::default(), 0).is_err());
    }
}
