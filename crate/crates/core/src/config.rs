//! Flat key-value settings file (TOML). Keys follow the hyperparameter
//! names, e.g.
//!
//! ```toml
//! learning_rate = 2e-4
//! decay_rate = 0.96
//! decay_steps = 60
//! gnn_hidden_state = 20
//! critical_fraction = 0.15
//! ls_budget_seconds = 10.0
//! ```
//!
//! Every key is optional; missing keys keep their defaults.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ppo::TrainConfig;

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Settings {
    pub episodes: Option<usize>,
    pub epochs: Option<usize>,
    pub minibatch_size: Option<usize>,
    pub learning_rate: Option<f64>,
    pub decay_rate: Option<f64>,
    pub decay_steps: Option<usize>,
    pub entropy_beta: Option<f64>,
    pub entropy_beta_after: Option<f64>,
    pub entropy_switch_episode: Option<usize>,
    pub gamma: Option<f64>,
    pub gae_lambda: Option<f64>,
    pub gradient_clipping: Option<f64>,
    pub actor_l2_regularization: Option<f64>,
    pub clip_epsilon: Option<f64>,
    pub normalize_advantages: Option<bool>,
    pub evaluation_episodes: Option<usize>,
    pub evaluation_interval: Option<usize>,
    pub gnn_hidden_state: Option<usize>,
    pub readout_units: Option<usize>,
    pub message_passing_steps: Option<usize>,
    pub critical_fraction: Option<f64>,
    pub top_links: Option<usize>,
    pub ls_budget_seconds: Option<f64>,
    pub seed: Option<u64>,
}

impl Settings {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_toml(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("flat settings always serialize")
    }

    /// Every training key, populated from `cfg`.
    pub fn from_train(cfg: &TrainConfig) -> Self {
        Self {
            episodes: Some(cfg.episodes),
            epochs: Some(cfg.epochs),
            minibatch_size: Some(cfg.minibatch),
            learning_rate: Some(cfg.learning_rate),
            decay_rate: Some(cfg.lr_decay_rate),
            decay_steps: Some(cfg.lr_decay_steps),
            entropy_beta: Some(cfg.entropy_beta),
            entropy_beta_after: Some(cfg.entropy_beta_after),
            entropy_switch_episode: Some(cfg.entropy_switch_episode),
            gamma: Some(cfg.gamma),
            gae_lambda: Some(cfg.lambda),
            gradient_clipping: Some(cfg.grad_clip),
            actor_l2_regularization: Some(cfg.actor_l2),
            clip_epsilon: Some(cfg.clip_epsilon),
            normalize_advantages: Some(cfg.normalize_advantages),
            evaluation_episodes: Some(cfg.eval_episodes),
            evaluation_interval: Some(cfg.eval_every),
            gnn_hidden_state: Some(cfg.hidden_state),
            readout_units: Some(cfg.readout_units),
            message_passing_steps: Some(cfg.message_steps),
            critical_fraction: Some(cfg.env.critical_fraction),
            top_links: Some(cfg.env.top_links),
            ls_budget_seconds: None,
            seed: None,
        }
    }

    /// Overwrites the fields of `cfg` that are set here.
    pub fn apply_train(&self, cfg: &mut TrainConfig) {
        fn set<T: Copy>(dst: &mut T, v: Option<T>) {
            if let Some(v) = v {
                *dst = v;
            }
        }
        set(&mut cfg.episodes, self.episodes);
        set(&mut cfg.epochs, self.epochs);
        set(&mut cfg.minibatch, self.minibatch_size);
        set(&mut cfg.learning_rate, self.learning_rate);
        set(&mut cfg.lr_decay_rate, self.decay_rate);
        set(&mut cfg.lr_decay_steps, self.decay_steps);
        set(&mut cfg.entropy_beta, self.entropy_beta);
        set(&mut cfg.entropy_beta_after, self.entropy_beta_after);
        set(&mut cfg.entropy_switch_episode, self.entropy_switch_episode);
        set(&mut cfg.gamma, self.gamma);
        set(&mut cfg.lambda, self.gae_lambda);
        set(&mut cfg.grad_clip, self.gradient_clipping);
        set(&mut cfg.actor_l2, self.actor_l2_regularization);
        set(&mut cfg.clip_epsilon, self.clip_epsilon);
        set(&mut cfg.normalize_advantages, self.normalize_advantages);
        set(&mut cfg.eval_episodes, self.evaluation_episodes);
        set(&mut cfg.eval_every, self.evaluation_interval);
        set(&mut cfg.hidden_state, self.gnn_hidden_state);
        set(&mut cfg.readout_units, self.readout_units);
        set(&mut cfg.message_steps, self.message_passing_steps);
        set(&mut cfg.env.critical_fraction, self.critical_fraction);
        set(&mut cfg.env.top_links, self.top_links);
    }

    pub fn train_config(&self) -> Result<TrainConfig> {
        let mut cfg = TrainConfig::default();
        self.apply_train(&mut cfg);
        cfg.validate()?;
        Ok(cfg)
    }
}
