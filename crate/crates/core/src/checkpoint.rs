//! Versioned JSON checkpoints: named row-major tensors plus the
//! hyperparameters they were trained with. Floats round-trip bit-exactly.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::config::Settings;
use crate::error::{Error, Result};
use crate::gnn::{GnnNet, PolicyParams};
use crate::ppo::TrainConfig;

pub const FORMAT: &str = "enero-checkpoint";
pub const VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TensorRecord {
    pub name: String,
    pub shape: [usize; 2],
    pub values: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub format: String,
    pub version: u32,
    /// Training episode the parameters come from.
    pub episode: usize,
    pub hyperparameters: Settings,
    pub tensors: Vec<TensorRecord>,
}

impl Checkpoint {
    pub fn new(params: &PolicyParams, cfg: &TrainConfig, episode: usize) -> Result<Self> {
        if !params.is_finite() {
            return Err(Error::Checkpoint("refusing to store non-finite parameters".into()));
        }
        Ok(Self {
            format: FORMAT.into(),
            version: VERSION,
            episode,
            hyperparameters: Settings::from_train(cfg),
            tensors: params
                .tensors()
                .into_iter()
                .map(|(name, shape, values)| TensorRecord {
                    name,
                    shape,
                    values: values.to_vec(),
                })
                .collect(),
        })
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("checkpoint serializes")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let ck: Self =
            serde_json::from_str(text).map_err(|e| Error::Checkpoint(e.to_string()))?;
        if ck.format != FORMAT {
            return Err(Error::Checkpoint(format!("unknown format {:?}", ck.format)));
        }
        if ck.version != VERSION {
            return Err(Error::Checkpoint(format!(
                "version {} not supported (expected {VERSION})",
                ck.version
            )));
        }
        Ok(ck)
    }

    pub fn train_config(&self) -> Result<TrainConfig> {
        self.hyperparameters
            .train_config()
            .map_err(|e| Error::Checkpoint(format!("hyperparameters: {e}")))
    }

    pub fn params(&self) -> Result<PolicyParams> {
        let cfg = self.train_config()?;
        let mut params = PolicyParams {
            actor: GnnNet::zeros(cfg.hidden_state, cfg.readout_units),
            critic: GnnNet::zeros(cfg.hidden_state, cfg.readout_units),
            message_steps: cfg.message_steps,
        };
        let expected: Vec<(String, [usize; 2])> = params
            .tensors()
            .into_iter()
            .map(|(n, s, _)| (n, s))
            .collect();
        if expected.len() != self.tensors.len() {
            return Err(Error::Checkpoint(format!(
                "{} tensors, expected {}",
                self.tensors.len(),
                expected.len()
            )));
        }
        for ((name, shape), (slot, rec)) in expected
            .iter()
            .zip(params.tensors_mut().into_iter().zip(&self.tensors))
        {
            if &rec.name != name || &rec.shape != shape {
                return Err(Error::Checkpoint(format!(
                    "tensor {} {:?} where {} {:?} was expected",
                    rec.name, rec.shape, name, shape
                )));
            }
            if rec.values.len() != slot.len() {
                return Err(Error::Checkpoint(format!(
                    "tensor {} has {} values for shape {:?}",
                    name,
                    rec.values.len(),
                    shape
                )));
            }
            slot.copy_from_slice(&rec.values);
        }
        Ok(params)
    }
}

pub fn save_checkpoint(
    path: &Path,
    params: &PolicyParams,
    cfg: &TrainConfig,
    episode: usize,
) -> Result<()> {
    std::fs::write(path, Checkpoint::new(params, cfg, episode)?.to_json())?;
    Ok(())
}

/// Parameters, training configuration and episode of a checkpoint file.
pub fn load_checkpoint(path: &Path) -> Result<(PolicyParams, TrainConfig, usize)> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::Checkpoint(format!("{}: {e}", path.display())))?;
    let ck = Checkpoint::from_json(&text)?;
    Ok((ck.params()?, ck.train_config()?, ck.episode))
}
