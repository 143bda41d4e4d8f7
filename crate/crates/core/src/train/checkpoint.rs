//! Single-file training checkpoints.
//!
//! A checkpoint is a safetensors archive holding every network parameter and
//! optimizer moment under a prefixed name, with the step counter, optimizer
//! step counts, configuration snapshot and sampling RNG position stored in
//! the header metadata next to a format version.

use std::collections::{BTreeMap, HashMap};
use std::path::Path;

use candle_core::{Device, Tensor};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use safetensors::SafeTensors;

use super::config::TrainConfig;
use super::data::RngState;
use crate::error::{Error, Result};
use crate::nn::{AirlightNet, Discriminator, ParamStore, TransmissionNet};

pub const FORMAT_NAME: &str = "hazerender-checkpoint";
pub const FORMAT_VERSION: u32 = 1;

pub const TEN_PREFIX: &str = "ten.";
pub const ATN_PREFIX: &str = "atn.";
pub const DISC_PREFIX: &str = "disc.";

#[derive(Debug, Clone)]
pub struct Checkpoint {
    /// Number of completed training steps.
    pub step: u64,
    pub config: TrainConfig,
    pub rng: RngState,
    pub generator_optimizer_steps: u64,
    pub discriminator_optimizer_steps: u64,
    pub tensors: BTreeMap<String, Tensor>,
}

fn format_error(path: &Path, reason: impl ToString) -> Error {
    Error::Format { path: path.to_path_buf(), reason: reason.to_string() }
}

impl Checkpoint {
    /// Writes the archive to a sibling temporary file and renames it into
    /// place, so an interrupted save never leaves a partial checkpoint.
    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let mut meta = HashMap::new();
        meta.insert("format".to_string(), FORMAT_NAME.to_string());
        meta.insert("format_version".to_string(), FORMAT_VERSION.to_string());
        meta.insert("step".to_string(), self.step.to_string());
        meta.insert("generator_optimizer_steps".to_string(), self.generator_optimizer_steps.to_string());
        meta.insert("discriminator_optimizer_steps".to_string(), self.discriminator_optimizer_steps.to_string());
        meta.insert("config".to_string(), serde_json::to_string(&self.config).expect("config serializes"));
        meta.insert("rng".to_string(), serde_json::to_string(&self.rng).expect("rng state serializes"));
        let tensors = self
            .tensors
            .iter()
            .map(|(k, t)| Ok((k.clone(), t.contiguous()?)))
            .collect::<Result<Vec<_>>>()?;
        let tmp = path.with_extension("tmp");
        safetensors::serialize_to_file(tensors, Some(meta), &tmp).map_err(|e| format_error(path, e))?;
        std::fs::rename(&tmp, path)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        if !path.exists() {
            return Err(Error::NotFound(path.to_path_buf()));
        }
        let bytes = std::fs::read(path)?;
        let (_, header) = SafeTensors::read_metadata(&bytes).map_err(|e| format_error(path, e))?;
        let meta = header.metadata().clone().unwrap_or_default();
        let get = |key: &str| meta.get(key).ok_or_else(|| format_error(path, format!("missing metadata {key}")));
        if get("format")? != FORMAT_NAME {
            return Err(format_error(path, "not a checkpoint archive"));
        }
        let version: u32 = get("format_version")?.parse().map_err(|e| format_error(path, e))?;
        if version != FORMAT_VERSION {
            return Err(Error::Incompatible(format!(
                "{} has format version {version}, this build reads version {FORMAT_VERSION}",
                path.display()
            )));
        }
        let number = |key: &str| -> Result<u64> { get(key)?.parse().map_err(|e| format_error(path, e)) };
        let config: TrainConfig = serde_json::from_str(get("config")?).map_err(|e| format_error(path, e))?;
        let rng: RngState = serde_json::from_str(get("rng")?).map_err(|e| format_error(path, e))?;
        let tensors = candle_core::safetensors::load_buffer(&bytes, &Device::Cpu).map_err(|e| format_error(path, e))?;
        Ok(Self {
            step: number("step")?,
            generator_optimizer_steps: number("generator_optimizer_steps")?,
            discriminator_optimizer_steps: number("discriminator_optimizer_steps")?,
            config,
            rng,
            tensors: tensors.into_iter().collect(),
        })
    }

    pub(crate) fn insert_params(&mut self, prefix: &str, params: &ParamStore) -> Result<()> {
        for (name, var) in params.iter() {
            self.tensors.insert(format!("{prefix}{name}"), var.as_tensor().copy()?);
        }
        Ok(())
    }

    pub(crate) fn load_params(&self, prefix: &str, params: &ParamStore) -> Result<()> {
        params.load(|name| self.tensors.get(&format!("{prefix}{name}")))
    }

    /// The transmission network stored in this checkpoint.
    pub fn transmission_net(&self) -> Result<TransmissionNet> {
        let net = TransmissionNet::new(self.config.generator_width, &mut ChaCha8Rng::seed_from_u64(0))?;
        self.load_params(TEN_PREFIX, net.params())?;
        Ok(net)
    }

    /// The airlight network stored in this checkpoint.
    pub fn airlight_net(&self) -> Result<AirlightNet> {
        let net = AirlightNet::new(self.config.generator_width, &mut ChaCha8Rng::seed_from_u64(0))?;
        self.load_params(ATN_PREFIX, net.params())?;
        Ok(net)
    }

    pub fn discriminator(&self) -> Result<Discriminator> {
        let net = Discriminator::new(self.config.discriminator_width, &mut ChaCha8Rng::seed_from_u64(0))?;
        self.load_params(DISC_PREFIX, net.params())?;
        Ok(net)
    }
}
