//! The alternating optimization loop.

use std::fs::{self, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use candle_core::{Tensor, Var};
use log::{info, warn};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::adam::Adam;
use super::checkpoint::{Checkpoint, ATN_PREFIX, DISC_PREFIX, TEN_PREFIX};
use super::config::TrainConfig;
use super::data::{Batch, ImageSet, Loader, RngState};
use crate::error::{invalid, Error, Result};
use crate::imaging::{density, render};
use crate::losses::{
    adversarial_loss_discriminator, adversarial_loss_generator, airlight_loss, scalar, structure_loss,
    total_generator_loss, FeatureTaps, GeneratorTerms,
};
use crate::nn::{AirlightNet, Discriminator, FeatureBackbone, TransmissionNet};

pub const CHECKPOINT_FILE: &str = "checkpoint.safetensors";
pub const LOG_FILE: &str = "train_log.tsv";

/// RNG stream used for batch sampling; stream 0 initializes the networks.
const SAMPLING_STREAM: u64 = 1;

/// Scalar losses of one training step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepReport {
    pub step: u64,
    pub alpha: f64,
    pub edge: f64,
    pub luminance: f64,
    pub smoothness: f64,
    pub structure: f64,
    pub style: f64,
    pub content: f64,
    pub airlight: f64,
    pub adversarial_discriminator: f64,
    pub adversarial_generator: f64,
    pub total: f64,
}

impl StepReport {
    pub const NAMES: [&'static str; 10] =
        ["L_e", "L_l", "L_smooth", "L_S", "L_s", "L_c", "L_A", "L_adv_d", "L_adv_g", "L_total"];

    pub fn values(&self) -> [f64; 10] {
        [
            self.edge,
            self.luminance,
            self.smoothness,
            self.structure,
            self.style,
            self.content,
            self.airlight,
            self.adversarial_discriminator,
            self.adversarial_generator,
            self.total,
        ]
    }
}

/// Rendering intermediates for one batch.
#[derive(Debug, Clone)]
pub struct Rendering {
    /// Transmission before the density exponent, `B x 1 x p x p`.
    pub transmission: Tensor,
    /// `B x 3 x 1 x 1`.
    pub airlight: Tensor,
    pub hazy: Tensor,
}

/// Networks, optimizers and data stream of a training run.
pub struct Trainer {
    cfg: TrainConfig,
    ten: TransmissionNet,
    atn: AirlightNet,
    disc: Discriminator,
    backbone: Arc<FeatureBackbone>,
    taps: FeatureTaps,
    gen_opt: Adam,
    disc_opt: Adam,
    step: u64,
    loader: Loader,
    rng_state: RngState,
}

fn prefixed<'a>(prefix: &'a str, params: &'a crate::nn::ParamStore) -> impl Iterator<Item = (String, &'a Var)> + 'a {
    params.iter().map(move |(n, v)| (format!("{prefix}{n}"), v))
}

/// The perceptual backbone named by `cfg`.
pub fn load_backbone(cfg: &TrainConfig) -> Result<FeatureBackbone> {
    match &cfg.backbone_weights {
        Some(path) => FeatureBackbone::load(path),
        None => {
            warn!(
                "no backbone_weights configured; using a random VGG16-topology backbone (width/{}, seed {})",
                cfg.backbone_width_divisor, cfg.backbone_seed
            );
            FeatureBackbone::seeded(cfg.backbone_width_divisor, cfg.backbone_seed)
        }
    }
}

impl Trainer {
    /// Fresh run on the configured corpus directories.
    pub fn new(cfg: TrainConfig) -> Result<Self> {
        cfg.validate()?;
        let clean = ImageSet::load_dir(&cfg.clean_dir, cfg.patch_size)?;
        let exemplars = ImageSet::load_dir(&cfg.exemplar_dir, cfg.patch_size)?;
        let backbone = load_backbone(&cfg)?;
        Self::with_data(cfg, clean, exemplars, Arc::new(backbone))
    }

    /// Fresh run on in-memory image sets.
    pub fn with_data(cfg: TrainConfig, clean: ImageSet, exemplars: ImageSet, backbone: Arc<FeatureBackbone>) -> Result<Self> {
        cfg.validate()?;
        let mut init = ChaCha8Rng::seed_from_u64(cfg.seed);
        let ten = TransmissionNet::new(cfg.generator_width, &mut init)?;
        let atn = AirlightNet::new(cfg.generator_width, &mut init)?;
        let disc = Discriminator::new(cfg.discriminator_width, &mut init)?;
        let mut sampling = ChaCha8Rng::seed_from_u64(cfg.seed);
        sampling.set_stream(SAMPLING_STREAM);
        Self::assemble(cfg, ten, atn, disc, backbone, clean, exemplars, sampling, 0)
    }

    /// Continues the run saved in `ckpt`, on the given data.
    pub fn resume(ckpt: &Checkpoint, clean: ImageSet, exemplars: ImageSet, backbone: Arc<FeatureBackbone>) -> Result<Self> {
        let cfg = ckpt.config.clone();
        let ten = ckpt.transmission_net()?;
        let atn = ckpt.airlight_net()?;
        let disc = ckpt.discriminator()?;
        let mut trainer =
            Self::assemble(cfg, ten, atn, disc, backbone, clean, exemplars, ckpt.rng.restore()?, ckpt.step)?;
        let t = &ckpt.tensors;
        trainer.gen_opt.restore(ckpt.generator_optimizer_steps, |n| {
            Some((t.get(&format!("adam.gen.m.{n}"))?, t.get(&format!("adam.gen.v.{n}"))?))
        })?;
        trainer.disc_opt.restore(ckpt.discriminator_optimizer_steps, |n| {
            Some((t.get(&format!("adam.disc.m.{n}"))?, t.get(&format!("adam.disc.v.{n}"))?))
        })?;
        Ok(trainer)
    }

    #[allow(clippy::too_many_arguments)]
    fn assemble(
        cfg: TrainConfig,
        ten: TransmissionNet,
        atn: AirlightNet,
        disc: Discriminator,
        backbone: Arc<FeatureBackbone>,
        clean: ImageSet,
        exemplars: ImageSet,
        sampling: ChaCha8Rng,
        step: u64,
    ) -> Result<Self> {
        let gen_params = prefixed(TEN_PREFIX, ten.params()).chain(prefixed(ATN_PREFIX, atn.params()));
        let gen_opt = Adam::new(gen_params, cfg.learning_rate)?;
        let disc_opt = Adam::new(prefixed(DISC_PREFIX, disc.params()), cfg.learning_rate)?;
        let rng_state = RngState::capture(&sampling);
        let loader = Loader::new(Arc::new(clean), Arc::new(exemplars), &cfg, sampling);
        Ok(Self {
            cfg,
            ten,
            atn,
            disc,
            backbone,
            taps: FeatureTaps::default(),
            gen_opt,
            disc_opt,
            step,
            loader,
            rng_state,
        })
    }

    pub fn config(&self) -> &TrainConfig {
        &self.cfg
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    pub fn transmission_net(&self) -> &TransmissionNet {
        &self.ten
    }

    pub fn airlight_net(&self) -> &AirlightNet {
        &self.atn
    }

    pub fn discriminator(&self) -> &Discriminator {
        &self.disc
    }

    pub fn backbone(&self) -> &FeatureBackbone {
        &self.backbone
    }

    /// Forward model on a batch: transmission from the clean crops, airlight
    /// from the exemplars, and the rendering at the batch's density.
    pub fn render(&self, batch: &Batch) -> Result<Rendering> {
        let transmission = self.ten.forward(&batch.x)?;
        let n = batch.y.dims()[0];
        let airlight = self.atn.forward(&batch.y)?.reshape((n, 3, 1, 1))?;
        let hazy = render(&batch.x, &density(&transmission, batch.alpha)?, &airlight)?;
        Ok(Rendering { transmission, airlight, hazy })
    }

    /// Samples the next batch and trains on it.
    pub fn train_step(&mut self) -> Result<StepReport> {
        let (batch, rng_state) = self.loader.next_batch()?;
        let report = self.step_on(&batch)?;
        self.rng_state = rng_state;
        Ok(report)
    }

    /// One discriminator update on the detached rendering, then one joint
    /// update of both generator networks.
    pub fn step_on(&mut self, batch: &Batch) -> Result<StepReport> {
        let w = self.cfg.loss_weights;
        let r = self.render(batch)?;

        let d_real = self.disc.forward(&batch.y)?;
        let d_fake = self.disc.forward(&r.hazy.detach())?;
        let loss_d = adversarial_loss_discriminator(&d_real, &d_fake)?;
        let adv_d = finite("L_adv_d", scalar(&loss_d)?)?;
        self.disc_opt.step(&loss_d.backward()?)?;

        let structure = structure_loss(&batch.x, &r.transmission, &w, &self.cfg.structure)?;
        let airlight = airlight_loss(&batch.x, &batch.y, &r.hazy, &w, &self.taps, &self.backbone)?;
        let adv_g = adversarial_loss_generator(&self.disc.forward(&r.hazy)?)?;
        let report = StepReport {
            step: self.step + 1,
            alpha: batch.alpha,
            edge: finite("L_e", scalar(&structure.edge)?)?,
            luminance: finite("L_l", scalar(&structure.luminance)?)?,
            smoothness: finite("L_smooth", scalar(&structure.smoothness)?)?,
            structure: scalar(&structure.total)?,
            style: finite("L_s", scalar(&airlight.style)?)?,
            content: finite("L_c", scalar(&airlight.content)?)?,
            airlight: scalar(&airlight.total)?,
            adversarial_discriminator: adv_d,
            adversarial_generator: scalar(&adv_g)?,
            total: 0.0,
        };
        let terms = GeneratorTerms { structure: structure.total, airlight: airlight.total, adversarial: adv_g };
        let total = total_generator_loss(&terms, &w)?;
        let report = StepReport { total: finite("L_total", scalar(&total)?)?, ..report };
        self.gen_opt.step(&total.backward()?)?;
        self.step += 1;
        Ok(report)
    }

    pub fn checkpoint(&self) -> Result<Checkpoint> {
        let mut ckpt = Checkpoint {
            step: self.step,
            config: self.cfg.clone(),
            rng: self.rng_state.clone(),
            generator_optimizer_steps: self.gen_opt.step_count(),
            discriminator_optimizer_steps: self.disc_opt.step_count(),
            tensors: Default::default(),
        };
        ckpt.insert_params(TEN_PREFIX, self.ten.params())?;
        ckpt.insert_params(ATN_PREFIX, self.atn.params())?;
        ckpt.insert_params(DISC_PREFIX, self.disc.params())?;
        for (tag, opt) in [("gen", &self.gen_opt), ("disc", &self.disc_opt)] {
            for (name, m, v) in opt.moments() {
                ckpt.tensors.insert(format!("adam.{tag}.m.{name}"), m.copy()?);
                ckpt.tensors.insert(format!("adam.{tag}.v.{name}"), v.copy()?);
            }
        }
        Ok(ckpt)
    }

    pub fn save_checkpoint(&self, path: impl AsRef<Path>) -> Result<()> {
        self.checkpoint()?.save(path)
    }
}

fn finite(term: &'static str, value: f64) -> Result<f64> {
    if value.is_finite() {
        Ok(value)
    } else {
        Err(Error::NonFinite { term, value })
    }
}

/// Restores a trainer from a checkpoint file, reloading its corpus and
/// backbone from the configuration snapshot inside it.
pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<Trainer> {
    let ckpt = Checkpoint::load(path)?;
    let cfg = &ckpt.config;
    let clean = ImageSet::load_dir(&cfg.clean_dir, cfg.patch_size)?;
    let exemplars = ImageSet::load_dir(&cfg.exemplar_dir, cfg.patch_size)?;
    let backbone = load_backbone(cfg)?;
    Trainer::resume(&ckpt, clean, exemplars, Arc::new(backbone))
}

/// Tab-separated per-iteration loss means.
pub struct TrainingLog {
    path: PathBuf,
}

impl TrainingLog {
    pub fn header() -> String {
        let mut cols = vec!["iteration", "step"];
        cols.extend(StepReport::NAMES);
        cols.join("\t")
    }

    /// Opens the log in `dir`, keeping the header and the first `keep`
    /// iteration rows and dropping anything written after them.
    pub fn open(dir: &Path, keep: usize) -> Result<Self> {
        let path = dir.join(LOG_FILE);
        let mut lines: Vec<String> = match fs::read_to_string(&path) {
            Ok(text) => text.lines().skip(1).take(keep).map(str::to_owned).collect(),
            Err(_) => Vec::new(),
        };
        if lines.len() < keep {
            warn!("training log has {} rows but the checkpoint is at iteration {keep}", lines.len());
        }
        lines.insert(0, Self::header());
        fs::write(&path, lines.join("\n") + "\n")?;
        Ok(Self { path })
    }

    pub fn append(&self, iteration: usize, step: u64, means: &[f64; 10]) -> Result<()> {
        let mut row = format!("{iteration}\t{step}");
        for v in means {
            row.push_str(&format!("\t{v}"));
        }
        let mut f = OpenOptions::new().append(true).open(&self.path)?;
        writeln!(f, "{row}")?;
        Ok(())
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    /// Parses a log file into `(iteration, step, means)` rows.
    pub fn read(path: impl AsRef<Path>) -> Result<Vec<(usize, u64, Vec<f64>)>> {
        let text = fs::read_to_string(path.as_ref())?;
        text.lines()
            .skip(1)
            .filter(|l| !l.is_empty())
            .map(|line| {
                let cols: Vec<&str> = line.split('\t').collect();
                let bad = || Error::Data(format!("malformed log row {line:?}"));
                if cols.len() != 12 {
                    return Err(bad());
                }
                let values = cols[2..].iter().map(|c| c.parse::<f64>().map_err(|_| bad())).collect::<Result<_>>()?;
                Ok((cols[0].parse().map_err(|_| bad())?, cols[1].parse().map_err(|_| bad())?, values))
            })
            .collect()
    }
}

/// Trains for the configured number of iterations, checkpointing after each
/// one. A checkpoint already present in `checkpoint_dir` is resumed.
pub fn fit(cfg: &TrainConfig) -> Result<Checkpoint> {
    fit_until(cfg, cfg.iterations)
}

/// [`fit`], but stops once `stop_after` iterations are complete.
pub fn fit_until(cfg: &TrainConfig, stop_after: usize) -> Result<Checkpoint> {
    cfg.validate()?;
    fs::create_dir_all(&cfg.checkpoint_dir)?;
    let ckpt_path = cfg.checkpoint_dir.join(CHECKPOINT_FILE);
    let clean = ImageSet::load_dir(&cfg.clean_dir, cfg.patch_size)?;
    let exemplars = ImageSet::load_dir(&cfg.exemplar_dir, cfg.patch_size)?;
    let backbone = Arc::new(load_backbone(cfg)?);
    let mut trainer = if ckpt_path.exists() {
        let ckpt = Checkpoint::load(&ckpt_path)?;
        if !same_run(&ckpt.config, cfg) {
            return Err(invalid(format!(
                "{} belongs to a run with a different configuration",
                ckpt_path.display()
            )));
        }
        info!("resuming from {} at step {}", ckpt_path.display(), ckpt.step);
        Trainer::resume(&ckpt, clean, exemplars, backbone)?
    } else {
        Trainer::with_data(cfg.clone(), clean, exemplars, backbone)?
    };
    let per_iter = cfg.batches_per_iteration.max(1) as u64;
    if trainer.step_count() % per_iter != 0 {
        return Err(invalid("checkpoint step is not on an iteration boundary"));
    }
    let done = (trainer.step_count() / per_iter) as usize;
    let log = TrainingLog::open(&cfg.checkpoint_dir, done)?;
    let stop = stop_after.min(cfg.iterations);
    for iteration in done..stop {
        let mut sums = [0.0; 10];
        for _ in 0..cfg.batches_per_iteration {
            let report = trainer.train_step()?;
            for (s, v) in sums.iter_mut().zip(report.values()) {
                *s += v;
            }
        }
        let means = sums.map(|s| s / cfg.batches_per_iteration as f64);
        log.append(iteration + 1, trainer.step_count(), &means)?;
        trainer.save_checkpoint(&ckpt_path)?;
        info!(
            "iteration {}/{} step {} L_total {:.5}",
            iteration + 1,
            cfg.iterations,
            trainer.step_count(),
            means[9]
        );
    }
    trainer.checkpoint()
}

/// Whether two configurations describe the same run, ignoring how long it is
/// meant to last.
fn same_run(a: &TrainConfig, b: &TrainConfig) -> bool {
    TrainConfig { iterations: 0, prefetch: 0, ..a.clone() } == TrainConfig { iterations: 0, prefetch: 0, ..b.clone() }
}
