use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use anyhow::{anyhow, Context};
use hazerender_core::eval::{baseline_render, evaluate_sets, PooledTap};
use hazerender_core::imaging::{image_files, load_depth};
use hazerender_core::synthetic::{write_corpus, CorpusSpec};
use hazerender_core::train::{fit, Checkpoint, CHECKPOINT_FILE, LOG_FILE};
use hazerender_core::{apply_density, load_image, render_haze, save_image, Airlight, FeatureBackbone, Tap};
use log::info;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::config::{resolved, Document};
use crate::{Failure, UsageError};

pub const RESOLVED_CONFIG_FILE: &str = "resolved_config.toml";
pub const BASELINE_LOG_FILE: &str = "baseline_params.tsv";

/// Logs the resolved config and stores it next to the command's outputs.
fn record_config(dir: &Path, text: &str) -> anyhow::Result<()> {
    info!("resolved configuration:\n{text}");
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    fs::write(dir.join(RESOLVED_CONFIG_FILE), text)?;
    Ok(())
}

pub fn train(doc: &Document) -> Result<(), Failure> {
    let cfg = doc.train()?;
    for (key, dir) in [("clean_dir", &cfg.clean_dir), ("exemplar_dir", &cfg.exemplar_dir)] {
        if !dir.is_dir() {
            return Err(UsageError(format!("{key} {} is not a directory", dir.display())).into());
        }
    }
    record_config(&cfg.checkpoint_dir, &resolved("train", &cfg))?;
    let ckpt = fit(&cfg)?;
    println!(
        "trained {} steps; checkpoint {} and log {}",
        ckpt.step,
        cfg.checkpoint_dir.join(CHECKPOINT_FILE).display(),
        cfg.checkpoint_dir.join(LOG_FILE).display()
    );
    Ok(())
}

/// `path` itself if it is a file, otherwise the images inside it.
fn inputs(path: &Path) -> Result<Vec<PathBuf>, Failure> {
    if path.is_file() {
        return Ok(vec![path.to_path_buf()]);
    }
    if !path.is_dir() {
        return Err(UsageError(format!("input {} does not exist", path.display())).into());
    }
    let files = image_files(path).map_err(anyhow::Error::from)?;
    if files.is_empty() {
        return Err(UsageError(format!("no PNG or JPEG images in {}", path.display())).into());
    }
    Ok(files)
}

fn stem(path: &Path) -> String {
    path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default()
}

pub fn parse_airlight(text: &str) -> Result<Airlight, String> {
    let parts = text.split(',').map(|p| p.trim().parse::<f32>()).collect::<Result<Vec<_>, _>>();
    match parts.as_deref() {
        Ok([r, g, b]) => Airlight::new([*r, *g, *b]).map_err(|e| e.to_string()),
        _ => Err(format!("expected three comma-separated numbers, got {text:?}")),
    }
}

pub fn parse_alpha(text: &str) -> Result<f64, String> {
    let alpha: f64 = text.parse().map_err(|_| format!("{text:?} is not a number"))?;
    if !(0.0..=1.0).contains(&alpha) {
        return Err(format!("alpha must lie in [0, 1], got {alpha}"));
    }
    Ok(alpha)
}

pub enum AirlightSource {
    Exemplar(PathBuf),
    Literal(Airlight),
}

pub struct RenderArgs {
    pub checkpoint: PathBuf,
    pub input: PathBuf,
    pub alpha: f64,
    pub airlight: AirlightSource,
    pub out_dir: PathBuf,
    pub dump_transmission: bool,
}

pub fn render_images(args: &RenderArgs) -> Result<(), Failure> {
    let files = inputs(&args.input)?;
    let ckpt = Checkpoint::load(&args.checkpoint)
        .with_context(|| format!("loading checkpoint {}", args.checkpoint.display()))?;
    let ten = ckpt.transmission_net()?;
    let airlight = match &args.airlight {
        AirlightSource::Literal(a) => *a,
        AirlightSource::Exemplar(path) => {
            let exemplar = load_image(path)?;
            ckpt.airlight_net()?.estimate(&exemplar)?
        }
    };
    let source = match &args.airlight {
        AirlightSource::Literal(_) => "literal".to_string(),
        AirlightSource::Exemplar(p) => p.display().to_string(),
    };
    let text = format!(
        "checkpoint = {:?}\ninput = {:?}\nalpha = {}\nairlight = {:?}\nairlight_source = {:?}\nseed = {}\n",
        args.checkpoint.display().to_string(),
        args.input.display().to_string(),
        args.alpha,
        airlight.rgb(),
        source,
        ckpt.config.seed,
    );
    record_config(&args.out_dir, &text)?;
    for file in &files {
        let x = load_image(file)?;
        if x.channels() != 3 {
            return Err(anyhow!("{} is not an RGB image", file.display()).into());
        }
        let t = ten.estimate(&x)?;
        let z = render_haze(&x, &apply_density(&t, args.alpha)?, &airlight)?;
        let name = format!("{}_a{}.png", stem(file), args.alpha);
        save_image(&z, args.out_dir.join(&name))?;
        if args.dump_transmission {
            save_image(&t.to_image(), args.out_dir.join(format!("{}_t.png", stem(file))))?;
        }
        info!("wrote {name}");
    }
    println!("rendered {} image(s) into {}", files.len(), args.out_dir.display());
    Ok(())
}

pub fn baseline(doc: &Document, input: &Path, depth_dir: &Path, out_dir: &Path) -> Result<(), Failure> {
    let cfg = doc.baseline()?;
    let files = inputs(input)?;
    if !depth_dir.is_dir() {
        return Err(UsageError(format!("depth directory {} does not exist", depth_dir.display())).into());
    }
    let depths: BTreeMap<String, PathBuf> =
        image_files(depth_dir).map_err(anyhow::Error::from)?.into_iter().map(|p| (stem(&p), p)).collect();
    if let Some(missing) = files.iter().map(|f| stem(f)).find(|s| !depths.contains_key(s)) {
        return Err(anyhow!("no depth map for {missing} in {}", depth_dir.display()).into());
    }
    record_config(out_dir, &resolved("baseline", &cfg))?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut log = String::from("stem\tbeta\tairlight\n");
    for file in &files {
        let name = stem(file);
        let x = load_image(file)?;
        let depth = load_depth(&depths[&name])?;
        let (z, sample) = baseline_render(&x, Some(&depth), &cfg, &mut rng)
            .with_context(|| format!("rendering {}", file.display()))?;
        save_image(&z, out_dir.join(format!("{name}.png")))?;
        log.push_str(&format!("{name}\t{}\t{}\n", sample.beta, sample.airlight));
    }
    fs::write(out_dir.join(BASELINE_LOG_FILE), log)?;
    println!("rendered {} baseline image(s) into {}", files.len(), out_dir.display());
    Ok(())
}

pub fn eval(doc: &Document, rendered: &Path, reference: &Path, report: &Path) -> Result<(), Failure> {
    let cfg = doc.eval()?;
    for dir in [rendered, reference] {
        inputs(dir)?;
        if dir.is_file() {
            return Err(UsageError(format!("{} must be a directory", dir.display())).into());
        }
    }
    let backbone = match &cfg.backbone_weights {
        Some(path) => FeatureBackbone::load(path)?,
        None => FeatureBackbone::seeded(cfg.backbone_width_divisor, cfg.backbone_seed)?,
    };
    let tap: Tap = cfg.tap.parse().map_err(anyhow::Error::from)?;
    let extractor = PooledTap::new(Arc::new(backbone), tap);
    info!("resolved configuration:\n{}", resolved("eval", &cfg));
    let result = evaluate_sets(rendered, reference, &extractor)?;
    if let Some(parent) = report.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent)?;
    }
    result.write_json(report)?;
    print!("{}", result.table());
    println!("FID {:.6}", result.fid);
    Ok(())
}

pub fn synth(spec: &CorpusSpec, out_dir: &Path) -> Result<(), Failure> {
    let paths = write_corpus(out_dir, spec)?;
    println!(
        "wrote {} clean images with depth and {} exemplars under {}",
        spec.clean,
        spec.exemplars,
        out_dir.display()
    );
    info!("clean {}, depth {}, exemplar {}", paths.clean.display(), paths.depth.display(), paths.exemplar.display());
    Ok(())
}
