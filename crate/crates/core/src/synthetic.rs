//! Procedural outdoor scenes with known depth, for demos and desk runs.
//!
//! A scene is a sky gradient above a textured ground plane whose depth grows
//! toward the horizon, with a few flat-colored boxes standing on it. Depth is
//! normalized so the sky sits at 1.

use std::fs;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{invalid, Result};
use crate::imaging::{render_haze, save_depth, save_image, transmission_from_depth, Airlight, DepthMap, ImageTensor};

/// Haze applied to generated exemplars.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HazeStyle {
    pub beta: [f64; 2],
    pub airlight: [f32; 3],
    /// Uniform per-channel perturbation of `airlight`.
    pub jitter: f32,
}

impl Default for HazeStyle {
    fn default() -> Self {
        Self { beta: [1.0, 2.0], airlight: [0.62, 0.66, 0.72], jitter: 0.04 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CorpusSpec {
    pub clean: usize,
    pub exemplars: usize,
    pub height: usize,
    pub width: usize,
    pub seed: u64,
    pub style: HazeStyle,
}

impl Default for CorpusSpec {
    fn default() -> Self {
        Self { clean: 50, exemplars: 30, height: 96, width: 96, seed: 0, style: HazeStyle::default() }
    }
}

/// Directories written by [`write_corpus`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CorpusPaths {
    pub clean: PathBuf,
    pub depth: PathBuf,
    pub exemplar: PathBuf,
}

/// Smooth noise in roughly `[-1, 1]`: a random `cells x cells` lattice
/// interpolated bilinearly.
fn value_noise<R: Rng>(rng: &mut R, h: usize, w: usize, cells: usize) -> Vec<f32> {
    let g = cells + 1;
    let lattice: Vec<f32> = (0..g * g).map(|_| rng.random_range(-1.0..1.0)).collect();
    let mut out = Vec::with_capacity(h * w);
    for y in 0..h {
        let fy = y as f32 / h as f32 * cells as f32;
        let (iy, ty) = (fy as usize, fy.fract());
        for x in 0..w {
            let fx = x as f32 / w as f32 * cells as f32;
            let (ix, tx) = (fx as usize, fx.fract());
            let at = |a: usize, b: usize| lattice[a * g + b];
            let top = at(iy, ix) * (1.0 - tx) + at(iy, ix + 1) * tx;
            let bottom = at(iy + 1, ix) * (1.0 - tx) + at(iy + 1, ix + 1) * tx;
            out.push(top * (1.0 - ty) + bottom * ty);
        }
    }
    out
}

fn random_color<R: Rng>(rng: &mut R, lo: f32, hi: f32) -> [f32; 3] {
    [rng.random_range(lo..hi), rng.random_range(lo..hi), rng.random_range(lo..hi)]
}

/// A clean scene and its depth map.
pub fn scene<R: Rng>(rng: &mut R, height: usize, width: usize) -> Result<(ImageTensor, DepthMap)> {
    if height < 8 || width < 8 {
        return Err(invalid(format!("scene must be at least 8x8, got {height}x{width}")));
    }
    let (h, w) = (height, width);
    let horizon = rng.random_range(0.25..0.5) * h as f32;
    let sky_top = [rng.random_range(0.25..0.45), rng.random_range(0.45..0.65), rng.random_range(0.75..0.95)];
    let sky_low = [rng.random_range(0.7..0.85), rng.random_range(0.75..0.9), rng.random_range(0.85..0.95)];
    let ground = random_color(rng, 0.15, 0.55);
    let fine = value_noise(rng, h, w, 12);
    let coarse = value_noise(rng, h, w, 3);

    let mut rgb = vec![0.0f32; 3 * h * w];
    let mut depth = vec![0.0f32; h * w];
    for y in 0..h {
        for x in 0..w {
            let i = y * w + x;
            let yf = y as f32 + 0.5;
            if yf < horizon {
                let s = yf / horizon;
                for c in 0..3 {
                    rgb[c * h * w + i] = sky_top[c] * (1.0 - s) + sky_low[c] * s + 0.03 * coarse[i];
                }
                depth[i] = 1.0;
            } else {
                // Perspective ground plane: depth falls off as 1 / (rows below the horizon).
                let below = (yf - horizon) / (h as f32 - horizon);
                let d = (0.08 / (below + 0.08)).min(1.0);
                let shade = 1.0 + 0.25 * fine[i] * (1.0 - d) + 0.15 * coarse[i];
                for c in 0..3 {
                    rgb[c * h * w + i] = ground[c] * shade;
                }
                depth[i] = d;
            }
        }
    }

    for _ in 0..rng.random_range(2..6) {
        let base = rng.random_range(horizon + 1.0..h as f32);
        let below = (base - horizon) / (h as f32 - horizon);
        let d = (0.08 / (below + 0.08)).min(1.0);
        let scale = (1.0 - d).max(0.15);
        let bh = (rng.random_range(0.15..0.5) * h as f32 * scale).max(2.0);
        let bw = (rng.random_range(0.08..0.3) * w as f32 * scale).max(2.0);
        let left = rng.random_range(0.0..(w as f32 - bw).max(1.0));
        let color = random_color(rng, 0.05, 0.9);
        let (y0, y1) = ((base - bh).max(0.0) as usize, base as usize);
        let (x0, x1) = (left as usize, ((left + bw) as usize).min(w));
        for y in y0..y1.min(h) {
            for x in x0..x1 {
                let i = y * w + x;
                // Boxes are drawn back to front only where they are nearer.
                if d <= depth[i] {
                    let edge = if x == x0 || x + 1 == x1 { 0.7 } else { 1.0 };
                    for c in 0..3 {
                        rgb[c * h * w + i] = color[c] * edge * (1.0 + 0.1 * fine[i]);
                    }
                    depth[i] = d;
                }
            }
        }
    }

    for v in &mut rgb {
        *v = v.clamp(0.0, 1.0);
    }
    Ok((ImageTensor::from_vec(rgb, 3, h, w)?, DepthMap::from_vec(depth, h, w)?))
}

/// A scene hazed with a random density and a jittered airlight drawn from `style`.
pub fn hazy_exemplar<R: Rng>(rng: &mut R, height: usize, width: usize, style: &HazeStyle) -> Result<ImageTensor> {
    let (clean, depth) = scene(rng, height, width)?;
    let beta = if style.beta[0] < style.beta[1] { rng.random_range(style.beta[0]..style.beta[1]) } else { style.beta[0] };
    let mut a = style.airlight;
    for v in &mut a {
        *v = (*v + rng.random_range(-style.jitter..=style.jitter)).clamp(0.0, 1.0);
    }
    render_haze(&clean, &transmission_from_depth(&depth, beta)?, &Airlight::new(a)?)
}

/// Writes `clean/`, `depth/` and `exemplar/` under `dir`. Clean images and
/// depth maps share file stems; exemplars are independent scenes.
pub fn write_corpus(dir: impl AsRef<Path>, spec: &CorpusSpec) -> Result<CorpusPaths> {
    let dir = dir.as_ref();
    let paths =
        CorpusPaths { clean: dir.join("clean"), depth: dir.join("depth"), exemplar: dir.join("exemplar") };
    for d in [&paths.clean, &paths.depth, &paths.exemplar] {
        fs::create_dir_all(d)?;
    }
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    for i in 0..spec.clean {
        let (img, depth) = scene(&mut rng, spec.height, spec.width)?;
        save_image(&img, paths.clean.join(format!("scene_{i:04}.png")))?;
        save_depth(&depth, paths.depth.join(format!("scene_{i:04}.png")))?;
    }
    for i in 0..spec.exemplars {
        let img = hazy_exemplar(&mut rng, spec.height, spec.width, &spec.style)?;
        save_image(&img, paths.exemplar.join(format!("hazy_{i:04}.png")))?;
    }
    Ok(paths)
}
