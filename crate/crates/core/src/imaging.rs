//! Image containers, file I/O and the atmospheric scattering forward model.
//!
//! The typed containers ([`ImageTensor`], [`TransmissionMap`], [`Airlight`],
//! [`DepthMap`]) validate their value ranges on construction. The training
//! loop works on batched raw tensors instead, through the tensor-level
//! functions [`luminance`], [`density`] and [`render`]; the typed operations
//! are thin wrappers over the same functions so inference and training share
//! one code path.

use std::path::Path;

use candle_core::{DType, Device, Tensor};
use image::{DynamicImage, ImageBuffer, Luma, Rgb};

use crate::error::{invalid, Error, Result};

/// ITU-R BT.601 luma weights.
pub const LUMA_WEIGHTS: [f64; 3] = [0.299, 0.587, 0.114];

/// A `channels x height x width` image with intensities in `[0, 1]`.
#[derive(Debug, Clone)]
pub struct ImageTensor(Tensor);

impl ImageTensor {
    pub fn new(tensor: Tensor) -> Result<Self> {
        let (c, h, w) = tensor.dims3()?;
        if c != 1 && c != 3 {
            return Err(invalid(format!("image must have 1 or 3 channels, got {c}")));
        }
        if h == 0 || w == 0 {
            return Err(invalid("image must be at least 1x1"));
        }
        let tensor = tensor.to_dtype(DType::F32)?;
        check_range(&tensor, "image", |v| (0.0..=1.0).contains(&v))?;
        Ok(Self(tensor))
    }

    pub fn from_vec(data: Vec<f32>, channels: usize, height: usize, width: usize) -> Result<Self> {
        if data.len() != channels * height * width {
            return Err(invalid(format!(
                "{} values cannot fill a {channels}x{height}x{width} image",
                data.len()
            )));
        }
        Self::new(Tensor::from_vec(data, (channels, height, width), &Device::Cpu)?)
    }

    pub fn filled(channels: usize, height: usize, width: usize, value: f32) -> Result<Self> {
        Self::from_vec(vec![value; channels * height * width], channels, height, width)
    }

    pub fn channels(&self) -> usize {
        self.0.dims()[0]
    }

    pub fn height(&self) -> usize {
        self.0.dims()[1]
    }

    pub fn width(&self) -> usize {
        self.0.dims()[2]
    }

    pub fn tensor(&self) -> &Tensor {
        &self.0
    }

    pub fn into_tensor(self) -> Tensor {
        self.0
    }

    /// Flattened channel-major values.
    pub fn to_vec(&self) -> Vec<f32> {
        flatten(&self.0)
    }

    /// Value at `(channel, row, col)`.
    pub fn get(&self, c: usize, y: usize, x: usize) -> f32 {
        let (h, w) = (self.height(), self.width());
        self.to_vec()[(c * h + y) * w + x]
    }

    pub fn crop(&self, top: usize, left: usize, height: usize, width: usize) -> Result<Self> {
        if top + height > self.height() || left + width > self.width() {
            return Err(invalid(format!(
                "crop {height}x{width} at ({top}, {left}) exceeds {}x{} image",
                self.height(),
                self.width()
            )));
        }
        Ok(Self(self.0.narrow(1, top, height)?.narrow(2, left, width)?.contiguous()?))
    }

    /// Bilinear resize to `height x width`.
    pub fn resize(&self, height: usize, width: usize) -> Result<Self> {
        let (c, h, w) = (self.channels(), self.height(), self.width());
        let data = self.to_vec();
        let mut out = Vec::with_capacity(c * height * width);
        for ch in 0..c {
            let plane = ImageBuffer::<Luma<f32>, _>::from_raw(
                w as u32,
                h as u32,
                data[ch * h * w..(ch + 1) * h * w].to_vec(),
            )
            .expect("plane size matches");
            let resized = image::imageops::resize(
                &plane,
                width as u32,
                height as u32,
                image::imageops::FilterType::Triangle,
            );
            out.extend(resized.into_raw().into_iter().map(|v| v.clamp(0.0, 1.0)));
        }
        Self::from_vec(out, c, height, width)
    }
}

/// Per-pixel transmission `t` in `(0, 1]`, shaped `1 x height x width`.
#[derive(Debug, Clone)]
pub struct TransmissionMap(Tensor);

impl TransmissionMap {
    pub fn new(tensor: Tensor) -> Result<Self> {
        let (c, h, w) = tensor.dims3()?;
        if c != 1 || h == 0 || w == 0 {
            return Err(invalid(format!("transmission must be 1xHxW, got {c}x{h}x{w}")));
        }
        let tensor = tensor.to_dtype(DType::F32)?;
        check_range(&tensor, "transmission", |v| v > 0.0 && v <= 1.0)?;
        Ok(Self(tensor))
    }

    pub fn from_vec(data: Vec<f32>, height: usize, width: usize) -> Result<Self> {
        if data.len() != height * width {
            return Err(invalid("transmission data does not match its shape"));
        }
        Self::new(Tensor::from_vec(data, (1, height, width), &Device::Cpu)?)
    }

    pub fn filled(height: usize, width: usize, value: f32) -> Result<Self> {
        Self::from_vec(vec![value; height * width], height, width)
    }

    pub fn height(&self) -> usize {
        self.0.dims()[1]
    }

    pub fn width(&self) -> usize {
        self.0.dims()[2]
    }

    pub fn tensor(&self) -> &Tensor {
        &self.0
    }

    pub fn to_vec(&self) -> Vec<f32> {
        flatten(&self.0)
    }

    /// The map as a single-channel image, for dumping to disk.
    pub fn to_image(&self) -> ImageTensor {
        ImageTensor(self.0.clone())
    }
}

/// Global atmospheric light, one value per RGB channel.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Airlight([f32; 3]);

impl Airlight {
    pub fn new(rgb: [f32; 3]) -> Result<Self> {
        if rgb.iter().any(|v| !(0.0..=1.0).contains(v)) {
            return Err(invalid(format!("airlight components must lie in [0, 1], got {rgb:?}")));
        }
        Ok(Self(rgb))
    }

    pub fn gray(value: f32) -> Result<Self> {
        Self::new([value; 3])
    }

    pub fn rgb(&self) -> [f32; 3] {
        self.0
    }

    /// `3 x 1 x 1` tensor that broadcasts over an image.
    pub fn to_tensor(&self) -> Result<Tensor> {
        Ok(Tensor::from_vec(self.0.to_vec(), (3, 1, 1), &Device::Cpu)?)
    }
}

/// Relative scene depth, shaped `1 x height x width`, non-negative.
#[derive(Debug, Clone)]
pub struct DepthMap(Tensor);

impl DepthMap {
    pub fn new(tensor: Tensor) -> Result<Self> {
        let (c, h, w) = tensor.dims3()?;
        if c != 1 || h == 0 || w == 0 {
            return Err(invalid(format!("depth must be 1xHxW, got {c}x{h}x{w}")));
        }
        let tensor = tensor.to_dtype(DType::F32)?;
        check_range(&tensor, "depth", |v| v >= 0.0 && v.is_finite())?;
        Ok(Self(tensor))
    }

    pub fn from_vec(data: Vec<f32>, height: usize, width: usize) -> Result<Self> {
        if data.len() != height * width {
            return Err(invalid("depth data does not match its shape"));
        }
        Self::new(Tensor::from_vec(data, (1, height, width), &Device::Cpu)?)
    }

    pub fn filled(height: usize, width: usize, value: f32) -> Result<Self> {
        Self::from_vec(vec![value; height * width], height, width)
    }

    pub fn height(&self) -> usize {
        self.0.dims()[1]
    }

    pub fn width(&self) -> usize {
        self.0.dims()[2]
    }

    pub fn tensor(&self) -> &Tensor {
        &self.0
    }

    pub fn to_vec(&self) -> Vec<f32> {
        flatten(&self.0)
    }
}

fn flatten(t: &Tensor) -> Vec<f32> {
    t.flatten_all()
        .and_then(|t| t.to_vec1::<f32>())
        .expect("typed containers hold contiguous f32 data")
}

fn check_range(t: &Tensor, what: &str, ok: impl Fn(f32) -> bool) -> Result<()> {
    let values = flatten(t);
    if let Some(bad) = values.iter().find(|&&v| !ok(v)) {
        return Err(invalid(format!("{what} value {bad} out of range")));
    }
    Ok(())
}

fn decode(path: &Path) -> Result<DynamicImage> {
    if !path.exists() {
        return Err(Error::NotFound(path.to_path_buf()));
    }
    let reader = image::ImageReader::open(path)?
        .with_guessed_format()
        .map_err(|e| Error::Format { path: path.to_path_buf(), reason: e.to_string() })?;
    reader
        .decode()
        .map_err(|e| Error::Format { path: path.to_path_buf(), reason: e.to_string() })
}

/// PNG and JPEG files directly inside `dir`, sorted by file name.
pub fn image_files(dir: impl AsRef<Path>) -> Result<Vec<std::path::PathBuf>> {
    let dir = dir.as_ref();
    if !dir.is_dir() {
        return Err(Error::NotFound(dir.to_path_buf()));
    }
    let mut files = Vec::new();
    for entry in std::fs::read_dir(dir)? {
        let path = entry?.path();
        let ext = path.extension().and_then(|e| e.to_str()).map(str::to_ascii_lowercase);
        if path.is_file() && matches!(ext.as_deref(), Some("png" | "jpg" | "jpeg")) {
            files.push(path);
        }
    }
    files.sort();
    Ok(files)
}

/// Loads a PNG or JPEG as a 3-channel image; 8-bit values are divided by 255
/// and grayscale sources are replicated across channels.
pub fn load_image(path: impl AsRef<Path>) -> Result<ImageTensor> {
    let path = path.as_ref();
    let rgb = decode(path)?.to_rgb8();
    let (w, h) = (rgb.width() as usize, rgb.height() as usize);
    let raw = rgb.into_raw();
    let mut data = vec![0f32; 3 * h * w];
    for (p, px) in raw.chunks_exact(3).enumerate() {
        for c in 0..3 {
            data[c * h * w + p] = px[c] as f32 / 255.0;
        }
    }
    ImageTensor::from_vec(data, 3, h, w)
}

/// Writes an image, quantizing each value by `round(v * 255)` clamped to
/// `[0, 255]`. The format follows the file extension.
pub fn save_image(img: &ImageTensor, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let (c, h, w) = (img.channels(), img.height(), img.width());
    let data = img.to_vec();
    let q = |v: f32| (v * 255.0).round().clamp(0.0, 255.0) as u8;
    let encoded = if c == 1 {
        DynamicImage::ImageLuma8(
            ImageBuffer::from_raw(w as u32, h as u32, data.iter().map(|&v| q(v)).collect())
                .expect("buffer size matches"),
        )
    } else {
        let mut raw = Vec::with_capacity(3 * h * w);
        for p in 0..h * w {
            for ch in 0..3 {
                raw.push(q(data[ch * h * w + p]));
            }
        }
        DynamicImage::ImageRgb8(
            ImageBuffer::<Rgb<u8>, _>::from_raw(w as u32, h as u32, raw)
                .expect("buffer size matches"),
        )
    };
    encoded
        .save(path)
        .map_err(|e| Error::Format { path: path.to_path_buf(), reason: e.to_string() })
}

/// Loads a grayscale depth image, normalized to `[0, 1]` by the maximum
/// representable value of its bit depth.
pub fn load_depth(path: impl AsRef<Path>) -> Result<DepthMap> {
    let path = path.as_ref();
    let luma = decode(path)?.to_luma16();
    let (w, h) = (luma.width() as usize, luma.height() as usize);
    let data = luma.into_raw().into_iter().map(|v| v as f32 / 65535.0).collect();
    DepthMap::from_vec(data, h, w)
}

/// Writes a depth map as a 16-bit PNG. Values above 1 are clamped.
pub fn save_depth(depth: &DepthMap, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let raw: Vec<u16> = depth
        .to_vec()
        .into_iter()
        .map(|v| (v.clamp(0.0, 1.0) * 65535.0).round() as u16)
        .collect();
    let buf = ImageBuffer::<Luma<u16>, _>::from_raw(depth.width() as u32, depth.height() as u32, raw)
        .expect("buffer size matches");
    buf.save(path)
        .map_err(|e| Error::Format { path: path.to_path_buf(), reason: e.to_string() })
}

/// Luma of a tensor whose channel axis is third from the end (`3xHxW` or
/// `Nx3xHxW`). Single-channel tensors are returned unchanged.
pub fn luminance(x: &Tensor) -> Result<Tensor> {
    let rank = x.rank();
    let cdim = rank - 3;
    match x.dims()[cdim] {
        1 => Ok(x.clone()),
        3 => {
            let mut acc = x.narrow(cdim, 0, 1)?.affine(LUMA_WEIGHTS[0], 0.0)?;
            for (c, &wt) in LUMA_WEIGHTS.iter().enumerate().skip(1) {
                acc = (acc + x.narrow(cdim, c, 1)?.affine(wt, 0.0)?)?;
            }
            Ok(acc)
        }
        n => Err(invalid(format!("luminance needs 1 or 3 channels, got {n}"))),
    }
}

/// Elementwise `t^alpha`.
pub fn density(t: &Tensor, alpha: f64) -> Result<Tensor> {
    if !(0.0..=1.0).contains(&alpha) {
        return Err(invalid(format!("density alpha must lie in [0, 1], got {alpha}")));
    }
    Ok(t.powf(alpha)?)
}

/// Atmospheric scattering model `z = t * x + (1 - t) * a`, broadcasting the
/// single-channel transmission over the color channels and the airlight over
/// the pixels.
pub fn render(x: &Tensor, t: &Tensor, airlight: &Tensor) -> Result<Tensor> {
    let haze = t.affine(-1.0, 1.0)?.broadcast_mul(airlight)?;
    Ok(t.broadcast_mul(x)?.add(&haze)?)
}

pub fn to_grayscale(img: &ImageTensor) -> Result<ImageTensor> {
    if img.channels() == 1 {
        return Ok(img.clone());
    }
    Ok(ImageTensor(luminance(img.tensor())?.clamp(0f32, 1f32)?))
}

/// `t = exp(-beta * d)`.
pub fn transmission_from_depth(depth: &DepthMap, beta: f64) -> Result<TransmissionMap> {
    if !(beta > 0.0 && beta.is_finite()) {
        return Err(invalid(format!("scattering coefficient must be positive, got {beta}")));
    }
    let t = depth.tensor().affine(-beta, 0.0)?.exp()?;
    // exp underflows to 0 for very deep pixels; keep the map strictly positive.
    TransmissionMap::new(t.clamp(f32::MIN_POSITIVE, 1f32)?)
}

/// Haze density control: `t^alpha` with `alpha` in `[0, 1]`. `alpha = 0`
/// removes all haze, `alpha = 1` keeps the map unchanged.
pub fn apply_density(t: &TransmissionMap, alpha: f64) -> Result<TransmissionMap> {
    let out = density(t.tensor(), alpha)?;
    TransmissionMap::new(out.clamp(f32::MIN_POSITIVE, 1f32)?)
}

pub fn render_haze(x: &ImageTensor, t: &TransmissionMap, airlight: &Airlight) -> Result<ImageTensor> {
    if x.channels() != 3 {
        return Err(invalid("rendering needs a 3-channel image"));
    }
    if (x.height(), x.width()) != (t.height(), t.width()) {
        return Err(invalid(format!(
            "image is {}x{} but transmission is {}x{}",
            x.height(),
            x.width(),
            t.height(),
            t.width()
        )));
    }
    let z = render(x.tensor(), t.tensor(), &airlight.to_tensor()?)?;
    // Rounding can overshoot the unit interval by an ulp.
    Ok(ImageTensor(z.clamp(0f32, 1f32)?))
}
