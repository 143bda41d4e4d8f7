use candle_core::{Device, Tensor, Var};
use rand::Rng;
use rand_distr::{Distribution, Normal};

use super::conv::Conv2d;
use crate::error::{invalid, Result};

/// Named trainable parameters of one network, in registration order.
#[derive(Debug, Clone, Default)]
pub struct ParamStore {
    entries: Vec<(String, Var)>,
}

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, name: impl Into<String>, value: Tensor) -> Result<Tensor> {
        let name = name.into();
        if self.get(&name).is_some() {
            return Err(invalid(format!("duplicate parameter {name}")));
        }
        let var = Var::from_tensor(&value)?;
        let tensor = var.as_tensor().clone();
        self.entries.push((name, var));
        Ok(tensor)
    }

    pub fn get(&self, name: &str) -> Option<&Var> {
        self.entries.iter().find(|(n, _)| n == name).map(|(_, v)| v)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Var)> {
        self.entries.iter().map(|(n, v)| (n.as_str(), v))
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn num_elements(&self) -> usize {
        self.entries.iter().map(|(_, v)| v.elem_count()).sum()
    }

    /// Overwrites every parameter in place from `named`, which must hold a
    /// tensor of matching shape for each name.
    pub fn load<'a>(&self, mut named: impl FnMut(&str) -> Option<&'a Tensor>) -> Result<()> {
        for (name, var) in &self.entries {
            let value = named(name).ok_or_else(|| invalid(format!("missing parameter {name}")))?;
            if value.dims() != var.dims() {
                return Err(invalid(format!(
                    "parameter {name} has shape {:?}, expected {:?}",
                    value.dims(),
                    var.dims()
                )));
            }
            var.set(&value.to_dtype(var.dtype())?)?;
        }
        Ok(())
    }
}

/// Conv layer initializer: Kaiming-normal weights scaled by fan-in for a
/// leaky-ReLU stack, zero biases.
pub(crate) fn init_conv<R: Rng>(
    store: &mut ParamStore,
    rng: &mut R,
    name: &str,
    cin: usize,
    cout: usize,
    kernel: usize,
    stride: usize,
    padding: usize,
) -> Result<Conv2d> {
    let gain = (2.0 / (1.0 + super::LEAKY_SLOPE * super::LEAKY_SLOPE)).sqrt();
    init_conv_with_gain(store, rng, name, cin, cout, kernel, stride, padding, gain)
}

/// [`init_conv`] with an explicit gain on the `1/sqrt(fan_in)` standard
/// deviation.
#[allow(clippy::too_many_arguments)]
pub(crate) fn init_conv_with_gain<R: Rng>(
    store: &mut ParamStore,
    rng: &mut R,
    name: &str,
    cin: usize,
    cout: usize,
    kernel: usize,
    stride: usize,
    padding: usize,
    gain: f64,
) -> Result<Conv2d> {
    let fan_in = cin * kernel * kernel;
    let normal = Normal::new(0.0f32, (gain / (fan_in as f64).sqrt()) as f32).expect("positive std");
    let weights: Vec<f32> = (0..cout * fan_in).map(|_| normal.sample(rng)).collect();
    let weight = store.insert(
        format!("{name}.weight"),
        Tensor::from_vec(weights, (cout, cin, kernel, kernel), &Device::Cpu)?,
    )?;
    let bias = store.insert(format!("{name}.bias"), Tensor::zeros(cout, candle_core::DType::F32, &Device::Cpu)?)?;
    Ok(Conv2d { weight, bias: Some(bias), stride, padding })
}
