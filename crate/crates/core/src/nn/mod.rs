//! The trainable networks and the frozen perceptual backbone.

pub mod backbone;
pub mod conv;
pub mod discriminator;
pub mod generator;
pub mod params;

pub use backbone::{FeatureBackbone, Tap};
pub use conv::{conv2d, leaky_relu, max_pool2x2, Conv2d};
pub use discriminator::{Discriminator, MIN_DISCRIMINATOR_SIZE};
pub use generator::{AirlightNet, TransmissionNet, MIN_GENERATOR_SIZE};
pub use params::ParamStore;

/// Negative slope of every leaky ReLU in the trainable networks.
pub const LEAKY_SLOPE: f64 = 0.2;
