//! Unsupervised haze rendering.
//!
//! A transmission network estimates a per-pixel transmission map from a
//! clean image, an airlight network estimates a global airlight from an
//! unpaired hazy exemplar, and the atmospheric scattering model combines the
//! two into a hazy rendering whose density is controlled by an exponent on
//! the transmission. The crate also holds the training loop, a depth-based
//! random-haze baseline, and set-level evaluation metrics.

pub mod error;
pub mod eval;
pub mod imaging;
pub mod losses;
pub mod nn;
pub mod synthetic;
pub mod train;

pub use error::{Error, Result};
pub use imaging::{
    apply_density, load_image, render_haze, save_image, to_grayscale, transmission_from_depth, Airlight, DepthMap,
    ImageTensor, TransmissionMap,
};
pub use losses::{FeatureTaps, LossWeights, SsimConfig, StructureConfig};
pub use nn::{AirlightNet, Discriminator, FeatureBackbone, Tap, TransmissionNet};
