//! Depth-based random-haze baseline and set-level metrics.

pub mod baseline;
pub mod fid;
pub mod psnr;
pub mod report;

pub use baseline::{baseline_render, BaselineConfig, BaselineSample};
pub use fid::{compute_set_statistics, fid, FeatureExtractor, PooledTap, SetStatistics, StatsAccumulator};
pub use psnr::psnr;
pub use report::{evaluate_sets, EvalReport};
