//! Deterministic volume conditioning: reorientation, intensity normalization,
//! isotropic resampling and binary dilation.

mod morphology;
mod normalize;
mod reorient;
mod resample;

pub use morphology::{dilate, ElementShape, StructuringElement};
pub use normalize::zscore_normalize;
pub use reorient::{reorient, reorient_labels};
pub use resample::{resample_iso, resample_labels, resampled_grid, Interpolation, ResampleSpec};
