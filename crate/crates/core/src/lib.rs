//! Spinal level estimation from nerve-rootlet segmentations.
//!
//! The pipeline intersects each rootlet class (C2–C8, labels 2–8) with a
//! dilated spinal cord mask, measures the rostro-caudal extent of every level
//! along the cord centerline relative to the pontomedullary junction (PMJ), and
//! projects the levels back onto the cord. Supporting modules provide NIfTI-1
//! I/O, resampling and reorientation, STAPLE rater fusion, evaluation metrics
//! and synthetic phantoms with known ground truth.

pub mod cli;
pub mod consensus;
pub mod error;
pub mod geometry;
pub mod levels;
pub mod metrics;
pub mod phantom;
pub mod preprocess;
pub mod volume;

pub use error::{Error, Result};
pub use geometry::{extract_centerline, Centerline};
pub use levels::{analyze_levels, LevelAnalysis, LevelConfig, LevelExtent};
pub use volume::{read_label_map, read_nifti, write_label_map, write_nifti, Grid, LabelMap, PmjPoint, Volume3D};
