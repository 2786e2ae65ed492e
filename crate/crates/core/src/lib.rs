//! Keypoint counting classifiers: a training-free, self-explaining image
//! classifier on top of vision transformer patch tokens.
//!
//! Each image is reduced to a handful of keypoints (foreground segments of the
//! upsampled token grid and their mean token). A query is matched against the
//! keypoints of per-class prototype images by mutual nearest neighbours, and
//! the class with the most matches wins. The matches are the explanation and
//! can be rendered as an SVG figure.

pub mod classifier;
pub mod config;
pub mod container;
pub mod error;
pub mod eval;
mod format;
pub mod gallery;
pub mod keypoints;
pub mod matching;
pub mod render;
pub mod synth;

pub use classifier::{count_scores, explanation_complexity, predict, Prediction};
pub use config::{PipelineConfig, SelectionStrategy};
pub use container::{read_container, write_container, Dataset, DatasetMeta, ForegroundMask, TokenGrid};
pub use error::{KccError, Result};
pub use format::{ElementType, EntryInfo};
pub use gallery::{build_gallery, load_gallery, save_gallery, PrototypeGallery, PrototypeRecord};
pub use keypoints::Keypoint;
pub use matching::{cosine_distance, mutual_nn, prune_prototypes, Match, MatchSet};
