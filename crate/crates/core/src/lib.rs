//! Dense HOG features, k-means visual-word codebooks, learned descriptor
//! inversion and a bag-of-words scene-classification baseline.
//!
//! The pipeline runs image → grid of patches → HOG descriptors → nearest
//! prototype → histogram → kernel map → linear classifier. Inverting
//! descriptors (raw or quantized) back into patches and compositing them
//! shows what the quantized representation still encodes.

pub mod classify;
pub mod codebook;
pub mod corpus;
pub mod descriptors;
pub mod error;
pub mod experiment;
pub mod formats;
pub mod grid;
pub mod hog;
pub mod image;
pub mod inversion;
pub mod kernel_map;
mod linalg;
pub mod nearest;
pub mod study;
pub mod synth;

pub use classify::{balanced_accuracy, evaluate, ClassifierModel, FeatureMatrix, SvmParams};
pub use codebook::{
    bow_histogram, kmeans_fit, kmeans_fit_report, quantization_distortion, quantize, quantize_all, BowHistogram,
    Codebook, KMeansConfig, KMeansReport,
};
pub use corpus::{FolderDataset, ImageSource, MemoryCorpus};
pub use descriptors::DescriptorSet;
pub use error::{Error, Result};
pub use experiment::{run_experiment, ExperimentConfig, ExperimentReport, PipelineConfig, SplitResult};
pub use grid::{extract_patch, grid_positions, GridSpec, PatchWindow};
pub use hog::{compute_hog, compute_hog_at, HogConfig, HogDescriptor};
pub use image::{GrayImage, GrayPatch};
pub use inversion::{
    dense_descriptors, high_freq_energy, reconstruct, train_inverter, Inverter, InverterConfig, RidgeSystem,
};
pub use kernel_map::{exact_chi2_kernel, kernel_map, l1_normalize, KernelMapConfig};
pub use study::{StimulusEntry, StudyCondition};
