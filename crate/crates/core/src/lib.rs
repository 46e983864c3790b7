//! Video feature encoding from deep-network activations and local descriptors.
//!
//! The pipeline reads per-video descriptor matrices (DESC1 files listed in a
//! JSON manifest), optionally reduces them with PCA, encodes them as
//! Objects1K averages, average-pooled activations, VLAD or Fisher vectors,
//! fuses the encodings and classifies them with one-vs-all linear SVMs.

pub mod classify;
pub mod codebook;
pub mod container;
pub mod datamodel;
pub mod encode;
pub mod error;
pub mod gmm;
pub mod pipeline;
pub mod reduce;
pub mod sampling;
pub mod synth;

pub use classify::{evaluate, predict, train_one_vs_all, Evaluation, SvmModel, SvmParams};
pub use codebook::{fit_kmeans, Codebook};
pub use datamodel::{
    load_manifest, read_descriptor_file, write_descriptor_file, ActivationTensor, Dataset,
    DescriptorMatrix, Encoding, EncodingKind,
};
pub use encode::{
    average_pool, encode_fisher, encode_lcd, encode_vlad, fuse, l2_normalize, lcd_reshape,
    objects1k, power_law, EncoderConfig, LcdModel,
};
pub use error::{Error, Result};
pub use gmm::{fit_gmm, posteriors, GmmModel};
pub use reduce::{apply_pca, fit_pca, PcaModel};
pub use synth::{generate, SynthSpec};
