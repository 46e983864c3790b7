//! Shared domain types, the DESC1 descriptor format and dataset manifests.

mod descriptor;
mod manifest;
mod types;

pub use descriptor::{
    decode_descriptor_bytes, encode_descriptor_bytes, read_descriptor_file, read_descriptor_header, write_descriptor_file,
    DescriptorMatrix, DESC1_HEADER_LEN, DESC1_MAGIC,
};
pub use manifest::{load_manifest, write_manifest, Dataset, Split, VideoRecord};
pub use types::{
    encoding_sidecar_path, read_encoding, write_encoding, ActivationTensor, Encoding, EncodingKind,
    UNIT_NORM_TOL,
};
pub(crate) use types::l2_norm;
