//! Image and render-stack persistence.

mod manifest;
mod pfm;

pub use manifest::{
    load_stack, read_manifest, write_manifest, ManifestRow, Role, StackEntry, MANIFEST_HEADER,
};
pub use pfm::{read_pfm, read_pfm_bytes, write_float_map, write_pfm, write_pfm_bytes};
