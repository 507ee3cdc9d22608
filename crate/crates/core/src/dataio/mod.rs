//! Snippet directories, frame decoding, normalization, resizing,
//! augmentation and the synthetic motion dataset.

mod augment;
mod image;
mod ppm;
mod snippet;
mod synth;

pub use augment::{augment, flip_box, flip_snippet, AugmentConfig};
pub use image::{denormalize_frame, normalize_frame, resize_bilinear, resize_raw, Frame, RawFrame};
pub use ppm::{decode_ppm, encode_ppm, read_ppm, write_ppm};
pub use snippet::{
    load_manifest, load_snippet, save_manifest, save_snippet, BoundingBox, Manifest, Snippet,
};
pub(crate) use synth::synth_snippet;
pub use synth::{load_synth_spec, synth_generate, SynthSpec, SYNTH_CLASSES, SYNTH_SPEC_FILE};
