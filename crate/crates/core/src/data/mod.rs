//! Stereo datasets: manifests, image ingestion, augmentation, synthetic
//! scenes and pair-level train/test splits.

pub mod augment;
pub mod image_io;
pub mod manifest;
pub mod split;
pub mod synth;

pub use augment::{augment, augment_all, AugmentConfig};
pub use image_io::{load_and_resize, resize_bilinear, write_dataset};
pub use manifest::{DatasetManifest, ManifestEntry};
pub use split::{split, SplitPlan};
pub use synth::{synthesize_dataset, synthesize_stereo, SynthConfig};

pub use crate::routing::StereoSample;

/// SHA-256 over ids, labels and pixel bytes, in sample order.
pub fn dataset_digest(samples: &[StereoSample]) -> String {
    use sha2::{Digest, Sha256};
    let mut h = Sha256::new();
    for s in samples {
        h.update(s.pair_id.as_bytes());
        h.update([0u8]);
        h.update(s.source.as_bytes());
        h.update([0u8, s.label as u8]);
        for t in [&s.left_eye, &s.right_eye] {
            for v in t.data() {
                h.update(v.to_le_bytes());
            }
        }
    }
    h.finalize().iter().map(|b| format!("{b:02x}")).collect()
}
