//! Workbench for studying gradient-based evasion attacks against a deep
//! binary intrusion detector, and adversarial training as a defense.
//!
//! The crate is organized around the stages of that study:
//!
//! - [`data`] parses NSL-KDD-format CSV files, fits a [`data::FeatureSchema`]
//!   on the training split, and produces standardized, one-hot-encoded
//!   datasets with binary labels (`normal` / `anomaly`).
//! - [`nn`] is a small dense-network engine: forward pass with inverted
//!   dropout, softmax cross-entropy, reverse-mode gradients with respect to
//!   parameters *and inputs*, and an Adam optimizer. It is enough to train
//!   the 2x512 ReLU detector and nothing more.
//! - [`attacks`] implements the white-box untargeted evasion attacks FGSM,
//!   BIM and PGD over encoded feature vectors, all bounded in l-infinity.
//! - [`defense`] builds mixed clean/adversarial training sets and retrains
//!   hardened detectors.
//! - [`experiments`] orchestrates reproducible accuracy-vs-epsilon sweeps
//!   and defense grids, and emits CSV tables, plot scripts and manifests.
//! - [`synthetic`] generates a seeded NSL-KDD-format corpus so the whole
//!   pipeline can run and be tested without redistributing the dataset.
//!
//! All randomness flows from explicit seeds; identical seeds and configs
//! reproduce identical artifacts byte for byte.

pub mod attacks;
pub mod data;
pub mod defense;
pub mod error;
pub mod experiments;
pub mod io;
pub mod nn;
pub mod synthetic;

pub use error::{CoreError, Result};

/// Working floating-point precision. `f64` by default; the `f32` cargo
/// feature switches the whole compute path to single precision while
/// persisted matrix files remain 64-bit.
#[cfg(not(feature = "f32"))]
pub type Real = f64;
#[cfg(feature = "f32")]
pub type Real = f32;

/// Derive a child seed from a master seed and a context label.
///
/// Grid points, restarts and model initializations each get an independent
/// deterministic stream keyed by a stable string, so partial re-runs of a
/// sweep reproduce the exact rows they would have produced in a full run.
pub fn derive_seed(master: u64, label: &str) -> u64 {
    use sha2::{Digest, Sha256};
    let mut hasher = Sha256::new();
    hasher.update(master.to_le_bytes());
    hasher.update(b"/");
    hasher.update(label.as_bytes());
    let digest = hasher.finalize();
    u64::from_le_bytes(digest[..8].try_into().expect("digest is 32 bytes"))
}
