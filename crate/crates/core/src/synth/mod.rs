//! Seeded synthetic data: breathing traces with logged deep breaths,
//! defect-injected QC cases, and multi-ROI BOLD matrices that depend on a
//! respiratory target through a known kernel.

mod bold;
mod breathing;
mod corpus;
mod defects;

pub use bold::{
    convolve, gamma_kernel, gen_bold, sign_mixed_weights, symmetric_kernel, BoldSynthModel,
};
pub use breathing::{gen_respiratory, BreathingModel, DeepBreath, SynthTrace};
pub use corpus::{
    generate_corpus, generate_qc_corpus, label_matches, CorpusConfig, KernelKind, QcCase, SynthScan,
};
pub use defects::{inject_defects, DefectParams};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::dataset::DatasetError;
use crate::physio::PhysioError;

#[derive(Debug, Error)]
pub enum SynthError {
    #[error("invalid model: {0}")]
    InvalidModel(String),
    #[error("kernel of length {kernel} exceeds {n_volumes} volumes")]
    KernelTooLong { kernel: usize, n_volumes: usize },
    #[error("unsupported defect: {0}")]
    UnsupportedDefect(String),
    #[error(transparent)]
    Physio(#[from] PhysioError),
    #[error(transparent)]
    Dataset(#[from] DatasetError),
}

pub type Result<T> = std::result::Result<T, SynthError>;

/// Independent generator for one purpose (`stream`) under a seed.
pub(crate) fn rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut r = ChaCha8Rng::seed_from_u64(seed);
    r.set_stream(stream);
    r
}

/// Mixes a base seed with an index so per-scan seeds are decorrelated.
pub(crate) fn derive_seed(seed: u64, index: u64) -> u64 {
    // splitmix64 finaliser
    let mut z = seed ^ index.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}
