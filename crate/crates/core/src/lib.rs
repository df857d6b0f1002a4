//! Learning discrete graphical models by interaction screening.
//!
//! The crate provides explicit energy models over finite alphabets, exact and
//! Gibbs samplers, the linear-basis screening estimator (GRISE), a small MLP
//! engine, the neural screening estimator (NeurISE) with structure and
//! full-energy variants, and the evaluation metrics used to compare them.

pub mod alphabet;
pub mod basis;
pub mod energy;
pub mod error;
pub mod eval;
pub mod generators;
pub mod grise;
pub mod io;
pub mod model;
pub mod neural;
pub mod neurise;
pub mod samples;
pub mod sampling;
pub mod structure;

pub use alphabet::Alphabet;
pub use basis::{BasisKind, BasisTerm, PartialBasis};
pub use error::{Error, Result};
pub use model::EnergyModel;
pub use samples::{SampleSet, WeightedConfigs};

/// Deterministic RNG used for every random draw in the crate.
pub type Rng = rand_chacha::ChaCha8Rng;

pub fn seeded_rng(seed: u64) -> Rng {
    use rand::SeedableRng;
    rand_chacha::ChaCha8Rng::seed_from_u64(seed)
}
