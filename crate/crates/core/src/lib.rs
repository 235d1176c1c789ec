//! Mean-field one-hidden-layer networks trained by gradient descent with
//! injected symmetric alpha-stable noise, structural pruning by column norms,
//! and the particle-system experiments that accompany them.
//!
//! Numerical code is generic over [`Scalar`] (`f32` or `f64`). Training and
//! all reported experiments run in `f64`; the aliases below name those
//! instantiations.

pub mod checkpoint;
pub mod data;
pub mod error;
pub mod net;
pub mod prune;
pub mod scalar;
pub mod sde;
pub mod stable;
pub mod stats;
pub mod trainer;

pub use error::{Error, Result};
pub use net::{Activation, Gradient, NetworkParams, SecondLayer};
pub use prune::PruneReport;
pub use scalar::Scalar;
pub use stable::{RandomStream, StableSpec, StreamRng, VectorType};
pub use trainer::{InitDistribution, InitSpec, TrainConfig, TrainState};

/// Network parameters in double precision.
pub type Network = NetworkParams<f64>;
/// Network parameters in single precision.
pub type Network32 = NetworkParams<f32>;
/// Gradient of the empirical risk in double precision.
pub type NetworkGradient = Gradient<f64>;
/// Training state in double precision.
pub type Trainer = TrainState<f64>;
/// Interacting particle system in double precision.
pub type Particles = sde::ParticleSystem<f64>;
