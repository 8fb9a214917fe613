//! Numerical laboratory for the Donsker invariance principle in Wasserstein-1.

pub mod distance;
pub mod error;
pub mod estimate;
pub mod functional;
pub mod gram;
pub mod ou;
pub mod paths;
pub mod quadrature;
pub mod rng;
pub mod sobolev;

pub use error::{LabError, Result};
pub use estimate::{McEstimate, Moments};
pub use paths::{
    basis_h, coarsen, reflect_and_local_time, sample_brownian, sample_walk, BasisIndex, GridPath, IncrementLaw, LawKind, Normalization,
    Polyline,
};
pub use rng::SeededStream;
