//! Squeezed light through a fading channel: Gaussian source model, channel
//! record synthesis, transmission-binned postselection, and maximum-likelihood
//! Fock-basis tomography with Wigner-function output.

// `!(x > 0.0)` style checks are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod channel;
pub mod density;
pub mod error;
pub mod fock;
pub mod gaussian;
pub mod io;
pub mod mle;
pub mod par;
pub mod postselect;
pub mod quadrature;
pub mod rng;
pub mod tomography;
pub mod wigner;

pub use density::DensityMatrix;
pub use error::{Error, Result};
pub use gaussian::{gaussian_to_fock, GaussianDarkPlaneState, StateConfig};
pub use par::Parallelism;
