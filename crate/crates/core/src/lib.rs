//! Numerical simulator for holography with entangled photon pairs and a bucket detector.
//!
//! One photon of each pair enters a chamber whose wall detects photons without spatial
//! resolution; its partner is detected with full resolution after conventional optics.
//! The rate of coincidences, summed over the wall, is a hologram of whatever scatters
//! inside the chamber.
//!
//! Layers, bottom up:
//!
//! - [`grid`]: uniform grids, complex fields, integration masks, midpoint-rule inner products.
//! - [`optics`]: linear optical systems with forward and adjoint application.
//! - [`biphoton`]: coincidence amplitude and rate, wall-marginal hologram, the coherence
//!   kernel path, singles rates and the separable classical baseline.
//! - [`scene`]: point scatterers in a chamber, the effective source-to-wall system and the
//!   split of the hologram into direct, scattered and interference terms.
//! - [`holography`]: recording and digital back-propagation of the hologram.
//! - [`montecarlo`]: seeded photon-pair event sampling and histogram convergence.
//! - [`oracle`]: brute-force reference implementations used to check everything above.
//! - [`formats`] and [`config`]: file formats, experiment configuration, presets.

pub mod biphoton;
pub mod config;
pub mod error;
mod fft;
pub mod formats;
pub mod grid;
pub mod hologram;
pub mod holography;
pub mod montecarlo;
pub mod optics;
pub mod oracle;
pub mod scene;

pub use error::{QholoError, Result};
pub use grid::{inner_product, normalize, pointwise_multiply, restrict, ComplexField, DomainMask, GridSpec};
pub use hologram::{Hologram, Provenance, ScaleConvention};
pub use optics::{compose, DenseKernel, OpticalSystem};
pub use oracle::OracleBudget;

pub use num_complex::Complex64;
