//! Grid-free Monte Carlo / random-walk solver for stationary elliptic
//! boundary-value problems
//!
//! ```text
//! α∆u + ω·∇u − σu + f = 0   in Ω,      u = g   on ∂Ω
//! ```
//!
//! The solution at a point is the expectation of a functional of the Itô
//! diffusion `dX = ω dt + √(2α) dW` stopped at its first exit from Ω. The crate
//! simulates that diffusion the way an analog/digital hybrid machine would
//! (noise sources, a ±1 value range with overload, comparator or table-lookup
//! boundary detection, quantized readout) and ships a finite-difference
//! reference solver to validate the sampled fields against.
//!
//! Module map:
//! - [`geometry`]: domains, point classification, boundary crossings and the
//!   quantized lookup-table boundary oracle.
//! - [`machine`]: noise sources and machine fidelity constraints.
//! - [`sde`]: a single realization of the walk and its payoff.
//! - [`estimator`]: per-point statistics and full-field sweeps.
//! - [`field`]: the field lattice and its CSV format.
//! - [`fdref`]: finite-difference reference solver and field comparison.
//! - [`render`], [`config`], [`runner`]: command-line plumbing.

pub mod config;
pub mod error;
pub mod estimator;
pub mod fdref;
pub mod field;
pub mod geometry;
pub mod machine;
pub mod render;
pub mod runner;
pub mod sde;

pub use error::{Error, Result};
pub use geometry::{DomainSpec, Point2};
