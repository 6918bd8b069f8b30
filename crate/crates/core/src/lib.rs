//! Numerical laboratory for cut-off light-cone closed bosonic string field theory.
//!
//! The library is organized around the objects of the cut-off theory:
//!
//! * [`fock`] — truncated bosonic Fock spaces over `L²(S¹,ℝ) ⊗ ℝ^d`: basis
//!   enumeration under an energy cutoff, Hamiltonians, heat semigroups,
//!   ladder and rotation operators, and trace oracles.
//! * [`projection`] — the string-splitting map on single-particle space and
//!   its second quantization `F → F ⊗ F`, including heat-smoothed families.
//! * [`measure`] — sampling of the cut-off free string field (exact
//!   stationary Ornstein–Uhlenbeck paths in time, white noise in the length
//!   direction) and statistical verification of its covariance.
//! * [`interaction`] — the cubic string vertex, the cut-off interaction
//!   functional, the partition function `Z(λ)`, and coupled-cutoff Cauchy
//!   diagnostics.
//! * [`graphs`] — directed trivalent ribbon graphs, Wick pairing generation
//!   for moments of the interaction, and Feynman-rule activity evaluation as
//!   truncated-Fock tensor-network traces.
//! * [`surfaces`] — glued flat surfaces with conical points built from graph
//!   data, FEM Laplacian spectra, and a zeta-regularized determinant with a
//!   flat-torus oracle.
//!
//! Everything is pure-value and deterministic: identical parameters and seeds
//! produce identical results.

pub mod error;
pub mod fock;
pub mod graphs;
pub mod interaction;
pub mod measure;
pub mod projection;
pub mod surfaces;
pub mod util;

pub use error::{Error, Result};
