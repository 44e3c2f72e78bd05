//! Singular symplectic reduction for linear actions of compact groups.
//!
//! The crate computes momentum maps of linear symplectic group actions,
//! Hilbert-map embeddings of the reduced space at zero, its decomposition
//! into symplectic pieces, the reduced Poisson structure, and Hamiltonian
//! dynamics on both the full and reduced spaces, together with the
//! verification checks that tie these together.

pub mod builtins;
pub mod dynamics;
pub mod error;
pub mod exact;
pub mod groups;
pub mod invariants;
pub mod lattice;
pub mod poly;
pub mod strata;
pub mod symplectic;

pub use error::{Error, Result};
