//! Lattice-aware compilation of linear-interferometer unitaries.
//!
//! The pipeline decomposes an N x N unitary into MZI blocks that only act on
//! neighbouring sites of a 2D lattice, picks row/column relabelings of the
//! unitary that make many of those blocks close to identity, and then drops
//! the small beamsplitters while tracking the exact fidelity of what is left.
//!
//! - [`numerics`]: complex matrices, Haar sampling, permutations, fidelity.
//! - [`topology`]: device lattice and elimination-pattern trees.
//! - [`decomposer`]: elimination engine and reconstruction.
//! - [`mapper`]: zero-cost qumode relabeling.
//! - [`dropout`]: threshold search and probabilistic gate dropout.
//! - [`circuit`]: compiled-circuit model, gate counts and file formats.
//! - [`pipeline`]: end-to-end compile for each experiment configuration.

pub mod circuit;
pub mod decomposer;
pub mod dropout;
pub mod error;
pub mod mapper;
pub mod numerics;
pub mod pipeline;
pub mod topology;

pub use error::{Error, Result};
pub use numerics::{ComplexMatrix, PermutationPair, UnitaryMatrix};
pub use topology::{Coord, Lattice, PatternTree};
