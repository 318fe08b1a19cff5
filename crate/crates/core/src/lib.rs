//! Computations for free group automorphisms: train tracks, growth, real
//! pretrees, equivariant blow-ups and index theory.

pub mod automorphism;
pub mod blowup;
pub mod error;
pub mod graph;
pub mod growth;
pub mod index;
pub mod moves;
pub mod parse;
pub mod pf;
pub mod pretree;
pub mod quad;
pub mod stallings;
pub mod train_track;
pub mod word;

pub use error::{Error, Result};
pub use word::{Generator, Word};
