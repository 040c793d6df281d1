//! Approximate Voronoi diagrams, zone diagrams and double zone diagrams for
//! point-set sites in a box under general norms.
//!
//! Dominance regions are represented as bundles of rays shot from the site
//! points; each ray ends where it stops being at least as close to its source
//! as to the competing set. Zone diagrams are approached by the alternating
//! inner/outer iteration of the `Dom` mapping, and every stage can be checked
//! against a brute-force grid oracle.

pub mod cli_io;
pub mod diagram;
pub mod dominance;
pub mod error;
pub mod geometry;
pub mod oracle;
mod spatial;

pub use error::{Error, Result};
