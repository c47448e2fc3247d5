//! Construction of multi-way aligned corpora from pivot-centric bitexts:
//! approximate joins on the pivot side, noised training data for a
//! correction generator, generation and assembly, and mixture planning.

pub mod corpus;
pub mod error;
pub mod generation;
pub mod noising;
pub mod pipeline;
pub mod simjoin;

pub use error::{Error, Result};
