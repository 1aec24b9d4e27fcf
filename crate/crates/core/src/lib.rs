//! Numerical detection and certification of dominated sets of matrices.
//!
//! Two independent routes decide whether a finite family of invertible
//! matrices is dominated of index `i`: decay of the singular-value gap
//! `sigma_{i+1} / sigma_i` over word products ([`words`]), and the
//! construction of strictly invariant multicones in the Grassmannian
//! ([`multicone`]). [`splitting`] estimates the invariant splitting along
//! itineraries and checks the domination inequality directly, and
//! [`example4d`] builds a four-dimensional dominated family none of whose
//! multicones is locally semiconvex.

pub mod cli;
pub mod error;
pub mod example4d;
pub mod grassmann;
pub mod linalg;
pub mod multicone;
pub mod product;
pub mod splitting;
pub mod words;

pub use error::{Error, Result};
