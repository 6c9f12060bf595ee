//! Isotypic decomposition of window self-attention under finite permutation
//! groups.
//!
//! A finite group `H` acting on the `k` positions of a token window splits
//! `R^k` into isotypic components, one per real irreducible representation.
//! The orthogonal projectors onto those components commute with the action,
//! so attention computed per component stays `H`-equivariant while exposing
//! one channel per symmetry type.
//!
//! The crate is `no_std` and only needs `alloc`. File formats, the command
//! line and anything else touching the OS live in `psead-cli`.
//!
//! Module map:
//!
//! * [`numerics`]: dense row-major matrices, row softmax, seeded generator.
//! * [`groups`]: permutations, cyclic/dihedral/symmetric groups, Cayley
//!   tables, conjugacy classes and the permutation representation.
//! * [`irreps`]: real character tables and the isotypic projector family.
//! * [`attention`]: plain attention plus the pre- and post-projection
//!   decompositions and equivariance measurement.
//! * [`layer`]: a trainable single-window layer with analytic gradients.
//! * [`synth`]: seeded palindrome/cyclic window generators and one-hot DNA
//!   encoding.
//! * [`metrics`]: accuracy/F1, the equivariance tracker and activation
//!   mapping.

#![no_std]
#![warn(missing_debug_implementations)]

extern crate alloc;

pub mod attention;
mod error;
pub mod groups;
pub mod irreps;
pub mod layer;
pub mod metrics;
pub mod numerics;
pub mod synth;

pub use error::{Error, Result};
pub use numerics::{Matrix, Rng};
