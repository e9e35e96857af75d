//! Exact computations with Cuntz semigroups of folding interval algebras.
//!
//! The crate models Cu(A) for the finite stages of two inductive systems A
//! and B by step functions, computes the K-theory of their simple ideals,
//! certifies distance bounds between the connecting Cu-morphisms, and models
//! the unitary Cuntz semigroup as a layered object over an ideal lattice.

pub mod abgroups;
pub mod cli;
pub mod cumorph;
pub mod cusemi;
pub mod error;
pub mod grid;
pub mod numbers;
pub mod report;
pub mod stepfn;
pub mod systems;
pub mod unitary;

pub use error::{Error, Result};
pub use numbers::{ExtNat, LocalizedClass, Rational};
pub use stepfn::{Partition, StepFn};
