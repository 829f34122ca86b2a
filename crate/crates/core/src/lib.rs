//! Finite-depth certificates for weighted `l_p`-like equivalence relations.

pub mod cert;
pub mod dyadic_fn;
pub mod embedding;
pub mod numeric;
pub mod reduction;
pub mod relation;
pub mod scales;
pub mod subsets;
