//! Exact factorisation certificates for the joints and multijoints
//! inequalities over prime fields and the rationals.
//!
//! The crate is organised in three tiers:
//!
//! * **Exact geometry** — prime-field and rational scalars ([`field`]),
//!   vectors and canonical lines ([`vector`], [`line`]), subspaces with
//!   unique reduced bases ([`subspace`]), and exact root expressions
//!   ([`rootexpr`]).
//! * **Counting and structure** — joint counts and the multilinear operator
//!   ([`joints`]), heavy-subspace chains with their constant ledger
//!   ([`heavy`]).
//! * **Optimisation and certificates** — the discrete dual pair of solvers
//!   ([`duality`]), line closures ([`closure`]), and factorisation
//!   certificates with exact verification ([`certificate`]).
//!
//! Everything that feeds a verdict (heaviness, admissibility, certificate
//! checks) runs in exact arithmetic; floating point appears only in solver
//! iterations and human-readable reports.

pub mod error;
pub mod field;
pub mod vector;
pub mod line;
pub mod subspace;
pub mod rootexpr;
pub mod joints;
pub mod heavy;
pub mod duality;
pub mod closure;
pub mod certificate;
pub mod io;
pub mod gen;
pub mod report;

pub use error::{Error, Result};
pub use field::{FieldSpec, Scalar};
pub use line::{canonical_line, Line};
pub use rootexpr::RootExpr;
pub use vector::Vector;

// Keep the guide's code samples compiling: each chapter is attached as a
// doctest so `cargo test` exercises every snippet in the book.
#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/exact-arithmetic.md")]
    mod exact_arithmetic {}
    #[doc = include_str!("../../../book/src/joints.md")]
    mod joints {}
    #[doc = include_str!("../../../book/src/heavy-chains.md")]
    mod heavy_chains {}
    #[doc = include_str!("../../../book/src/duality.md")]
    mod duality {}
    #[doc = include_str!("../../../book/src/certificates.md")]
    mod certificates {}
}
