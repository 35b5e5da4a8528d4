//! Covering numbers, approximations, nets, and regularity partitions for
//! finite `[0,1]`-valued predicates.
//!
//! Every pipeline returns a value that can be checked exhaustively against
//! the bound it is meant to satisfy; [`cert`] packages those checks.

// `!(x > 0.0)` rejects NaN along with nonpositive values.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cert;
pub mod covering;
pub mod distal;
mod error;
pub mod fuzzy;
pub mod io;
pub mod pipeline;
pub mod regularity;
pub mod rng;
pub mod sampling;

pub use error::{Error, Result};
pub use fuzzy::{
    bind_measures, expectation, generators, localize, morley_product, oscillation, permutation_invariance_check, Axis,
    DiscreteMeasure, FuzzyPredicate, GridPartition, Localization, Mode, PartitionOfUnity,
};

/// Absolute tolerance for probability sums and bound comparisons.
pub const TOL: f64 = 1e-9;

/// Weights at or below this are outside the support.
pub const SUPPORT_EPS: f64 = 1e-12;

#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../README.md")]
    mod readme {}
    #[doc = include_str!("../../../book/src/predicates.md")]
    mod predicates {}
    #[doc = include_str!("../../../book/src/covering.md")]
    mod covering {}
    #[doc = include_str!("../../../book/src/sampling.md")]
    mod sampling {}
    #[doc = include_str!("../../../book/src/regularity.md")]
    mod regularity {}
    #[doc = include_str!("../../../book/src/distal.md")]
    mod distal {}
    #[doc = include_str!("../../../book/src/certificates.md")]
    mod certificates {}
}
