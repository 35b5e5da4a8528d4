//! Finite predicates, discrete measures, and partitions of unity.

mod measure;
mod ops;
mod partition;
mod predicate;

pub use measure::{indicator, localize, DiscreteMeasure, Localization, Sampler};
pub use ops::{bind_measures, check_measures, expectation, morley_product, oscillation, permutation_invariance_check};
pub(crate) use ops::contract;
pub use partition::{GridPartition, Mode, PartitionOfUnity};
pub use predicate::{for_each_index, generators, Axis, FuzzyPredicate};
