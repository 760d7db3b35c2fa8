//! Virtual scrolling over large key-ordered tables.
//!
//! Each key tuple is mapped to an arbitrary-precision ordinal by an
//! order-preserving numerator. A monotone interpolation table then relates
//! scrollbar positions to ordinals, so a viewport can be fetched with a
//! single index seek instead of an `OFFSET` scan. Row counts, which are
//! slow on most databases, are only ever issued in the background to refine
//! the table.

pub mod collation;
pub mod dataset;
pub mod engine;
pub mod interpolator;
pub mod numerators;
pub mod stats;
pub mod synth;

/// Position of a key tuple in the total order of all conforming tuples.
pub type Ordinal = num_bigint::BigUint;
/// Exact rational used by the reference model.
pub type Rational = num_rational::BigRational;

pub use collation::{CollationRules, Sensitivity};
pub use engine::{EngineConfig, EngineEvent, ScrollEngine, Window};
pub use dataset::{Direction, FieldSpec, IndexedTable, KeySchema, Row};
pub use interpolator::InterpolationTable;
pub use numerators::{CompositeCodec, FieldValue, ScalarCodec, ScalarKind};
pub use stats::SegmentModel;
