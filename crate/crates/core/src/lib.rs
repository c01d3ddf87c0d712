//! Hierarchical random walker segmentation for volumes that do not fit in memory.
//!
//! The input volume is stored as a bricked level-of-detail octree ([`octree`]).
//! Segmentation runs top-down over that pyramid ([`engine`]): every brick is
//! solved with the seeded random walker ([`rw`]) on a slightly expanded
//! neighborhood, seeded on its outer shell with the upsampled solution of the
//! coarser level. Branches whose result is already homogeneous or determined
//! are pruned, and branches that did not change since the previous label set
//! are reused.
//!
//! [`synth`] generates the cells / vessels test phantoms and [`eval`] holds
//! the measurement harness (Dice, scaling fits, ablations).

// Negated comparisons reject NaN along with out-of-range values.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod engine;
pub mod error;
pub mod eval;
pub mod geometry;
pub mod octree;
pub mod par;
pub mod rw;
pub mod synth;

pub use error::{Error, Result};
