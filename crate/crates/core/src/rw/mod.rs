//! The basic seeded random walker on a brick-sized 6-connected lattice.
//!
//! Edge weights come from one of several similarity functions ([`weights`]),
//! seeds are rasterized from points and polylines ([`seeds`]), and the
//! Dirichlet problem over the unseeded voxels is solved with preconditioned
//! conjugate gradients ([`solver`]).

pub mod seeds;
pub mod solver;
pub mod weights;

pub use seeds::{rasterize_labels, LocalGeometry, LocalLabel, SeedMap, SEED_TOLERANCE};
pub use solver::{dirichlet_energy, solve, threshold, BrickSolution, Preconditioner, SolverConfig};
pub use weights::{compute_weights, difference_variance, EdgeWeights, WeightSpec};
