//! Measurement harness: Dice, surface-brick counts, scaling fits, run reports
//! and pruning / brick-size ablations.
//!
//! Masks are compared as z-ordered plane streams so full-resolution volumes
//! never have to be resident.

mod ablation;
mod dice;
mod report;
mod scaling;
mod surface;

pub use ablation::{ablate, ablation_csv, ablation_markdown, AblationRow, AblationSetting};
pub use dice::{dice, dice_masks, DiceAccumulator};
pub use report::{leaf_planes, mask_planes, segment_and_score, PhaseTimes, RunReport, SolverSummary};
pub use scaling::{scaling_fit, ScalingFit};
pub use surface::{surface_bricks_analytic, surface_bricks_mask, surface_bricks_primitives};
