//! Renormalized vortex energies at the three scales of the problem.
//!
//! - [`macroscopic`]: the finite part of the interaction energy of point
//!   vortices in the sample, after removing the `π Σ d² ln(1/r)` core
//!   divergence.
//! - [`mesoscopic`]: the cluster energy of unit vortices confined by the
//!   quadratic well of the London potential, and its minimizers.
//! - [`microscopic`]: the core-scale energy correction from the inclusion
//!   geometry, computed through an equivalent conductance problem.

pub mod macroscopic;
pub mod mesoscopic;
pub mod microscopic;

pub use macroscopic::{annulus_energy, canonical_phase, solve_regular_part, w_macro};
pub use mesoscopic::{minimize_w_meso, w_meso, w_meso_grad};
pub use microscopic::{minimize_w_micro, w_micro};
