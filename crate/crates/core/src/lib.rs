//! Equilibria of the rational-inattention echo-chamber game.
//!
//! Players split a limited attention budget between biased primary sources
//! and each other; news then diffuses for two Poisson rounds. This crate
//! computes the resulting echo-chamber equilibria and everything the model
//! says about them:
//!
//! - [`kernel`]: the φ/h function family, uninformed-event probabilities,
//!   and stage-1 expected utilities, all in log space.
//! - [`best_response`]: single-player concave attention problems solved by
//!   KKT conditions and multiplier bisection; the dominance threshold β̄;
//!   equilibrium verification by best-response recomputation.
//! - [`solver`]: the side-level fixed-point system, core–periphery
//!   classification, network back-out, symmetric closed forms, bounded
//!   bandwidths and uniqueness certificates.
//! - [`compstat`]: the marginal-influence matrix, closed-form inverse of
//!   I + G, and equilibrium gradients in bandwidths and visibilities.
//! - [`planner`]: the utilitarian benchmark and the efficiency gap.
//! - [`extensions`]: merged mega-source, multiple independent sources,
//!   source-visibility rescaling, and the M-state symmetric game.
//! - [`sim`]: Monte Carlo diffusion validation of every analytic
//!   probability, with deterministic per-replication RNG substreams.

pub mod best_response;
pub mod compstat;
pub mod config;
pub mod error;
pub mod extensions;
pub mod kernel;
pub mod planner;
pub mod sim;
pub mod solver;

pub use config::{AttentionProfile, GameConfig, PlayerParams, Side, SourceKind};
pub use error::{Error, Result};
pub use kernel::{h, h_lambda, h_x, phi, stage1_utility, uninformed_prob, Plan};
