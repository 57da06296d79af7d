//! Inhomogeneous renewal risk model.
//!
//! Claim sizes `Z_i` and interarrival times `theta_i` are independent but not
//! identically distributed; the surplus is `U(t) = x + c t - sum_{i <= N(t)} Z_i`
//! and ruin is `U < 0` at some claim instant. The crate estimates the ruin
//! probability `psi(x)` by Monte Carlo, computes exact lattice references,
//! and builds explicit constants `c1, c2` with `psi(x) <= exp(-c1 x)` for
//! `x >= c2`.

pub mod certificate;
pub mod cli;
pub mod config;
pub mod dist;
pub mod lundberg;
pub mod oracle;
pub mod rng;
pub mod schedule;
pub mod sim;

pub use certificate::BoundCertificate;
pub use dist::DistributionSpec;
pub use lundberg::{LemmaConstants, RuinBound};
pub use schedule::{ModelConfig, Schedule, StepLaw};
pub use sim::{RngStream, RuinEstimate};
