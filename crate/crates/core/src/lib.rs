//! Toolkit for generating BCC/B2 superalloy candidates, scoring them against
//! phase-equilibrium tables, and preference-tuning a small composition policy.

pub mod chem;
pub mod phase;
pub mod reward;
pub mod datasets;
pub mod policy;
pub mod metrics;
pub mod baselines;
pub mod analysis;
