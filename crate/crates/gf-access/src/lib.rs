//! Grant-free uplink access with K-repetition coding over a shared slot pool.
//!
//! Deterministic Steiner-system access patterns vs. random slot selection,
//! evaluated by exact combinatorics, analytic outage approximations and
//! Monte Carlo simulation.

pub mod analytic;
pub mod codebook;
pub mod combinatorics;
pub mod numerics;
pub mod optimizer;
pub mod simulator;
