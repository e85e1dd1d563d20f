//! Simulator for distributed dual averaging over networks: graph
//! families and their spectra, doubly stochastic communication
//! protocols, proximal projections, the synchronous optimization state
//! machine with runtime bound auditors, token-walk and projected
//! subgradient baselines, and a reproducible experiment harness.

pub mod baselines;
pub mod dda;
pub mod graph;
pub mod harness;
pub mod mixing;
pub mod objectives;
pub mod proximal;
