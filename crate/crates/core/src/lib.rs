//! Delay-optimal cooperative edge caching over Poisson small-cell networks.
//!
//! Small-cell base stations (SBSs) and users are modeled as independent Poisson
//! point processes. Every user is served by a cluster of its `K` nearest SBSs,
//! each SBS stores the same number of fountain-coded segments per file, and the
//! segments that cannot be collected from the cluster are fetched over the
//! backhaul by the nearest SBS.
//!
//! The crate is organized bottom-up:
//!
//! * [`popularity`] builds request distributions (Zipf or view-count traces).
//! * [`model`] holds the closed-form quantities: hit ratios, group loads, the
//!   spectral-efficiency profile, the optimal bandwidth split and the average
//!   delay.
//! * [`placement`] computes marginal gains and runs the greedy placement, the
//!   two baseline schemes and an exhaustive oracle.
//! * [`clustering`] evaluates the cluster-size admissibility condition and
//!   searches for the delay-optimal cluster size.
//! * [`montecarlo`] drops Poisson topologies to check the analytical rate and
//!   distance laws.
//!
//! Data-parallel loops go through [`par`], which uses rayon when the
//! `parallel` feature is enabled and runs sequentially otherwise.

pub mod clustering;
pub mod error;
pub mod model;
pub mod montecarlo;
pub mod par;
pub mod placement;
pub mod popularity;
pub mod units;

pub use error::{Error, Result};
pub use model::{
    BandwidthAllocation, CachePlacement, DelayBreakdown, FileLibrary, GroupLoad, NetworkParams,
    SpectralProfile,
};
pub use par::Execution;
pub use popularity::{Popularity, ZipfParams};
