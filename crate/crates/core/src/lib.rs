//! Simulation and capacity-bound toolkit for Gaussian channels whose noise
//! variance grows with a weighted sum of past input powers:
//!
//! ```text
//! Y_k = x_k + sqrt(σ² + Σ_{ν=1}^{k−1} α_{k−ν} x_ν²) · U_k
//! ```
//!
//! - [`coeffs`]: heating coefficient sequences, tails, high-SNR classification
//! - [`channel`]: sample-path simulation, including the stationarized variant
//! - [`divergence`]: Gaussian and Gaussian-mixture relative entropies
//! - [`bounds`]: capacity upper bound, flash lower bound, sweeps
//! - [`flashsim`]: flash input paths, mutual information, a PPM demo
//! - [`cli`]: the `ddnoise` command-line front end
//!
//! All rates are in nats.

pub mod bounds;
pub mod channel;
pub mod cli;
pub mod coeffs;
pub mod divergence;
pub mod flashsim;
pub mod quad;
pub mod rng;

pub use bounds::{
    build_scheme, cpuc_lower_sweep, cpuc_upper, feedback_capacity_upper, lower_bound_rate,
    sandwich, BoundReport, FlashScheme, SchemeRule, SnrRule,
};
pub use channel::{ChannelInstance, PastTail, StationaryConverter};
pub use coeffs::{CoeffSeq, HighSnrClass};
pub use divergence::{gaussian_kl, DiagGaussian, KlEstimate, TwoComponentMixture};
