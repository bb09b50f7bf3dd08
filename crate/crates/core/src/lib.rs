//! Simulation and signal processing for ambient-RF motion sensing.
//!
//! An amplify-and-forward relay retransmits an ambient OFDM signal towards
//! the scene. Mixing what comes back with the conjugate of the forwarded copy
//! yields a slowly varying baseband per receive antenna whose phase follows
//! each reflector's path length. This crate covers that chain end to end:
//!
//! - [`signal_model`]: OFDM synthesis and the multipath moving-object channel.
//! - [`mixer_doppler`]: self-mixing, low-pass isolation, the closed-form
//!   baseband, and velocity from unwrapped phase.
//! - [`sanitizer`]: reduction of each window of baseband samples to one point.
//! - [`beamformer`]: differential beamforming heatmaps over angle grids.
//! - [`dnn_numerics`]: patch sequencing, decoder shapes, and training losses
//!   with analytic gradients.
//! - [`eval_metrics`]: IoU, average precision, OKS, and PCK.

pub mod beamformer;
pub mod dnn_numerics;
pub mod error;
pub mod eval_metrics;
pub mod mixer_doppler;
pub mod sanitizer;
pub mod signal_model;

pub use error::{Error, Result, Stage};

#[cfg(doctest)]
mod guide {
    #[doc = include_str!("../../../book/src/signal-model.md")]
    mod signal_model {}
    #[doc = include_str!("../../../book/src/doppler.md")]
    mod doppler {}
    #[doc = include_str!("../../../book/src/sanitizer.md")]
    mod sanitizer {}
    #[doc = include_str!("../../../book/src/beamforming.md")]
    mod beamforming {}
    #[doc = include_str!("../../../book/src/learning-numerics.md")]
    mod learning_numerics {}
    #[doc = include_str!("../../../book/src/metrics.md")]
    mod metrics {}
}
