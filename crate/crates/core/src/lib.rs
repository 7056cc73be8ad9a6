//! Simulator of a digital neuromorphic learning core.
//!
//! The crate covers everything that runs "on chip": fixed-point weights with
//! stochastic rounding ([`quant`]), current-based LIF layers and their
//! pre-synaptic eligibility traces ([`snn`]), and the error-triggered
//! three-factor plasticity program that the embedded processor executes at
//! every learning epoch ([`plasticity`]).

pub mod error;
pub mod plasticity;
pub mod quant;
pub mod rng;
pub mod sample;
pub mod snn;
pub mod weights;

pub use error::{Error, Result};
pub use quant::QuantizationScheme;
pub use rng::RandomSource;
pub use sample::BinnedSample;
pub use weights::{WeightMatrix, WeightView};
