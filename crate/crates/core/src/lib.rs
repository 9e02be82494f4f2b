//! Stochastic simulator for NV-center relaxometry in Gd-tagged nanodiamonds.
//!
//! The crate computes NV longitudinal relaxation under surface and Gd spin
//! noise, simulates photoluminescence readout with photon shot noise over
//! randomized nanodiamond ensembles, and scores detection performance:
//! density sensitivity, minimum detectable molecule counts, and FNR/FPR at a
//! balanced-accuracy-optimal threshold.

pub mod calibration;
pub mod classifier;
pub mod config;
pub mod defaults;
pub mod error;
pub mod experiments;
pub mod physics;
pub mod readout;
pub mod rng;
pub mod sampling;
pub mod sensitivity;

pub use error::{Error, Result};
pub use physics::{PhysicalConstants, RelaxationBreakdown, RelaxationModel, SensorConfig, SpinBathParams};
pub use readout::ReadoutParams;
pub use sampling::EnsembleSpec;
