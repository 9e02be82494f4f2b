//! Photoluminescence readout at a fixed dark time.
//!
//! PL relaxes from the polarized value 1 towards the thermal floor 1 − C:
//! `PL(τ) = (1 − C) + C·exp(−Γτ)`.

use rand::Rng;
use rand_distr::{Distribution, Normal, Poisson};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::physics::{RelaxationModel, SensorConfig};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ReadoutParams {
    /// PL contrast C between the polarized and thermal states.
    pub contrast: f64,
    /// Expected photons from one sensor over a full measurement at PL = 1.
    pub photons_per_meas: f64,
    /// Expected photons per single readout shot at PL = 1; sets the
    /// shot-noise floor of the sensitivity cycle.
    pub photons_per_shot: f64,
    /// Per-shot overhead t0 (s).
    pub dead_time: f64,
    /// Dark time τ between initialization and readout (s).
    pub dark_time: f64,
}

impl Default for ReadoutParams {
    fn default() -> Self {
        crate::defaults::readout()
    }
}

impl ReadoutParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.contrast > 0.0 && self.contrast < 1.0) {
            return Err(Error::invalid("contrast", format!("must lie in (0, 1), got {}", self.contrast)));
        }
        if !(self.photons_per_meas.is_finite() && self.photons_per_meas >= 1.0) {
            return Err(Error::invalid(
                "photons_per_meas",
                format!("must be >= 1, got {}", self.photons_per_meas),
            ));
        }
        if !(self.photons_per_shot.is_finite() && self.photons_per_shot > 0.0) {
            return Err(Error::invalid(
                "photons_per_shot",
                format!("must be > 0, got {}", self.photons_per_shot),
            ));
        }
        if !(self.dead_time.is_finite() && self.dead_time >= 0.0) {
            return Err(Error::invalid("dead_time", "must be >= 0"));
        }
        if !(self.dark_time.is_finite() && self.dark_time >= 0.0) {
            return Err(Error::invalid("dark_time", "must be >= 0"));
        }
        Ok(())
    }

    pub fn with_dark_time(&self, dark_time: f64) -> Self {
        Self { dark_time, ..*self }
    }
}

/// Normalized PL after the dark time, in [1 − C, 1].
pub fn pl_expected(gamma_total: f64, params: &ReadoutParams) -> f64 {
    let c = params.contrast;
    (1.0 - c) + c * (-gamma_total * params.dark_time).exp()
}

/// One shot-noise-limited PL read: K ~ Poisson(N·PL), returned as K/N.
///
/// Above the Poisson sampler's range the Gaussian limit N(mean, mean) is used.
pub fn pl_measured<R: Rng + ?Sized>(gamma_total: f64, params: &ReadoutParams, rng: &mut R) -> f64 {
    let mean = params.photons_per_meas * pl_expected(gamma_total, params);
    // mean > 0 always: PL >= 1 - C > 0 and photons_per_meas >= 1.
    let counts: f64 = if mean < Poisson::<f64>::MAX_LAMBDA {
        Poisson::new(mean).expect("positive Poisson mean").sample(rng)
    } else {
        Normal::new(mean, mean.sqrt()).expect("finite Gaussian").sample(rng)
    };
    counts / params.photons_per_meas
}

/// Expected PL of one sensor at its own Gd density and with the density
/// scaled down to `residual_density`.
pub fn pl_at_density(
    config: &SensorConfig,
    residual_density: f64,
    model: &RelaxationModel,
    params: &ReadoutParams,
) -> Result<f64> {
    let gamma = model.relaxation(&config.with_gd_density(residual_density))?.gamma_total;
    Ok(pl_expected(gamma, params))
}

/// `(pl_no_virus, pl_with_virus)`: Gd attached vs. fully detached.
pub fn virus_pair_pl(
    config: &SensorConfig,
    model: &RelaxationModel,
    params: &ReadoutParams,
) -> Result<(f64, f64)> {
    let attached = pl_at_density(config, config.gd_density, model, params)?;
    let detached = pl_at_density(config, 0.0, model, params)?;
    Ok((attached, detached))
}
