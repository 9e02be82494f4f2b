//! Default parameter values.
//!
//! The `CALIBRATED_*` values are the output of [`crate::calibration::calibrate`]
//! on the default ensemble at seed 0 and are frozen here; the acceptance
//! suite re-runs the calibration and checks they still agree.

use crate::physics::{PhysicalConstants, RelaxationModel, SpinBathParams};
use crate::readout::ReadoutParams;

/// Background relaxation time (s).
pub const T1_BULK: f64 = 3.0e-3;
/// Surface paramagnetic defect density (nm⁻²).
pub const DEFECT_DENSITY: f64 = 1.0;
pub const GD_PER_CDNA: f64 = 1.0;
/// Density-independent Gd fluctuation rate (s⁻¹).
pub const GD_INTRINSIC_RATE: f64 = 1.0e8;

/// Coefficient of √n in the Gd fluctuation rate (s⁻¹ nm).
pub const CALIBRATED_GD_RATE_COEFF: f64 = 25_118_864_315.095_795;
/// Fluctuation rate of the surface-defect bath (s⁻¹).
pub const CALIBRATED_SURFACE_RATE: f64 = 3.0e8;
pub const CALIBRATED_CONTRAST: f64 = 0.45;
/// Photons collected from one sensor over a full ensemble-readout measurement.
pub const CALIBRATED_PHOTONS_PER_MEAS: f64 = 1.0e4;

/// Photons detected per single readout shot of the sensitivity cycle.
pub const PHOTONS_PER_SHOT: f64 = 0.03;
/// Per-shot overhead: initialization and readout (s).
pub const DEAD_TIME: f64 = 2.0e-6;
/// Fixed dark time of the ensemble readout (s).
pub const DARK_TIME: f64 = 200.0e-6;

pub fn gd_bath() -> SpinBathParams {
    SpinBathParams {
        intrinsic_rate: GD_INTRINSIC_RATE,
        rate_density_coeff: CALIBRATED_GD_RATE_COEFF,
        standoff: 0.0,
    }
}

pub fn defect_bath() -> SpinBathParams {
    SpinBathParams {
        intrinsic_rate: CALIBRATED_SURFACE_RATE,
        rate_density_coeff: 0.0,
        standoff: 0.0,
    }
}

pub fn relaxation_model() -> RelaxationModel {
    RelaxationModel {
        constants: PhysicalConstants::default(),
        gd_bath: gd_bath(),
        defect_bath: defect_bath(),
    }
}

pub fn readout() -> ReadoutParams {
    ReadoutParams {
        contrast: CALIBRATED_CONTRAST,
        photons_per_meas: CALIBRATED_PHOTONS_PER_MEAS,
        photons_per_shot: PHOTONS_PER_SHOT,
        dead_time: DEAD_TIME,
        dark_time: DARK_TIME,
    }
}
