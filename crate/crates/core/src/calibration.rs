//! Coarse grid calibration of the free bath and readout constants.
//!
//! Stage 1 picks the surface-bath rate and the Gd rate coefficient c_R from
//! the noiseless single-sensor and 10-sensor classification of the default
//! ensemble, restricted to single-sensor accuracies inside [`BA_BAND`].
//! Noiseless accuracy is invariant under the contrast (PL is an increasing
//! affine map of exp(−Γτ)), so contrast and photon budget are fixed
//! afterwards: contrast as the smallest grid value giving a visible
//! PL step on the reference sensor, photons as the smallest budget keeping
//! noisy 10-sensor accuracy high.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::classifier::{optimize_threshold, simulate_ensemble, ThresholdReport};
use crate::defaults;
use crate::error::{Error, Result};
use crate::physics::{RelaxationModel, SensorConfig, SpinBathParams};
use crate::readout::{pl_expected, virus_pair_pl, ReadoutParams};
use crate::sampling::{population, EnsembleSpec};

/// Surface-bath rates 3e7 … 3e10 s⁻¹, eight per decade.
pub fn surface_rate_grid() -> Vec<f64> {
    (0..=24).map(|i| 3e7 * 10f64.powf(i as f64 / 8.0)).collect()
}

/// Gd rate coefficients 1e9 … 2.5e11 s⁻¹ nm, ten per decade.
pub fn gd_rate_coeff_grid() -> Vec<f64> {
    (0..=24).map(|j| 1e9 * 10f64.powf(j as f64 / 10.0)).collect()
}

pub const CONTRAST_GRID: [f64; 9] = [0.1, 0.15, 0.2, 0.25, 0.3, 0.35, 0.4, 0.45, 0.5];
pub const PHOTON_GRID: [f64; 5] = [1e3, 3e3, 1e4, 3e4, 1e5];

/// Target single-sensor rates.
pub const TARGET_FNR_SINGLE: f64 = 0.14;
pub const TARGET_FPR_SINGLE: f64 = 0.239;
/// Target 10-sensor rates.
pub const TARGET_FNR_GROUP: f64 = 0.001;
pub const TARGET_FPR_GROUP: f64 = 0.009;
/// Admissible single-sensor balanced accuracy.
pub const BA_BAND: (f64, f64) = (0.78, 0.84);
pub const MIN_PAIR_SEPARATION: f64 = 0.05;
pub const MIN_NOISY_GROUP_BA: f64 = 0.99;
pub const GROUP_SIZE: usize = 10;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CalibrationResult {
    pub surface_rate: f64,
    pub gd_rate_coeff: f64,
    pub contrast: f64,
    pub photons_per_meas: f64,
    pub single: ThresholdReport,
    pub group: ThresholdReport,
    pub noisy_group: ThresholdReport,
    pub pair_separation: f64,
    pub loss: f64,
}

fn model_with(base: &RelaxationModel, surface_rate: f64, gd_rate_coeff: f64) -> RelaxationModel {
    RelaxationModel {
        gd_bath: SpinBathParams {
            rate_density_coeff: gd_rate_coeff,
            ..base.gd_bath
        },
        defect_bath: SpinBathParams {
            intrinsic_rate: surface_rate,
            ..base.defect_bath
        },
        ..*base
    }
}

fn group_means(values: &[f64], k: usize) -> Vec<f64> {
    values
        .chunks_exact(k)
        .map(|c| c.iter().sum::<f64>() / k as f64)
        .collect()
}

/// Noiseless single and grouped reports for one candidate model.
fn noiseless_reports(
    sensors: &[SensorConfig],
    model: &RelaxationModel,
    readout: &ReadoutParams,
) -> Result<(ThresholdReport, ThresholdReport)> {
    let mut negative = Vec::with_capacity(sensors.len());
    let mut positive = Vec::with_capacity(sensors.len());
    for s in sensors {
        negative.push(pl_expected(model.relaxation(s)?.gamma_total, readout));
        positive.push(pl_expected(model.relaxation(&s.with_gd_density(0.0))?.gamma_total, readout));
    }
    let single = optimize_threshold(&negative, &positive)?;
    let group = optimize_threshold(
        &group_means(&negative, GROUP_SIZE),
        &group_means(&positive, GROUP_SIZE),
    )?;
    Ok((single, group))
}

/// Squared z-score of an observed rate against its target, using the
/// binomial standard error at the target for `n` samples.
fn z2(observed: f64, target: f64, n: usize) -> f64 {
    let se2 = target * (1.0 - target) / n as f64;
    (observed - target).powi(2) / se2
}

fn loss(single: &ThresholdReport, group: &ThresholdReport, sensors: usize) -> f64 {
    let groups = sensors / GROUP_SIZE;
    z2(single.fnr, TARGET_FNR_SINGLE, sensors)
        + z2(single.fpr, TARGET_FPR_SINGLE, sensors)
        + z2(group.fnr, TARGET_FNR_GROUP, groups)
        + z2(group.fpr, TARGET_FPR_GROUP, groups)
}

/// Sensor used for the PL-step criterion: d = 25 nm, NV at the centre,
/// default Gd loading.
pub fn reference_sensor(spec: &EnsembleSpec) -> SensorConfig {
    SensorConfig {
        diameter: 25.0,
        nv_offset: 0.0,
        gd_standoff: spec.l_mean,
        gd_density: spec.n_mean,
        defect_density: spec.template.defect_density,
        t1_bulk: spec.template.t1_bulk,
        gd_per_cdna: spec.template.gd_per_cdna,
    }
}

/// Run the three-stage search on `spec` starting from `base` (whose bath
/// rates are overwritten) and `readout` (whose contrast and photon budget
/// are overwritten).
pub fn calibrate(
    spec: &EnsembleSpec,
    base: &RelaxationModel,
    readout: &ReadoutParams,
) -> Result<CalibrationResult> {
    readout.validate()?;
    let sensors = population(spec)?;
    if sensors.len() < GROUP_SIZE {
        return Err(Error::invalid("ensemble.count", format!("calibration needs >= {GROUP_SIZE} sensors")));
    }

    let coeffs = gd_rate_coeff_grid();
    let grid: Vec<(f64, f64)> = surface_rate_grid()
        .into_iter()
        .flat_map(|rs| coeffs.iter().map(move |&cr| (rs, cr)))
        .collect();
    let scored: Vec<(f64, f64, ThresholdReport, ThresholdReport)> = grid
        .par_iter()
        .map(|&(rs, cr)| {
            let (single, group) = noiseless_reports(&sensors, &model_with(base, rs, cr), readout)?;
            Ok((rs, cr, single, group))
        })
        .collect::<Result<_>>()?;

    let mut best: Option<(f64, f64, f64, ThresholdReport, ThresholdReport)> = None;
    for (rs, cr, single, group) in scored {
        let ba = single.balanced_accuracy;
        if ba < BA_BAND.0 || ba > BA_BAND.1 {
            continue;
        }
        let l = loss(&single, &group, sensors.len());
        log::debug!("surface_rate {rs:e} c_R {cr:e}: BA1 {ba:.4} BA10 {:.4} loss {l:.4}", group.balanced_accuracy);
        if best.as_ref().is_none_or(|b| l < b.0) {
            best = Some((l, rs, cr, single, group));
        }
    }
    let (loss, surface_rate, gd_rate_coeff, single, group) = best.ok_or_else(|| {
        Error::Numeric(format!(
            "no grid point gives single-sensor balanced accuracy in [{}, {}]",
            BA_BAND.0, BA_BAND.1
        ))
    })?;
    let model = model_with(base, surface_rate, gd_rate_coeff);

    let reference = reference_sensor(spec);
    let mut contrast = None;
    let mut pair_separation = 0.0;
    for &c in &CONTRAST_GRID {
        let (neg, pos) = virus_pair_pl(&reference, &model, &ReadoutParams { contrast: c, ..*readout })?;
        pair_separation = pos - neg;
        if pair_separation >= MIN_PAIR_SEPARATION {
            contrast = Some(c);
            break;
        }
    }
    let contrast = contrast.unwrap_or_else(|| {
        log::warn!("no contrast reaches a PL step of {MIN_PAIR_SEPARATION}; using the largest");
        CONTRAST_GRID[CONTRAST_GRID.len() - 1]
    });

    let mut chosen = None;
    for &photons in &PHOTON_GRID {
        let trial = ReadoutParams {
            contrast,
            photons_per_meas: photons,
            ..*readout
        };
        let noisy = simulate_ensemble(spec, &model, &trial)?.group(GROUP_SIZE, true)?;
        let report = optimize_threshold(&noisy.negative, &noisy.positive)?;
        chosen = Some((photons, report));
        if report.balanced_accuracy >= MIN_NOISY_GROUP_BA {
            break;
        }
    }
    let (photons_per_meas, noisy_group) = chosen.expect("photon grid is non-empty");

    Ok(CalibrationResult {
        surface_rate,
        gd_rate_coeff,
        contrast,
        photons_per_meas,
        single,
        group,
        noisy_group,
        pair_separation,
        loss,
    })
}

/// Calibration of the built-in defaults.
pub fn calibrate_defaults() -> Result<CalibrationResult> {
    calibrate(&EnsembleSpec::default(), &defaults::relaxation_model(), &defaults::readout())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn contrast_does_not_change_noiseless_accuracy() {
        let spec = EnsembleSpec {
            count: 400,
            ..Default::default()
        };
        let sensors = population(&spec).unwrap();
        let model = defaults::relaxation_model();
        let a = noiseless_reports(&sensors, &model, &ReadoutParams { contrast: 0.1, ..defaults::readout() })
            .unwrap();
        let b = noiseless_reports(&sensors, &model, &ReadoutParams { contrast: 0.5, ..defaults::readout() })
            .unwrap();
        assert_eq!(a.0.balanced_accuracy, b.0.balanced_accuracy);
        assert_eq!(a.1.balanced_accuracy, b.1.balanced_accuracy);
    }

    #[test]
    fn model_with_overrides_only_rates() {
        let base = defaults::relaxation_model();
        let m = model_with(&base, 1.0, 2.0);
        assert_eq!(m.defect_bath.intrinsic_rate, 1.0);
        assert_eq!(m.gd_bath.rate_density_coeff, 2.0);
        assert_eq!(m.gd_bath.intrinsic_rate, base.gd_bath.intrinsic_rate);
        assert_eq!(m.constants, base.constants);
    }

    #[test]
    fn too_small_ensemble_rejected() {
        let spec = EnsembleSpec {
            count: 5,
            ..Default::default()
        };
        assert!(calibrate(&spec, &defaults::relaxation_model(), &defaults::readout()).is_err());
    }
}
