//! Reproducible random populations of nanodiamond sensors.

use rand::Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::defaults;
use crate::error::{Error, Result};
use crate::physics::SensorConfig;
use crate::rng::{stream, Purpose};

const MAX_REJECTIONS: u32 = 10_000;
const MIN_DIAMETER: f64 = 4.0;
const MIN_STANDOFF: f64 = 0.3;

/// Sensor properties shared by every member of an ensemble.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SensorTemplate {
    pub defect_density: f64,
    pub t1_bulk: f64,
    pub gd_per_cdna: f64,
}

impl Default for SensorTemplate {
    fn default() -> Self {
        Self {
            defect_density: defaults::DEFECT_DENSITY,
            t1_bulk: defaults::T1_BULK,
            gd_per_cdna: defaults::GD_PER_CDNA,
        }
    }
}

/// Parameter distributions defining a Monte Carlo population of sensors.
///
/// Diameter, Gd density and Gd standoff are independent truncated normals;
/// the NV sits uniformly in a ball of radius `nv_confinement · d/2`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EnsembleSpec {
    pub count: usize,
    pub d_mean: f64,
    pub d_sd: f64,
    pub n_mean: f64,
    pub n_sd: f64,
    pub l_mean: f64,
    pub l_sd: f64,
    pub nv_confinement: f64,
    pub seed: u64,
    pub template: SensorTemplate,
}

impl Default for EnsembleSpec {
    fn default() -> Self {
        Self {
            count: 5000,
            d_mean: 25.0,
            d_sd: 3.0,
            n_mean: 0.1,
            n_sd: 0.02,
            l_mean: 1.5,
            l_sd: 0.2,
            nv_confinement: 0.2,
            seed: 0,
            template: SensorTemplate::default(),
        }
    }
}

impl EnsembleSpec {
    pub fn validate(&self) -> Result<()> {
        if self.count < 1 {
            return Err(Error::invalid("count", "must be >= 1"));
        }
        for (key, mean) in [("d_mean", self.d_mean), ("n_mean", self.n_mean), ("l_mean", self.l_mean)] {
            if !(mean.is_finite() && mean > 0.0) {
                return Err(Error::invalid(key, format!("must be > 0, got {mean}")));
            }
        }
        for (key, sd) in [("d_sd", self.d_sd), ("n_sd", self.n_sd), ("l_sd", self.l_sd)] {
            if !(sd.is_finite() && sd >= 0.0) {
                return Err(Error::invalid(key, format!("must be >= 0, got {sd}")));
            }
        }
        if !(self.nv_confinement > 0.0 && self.nv_confinement <= 1.0) {
            return Err(Error::invalid(
                "nv_confinement",
                format!("must lie in (0, 1], got {}", self.nv_confinement),
            ));
        }
        let t = &self.template;
        if !(t.defect_density.is_finite() && t.defect_density >= 0.0) {
            return Err(Error::invalid("defect_density", "must be >= 0"));
        }
        if !(t.t1_bulk.is_finite() && t.t1_bulk > 0.0) {
            return Err(Error::invalid("t1_bulk", "must be > 0"));
        }
        if !(t.gd_per_cdna.is_finite() && t.gd_per_cdna >= 1.0) {
            return Err(Error::invalid("gd_per_cdna", "must be >= 1"));
        }
        Ok(())
    }
}

fn truncated_normal<R: Rng>(
    rng: &mut R,
    parameter: &'static str,
    mean: f64,
    sd: f64,
    accept: impl Fn(f64) -> bool,
) -> Result<f64> {
    let normal = Normal::new(mean, sd).map_err(|e| Error::invalid(parameter, e.to_string()))?;
    for _ in 0..MAX_REJECTIONS {
        let x = normal.sample(rng);
        if accept(x) {
            return Ok(x);
        }
    }
    Err(Error::Pathological {
        parameter,
        attempts: MAX_REJECTIONS,
    })
}

/// Draw sensor `index` of the ensemble. Depends only on `(spec, index)`.
pub fn sample_sensor(spec: &EnsembleSpec, index: usize) -> Result<SensorConfig> {
    if index >= spec.count {
        return Err(Error::invalid(
            "index",
            format!("{index} out of range for ensemble of {}", spec.count),
        ));
    }
    let mut rng = stream(spec.seed, Purpose::Sensor, index as u64);
    let diameter = truncated_normal(&mut rng, "diameter", spec.d_mean, spec.d_sd, |d| d > MIN_DIAMETER)?;
    let gd_density = truncated_normal(&mut rng, "gd_density", spec.n_mean, spec.n_sd, |n| n >= 0.0)?;
    let gd_standoff = truncated_normal(&mut rng, "gd_standoff", spec.l_mean, spec.l_sd, |l| l >= MIN_STANDOFF)?;
    // Uniform in a ball: radial CDF r³.
    let u: f64 = rng.random();
    let nv_offset = spec.nv_confinement * (diameter / 2.0) * u.cbrt();
    Ok(SensorConfig {
        diameter,
        nv_offset,
        gd_standoff,
        gd_density,
        defect_density: spec.template.defect_density,
        t1_bulk: spec.template.t1_bulk,
        gd_per_cdna: spec.template.gd_per_cdna,
    })
}

/// All `spec.count` sensors in index order, sampled in parallel.
pub fn population(spec: &EnsembleSpec) -> Result<Vec<SensorConfig>> {
    spec.validate()?;
    (0..spec.count)
        .into_par_iter()
        .map(|i| sample_sensor(spec, i))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn mean_sd(xs: &[f64]) -> (f64, f64) {
        let n = xs.len() as f64;
        let mean = xs.iter().sum::<f64>() / n;
        let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
        (mean, var.sqrt())
    }

    #[test]
    fn degenerate_spec_returns_means() {
        let spec = EnsembleSpec {
            count: 50,
            d_sd: 0.0,
            n_sd: 0.0,
            l_sd: 0.0,
            ..Default::default()
        };
        let pop = population(&spec).unwrap();
        assert!(pop.iter().all(|s| s.diameter == 25.0 && s.gd_density == 0.1 && s.gd_standoff == 1.5));
        let offsets: Vec<f64> = pop.iter().map(|s| s.nv_offset).collect();
        assert!(offsets.windows(2).any(|w| w[0] != w[1]));
    }

    #[test]
    fn tiny_confinement_pins_nv_to_centre() {
        let spec = EnsembleSpec {
            count: 200,
            nv_confinement: 1e-12,
            ..Default::default()
        };
        assert!(population(&spec).unwrap().iter().all(|s| s.nv_offset < 1e-10));
    }

    #[test]
    fn default_diameter_moments() {
        let pop = population(&EnsembleSpec::default()).unwrap();
        let d: Vec<f64> = pop.iter().map(|s| s.diameter).collect();
        let (mean, sd) = mean_sd(&d);
        assert!((mean - 25.0).abs() < 0.15, "mean {mean}");
        assert!((sd - 3.0).abs() < 0.2, "sd {sd}");
    }

    #[test]
    fn samples_satisfy_sensor_invariants() {
        let spec = EnsembleSpec {
            count: 5000,
            d_mean: 6.0,
            d_sd: 4.0,
            n_sd: 0.2,
            l_mean: 0.5,
            l_sd: 0.5,
            nv_confinement: 1.0,
            ..Default::default()
        };
        for s in population(&spec).unwrap() {
            s.validate().unwrap();
            assert!(s.diameter > 4.0 && s.gd_standoff >= 0.3);
        }
    }

    #[test]
    fn nv_radial_distribution_is_uniform_in_ball() {
        let spec = EnsembleSpec {
            count: 20_000,
            seed: 9,
            ..Default::default()
        };
        let mut r: Vec<f64> = population(&spec)
            .unwrap()
            .iter()
            .map(|s| s.nv_offset / (spec.nv_confinement * s.diameter / 2.0))
            .collect();
        r.sort_by(f64::total_cmp);
        let n = r.len() as f64;
        let ks = r
            .iter()
            .enumerate()
            .map(|(i, x)| {
                let cdf = x.powi(3);
                (cdf - i as f64 / n).abs().max((cdf - (i + 1) as f64 / n).abs())
            })
            .fold(0.0, f64::max);
        assert!(ks < 0.02, "KS distance {ks}");
    }

    #[test]
    fn population_is_deterministic() {
        let spec = EnsembleSpec {
            count: 300,
            seed: 77,
            ..Default::default()
        };
        assert_eq!(population(&spec).unwrap(), population(&spec).unwrap());
        let single = EnsembleSpec { count: 1, ..spec };
        assert_eq!(population(&single).unwrap(), vec![sample_sensor(&single, 0).unwrap()]);
        assert_eq!(sample_sensor(&spec, 17).unwrap(), population(&spec).unwrap()[17]);
    }

    #[test]
    fn population_independent_of_worker_count() {
        let spec = EnsembleSpec {
            count: 2000,
            seed: 5,
            ..Default::default()
        };
        let run = |workers| {
            let pool = rayon::ThreadPoolBuilder::new().num_threads(workers).build().unwrap();
            let pop = pool.install(|| population(&spec)).unwrap();
            serde_json::to_vec(&pop).unwrap()
        };
        assert_eq!(run(1), run(8));
    }

    #[test]
    fn pathological_spec_aborts() {
        let spec = EnsembleSpec {
            d_mean: 1.0,
            d_sd: 0.1,
            ..Default::default()
        };
        assert!(matches!(
            sample_sensor(&spec, 0),
            Err(Error::Pathological { parameter: "diameter", .. })
        ));
    }

    #[test]
    fn invalid_specs_rejected() {
        let base = EnsembleSpec::default();
        assert!(EnsembleSpec { count: 0, ..base }.validate().is_err());
        assert!(EnsembleSpec { d_mean: -5.0, ..base }.validate().is_err());
        assert!(EnsembleSpec { n_sd: -0.1, ..base }.validate().is_err());
        assert!(EnsembleSpec { nv_confinement: 0.0, ..base }.validate().is_err());
        assert!(EnsembleSpec { nv_confinement: 1.5, ..base }.validate().is_err());
        assert!(sample_sensor(&base, 5000).is_err());
    }
}
