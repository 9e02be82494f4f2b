//! Virus-absent / virus-present PL populations and threshold classification.
//!
//! A read with `PL < threshold` is called negative (Gd still attached, fast
//! relaxation, dim), `PL >= threshold` positive. The threshold maximizes the
//! balanced accuracy `1 − (FNR + FPR)/2`.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::physics::{RelaxationModel, SensorConfig};
use crate::readout::{pl_at_density, pl_expected, pl_measured, ReadoutParams};
use crate::rng::{stream, Purpose};
use crate::sampling::{population, EnsembleSpec};

/// Per-sensor readout of an ensemble, before grouping.
#[derive(Debug, Clone, PartialEq)]
pub struct EnsembleReadout {
    pub sensors: Vec<SensorConfig>,
    /// Expected PL with Gd attached.
    pub negative: Vec<f64>,
    /// Expected PL with Gd fully detached.
    pub positive: Vec<f64>,
    pub negative_noisy: Vec<f64>,
    pub positive_noisy: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlPopulation {
    /// Group-mean PL with Gd attached (virus absent).
    pub negative: Vec<f64>,
    /// Group-mean PL with Gd detached (virus present).
    pub positive: Vec<f64>,
    pub group_size: usize,
    pub noisy: bool,
    /// Trailing sensors that did not fill a complete group.
    pub dropped: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ThresholdReport {
    pub threshold: f64,
    pub fnr: f64,
    pub fpr: f64,
    pub balanced_accuracy: f64,
    /// Classes are indistinguishable; the threshold is the pooled median.
    pub degenerate: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClassificationReport {
    pub threshold: f64,
    pub fnr: f64,
    pub fpr: f64,
    pub balanced_accuracy: f64,
    pub fnr_worst: f64,
    pub fpr_worst: f64,
    pub fnr_best: f64,
    pub fpr_best: f64,
    pub degenerate: bool,
}

/// How RNA copies are spread over the binding sites of a sensor group.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Allocation {
    /// Copies drawn without replacement from the group's pooled sites.
    WellMixed,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RnaLoadSpec {
    pub copies: u64,
    pub allocation: Allocation,
}

impl RnaLoadSpec {
    pub fn well_mixed(copies: u64) -> Self {
        Self {
            copies,
            allocation: Allocation::WellMixed,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub copies: u64,
    pub group_size: usize,
    pub report: ClassificationReport,
}

/// Simulate every sensor of the ensemble: expected PL for both classes plus
/// one shot-noise-limited read of each, from per-sensor streams.
pub fn simulate_ensemble(
    spec: &EnsembleSpec,
    model: &RelaxationModel,
    readout: &ReadoutParams,
) -> Result<EnsembleReadout> {
    readout.validate()?;
    let sensors = population(spec)?;
    let rows: Vec<[f64; 4]> = sensors
        .par_iter()
        .enumerate()
        .map(|(i, sensor)| {
            let attached = model.relaxation(sensor)?.gamma_total;
            let detached = model.relaxation(&sensor.with_gd_density(0.0))?.gamma_total;
            let mut rng = stream(spec.seed, Purpose::ShotNoise, i as u64);
            let neg_noisy = pl_measured(attached, readout, &mut rng);
            let pos_noisy = pl_measured(detached, readout, &mut rng);
            Ok([
                pl_expected(attached, readout),
                pl_expected(detached, readout),
                neg_noisy,
                pos_noisy,
            ])
        })
        .collect::<Result<_>>()?;
    let column = |j: usize| rows.iter().map(|r| r[j]).collect::<Vec<_>>();
    Ok(EnsembleReadout {
        negative: column(0),
        positive: column(1),
        negative_noisy: column(2),
        positive_noisy: column(3),
        sensors,
    })
}

/// Means over consecutive blocks of `k`; the incomplete tail is dropped.
fn group_means(values: &[f64], k: usize) -> Vec<f64> {
    values
        .chunks_exact(k)
        .map(|c| c.iter().sum::<f64>() / k as f64)
        .collect()
}

impl EnsembleReadout {
    pub fn len(&self) -> usize {
        self.sensors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sensors.is_empty()
    }

    /// Average consecutive index blocks of `group_size` sensors.
    pub fn group(&self, group_size: usize, noisy: bool) -> Result<PlPopulation> {
        if group_size == 0 {
            return Err(Error::invalid("group_size", "must be >= 1"));
        }
        if self.len() < group_size {
            return Err(Error::invalid(
                "group_size",
                format!("{group_size} exceeds ensemble of {} sensors", self.len()),
            ));
        }
        let dropped = self.len() % group_size;
        if dropped != 0 {
            log::warn!(
                "ensemble of {} not divisible by group size {group_size}; dropping {dropped} trailing sensors",
                self.len()
            );
        }
        let (neg, pos) = if noisy {
            (&self.negative_noisy, &self.positive_noisy)
        } else {
            (&self.negative, &self.positive)
        };
        Ok(PlPopulation {
            negative: group_means(neg, group_size),
            positive: group_means(pos, group_size),
            group_size,
            noisy,
            dropped,
        })
    }
}

pub fn build_population(
    spec: &EnsembleSpec,
    model: &RelaxationModel,
    readout: &ReadoutParams,
    group_size: usize,
    noisy: bool,
) -> Result<PlPopulation> {
    simulate_ensemble(spec, model, readout)?.group(group_size, noisy)
}

fn sorted(values: &[f64]) -> Vec<f64> {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    v
}

fn rates_at(threshold: f64, negative: &[f64], positive: &[f64]) -> (f64, f64) {
    let fnr = positive.iter().filter(|&&x| x < threshold).count() as f64 / positive.len() as f64;
    let fpr = negative.iter().filter(|&&x| x >= threshold).count() as f64 / negative.len() as f64;
    (fnr, fpr)
}

/// Exact balanced-accuracy maximization over all midpoints of adjacent
/// pooled values (plus the pooled minimum, which calls everything positive).
/// Ties go to the lower FNR, then the lower threshold.
pub fn optimize_threshold(negative: &[f64], positive: &[f64]) -> Result<ThresholdReport> {
    if negative.is_empty() || positive.is_empty() {
        return Err(Error::invalid("population", "both classes must be non-empty"));
    }
    if negative.iter().chain(positive).any(|x| !x.is_finite()) {
        return Err(Error::Numeric("non-finite PL value in population".into()));
    }
    let n_neg = negative.len() as u128;
    let n_pos = positive.len() as u128;

    if sorted(negative) == sorted(positive) {
        let pooled = sorted(&[negative, positive].concat());
        let threshold = pooled[pooled.len() / 2];
        let (fnr, fpr) = rates_at(threshold, negative, positive);
        return Ok(ThresholdReport {
            threshold,
            fnr,
            fpr,
            balanced_accuracy: 0.5,
            degenerate: true,
        });
    }

    let mut pooled: Vec<(f64, bool)> = negative
        .iter()
        .map(|&x| (x, false))
        .chain(positive.iter().map(|&x| (x, true)))
        .collect();
    pooled.sort_by(|a, b| a.0.total_cmp(&b.0));

    // Misclassification weight FNR·N_neg·N_pos + FPR·N_neg·N_pos, kept integral
    // so that ties are exact.
    let cost = |pos_below: u128, neg_below: u128| pos_below * n_neg + (n_neg - neg_below) * n_pos;
    let mut best = (cost(0, 0), 0u128, pooled[0].0);
    let (mut pos_below, mut neg_below) = (0u128, 0u128);
    for i in 0..pooled.len() - 1 {
        let (value, is_pos) = pooled[i];
        if is_pos {
            pos_below += 1;
        } else {
            neg_below += 1;
        }
        let next = pooled[i + 1].0;
        if next == value {
            continue;
        }
        let mut threshold = value + (next - value) / 2.0;
        if threshold <= value {
            threshold = next;
        }
        let c = cost(pos_below, neg_below);
        if c < best.0 || (c == best.0 && pos_below < best.1) {
            best = (c, pos_below, threshold);
        }
    }

    let threshold = best.2;
    let (fnr, fpr) = rates_at(threshold, negative, positive);
    Ok(ThresholdReport {
        threshold,
        fnr,
        fpr,
        balanced_accuracy: 1.0 - (fnr + fpr) / 2.0,
        degenerate: false,
    })
}

fn mean(values: &[f64]) -> f64 {
    values.iter().sum::<f64>() / values.len() as f64
}

/// Worst and best case of a ±1σ group shot-noise shift of each class mean,
/// each with its own re-optimized threshold.
pub fn shot_noise_bounds(
    population: &PlPopulation,
    readout: &ReadoutParams,
) -> Result<(ThresholdReport, ThresholdReport)> {
    if population.noisy {
        return Err(Error::invalid(
            "population",
            "shot-noise bounds need a noiseless population",
        ));
    }
    let photons = population.group_size as f64 * readout.photons_per_meas;
    let s_neg = (mean(&population.negative) / photons).sqrt();
    let s_pos = (mean(&population.positive) / photons).sqrt();
    let shifted = |values: &[f64], by: f64| values.iter().map(|x| x + by).collect::<Vec<_>>();
    let worst = optimize_threshold(
        &shifted(&population.negative, s_neg),
        &shifted(&population.positive, -s_pos),
    )?;
    let best = optimize_threshold(
        &shifted(&population.negative, -s_neg),
        &shifted(&population.positive, s_pos),
    )?;
    Ok((worst, best))
}

/// Optimal threshold of a noiseless population with its shot-noise bounds.
pub fn classify(population: &PlPopulation, readout: &ReadoutParams) -> Result<ClassificationReport> {
    let nominal = optimize_threshold(&population.negative, &population.positive)?;
    let (worst, best) = shot_noise_bounds(population, readout)?;
    Ok(ClassificationReport {
        threshold: nominal.threshold,
        fnr: nominal.fnr,
        fpr: nominal.fpr,
        balanced_accuracy: nominal.balanced_accuracy,
        fnr_worst: worst.fnr,
        fpr_worst: worst.fpr,
        fnr_best: best.fnr,
        fpr_best: best.fpr,
        degenerate: nominal.degenerate,
    })
}

/// Binding sites per sensor: round(n·ρ·4π(d/2 + l)²).
pub fn binding_sites(sensor: &SensorConfig) -> u64 {
    (sensor.gd_density * sensor.gd_per_cdna * sensor.gd_shell_area()).round() as u64
}

/// Copies landing on each sensor of one group under well-mixed assignment:
/// `copies` distinct sites drawn uniformly from the pooled sites, which
/// makes each sensor's count hypergeometric. Requires `copies <= Σ sites`.
fn allocate_copies<R: rand::Rng>(sites: &[u64], copies: u64, rng: &mut R) -> Result<Vec<u64>> {
    let pooled: u64 = sites.iter().sum();
    if copies > pooled {
        return Err(Error::invalid("copies", format!("{copies} exceeds {pooled} pooled sites")));
    }
    let to_usize = |x: u64| {
        usize::try_from(x).map_err(|_| Error::Numeric(format!("{x} binding sites overflow usize")))
    };
    // Upper edge of each sensor's block of site indices.
    let edges: Vec<u64> = sites
        .iter()
        .scan(0u64, |acc, &m| {
            *acc += m;
            Some(*acc)
        })
        .collect();
    let mut bound = vec![0u64; sites.len()];
    for site in rand::seq::index::sample(rng, to_usize(pooled)?, to_usize(copies)?) {
        let owner = edges.partition_point(|&e| e <= site as u64);
        bound[owner] += 1;
    }
    Ok(bound)
}

/// Positive-class group means when `load.copies` RNA copies are offered to
/// each group of `group_size` sensors.
fn loaded_positive(
    ensemble: &EnsembleReadout,
    spec: &EnsembleSpec,
    model: &RelaxationModel,
    readout: &ReadoutParams,
    group_size: usize,
    load: &RnaLoadSpec,
) -> Result<Vec<f64>> {
    ensemble
        .sensors
        .par_chunks_exact(group_size)
        .enumerate()
        .map(|(g, group)| {
            let sites: Vec<u64> = group.iter().map(binding_sites).collect();
            let pooled: u64 = sites.iter().sum();
            let bound = if load.copies >= pooled {
                sites.clone()
            } else {
                let mut rng = stream(spec.seed, Purpose::RnaLoad(load.copies), g as u64);
                allocate_copies(&sites, load.copies, &mut rng)?
            };
            let saturated = load.copies >= pooled;
            let mut total = 0.0;
            for ((sensor, &m), &v) in group.iter().zip(&sites).zip(&bound) {
                let residual = if saturated {
                    0.0
                } else if m == 0 {
                    sensor.gd_density
                } else {
                    sensor.gd_density * (1.0 - v as f64 / m as f64)
                };
                total += pl_at_density(sensor, residual, model, readout)?;
            }
            Ok(total / group_size as f64)
        })
        .collect()
}

/// FNR/FPR (with shot-noise bounds) against the RNA load, for one group size.
pub fn fnr_fpr_vs_copies(
    spec: &EnsembleSpec,
    model: &RelaxationModel,
    readout: &ReadoutParams,
    group_size: usize,
    loads: &[RnaLoadSpec],
) -> Result<Vec<CurvePoint>> {
    let ensemble = simulate_ensemble(spec, model, readout)?;
    fnr_curve_for(&ensemble, spec, model, readout, group_size, loads)
}

/// As [`fnr_fpr_vs_copies`] on an already simulated ensemble.
pub fn fnr_curve_for(
    ensemble: &EnsembleReadout,
    spec: &EnsembleSpec,
    model: &RelaxationModel,
    readout: &ReadoutParams,
    group_size: usize,
    loads: &[RnaLoadSpec],
) -> Result<Vec<CurvePoint>> {
    let base = ensemble.group(group_size, false)?;
    loads
        .iter()
        .map(|load| {
            let population = PlPopulation {
                positive: loaded_positive(ensemble, spec, model, readout, group_size, load)?,
                ..base.clone()
            };
            Ok(CurvePoint {
                copies: load.copies,
                group_size,
                report: classify(&population, readout)?,
            })
        })
        .collect()
}
