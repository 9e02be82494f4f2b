//! Shot-noise-limited sensitivity to the Gd surface density and the
//! resulting minimum detectable molecule / RNA-copy counts.
//!
//! Each readout cycle waits a dark time τ, then collects `N(τ) = P·PL(τ)`
//! photons, `P` being the per-shot photon count. A density change δn moves
//! the count by `∂N/∂n·δn`, so one cycle resolves `σ_n = √N / |∂N/∂n|`; a
//! cycle lasts `τ + t0`, giving `η = σ_n·√(τ + t0)` in nm⁻²·√s.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::physics::{
    fluctuation_rate, lorentzian_psd, lorentzian_psd_drate, shell_inverse_r6_integral,
    RelaxationModel, SensorConfig,
};
use crate::readout::{pl_expected, ReadoutParams};
use crate::sampling::{population, EnsembleSpec};

/// Lower edge of the dark-time search bracket (s).
pub const TAU_MIN: f64 = 1.0e-7;
/// Upper edge of the search bracket in units of T1.
pub const TAU_MAX_T1: f64 = 10.0;
pub const GRID_POINTS: usize = 200;
/// Relative tolerance on τ for the golden-section refinement.
pub const REFINE_REL_TOL: f64 = 1.0e-3;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SensitivityResult {
    /// δn·√T (nm⁻²·√s).
    pub eta_density: f64,
    /// Optimal dark time (s).
    pub tau_opt: f64,
    pub min_molecules: f64,
    pub min_rna_copies: f64,
    /// Integration time T (s).
    pub integration_time: f64,
}

/// dΓ_Gd/dn in s⁻¹·nm², through both B² ∝ nρ and R(nρ).
///
/// With `m = nρ` the chain is `ρ·γe²·κI·[S(R) + m·S'(R)·dR/dm]` and
/// `m·dR/dm = c_R·√m / 2`, which stays finite as n → 0 (the one-sided limit
/// keeps only the linear term with S(R0)).
pub fn dgamma_dn(config: &SensorConfig, model: &RelaxationModel) -> Result<f64> {
    config.validate()?;
    let rho = config.gd_per_cdna;
    let m = config.gd_density * rho;
    let integral = shell_inverse_r6_integral(config.nv_offset, model.gd_shell_radius(config))?;
    let gamma_e = model.constants.gamma_e();
    let linear = gamma_e * gamma_e * model.constants.dipolar_prefactor() * integral;
    let omega = model.constants.omega0();
    let rate = fluctuation_rate(m, &model.gd_bath);
    let spectral = lorentzian_psd_drate(rate, omega) * model.gd_bath.rate_density_coeff * m.sqrt() / 2.0;
    Ok(rho * linear * (lorentzian_psd(rate, omega) + spectral))
}

/// η at the readout's dark time given Γ and dΓ/dn; infinite when the cycle
/// carries no information about n.
fn eta_at(tau: f64, gamma_total: f64, slope: f64, readout: &ReadoutParams) -> f64 {
    let photons = readout.photons_per_shot;
    let counts = photons * pl_expected(gamma_total, &readout.with_dark_time(tau));
    let dcounts = photons * readout.contrast * tau * (-gamma_total * tau).exp() * slope;
    if dcounts == 0.0 || !dcounts.is_finite() {
        return f64::INFINITY;
    }
    counts.sqrt() / dcounts.abs() * (tau + readout.dead_time).sqrt()
}

/// Density sensitivity at `readout.dark_time`; `None` when not detectable.
pub fn density_sensitivity(
    config: &SensorConfig,
    model: &RelaxationModel,
    readout: &ReadoutParams,
) -> Result<Option<f64>> {
    readout.validate()?;
    let gamma = model.relaxation(config)?.gamma_total;
    let slope = dgamma_dn(config, model)?;
    let eta = eta_at(readout.dark_time, gamma, slope, readout);
    Ok(eta.is_finite().then_some(eta))
}

/// Golden-section minimum of `f` on `[lo, hi]` (ln τ coordinates here).
fn golden_section_minimize(f: impl Fn(f64) -> f64, mut lo: f64, mut hi: f64, tol: f64) -> (f64, f64) {
    const INV_PHI: f64 = 0.618_033_988_749_894_8;
    let mut x1 = hi - INV_PHI * (hi - lo);
    let mut x2 = lo + INV_PHI * (hi - lo);
    let mut f1 = f(x1);
    let mut f2 = f(x2);
    while hi - lo > tol {
        if f1 < f2 {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - INV_PHI * (hi - lo);
            f1 = f(x1);
        } else {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + INV_PHI * (hi - lo);
            f2 = f(x2);
        }
    }
    if f1 < f2 {
        (x1, f1)
    } else {
        (x2, f2)
    }
}

/// η over a 200-point log grid on `[TAU_MIN, 10·T1]` together with the
/// grid, for diagnostics and tests.
pub fn eta_grid(
    config: &SensorConfig,
    model: &RelaxationModel,
    readout: &ReadoutParams,
) -> Result<Vec<(f64, f64)>> {
    let gamma = model.relaxation(config)?.gamma_total;
    let slope = dgamma_dn(config, model)?;
    let hi = TAU_MAX_T1 / gamma;
    if hi <= TAU_MIN {
        return Ok(Vec::new());
    }
    let (ln_lo, ln_hi) = (TAU_MIN.ln(), hi.ln());
    Ok((0..GRID_POINTS)
        .map(|i| {
            let tau = (ln_lo + (ln_hi - ln_lo) * i as f64 / (GRID_POINTS - 1) as f64).exp();
            (tau, eta_at(tau, gamma, slope, readout))
        })
        .collect())
}

/// Minimize η over the dark time; `None` when no dark time in the bracket
/// yields a finite sensitivity (including T1 too short for the bracket).
pub fn optimal_sensitivity(
    config: &SensorConfig,
    model: &RelaxationModel,
    readout_template: &ReadoutParams,
    integration_time: f64,
) -> Result<Option<SensitivityResult>> {
    readout_template.validate()?;
    if !(integration_time.is_finite() && integration_time > 0.0) {
        return Err(crate::Error::invalid("integration_time", "must be > 0"));
    }
    let grid = eta_grid(config, model, readout_template)?;
    let Some(best) = grid
        .iter()
        .enumerate()
        .filter(|(_, (_, eta))| eta.is_finite())
        .min_by(|a, b| a.1 .1.total_cmp(&b.1 .1))
        .map(|(i, _)| i)
    else {
        return Ok(None);
    };
    let (grid_tau, grid_eta) = grid[best];

    let gamma = model.relaxation(config)?.gamma_total;
    let slope = dgamma_dn(config, model)?;
    let lo = grid[best.saturating_sub(1)].0.ln();
    let hi = grid[(best + 1).min(grid.len() - 1)].0.ln();
    // ln(1 + tol) ≈ tol bounds the relative width of the final τ bracket.
    let (ln_tau, eta) = golden_section_minimize(
        |x| eta_at(x.exp(), gamma, slope, readout_template),
        lo,
        hi,
        REFINE_REL_TOL,
    );
    let (tau_opt, eta_density) = if eta <= grid_eta {
        (ln_tau.exp(), eta)
    } else {
        (grid_tau, grid_eta)
    };

    let min_molecules = eta_density / integration_time.sqrt() * config.gd_shell_area();
    Ok(Some(SensitivityResult {
        eta_density,
        tau_opt,
        min_molecules,
        min_rna_copies: min_molecules / config.gd_per_cdna,
        integration_time,
    }))
}

/// One sensor of a sensitivity distribution; `result` is `None` for sensors
/// that cannot detect a density change.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SensitivityOutcome {
    pub index: usize,
    pub sensor: SensorConfig,
    pub result: Option<SensitivityResult>,
}

impl SensitivityOutcome {
    pub fn detectable(&self) -> bool {
        self.result.is_some()
    }
}

/// Optimal sensitivity for every sensor of the ensemble, in index order.
pub fn sensitivity_distribution(
    spec: &EnsembleSpec,
    model: &RelaxationModel,
    readout_template: &ReadoutParams,
    integration_time: f64,
) -> Result<Vec<SensitivityOutcome>> {
    let sensors = population(spec)?;
    sensors
        .par_iter()
        .enumerate()
        .map(|(index, sensor)| {
            Ok(SensitivityOutcome {
                index,
                sensor: *sensor,
                result: optimal_sensitivity(sensor, model, readout_template, integration_time)?,
            })
        })
        .collect()
}
