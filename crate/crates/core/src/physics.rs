//! Magnetic-noise strengths, noise spectra and the resulting NV longitudinal
//! relaxation rates.
//!
//! Internal units: lengths in nm, rates in s⁻¹, angular frequencies in
//! rad s⁻¹, fields in T. The dipolar prefactor is stored in T² nm⁶ so the
//! shell integrals stay in a comfortable exponent range.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// μ0/4π in T m A⁻¹.
pub const MU0_OVER_4PI: f64 = 1.0e-7;
/// Reduced Planck constant in J s.
pub const HBAR: f64 = 1.054_571_817e-34;
/// Electron gyromagnetic ratio, 2π × 28.024951 GHz/T, in rad s⁻¹ T⁻¹.
pub const GAMMA_ELECTRON: f64 = 2.0 * PI * 28.024_951_4e9;
/// NV ground-state zero-field splitting in Hz.
pub const ZERO_FIELD_SPLITTING_HZ: f64 = 2.87e9;

const M6_TO_NM6: f64 = 1.0e54;

/// Below this a/Rs the shell integral is evaluated from its even power series
/// around the centre instead of the closed form, which cancels catastrophically.
const SERIES_SWITCH: f64 = 1.0e-2;

/// Physical constants entering the dipolar relaxation model.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PhysicalConstants {
    gamma_e: f64,
    gamma_gd: f64,
    spin_gd: f64,
    omega0: f64,
    angular_factor: f64,
    dipolar_prefactor: f64,
}

impl PhysicalConstants {
    pub fn new(
        gamma_e: f64,
        gamma_gd: f64,
        spin_gd: f64,
        omega0: f64,
        angular_factor: f64,
    ) -> Result<Self> {
        for (key, value) in [
            ("gamma_e", gamma_e),
            ("gamma_gd", gamma_gd),
            ("spin_gd", spin_gd),
            ("omega0", omega0),
            ("angular_factor", angular_factor),
        ] {
            if !(value.is_finite() && value > 0.0) {
                return Err(Error::invalid(key, format!("must be finite and > 0, got {value}")));
            }
        }
        Ok(Self {
            gamma_e,
            gamma_gd,
            spin_gd,
            omega0,
            angular_factor,
            dipolar_prefactor: Self::prefactor(gamma_gd, spin_gd, angular_factor),
        })
    }

    /// (μ0/4π)² (ħ γ)² S(S+1) κ, converted to T² nm⁶.
    pub fn prefactor(gamma_gd: f64, spin_gd: f64, angular_factor: f64) -> f64 {
        let moment = MU0_OVER_4PI * HBAR * gamma_gd;
        moment * moment * spin_gd * (spin_gd + 1.0) * angular_factor * M6_TO_NM6
    }

    pub fn gamma_e(&self) -> f64 {
        self.gamma_e
    }

    pub fn gamma_gd(&self) -> f64 {
        self.gamma_gd
    }

    pub fn spin_gd(&self) -> f64 {
        self.spin_gd
    }

    pub fn omega0(&self) -> f64 {
        self.omega0
    }

    pub fn angular_factor(&self) -> f64 {
        self.angular_factor
    }

    /// Combined dipolar prefactor in T² nm⁶.
    pub fn dipolar_prefactor(&self) -> f64 {
        self.dipolar_prefactor
    }
}

impl Default for PhysicalConstants {
    fn default() -> Self {
        Self::new(
            GAMMA_ELECTRON,
            GAMMA_ELECTRON,
            3.5,
            2.0 * PI * ZERO_FIELD_SPLITTING_HZ,
            2.0 / 3.0,
        )
        .expect("default constants are valid")
    }
}

/// One nanodiamond's physical realization.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SensorConfig {
    /// ND diameter d (nm).
    pub diameter: f64,
    /// Radial distance a of the NV from the ND centre (nm).
    pub nv_offset: f64,
    /// Gap l between the ND surface and the Gd layer (nm).
    pub gd_standoff: f64,
    /// Surface density n of c-DNA-DOTA-Gd (nm⁻²).
    pub gd_density: f64,
    /// Surface paramagnetic defect density σ (nm⁻²).
    pub defect_density: f64,
    /// Background relaxation time (s).
    pub t1_bulk: f64,
    /// Gd complexes per c-DNA strand ρ.
    pub gd_per_cdna: f64,
}

impl SensorConfig {
    pub fn validate(&self) -> Result<()> {
        let check = |ok: bool, key: &str, reason: String| {
            if ok {
                Ok(())
            } else {
                Err(Error::invalid(key, reason))
            }
        };
        check(
            self.diameter.is_finite() && self.diameter > 0.0,
            "diameter",
            format!("must be > 0, got {}", self.diameter),
        )?;
        check(
            self.nv_offset >= 0.0 && self.nv_offset < self.diameter / 2.0,
            "nv_offset",
            format!("must lie in [0, d/2), got {}", self.nv_offset),
        )?;
        check(
            self.gd_standoff.is_finite() && self.gd_standoff > 0.0,
            "gd_standoff",
            format!("must be > 0, got {}", self.gd_standoff),
        )?;
        check(
            self.gd_density.is_finite() && self.gd_density >= 0.0,
            "gd_density",
            format!("must be >= 0, got {}", self.gd_density),
        )?;
        check(
            self.defect_density.is_finite() && self.defect_density >= 0.0,
            "defect_density",
            format!("must be >= 0, got {}", self.defect_density),
        )?;
        check(
            self.t1_bulk.is_finite() && self.t1_bulk > 0.0,
            "t1_bulk",
            format!("must be > 0, got {}", self.t1_bulk),
        )?;
        check(
            self.gd_per_cdna.is_finite() && self.gd_per_cdna >= 1.0,
            "gd_per_cdna",
            format!("must be >= 1, got {}", self.gd_per_cdna),
        )
    }

    /// Radius of the Gd shell, d/2 + l.
    pub fn gd_shell_radius(&self) -> f64 {
        self.diameter / 2.0 + self.gd_standoff
    }

    /// Area of the Gd shell in nm².
    pub fn gd_shell_area(&self) -> f64 {
        let r = self.gd_shell_radius();
        4.0 * PI * r * r
    }

    pub fn with_gd_density(&self, gd_density: f64) -> Self {
        Self {
            gd_density,
            ..*self
        }
    }
}

/// Fluctuation model of a paramagnetic spin bath.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpinBathParams {
    /// Density-independent fluctuation rate R0 (s⁻¹).
    pub intrinsic_rate: f64,
    /// Coefficient c_R of √density (s⁻¹ nm).
    pub rate_density_coeff: f64,
    /// Extra shell offset above the reference surface (nm).
    pub standoff: f64,
}

impl SpinBathParams {
    pub fn validate(&self, name: &str) -> Result<()> {
        if !(self.intrinsic_rate.is_finite() && self.intrinsic_rate >= 0.0) {
            return Err(Error::invalid(format!("{name}.intrinsic_rate"), "must be >= 0"));
        }
        if !(self.rate_density_coeff.is_finite() && self.rate_density_coeff >= 0.0) {
            return Err(Error::invalid(format!("{name}.rate_density_coeff"), "must be >= 0"));
        }
        if !(self.standoff.is_finite() && self.standoff >= 0.0) {
            return Err(Error::invalid(format!("{name}.standoff"), "must be >= 0"));
        }
        Ok(())
    }
}

/// Per-source longitudinal relaxation rates, all in s⁻¹.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RelaxationBreakdown {
    pub gamma_bulk: f64,
    pub gamma_surface: f64,
    pub gamma_gd: f64,
    pub gamma_total: f64,
}

impl RelaxationBreakdown {
    pub fn t1(&self) -> f64 {
        1.0 / self.gamma_total
    }
}

/// ∮ dA / r⁶ over a sphere of radius `shell_radius` seen from a point at
/// distance `nv_offset` from its centre, in nm⁻⁴.
pub fn shell_inverse_r6_integral(nv_offset: f64, shell_radius: f64) -> Result<f64> {
    if !(nv_offset >= 0.0 && nv_offset < shell_radius && shell_radius.is_finite()) {
        return Err(Error::Geometry {
            nv_offset,
            shell_radius,
        });
    }
    let x = nv_offset / shell_radius;
    let r4 = shell_radius.powi(4);
    if x < SERIES_SWITCH {
        // (π/R⁴) Σ_j C(2j+4, 3) x^{2j}
        let x2 = x * x;
        let series = 4.0 + x2 * (20.0 + x2 * (56.0 + x2 * (120.0 + x2 * 220.0)));
        Ok(PI * series / r4)
    } else {
        let near = (shell_radius - nv_offset).powi(-4);
        let far = (shell_radius + nv_offset).powi(-4);
        Ok(PI * shell_radius / (2.0 * nv_offset) * (near - far))
    }
}

/// Mean-square transverse field (T²) from a uniform spin shell of the given
/// areal density.
pub fn msq_transverse_field(
    density: f64,
    nv_offset: f64,
    shell_radius: f64,
    constants: &PhysicalConstants,
) -> Result<f64> {
    if !(density.is_finite() && density >= 0.0) {
        return Err(Error::invalid("density", format!("must be >= 0, got {density}")));
    }
    let integral = shell_inverse_r6_integral(nv_offset, shell_radius)?;
    Ok(constants.dipolar_prefactor() * density * integral)
}

/// R = R0 + c_R √density.
pub fn fluctuation_rate(density: f64, bath: &SpinBathParams) -> f64 {
    bath.intrinsic_rate + bath.rate_density_coeff * density.max(0.0).sqrt()
}

/// Lorentzian noise spectrum R / (R² + ω²), in s.
pub fn lorentzian_psd(rate: f64, omega: f64) -> f64 {
    rate / (rate * rate + omega * omega)
}

/// dS/dR of the Lorentzian at fixed ω.
pub(crate) fn lorentzian_psd_drate(rate: f64, omega: f64) -> f64 {
    let denom = rate * rate + omega * omega;
    (omega * omega - rate * rate) / (denom * denom)
}

/// Relaxation model: physical constants plus the Gd and surface-defect baths.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RelaxationModel {
    pub constants: PhysicalConstants,
    pub gd_bath: SpinBathParams,
    pub defect_bath: SpinBathParams,
}

impl RelaxationModel {
    pub fn new(
        constants: PhysicalConstants,
        gd_bath: SpinBathParams,
        defect_bath: SpinBathParams,
    ) -> Result<Self> {
        gd_bath.validate("gd_bath")?;
        defect_bath.validate("defect_bath")?;
        Ok(Self {
            constants,
            gd_bath,
            defect_bath,
        })
    }

    /// Full relaxation breakdown for one sensor.
    pub fn relaxation(&self, config: &SensorConfig) -> Result<RelaxationBreakdown> {
        config.validate()?;
        let gamma_bulk = 1.0 / config.t1_bulk;
        let gamma_surface = self.surface_rate(config)?;
        let gamma_gd = self.gd_rate(config)?;
        Ok(RelaxationBreakdown {
            gamma_bulk,
            gamma_surface,
            gamma_gd,
            gamma_total: gamma_bulk + gamma_surface + gamma_gd,
        })
    }

    /// Surface-defect contribution γe² B_s² S_s(ω0).
    pub fn surface_rate(&self, config: &SensorConfig) -> Result<f64> {
        let radius = config.diameter / 2.0 + self.defect_bath.standoff;
        let b2 = msq_transverse_field(
            config.defect_density,
            config.nv_offset,
            radius,
            &self.constants,
        )?;
        let rate = fluctuation_rate(config.defect_density, &self.defect_bath);
        Ok(self.spectral_rate(b2, rate))
    }

    /// Gd contribution γe² B_Gd² S_Gd(ω0), evaluated for the Gd density n·ρ.
    pub fn gd_rate(&self, config: &SensorConfig) -> Result<f64> {
        let density = config.gd_density * config.gd_per_cdna;
        let b2 = msq_transverse_field(
            density,
            config.nv_offset,
            self.gd_shell_radius(config),
            &self.constants,
        )?;
        let rate = fluctuation_rate(density, &self.gd_bath);
        Ok(self.spectral_rate(b2, rate))
    }

    pub(crate) fn gd_shell_radius(&self, config: &SensorConfig) -> f64 {
        config.gd_shell_radius() + self.gd_bath.standoff
    }

    fn spectral_rate(&self, b2: f64, rate: f64) -> f64 {
        let gamma_e = self.constants.gamma_e();
        gamma_e * gamma_e * b2 * lorentzian_psd(rate, self.constants.omega0())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn sensor() -> SensorConfig {
        SensorConfig {
            diameter: 25.0,
            nv_offset: 0.0,
            gd_standoff: 1.5,
            gd_density: 0.1,
            defect_density: 1.0,
            t1_bulk: 3e-3,
            gd_per_cdna: 1.0,
        }
    }

    fn model() -> RelaxationModel {
        RelaxationModel::new(
            PhysicalConstants::default(),
            SpinBathParams {
                intrinsic_rate: 1e8,
                rate_density_coeff: 2.5e10,
                standoff: 0.0,
            },
            SpinBathParams {
                intrinsic_rate: 3e8,
                rate_density_coeff: 0.0,
                standoff: 0.0,
            },
        )
        .unwrap()
    }

    #[test]
    fn constants_prefactor_matches_definition() {
        let c = PhysicalConstants::default();
        let moment = 1e-7 * HBAR * c.gamma_gd();
        let expected = moment * moment * 3.5 * 4.5 * (2.0 / 3.0) * 1e54;
        assert_relative_eq!(c.dipolar_prefactor(), expected, max_relative = 1e-12);
        assert_relative_eq!(c.omega0(), 2.0 * PI * 2.87e9, max_relative = 1e-15);
        assert!(PhysicalConstants::new(1.0, 1.0, 0.0, 1.0, 1.0).is_err());
    }

    #[test]
    fn shell_integral_centre() {
        let i = shell_inverse_r6_integral(0.0, 14.0).unwrap();
        assert_relative_eq!(i, 4.0 * PI / 14f64.powi(4), max_relative = 1e-15);
        assert_relative_eq!(i, 3.2712e-4, max_relative = 1e-4);
    }

    #[test]
    fn shell_integral_offset_value() {
        let i = shell_inverse_r6_integral(5.0, 14.0).unwrap();
        assert_relative_eq!(i, 6.366e-4, max_relative = 1e-3);
    }

    #[test]
    fn shell_integral_limit_continuity() {
        for rs in [1.0_f64, 10.0, 14.0, 100.0] {
            let centre = 4.0 * PI / rs.powi(4);
            let i = shell_inverse_r6_integral(1e-6, rs).unwrap();
            assert!(((i - centre) / centre).abs() < 1e-9);
        }
        // Both branches agree at the switch-over point.
        let rs = 12.0;
        let a = SERIES_SWITCH * rs;
        let series = shell_inverse_r6_integral(a * (1.0 - 1e-12), rs).unwrap();
        let closed = shell_inverse_r6_integral(a * (1.0 + 1e-12), rs).unwrap();
        assert_relative_eq!(series, closed, max_relative = 1e-12);
    }

    #[test]
    fn shell_integral_diverges_near_shell() {
        let centre = shell_inverse_r6_integral(0.0, 14.0).unwrap();
        let near = shell_inverse_r6_integral(13.9, 14.0).unwrap();
        assert!(near > 1e3 * centre);
    }

    #[test]
    fn shell_integral_rejects_outside() {
        assert!(matches!(
            shell_inverse_r6_integral(14.0, 14.0),
            Err(Error::Geometry { .. })
        ));
        assert!(shell_inverse_r6_integral(15.0, 14.0).is_err());
        assert!(shell_inverse_r6_integral(-1.0, 14.0).is_err());
        assert!(shell_inverse_r6_integral(f64::NAN, 14.0).is_err());
    }

    #[test]
    fn msq_field_linear_in_density() {
        let c = PhysicalConstants::default();
        assert_eq!(msq_transverse_field(0.0, 3.0, 14.0, &c).unwrap(), 0.0);
        let b1 = msq_transverse_field(0.07, 3.0, 14.0, &c).unwrap();
        let b2 = msq_transverse_field(0.14, 3.0, 14.0, &c).unwrap();
        assert_relative_eq!(b2, 2.0 * b1, max_relative = 1e-15);
        assert!(msq_transverse_field(-0.1, 3.0, 14.0, &c).is_err());
        assert!(msq_transverse_field(0.1, 14.0, 14.0, &c).is_err());
    }

    /// Discrete spins scattered uniformly on the shell, dipolar sum per spin.
    fn discrete_spin_msq(
        density: f64,
        nv_offset: f64,
        shell_radius: f64,
        prefactor: f64,
        placements: usize,
        seed: u64,
    ) -> f64 {
        let spins = (density * 4.0 * PI * shell_radius * shell_radius).floor() as usize;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut total = 0.0;
        for _ in 0..placements {
            let mut sum = 0.0;
            for _ in 0..spins {
                let u: f64 = rng.random_range(-1.0..1.0);
                let phi: f64 = rng.random_range(0.0..2.0 * PI);
                let s = (1.0 - u * u).sqrt();
                let p = [shell_radius * s * phi.cos(), shell_radius * s * phi.sin(), shell_radius * u];
                let r2 = p[0] * p[0] + p[1] * p[1] + (p[2] - nv_offset).powi(2);
                sum += prefactor / (r2 * r2 * r2);
            }
            total += sum;
        }
        total / placements as f64
    }

    #[test]
    fn msq_field_matches_discrete_spin_oracle() {
        let c = PhysicalConstants::default();
        let continuum = msq_transverse_field(0.1, 0.0, 14.0, &c).unwrap();
        assert_relative_eq!(
            continuum,
            c.dipolar_prefactor() * 0.1 * 3.2712e-4,
            max_relative = 1e-4
        );
        let discrete = discrete_spin_msq(0.1, 0.0, 14.0, c.dipolar_prefactor(), 100, 7);
        assert!(((discrete - continuum) / continuum).abs() < 0.03);

        let continuum = msq_transverse_field(0.1, 3.0, 14.0, &c).unwrap();
        let discrete = discrete_spin_msq(0.1, 3.0, 14.0, c.dipolar_prefactor(), 400, 11);
        assert!(((discrete - continuum) / continuum).abs() < 0.03);
    }

    #[test]
    fn fluctuation_rate_examples() {
        let bath = SpinBathParams {
            intrinsic_rate: 1e8,
            rate_density_coeff: 3e9,
            standoff: 0.0,
        };
        assert_eq!(fluctuation_rate(0.0, &bath), 1e8);
        assert_relative_eq!(fluctuation_rate(0.09, &bath), 1.0e9, max_relative = 1e-14);
        for n in [0.01, 0.1, 0.3] {
            let lhs = fluctuation_rate(4.0 * n, &bath) - 1e8;
            let rhs = 2.0 * (fluctuation_rate(n, &bath) - 1e8);
            assert_relative_eq!(lhs, rhs, max_relative = 1e-12);
        }
    }

    #[test]
    fn lorentzian_examples() {
        let w = 1.80327e10;
        assert_eq!(lorentzian_psd(0.0, w), 0.0);
        assert_relative_eq!(lorentzian_psd(w, w), 1.0 / (2.0 * w), max_relative = 1e-15);
        assert_relative_eq!(lorentzian_psd(1e9, w), 3.066e-12, max_relative = 1e-3);
        for r in [0.0, 1e6, 1e9, 1e10, 1.8e10, 1e11, 1e13] {
            assert!(lorentzian_psd(r, w) <= 1.0 / (2.0 * w));
        }
    }

    #[test]
    fn bulk_only_when_no_spins() {
        let cfg = SensorConfig {
            gd_density: 0.0,
            defect_density: 0.0,
            ..sensor()
        };
        let r = model().relaxation(&cfg).unwrap();
        assert_eq!(r.gamma_total, 1.0 / 3e-3);
        assert_eq!(r.gamma_gd, 0.0);
        assert_eq!(r.gamma_surface, 0.0);
    }

    #[test]
    fn detached_limit_drops_gd_term() {
        let m = model();
        let with = m.relaxation(&sensor()).unwrap();
        let without = m.relaxation(&sensor().with_gd_density(0.0)).unwrap();
        assert_eq!(without.gamma_total, without.gamma_bulk + without.gamma_surface);
        assert_eq!(without.gamma_surface, with.gamma_surface);
        assert!(with.t1() < without.t1());
    }

    #[test]
    fn additivity_is_exact() {
        let r = model().relaxation(&sensor()).unwrap();
        assert_eq!(r.gamma_total, r.gamma_bulk + r.gamma_surface + r.gamma_gd);
    }

    #[test]
    fn gd_rate_increases_with_density() {
        let m = model();
        let mut last = -1.0;
        for i in 0..100 {
            let n = 0.3 * i as f64 / 99.0;
            let g = m.gd_rate(&sensor().with_gd_density(n)).unwrap();
            assert!(g > last, "n = {n}");
            last = g;
        }
        assert!(fluctuation_rate(0.3, &m.gd_bath) < m.constants.omega0());
    }

    #[test]
    fn gd_rate_decays_with_diameter() {
        let m = model();
        let mut last = f64::INFINITY;
        for d in [10.0, 15.0, 20.0, 25.0, 30.0, 40.0, 60.0] {
            let g = m.gd_rate(&SensorConfig { diameter: d, ..sensor() }).unwrap();
            assert!(g < last);
            last = g;
        }
    }

    #[test]
    fn invalid_config_is_rejected() {
        let m = model();
        let bad = SensorConfig {
            nv_offset: 12.5,
            ..sensor()
        };
        assert!(m.relaxation(&bad).is_err());
        let bad = SensorConfig {
            gd_per_cdna: 0.5,
            ..sensor()
        };
        assert!(m.relaxation(&bad).is_err());
    }
}
