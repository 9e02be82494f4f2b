//! Run configuration: a TOML document with one table per concern.
//!
//! Every key is optional and falls back to the documented default; unknown
//! keys are rejected. Units: lengths nm, densities nm⁻², times s, rates s⁻¹.

use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::classifier::RnaLoadSpec;
use crate::defaults;
use crate::error::{Error, Result};
use crate::physics::{PhysicalConstants, RelaxationModel, SensorConfig, SpinBathParams};
use crate::readout::ReadoutParams;
use crate::sampling::{EnsembleSpec, SensorTemplate};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Experiment {
    T1Sweep,
    SensitivityMap,
    SensitivityDist,
    EnsembleHist,
    FnrCurve,
}

impl Experiment {
    pub const ALL: [Experiment; 5] = [
        Experiment::T1Sweep,
        Experiment::SensitivityMap,
        Experiment::SensitivityDist,
        Experiment::EnsembleHist,
        Experiment::FnrCurve,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            Experiment::T1Sweep => "t1-sweep",
            Experiment::SensitivityMap => "sensitivity-map",
            Experiment::SensitivityDist => "sensitivity-dist",
            Experiment::EnsembleHist => "ensemble-hist",
            Experiment::FnrCurve => "fnr-curve",
        }
    }
}

impl fmt::Display for Experiment {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Experiment {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Experiment::ALL
            .into_iter()
            .find(|e| e.name() == s)
            .ok_or_else(|| {
                let names: Vec<_> = Experiment::ALL.iter().map(|e| e.name()).collect();
                Error::Usage(format!("unknown experiment `{s}`; expected one of {}", names.join(", ")))
            })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OutputFormat {
    #[default]
    Csv,
    Json,
}

impl FromStr for OutputFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "csv" => Ok(OutputFormat::Csv),
            "json" => Ok(OutputFormat::Json),
            _ => Err(Error::Usage(format!("unknown format `{s}`; expected csv or json"))),
        }
    }
}

/// `[physics]`: constants and bath parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PhysicsSection {
    /// Electron gyromagnetic ratio (rad s⁻¹ T⁻¹).
    pub gamma_e: f64,
    /// Gd gyromagnetic ratio (rad s⁻¹ T⁻¹).
    pub gamma_gd: f64,
    pub spin_gd: f64,
    /// NV zero-field splitting (Hz); ω0 = 2π × this.
    pub zero_field_splitting_hz: f64,
    pub angular_factor: f64,
    pub t1_bulk: f64,
    pub defect_density: f64,
    pub gd_per_cdna: f64,
    pub gd_intrinsic_rate: f64,
    /// c_R (s⁻¹ nm).
    pub gd_rate_coeff: f64,
    /// Extra Gd shell offset added to d/2 + l.
    pub gd_shell_offset: f64,
    pub surface_rate: f64,
    /// Offset of the defect shell above the ND surface.
    pub defect_shell_offset: f64,
}

impl Default for PhysicsSection {
    fn default() -> Self {
        let c = PhysicalConstants::default();
        Self {
            gamma_e: c.gamma_e(),
            gamma_gd: c.gamma_gd(),
            spin_gd: c.spin_gd(),
            zero_field_splitting_hz: crate::physics::ZERO_FIELD_SPLITTING_HZ,
            angular_factor: c.angular_factor(),
            t1_bulk: defaults::T1_BULK,
            defect_density: defaults::DEFECT_DENSITY,
            gd_per_cdna: defaults::GD_PER_CDNA,
            gd_intrinsic_rate: defaults::GD_INTRINSIC_RATE,
            gd_rate_coeff: defaults::CALIBRATED_GD_RATE_COEFF,
            gd_shell_offset: 0.0,
            surface_rate: defaults::CALIBRATED_SURFACE_RATE,
            defect_shell_offset: 0.0,
        }
    }
}

/// `[ensemble]`: population distributions (the seed comes from the command line).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EnsembleSection {
    pub count: usize,
    pub d_mean: f64,
    pub d_sd: f64,
    pub n_mean: f64,
    pub n_sd: f64,
    pub l_mean: f64,
    pub l_sd: f64,
    pub nv_confinement: f64,
}

impl Default for EnsembleSection {
    fn default() -> Self {
        let s = EnsembleSpec::default();
        Self {
            count: s.count,
            d_mean: s.d_mean,
            d_sd: s.d_sd,
            n_mean: s.n_mean,
            n_sd: s.n_sd,
            l_mean: s.l_mean,
            l_sd: s.l_sd,
            nv_confinement: s.nv_confinement,
        }
    }
}

/// `[readout]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ReadoutSection {
    pub contrast: f64,
    pub photons_per_meas: f64,
    pub photons_per_shot: f64,
    pub dead_time: f64,
    pub dark_time: f64,
}

impl Default for ReadoutSection {
    fn default() -> Self {
        let r = defaults::readout();
        Self {
            contrast: r.contrast,
            photons_per_meas: r.photons_per_meas,
            photons_per_shot: r.photons_per_shot,
            dead_time: r.dead_time,
            dark_time: r.dark_time,
        }
    }
}

/// `[t1_sweep]`: T1 against Gd density for one fixed sensor.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct T1SweepSection {
    pub densities: Vec<f64>,
    pub diameter: f64,
    pub nv_offset: f64,
    pub standoff: f64,
}

impl Default for T1SweepSection {
    fn default() -> Self {
        Self {
            densities: (0..=40).map(|i| i as f64 * 0.005).collect(),
            diameter: 25.0,
            nv_offset: 0.0,
            standoff: 1.0,
        }
    }
}

/// `[sensitivity]`: the (diameter, standoff) map and the ensemble
/// distribution of minimum detectable molecule counts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SensitivitySection {
    pub integration_time: f64,
    pub diameters: Vec<f64>,
    pub standoffs: Vec<f64>,
    pub gd_density: f64,
    pub nv_offset: f64,
    /// NV confinement used by the distribution (1 = anywhere in the ND).
    pub dist_nv_confinement: f64,
    /// Standoff spread used by the distribution.
    pub dist_l_sd: f64,
}

impl Default for SensitivitySection {
    fn default() -> Self {
        Self {
            integration_time: 1.0,
            diameters: (0..=16).map(|i| 10.0 + 2.5 * i as f64).collect(),
            standoffs: (0..=10).map(|i| 0.5 + 0.25 * i as f64).collect(),
            gd_density: 0.1,
            nv_offset: 0.0,
            dist_nv_confinement: 1.0,
            dist_l_sd: 0.0,
        }
    }
}

/// `[ensemble_hist]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EnsembleHistSection {
    pub group_sizes: Vec<usize>,
}

impl Default for EnsembleHistSection {
    fn default() -> Self {
        Self { group_sizes: vec![1, 10] }
    }
}

/// `[fnr_curve]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FnrCurveSection {
    pub copies: Vec<u64>,
    pub group_sizes: Vec<usize>,
}

impl Default for FnrCurveSection {
    fn default() -> Self {
        Self {
            copies: vec![10, 30, 100, 300, 1_000, 3_000, 10_000, 30_000, 100_000],
            group_sizes: vec![1, 10],
        }
    }
}

impl FnrCurveSection {
    pub fn loads(&self) -> Vec<RnaLoadSpec> {
        self.copies.iter().map(|&v| RnaLoadSpec::well_mixed(v)).collect()
    }
}

/// `[output]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputSection {
    pub dir: PathBuf,
    pub format: OutputFormat,
}

impl Default for OutputSection {
    fn default() -> Self {
        Self {
            dir: PathBuf::from("out"),
            format: OutputFormat::Csv,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub experiment: Option<Experiment>,
    pub physics: PhysicsSection,
    pub ensemble: EnsembleSection,
    pub readout: ReadoutSection,
    pub t1_sweep: T1SweepSection,
    pub sensitivity: SensitivitySection,
    pub ensemble_hist: EnsembleHistSection,
    pub fnr_curve: FnrCurveSection,
    pub output: OutputSection,
}

fn line_of(text: &str, offset: usize) -> usize {
    text[..offset.min(text.len())].matches('\n').count() + 1
}

/// Prefix the key of a validation error with its table name.
fn in_section(section: &str) -> impl Fn(Error) -> Error + '_ {
    move |e| match e {
        Error::Invalid { key, reason } => Error::Invalid {
            key: format!("{section}.{key}"),
            reason,
        },
        other => other,
    }
}

fn check(ok: bool, key: &str, reason: impl Into<String>) -> Result<()> {
    if ok {
        Ok(())
    } else {
        Err(Error::invalid(key, reason))
    }
}

fn all_positive(values: &[f64]) -> bool {
    values.iter().all(|v| v.is_finite() && *v > 0.0)
}

impl RunConfig {
    /// Parse and validate a configuration document.
    pub fn parse(text: &str) -> Result<Self> {
        let config: RunConfig = toml::from_str(text).map_err(|e| Error::Parse {
            line: e.span().map_or(0, |s| line_of(text, s.start)),
            message: e.message().to_string(),
        })?;
        config.validate()?;
        Ok(config)
    }

    pub fn from_file(path: &std::path::Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::Io {
            path: path.display().to_string(),
            message: e.to_string(),
        })?;
        Self::parse(&text)
    }

    /// Canonical TOML rendering; parses back to an equal config.
    pub fn to_canonical(&self) -> String {
        toml::to_string(self).expect("config is always representable as TOML")
    }

    pub fn constants(&self) -> Result<PhysicalConstants> {
        let p = &self.physics;
        PhysicalConstants::new(
            p.gamma_e,
            p.gamma_gd,
            p.spin_gd,
            2.0 * std::f64::consts::PI * p.zero_field_splitting_hz,
            p.angular_factor,
        )
        .map_err(in_section("physics"))
    }

    pub fn model(&self) -> Result<RelaxationModel> {
        let p = &self.physics;
        RelaxationModel::new(
            self.constants()?,
            SpinBathParams {
                intrinsic_rate: p.gd_intrinsic_rate,
                rate_density_coeff: p.gd_rate_coeff,
                standoff: p.gd_shell_offset,
            },
            SpinBathParams {
                intrinsic_rate: p.surface_rate,
                rate_density_coeff: 0.0,
                standoff: p.defect_shell_offset,
            },
        )
        .map_err(in_section("physics"))
    }

    pub fn template(&self) -> SensorTemplate {
        SensorTemplate {
            defect_density: self.physics.defect_density,
            t1_bulk: self.physics.t1_bulk,
            gd_per_cdna: self.physics.gd_per_cdna,
        }
    }

    pub fn ensemble_spec(&self, seed: u64) -> EnsembleSpec {
        let e = &self.ensemble;
        EnsembleSpec {
            count: e.count,
            d_mean: e.d_mean,
            d_sd: e.d_sd,
            n_mean: e.n_mean,
            n_sd: e.n_sd,
            l_mean: e.l_mean,
            l_sd: e.l_sd,
            nv_confinement: e.nv_confinement,
            seed,
            template: self.template(),
        }
    }

    /// Ensemble used by the sensitivity distribution.
    pub fn sensitivity_spec(&self, seed: u64) -> EnsembleSpec {
        EnsembleSpec {
            nv_confinement: self.sensitivity.dist_nv_confinement,
            l_sd: self.sensitivity.dist_l_sd,
            ..self.ensemble_spec(seed)
        }
    }

    pub fn readout(&self) -> ReadoutParams {
        let r = &self.readout;
        ReadoutParams {
            contrast: r.contrast,
            photons_per_meas: r.photons_per_meas,
            photons_per_shot: r.photons_per_shot,
            dead_time: r.dead_time,
            dark_time: r.dark_time,
        }
    }

    /// Fixed sensor of the T1 sweep at Gd density `n`.
    pub fn t1_sweep_sensor(&self, n: f64) -> SensorConfig {
        let t = &self.t1_sweep;
        SensorConfig {
            diameter: t.diameter,
            nv_offset: t.nv_offset,
            gd_standoff: t.standoff,
            gd_density: n,
            defect_density: self.physics.defect_density,
            t1_bulk: self.physics.t1_bulk,
            gd_per_cdna: self.physics.gd_per_cdna,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.model()?;
        let p = &self.physics;
        for (key, value) in [("t1_bulk", p.t1_bulk), ("gd_per_cdna", p.gd_per_cdna)] {
            check(value.is_finite() && value > 0.0, &format!("physics.{key}"), format!("must be > 0, got {value}"))?;
        }
        check(p.gd_per_cdna >= 1.0, "physics.gd_per_cdna", "must be >= 1")?;
        check(
            p.defect_density.is_finite() && p.defect_density >= 0.0,
            "physics.defect_density",
            "must be >= 0",
        )?;

        self.ensemble_spec(0).validate().map_err(in_section("ensemble"))?;
        self.readout().validate().map_err(in_section("readout"))?;

        let t = &self.t1_sweep;
        check(!t.densities.is_empty(), "t1_sweep.densities", "must not be empty")?;
        check(
            t.densities.iter().all(|n| n.is_finite() && *n >= 0.0),
            "t1_sweep.densities",
            "entries must be >= 0",
        )?;
        for n in &t.densities {
            self.t1_sweep_sensor(*n).validate().map_err(in_section("t1_sweep"))?;
        }

        let s = &self.sensitivity;
        check(
            s.integration_time.is_finite() && s.integration_time > 0.0,
            "sensitivity.integration_time",
            "must be > 0",
        )?;
        check(
            !s.diameters.is_empty() && all_positive(&s.diameters),
            "sensitivity.diameters",
            "must be non-empty with entries > 0",
        )?;
        check(
            !s.standoffs.is_empty() && all_positive(&s.standoffs),
            "sensitivity.standoffs",
            "must be non-empty with entries > 0",
        )?;
        check(
            s.gd_density.is_finite() && s.gd_density >= 0.0,
            "sensitivity.gd_density",
            "must be >= 0",
        )?;
        let smallest = s.diameters.iter().copied().fold(f64::INFINITY, f64::min);
        check(
            s.nv_offset >= 0.0 && s.nv_offset < smallest / 2.0,
            "sensitivity.nv_offset",
            "must lie in [0, d/2) for every diameter",
        )?;
        let dist = self.sensitivity_spec(0);
        check(
            dist.nv_confinement > 0.0 && dist.nv_confinement <= 1.0,
            "sensitivity.dist_nv_confinement",
            "must lie in (0, 1]",
        )?;
        check(dist.l_sd.is_finite() && dist.l_sd >= 0.0, "sensitivity.dist_l_sd", "must be >= 0")?;

        let count = self.ensemble.count;
        for (key, sizes) in [
            ("ensemble_hist.group_sizes", &self.ensemble_hist.group_sizes),
            ("fnr_curve.group_sizes", &self.fnr_curve.group_sizes),
        ] {
            check(!sizes.is_empty(), key, "must not be empty")?;
            check(
                sizes.iter().all(|&k| k >= 1 && k <= count),
                key,
                format!("entries must lie in [1, ensemble.count = {count}]"),
            )?;
        }
        check(!self.fnr_curve.copies.is_empty(), "fnr_curve.copies", "must not be empty")?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn empty_document_is_all_defaults() {
        let c = RunConfig::parse("").unwrap();
        assert_eq!(c, RunConfig::default());
        assert_eq!(c.experiment, None);
        assert_eq!(c.model().unwrap(), defaults::relaxation_model());
        assert_eq!(c.readout(), defaults::readout());
        assert_eq!(c.ensemble_spec(0), EnsembleSpec::default());
    }

    #[test]
    fn negative_mean_names_the_key() {
        let err = RunConfig::parse("[ensemble]\nd_mean = -5\n").unwrap_err();
        match &err {
            Error::Invalid { key, .. } => assert_eq!(key, "ensemble.d_mean"),
            other => panic!("unexpected {other:?}"),
        }
        assert_eq!(err.exit_code(), 2);
    }

    #[test]
    fn zero_count_rejected() {
        let err = RunConfig::parse("[ensemble]\ncount = 0\n").unwrap_err();
        assert!(matches!(err, Error::Invalid { ref key, .. } if key == "ensemble.count"));
    }

    #[test]
    fn unknown_key_reports_line() {
        let text = "experiment = \"t1-sweep\"\n\n[readout]\ncontrast = 0.3\nbogus = 1\n";
        match RunConfig::parse(text).unwrap_err() {
            Error::Parse { line, message } => {
                assert_eq!(line, 5);
                assert!(message.contains("bogus"), "{message}");
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn unknown_table_reports_line() {
        match RunConfig::parse("[readout]\ncontrast = 0.3\n[nonsense]\nx = 1\n").unwrap_err() {
            Error::Parse { line, .. } => assert_eq!(line, 3),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn malformed_syntax_is_parse_error() {
        let err = RunConfig::parse("[physics\n").unwrap_err();
        assert!(matches!(err, Error::Parse { line: 1, .. }));
        assert_eq!(err.exit_code(), 2);
    }

    #[test]
    fn experiment_names_round_trip() {
        for e in Experiment::ALL {
            assert_eq!(e.name().parse::<Experiment>().unwrap(), e);
            let c = RunConfig::parse(&format!("experiment = \"{e}\"")).unwrap();
            assert_eq!(c.experiment, Some(e));
        }
        assert!("t1".parse::<Experiment>().is_err());
    }

    #[test]
    fn group_size_larger_than_ensemble_rejected() {
        let err = RunConfig::parse("[ensemble]\ncount = 5\n[fnr_curve]\ngroup_sizes = [1, 10]\n[ensemble_hist]\ngroup_sizes = [1]\n")
            .unwrap_err();
        assert!(matches!(err, Error::Invalid { ref key, .. } if key == "fnr_curve.group_sizes"));
    }

    #[test]
    fn t1_sweep_offset_outside_diamond_rejected() {
        let err = RunConfig::parse("[t1_sweep]\ndiameter = 10\nnv_offset = 6\n").unwrap_err();
        assert!(matches!(err, Error::Invalid { ref key, .. } if key == "t1_sweep.nv_offset"));
    }

    #[test]
    fn partial_section_keeps_other_defaults() {
        let c = RunConfig::parse("[readout]\ncontrast = 0.2\n").unwrap();
        assert_eq!(c.readout.contrast, 0.2);
        assert_eq!(c.readout.dark_time, defaults::DARK_TIME);
    }

    fn positive() -> impl Strategy<Value = f64> {
        (1e-3f64..1e3).prop_map(|x| x)
    }

    prop_compose! {
        fn arb_config()(
            experiment in proptest::option::of(proptest::sample::select(Experiment::ALL.to_vec())),
            count in 10usize..10_000,
            d_mean in 5.0f64..60.0,
            d_sd in 0.0f64..5.0,
            n_mean in 0.01f64..0.5,
            l_mean in 0.5f64..3.0,
            conf in 0.01f64..=1.0,
            contrast in 0.05f64..0.95,
            photons in 1.0f64..1e7,
            shot in 1e-3f64..10.0,
            dark in 0.0f64..1e-2,
            t1 in 1e-5f64..1e-1,
            cr in 0.0f64..1e12,
            rs in 0.0f64..1e11,
            densities in proptest::collection::vec(0.0f64..1.0, 1..8),
            diameters in proptest::collection::vec(2.0f64..80.0, 1..6),
            standoffs in proptest::collection::vec(positive(), 1..6),
            tint in positive(),
            copies in proptest::collection::vec(0u64..1_000_000, 1..6),
            group in 1usize..10,
            json in any::<bool>(),
        ) -> RunConfig {
            let mut c = RunConfig { experiment, ..Default::default() };
            c.ensemble.count = count;
            c.ensemble.d_mean = d_mean;
            c.ensemble.d_sd = d_sd;
            c.ensemble.n_mean = n_mean;
            c.ensemble.l_mean = l_mean;
            c.ensemble.nv_confinement = conf;
            c.readout.contrast = contrast;
            c.readout.photons_per_meas = photons;
            c.readout.photons_per_shot = shot;
            c.readout.dark_time = dark;
            c.physics.t1_bulk = t1;
            c.physics.gd_rate_coeff = cr;
            c.physics.surface_rate = rs;
            c.t1_sweep.densities = densities;
            c.sensitivity.diameters = diameters;
            c.sensitivity.standoffs = standoffs;
            c.sensitivity.integration_time = tint;
            c.fnr_curve.copies = copies;
            c.fnr_curve.group_sizes = vec![1, group];
            c.ensemble_hist.group_sizes = vec![group];
            c.output.format = if json { OutputFormat::Json } else { OutputFormat::Csv };
            c
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(100))]
        #[test]
        fn canonical_dump_round_trips(c in arb_config()) {
            prop_assert!(c.validate().is_ok());
            let text = c.to_canonical();
            let back = RunConfig::parse(&text).unwrap();
            prop_assert_eq!(&back, &c);
            prop_assert_eq!(back.to_canonical(), text);
        }
    }
}
