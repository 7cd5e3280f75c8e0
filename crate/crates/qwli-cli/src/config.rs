//! Run configuration: JSON schema with units encoded in field names,
//! validated with field-path error messages.

use crate::error::{CliError, CliResult};
use qwli::acquisition::{ScanPlan, SignalModel};
use qwli::optics::{d_to_beta2, DispersionParameter, PhaseOffset, SpectralPoint, TaylorDispersion};
use qwli::signal::{EnvelopeShape, FilterShape, NoiseSpec};
use serde::{Deserialize, Serialize};
use std::path::Path;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SutConfig {
    pub length_m: f64,
    /// Exactly one of `d_ps_nm_km` / `beta2_si` must be present.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub d_ps_nm_km: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub beta2_si: Option<f64>,
    #[serde(default)]
    pub phi_off_rad: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EnvelopeConfig {
    pub fwhm_m: f64,
    pub shape: EnvelopeShape,
}

impl Default for EnvelopeConfig {
    fn default() -> Self {
        EnvelopeConfig {
            fwhm_m: 60e-9,
            shape: EnvelopeShape::Gaussian,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FilterConfig {
    pub bandwidth_m: f64,
    pub shape: FilterShape,
}

impl Default for FilterConfig {
    fn default() -> Self {
        FilterConfig {
            bandwidth_m: 500e-12,
            shape: FilterShape::Rectangular,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NoiseConfig {
    pub sbrs_fraction: f64,
    pub sbrs_singles_cps: f64,
}

impl Default for NoiseConfig {
    fn default() -> Self {
        NoiseConfig {
            sbrs_fraction: 0.005,
            sbrs_singles_cps: 0.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScanConfig {
    pub n_points: usize,
    pub span_m: f64,
    pub dwell_s: f64,
    pub peak_coinc_cps: f64,
    pub peak_singles_cps: f64,
}

impl Default for ScanConfig {
    fn default() -> Self {
        ScanConfig {
            n_points: 100,
            span_m: 40e-9,
            dwell_s: 4.0,
            peak_coinc_cps: 5000.0,
            peak_singles_cps: 50_000.0,
        }
    }
}

fn default_visibility() -> f64 {
    0.95
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub pump_m: f64,
    pub sut: SutConfig,
    #[serde(default)]
    pub envelope: EnvelopeConfig,
    #[serde(default)]
    pub filter: FilterConfig,
    #[serde(default)]
    pub noise: NoiseConfig,
    #[serde(default)]
    pub scan: ScanConfig,
    #[serde(default = "default_visibility")]
    pub visibility: f64,
    #[serde(default)]
    pub seed: u64,
}

fn check(ok: bool, field: &str, msg: &str) -> CliResult<()> {
    if ok {
        Ok(())
    } else {
        Err(CliError::usage(format!("{field}: {msg}")))
    }
}

fn positive(value: f64, field: &str) -> CliResult<()> {
    check(
        value.is_finite() && value > 0.0,
        field,
        &format!("must be finite and > 0, got {value}"),
    )
}

impl RunConfig {
    /// Measured-setup configuration used as the starting point for tests.
    #[cfg(test)]
    pub fn dsf_defaults() -> Self {
        RunConfig {
            pump_m: 1560.6e-9,
            sut: SutConfig {
                length_m: 0.9,
                d_ps_nm_km: Some(-81.654),
                beta2_si: None,
                phi_off_rad: 0.0,
            },
            envelope: EnvelopeConfig::default(),
            filter: FilterConfig::default(),
            noise: NoiseConfig::default(),
            scan: ScanConfig::default(),
            visibility: default_visibility(),
            seed: 1,
        }
    }

    pub fn load(path: &Path) -> CliResult<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::io(format!("cannot read config {}: {e}", path.display())))?;
        let config: RunConfig = serde_json::from_str(&text)
            .map_err(|e| CliError::usage(format!("config {} is not valid: {e}", path.display())))?;
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> CliResult<()> {
        positive(self.pump_m, "pump_m")?;
        positive(self.sut.length_m, "sut.length_m")?;
        match (self.sut.d_ps_nm_km, self.sut.beta2_si) {
            (Some(_), Some(_)) => {
                return Err(CliError::usage(
                    "sut: give exactly one of d_ps_nm_km / beta2_si, not both",
                ))
            }
            (None, None) => {
                return Err(CliError::usage(
                    "sut: give exactly one of d_ps_nm_km / beta2_si",
                ))
            }
            (Some(d), None) => check(d.is_finite(), "sut.d_ps_nm_km", "must be finite")?,
            (None, Some(b)) => check(b.is_finite(), "sut.beta2_si", "must be finite")?,
        }
        check(
            self.sut.phi_off_rad.is_finite(),
            "sut.phi_off_rad",
            "must be finite",
        )?;
        positive(self.envelope.fwhm_m, "envelope.fwhm_m")?;
        positive(self.filter.bandwidth_m, "filter.bandwidth_m")?;
        check(
            self.noise.sbrs_fraction.is_finite() && self.noise.sbrs_fraction >= 0.0,
            "noise.sbrs_fraction",
            "must be ≥ 0",
        )?;
        check(
            self.noise.sbrs_singles_cps.is_finite() && self.noise.sbrs_singles_cps >= 0.0,
            "noise.sbrs_singles_cps",
            "must be ≥ 0",
        )?;
        check(
            self.scan.n_points >= 8,
            "scan.n_points",
            &format!("need at least 8 points, got {}", self.scan.n_points),
        )?;
        positive(self.scan.span_m, "scan.span_m")?;
        positive(self.scan.dwell_s, "scan.dwell_s")?;
        positive(self.scan.peak_coinc_cps, "scan.peak_coinc_cps")?;
        positive(self.scan.peak_singles_cps, "scan.peak_singles_cps")?;
        check(
            (0.0..=1.0).contains(&self.visibility),
            "visibility",
            &format!("must lie in [0, 1], got {}", self.visibility),
        )?;
        Ok(())
    }

    pub fn pump(&self) -> SpectralPoint {
        SpectralPoint::from_wavelength(self.pump_m).expect("validated")
    }

    /// β² of the sample in SI, at the configured pump wavelength.
    pub fn beta2_si(&self) -> f64 {
        match (self.sut.d_ps_nm_km, self.sut.beta2_si) {
            (Some(d), None) => d_to_beta2(DispersionParameter::new(d, self.pump())),
            (None, Some(b)) => b,
            _ => unreachable!("validated"),
        }
    }

    pub fn dispersion(&self) -> TaylorDispersion {
        TaylorDispersion::from_beta2(self.pump(), self.beta2_si(), self.sut.length_m)
            .expect("validated")
    }

    pub fn phase_offset(&self) -> PhaseOffset {
        PhaseOffset::cascaded(self.sut.phi_off_rad)
    }

    pub fn signal_model(&self) -> SignalModel {
        SignalModel {
            envelope_fwhm_m: self.envelope.fwhm_m,
            envelope_shape: self.envelope.shape,
            filter_bandwidth_m: self.filter.bandwidth_m,
            filter_shape: self.filter.shape,
            noise: NoiseSpec {
                sbrs_coincidence_fraction: self.noise.sbrs_fraction,
                sbrs_singles_cps: self.noise.sbrs_singles_cps,
            },
            visibility: self.visibility,
            phase: Default::default(),
        }
    }

    pub fn scan_plan(&self, seed_override: Option<u64>) -> CliResult<ScanPlan> {
        ScanPlan::uniform(
            self.pump(),
            self.scan.n_points,
            self.scan.span_m,
            self.scan.dwell_s,
            self.scan.peak_coinc_cps,
            self.scan.peak_singles_cps,
            seed_override.unwrap_or(self.seed),
        )
        .map_err(|e| CliError::usage(format!("scan: {e}")))
    }

    /// Copy recentered on a different pump wavelength with its CD adjusted
    /// along a TOD slope (ps/(nm²·km)); used by the pump sweep.
    pub fn at_pump(&self, pump_m: f64, slope_ps_nm2_km: f64) -> CliResult<Self> {
        let mut cfg = self.clone();
        let d_ref = match (self.sut.d_ps_nm_km, self.sut.beta2_si) {
            (Some(d), None) => d,
            _ => qwli::optics::beta2_to_d(self.beta2_si(), self.pump()).d_ps_nm_km,
        };
        let d = d_ref + slope_ps_nm2_km * (pump_m - self.pump_m) * 1e9;
        cfg.pump_m = pump_m;
        cfg.sut.d_ps_nm_km = Some(d);
        cfg.sut.beta2_si = None;
        cfg.validate()?;
        Ok(cfg)
    }
}
