//! Spectral units, the Taylor dispersion phase model, chromatic-dispersion
//! unit conversions, and the first-fringe working-range formula.
//!
//! All computation is in SI (meters, rad/s, s^n/m); the reporting unit
//! ps/(nm·km) is converted only at the boundary.

use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

/// Speed of light in vacuum, m/s (exact).
pub const SPEED_OF_LIGHT: f64 = 299_792_458.0;

pub(crate) const TWO_PI_C: f64 = 2.0 * PI * SPEED_OF_LIGHT;

/// 1 ps/(nm·km) expressed in SI s/m².
const D_SI_PER_PS_NM_KM: f64 = 1e-6;

/// A point on the optical spectrum, stored as vacuum wavelength.
///
/// The angular frequency ω = 2πc/λ is derived on demand; the λ→ω→λ round
/// trip is exact to a few ulp.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpectralPoint {
    wavelength_m: f64,
}

impl SpectralPoint {
    pub fn from_wavelength(wavelength_m: f64) -> Result<Self> {
        if !(wavelength_m.is_finite() && wavelength_m > 0.0) {
            return Err(Error::invalid(
                "wavelength_m",
                format!("must be finite and > 0, got {wavelength_m}"),
            ));
        }
        Ok(Self { wavelength_m })
    }

    pub fn from_angular_frequency(omega_rad_s: f64) -> Result<Self> {
        if !(omega_rad_s.is_finite() && omega_rad_s > 0.0) {
            return Err(Error::invalid(
                "angular_frequency",
                format!("must be finite and > 0, got {omega_rad_s}"),
            ));
        }
        Ok(Self {
            wavelength_m: TWO_PI_C / omega_rad_s,
        })
    }

    pub fn wavelength_m(&self) -> f64 {
        self.wavelength_m
    }

    /// ω = 2πc/λ in rad/s.
    pub fn angular_frequency(&self) -> f64 {
        TWO_PI_C / self.wavelength_m
    }

    /// dω/dλ = −2πc/λ² at this point, rad/s per meter.
    pub fn detuning_slope(&self) -> f64 {
        -TWO_PI_C / (self.wavelength_m * self.wavelength_m)
    }
}

/// Detuning Δω = ω_signal − ω_pump-degeneracy in rad/s.
///
/// Antisymmetric under swapping the signal with its energy-conservation
/// partner: the idler of `signal` has detuning −Δω.
pub fn detuning(signal: SpectralPoint, pump: SpectralPoint) -> f64 {
    TWO_PI_C * (1.0 / signal.wavelength_m - 1.0 / pump.wavelength_m)
}

/// Provenance of the constant phase offset in the pair-phase model.
///
/// `Bulk` corresponds to a directly pumped loop (offset (2β⁰ − k_p)L),
/// `Cascaded` to the up-/down-conversion variant (offset (2β⁰ − 2k₀)L).
/// The offset itself is carried as a free scalar because the fit treats it
/// as a nuisance parameter; the mode tag only records where it came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OffsetMode {
    Bulk,
    Cascaded,
}

/// Detuning-independent phase offset of the two-photon fringe.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PhaseOffset {
    pub rad: f64,
    pub mode: OffsetMode,
}

impl PhaseOffset {
    pub const ZERO: PhaseOffset = PhaseOffset {
        rad: 0.0,
        mode: OffsetMode::Cascaded,
    };

    pub fn bulk(rad: f64) -> Self {
        Self {
            rad,
            mode: OffsetMode::Bulk,
        }
    }

    pub fn cascaded(rad: f64) -> Self {
        Self {
            rad,
            mode: OffsetMode::Cascaded,
        }
    }
}

/// Wavevector Taylor series β⁽ⁿ⁾ of a sample under test, with its length.
///
/// `beta[n]` is ∂ⁿk/∂ωⁿ at the reference frequency, in sⁿ/m. At least
/// orders 0..2 must be present. β⁰ and β¹ never enter the pair phase:
/// β¹ cancels between the two branches and β⁰ is absorbed into the free
/// [`PhaseOffset`].
#[derive(Debug, Clone, PartialEq)]
pub struct TaylorDispersion {
    reference: SpectralPoint,
    beta: Vec<f64>,
    length_m: f64,
}

/// Default truncation order of the pair-phase model ("second order").
pub const DEFAULT_PHASE_ORDER: usize = 2;

impl TaylorDispersion {
    pub fn new(reference: SpectralPoint, beta: Vec<f64>, length_m: f64) -> Result<Self> {
        if beta.len() < 3 {
            return Err(Error::invalid(
                "beta",
                format!("need coefficients for n = 0..2, got {} entries", beta.len()),
            ));
        }
        if beta.iter().any(|b| !b.is_finite()) {
            return Err(Error::invalid("beta", "all coefficients must be finite"));
        }
        if !(length_m.is_finite() && length_m > 0.0) {
            return Err(Error::invalid(
                "length_m",
                format!("must be finite and > 0, got {length_m}"),
            ));
        }
        Ok(Self {
            reference,
            beta,
            length_m,
        })
    }

    /// Series with only β² set, the common case for a pure-CD sample.
    pub fn from_beta2(reference: SpectralPoint, beta2_s2_m: f64, length_m: f64) -> Result<Self> {
        Self::new(reference, vec![0.0, 0.0, beta2_s2_m], length_m)
    }

    /// Returns a copy with coefficient β⁽ⁿ⁾ replaced (extending the series
    /// with zeros if needed).
    pub fn with_beta(&self, n: usize, value: f64) -> Result<Self> {
        if !value.is_finite() {
            return Err(Error::invalid("beta", "coefficient must be finite"));
        }
        let mut beta = self.beta.clone();
        if beta.len() <= n {
            beta.resize(n + 1, 0.0);
        }
        beta[n] = value;
        Self::new(self.reference, beta, self.length_m)
    }

    pub fn reference(&self) -> SpectralPoint {
        self.reference
    }

    /// β⁽ⁿ⁾ in sⁿ/m; zero beyond the stored series.
    pub fn beta(&self, n: usize) -> f64 {
        self.beta.get(n).copied().unwrap_or(0.0)
    }

    pub fn beta2(&self) -> f64 {
        self.beta[2]
    }

    pub fn max_stored_order(&self) -> usize {
        self.beta.len() - 1
    }

    pub fn length_m(&self) -> f64 {
        self.length_m
    }

    /// Dispersion phase of the pair with both branches taken at symmetric
    /// detunings ±Δω, summed before truncation at `max_order`.
    ///
    /// Each odd order contributes (Δωⁿ + (−Δω)ⁿ) = 0 exactly, including in
    /// floating point, so odd coefficients have no effect on the result.
    /// Orders 0 and 1 are excluded (see type docs). The result includes the
    /// factor L but not the phase offset.
    pub fn symmetric_phase(&self, dw: f64, max_order: usize) -> f64 {
        self.branch_phase(dw, -dw, max_order)
    }

    /// Dispersion phase with independent branch detunings, for generators
    /// that evaluate signal and idler at their actual filter positions.
    pub fn per_branch_phase(&self, dw_signal: f64, dw_idler: f64, max_order: usize) -> f64 {
        self.branch_phase(dw_signal, dw_idler, max_order)
    }

    fn branch_phase(&self, dw_s: f64, dw_i: f64, max_order: usize) -> f64 {
        let top = max_order.min(self.max_stored_order());
        let mut sum = 0.0;
        let mut factorial = 2.0;
        for n in 2..=top {
            // n! built incrementally; exact in f64 for any realistic order.
            if n > 2 {
                factorial *= n as f64;
            }
            let even_sum = dw_s.powi(n as i32) + dw_i.powi(n as i32);
            sum += self.beta[n] / factorial * even_sum;
        }
        sum * self.length_m
    }
}

/// Relative phase Δφ between the |HH⟩ and |VV⟩ components of the pair
/// state at detuning Δω: β²·Δω²·L + φ_off, with odd dispersion orders
/// cancelled by construction.
pub fn pair_phase(disp: &TaylorDispersion, dw: f64, offset: PhaseOffset) -> f64 {
    pair_phase_to_order(disp, dw, offset, DEFAULT_PHASE_ORDER)
}

/// [`pair_phase`] with the Taylor truncation order made explicit (n = 4
/// enables quartic-dispersion robustness studies).
pub fn pair_phase_to_order(
    disp: &TaylorDispersion,
    dw: f64,
    offset: PhaseOffset,
    max_order: usize,
) -> f64 {
    disp.symmetric_phase(dw, max_order) + offset.rad
}

/// Chromatic dispersion in the fiber-optics reporting unit.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DispersionParameter {
    pub d_ps_nm_km: f64,
    pub at_wavelength: SpectralPoint,
}

impl DispersionParameter {
    pub fn new(d_ps_nm_km: f64, at_wavelength: SpectralPoint) -> Self {
        Self {
            d_ps_nm_km,
            at_wavelength,
        }
    }
}

/// β² = −D·λ²/(2πc), D converted from ps/(nm·km) to SI.
pub fn d_to_beta2(d: DispersionParameter) -> f64 {
    let d_si = d.d_ps_nm_km * D_SI_PER_PS_NM_KM;
    let lambda = d.at_wavelength.wavelength_m();
    -d_si * lambda * lambda / TWO_PI_C
}

/// Inverse of [`d_to_beta2`]: D = −2πc·β²/λ² reported in ps/(nm·km).
pub fn beta2_to_d(beta2_s2_m: f64, at_wavelength: SpectralPoint) -> DispersionParameter {
    let lambda = at_wavelength.wavelength_m();
    let d_si = -beta2_s2_m * TWO_PI_C / (lambda * lambda);
    DispersionParameter {
        d_ps_nm_km: d_si / D_SI_PER_PS_NM_KM,
        at_wavelength,
    }
}

/// Spectral width of the first quadratic two-photon fringe.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FringeWidth {
    pub delta_lambda_m: f64,
}

/// Δλ = (λ_p⁴ / (2π c² |β²| L))^(1/2).
///
/// The phase model reaches 2π at the linearized detuning 2πcΔλ/λ_p²
/// (with zero offset), so Δλ spans one full fringe period; the first
/// null sits at Δλ/√2. Monotone decreasing in both |β²| and L.
pub fn fringe_width(pump: SpectralPoint, beta2_s2_m: f64, length_m: f64) -> Result<FringeWidth> {
    if beta2_s2_m == 0.0 || !beta2_s2_m.is_finite() {
        return Err(Error::invalid(
            "beta2",
            "zero or non-finite dispersion gives an unbounded fringe",
        ));
    }
    if !(length_m > 0.0 && length_m.is_finite()) {
        return Err(Error::invalid(
            "length_m",
            format!("must be finite and > 0, got {length_m}"),
        ));
    }
    let lambda = pump.wavelength_m();
    let lambda4 = lambda * lambda * lambda * lambda;
    let delta_lambda_m = (lambda4
        / (2.0 * PI * SPEED_OF_LIGHT * SPEED_OF_LIGHT * beta2_s2_m.abs() * length_m))
        .sqrt();
    Ok(FringeWidth { delta_lambda_m })
}
