//! Measurable-rate model: coincidence and singles rates versus filter
//! position, combining the phase-matching envelope, energy-conservation
//! filter pairing, the two-photon fringe, and the flat SBRS accidental
//! background.

use crate::error::{Error, Result};
use crate::optics::{detuning, pair_phase, PhaseOffset, SpectralPoint, TaylorDispersion};
use serde::{Deserialize, Serialize};

/// Argument where sinc²(x) = 1/2 (numeric root, frozen; verified in tests).
pub const SINC2_HALF_MAX_ARG: f64 = 1.3915573782515103;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EnvelopeShape {
    Sinc2,
    Gaussian,
}

/// Single-photon phase-matching envelope, parametrized by an equivalent
/// spectral full width at half maximum around the degeneracy point.
///
/// The width is given in wavelength and mapped to detuning through the
/// linear slope at the center, which makes the envelope exactly even in
/// Δω — the property that lets singles normalization cancel it.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PhaseMatchingEnvelope {
    center: SpectralPoint,
    fwhm_m: f64,
    shape: EnvelopeShape,
}

impl PhaseMatchingEnvelope {
    pub fn new(center: SpectralPoint, fwhm_m: f64, shape: EnvelopeShape) -> Result<Self> {
        if !(fwhm_m.is_finite() && fwhm_m > 0.0) {
            return Err(Error::invalid(
                "envelope.fwhm_m",
                format!("must be finite and > 0, got {fwhm_m}"),
            ));
        }
        Ok(Self {
            center,
            fwhm_m,
            shape,
        })
    }

    pub fn center(&self) -> SpectralPoint {
        self.center
    }

    pub fn fwhm_m(&self) -> f64 {
        self.fwhm_m
    }

    pub fn shape(&self) -> EnvelopeShape {
        self.shape
    }

    /// Half width at half maximum in detuning units.
    fn hwhm_detuning(&self) -> f64 {
        self.center.detuning_slope().abs() * self.fwhm_m / 2.0
    }

    /// Envelope transmission in [0, 1] at detuning `dw`; 1 at dw = 0 and
    /// 1/2 at the half-width-at-half-maximum by construction.
    pub fn value(&self, dw: f64) -> f64 {
        let u = dw.abs() / self.hwhm_detuning();
        match self.shape {
            EnvelopeShape::Sinc2 => {
                let s = sinc(SINC2_HALF_MAX_ARG * u);
                s * s
            }
            EnvelopeShape::Gaussian => (-std::f64::consts::LN_2 * u * u).exp(),
        }
    }
}

fn sinc(x: f64) -> f64 {
    if x.abs() < 1e-8 {
        1.0 - x * x / 6.0
    } else {
        x.sin() / x
    }
}

/// λ_i = 1/(2/λ_p − 1/λ_s): the energy-conservation partner of a signal
/// wavelength around the degeneracy wavelength λ_p.
pub fn idler_partner(signal_m: f64, pump_m: f64) -> Result<f64> {
    let inv = 2.0 / pump_m - 1.0 / signal_m;
    if inv <= 0.0 {
        return Err(Error::invalid(
            "signal_m",
            format!("signal wavelength {signal_m} lies beyond the energy-conservation pole"),
        ));
    }
    Ok(1.0 / inv)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FilterShape {
    Rectangular,
    Gaussian,
}

/// A pair of tunable bandpass filters, with the idler center slaved to the
/// signal center through energy conservation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FilterPair {
    signal_center_m: f64,
    idler_center_m: f64,
    bandwidth_m: f64,
    shape: FilterShape,
}

impl FilterPair {
    pub fn at_signal(
        signal: SpectralPoint,
        degeneracy: SpectralPoint,
        bandwidth_m: f64,
        shape: FilterShape,
    ) -> Result<Self> {
        if !(bandwidth_m.is_finite() && bandwidth_m > 0.0) {
            return Err(Error::invalid(
                "filter.bandwidth_m",
                format!("must be finite and > 0, got {bandwidth_m}"),
            ));
        }
        let idler_center_m = idler_partner(signal.wavelength_m(), degeneracy.wavelength_m())?;
        Ok(Self {
            signal_center_m: signal.wavelength_m(),
            idler_center_m,
            bandwidth_m,
            shape,
        })
    }

    pub fn signal_center_m(&self) -> f64 {
        self.signal_center_m
    }

    pub fn idler_center_m(&self) -> f64 {
        self.idler_center_m
    }

    pub fn bandwidth_m(&self) -> f64 {
        self.bandwidth_m
    }

    pub fn shape(&self) -> FilterShape {
        self.shape
    }
}

/// SBRS accidentals: a flat coincidence floor as a fraction of the peak
/// SPDC coincidence rate, plus a flat singles rate per channel.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseSpec {
    pub sbrs_coincidence_fraction: f64,
    pub sbrs_singles_cps: f64,
}

impl NoiseSpec {
    pub const NONE: NoiseSpec = NoiseSpec {
        sbrs_coincidence_fraction: 0.0,
        sbrs_singles_cps: 0.0,
    };

    pub fn new(sbrs_coincidence_fraction: f64, sbrs_singles_cps: f64) -> Result<Self> {
        if !(sbrs_coincidence_fraction >= 0.0 && sbrs_coincidence_fraction.is_finite()) {
            return Err(Error::invalid(
                "noise.sbrs_fraction",
                format!("must be ≥ 0, got {sbrs_coincidence_fraction}"),
            ));
        }
        if !(sbrs_singles_cps >= 0.0 && sbrs_singles_cps.is_finite()) {
            return Err(Error::invalid(
                "noise.sbrs_singles_cps",
                format!("must be ≥ 0, got {sbrs_singles_cps}"),
            ));
        }
        Ok(Self {
            sbrs_coincidence_fraction,
            sbrs_singles_cps,
        })
    }
}

impl Default for NoiseSpec {
    /// Measured-setup default: accidentals well under 1% of the SPDC peak.
    fn default() -> Self {
        NoiseSpec {
            sbrs_coincidence_fraction: 0.005,
            sbrs_singles_cps: 0.0,
        }
    }
}

/// The fringe factor of the rate model: E·½[1 + V cos Δφ] + accidental floor,
/// scaled by the peak rate. Shared by the model-phase and per-branch-phase
/// generator paths.
pub(crate) fn fringe_rate(
    envelope_value: f64,
    delta_phi: f64,
    visibility: f64,
    peak_rate: f64,
    accidental_fraction: f64,
) -> f64 {
    let fringe = 0.5 * (1.0 + visibility * delta_phi.cos());
    let rate = peak_rate * envelope_value * fringe + peak_rate * accidental_fraction;
    rate.max(0.0)
}

/// Expected coincidence rate (counts/s) at a filter position.
///
/// The fringe phase is the order-2 pair-phase model evaluated at the
/// signal-side detuning from the envelope center. Outside the envelope
/// support the SBRS floor remains; the result is never negative.
pub fn coincidence_rate(
    disp: &TaylorDispersion,
    offset: PhaseOffset,
    env: &PhaseMatchingEnvelope,
    filt: &FilterPair,
    visibility: f64,
    peak_rate: f64,
    noise: &NoiseSpec,
) -> f64 {
    debug_assert!(peak_rate > 0.0);
    debug_assert!((0.0..=1.0).contains(&visibility));
    let signal = SpectralPoint::from_wavelength(filt.signal_center_m).expect("validated");
    let dw = detuning(signal, env.center());
    let delta_phi = pair_phase(disp, dw, offset);
    fringe_rate(
        env.value(dw),
        delta_phi,
        visibility,
        peak_rate,
        noise.sbrs_coincidence_fraction,
    )
}

/// Expected singles rates (signal channel, idler channel) in counts/s.
///
/// Each channel carries the same envelope as the coincidences, evaluated at
/// its own detuning, so that normalization cancels the envelope.
pub fn singles_rate(
    env: &PhaseMatchingEnvelope,
    filt: &FilterPair,
    peak_singles: f64,
    noise: &NoiseSpec,
) -> (f64, f64) {
    debug_assert!(peak_singles > 0.0);
    let signal = SpectralPoint::from_wavelength(filt.signal_center_m).expect("validated");
    let idler = SpectralPoint::from_wavelength(filt.idler_center_m).expect("validated");
    let dw_s = detuning(signal, env.center());
    let dw_i = detuning(idler, env.center());
    (
        peak_singles * env.value(dw_s) + noise.sbrs_singles_cps,
        peak_singles * env.value(dw_i) + noise.sbrs_singles_cps,
    )
}

/// Envelope transmission at a detuning; see [`PhaseMatchingEnvelope::value`].
pub fn envelope_value(env: &PhaseMatchingEnvelope, dw: f64) -> f64 {
    env.value(dw)
}

// 9-point Gauss-Legendre rule on [-1, 1].
const GL9_NODES: [f64; 9] = [
    -0.9681602395076261,
    -0.8360311073266358,
    -0.6133714327005904,
    -0.3242534234038089,
    0.0,
    0.3242534234038089,
    0.6133714327005904,
    0.8360311073266358,
    0.9681602395076261,
];
const GL9_WEIGHTS: [f64; 9] = [
    0.0812743883615744,
    0.1806481606948574,
    0.2606106964029354,
    0.3123470770400029,
    0.3302393550012598,
    0.3123470770400029,
    0.2606106964029354,
    0.1806481606948574,
    0.0812743883615744,
];

/// Coincidence rate averaged over the filter passband with a 9-point
/// quadrature, for validating the evaluate-at-center approximation
/// (error O((Δλ_filter/Δλ_fringe)²) for filters much narrower than the
/// fringe).
pub fn coincidence_rate_passband(
    disp: &TaylorDispersion,
    offset: PhaseOffset,
    env: &PhaseMatchingEnvelope,
    filt: &FilterPair,
    visibility: f64,
    peak_rate: f64,
    noise: &NoiseSpec,
) -> Result<f64> {
    // Rectangular: plain average over the passband. Gaussian: weighted
    // average over ±1.5 FWHM with the quadrature's own weight normalization.
    let (half_span, gaussian) = match filt.shape {
        FilterShape::Rectangular => (filt.bandwidth_m / 2.0, false),
        FilterShape::Gaussian => (1.5 * filt.bandwidth_m, true),
    };
    let sigma = filt.bandwidth_m / (2.0 * (2.0 * std::f64::consts::LN_2).sqrt());
    let mut num = 0.0;
    let mut den = 0.0;
    for (&x, &w) in GL9_NODES.iter().zip(&GL9_WEIGHTS) {
        let lambda = filt.signal_center_m + half_span * x;
        let sub = FilterPair::at_signal(
            SpectralPoint::from_wavelength(lambda)?,
            env.center(),
            filt.bandwidth_m,
            filt.shape,
        )?;
        let profile = if gaussian {
            let t = (lambda - filt.signal_center_m) / sigma;
            (-0.5 * t * t).exp()
        } else {
            1.0
        };
        num +=
            w * profile * coincidence_rate(disp, offset, env, &sub, visibility, peak_rate, noise);
        den += w * profile;
    }
    Ok(num / den)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::optics::pair_phase_to_order;
    use proptest::prelude::*;
    use std::f64::consts::PI;

    const PUMP_M: f64 = 1560.6e-9;
    const BETA2: f64 = 1.0557475890700804e-25;
    const LENGTH: f64 = 0.9;

    fn pump() -> SpectralPoint {
        SpectralPoint::from_wavelength(PUMP_M).unwrap()
    }

    fn disp() -> TaylorDispersion {
        TaylorDispersion::from_beta2(pump(), BETA2, LENGTH).unwrap()
    }

    fn env(shape: EnvelopeShape) -> PhaseMatchingEnvelope {
        PhaseMatchingEnvelope::new(pump(), 60e-9, shape).unwrap()
    }

    fn filter_at(lambda_m: f64) -> FilterPair {
        FilterPair::at_signal(
            SpectralPoint::from_wavelength(lambda_m).unwrap(),
            pump(),
            500e-12,
            FilterShape::Rectangular,
        )
        .unwrap()
    }

    fn assert_rel(actual: f64, expected: f64, tol: f64) {
        let scale = expected.abs().max(1e-300);
        assert!(
            ((actual - expected) / scale).abs() <= tol,
            "got {actual:e}, expected {expected:e}"
        );
    }

    #[test]
    fn idler_partner_examples() {
        assert_rel(idler_partner(PUMP_M, PUMP_M).unwrap(), PUMP_M, 1e-15);
        // Direct arithmetic oracle: 1/(2/λp − 1/λs) = 1551.3118905913640 nm.
        assert_rel(
            idler_partner(1570e-9, PUMP_M).unwrap(),
            1.551311890591364e-6,
            1e-12,
        );
    }

    #[test]
    fn idler_partner_is_involution() {
        let li = idler_partner(1570e-9, PUMP_M).unwrap();
        assert_rel(idler_partner(li, PUMP_M).unwrap(), 1570e-9, 1e-12);
    }

    #[test]
    fn idler_partner_pole_rejected() {
        // Signal at λp/2 sits exactly on the pole; below it, the "partner"
        // would need negative wavelength.
        assert!(idler_partner(PUMP_M / 2.0, PUMP_M).is_err());
        assert!(idler_partner(PUMP_M / 2.1, PUMP_M).is_err());
    }

    #[test]
    fn filter_pair_energy_conservation_invariant() {
        let f = filter_at(1570e-9);
        let lhs = 2.0 / PUMP_M;
        let rhs = 1.0 / f.signal_center_m() + 1.0 / f.idler_center_m();
        assert_rel(rhs, lhs, 1e-12);
    }

    #[test]
    fn envelope_is_one_at_degeneracy() {
        assert_eq!(env(EnvelopeShape::Sinc2).value(0.0), 1.0);
        assert_eq!(env(EnvelopeShape::Gaussian).value(0.0), 1.0);
    }

    #[test]
    fn envelope_half_at_half_fwhm() {
        for shape in [EnvelopeShape::Sinc2, EnvelopeShape::Gaussian] {
            let e = env(shape);
            let dw = pump().detuning_slope().abs() * 30e-9;
            assert!((e.value(dw) - 0.5).abs() < 1e-9, "{shape:?}");
            assert!((e.value(-dw) - 0.5).abs() < 1e-9, "{shape:?}");
        }
    }

    #[test]
    fn sinc2_half_max_root_matches_numeric_oracle() {
        // Bisection on sinc²(x) − 1/2 over [1, 2].
        let f = |x: f64| {
            let s = x.sin() / x;
            s * s - 0.5
        };
        let (mut lo, mut hi) = (1.0_f64, 2.0_f64);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if f(mid) > 0.0 {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        let root = 0.5 * (lo + hi);
        assert_rel(SINC2_HALF_MAX_ARG, root, 1e-12);
        // First zero of sinc² at x = π lands at π/root ≈ 2.2576 half-widths.
        let e = env(EnvelopeShape::Sinc2);
        let hwhm_dw = pump().detuning_slope().abs() * 30e-9;
        let zero_dw = hwhm_dw * PI / root;
        assert!(e.value(zero_dw) < 1e-12);
        assert_rel(PI / root, 2.2576091382859107, 1e-12);
    }

    #[test]
    fn coincidence_rate_peak_at_degeneracy() {
        let f = filter_at(PUMP_M);
        let rate = coincidence_rate(
            &disp(),
            PhaseOffset::ZERO,
            &env(EnvelopeShape::Gaussian),
            &f,
            1.0,
            5000.0,
            &NoiseSpec::NONE,
        );
        assert_rel(rate, 5000.0, 1e-12);
    }

    #[test]
    fn coincidence_rate_null_at_pi_phase() {
        // Δφ = π at Δω = √(π/(β²L)).
        let dw_null = (PI / (BETA2 * LENGTH)).sqrt();
        let lambda = 1.0 / (1.0 / PUMP_M + dw_null / (2.0 * PI * crate::optics::SPEED_OF_LIGHT));
        let f = filter_at(lambda);
        let rate = coincidence_rate(
            &disp(),
            PhaseOffset::ZERO,
            &env(EnvelopeShape::Gaussian),
            &f,
            1.0,
            5000.0,
            &NoiseSpec::NONE,
        );
        assert!(rate.abs() < 5000.0 * 1e-9, "rate at null: {rate}");
    }

    #[test]
    fn first_null_position_matches_oracle() {
        // Invert Δφ = π: the null sits at the fringe width over √2,
        // ≈ 7.4346 nm from degeneracy in the linearized map.
        let disp = disp();
        let phase_minus_pi = |dl: f64| {
            let lam = PUMP_M + dl;
            let dw = detuning(SpectralPoint::from_wavelength(lam).unwrap(), pump());
            pair_phase(&disp, dw, PhaseOffset::ZERO) - PI
        };
        let (mut lo, mut hi) = (1e-9_f64, 12e-9_f64);
        assert!(phase_minus_pi(lo) < 0.0 && phase_minus_pi(hi) > 0.0);
        for _ in 0..100 {
            let mid = 0.5 * (lo + hi);
            if phase_minus_pi(mid) < 0.0 {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        let null = 0.5 * (lo + hi);
        assert_rel(null, 7.4345770432521e-9, 1e-2);
    }

    #[test]
    fn singles_rate_follows_envelope() {
        let e = env(EnvelopeShape::Gaussian);
        let (s0, i0) = singles_rate(&e, &filter_at(PUMP_M), 50_000.0, &NoiseSpec::NONE);
        assert_rel(s0, 50_000.0, 1e-12);
        assert_rel(i0, 50_000.0, 1e-12);
        let f = filter_at(PUMP_M + 8e-9);
        let dw = detuning(
            SpectralPoint::from_wavelength(f.signal_center_m()).unwrap(),
            pump(),
        );
        let (s, _) = singles_rate(&e, &f, 50_000.0, &NoiseSpec::NONE);
        assert_rel(s, 50_000.0 * e.value(dw), 1e-12);
    }

    #[test]
    fn normalization_cancels_envelope_on_noiseless_model() {
        // C/√(S_s·S_i) must equal (Rc/Rs)·½[1 + V cos Δφ] across the scan.
        let d = disp();
        let e = env(EnvelopeShape::Sinc2);
        let vis = 0.95;
        for k in 0..200 {
            let lam = PUMP_M - 12e-9 + 24e-9 * (k as f64) / 199.0;
            let f = filter_at(lam);
            let c = coincidence_rate(&d, PhaseOffset::ZERO, &e, &f, vis, 5000.0, &NoiseSpec::NONE);
            let (ss, si) = singles_rate(&e, &f, 50_000.0, &NoiseSpec::NONE);
            let value = c / (ss * si).sqrt();
            let dw = detuning(SpectralPoint::from_wavelength(lam).unwrap(), pump());
            let model = 0.1 * 0.5 * (1.0 + vis * pair_phase(&d, dw, PhaseOffset::ZERO).cos());
            assert_rel(value, model, 1e-12);
        }
    }

    #[test]
    fn fringe_chirps_toward_larger_detuning() {
        // Null spacing shrinks with |Δλ|: solve Δφ = (2k−1)π for k = 1..=4.
        let d = disp();
        let mut nulls = Vec::new();
        for k in 1..=4 {
            let target = (2 * k - 1) as f64 * PI;
            let f = |dl: f64| {
                let dw = detuning(SpectralPoint::from_wavelength(PUMP_M + dl).unwrap(), pump());
                pair_phase(&d, dw, PhaseOffset::ZERO) - target
            };
            let (mut lo, mut hi) = (1e-10_f64, 40e-9_f64);
            for _ in 0..100 {
                let mid = 0.5 * (lo + hi);
                if f(mid) < 0.0 {
                    lo = mid;
                } else {
                    hi = mid;
                }
            }
            nulls.push(0.5 * (lo + hi));
        }
        let spacings: Vec<f64> = nulls.windows(2).map(|w| w[1] - w[0]).collect();
        for pair in spacings.windows(2) {
            assert!(pair[1] < pair[0], "spacings must shrink: {spacings:?}");
        }
    }

    #[test]
    fn passband_quadrature_close_to_center_evaluation() {
        // 500 pm filter vs ~10.5 nm fringe: agreement better than 0.3%.
        let d = disp();
        let e = env(EnvelopeShape::Gaussian);
        // Bound on the peak-rate scale; the fringe-null point carries the
        // largest curvature prefactor, a bit above the generic (bw/width)².
        for (lam, bound) in [
            (PUMP_M - 9e-9, 3e-3),
            (PUMP_M - 4e-9, 3e-3),
            (PUMP_M + 3e-9, 3e-3),
            (PUMP_M + 7.4e-9, 5e-3),
        ] {
            let f = filter_at(lam);
            let center = coincidence_rate(
                &d,
                PhaseOffset::ZERO,
                &e,
                &f,
                0.95,
                5000.0,
                &NoiseSpec::NONE,
            );
            let avg = coincidence_rate_passband(
                &d,
                PhaseOffset::ZERO,
                &e,
                &f,
                0.95,
                5000.0,
                &NoiseSpec::NONE,
            )
            .unwrap();
            assert!(
                (avg - center).abs() / 5000.0 < bound,
                "center {center}, passband {avg} at {lam}"
            );
        }
    }

    #[test]
    fn per_branch_phase_matches_symmetric_at_order_two() {
        let d = disp();
        let f = filter_at(1568e-9);
        let dw_s = detuning(
            SpectralPoint::from_wavelength(f.signal_center_m()).unwrap(),
            pump(),
        );
        let dw_i = detuning(
            SpectralPoint::from_wavelength(f.idler_center_m()).unwrap(),
            pump(),
        );
        let sym = pair_phase_to_order(&d, dw_s, PhaseOffset::ZERO, 2);
        let per = d.per_branch_phase(dw_s, dw_i, 2);
        assert_rel(per, sym, 1e-9);
    }

    proptest! {
        #[test]
        fn prop_coincidence_rate_never_negative(
            dl_nm in -20.0_f64..20.0,
            beta2 in prop::sample::select(vec![-2e-25, -1e-26, 1e-26, 2e-25]),
            phi_off in -7.0_f64..7.0,
            vis in 0.0_f64..1.0,
            frac in 0.0_f64..0.02,
        ) {
            let d = TaylorDispersion::from_beta2(pump(), beta2, LENGTH).unwrap();
            let noise = NoiseSpec::new(frac, 0.0).unwrap();
            let f = filter_at(PUMP_M + dl_nm * 1e-9);
            let rate = coincidence_rate(
                &d,
                PhaseOffset::cascaded(phi_off),
                &env(EnvelopeShape::Sinc2),
                &f,
                vis,
                5000.0,
                &noise,
            );
            prop_assert!(rate >= 0.0);
            prop_assert!(rate.is_finite());
        }

        #[test]
        fn prop_envelope_bounded(dw in -5e13_f64..5e13) {
            for shape in [EnvelopeShape::Sinc2, EnvelopeShape::Gaussian] {
                let e = env(shape);
                let v = e.value(dw);
                prop_assert!((0.0..=1.0).contains(&v));
                // Even in detuning.
                prop_assert!((v - e.value(-dw)).abs() < 1e-15);
            }
        }
    }
}
