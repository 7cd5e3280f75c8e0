//! Polarization-state algebra of the Sagnac loop: directional propagation,
//! superposition into the entangled pair state, and the projection that
//! produces the (1 + V cos Δφ)/2 fringe.

use crate::error::{Error, Result};
use num_complex::Complex64;

/// Pump polarization state, normalized at construction.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PumpState {
    amp_h: Complex64,
    amp_v: Complex64,
}

impl PumpState {
    pub fn new(amp_h: Complex64, amp_v: Complex64) -> Result<Self> {
        let norm2 = amp_h.norm_sqr() + amp_v.norm_sqr();
        if !norm2.is_finite() || norm2 <= 0.0 {
            return Err(Error::DegenerateState(
                "pump amplitudes must not both be zero".into(),
            ));
        }
        let scale = norm2.sqrt();
        Ok(Self {
            amp_h: amp_h / scale,
            amp_v: amp_v / scale,
        })
    }

    /// |D⟩ = (|H⟩ + |V⟩)/√2, the standard loop input.
    pub fn diagonal() -> Self {
        let a = Complex64::new(std::f64::consts::FRAC_1_SQRT_2, 0.0);
        Self { amp_h: a, amp_v: a }
    }

    pub fn horizontal() -> Self {
        Self {
            amp_h: Complex64::new(1.0, 0.0),
            amp_v: Complex64::new(0.0, 0.0),
        }
    }

    pub fn vertical() -> Self {
        Self {
            amp_h: Complex64::new(0.0, 0.0),
            amp_v: Complex64::new(1.0, 0.0),
        }
    }

    pub fn amp_h(&self) -> Complex64 {
        self.amp_h
    }

    pub fn amp_v(&self) -> Complex64 {
        self.amp_v
    }
}

/// Accumulated propagation phases for one loop direction: the phase picked
/// up while the light is still pump-colored (φ_p, or 2φ₀ after SHG in the
/// cascaded scheme) and the phase picked up by the generated pair (φ_s + φ_i).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DirectionalPhase {
    pub phi_pump: f64,
    pub phi_pair: f64,
}

impl DirectionalPhase {
    pub fn new(phi_pump: f64, phi_pair: f64) -> Result<Self> {
        if !(phi_pump.is_finite() && phi_pair.is_finite()) {
            return Err(Error::invalid("directional_phase", "phases must be finite"));
        }
        Ok(Self { phi_pump, phi_pair })
    }
}

/// Output pair state α|HH⟩ + β|VV⟩, normalized at construction.
///
/// Cross terms HV/VH are identically zero by construction of the loop, so
/// only the two co-polarized amplitudes are carried.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TwoPhotonState {
    amp_hh: Complex64,
    amp_vv: Complex64,
}

impl TwoPhotonState {
    pub fn new(amp_hh: Complex64, amp_vv: Complex64) -> Result<Self> {
        let norm2 = amp_hh.norm_sqr() + amp_vv.norm_sqr();
        if !norm2.is_finite() || norm2 <= 0.0 {
            return Err(Error::DegenerateState(
                "pair amplitudes must not both be zero".into(),
            ));
        }
        let scale = norm2.sqrt();
        Ok(Self {
            amp_hh: amp_hh / scale,
            amp_vv: amp_vv / scale,
        })
    }

    /// (|HH⟩ + e^{iΔφ}|VV⟩)/√2.
    pub fn balanced(delta_phi: f64) -> Self {
        let a = std::f64::consts::FRAC_1_SQRT_2;
        Self {
            amp_hh: Complex64::new(a, 0.0),
            amp_vv: Complex64::from_polar(a, delta_phi),
        }
    }

    pub fn amp_hh(&self) -> Complex64 {
        self.amp_hh
    }

    pub fn amp_vv(&self) -> Complex64 {
        self.amp_vv
    }

    /// arg(β) − arg(α), the fringe phase Δφ.
    pub fn relative_phase(&self) -> f64 {
        self.amp_vv.arg() - self.amp_hh.arg()
    }
}

/// Propagates the pump through both loop directions and superposes the two
/// directional contributions into the output pair state.
///
/// The V pump component drives the clockwise branch and emerges as |HH⟩
/// carrying that branch's pump phase; the H component drives the
/// counterclockwise branch and emerges as |VV⟩ carrying the pair phase.
/// `brightness_ratio` is the CWi/CCWi pair-generation efficiency ratio
/// (1 = balanced); the output is renormalized.
pub fn propagate(
    pump: &PumpState,
    cwi: DirectionalPhase,
    ccwi: DirectionalPhase,
    brightness_ratio: f64,
) -> Result<TwoPhotonState> {
    if !(brightness_ratio.is_finite() && brightness_ratio > 0.0) {
        return Err(Error::invalid(
            "brightness_ratio",
            format!("must be finite and > 0, got {brightness_ratio}"),
        ));
    }
    let amp_hh = pump.amp_v * brightness_ratio.sqrt() * Complex64::from_polar(1.0, cwi.phi_pump);
    let amp_vv = pump.amp_h * Complex64::from_polar(1.0, ccwi.phi_pair);
    TwoPhotonState::new(amp_hh, amp_vv)
}

/// Projection probability of the pair state onto analyzer angles
/// (θ_s, θ_i): |cos θ_s cos θ_i·α + sin θ_s sin θ_i·β|².
///
/// At θ_s = θ_i = 45° this is the diagonal-basis fringe, maximal at
/// Δφ = 0 for any visibility > 0.
pub fn coincidence_probability(
    state: &TwoPhotonState,
    analyzer_angle_s: f64,
    analyzer_angle_i: f64,
) -> f64 {
    let proj = analyzer_angle_s.cos() * analyzer_angle_i.cos() * state.amp_hh
        + analyzer_angle_s.sin() * analyzer_angle_i.sin() * state.amp_vv;
    proj.norm_sqr()
}

/// Fringe visibility of the state: V = overlap · 2|α||β|/(|α|² + |β|²).
///
/// `overlap` compresses any residual CWi/CCWi spectral distinguishability
/// into a single scalar in [0, 1].
pub fn state_visibility(state: &TwoPhotonState, overlap: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&overlap) {
        return Err(Error::invalid(
            "overlap",
            format!("must lie in [0, 1], got {overlap}"),
        ));
    }
    let a = state.amp_hh.norm();
    let b = state.amp_vv.norm();
    Ok(overlap * 2.0 * a * b / (a * a + b * b))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use std::f64::consts::{FRAC_PI_2, FRAC_PI_4, PI};

    fn assert_close(a: f64, b: f64, tol: f64) {
        assert!((a - b).abs() <= tol, "got {a}, expected {b}");
    }

    fn diag_fringe(delta_phi: f64, ratio: f64) -> f64 {
        let state = propagate(
            &PumpState::diagonal(),
            DirectionalPhase::new(0.0, 0.0).unwrap(),
            DirectionalPhase::new(0.0, delta_phi).unwrap(),
            ratio,
        )
        .unwrap();
        coincidence_probability(&state, FRAC_PI_4, FRAC_PI_4)
    }

    #[test]
    fn horizontal_pump_gives_pure_vv() {
        let state = propagate(
            &PumpState::horizontal(),
            DirectionalPhase::new(0.1, 0.2).unwrap(),
            DirectionalPhase::new(0.3, 0.4).unwrap(),
            1.0,
        )
        .unwrap();
        assert_eq!(state.amp_hh().norm(), 0.0);
        assert_close(state.amp_vv().norm(), 1.0, 1e-15);
    }

    #[test]
    fn diagonal_pump_reproduces_entangled_superposition() {
        let delta_phi = 1.234;
        let state = propagate(
            &PumpState::diagonal(),
            DirectionalPhase::new(0.0, 0.0).unwrap(),
            DirectionalPhase::new(0.0, delta_phi).unwrap(),
            1.0,
        )
        .unwrap();
        assert_close(
            state.amp_hh().norm(),
            std::f64::consts::FRAC_1_SQRT_2,
            1e-15,
        );
        assert_close(
            state.amp_vv().norm(),
            std::f64::consts::FRAC_1_SQRT_2,
            1e-15,
        );
        assert_close(state.relative_phase(), delta_phi, 1e-15);
    }

    #[test]
    fn brightness_ratio_two_weights_amplitudes() {
        let state = propagate(
            &PumpState::diagonal(),
            DirectionalPhase::new(0.0, 0.0).unwrap(),
            DirectionalPhase::new(0.0, 0.0).unwrap(),
            2.0,
        )
        .unwrap();
        // |amp_hh|² : |amp_vv|² = 2 : 1 → V = 2√2/3.
        assert_close(state.amp_hh().norm_sqr(), 2.0 / 3.0, 1e-12);
        let v = state_visibility(&state, 1.0).unwrap();
        assert_close(v, 0.9428090415820635, 1e-12);
    }

    #[test]
    fn diagonal_fringe_extrema_and_quadrature() {
        let peak = diag_fringe(0.0, 1.0);
        assert_close(diag_fringe(0.0, 1.0) / peak, 1.0, 1e-12);
        assert_close(diag_fringe(PI, 1.0) / peak, 0.0, 1e-12);
        assert_close(diag_fringe(FRAC_PI_2, 1.0) / peak, 0.5, 1e-12);
        // Absolute scale: diagonal analyzers pass half of the pair flux.
        assert_close(peak, 0.5, 1e-12);
    }

    #[test]
    fn orthogonal_analyzers_block_copolarized_state() {
        let state = TwoPhotonState::balanced(0.7);
        assert_close(coincidence_probability(&state, 0.0, FRAC_PI_2), 0.0, 1e-30);
    }

    #[test]
    fn visibility_of_balanced_state() {
        let state = TwoPhotonState::balanced(0.0);
        assert_close(state_visibility(&state, 1.0).unwrap(), 1.0, 1e-15);
        assert_close(state_visibility(&state, 0.98).unwrap(), 0.98, 1e-15);
    }

    #[test]
    fn diagonal_projection_is_the_rate_model_bracket() {
        // Twice the 45°/45° projection probability equals the fringe factor
        // ½[1 + V cos Δφ] that the rate model uses, for any brightness ratio.
        for ratio in [1.0, 2.0, 0.4] {
            for k in 0..40 {
                let dphi = -6.0 + 12.0 * k as f64 / 39.0;
                let state = propagate(
                    &PumpState::diagonal(),
                    DirectionalPhase::new(0.0, 0.0).unwrap(),
                    DirectionalPhase::new(0.0, dphi).unwrap(),
                    ratio,
                )
                .unwrap();
                let prob = coincidence_probability(&state, FRAC_PI_4, FRAC_PI_4);
                let v = state_visibility(&state, 1.0).unwrap();
                let bracket = 0.5 * (1.0 + v * dphi.cos());
                assert_close(2.0 * prob, bracket, 1e-12);
            }
        }
    }

    #[test]
    fn zero_pump_rejected() {
        assert!(PumpState::new(Complex64::new(0.0, 0.0), Complex64::new(0.0, 0.0)).is_err());
    }

    #[test]
    fn nonpositive_ratio_rejected() {
        let err = propagate(
            &PumpState::diagonal(),
            DirectionalPhase::new(0.0, 0.0).unwrap(),
            DirectionalPhase::new(0.0, 0.0).unwrap(),
            0.0,
        );
        assert!(err.is_err());
    }

    proptest! {
        #[test]
        fn prop_propagate_output_normalized(
            h_re in -1.0_f64..1.0, h_im in -1.0_f64..1.0,
            v_re in -1.0_f64..1.0, v_im in -1.0_f64..1.0,
            phi_pump in -10.0_f64..10.0, phi_pair in -10.0_f64..10.0,
            ratio in 0.05_f64..20.0,
        ) {
            let h = Complex64::new(h_re, h_im);
            let v = Complex64::new(v_re, v_im);
            prop_assume!(h.norm_sqr() + v.norm_sqr() > 1e-6);
            let pump = PumpState::new(h, v).unwrap();
            let state = propagate(
                &pump,
                DirectionalPhase::new(phi_pump, 0.0).unwrap(),
                DirectionalPhase::new(0.0, phi_pair).unwrap(),
                ratio,
            );
            // A purely-H or purely-V pump with the other branch suppressed is
            // still a valid single-branch state; only the all-zero case errors.
            if pump.amp_h().norm_sqr() + pump.amp_v().norm_sqr() > 0.0 {
                let state = state.unwrap();
                let norm2 = state.amp_hh().norm_sqr() + state.amp_vv().norm_sqr();
                prop_assert!((norm2 - 1.0).abs() < 1e-12);
            }
        }

        #[test]
        fn prop_global_phase_invariance(
            delta_phi in -10.0_f64..10.0,
            global in -10.0_f64..10.0,
            theta_s in 0.0_f64..PI,
            theta_i in 0.0_f64..PI,
        ) {
            let state = TwoPhotonState::balanced(delta_phi);
            let rot = Complex64::from_polar(1.0, global);
            let rotated = TwoPhotonState::new(state.amp_hh() * rot, state.amp_vv() * rot).unwrap();
            let p0 = coincidence_probability(&state, theta_s, theta_i);
            let p1 = coincidence_probability(&rotated, theta_s, theta_i);
            prop_assert!((p0 - p1).abs() < 1e-12);
        }

        #[test]
        fn prop_visibility_bounded_and_maximal_iff_balanced(
            hh in 0.05_f64..1.0,
            vv in 0.05_f64..1.0,
            overlap in 0.0_f64..1.0,
        ) {
            let state = TwoPhotonState::new(
                Complex64::new(hh, 0.0),
                Complex64::new(vv, 0.0),
            ).unwrap();
            let v = state_visibility(&state, overlap).unwrap();
            prop_assert!(v <= 1.0 + 1e-12);
            if (hh - vv).abs() > 1e-3 || overlap < 1.0 - 1e-3 {
                prop_assert!(v < 1.0);
            }
        }

        #[test]
        fn prop_diagonal_fringe_peaks_at_zero_phase(
            delta_phi in 0.05_f64..3.09,
            ratio in 0.2_f64..5.0,
        ) {
            let at_zero = diag_fringe(0.0, ratio);
            let away = diag_fringe(delta_phi, ratio);
            prop_assert!(at_zero > away);
        }
    }
}
