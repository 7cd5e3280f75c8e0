//! The inverse problem: normalize raw interferograms, fit the
//! quadratic-fringe model A·½[1 + V cos(β²Δω²L + φ)] by weighted
//! Levenberg-Marquardt, aggregate Monte-Carlo ensembles, and extract
//! third-order dispersion from a pump-wavelength sweep.

use crate::acquisition::Interferogram;
use crate::error::{Error, Result};
use crate::lm::{minimize, LeastSquaresProblem, LmConfig};
use crate::optics::{beta2_to_d, d_to_beta2, DispersionParameter, SpectralPoint};
use crate::stats::{shapiro_francia, weighted_linear_fit};
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

/// Which singles record divides the coincidences.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Convention {
    /// C/√(S_s·S_i) — the default.
    GeometricMean,
    /// C/S_s.
    SingleChannel,
}

/// One normalized spectral point.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FringePoint {
    pub lambda_s_m: f64,
    pub detuning_rad_s: f64,
    pub value: f64,
    pub sigma: f64,
}

/// Envelope-free fringe: normalized coincidences versus detuning, with
/// Poisson-propagated standard errors.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NormalizedFringe {
    pub points: Vec<FringePoint>,
    /// Scan points dropped because their normalization singles were zero.
    pub n_dropped: usize,
}

/// Normalizes an interferogram by the singles record, cancelling the
/// phase-matching envelope. Points whose normalization channel is zero are
/// dropped, never divided; at least 8 points must survive.
///
/// The standard error per point follows first-order Poisson propagation
/// (var C = C, var S = S): relative variance 1/C + ¼/S_s + ¼/S_i for the
/// geometric-mean convention and 1/C + 1/S_s for the single-channel one,
/// with a one-count floor on the coincidence term so empty bins keep a
/// finite, conservative error bar.
pub fn normalize(raw: &Interferogram, convention: Convention) -> Result<NormalizedFringe> {
    let pump = SpectralPoint::from_wavelength(raw.pump_m)?;
    let mut points = Vec::with_capacity(raw.points.len());
    let mut n_dropped = 0usize;
    for p in &raw.points {
        let norm = match convention {
            Convention::GeometricMean => (p.singles_s * p.singles_i).sqrt(),
            Convention::SingleChannel => p.singles_s,
        };
        if norm <= 0.0 {
            n_dropped += 1;
            continue;
        }
        let value = p.coincidences / norm;
        let c_var = p.coincidences.max(1.0);
        let singles_term = match convention {
            Convention::GeometricMean => {
                0.25 * (1.0 / p.singles_s.max(1.0) + 1.0 / p.singles_i.max(1.0))
            }
            Convention::SingleChannel => 1.0 / p.singles_s.max(1.0),
        };
        let sigma = (c_var / (norm * norm) + value * value * singles_term).sqrt();
        let signal = SpectralPoint::from_wavelength(p.lambda_s_m)?;
        points.push(FringePoint {
            lambda_s_m: p.lambda_s_m,
            detuning_rad_s: crate::optics::detuning(signal, pump),
            value,
            sigma,
        });
    }
    if points.len() < 8 {
        return Err(Error::InsufficientData(format!(
            "normalization kept {} points, need at least 8",
            points.len()
        )));
    }
    Ok(NormalizedFringe { points, n_dropped })
}

/// Diagnostics attached to a fit.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FitWarning {
    /// The initialization winner sat on the edge of the coarse D grid.
    GridBoundary,
    /// Fitted visibility outside [0, 1.05].
    VisibilityOutOfRange,
    /// Fitted visibility consistent with zero; β² is unidentifiable.
    VisibilityNearZero,
    /// Normal matrix singular at the solution; covariance diagonal set
    /// to infinity.
    CovarianceSingular,
}

/// Recovered fringe parameters with uncertainties and diagnostics.
///
/// Parameter order in `covariance`: (β² in s²/m, φ_off in rad, V, A).
/// One interferogram cannot distinguish (β², φ_off) from (−β², −φ_off);
/// the reported branch follows the sign of the initialization winner.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    pub d_ps_nm_km: f64,
    pub d_sigma_ps_nm_km: f64,
    pub beta2_si: f64,
    pub beta2_sigma_si: f64,
    /// Reported modulo 2π; the covariance lives in the unwrapped chart.
    pub phi_off_rad: f64,
    pub visibility: f64,
    pub amplitude: f64,
    pub covariance: [[f64; 4]; 4],
    pub chi2_reduced: f64,
    pub converged: bool,
    pub n_iterations: usize,
    pub pump_m: f64,
    pub sut_length_m: f64,
    pub warnings: Vec<FitWarning>,
}

/// Initialization strategy for [`fit_cd`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum FitInit {
    /// Coarse grid over D ∈ [−200, 200] ps/(nm·km) × fringe phase, then
    /// damped least squares from the best cell.
    Auto,
    Explicit {
        beta2_si: f64,
        phi_off_rad: f64,
    },
}

const D_GRID_HALF_RANGE: f64 = 200.0;

/// Weighted fringe model fed to the LM engine. Internally the curvature is
/// the dimensionless edge phase u = β²·L·Δω²_max so all four parameters
/// are O(1).
struct FringeProblem {
    /// Δω²/Δω²_max per point.
    t: Vec<f64>,
    y: Vec<f64>,
    inv_sigma: Vec<f64>,
}

impl FringeProblem {
    fn model(&self, p: &[f64], k: usize) -> f64 {
        let phase = p[0] * self.t[k] + p[1];
        0.5 * p[3] * (1.0 + p[2] * phase.cos())
    }
}

impl LeastSquaresProblem for FringeProblem {
    fn dim(&self) -> usize {
        4
    }
    fn len(&self) -> usize {
        self.t.len()
    }
    fn residuals(&self, p: &[f64], out: &mut [f64]) {
        for (k, r) in out.iter_mut().enumerate() {
            *r = (self.y[k] - self.model(p, k)) * self.inv_sigma[k];
        }
    }
    fn jacobian(&self, p: &[f64], out: &mut [f64]) {
        for k in 0..self.t.len() {
            let phase = p[0] * self.t[k] + p[1];
            let (sin, cos) = phase.sin_cos();
            let w = self.inv_sigma[k];
            // ∂r/∂p = −(1/σ)·∂m/∂p.
            out[k * 4] = 0.5 * p[3] * p[2] * sin * self.t[k] * w;
            out[k * 4 + 1] = 0.5 * p[3] * p[2] * sin * w;
            out[k * 4 + 2] = -0.5 * p[3] * cos * w;
            out[k * 4 + 3] = -0.5 * (1.0 + p[2] * cos) * w;
        }
    }
}

/// Weighted linear solve for the two linear parameters (A/2, AV/2) given a
/// trial phase curve; returns (residual χ², A, V, φ adjustment).
fn linear_subfit(problem: &FringeProblem, u: f64, phi: f64) -> (f64, f64, f64, f64) {
    let (mut s11, mut s1c, mut scc, mut b1, mut bc) = (0.0, 0.0, 0.0, 0.0, 0.0);
    for k in 0..problem.t.len() {
        let c = (u * problem.t[k] + phi).cos();
        let w = problem.inv_sigma[k] * problem.inv_sigma[k];
        s11 += w;
        s1c += w * c;
        scc += w * c * c;
        b1 += w * problem.y[k];
        bc += w * problem.y[k] * c;
    }
    let det = s11 * scc - s1c * s1c;
    let (q1, q2) = if det.abs() > 1e-12 * s11 * scc.max(1e-300) {
        ((scc * b1 - s1c * bc) / det, (s11 * bc - s1c * b1) / det)
    } else {
        (b1 / s11, 0.0)
    };
    let mut chi2 = 0.0;
    for k in 0..problem.t.len() {
        let c = (u * problem.t[k] + phi).cos();
        let r = (problem.y[k] - q1 - q2 * c) * problem.inv_sigma[k];
        chi2 += r * r;
    }
    if q1 <= 0.0 {
        return (f64::INFINITY, 0.0, 0.0, 0.0);
    }
    // Negative fringe coefficient is the same curve phase-shifted by π.
    if q2 < 0.0 {
        (chi2, 2.0 * q1, -q2 / q1, PI)
    } else {
        (chi2, 2.0 * q1, q2 / q1, 0.0)
    }
}

/// Fits the normalized fringe model and reports CD at the pump wavelength.
///
/// `Auto` initialization scans a coarse β² grid spanning
/// D ∈ [−200, 200] ps/(nm·km) crossed with fringe phases, solves the linear
/// amplitude pair per cell, and refines the lowest-residual cell by damped
/// least squares (gradient tolerance 1e-10, at most 200 iterations).
/// Non-convergence is reported through `converged = false`, not an error.
pub fn fit_cd(
    fringe: &NormalizedFringe,
    sut_length_m: f64,
    pump: SpectralPoint,
    init: FitInit,
) -> Result<FitResult> {
    if !(sut_length_m.is_finite() && sut_length_m > 0.0) {
        return Err(Error::invalid("sut_length_m", "must be finite and > 0"));
    }
    let n = fringe.points.len();
    if n < 8 {
        return Err(Error::InsufficientData(format!(
            "fit needs at least 8 points, got {n}"
        )));
    }
    let x_max = fringe
        .points
        .iter()
        .map(|p| p.detuning_rad_s * p.detuning_rad_s)
        .fold(0.0_f64, f64::max);
    if x_max <= 0.0 {
        return Err(Error::invalid(
            "fringe",
            "all points sit at zero detuning; no curvature information",
        ));
    }
    // u = β²·L·Δω²_max: β² in SI maps to the dimensionless edge phase.
    let beta2_per_u = 1.0 / (sut_length_m * x_max);
    let problem = FringeProblem {
        t: fringe
            .points
            .iter()
            .map(|p| p.detuning_rad_s * p.detuning_rad_s / x_max)
            .collect(),
        y: fringe.points.iter().map(|p| p.value).collect(),
        inv_sigma: fringe
            .points
            .iter()
            .map(|p| {
                debug_assert!(p.sigma > 0.0);
                1.0 / p.sigma
            })
            .collect(),
    };

    let mut warnings = Vec::new();
    let (u0, phi0, v0, a0) = match init {
        FitInit::Explicit {
            beta2_si,
            phi_off_rad,
        } => {
            let u = beta2_si / beta2_per_u;
            let (_, a, v, dphi) = linear_subfit(&problem, u, phi_off_rad);
            if a > 0.0 {
                (u, phi_off_rad + dphi, v.clamp(0.0, 1.5), a)
            } else {
                let mean = problem.y.iter().sum::<f64>() / n as f64;
                (u, phi_off_rad, 0.5, (2.0 * mean).max(1e-12))
            }
        }
        FitInit::Auto => {
            let u_edge =
                d_to_beta2(DispersionParameter::new(D_GRID_HALF_RANGE, pump)).abs() / beta2_per_u;
            // Grid fine enough that neighbouring cells differ by well under
            // half a fringe at the scan edge.
            let n_d = ((8.0 * u_edge / PI).ceil() as usize).clamp(241, 24_001) | 1;
            let d_step = 2.0 * D_GRID_HALF_RANGE / (n_d - 1) as f64;
            let mut best = (f64::INFINITY, 0.0, 0.0, 0.0, 0.0, 0usize);
            for i in 0..n_d {
                let d = -D_GRID_HALF_RANGE + d_step * i as f64;
                let u = d_to_beta2(DispersionParameter::new(d, pump)) / beta2_per_u;
                for phi in [0.0, PI / 2.0] {
                    let (chi2, a, v, dphi) = linear_subfit(&problem, u, phi);
                    // A mirrored candidate (−β², −φ) produces the identical
                    // model, so its grid χ² ties to rounding level; require
                    // improvement beyond that so the scan order (ascending D)
                    // resolves the branch deterministically.
                    if chi2 < best.0 * (1.0 - 1e-9) {
                        best = (chi2, u, phi + dphi, v, a, i);
                    }
                }
            }
            if !best.0.is_finite() {
                return Err(Error::InsufficientData(
                    "initialization grid found no usable candidate".into(),
                ));
            }
            if best.5 == 0 || best.5 == n_d - 1 {
                warnings.push(FitWarning::GridBoundary);
            }
            (best.1, best.2, best.3.clamp(0.0, 1.5), best.4)
        }
    };

    let outcome = minimize(&problem, &[u0, phi0, v0, a0], &LmConfig::default());
    let mut params = outcome.params.clone();
    // Canonical representation: V ≥ 0, φ in [0, 2π). The V sign flip is the
    // reparametrization (V, φ) → (−V, φ + π) and carries into the
    // covariance cross terms below.
    let flipped_v = params[2] < 0.0;
    if flipped_v {
        params[2] = -params[2];
        params[1] += PI;
    }
    let phi_wrapped = params[1].rem_euclid(2.0 * PI);

    let mut covariance = [[f64::INFINITY; 4]; 4];
    match &outcome.covariance {
        Some(cov) => {
            for i in 0..4 {
                for j in 0..4 {
                    let flip = |k: usize| if flipped_v && k == 2 { -1.0 } else { 1.0 };
                    let scale_i = if i == 0 { beta2_per_u } else { 1.0 } * flip(i);
                    let scale_j = if j == 0 { beta2_per_u } else { 1.0 } * flip(j);
                    covariance[i][j] = cov[i * 4 + j] * scale_i * scale_j;
                }
            }
        }
        None => warnings.push(FitWarning::CovarianceSingular),
    }

    let beta2 = params[0] * beta2_per_u;
    let beta2_sigma = covariance[0][0].max(0.0).sqrt();
    let d = beta2_to_d(beta2, pump);
    let d_per_beta2 = (beta2_to_d(1.0, pump).d_ps_nm_km).abs();
    let visibility = params[2];
    if !(0.0..=1.05).contains(&visibility) {
        warnings.push(FitWarning::VisibilityOutOfRange);
    }
    if visibility.abs() < 3.0 * covariance[2][2].max(0.0).sqrt().min(1.0) && visibility < 0.05 {
        warnings.push(FitWarning::VisibilityNearZero);
    }
    let dof = n.saturating_sub(4).max(1);
    Ok(FitResult {
        d_ps_nm_km: d.d_ps_nm_km,
        d_sigma_ps_nm_km: beta2_sigma * d_per_beta2,
        beta2_si: beta2,
        beta2_sigma_si: beta2_sigma,
        phi_off_rad: phi_wrapped,
        visibility,
        amplitude: params[3],
        covariance,
        chi2_reduced: outcome.chi2 / dof as f64,
        converged: outcome.converged,
        n_iterations: outcome.n_iterations,
        pump_m: pump.wavelength_m(),
        sut_length_m,
        warnings,
    })
}

/// Normalize-and-fit convenience over a dataset: pump from the metadata,
/// sample length from `length_override` or the recorded truth.
pub fn fit_dataset(
    gram: &Interferogram,
    convention: Convention,
    length_override: Option<f64>,
    init: FitInit,
) -> Result<FitResult> {
    let length = match (length_override, &gram.truth) {
        (Some(l), _) => l,
        (None, Some(t)) => t.length_m,
        (None, None) => {
            return Err(Error::invalid(
                "sut_length_m",
                "no length given and the dataset records no truth metadata",
            ))
        }
    };
    let fringe = normalize(gram, convention)?;
    fit_cd(
        &fringe,
        length,
        SpectralPoint::from_wavelength(gram.pump_m)?,
        init,
    )
}

/// Fits every dataset of an ensemble, in parallel, with results ordered by
/// run index regardless of scheduling.
pub fn fit_ensemble(
    grams: &[Interferogram],
    convention: Convention,
    length_override: Option<f64>,
    init: FitInit,
) -> Result<Vec<FitResult>> {
    use rayon::prelude::*;
    grams
        .par_iter()
        .map(|g| fit_dataset(g, convention, length_override, init))
        .collect()
}

/// Ensemble aggregate of repeated CD measurements.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnsembleStats {
    pub mean_d_ps_nm_km: f64,
    pub std_d_ps_nm_km: f64,
    /// std/|mean|.
    pub relative_error: f64,
    /// Number of converged fits included.
    pub n: usize,
    /// Non-converged fits excluded from the statistics.
    pub n_excluded: usize,
    pub normality_pvalue: f64,
}

/// Mean, sample standard deviation, relative error, and a
/// Shapiro-Francia normality p-value over the converged fits.
/// Non-converged fits are excluded and counted, never silently dropped.
pub fn ensemble_stats(fits: &[FitResult]) -> Result<EnsembleStats> {
    let values: Vec<f64> = fits
        .iter()
        .filter(|f| f.converged)
        .map(|f| f.d_ps_nm_km)
        .collect();
    let n_excluded = fits.len() - values.len();
    let n = values.len();
    if n < 2 {
        return Err(Error::InsufficientData(format!(
            "need ≥ 2 converged fits, got {n} ({n_excluded} excluded)"
        )));
    }
    // Welford's recurrence: exact zero spread for identical inputs.
    let mut mean = 0.0;
    let mut m2 = 0.0;
    for (k, v) in values.iter().enumerate() {
        let delta = v - mean;
        mean += delta / (k + 1) as f64;
        m2 += delta * (v - mean);
    }
    let std = (m2 / (n - 1) as f64).sqrt();
    let normality_pvalue = if n >= 5 {
        shapiro_francia(&values)?.p_value
    } else {
        f64::NAN
    };
    Ok(EnsembleStats {
        mean_d_ps_nm_km: mean,
        std_d_ps_nm_km: std,
        relative_error: if mean != 0.0 {
            std / mean.abs()
        } else {
            f64::INFINITY
        },
        n,
        n_excluded,
        normality_pvalue,
    })
}

/// Fraction of non-converged runs; ensembles above 5% should be rejected
/// by callers (the CLI maps this to a non-convergence exit).
pub fn exclusion_fraction(fits: &[FitResult]) -> f64 {
    if fits.is_empty() {
        return 0.0;
    }
    fits.iter().filter(|f| !f.converged).count() as f64 / fits.len() as f64
}

/// Third-order dispersion from a pump sweep.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TodResult {
    /// dD/dλ_p in ps/(nm²·km).
    pub slope_ps_nm2_km: f64,
    pub slope_sigma_ps_nm2_km: f64,
    /// D at the reference pump wavelength, ps/(nm·km).
    pub intercept_d_ps_nm_km: f64,
    pub intercept_sigma_ps_nm_km: f64,
    /// Weighted mean pump wavelength, where slope and intercept decorrelate.
    pub reference_pump_m: f64,
    pub chi2_reduced: f64,
    pub per_point: Vec<FitResult>,
}

/// Weighted linear regression of D on pump wavelength across a sweep.
/// Requires ≥ 3 converged fits; identical pump wavelengths are rejected as
/// rank deficient.
pub fn fit_tod(sweep: &[FitResult]) -> Result<TodResult> {
    let converged: Vec<&FitResult> = sweep.iter().filter(|f| f.converged).collect();
    if converged.len() < 3 {
        return Err(Error::InsufficientData(format!(
            "TOD regression needs ≥ 3 converged fits, got {}",
            converged.len()
        )));
    }
    // Regress in (nm, ps/(nm·km)) so the slope lands in ps/(nm²·km).
    let x: Vec<f64> = converged.iter().map(|f| f.pump_m * 1e9).collect();
    let y: Vec<f64> = converged.iter().map(|f| f.d_ps_nm_km).collect();
    let w: Vec<f64> = converged
        .iter()
        .map(|f| {
            let var = f.d_sigma_ps_nm_km * f.d_sigma_ps_nm_km;
            if var > 0.0 && var.is_finite() {
                1.0 / var
            } else {
                1.0
            }
        })
        .collect();
    let line = weighted_linear_fit(&x, &y, &w)?;
    Ok(TodResult {
        slope_ps_nm2_km: line.slope,
        slope_sigma_ps_nm2_km: line.slope_variance.sqrt(),
        intercept_d_ps_nm_km: line.intercept,
        intercept_sigma_ps_nm_km: line.intercept_variance.sqrt(),
        reference_pump_m: line.x_ref * 1e-9,
        chi2_reduced: if line.dof > 0 {
            line.chi2 / line.dof as f64
        } else {
            f64::NAN
        },
        per_point: sweep.to_vec(),
    })
}

/// D difference sample − reference with variances summed, for system
/// calibration or two-sample workflows. Both fits must be converged and
/// taken at the same pump wavelength (within 1 pm).
pub fn subtract_reference(sample: &FitResult, reference: &FitResult) -> Result<FitResult> {
    if !sample.converged || !reference.converged {
        return Err(Error::invalid(
            "fits",
            "both sample and reference fits must be converged",
        ));
    }
    if (sample.pump_m - reference.pump_m).abs() > 1e-12 {
        return Err(Error::Mismatch(format!(
            "pump wavelengths differ by more than 1 pm: {} vs {}",
            sample.pump_m, reference.pump_m
        )));
    }
    let mut out = sample.clone();
    out.d_ps_nm_km = sample.d_ps_nm_km - reference.d_ps_nm_km;
    out.beta2_si = sample.beta2_si - reference.beta2_si;
    let var_d = sample.d_sigma_ps_nm_km.powi(2) + reference.d_sigma_ps_nm_km.powi(2);
    let var_b = sample.beta2_sigma_si.powi(2) + reference.beta2_sigma_si.powi(2);
    out.d_sigma_ps_nm_km = var_d.sqrt();
    out.beta2_sigma_si = var_b.sqrt();
    out.covariance[0][0] = sample.covariance[0][0] + reference.covariance[0][0];
    Ok(out)
}
