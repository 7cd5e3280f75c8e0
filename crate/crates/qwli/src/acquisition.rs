//! Stochastic data generation: scan the filter pair across the spectrum,
//! draw Poisson counts per dwell interval, and assemble reproducible
//! interferogram datasets and Monte-Carlo ensembles.
//!
//! # Derived-seed contract
//!
//! Count streams are keyed so that results are bit-reproducible and
//! independent of execution order:
//!
//! * ensemble run `k` uses plan seed `derive_seed(master, k)`;
//! * within a scan, point `i` channel `c` draws from a fresh
//!   `Pcg64Mcg` seeded with `derive_seed(derive_seed(plan_seed, i), c)`,
//!   with channels 0 = coincidences, 1 = signal singles, 2 = idler singles;
//! * `derive_seed(parent, component)` is one SplitMix64 finalization of
//!   `splitmix64(parent) + component`.
//!
//! This scheme is part of the external file contract: a dataset is fully
//! determined by `(seed, plan, truth, model)`.

use crate::error::{Error, Result};
use crate::optics::{detuning, PhaseOffset, SpectralPoint, TaylorDispersion};
use crate::signal::{
    fringe_rate, EnvelopeShape, FilterPair, FilterShape, NoiseSpec, PhaseMatchingEnvelope,
};
use rand::SeedableRng;
use rand_distr::{Distribution, Poisson};
use rand_pcg::Pcg64Mcg;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

fn splitmix64(x: u64) -> u64 {
    let mut z = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// One step of the documented seed-derivation chain.
pub fn derive_seed(parent: u64, component: u64) -> u64 {
    splitmix64(splitmix64(parent).wrapping_add(component))
}

fn stream_rng(plan_seed: u64, point: u64, channel: u64) -> Pcg64Mcg {
    Pcg64Mcg::seed_from_u64(derive_seed(derive_seed(plan_seed, point), channel))
}

fn poisson_count(rng: &mut Pcg64Mcg, mean: f64) -> f64 {
    if mean <= 0.0 {
        return 0.0;
    }
    let pois = Poisson::new(mean).expect("positive finite mean");
    let draw: f64 = pois.sample(rng);
    draw
}

/// How the generator evaluates the pair phase.
///
/// `Symmetric` is the fitted model (both branches at ±Δω, odd orders cancel
/// identically). `PerBranch` evaluates signal and idler at their actual
/// filter detunings, so odd-order coefficients enter each branch and cancel
/// only through energy conservation — the path used to exercise non-local
/// dispersion cancellation end to end.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PhaseTreatment {
    Symmetric { max_order: usize },
    PerBranch { max_order: usize },
}

impl Default for PhaseTreatment {
    fn default() -> Self {
        PhaseTreatment::Symmetric { max_order: 2 }
    }
}

/// Generator-side bundle of everything that shapes the expected rates
/// besides the sample itself and the scan geometry.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SignalModel {
    pub envelope_fwhm_m: f64,
    pub envelope_shape: EnvelopeShape,
    pub filter_bandwidth_m: f64,
    pub filter_shape: FilterShape,
    pub noise: NoiseSpec,
    pub visibility: f64,
    pub phase: PhaseTreatment,
}

impl SignalModel {
    pub fn validate(&self) -> Result<()> {
        if !(self.envelope_fwhm_m.is_finite() && self.envelope_fwhm_m > 0.0) {
            return Err(Error::invalid("envelope.fwhm_m", "must be > 0"));
        }
        if !(self.filter_bandwidth_m.is_finite() && self.filter_bandwidth_m > 0.0) {
            return Err(Error::invalid("filter.bandwidth_m", "must be > 0"));
        }
        if !(0.0..=1.0).contains(&self.visibility) {
            return Err(Error::invalid(
                "visibility",
                format!("must lie in [0, 1], got {}", self.visibility),
            ));
        }
        NoiseSpec::new(
            self.noise.sbrs_coincidence_fraction,
            self.noise.sbrs_singles_cps,
        )?;
        Ok(())
    }
}

impl Default for SignalModel {
    /// Defaults sized to the measured setup: tens-of-nm single-photon
    /// spectrum, 500 pm filters, sub-percent accidentals.
    fn default() -> Self {
        SignalModel {
            envelope_fwhm_m: 60e-9,
            envelope_shape: EnvelopeShape::Gaussian,
            filter_bandwidth_m: 500e-12,
            filter_shape: FilterShape::Rectangular,
            noise: NoiseSpec::default(),
            visibility: 0.95,
            phase: PhaseTreatment::default(),
        }
    }
}

/// Scan geometry, dwell, peak rates, and master seed.
#[derive(Debug, Clone, PartialEq)]
pub struct ScanPlan {
    pub pump: SpectralPoint,
    pub signal_wavelengths_m: Vec<f64>,
    pub dwell_s: f64,
    pub peak_coincidence_cps: f64,
    pub peak_singles_cps: f64,
    pub seed: u64,
}

impl ScanPlan {
    pub fn new(
        pump: SpectralPoint,
        signal_wavelengths_m: Vec<f64>,
        dwell_s: f64,
        peak_coincidence_cps: f64,
        peak_singles_cps: f64,
        seed: u64,
    ) -> Result<Self> {
        if signal_wavelengths_m.len() < 8 {
            return Err(Error::invalid(
                "scan.n_points",
                format!(
                    "need at least 8 scan points, got {}",
                    signal_wavelengths_m.len()
                ),
            ));
        }
        if signal_wavelengths_m
            .iter()
            .any(|w| !(w.is_finite() && *w > 0.0))
            || signal_wavelengths_m.windows(2).any(|w| w[1] <= w[0])
        {
            return Err(Error::invalid(
                "scan.signal_wavelengths",
                "wavelengths must be positive, finite, and strictly increasing",
            ));
        }
        if !(dwell_s.is_finite() && dwell_s > 0.0) {
            return Err(Error::invalid("scan.dwell_s", "must be > 0"));
        }
        if !(peak_coincidence_cps.is_finite() && peak_coincidence_cps > 0.0) {
            return Err(Error::invalid("scan.peak_coinc_cps", "must be > 0"));
        }
        if !(peak_singles_cps.is_finite() && peak_singles_cps > 0.0) {
            return Err(Error::invalid("scan.peak_singles_cps", "must be > 0"));
        }
        Ok(Self {
            pump,
            signal_wavelengths_m,
            dwell_s,
            peak_coincidence_cps,
            peak_singles_cps,
            seed,
        })
    }

    /// Uniform scan of `n_points` spanning `span_m` centered on the pump.
    pub fn uniform(
        pump: SpectralPoint,
        n_points: usize,
        span_m: f64,
        dwell_s: f64,
        peak_coincidence_cps: f64,
        peak_singles_cps: f64,
        seed: u64,
    ) -> Result<Self> {
        if !(span_m.is_finite() && span_m > 0.0) {
            return Err(Error::invalid("scan.span_m", "must be > 0"));
        }
        if n_points < 8 {
            return Err(Error::invalid(
                "scan.n_points",
                format!("need at least 8 scan points, got {n_points}"),
            ));
        }
        let lo = pump.wavelength_m() - span_m / 2.0;
        let step = span_m / (n_points - 1) as f64;
        let wavelengths = (0..n_points).map(|i| lo + step * i as f64).collect();
        Self::new(
            pump,
            wavelengths,
            dwell_s,
            peak_coincidence_cps,
            peak_singles_cps,
            seed,
        )
    }

    /// Setup-matched default scan: 100 points over ±20 nm around the pump,
    /// 4 s dwell, 5 kcts/s peak coincidences, 50 kcts/s peak singles.
    ///
    /// The peak rate matches the measured source; dwell and span are free
    /// choices sized so a single scan resolves CD to a few parts in 10⁴.
    pub fn default_around(pump: SpectralPoint, seed: u64) -> Self {
        Self::uniform(pump, 100, 40e-9, 4.0, 5000.0, 50_000.0, seed).expect("defaults are valid")
    }

    /// Copy with a different master seed.
    pub fn with_seed(&self, seed: u64) -> Self {
        let mut plan = self.clone();
        plan.seed = seed;
        plan
    }

    /// Copy with a different dwell time.
    pub fn with_dwell(&self, dwell_s: f64) -> Result<Self> {
        let mut plan = self.clone();
        if !(dwell_s.is_finite() && dwell_s > 0.0) {
            return Err(Error::invalid("scan.dwell_s", "must be > 0"));
        }
        plan.dwell_s = dwell_s;
        Ok(plan)
    }
}

/// Generator truth recorded alongside synthetic data.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TruthMeta {
    pub beta2_si: f64,
    pub length_m: f64,
    pub phi_off_rad: f64,
    pub visibility: f64,
}

/// One recorded spectral point. Counts are integer-valued for stochastic
/// data; the noiseless validation mode stores the expected (fractional)
/// counts instead.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScanPoint {
    pub lambda_s_m: f64,
    pub lambda_i_m: f64,
    pub coincidences: f64,
    pub singles_s: f64,
    pub singles_i: f64,
}

/// A scan point that could not be acquired, with the reason.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SkippedPoint {
    pub index: usize,
    pub lambda_s_m: f64,
    pub reason: String,
}

/// A filter-scanned record of coincidence and singles counts.
#[derive(Debug, Clone, PartialEq)]
pub struct Interferogram {
    pub points: Vec<ScanPoint>,
    pub skipped: Vec<SkippedPoint>,
    pub pump_m: f64,
    pub dwell_s: f64,
    pub seed: u64,
    pub truth: Option<TruthMeta>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Counting {
    Poisson,
    Expected,
}

fn expected_rates(
    truth: &TaylorDispersion,
    offset: PhaseOffset,
    model: &SignalModel,
    plan: &ScanPlan,
    lambda_s_m: f64,
) -> Result<(f64, f64, f64, f64)> {
    let envelope =
        PhaseMatchingEnvelope::new(plan.pump, model.envelope_fwhm_m, model.envelope_shape)?;
    let signal = SpectralPoint::from_wavelength(lambda_s_m)?;
    let filter = FilterPair::at_signal(
        signal,
        plan.pump,
        model.filter_bandwidth_m,
        model.filter_shape,
    )?;
    let idler = SpectralPoint::from_wavelength(filter.idler_center_m())?;
    let dw_s = detuning(signal, plan.pump);
    let dw_i = detuning(idler, plan.pump);
    let delta_phi = match model.phase {
        PhaseTreatment::Symmetric { max_order } => truth.symmetric_phase(dw_s, max_order),
        PhaseTreatment::PerBranch { max_order } => truth.per_branch_phase(dw_s, dw_i, max_order),
    } + offset.rad;
    let c_rate = fringe_rate(
        envelope.value(dw_s),
        delta_phi,
        model.visibility,
        plan.peak_coincidence_cps,
        model.noise.sbrs_coincidence_fraction,
    );
    let s_rate = plan.peak_singles_cps * envelope.value(dw_s) + model.noise.sbrs_singles_cps;
    let i_rate = plan.peak_singles_cps * envelope.value(dw_i) + model.noise.sbrs_singles_cps;
    Ok((c_rate, s_rate, i_rate, filter.idler_center_m()))
}

fn scan(
    truth: &TaylorDispersion,
    offset: PhaseOffset,
    model: &SignalModel,
    plan: &ScanPlan,
    counting: Counting,
) -> Result<Interferogram> {
    model.validate()?;
    let mut points = Vec::with_capacity(plan.signal_wavelengths_m.len());
    let mut skipped = Vec::new();
    for (index, &lambda_s_m) in plan.signal_wavelengths_m.iter().enumerate() {
        let rates = match expected_rates(truth, offset, model, plan, lambda_s_m) {
            Ok(r) => r,
            Err(err) => {
                skipped.push(SkippedPoint {
                    index,
                    lambda_s_m,
                    reason: err.to_string(),
                });
                continue;
            }
        };
        let (c_rate, s_rate, i_rate, lambda_i_m) = rates;
        let means = [
            c_rate * plan.dwell_s,
            s_rate * plan.dwell_s,
            i_rate * plan.dwell_s,
        ];
        let counts: Vec<f64> = match counting {
            Counting::Expected => means.to_vec(),
            Counting::Poisson => means
                .iter()
                .enumerate()
                .map(|(channel, &mean)| {
                    let mut rng = stream_rng(plan.seed, index as u64, channel as u64);
                    poisson_count(&mut rng, mean)
                })
                .collect(),
        };
        points.push(ScanPoint {
            lambda_s_m,
            lambda_i_m,
            coincidences: counts[0],
            singles_s: counts[1],
            singles_i: counts[2],
        });
    }
    Ok(Interferogram {
        points,
        skipped,
        pump_m: plan.pump.wavelength_m(),
        dwell_s: plan.dwell_s,
        seed: plan.seed,
        truth: Some(TruthMeta {
            beta2_si: truth.beta2(),
            length_m: truth.length_m(),
            phi_off_rad: offset.rad,
            visibility: model.visibility,
        }),
    })
}

/// Runs one scan, drawing Poisson counts per point and channel from the
/// derived-seed streams. Identical inputs reproduce identical outputs
/// bit-exactly; points beyond the energy-conservation pole are skipped
/// with a warning record.
pub fn run_scan(
    truth: &TaylorDispersion,
    offset: PhaseOffset,
    model: &SignalModel,
    plan: &ScanPlan,
) -> Result<Interferogram> {
    scan(truth, offset, model, plan, Counting::Poisson)
}

/// Runs one scan recording the expected counts exactly (no Poisson draw);
/// the validation path for exact-recovery checks.
pub fn run_scan_noiseless(
    truth: &TaylorDispersion,
    offset: PhaseOffset,
    model: &SignalModel,
    plan: &ScanPlan,
) -> Result<Interferogram> {
    scan(truth, offset, model, plan, Counting::Expected)
}

/// Generates `runs` independent datasets; run `k` uses the plan seed
/// `derive_seed(plan.seed, k)`. Runs execute in parallel; the result order
/// and contents depend only on the inputs.
pub fn mc_ensemble(
    truth: &TaylorDispersion,
    offset: PhaseOffset,
    model: &SignalModel,
    plan: &ScanPlan,
    runs: usize,
) -> Result<Vec<Interferogram>> {
    if runs == 0 {
        return Err(Error::invalid("runs", "need at least one run"));
    }
    (0..runs)
        .into_par_iter()
        .map(|k| {
            let run_plan = plan.with_seed(derive_seed(plan.seed, k as u64));
            run_scan(truth, offset, model, &run_plan)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    const PUMP_M: f64 = 1560.6e-9;
    const BETA2: f64 = 1.0557475890700804e-25;

    fn pump() -> SpectralPoint {
        SpectralPoint::from_wavelength(PUMP_M).unwrap()
    }

    fn truth() -> TaylorDispersion {
        TaylorDispersion::from_beta2(pump(), BETA2, 0.9).unwrap()
    }

    fn plan(seed: u64) -> ScanPlan {
        ScanPlan::uniform(pump(), 100, 24e-9, 1.0, 5000.0, 50_000.0, seed).unwrap()
    }

    #[test]
    fn same_seed_reproduces_bit_exactly() {
        let model = SignalModel::default();
        let a = run_scan(&truth(), PhaseOffset::ZERO, &model, &plan(42)).unwrap();
        let b = run_scan(&truth(), PhaseOffset::ZERO, &model, &plan(42)).unwrap();
        assert_eq!(a, b);
        let c = run_scan(&truth(), PhaseOffset::ZERO, &model, &plan(43)).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn counts_are_integers_and_nonnegative() {
        let model = SignalModel::default();
        let gram = run_scan(&truth(), PhaseOffset::ZERO, &model, &plan(7)).unwrap();
        assert_eq!(gram.points.len(), 100);
        for p in &gram.points {
            for c in [p.coincidences, p.singles_s, p.singles_i] {
                assert!(c >= 0.0 && c.fract() == 0.0, "count {c} not an integer");
            }
        }
    }

    #[test]
    fn poisson_mean_variance_ratio() {
        // 10⁴ independent draws at mean 5000 through the stream derivation.
        let mean = 5000.0;
        let n = 10_000;
        let mut sum = 0.0;
        let mut sum2 = 0.0;
        for i in 0..n {
            let mut rng = stream_rng(123, i as u64, 0);
            let x = poisson_count(&mut rng, mean);
            sum += x;
            sum2 += x * x;
        }
        let m = sum / n as f64;
        let var = sum2 / n as f64 - m * m;
        let ratio = var / m;
        assert!(
            (0.95..=1.05).contains(&ratio),
            "variance/mean ratio {ratio} outside [0.95, 1.05]"
        );
        assert!((m / mean - 1.0).abs() < 0.01, "sample mean {m}");
    }

    #[test]
    fn large_dwell_converges_to_expected_rates() {
        let model = SignalModel::default();
        let long = plan(5).with_dwell(10_000.0).unwrap();
        let noisy = run_scan(&truth(), PhaseOffset::ZERO, &model, &long).unwrap();
        let exact = run_scan_noiseless(&truth(), PhaseOffset::ZERO, &model, &long).unwrap();
        let mut outliers = 0;
        for (a, b) in noisy.points.iter().zip(&exact.points) {
            let mean = b.coincidences;
            let rel = (a.coincidences - mean).abs() / mean;
            if rel > 3.0 / mean.sqrt() {
                outliers += 1;
            }
        }
        // 3σ bound should hold for ~99.7% of the 100 points.
        assert!(outliers <= 2, "{outliers} points beyond 3σ");
    }

    #[test]
    fn ensemble_base_case_matches_run_scan() {
        let model = SignalModel::default();
        let ensemble = mc_ensemble(&truth(), PhaseOffset::ZERO, &model, &plan(9), 1).unwrap();
        let direct = run_scan(
            &truth(),
            PhaseOffset::ZERO,
            &model,
            &plan(9).with_seed(derive_seed(9, 0)),
        )
        .unwrap();
        assert_eq!(ensemble[0], direct);
    }

    #[test]
    fn ensemble_runs_are_distinct_with_shared_truth() {
        let model = SignalModel::default();
        let ensemble = mc_ensemble(&truth(), PhaseOffset::ZERO, &model, &plan(11), 100).unwrap();
        assert_eq!(ensemble.len(), 100);
        let first = &ensemble[0];
        for gram in &ensemble[1..] {
            assert_eq!(gram.truth, first.truth);
            assert_ne!(gram.points, first.points);
        }
    }

    #[test]
    fn ensemble_order_independent_of_parallelism() {
        let model = SignalModel::default();
        let parallel = mc_ensemble(&truth(), PhaseOffset::ZERO, &model, &plan(13), 16).unwrap();
        let serial: Vec<Interferogram> = (0..16)
            .map(|k| {
                run_scan(
                    &truth(),
                    PhaseOffset::ZERO,
                    &model,
                    &plan(13).with_seed(derive_seed(13, k)),
                )
                .unwrap()
            })
            .collect();
        assert_eq!(parallel, serial);
    }

    #[test]
    fn points_beyond_pole_are_skipped_with_warning() {
        // Wavelengths below λp/2 have no energy-conservation partner.
        let mut wavelengths: Vec<f64> = vec![500e-9, 600e-9];
        for i in 0..10 {
            wavelengths.push(PUMP_M + (i as f64 - 5.0) * 1e-9);
        }
        let plan = ScanPlan::new(pump(), wavelengths, 1.0, 5000.0, 50_000.0, 3).unwrap();
        let gram = run_scan(&truth(), PhaseOffset::ZERO, &SignalModel::default(), &plan).unwrap();
        assert_eq!(gram.skipped.len(), 2);
        assert_eq!(gram.points.len(), 10);
        assert_eq!(gram.skipped[0].index, 0);
        assert!(gram.skipped[0].reason.contains("pole"));
    }

    #[test]
    fn plan_validation_rejects_bad_inputs() {
        assert!(ScanPlan::uniform(pump(), 4, 24e-9, 1.0, 5e3, 5e4, 0).is_err());
        assert!(ScanPlan::uniform(pump(), 100, 24e-9, 0.0, 5e3, 5e4, 0).is_err());
        assert!(ScanPlan::uniform(pump(), 100, 24e-9, 1.0, 0.0, 5e4, 0).is_err());
        let decreasing = ScanPlan::new(pump(), vec![1e-6; 10], 1.0, 5e3, 5e4, 0);
        assert!(decreasing.is_err());
    }

    #[test]
    fn noiseless_scan_stores_expected_counts() {
        let model = SignalModel {
            noise: NoiseSpec::NONE,
            ..SignalModel::default()
        };
        let gram = run_scan_noiseless(&truth(), PhaseOffset::ZERO, &model, &plan(1)).unwrap();
        // Peak point should be near peak rate × dwell × (1+V)/2 … envelope
        // factor ≈ 1 at center points.
        let max = gram
            .points
            .iter()
            .map(|p| p.coincidences)
            .fold(0.0_f64, f64::max);
        assert!((max / (5000.0 * 0.975) - 1.0).abs() < 0.01, "max {max}");
    }
}
