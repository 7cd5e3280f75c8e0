//! The five workflows behind the subcommands: simulate, fit, Monte-Carlo,
//! pump sweep, and range map. Plotting lives in [`crate::plot`].

use crate::config::RunConfig;
use crate::error::{CliError, CliResult};
use qwli::acquisition::{derive_seed, mc_ensemble, run_scan, run_scan_noiseless};
use qwli::estimator::{
    ensemble_stats, exclusion_fraction, fit_dataset, fit_ensemble, fit_tod, normalize, Convention,
    EnsembleStats, FitInit, FitResult, FringePoint,
};
use qwli::optics::{beta2_to_d, d_to_beta2, DispersionParameter, SpectralPoint};
use serde::{Deserialize, Serialize};
use std::fs;
use std::path::{Path, PathBuf};

/// Fit output: recovered parameters plus the normalized fringe the fit saw,
/// so a figure can overlay data and model.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FitReport {
    pub convention: Convention,
    pub fit: FitResult,
    pub fringe: Vec<FringePoint>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Histogram {
    pub bin_edges: Vec<f64>,
    pub counts: Vec<u64>,
}

/// Monte-Carlo output: ensemble statistics plus histogram data for a
/// distribution figure.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct McReport {
    pub runs: usize,
    pub stats: EnsembleStats,
    pub histogram: Histogram,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub truth_d_ps_nm_km: Option<f64>,
}

fn write_text(path: &Path, text: &str) -> CliResult<()> {
    fs::write(path, text).map_err(|e| CliError::io(format!("cannot write {}: {e}", path.display())))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> CliResult<()> {
    let json = serde_json::to_string_pretty(value)
        .map_err(|e| CliError::io(format!("cannot serialize {}: {e}", path.display())))?;
    write_text(path, &json)
}

/// `stats.json` → `stats.runs.csv` and friends.
fn sibling(path: &Path, suffix: &str) -> PathBuf {
    path.with_extension(suffix)
}

pub fn cmd_simulate(
    config_path: &Path,
    out: &Path,
    seed_override: Option<u64>,
    noiseless: bool,
) -> CliResult<()> {
    let config = RunConfig::load(config_path)?;
    let plan = config.scan_plan(seed_override)?;
    let truth = config.dispersion();
    let offset = config.phase_offset();
    let model = config.signal_model();
    let gram = if noiseless {
        run_scan_noiseless(&truth, offset, &model, &plan)?
    } else {
        run_scan(&truth, offset, &model, &plan)?
    };
    qwli::io::write_dataset(&gram, out)?;
    println!(
        "wrote {} ({} points, {} skipped) + {}",
        out.display(),
        gram.points.len(),
        gram.skipped.len(),
        qwli::io::sidecar_path(out).display()
    );
    Ok(())
}

pub fn cmd_fit(
    input: &Path,
    out: &Path,
    convention: Convention,
    length_override: Option<f64>,
) -> CliResult<()> {
    let gram = qwli::io::read_dataset(input)?;
    let fringe = normalize(&gram, convention)?;
    let fit = fit_dataset(&gram, convention, length_override, FitInit::Auto)?;
    let report = FitReport {
        convention,
        fit: fit.clone(),
        fringe: fringe.points,
    };
    write_json(out, &report)?;
    println!(
        "D = {:.6} ± {:.6} ps/(nm.km)",
        fit.d_ps_nm_km, fit.d_sigma_ps_nm_km
    );
    if !fit.converged {
        return Err(CliError::non_convergence(format!(
            "fit did not converge after {} iterations (diagnostics in {})",
            fit.n_iterations,
            out.display()
        )));
    }
    Ok(())
}

fn histogram_of(values: &[f64]) -> Histogram {
    let n = values.len();
    let bins = (n as f64).sqrt().round().max(6.0) as usize;
    let lo = values.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let pad = ((hi - lo) * 1e-9).max(f64::MIN_POSITIVE);
    let (lo, hi) = (lo - pad, hi + pad);
    let width = (hi - lo) / bins as f64;
    let mut counts = vec![0u64; bins];
    for v in values {
        let idx = (((v - lo) / width) as usize).min(bins - 1);
        counts[idx] += 1;
    }
    let bin_edges = (0..=bins).map(|i| lo + width * i as f64).collect();
    Histogram { bin_edges, counts }
}

fn runs_table_csv(fits: &[FitResult]) -> String {
    let mut out = String::from(
        "run,d_ps_nm_km,d_sigma_ps_nm_km,phi_off_rad,visibility,amplitude,chi2_reduced,converged,n_iterations\n",
    );
    for (k, f) in fits.iter().enumerate() {
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{},{}\n",
            k,
            f.d_ps_nm_km,
            f.d_sigma_ps_nm_km,
            f.phi_off_rad,
            f.visibility,
            f.amplitude,
            f.chi2_reduced,
            f.converged,
            f.n_iterations
        ));
    }
    out
}

pub fn cmd_mc(config_path: &Path, runs: usize, out: &Path) -> CliResult<()> {
    if runs < 2 {
        return Err(CliError::usage(format!("mc needs --runs ≥ 2, got {runs}")));
    }
    let config = RunConfig::load(config_path)?;
    let plan = config.scan_plan(None)?;
    let grams = mc_ensemble(
        &config.dispersion(),
        config.phase_offset(),
        &config.signal_model(),
        &plan,
        runs,
    )?;
    let fits = fit_ensemble(&grams, Convention::GeometricMean, None, FitInit::Auto)?;
    let stats = ensemble_stats(&fits)?;
    let d_values: Vec<f64> = fits
        .iter()
        .filter(|f| f.converged)
        .map(|f| f.d_ps_nm_km)
        .collect();
    let report = McReport {
        runs,
        stats: stats.clone(),
        histogram: histogram_of(&d_values),
        truth_d_ps_nm_km: Some(beta2_to_d(config.beta2_si(), config.pump()).d_ps_nm_km),
    };
    write_json(out, &report)?;
    write_text(&sibling(out, "runs.csv"), &runs_table_csv(&fits))?;
    println!(
        "D = {:.6} ± {:.6} ps/(nm.km) over {} runs (relative std {:.3e}, normality p {:.3})",
        stats.mean_d_ps_nm_km,
        stats.std_d_ps_nm_km,
        stats.n,
        stats.relative_error,
        stats.normality_pvalue
    );
    let excluded = exclusion_fraction(&fits);
    if excluded > 0.05 {
        return Err(CliError::non_convergence(format!(
            "{:.1}% of runs failed to converge (> 5%)",
            excluded * 100.0
        )));
    }
    Ok(())
}

pub fn cmd_sweep(
    config_path: &Path,
    start_m: f64,
    stop_m: f64,
    step_m: f64,
    slope_ps_nm2_km: f64,
    runs_per_point: usize,
    out: &Path,
) -> CliResult<()> {
    if step_m == 0.0 || !step_m.is_finite() {
        return Err(CliError::usage("sweep needs a nonzero --step"));
    }
    if runs_per_point == 0 {
        return Err(CliError::usage("--runs-per-point must be ≥ 1"));
    }
    let (lo, hi) = if start_m <= stop_m {
        (start_m, stop_m)
    } else {
        (stop_m, start_m)
    };
    let step = step_m.abs();
    let mut pumps = Vec::new();
    let mut lam = lo;
    while lam <= hi + 0.5 * step {
        pumps.push(lam);
        lam += step;
    }
    if pumps.len() < 3 {
        return Err(CliError::usage(format!(
            "sweep needs at least 3 pump points, got {}",
            pumps.len()
        )));
    }
    let config = RunConfig::load(config_path)?;
    let mut fits: Vec<FitResult> = Vec::new();
    for (k, &pump_m) in pumps.iter().enumerate() {
        let point_cfg = config.at_pump(pump_m, slope_ps_nm2_km)?;
        let plan = point_cfg.scan_plan(Some(derive_seed(config.seed, k as u64)))?;
        let grams = mc_ensemble(
            &point_cfg.dispersion(),
            point_cfg.phase_offset(),
            &point_cfg.signal_model(),
            &plan,
            runs_per_point,
        )?;
        fits.extend(fit_ensemble(
            &grams,
            Convention::GeometricMean,
            None,
            FitInit::Auto,
        )?);
    }
    let excluded = exclusion_fraction(&fits);
    let tod = fit_tod(&fits).map_err(|e| CliError::non_convergence(e.to_string()))?;
    write_json(out, &tod)?;
    let mut csv = String::from("lambda_p_m,d_ps_nm_km,d_sigma_ps_nm_km\n");
    for f in &tod.per_point {
        csv.push_str(&format!(
            "{},{},{}\n",
            f.pump_m, f.d_ps_nm_km, f.d_sigma_ps_nm_km
        ));
    }
    write_text(&sibling(out, "points.csv"), &csv)?;
    println!(
        "TOD = {:.4} ± {:.4} ps/(nm^2.km) over {} pump points",
        tod.slope_ps_nm2_km,
        tod.slope_sigma_ps_nm2_km,
        pumps.len()
    );
    if excluded > 0.05 {
        return Err(CliError::non_convergence(format!(
            "{:.1}% of sweep fits failed to converge (> 5%)",
            excluded * 100.0
        )));
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Zone {
    TooNarrow,
    Accessible,
    Wide,
    TooWide,
}

impl Zone {
    pub fn label(self) -> &'static str {
        match self {
            Zone::TooNarrow => "too_narrow",
            Zone::Accessible => "accessible",
            Zone::Wide => "wide",
            Zone::TooWide => "too_wide",
        }
    }
}

/// Zone thresholds: fringes narrower than a few filter widths cannot be
/// sampled; fringes wider than the source spectrum cannot be seen at all,
/// and ones wider than half of it only partially.
pub fn zone_of(fringe_width_m: f64, filter_bandwidth_m: f64, source_width_m: f64) -> Zone {
    if fringe_width_m < 4.0 * filter_bandwidth_m {
        Zone::TooNarrow
    } else if fringe_width_m > source_width_m {
        Zone::TooWide
    } else if fringe_width_m > source_width_m / 2.0 {
        Zone::Wide
    } else {
        Zone::Accessible
    }
}

fn log_spaced(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    let (llo, lhi) = (lo.ln(), hi.ln());
    (0..n)
        .map(|i| (llo + (lhi - llo) * i as f64 / (n - 1) as f64).exp())
        .collect()
}

fn linear_spaced(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    (0..n)
        .map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64)
        .collect()
}

/// CD axis: log-spaced when the range does not touch zero (decades matter),
/// linear otherwise so a zero-dispersion row is representable.
fn d_axis(dmin: f64, dmax: f64, n: usize) -> Vec<f64> {
    if dmin > 0.0 && dmax > 0.0 {
        log_spaced(dmin, dmax, n)
    } else if dmin < 0.0 && dmax < 0.0 {
        let mut v: Vec<f64> = log_spaced(-dmax, -dmin, n)
            .into_iter()
            .map(|x| -x)
            .collect();
        v.reverse();
        v
    } else {
        linear_spaced(dmin, dmax, n)
    }
}

pub const RANGEMAP_CSV_HEADER: &str = "length_m,d_ps_nm_km,fringe_width_m,zone";

#[allow(clippy::too_many_arguments)]
pub fn cmd_rangemap(
    lmin_m: f64,
    lmax_m: f64,
    dmin: f64,
    dmax: f64,
    n_lengths: usize,
    n_d: usize,
    pump_m: f64,
    filter_bandwidth_m: f64,
    source_width_m: f64,
    out: &Path,
) -> CliResult<()> {
    if !(lmin_m > 0.0 && lmax_m > lmin_m) {
        return Err(CliError::usage(
            "need 0 < --lmin < --lmax for the length range",
        ));
    }
    if !dmin.is_finite() || !dmax.is_finite() || dmax <= dmin {
        return Err(CliError::usage("need --dmin < --dmax for the CD range"));
    }
    if n_lengths < 2 || n_d < 2 {
        return Err(CliError::usage("grid needs at least 2×2 cells"));
    }
    if !(pump_m > 0.0 && filter_bandwidth_m > 0.0 && source_width_m > 0.0) {
        return Err(CliError::usage(
            "pump, filter bandwidth, and source width must be > 0",
        ));
    }
    let pump = SpectralPoint::from_wavelength(pump_m).map_err(CliError::from)?;
    let lengths = log_spaced(lmin_m, lmax_m, n_lengths);
    let d_values = d_axis(dmin, dmax, n_d);
    let mut csv = String::from(RANGEMAP_CSV_HEADER);
    csv.push('\n');
    for &length in &lengths {
        for &d in &d_values {
            let (width, zone) = if d == 0.0 {
                (f64::INFINITY, Zone::TooWide)
            } else {
                let beta2 = d_to_beta2(DispersionParameter::new(d, pump));
                let w = qwli::optics::fringe_width(pump, beta2, length)
                    .map_err(CliError::from)?
                    .delta_lambda_m;
                (w, zone_of(w, filter_bandwidth_m, source_width_m))
            };
            csv.push_str(&format!("{length},{d},{width},{}\n", zone.label()));
        }
    }
    write_text(out, &csv)?;
    println!("wrote {} ({}×{} cells)", out.display(), n_lengths, n_d);
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zones_partition_the_width_axis() {
        let bw = 500e-12;
        let src = 60e-9;
        assert_eq!(zone_of(1e-9, bw, src), Zone::TooNarrow);
        assert_eq!(zone_of(10e-9, bw, src), Zone::Accessible);
        assert_eq!(zone_of(40e-9, bw, src), Zone::Wide);
        assert_eq!(zone_of(100e-9, bw, src), Zone::TooWide);
    }

    #[test]
    fn d_axis_handles_sign_ranges() {
        let pos = d_axis(0.1, 200.0, 5);
        assert!(pos.windows(2).all(|w| w[1] > w[0]));
        assert!((pos[0] - 0.1).abs() < 1e-12 && (pos[4] - 200.0).abs() < 1e-10);
        let neg = d_axis(-200.0, -0.1, 5);
        assert!(neg.windows(2).all(|w| w[1] > w[0]));
        assert!(neg[0] < -199.0 && neg[4] > -0.11);
        let crossing = d_axis(-10.0, 10.0, 5);
        assert_eq!(crossing[2], 0.0);
    }

    #[test]
    fn histogram_counts_sum_to_n() {
        let values: Vec<f64> = (0..100).map(|i| -81.0 + 0.01 * i as f64).collect();
        let h = histogram_of(&values);
        assert_eq!(h.counts.iter().sum::<u64>(), 100);
        assert_eq!(h.bin_edges.len(), h.counts.len() + 1);
    }
}
