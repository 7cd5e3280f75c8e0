//! Small statistics toolbox: normal distribution helpers, a
//! Shapiro-Francia normality test, and weighted linear regression.

use crate::error::{Error, Result};

/// Standard normal CDF via the Abramowitz-Stegun 26.2.17 polynomial
/// (absolute error < 7.5e-8, ample for p-values).
pub fn normal_cdf(z: f64) -> f64 {
    if z < -12.0 {
        return 0.0;
    }
    if z > 12.0 {
        return 1.0;
    }
    let x = z.abs();
    let t = 1.0 / (1.0 + 0.2316419 * x);
    let poly = t
        * (0.319381530
            + t * (-0.356563782 + t * (1.781477937 + t * (-1.821255978 + t * 1.330274429))));
    let pdf = (-0.5 * x * x).exp() / (2.0 * std::f64::consts::PI).sqrt();
    let tail = pdf * poly;
    if z >= 0.0 {
        1.0 - tail
    } else {
        tail
    }
}

/// Standard normal quantile (inverse CDF), Acklam's rational approximation
/// (relative error < 1.15e-9).
pub fn normal_quantile(p: f64) -> f64 {
    assert!(p > 0.0 && p < 1.0, "quantile needs p in (0,1), got {p}");
    const A: [f64; 6] = [
        -3.969683028665376e1,
        2.209460984245205e2,
        -2.759285104469687e2,
        1.383_577_518_672_69e2,
        -3.066479806614716e1,
        2.506628277459239,
    ];
    const B: [f64; 5] = [
        -5.447609879822406e1,
        1.615858368580409e2,
        -1.556989798598866e2,
        6.680131188771972e1,
        -1.328068155288572e1,
    ];
    const C: [f64; 6] = [
        -7.784894002430293e-3,
        -3.223964580411365e-1,
        -2.400758277161838,
        -2.549732539343734,
        4.374664141464968,
        2.938163982698783,
    ];
    const D: [f64; 4] = [
        7.784695709041462e-3,
        3.224671290700398e-1,
        2.445134137142996,
        3.754408661907416,
    ];
    const P_LOW: f64 = 0.02425;

    if p < P_LOW {
        let q = (-2.0 * p.ln()).sqrt();
        (((((C[0] * q + C[1]) * q + C[2]) * q + C[3]) * q + C[4]) * q + C[5])
            / ((((D[0] * q + D[1]) * q + D[2]) * q + D[3]) * q + 1.0)
    } else if p <= 1.0 - P_LOW {
        let q = p - 0.5;
        let r = q * q;
        (((((A[0] * r + A[1]) * r + A[2]) * r + A[3]) * r + A[4]) * r + A[5]) * q
            / (((((B[0] * r + B[1]) * r + B[2]) * r + B[3]) * r + B[4]) * r + 1.0)
    } else {
        -normal_quantile(1.0 - p)
    }
}

/// Result of the Shapiro-Francia normality test.
#[derive(Debug, Clone, Copy)]
pub struct NormalityTest {
    /// W′ statistic: squared correlation between order statistics and
    /// expected normal scores.
    pub w_prime: f64,
    pub p_value: f64,
}

/// Shapiro-Francia test with Royston's normal approximation of the null
/// distribution (valid for 5 ≤ n ≤ 5000).
///
/// A degenerate sample (zero variance) returns p = 0.
pub fn shapiro_francia(sample: &[f64]) -> Result<NormalityTest> {
    let n = sample.len();
    if n < 5 {
        return Err(Error::InsufficientData(format!(
            "normality test needs ≥ 5 values, got {n}"
        )));
    }
    let mut sorted = sample.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).expect("finite sample"));
    let mean = sorted.iter().sum::<f64>() / n as f64;
    let ss: f64 = sorted.iter().map(|x| (x - mean) * (x - mean)).sum();
    if ss <= 0.0 {
        return Ok(NormalityTest {
            w_prime: f64::NAN,
            p_value: 0.0,
        });
    }
    // Blom scores m_i = Φ⁻¹((i − 3/8)/(n + 1/4)).
    let mut cross = 0.0;
    let mut m_ss = 0.0;
    for (i, x) in sorted.iter().enumerate() {
        let m = normal_quantile((i as f64 + 1.0 - 0.375) / (n as f64 + 0.25));
        cross += m * x;
        m_ss += m * m;
    }
    let w_prime = cross * cross / (m_ss * ss);
    let u = (n as f64).ln();
    let v = u.ln();
    let mu = -1.2725 + 1.0521 * (v - u);
    let sigma = 1.0308 - 0.26758 * (v + 2.0 / u);
    let z = ((1.0 - w_prime).max(1e-300).ln() - mu) / sigma;
    Ok(NormalityTest {
        w_prime,
        p_value: 1.0 - normal_cdf(z),
    })
}

/// Weighted straight-line fit y = intercept + slope·(x − x_ref), with the
/// reference at the weighted mean of x so the two estimates decorrelate.
#[derive(Debug, Clone, Copy)]
pub struct WeightedLine {
    pub slope: f64,
    pub intercept: f64,
    /// Weighted mean of x; the intercept is the fitted value here.
    pub x_ref: f64,
    pub slope_variance: f64,
    pub intercept_variance: f64,
    /// Weighted residual χ² and its degrees of freedom.
    pub chi2: f64,
    pub dof: usize,
}

/// Inverse-variance weighted linear regression.
///
/// `weight[k] = 1/σ_k²`. Errors if fewer than 2 points or if the x values
/// carry no spread (rank-deficient design).
pub fn weighted_linear_fit(x: &[f64], y: &[f64], weight: &[f64]) -> Result<WeightedLine> {
    if x.len() != y.len() || x.len() != weight.len() {
        return Err(Error::Mismatch(format!(
            "x/y/weight lengths differ: {}/{}/{}",
            x.len(),
            y.len(),
            weight.len()
        )));
    }
    if x.len() < 2 {
        return Err(Error::InsufficientData(
            "linear fit needs at least 2 points".into(),
        ));
    }
    if weight.iter().any(|w| !(w.is_finite() && *w > 0.0)) {
        return Err(Error::invalid("weight", "weights must be finite and > 0"));
    }
    let sw: f64 = weight.iter().sum();
    let x_ref = x.iter().zip(weight).map(|(x, w)| x * w).sum::<f64>() / sw;
    let mut sxx = 0.0;
    let mut sxy = 0.0;
    let mut sy = 0.0;
    for ((&x, &y), &w) in x.iter().zip(y).zip(weight) {
        let dx = x - x_ref;
        sxx += w * dx * dx;
        sxy += w * dx * y;
        sy += w * y;
    }
    let x_spread = x
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |acc, &v| {
            (acc.0.min(v), acc.1.max(v))
        });
    if sxx <= 0.0 || x_spread.1 - x_spread.0 == 0.0 {
        return Err(Error::RankDeficient(
            "all x values identical; slope is undetermined".into(),
        ));
    }
    let slope = sxy / sxx;
    let intercept = sy / sw;
    let mut chi2 = 0.0;
    for ((&x, &y), &w) in x.iter().zip(y).zip(weight) {
        let r = y - (intercept + slope * (x - x_ref));
        chi2 += w * r * r;
    }
    Ok(WeightedLine {
        slope,
        intercept,
        x_ref,
        slope_variance: 1.0 / sxx,
        intercept_variance: 1.0 / sw,
        chi2,
        dof: x.len().saturating_sub(2),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_distr::{Distribution, Normal, Uniform};
    use rand_pcg::Pcg64Mcg;

    #[test]
    fn quantile_cdf_round_trip() {
        for &p in &[1e-6, 0.01, 0.1, 0.31, 0.5, 0.77, 0.99, 1.0 - 1e-6] {
            let z = normal_quantile(p);
            assert!((normal_cdf(z) - p).abs() < 1e-6, "p={p}");
        }
        assert_eq!(normal_quantile(0.5), 0.0);
        assert!((normal_quantile(0.975) - 1.959964).abs() < 1e-5);
    }

    #[test]
    fn shapiro_francia_accepts_normal_sample() {
        let mut rng = Pcg64Mcg::seed_from_u64(17);
        let dist = Normal::new(0.0, 1.0).unwrap();
        let sample: Vec<f64> = (0..100).map(|_| dist.sample(&mut rng)).collect();
        let test = shapiro_francia(&sample).unwrap();
        assert!(test.w_prime > 0.97, "W' = {}", test.w_prime);
        assert!(test.p_value > 0.01, "p = {}", test.p_value);
    }

    #[test]
    fn shapiro_francia_rejects_heavily_skewed_sample() {
        let mut rng = Pcg64Mcg::seed_from_u64(18);
        let dist = Uniform::new(0.0, 1.0).unwrap();
        let sample: Vec<f64> = (0..200)
            .map(|_| {
                let u: f64 = dist.sample(&mut rng);
                -u.ln().powi(3)
            })
            .collect();
        let test = shapiro_francia(&sample).unwrap();
        assert!(test.p_value < 1e-3, "p = {}", test.p_value);
    }

    #[test]
    fn shapiro_francia_degenerate_sample() {
        let test = shapiro_francia(&[1.0; 50]).unwrap();
        assert_eq!(test.p_value, 0.0);
    }

    #[test]
    fn weighted_fit_reproduces_exact_line() {
        let x: Vec<f64> = (0..10).map(|i| i as f64).collect();
        let y: Vec<f64> = x.iter().map(|&x| 2.5 - 0.26 * x).collect();
        let w = vec![4.0; 10];
        let line = weighted_linear_fit(&x, &y, &w).unwrap();
        assert!((line.slope + 0.26).abs() < 1e-12);
        assert!((line.intercept - (2.5 - 0.26 * line.x_ref)).abs() < 1e-12);
        assert!(line.chi2 < 1e-20);
    }

    #[test]
    fn two_point_fit_is_finite_difference() {
        let line = weighted_linear_fit(&[1.0, 3.0], &[5.0, 9.0], &[1.0, 7.0]).unwrap();
        assert!((line.slope - 2.0).abs() < 1e-12);
        assert_eq!(line.dof, 0);
    }

    #[test]
    fn slope_variance_matches_textbook_case() {
        // Equal weights w = 1/σ²: var(slope) = σ²/Σ(x − x̄)².
        let sigma: f64 = 0.3;
        let x: Vec<f64> = (0..5).map(|i| i as f64).collect();
        let y = vec![1.0; 5];
        let w = vec![1.0 / (sigma * sigma); 5];
        let line = weighted_linear_fit(&x, &y, &w).unwrap();
        let sxx: f64 = x.iter().map(|&v| (v - 2.0) * (v - 2.0)).sum();
        assert!((line.slope_variance - sigma * sigma / sxx).abs() < 1e-12);
    }

    #[test]
    fn identical_x_is_rank_deficient() {
        let err = weighted_linear_fit(&[2.0, 2.0, 2.0], &[1.0, 2.0, 3.0], &[1.0, 1.0, 1.0]);
        assert!(matches!(err, Err(Error::RankDeficient(_))));
    }
}
