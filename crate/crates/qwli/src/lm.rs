//! Weighted Levenberg-Marquardt least squares for small dense problems.
//!
//! The solver works on weighted residuals r_k = (y_k − m_k(p))/σ_k with an
//! analytic Jacobian, Marquardt diagonal damping, and normal equations
//! solved by Cholesky factorization. Problems here have a handful of
//! parameters, so no sparsity or QR machinery is needed.

use serde::{Deserialize, Serialize};

/// A weighted nonlinear least-squares problem.
#[allow(clippy::len_without_is_empty)]
pub trait LeastSquaresProblem {
    /// Number of parameters.
    fn dim(&self) -> usize;
    /// Number of residuals.
    fn len(&self) -> usize;
    /// Weighted residuals r_k = (y_k − m_k(p))/σ_k.
    fn residuals(&self, params: &[f64], out: &mut [f64]);
    /// Row-major weighted Jacobian J[k*dim + j] = ∂r_k/∂p_j.
    fn jacobian(&self, params: &[f64], out: &mut [f64]);
}

#[derive(Debug, Clone, Copy)]
pub struct LmConfig {
    pub max_iterations: usize,
    /// Scaled-gradient convergence threshold.
    pub gradient_tol: f64,
    /// Relative χ² improvement below which a successful step stops iterating.
    pub chi2_rel_tol: f64,
    /// Per-residual χ² below which the fit counts as exact: the weighted
    /// residuals sit at the floating-point rounding floor, where the
    /// gradient orthogonality test is pure noise.
    pub chi2_floor_per_point: f64,
    pub lambda_init: f64,
    pub lambda_up: f64,
    pub lambda_down: f64,
}

impl Default for LmConfig {
    fn default() -> Self {
        LmConfig {
            max_iterations: 200,
            gradient_tol: 1e-10,
            chi2_rel_tol: 1e-14,
            chi2_floor_per_point: 1e-20,
            lambda_init: 1e-3,
            lambda_up: 10.0,
            lambda_down: 0.1,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LmStop {
    GradientBelowTol,
    Chi2Stalled,
    MaxIterations,
    SingularNormalEquations,
}

#[derive(Debug, Clone)]
pub struct LmOutcome {
    pub params: Vec<f64>,
    pub chi2: f64,
    /// (JᵀJ)⁻¹ at the solution; `None` when the normal matrix is singular.
    pub covariance: Option<Vec<f64>>,
    pub n_iterations: usize,
    pub converged: bool,
    pub stop: LmStop,
    pub scaled_gradient: f64,
}

fn chi2_of(r: &[f64]) -> f64 {
    r.iter().map(|v| v * v).sum()
}

/// In-place Cholesky solve of the symmetric positive-definite system
/// `a·x = b` (`a` row-major n×n, destroyed). Returns false if `a` is not
/// positive definite.
fn cholesky_solve(a: &mut [f64], b: &mut [f64], n: usize) -> bool {
    // Factor a = L·Lᵀ, storing L in the lower triangle.
    for j in 0..n {
        let mut d = a[j * n + j];
        for k in 0..j {
            d -= a[j * n + k] * a[j * n + k];
        }
        if d <= 0.0 || !d.is_finite() {
            return false;
        }
        let l_jj = d.sqrt();
        a[j * n + j] = l_jj;
        for i in (j + 1)..n {
            let mut s = a[i * n + j];
            for k in 0..j {
                s -= a[i * n + k] * a[j * n + k];
            }
            a[i * n + j] = s / l_jj;
        }
    }
    // Forward substitution L·y = b.
    for i in 0..n {
        let mut s = b[i];
        for k in 0..i {
            s -= a[i * n + k] * b[k];
        }
        b[i] = s / a[i * n + i];
    }
    // Back substitution Lᵀ·x = y.
    for i in (0..n).rev() {
        let mut s = b[i];
        for k in (i + 1)..n {
            s -= a[k * n + i] * b[k];
        }
        b[i] = s / a[i * n + i];
    }
    true
}

/// Inverse of a symmetric positive-definite matrix via Cholesky column
/// solves; `None` if not positive definite.
fn spd_inverse(a: &[f64], n: usize) -> Option<Vec<f64>> {
    let mut inv = vec![0.0; n * n];
    for col in 0..n {
        let mut m = a.to_vec();
        let mut e = vec![0.0; n];
        e[col] = 1.0;
        if !cholesky_solve(&mut m, &mut e, n) {
            return None;
        }
        for row in 0..n {
            inv[row * n + col] = e[row];
        }
    }
    Some(inv)
}

fn normal_equations(
    problem: &impl LeastSquaresProblem,
    params: &[f64],
    jac: &mut [f64],
    r: &[f64],
) -> (Vec<f64>, Vec<f64>) {
    let n = problem.dim();
    let m = problem.len();
    problem.jacobian(params, jac);
    let mut h = vec![0.0; n * n];
    let mut g = vec![0.0; n];
    for k in 0..m {
        let row = &jac[k * n..(k + 1) * n];
        for i in 0..n {
            g[i] += row[i] * r[k];
            for j in i..n {
                h[i * n + j] += row[i] * row[j];
            }
        }
    }
    for i in 0..n {
        for j in 0..i {
            h[i * n + j] = h[j * n + i];
        }
    }
    (h, g)
}

fn scaled_gradient_norm(h: &[f64], g: &[f64], chi2: f64, n: usize) -> f64 {
    // Orthogonality measure: max_j |g_j| / (√χ²·√H_jj), dimensionless.
    let scale = chi2.max(1e-300).sqrt();
    let mut worst = 0.0_f64;
    for j in 0..n {
        let d = h[j * n + j];
        if d > 0.0 {
            worst = worst.max(g[j].abs() / (scale * d.sqrt()));
        }
    }
    worst
}

/// Minimizes Σ r_k² by damped Gauss-Newton iteration from `p0`.
pub fn minimize(problem: &impl LeastSquaresProblem, p0: &[f64], cfg: &LmConfig) -> LmOutcome {
    let n = problem.dim();
    let m = problem.len();
    assert_eq!(p0.len(), n);
    assert!(m >= n, "under-determined problem");

    let mut params = p0.to_vec();
    let mut r = vec![0.0; m];
    let mut jac = vec![0.0; m * n];
    problem.residuals(&params, &mut r);
    let mut chi2 = chi2_of(&r);
    let mut lambda = cfg.lambda_init;
    let mut stop = LmStop::MaxIterations;
    let mut converged = false;
    let mut iterations = 0;
    let mut scaled_grad = f64::INFINITY;

    while iterations < cfg.max_iterations {
        iterations += 1;
        let (h, g) = normal_equations(problem, &params, &mut jac, &r);
        scaled_grad = scaled_gradient_norm(&h, &g, chi2, n);
        if scaled_grad < cfg.gradient_tol || chi2 <= cfg.chi2_floor_per_point * m as f64 {
            converged = true;
            stop = LmStop::GradientBelowTol;
            break;
        }

        // Try damped steps until one reduces χ² or damping saturates.
        let mut stepped = false;
        for _ in 0..60 {
            let mut a = h.clone();
            for j in 0..n {
                // Floor the damping diagonal so λ still regularizes
                // directions with vanishing curvature.
                let d = h[j * n + j];
                a[j * n + j] = d + lambda * if d > 0.0 { d } else { 1.0 };
            }
            let mut step: Vec<f64> = g.iter().map(|v| -v).collect();
            if !cholesky_solve(&mut a, &mut step, n) {
                lambda *= cfg.lambda_up;
                continue;
            }
            let trial: Vec<f64> = params.iter().zip(&step).map(|(p, s)| p + s).collect();
            let mut r_trial = vec![0.0; m];
            problem.residuals(&trial, &mut r_trial);
            let chi2_trial = chi2_of(&r_trial);
            if chi2_trial.is_finite() && chi2_trial < chi2 {
                let improvement = (chi2 - chi2_trial) / chi2.max(1e-300);
                params = trial;
                r = r_trial;
                chi2 = chi2_trial;
                lambda = (lambda * cfg.lambda_down).max(1e-14);
                stepped = true;
                if improvement < cfg.chi2_rel_tol {
                    converged = true;
                    stop = LmStop::Chi2Stalled;
                }
                break;
            }
            lambda *= cfg.lambda_up;
            if lambda > 1e14 {
                break;
            }
        }
        if converged {
            break;
        }
        if !stepped {
            // No damped step improves χ². For a scaled gradient g̃ the
            // best achievable relative improvement is ≈ g̃²/2; below 1e-6
            // that is under the rounding granularity of the χ² sum itself,
            // i.e. a numerical stationary point.
            let (h2, g2) = normal_equations(problem, &params, &mut jac, &r);
            scaled_grad = scaled_gradient_norm(&h2, &g2, chi2, n);
            if scaled_grad < cfg.gradient_tol.max(1e-6)
                || chi2 <= cfg.chi2_floor_per_point * m as f64
            {
                converged = true;
                stop = LmStop::GradientBelowTol;
            } else {
                stop = LmStop::SingularNormalEquations;
            }
            break;
        }
    }

    let (h, _) = normal_equations(problem, &params, &mut jac, &r);
    let covariance = spd_inverse(&h, n);
    LmOutcome {
        params,
        chi2,
        covariance,
        n_iterations: iterations,
        converged,
        stop,
        scaled_gradient: scaled_grad,
    }
}

/// Central finite-difference Jacobian for validating analytic derivatives.
pub fn numeric_jacobian(
    problem: &impl LeastSquaresProblem,
    params: &[f64],
    rel_step: f64,
) -> Vec<f64> {
    let n = problem.dim();
    let m = problem.len();
    let mut jac = vec![0.0; m * n];
    let mut plus = vec![0.0; m];
    let mut minus = vec![0.0; m];
    for j in 0..n {
        let h = rel_step * params[j].abs().max(rel_step);
        let mut p = params.to_vec();
        p[j] = params[j] + h;
        problem.residuals(&p, &mut plus);
        p[j] = params[j] - h;
        problem.residuals(&p, &mut minus);
        for k in 0..m {
            jac[k * n + j] = (plus[k] - minus[k]) / (2.0 * h);
        }
    }
    jac
}

#[cfg(test)]
mod tests {
    use super::*;

    /// y = a·exp(−b·x) sampled exactly; LM must recover (a, b).
    struct ExpProblem {
        x: Vec<f64>,
        y: Vec<f64>,
        sigma: Vec<f64>,
    }

    impl LeastSquaresProblem for ExpProblem {
        fn dim(&self) -> usize {
            2
        }
        fn len(&self) -> usize {
            self.x.len()
        }
        fn residuals(&self, p: &[f64], out: &mut [f64]) {
            for (k, (&x, &y)) in self.x.iter().zip(&self.y).enumerate() {
                out[k] = (y - p[0] * (-p[1] * x).exp()) / self.sigma[k];
            }
        }
        fn jacobian(&self, p: &[f64], out: &mut [f64]) {
            for (k, &x) in self.x.iter().enumerate() {
                let e = (-p[1] * x).exp();
                out[k * 2] = -e / self.sigma[k];
                out[k * 2 + 1] = p[0] * x * e / self.sigma[k];
            }
        }
    }

    fn problem() -> ExpProblem {
        let x: Vec<f64> = (0..40).map(|i| i as f64 * 0.1).collect();
        let y: Vec<f64> = x.iter().map(|&x| 3.5 * (-0.8 * x).exp()).collect();
        let sigma = vec![0.01; x.len()];
        ExpProblem { x, y, sigma }
    }

    #[test]
    fn recovers_exact_parameters() {
        let out = minimize(&problem(), &[1.0, 0.3], &LmConfig::default());
        assert!(out.converged, "{out:?}");
        assert!((out.params[0] - 3.5).abs() < 1e-9, "{:?}", out.params);
        assert!((out.params[1] - 0.8).abs() < 1e-9, "{:?}", out.params);
        assert!(out.chi2 < 1e-18);
    }

    #[test]
    fn covariance_is_positive_on_well_posed_problem() {
        let out = minimize(&problem(), &[1.0, 0.3], &LmConfig::default());
        let cov = out.covariance.expect("well-posed");
        assert!(cov[0] > 0.0 && cov[3] > 0.0);
        // Symmetry of the 2×2 inverse.
        assert!((cov[1] - cov[2]).abs() < 1e-12 * cov[0].abs().max(cov[3].abs()));
    }

    #[test]
    fn analytic_jacobian_matches_central_differences() {
        let p = problem();
        let params = [2.7, 0.55];
        let mut analytic = vec![0.0; p.len() * p.dim()];
        p.jacobian(&params, &mut analytic);
        let numeric = numeric_jacobian(&p, &params, 1e-6);
        for (a, n) in analytic.iter().zip(&numeric) {
            let scale = a.abs().max(1e-9);
            assert!(((a - n) / scale).abs() < 1e-6, "analytic {a}, numeric {n}");
        }
    }

    #[test]
    fn iteration_cap_reported_as_non_converged() {
        let cfg = LmConfig {
            max_iterations: 1,
            gradient_tol: 1e-300,
            chi2_rel_tol: 1e-300,
            ..LmConfig::default()
        };
        let out = minimize(&problem(), &[50.0, 4.0], &cfg);
        assert!(!out.converged);
        assert_eq!(out.stop, LmStop::MaxIterations);
    }
}
