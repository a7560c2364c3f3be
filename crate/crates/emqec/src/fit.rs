//! Finite-size-scaling regression for threshold extraction: weighted
//! Gauss-Newton with step halving, analytic Jacobian, reduced chi-squared
//! diagnostics, Student-t confidence intervals and the cut-off percentile
//! scan.
//!
//! Model: r(p, L) = a + b (p - p_th) L^{1/kappa} + c (p - p_th)^2 L^{2/kappa}
//!                + e L^{-1/zeta}, with beta = (a, b, c, e, p_th, kappa, zeta).

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, StudentsT};
use thiserror::Error;

pub const N_PARAMS: usize = 7;

#[derive(Debug, Error)]
pub enum FitError {
    #[error("need at least 3 distances and 4 error rates; got {distances} x {rates}")]
    TooFewPoints { distances: usize, rates: usize },
    #[error("degrees of freedom must be positive (n = {n}, params = {params})")]
    NoDegreesOfFreedom { n: usize, params: usize },
    #[error("normal matrix singular (condition estimate {cond:.3e}) at iteration {iter}")]
    Singular { cond: f64, iter: usize },
    #[error("no convergence after {0} iterations; last residual norm {1:.6e}")]
    NonConvergence(usize, f64),
    #[error("simulation feeding the cut-off scan failed: {0}")]
    Simulation(String),
}

/// One Monte-Carlo logical-success observation.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct DataPoint {
    pub p: f64,
    pub d: usize,
    pub successes: u64,
    pub shots: u64,
}

impl DataPoint {
    pub fn rate(&self) -> f64 {
        self.successes as f64 / self.shots as f64
    }

    /// Binomial standard deviation; rates are clamped half a count away
    /// from the boundary so the weight stays finite.
    pub fn sigma(&self) -> f64 {
        let n = self.shots as f64;
        let r = self.rate().clamp(0.5 / n, 1.0 - 0.5 / n);
        (r * (1.0 - r) / n).sqrt()
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct FitResult {
    /// (a, b, c, e, p_th, kappa, zeta)
    pub beta: [f64; N_PARAMS],
    pub covariance: Vec<Vec<f64>>,
    pub chi2_nu: f64,
    pub p_th: f64,
    pub p_th_std: f64,
    pub ci95: (f64, f64),
    pub iterations: usize,
    pub iteration_log: Vec<f64>,
}

pub fn model(beta: &[f64; N_PARAMS], p: f64, l: f64) -> f64 {
    let [a, b, c, e, p_th, kappa, zeta] = *beta;
    let u = p - p_th;
    let lk = l.powf(1.0 / kappa);
    a + b * u * lk + c * u * u * lk * lk + e * l.powf(-1.0 / zeta)
}

/// Analytic partials of the model with respect to all seven parameters.
pub fn jacobian(beta: &[f64; N_PARAMS], points: &[DataPoint]) -> Vec<[f64; N_PARAMS]> {
    let [_, b, c, e, p_th, kappa, zeta] = *beta;
    points
        .iter()
        .map(|pt| {
            let l = pt.d as f64;
            let u = pt.p - p_th;
            let lk = l.powf(1.0 / kappa);
            let lk2 = lk * lk;
            let ln_l = l.ln();
            [
                1.0,
                u * lk,
                u * u * lk2,
                l.powf(-1.0 / zeta),
                -b * lk - 2.0 * c * u * lk2,
                -(b * u * lk * ln_l + 2.0 * c * u * u * lk2 * ln_l) / (kappa * kappa),
                e * l.powf(-1.0 / zeta) * ln_l / (zeta * zeta),
            ]
        })
        .collect()
}

/// Weighted sum of squared residuals.
pub fn q_statistic(points: &[DataPoint], beta: &[f64; N_PARAMS]) -> f64 {
    points
        .iter()
        .map(|pt| {
            let eps = pt.rate() - model(beta, pt.p, pt.d as f64);
            let s = pt.sigma();
            (eps / s) * (eps / s)
        })
        .sum()
}

/// Reduced chi-squared Q/nu with nu = n - 7.
pub fn reduced_chi2(points: &[DataPoint], beta: &[f64; N_PARAMS]) -> Result<f64, FitError> {
    if points.len() <= N_PARAMS {
        return Err(FitError::NoDegreesOfFreedom {
            n: points.len(),
            params: N_PARAMS,
        });
    }
    Ok(q_statistic(points, beta) / (points.len() - N_PARAMS) as f64)
}

/// Solve the symmetric system A x = y with Jacobi scaling (the parameters
/// span very different magnitudes) and Gaussian elimination with partial
/// pivoting; returns (solution, condition estimate of the scaled system).
fn solve(a: &[[f64; N_PARAMS]; N_PARAMS], y: &[f64; N_PARAMS]) -> Option<([f64; N_PARAMS], f64)> {
    let mut scale = [0f64; N_PARAMS];
    for i in 0..N_PARAMS {
        if a[i][i] <= 0.0 || !a[i][i].is_finite() {
            return None;
        }
        scale[i] = a[i][i].sqrt();
    }
    let mut a_s = [[0f64; N_PARAMS]; N_PARAMS];
    let mut y_s = [0f64; N_PARAMS];
    for i in 0..N_PARAMS {
        y_s[i] = y[i] / scale[i];
        for j in 0..N_PARAMS {
            a_s[i][j] = a[i][j] / (scale[i] * scale[j]);
        }
    }
    let (x_s, cond) = solve_raw(&a_s, &y_s)?;
    let mut x = [0f64; N_PARAMS];
    for i in 0..N_PARAMS {
        x[i] = x_s[i] / scale[i];
    }
    Some((x, cond))
}

fn solve_raw(
    a: &[[f64; N_PARAMS]; N_PARAMS],
    y: &[f64; N_PARAMS],
) -> Option<([f64; N_PARAMS], f64)> {
    let n = N_PARAMS;
    let mut m = *a;
    let mut rhs = *y;
    let mut max_piv = 0f64;
    let mut min_piv = f64::INFINITY;
    let mut perm: Vec<usize> = (0..n).collect();
    for col in 0..n {
        let (pivot_row, pivot) = (col..n)
            .map(|r| (r, m[r][col].abs()))
            .max_by(|x, y| x.1.partial_cmp(&y.1).unwrap())?;
        if pivot < 1e-300 {
            return None;
        }
        max_piv = max_piv.max(pivot);
        min_piv = min_piv.min(pivot);
        m.swap(col, pivot_row);
        rhs.swap(col, pivot_row);
        perm.swap(col, pivot_row);
        for r in col + 1..n {
            let f = m[r][col] / m[col][col];
            for cc in col..n {
                m[r][cc] -= f * m[col][cc];
            }
            rhs[r] -= f * rhs[col];
        }
    }
    let mut x = [0f64; N_PARAMS];
    for r in (0..n).rev() {
        let mut acc = rhs[r];
        for cc in r + 1..n {
            acc -= m[r][cc] * x[cc];
        }
        x[r] = acc / m[r][r];
    }
    Some((x, max_piv / min_piv))
}

fn invert(a: &[[f64; N_PARAMS]; N_PARAMS]) -> Option<Vec<Vec<f64>>> {
    let mut cols = Vec::with_capacity(N_PARAMS);
    for j in 0..N_PARAMS {
        let mut e = [0f64; N_PARAMS];
        e[j] = 1.0;
        let (x, _) = solve(a, &e)?;
        cols.push(x);
    }
    // cols are columns of the inverse
    Some(
        (0..N_PARAMS)
            .map(|i| (0..N_PARAMS).map(|j| cols[j][i]).collect())
            .collect(),
    )
}

fn normal_system(
    points: &[DataPoint],
    beta: &[f64; N_PARAMS],
) -> ([[f64; N_PARAMS]; N_PARAMS], [f64; N_PARAMS]) {
    let jac = jacobian(beta, points);
    let mut jtj = [[0f64; N_PARAMS]; N_PARAMS];
    let mut jte = [0f64; N_PARAMS];
    for (pt, row) in points.iter().zip(jac.iter()) {
        let s2 = pt.sigma() * pt.sigma();
        let eps = pt.rate() - model(beta, pt.p, pt.d as f64);
        for i in 0..N_PARAMS {
            jte[i] += row[i] * eps / s2;
            for j in 0..N_PARAMS {
                jtj[i][j] += row[i] * row[j] / s2;
            }
        }
    }
    (jtj, jte)
}

/// Initialization: for unit scaling exponents the model is linear in
/// (a, b, c, e), so scan p_th over the data range, solve the weighted
/// linear least squares at each candidate and keep the best. The crossing
/// of the two largest-distance curves seeds the scan center.
pub fn default_init(points: &[DataPoint]) -> [f64; N_PARAMS] {
    let p_lo = points.iter().map(|pt| pt.p).fold(f64::INFINITY, f64::min);
    let p_hi = points.iter().map(|pt| pt.p).fold(0.0f64, f64::max);
    let mut best: Option<([f64; N_PARAMS], f64)> = None;
    let n_scan = 25;
    for k in 0..=n_scan {
        let p_th = p_lo + (p_hi - p_lo) * k as f64 / n_scan as f64;
        if let Some(beta) = linear_stage(points, p_th) {
            let q = q_statistic(points, &beta);
            if best.as_ref().is_none_or(|(_, bq)| q < *bq) {
                best = Some((beta, q));
            }
        }
    }
    best.map(|(b, _)| b)
        .unwrap_or([0.8, -50.0, 0.0, 0.01, 0.5 * (p_lo + p_hi), 1.0, 1.0])
}

/// Weighted linear least squares for (a, b, c, e) at fixed p_th and unit
/// exponents.
fn linear_stage(points: &[DataPoint], p_th: f64) -> Option<[f64; N_PARAMS]> {
    let beta = [0.0, 0.0, 0.0, 0.0, p_th, 1.0, 1.0];
    refresh_linear(points, &beta)
}

/// Exact weighted least-squares values of the linear parameters (a, b, c, e)
/// at the given (p_th, kappa, zeta).
fn refresh_linear(points: &[DataPoint], beta: &[f64; N_PARAMS]) -> Option<[f64; N_PARAMS]> {
    let [_, _, _, _, p_th, kappa, zeta] = *beta;
    let mut ata = [[0f64; 4]; 4];
    let mut aty = [0f64; 4];
    for pt in points {
        let l = pt.d as f64;
        let u = pt.p - p_th;
        let lk = l.powf(1.0 / kappa);
        let row = [1.0, u * lk, u * u * lk * lk, l.powf(-1.0 / zeta)];
        let w = 1.0 / (pt.sigma() * pt.sigma());
        for i in 0..4 {
            aty[i] += row[i] * pt.rate() * w;
            for j in 0..4 {
                ata[i][j] += row[i] * row[j] * w;
            }
        }
    }
    // tiny dense solve with partial pivoting
    let mut m = ata;
    let mut rhs = aty;
    for col in 0..4 {
        let (piv, val) = (col..4)
            .map(|r| (r, m[r][col].abs()))
            .max_by(|a, b| a.1.partial_cmp(&b.1).unwrap())?;
        if val < 1e-300 {
            return None;
        }
        m.swap(col, piv);
        rhs.swap(col, piv);
        for r in col + 1..4 {
            let f = m[r][col] / m[col][col];
            for cc in col..4 {
                m[r][cc] -= f * m[col][cc];
            }
            rhs[r] -= f * rhs[col];
        }
    }
    let mut x = [0f64; 4];
    for r in (0..4).rev() {
        let mut acc = rhs[r];
        for cc in r + 1..4 {
            acc -= m[r][cc] * x[cc];
        }
        x[r] = acc / m[r][r];
    }
    Some([x[0], x[1], x[2], x[3], p_th, kappa, zeta])
}

/// Weighted Gauss-Newton with step halving. Converges when the relative
/// parameter update drops below 1e-9, up to 200 iterations.
pub fn fit_threshold(
    points: &[DataPoint],
    init: Option<[f64; N_PARAMS]>,
) -> Result<FitResult, FitError> {
    let mut distances: Vec<usize> = points.iter().map(|p| p.d).collect();
    distances.sort_unstable();
    distances.dedup();
    let mut rates: Vec<u64> = points.iter().map(|p| (p.p * 1e12) as u64).collect();
    rates.sort_unstable();
    rates.dedup();
    if distances.len() < 3 || rates.len() < 4 {
        return Err(FitError::TooFewPoints {
            distances: distances.len(),
            rates: rates.len(),
        });
    }
    if points.len() <= N_PARAMS {
        return Err(FitError::NoDegreesOfFreedom {
            n: points.len(),
            params: N_PARAMS,
        });
    }
    let mut beta = init.unwrap_or_else(|| default_init(points));
    // the model is linear in (a, b, c, e); snapping them to their exact
    // weighted least-squares values at the current exponents keeps the
    // Gauss-Newton iteration on the valley floor (variable projection)
    if let Some(snapped) = refresh_linear(points, &beta) {
        if q_statistic(points, &snapped) <= q_statistic(points, &beta) {
            beta = snapped;
        }
    }
    let mut q = q_statistic(points, &beta);
    let mut log = vec![q];
    let max_iter = 200;
    let mut iterations = 0;
    let mut stagnant = 0u32;
    let mut lambda = 0.0f64;
    for iter in 0..max_iter {
        iterations = iter + 1;
        let (jtj, jte) = normal_system(points, &beta);
        if solve(&jtj, &jte).is_none() {
            return Err(FitError::Singular {
                cond: f64::INFINITY,
                iter,
            });
        }
        // step halving keeps the bare update from diverging; steps into
        // non-physical scaling exponents are rejected outright
        let try_step = |delta: &[f64; N_PARAMS], q_ref: f64| -> Option<([f64; N_PARAMS], f64, f64)> {
            let mut scale = 1.0;
            for _ in 0..30 {
                let mut trial = beta;
                for i in 0..N_PARAMS {
                    trial[i] += scale * delta[i];
                }
                // scaling exponents far from order one make the model
                // degenerate (L-dependence vanishes and p_th decouples)
                let exponents_ok = (0.4..3.0).contains(&trial[5]) && (0.4..20.0).contains(&trial[6]);
                let q_trial = q_statistic(points, &trial);
                if exponents_ok && q_trial.is_finite() && q_trial <= q_ref + 1e-12 {
                    return Some((trial, q_trial, scale));
                }
                scale *= 0.5;
            }
            None
        };
        // adaptive diagonal damping carried across iterations: relax toward
        // the plain Gauss-Newton step while it keeps descending, stiffen
        // toward gradient descent in narrow valleys
        let mut step = None;
        let mut attempts = 0;
        while step.is_none() && attempts < 40 {
            let mut damped = jtj;
            for i in 0..N_PARAMS {
                damped[i][i] *= 1.0 + lambda;
            }
            if let Some((delta_lm, _)) = solve(&damped, &jte) {
                step = try_step(&delta_lm, q);
            }
            if step.is_none() {
                lambda = (lambda * 4.0).max(1e-8);
                if lambda > 1e10 {
                    break;
                }
            }
            attempts += 1;
        }
        if step.is_some() {
            lambda = if lambda < 1e-9 { 0.0 } else { lambda / 3.0 };
        }
        let Some((trial, q_trial, scale)) = step else {
            // no descent direction at any damping: a numerical minimum
            log.push(q);
            return finish(points, beta, q, iterations, log);
        };
        let dnorm: f64 = trial
            .iter()
            .zip(beta.iter())
            .map(|(t, b)| (t - b) * (t - b))
            .sum::<f64>()
            .sqrt();
        beta = trial;
        q = q_trial;
        if let Some(snapped) = refresh_linear(points, &beta) {
            let q_snap = q_statistic(points, &snapped);
            if q_snap.is_finite() && q_snap <= q {
                beta = snapped;
                q = q_snap;
            }
        }
        let improvement = (log.last().unwrap() - q) / log.last().unwrap().max(1e-300);
        log.push(q);
        let _ = scale;
        let bnorm: f64 = beta.iter().map(|b| b * b).sum::<f64>().sqrt().max(1e-12);
        if dnorm / bnorm < 1e-9 {
            return finish(points, beta, q, iterations, log);
        }
        // once the weighted residual stops improving materially the
        // iteration has converged for every practical purpose
        if improvement < 1e-10 {
            stagnant += 1;
            if stagnant >= 5 {
                return finish(points, beta, q, iterations, log);
            }
        } else {
            stagnant = 0;
        }
    }
    // at the iteration cap: accept a stagnant minimizer, otherwise report
    // non-convergence carrying the last iterate
    if log.len() >= 2 {
        let last_improvement = (log[log.len() - 2] - q) / q.max(1e-300);
        if last_improvement < 1e-2 {
            return finish(points, beta, q, iterations, log);
        }
    }
    Err(FitError::NonConvergence(iterations, q))
}

fn finish(
    points: &[DataPoint],
    beta: [f64; N_PARAMS],
    q: f64,
    iterations: usize,
    log: Vec<f64>,
) -> Result<FitResult, FitError> {
    let nu = points.len() - N_PARAMS;
    let chi2_nu = q / nu as f64;
    let (jtj, _) = normal_system(points, &beta);
    let mut covariance = invert(&jtj).ok_or(FitError::Singular {
        cond: f64::INFINITY,
        iter: iterations,
    })?;
    // conservative rescaling when the fit is worse than its error bars
    if chi2_nu > 1.0 {
        for row in &mut covariance {
            for v in row.iter_mut() {
                *v *= chi2_nu;
            }
        }
    }
    let p_th = beta[4];
    let p_th_std = covariance[4][4].max(0.0).sqrt();
    let t = t_factor_95(nu);
    Ok(FitResult {
        beta,
        covariance,
        chi2_nu,
        p_th,
        p_th_std,
        ci95: (p_th - t * p_th_std, p_th + t * p_th_std),
        iterations,
        iteration_log: log,
    })
}

/// Two-sided 95% Student-t factor: exact quantile for nu <= 200, the normal
/// asymptote beyond.
pub fn t_factor_95(nu: usize) -> f64 {
    if nu == 0 {
        return f64::INFINITY;
    }
    if nu > 200 {
        return 1.959964;
    }
    StudentsT::new(0.0, 1.0, nu as f64)
        .expect("valid dof")
        .inverse_cdf(0.975)
}

/// One evaluated cut-off percentile.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct CutoffPoint {
    pub x: f64,
    /// None when every tested physical rate had logical error above 0.80.
    pub p_th: Option<f64>,
    pub ci95: Option<(f64, f64)>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct CutoffScan {
    pub scan: Vec<CutoffPoint>,
    pub optimum: Option<(f64, f64)>,
}

/// Outcome of one threshold evaluation inside the cut-off scan.
pub enum CutoffEval {
    /// Logical error rate above 0.80 for every tested p: discard this x.
    NoThreshold,
    Fit(FitResult),
}

/// Scan the cut-off percentile for the best threshold: a coarse pass over
/// `x_range` followed by bisection refinement around the best point, within
/// the evaluation budget.
pub fn optimize_cutoff<F>(
    mut eval: F,
    x_range: (f64, f64),
    budget: usize,
) -> Result<CutoffScan, FitError>
where
    F: FnMut(f64) -> Result<CutoffEval, FitError>,
{
    assert!(budget >= 3, "budget of at least 3 evaluations");
    assert!(
        x_range.0 > 0.0 && x_range.1 <= 1.0 && x_range.0 <= x_range.1,
        "percentile range within (0, 1]"
    );
    let coarse = budget.min(5).max(3);
    let mut scan: Vec<CutoffPoint> = Vec::new();
    let mut evaluate = |x: f64, scan: &mut Vec<CutoffPoint>| -> Result<(), FitError> {
        if scan.iter().any(|pt| (pt.x - x).abs() < 1e-9) {
            return Ok(());
        }
        let point = match eval(x)? {
            CutoffEval::NoThreshold => CutoffPoint {
                x,
                p_th: None,
                ci95: None,
            },
            CutoffEval::Fit(fit) => CutoffPoint {
                x,
                p_th: Some(fit.p_th),
                ci95: Some(fit.ci95),
            },
        };
        scan.push(point);
        Ok(())
    };
    for k in 0..coarse {
        let x = x_range.0 + (x_range.1 - x_range.0) * k as f64 / (coarse - 1).max(1) as f64;
        evaluate(x, &mut scan)?;
    }
    let mut remaining = budget.saturating_sub(coarse);
    while remaining > 0 {
        scan.sort_by(|a, b| a.x.partial_cmp(&b.x).unwrap());
        let best_idx = match scan
            .iter()
            .enumerate()
            .filter(|(_, pt)| pt.p_th.is_some())
            .max_by(|a, b| a.1.p_th.partial_cmp(&b.1.p_th).unwrap())
        {
            Some((i, _)) => i,
            None => break,
        };
        // bisect toward the better neighbor
        let left = best_idx.checked_sub(1).map(|i| scan[i].x);
        let right = scan.get(best_idx + 1).map(|pt| pt.x);
        let x_best = scan[best_idx].x;
        let candidate = match (left, right) {
            (Some(l), Some(r)) => {
                if x_best - l > r - x_best {
                    (x_best + l) / 2.0
                } else {
                    (x_best + r) / 2.0
                }
            }
            (Some(l), None) => (x_best + l) / 2.0,
            (None, Some(r)) => (x_best + r) / 2.0,
            (None, None) => break,
        };
        if scan.iter().any(|pt| (pt.x - candidate).abs() < 1e-6) {
            break;
        }
        evaluate(candidate, &mut scan)?;
        remaining -= 1;
    }
    scan.sort_by(|a, b| a.x.partial_cmp(&b.x).unwrap());
    let optimum = scan
        .iter()
        .filter_map(|pt| pt.p_th.map(|v| (pt.x, v)))
        .max_by(|a, b| a.1.partial_cmp(&b.1).unwrap());
    Ok(CutoffScan { scan, optimum })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use rand::Rng;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    pub const BETA0: [f64; N_PARAMS] = [0.8, -50.0, -300.0, 0.1, 0.0025, 1.0, 1.0];

    fn grid() -> Vec<(f64, usize)> {
        let mut pts = Vec::new();
        for d in [4usize, 6, 8, 10, 12] {
            for k in 0..7 {
                let p = 0.0022 + k as f64 * 0.0001;
                pts.push((p, d));
            }
        }
        pts
    }

    fn synthetic_points(noise: Option<(&mut ChaCha8Rng, u64)>) -> Vec<DataPoint> {
        let mut points = Vec::new();
        let mut noise = noise;
        for (p, d) in grid() {
            let r = model(&BETA0, p, d as f64);
            assert!(r > 0.0 && r < 1.0, "grid must keep the model physical");
            let (successes, shots) = match &mut noise {
                None => ((r * 1e9).round() as u64, 1_000_000_000u64),
                Some((rng, n)) => {
                    let mut hits = 0u64;
                    for _ in 0..*n {
                        if rng.random::<f64>() < r {
                            hits += 1;
                        }
                    }
                    (hits, *n)
                }
            };
            points.push(DataPoint {
                p,
                d,
                successes,
                shots,
            });
        }
        points
    }

    #[test]
    fn recovers_exact_parameters_from_noiseless_data() {
        let points = synthetic_points(None);
        let init = [0.7, -30.0, -100.0, 0.05, 0.0022, 1.2, 0.8];
        let fit = fit_threshold(&points, Some(init)).unwrap();
        for (got, want) in fit.beta.iter().zip(BETA0.iter()) {
            assert_abs_diff_eq!(got, want, epsilon = 1e-6 * want.abs().max(1.0));
        }
        assert_abs_diff_eq!(fit.p_th, 0.0025, epsilon = 1e-8);
    }

    #[test]
    fn jacobian_matches_finite_differences() {
        let points = synthetic_points(None);
        let beta = [0.75, -44.0, -250.0, 0.08, 0.0026, 1.1, 0.9];
        let jac = jacobian(&beta, &points);
        for (k, pt) in points.iter().enumerate().take(10) {
            for j in 0..N_PARAMS {
                let h = 1e-6 * beta[j].abs().max(1e-6);
                let mut bp = beta;
                bp[j] += h;
                let mut bm = beta;
                bm[j] -= h;
                let fd =
                    (model(&bp, pt.p, pt.d as f64) - model(&bm, pt.p, pt.d as f64)) / (2.0 * h);
                let an = jac[k][j];
                // the difference quotient carries cancellation noise of
                // order eps |model| / h; keep an absolute floor in the scale
                let scale = an.abs().max(fd.abs()).max(1e-3);
                assert!(
                    ((an - fd) / scale).abs() < 1e-6,
                    "param {j}: analytic {an} vs fd {fd}"
                );
            }
        }
    }

    #[test]
    fn chi2_properties() {
        let points = synthetic_points(None);
        // perfect fit: ~0
        assert!(reduced_chi2(&points, &BETA0).unwrap() < 1e-6);
        // residuals equal to sigma each: chi2_nu = n/nu
        let shifted: Vec<DataPoint> = points
            .iter()
            .map(|pt| {
                let sigma = pt.sigma();
                let r = pt.rate() + sigma;
                DataPoint {
                    p: pt.p,
                    d: pt.d,
                    successes: (r * pt.shots as f64).round() as u64,
                    shots: pt.shots,
                }
            })
            .collect();
        let n = shifted.len() as f64;
        let nu = n - N_PARAMS as f64;
        let chi = reduced_chi2(&shifted, &BETA0).unwrap();
        assert_abs_diff_eq!(chi, n / nu, epsilon = 0.05);
    }

    #[test]
    fn too_few_points_rejected() {
        let points: Vec<DataPoint> = synthetic_points(None)
            .into_iter()
            .filter(|pt| pt.d <= 6)
            .collect();
        assert!(matches!(
            fit_threshold(&points, None),
            Err(FitError::TooFewPoints { .. })
        ));
    }

    #[test]
    fn gauss_newton_descends_on_accepted_steps() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let points = synthetic_points(Some((&mut rng, 50_000)));
        let fit = fit_threshold(&points, None).unwrap();
        for w in fit.iteration_log.windows(2) {
            assert!(w[1] <= w[0] + 1e-9, "Q must not increase: {w:?}");
        }
    }

    #[test]
    fn coverage_of_confidence_intervals() {
        let mut hits = 0;
        for rep in 0..100 {
            let mut rng = ChaCha8Rng::seed_from_u64(1000 + rep);
            let points = synthetic_points(Some((&mut rng, 50_000)));
            let fit = fit_threshold(&points, None).expect("synthetic fit");
            if fit.ci95.0 <= BETA0[4] && BETA0[4] <= fit.ci95.1 {
                hits += 1;
            }
        }
        assert!(hits >= 93, "coverage {hits}/100 below target");
    }

    #[test]
    fn ci_width_shrinks_with_statistics() {
        // replicate-averaged confidence width scales like 1/sqrt(N)
        let mean_width = |shots: u64, seed0: u64| -> f64 {
            let mut acc = 0.0;
            let reps = 12;
            for rep in 0..reps {
                let mut rng = ChaCha8Rng::seed_from_u64(seed0 + rep);
                let points = synthetic_points(Some((&mut rng, shots)));
                let fit = fit_threshold(&points, None).unwrap();
                acc += fit.ci95.1 - fit.ci95.0;
            }
            acc / reps as f64
        };
        let ws = mean_width(20_000, 400);
        let wl = mean_width(200_000, 400);
        // sqrt(10) ~ 3.16 expected shrink; allow generous slack
        assert!(wl < ws / 1.8, "mean widths {ws} vs {wl}");
    }

    #[test]
    fn t_factor_limits() {
        assert!(t_factor_95(10) > 2.2);
        assert_abs_diff_eq!(t_factor_95(500), 1.959964, epsilon = 1e-6);
    }

    #[test]
    fn cutoff_scan_monotone_profile_hits_boundary() {
        // p_th degrades monotonically with x: optimum at the lower boundary
        let eval = |x: f64| -> Result<CutoffEval, FitError> {
            let points = synthetic_points(None);
            let mut fit = fit_threshold(&points, Some(BETA0)).unwrap();
            fit.p_th = 0.003 - 0.001 * x;
            Ok(CutoffEval::Fit(fit))
        };
        let scan = optimize_cutoff(eval, (0.9, 1.0), 8).unwrap();
        let (x_star, _) = scan.optimum.unwrap();
        assert_abs_diff_eq!(x_star, 0.9, epsilon = 1e-9);
    }

    #[test]
    fn cutoff_scan_reports_no_threshold() {
        let eval = |_x: f64| -> Result<CutoffEval, FitError> { Ok(CutoffEval::NoThreshold) };
        let scan = optimize_cutoff(eval, (0.95, 0.99), 4).unwrap();
        assert!(scan.optimum.is_none());
        assert!(scan.scan.iter().all(|pt| pt.p_th.is_none()));
    }
}
