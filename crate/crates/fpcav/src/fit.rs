//! Small dense nonlinear least-squares machinery shared by the fitting
//! operations: a damped Gauss-Newton (Levenberg-Marquardt schedule) driver,
//! a Nelder-Mead simplex for low-dimensional nuisance searches, and a
//! golden-section line minimizer.

use crate::error::{Error, Result};
use ndarray::{Array1, Array2};
use ndarray_linalg::Solve;

/// A weighted least-squares problem over real parameters.
///
/// `residuals` returns r_i(theta) already scaled by 1/sigma_i; the optimum
/// minimizes sum r_i^2. `jacobian` returns dr_i/dtheta_j, or `None` to fall
/// back to central differences.
pub trait LeastSquares {
    fn residuals(&self, params: &[f64]) -> Option<Vec<f64>>;
    fn jacobian(&self, _params: &[f64]) -> Option<Array2<f64>> {
        None
    }
}

#[derive(Debug, Clone)]
pub struct LmOptions {
    pub max_iterations: usize,
    /// Stop when the largest relative parameter step falls below this.
    pub step_tolerance: f64,
    /// Initial damping factor.
    pub lambda0: f64,
}

impl Default for LmOptions {
    fn default() -> Self {
        LmOptions {
            max_iterations: 100,
            step_tolerance: 1e-10,
            lambda0: 1e-3,
        }
    }
}

#[derive(Debug, Clone)]
pub struct LmResult {
    pub params: Vec<f64>,
    /// Sum of squared (scaled) residuals at the optimum.
    pub cost: f64,
    /// Covariance of the parameters, sigma^2 (J^T J)^-1 with
    /// sigma^2 = cost / (n_res - n_par); zero matrix for an exact fit.
    pub covariance: Array2<f64>,
    pub iterations: usize,
    pub converged: bool,
}

fn numeric_jacobian<P: LeastSquares + ?Sized>(p: &P, params: &[f64], r0_len: usize) -> Option<Array2<f64>> {
    let n = params.len();
    let mut jac = Array2::zeros((r0_len, n));
    let mut work = params.to_vec();
    for j in 0..n {
        let h = (1e-7 * params[j].abs()).max(1e-7);
        work[j] = params[j] + h;
        let rp = p.residuals(&work)?;
        work[j] = params[j] - h;
        let rm = p.residuals(&work)?;
        work[j] = params[j];
        for i in 0..r0_len {
            jac[(i, j)] = (rp[i] - rm[i]) / (2.0 * h);
        }
    }
    Some(jac)
}

/// Damped Gauss-Newton iteration. Returns `Err(NonConvergence)` carrying the
/// best iterate description when the step budget is exhausted while steps
/// are still large.
pub fn levenberg_marquardt<P: LeastSquares + ?Sized>(
    problem: &P,
    initial: &[f64],
    opts: &LmOptions,
) -> Result<LmResult> {
    let mut params = initial.to_vec();
    let n = params.len();
    let mut r = problem
        .residuals(&params)
        .ok_or_else(|| Error::Invalid("residuals undefined at the initial guess".into()))?;
    let m = r.len();
    if m < n {
        return Err(Error::Invalid(format!("{m} residuals cannot determine {n} parameters")));
    }
    let mut cost: f64 = r.iter().map(|x| x * x).sum();
    let mut lambda = opts.lambda0;
    let mut converged = false;
    let mut iterations = 0;
    let mut stagnant = 0usize;
    let mut jac = match problem.jacobian(&params) {
        Some(j) => j,
        None => numeric_jacobian(problem, &params, m)
            .ok_or_else(|| Error::Invalid("residuals undefined near the initial guess".into()))?,
    };

    for it in 0..opts.max_iterations {
        iterations = it + 1;
        let jt = jac.t();
        let jtj = jt.dot(&jac);
        let rvec = Array1::from_vec(r.clone());
        let jtr = jt.dot(&rvec).mapv(|x| -x);
        // scaled damping with a floor so degenerate columns stay solvable
        let mut step = None;
        for _ in 0..30 {
            let mut a = jtj.clone();
            for i in 0..n {
                let d = jtj[(i, i)];
                a[(i, i)] += lambda * if d > 0.0 { d } else { 1.0 } + 1e-300;
            }
            match a.solve(&jtr) {
                Ok(s) => {
                    let mut trial = params.clone();
                    for i in 0..n {
                        trial[i] += s[i];
                    }
                    if let Some(rt) = problem.residuals(&trial) {
                        let ct: f64 = rt.iter().map(|x| x * x).sum();
                        if ct.is_finite() && ct <= cost {
                            step = Some((trial, rt, ct, s));
                            break;
                        }
                    }
                    lambda *= 10.0;
                    if lambda > 1e14 {
                        break;
                    }
                }
                Err(_) => {
                    lambda *= 10.0;
                    if lambda > 1e14 {
                        break;
                    }
                }
            }
        }
        let Some((trial, rt, ct, s)) = step else {
            // no downhill step exists at any damping: treat as converged
            converged = true;
            break;
        };
        // parameter scale floor keeps irrelevant near-zero parameters from
        // blocking convergence
        let pscale = trial.iter().map(|p| p.abs()).fold(0.0f64, f64::max).max(1e-12);
        let max_rel_step = s
            .iter()
            .zip(&trial)
            .map(|(ds, p)| ds.abs() / p.abs().max(1e-6 * pscale))
            .fold(0.0f64, f64::max);
        let improvement = cost - ct;
        params = trial;
        r = rt;
        cost = ct;
        lambda = (lambda / 3.0).max(1e-14);
        if max_rel_step < opts.step_tolerance {
            converged = true;
            break;
        }
        if improvement <= 1e-10 * cost.max(1e-300) {
            stagnant += 1;
            if stagnant >= 3 {
                converged = true;
                break;
            }
        } else {
            stagnant = 0;
        }
        jac = match problem.jacobian(&params) {
            Some(j) => j,
            None => numeric_jacobian(problem, &params, m)
                .ok_or_else(|| Error::Invalid("residuals undefined near the iterate".into()))?,
        };
    }

    let dof = (m as f64 - n as f64).max(1.0);
    let sigma2 = cost / dof;
    let jt = jac.t();
    let jtj = jt.dot(&jac);
    let covariance = invert_spd(&jtj).map(|inv| inv * sigma2).unwrap_or_else(|| Array2::zeros((n, n)));

    let result = LmResult {
        params,
        cost,
        covariance,
        iterations,
        converged,
    };
    if !result.converged {
        return Err(Error::NonConvergence {
            iterations,
            details: format!("best cost {:.6e} at {:?}", result.cost, result.params),
        });
    }
    Ok(result)
}

/// Inverse of a symmetric positive (semi)definite matrix by column solves;
/// None when singular.
fn invert_spd(a: &Array2<f64>) -> Option<Array2<f64>> {
    let n = a.nrows();
    let mut inv = Array2::zeros((n, n));
    for j in 0..n {
        let mut e = Array1::zeros(n);
        e[j] = 1.0;
        let col = a.solve(&e).ok()?;
        for i in 0..n {
            inv[(i, j)] = col[i];
        }
    }
    Some(inv)
}

/// Check a Jacobian for an unidentifiable parameter: returns the index of
/// the parameter dominating the null direction when the smallest singular
/// value is below `tol` times the largest.
pub fn rank_deficient_parameter(jac: &Array2<f64>, tol: f64) -> Option<usize> {
    use ndarray_linalg::SVD;
    let (_, s, vt) = jac.svd(false, true).ok()?;
    let vt = vt?;
    let smax = s.iter().cloned().fold(0.0f64, f64::max);
    let (imin, smin) = s
        .iter()
        .enumerate()
        .min_by(|a, b| a.1.partial_cmp(b.1).unwrap())?;
    if *smin <= tol * smax.max(1e-300) {
        let null_row = vt.row(imin);
        let j = null_row
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.abs().partial_cmp(&b.1.abs()).unwrap())?
            .0;
        Some(j)
    } else {
        None
    }
}

/// Nelder-Mead simplex minimizer for a handful of parameters.
pub fn nelder_mead<F: FnMut(&[f64]) -> f64>(
    mut f: F,
    x0: &[f64],
    scale: &[f64],
    max_iter: usize,
    xtol: f64,
) -> Vec<f64> {
    let n = x0.len();
    let mut simplex: Vec<Vec<f64>> = vec![x0.to_vec()];
    for i in 0..n {
        let mut v = x0.to_vec();
        v[i] += scale[i];
        simplex.push(v);
    }
    let mut fv: Vec<f64> = simplex.iter().map(|v| f(v)).collect();

    for _ in 0..max_iter {
        let mut idx: Vec<usize> = (0..=n).collect();
        idx.sort_by(|&a, &b| fv[a].partial_cmp(&fv[b]).unwrap_or(std::cmp::Ordering::Equal));
        let ordered: Vec<Vec<f64>> = idx.iter().map(|&i| simplex[i].clone()).collect();
        let fo: Vec<f64> = idx.iter().map(|&i| fv[i]).collect();
        simplex = ordered;
        fv = fo;

        let spread = (0..n)
            .map(|d| {
                simplex
                    .iter()
                    .map(|v| v[d])
                    .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), x| (lo.min(x), hi.max(x)))
            })
            .map(|(lo, hi)| hi - lo)
            .fold(0.0f64, f64::max);
        if spread < xtol {
            break;
        }

        let centroid: Vec<f64> = (0..n)
            .map(|d| simplex[..n].iter().map(|v| v[d]).sum::<f64>() / n as f64)
            .collect();
        let xr: Vec<f64> = (0..n).map(|d| centroid[d] + (centroid[d] - simplex[n][d])).collect();
        let fr = f(&xr);
        if fr < fv[0] {
            let xe: Vec<f64> = (0..n).map(|d| centroid[d] + 2.0 * (centroid[d] - simplex[n][d])).collect();
            let fe = f(&xe);
            if fe < fr {
                simplex[n] = xe;
                fv[n] = fe;
            } else {
                simplex[n] = xr;
                fv[n] = fr;
            }
        } else if fr < fv[n - 1] {
            simplex[n] = xr;
            fv[n] = fr;
        } else {
            let xc: Vec<f64> = (0..n).map(|d| centroid[d] + 0.5 * (simplex[n][d] - centroid[d])).collect();
            let fc = f(&xc);
            if fc < fv[n] {
                simplex[n] = xc;
                fv[n] = fc;
            } else {
                let best = simplex[0].clone();
                for v in simplex.iter_mut().skip(1) {
                    for d in 0..n {
                        v[d] = best[d] + 0.5 * (v[d] - best[d]);
                    }
                }
                for (i, v) in simplex.iter().enumerate().skip(1) {
                    fv[i] = f(v);
                }
            }
        }
    }
    let mut best = 0;
    for i in 1..=n {
        if fv[i] < fv[best] {
            best = i;
        }
    }
    simplex[best].clone()
}

/// Golden-section minimizer of a unimodal function on [a, b].
pub fn golden_section<F: FnMut(f64) -> f64>(mut f: F, mut a: f64, mut b: f64, tol: f64) -> f64 {
    let inv_phi = (5.0f64.sqrt() - 1.0) / 2.0;
    let mut c = b - inv_phi * (b - a);
    let mut d = a + inv_phi * (b - a);
    let mut fc = f(c);
    let mut fd = f(d);
    while (b - a).abs() > tol {
        if fc < fd {
            b = d;
            d = c;
            fd = fc;
            c = b - inv_phi * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + inv_phi * (b - a);
            fd = f(d);
        }
    }
    0.5 * (a + b)
}

/// Ordinary linear least squares min ||A x - b|| by normal equations with
/// Tikhonov floor; adequate for the small well-scaled systems used here.
pub fn linear_lstsq(a: &Array2<f64>, b: &Array1<f64>) -> Result<Array1<f64>> {
    let at = a.t();
    let mut ata = at.dot(a);
    let atb = at.dot(b);
    let n = ata.nrows();
    let scale = (0..n).map(|i| ata[(i, i)]).fold(0.0f64, f64::max);
    for i in 0..n {
        ata[(i, i)] += 1e-14 * scale.max(1e-300);
    }
    ata.solve(&atb).map_err(Into::into)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    struct Expo {
        t: Vec<f64>,
        y: Vec<f64>,
    }
    impl LeastSquares for Expo {
        fn residuals(&self, p: &[f64]) -> Option<Vec<f64>> {
            Some(
                self.t
                    .iter()
                    .zip(&self.y)
                    .map(|(&t, &y)| p[0] * (-p[1] * t).exp() - y)
                    .collect(),
            )
        }
    }

    #[test]
    fn lm_recovers_exponential() {
        let t: Vec<f64> = (0..50).map(|i| i as f64 * 0.1).collect();
        let y: Vec<f64> = t.iter().map(|&t| 3.0 * (-0.7f64 * t).exp()).collect();
        let prob = Expo { t, y };
        let res = levenberg_marquardt(&prob, &[1.0, 0.2], &LmOptions::default()).unwrap();
        assert_relative_eq!(res.params[0], 3.0, max_relative = 1e-8);
        assert_relative_eq!(res.params[1], 0.7, max_relative = 1e-8);
        assert!(res.cost < 1e-16);
    }

    #[test]
    fn rank_deficiency_detected() {
        // column 1 is identically zero
        let mut j = Array2::zeros((10, 2));
        for i in 0..10 {
            j[(i, 0)] = 1.0 + i as f64;
        }
        assert_eq!(rank_deficient_parameter(&j, 1e-10), Some(1));
        // full rank
        for i in 0..10 {
            j[(i, 1)] = (i as f64).sin() + 2.0;
        }
        assert_eq!(rank_deficient_parameter(&j, 1e-10), None);
    }

    #[test]
    fn golden_section_minimum() {
        let x = golden_section(|x| (x - 1.3).powi(2), -4.0, 5.0, 1e-12);
        assert_relative_eq!(x, 1.3, max_relative = 1e-9);
    }

    #[test]
    fn nelder_mead_rosenbrock() {
        let x = nelder_mead(
            |p| (1.0 - p[0]).powi(2) + 100.0 * (p[1] - p[0] * p[0]).powi(2),
            &[-1.2, 1.0],
            &[0.5, 0.5],
            4000,
            1e-12,
        );
        assert_relative_eq!(x[0], 1.0, max_relative = 1e-5);
        assert_relative_eq!(x[1], 1.0, max_relative = 1e-5);
    }
}
