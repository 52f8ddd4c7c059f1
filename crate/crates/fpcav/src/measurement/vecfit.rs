//! Pole-relocating rational approximation of S21 sweeps and the nonlinear
//! refinement of the resulting resonance parameters.

use super::{RationalModel, ResonanceParams, SweepTrace};
use crate::constants::TAU;
use crate::error::{Error, Result};
use crate::fit::{levenberg_marquardt, LeastSquares, LmOptions};
use ndarray::{Array1, Array2};
use ndarray_linalg::{Eig, LeastSquaresSvd};
use num_complex::Complex64;

#[derive(Debug, Clone)]
pub struct VectorFitOptions {
    /// Stop when the largest pole movement, measured relative to the sweep
    /// half-bandwidth, drops below this.
    pub pole_tolerance: f64,
    /// Imaginary-to-real ratio of the starting poles.
    pub initial_q: f64,
}

impl Default for VectorFitOptions {
    fn default() -> Self {
        VectorFitOptions {
            pole_tolerance: 1e-9,
            initial_q: 100.0,
        }
    }
}

/// One linear stage: given poles, solve for residues c_n, constant C and
/// the scaling-function residues c~_n of
///   sum c_n/(s - p_n) + C - H(s) sum c~_n/(s - p_n) = H(s).
/// Returns (c, C, c~).
fn linear_stage(
    s: &[Complex64],
    h: &[Complex64],
    poles: &[Complex64],
) -> Result<(Vec<Complex64>, Complex64, Vec<Complex64>)> {
    let m = s.len();
    let n = poles.len();
    let cols = 2 * n + 1;
    let mut a = Array2::<Complex64>::zeros((m, cols));
    let mut b = Array1::<Complex64>::zeros(m);
    for i in 0..m {
        for (j, p) in poles.iter().enumerate() {
            let basis = Complex64::new(1.0, 0.0) / (s[i] - p);
            a[(i, j)] = basis;
            a[(i, n + 1 + j)] = -h[i] * basis;
        }
        a[(i, n)] = Complex64::new(1.0, 0.0);
        b[i] = h[i];
    }
    let sol = a
        .least_squares(&b)
        .map_err(|e| Error::Linalg(format!("vector-fit linear stage: {e}")))?
        .solution;
    let c = sol.iter().take(n).cloned().collect();
    let constant = sol[n];
    let c_sigma = sol.iter().skip(n + 1).take(n).cloned().collect();
    Ok((c, constant, c_sigma))
}

/// New poles = eigenvalues of diag(p) - 1 c~^T (zeros of the scaling
/// function), flipped into the left half plane.
fn relocate_poles(poles: &[Complex64], c_sigma: &[Complex64]) -> Result<Vec<Complex64>> {
    let n = poles.len();
    let mut a = Array2::<Complex64>::zeros((n, n));
    for i in 0..n {
        a[(i, i)] = poles[i];
        for j in 0..n {
            a[(i, j)] -= c_sigma[j];
        }
    }
    let (vals, _) = a
        .eig()
        .map_err(|e| Error::Linalg(format!("pole relocation eigenproblem: {e}")))?;
    let mut new: Vec<Complex64> = vals.iter().cloned().collect();
    for p in new.iter_mut() {
        if p.re > 0.0 {
            *p = Complex64::new(-p.re, p.im);
        }
        if !p.re.is_finite() || !p.im.is_finite() {
            return Err(Error::Linalg("pole relocation produced a non-finite pole".into()));
        }
    }
    new.sort_by(|a, b| a.im.partial_cmp(&b.im).unwrap_or(std::cmp::Ordering::Equal));
    Ok(new)
}

/// Fit `n_poles` unpaired complex poles to the sweep (positive-frequency
/// analytic convention, suited to narrowband heterodyne data).
pub fn vector_fit(trace: &SweepTrace, n_poles: usize, n_iterations: usize) -> Result<RationalModel> {
    vector_fit_with(trace, n_poles, n_iterations, &VectorFitOptions::default())
}

pub fn vector_fit_with(
    trace: &SweepTrace,
    n_poles: usize,
    n_iterations: usize,
    opts: &VectorFitOptions,
) -> Result<RationalModel> {
    if n_poles == 0 {
        return Err(Error::Invalid("need at least one pole".into()));
    }
    if trace.points.len() < 4 * n_poles {
        return Err(Error::Invalid(format!(
            "{} sweep points cannot support {n_poles} poles (need >= {})",
            trace.points.len(),
            4 * n_poles
        )));
    }

    // scale to a centered dimensionless band for conditioning
    let w_lo = TAU * trace.points.first().unwrap().0;
    let w_hi = TAU * trace.points.last().unwrap().0;
    let w_c = 0.5 * (w_lo + w_hi);
    let scale = (0.5 * (w_hi - w_lo)).max(1e-30);
    let s: Vec<Complex64> = trace
        .points
        .iter()
        .map(|&(f, _)| Complex64::new(0.0, (TAU * f - w_c) / scale))
        .collect();
    let h: Vec<Complex64> = trace.points.iter().map(|&(_, v)| v).collect();

    // starting poles spread linearly across the band
    let mut poles: Vec<Complex64> = (0..n_poles)
        .map(|j| {
            let beta = TAU * trace.points.first().unwrap().0
                + (j as f64 + 0.5) / n_poles as f64 * (w_hi - w_lo);
            let im = (beta - w_c) / scale;
            let re = -(beta / opts.initial_q) / scale;
            Complex64::new(re, im)
        })
        .collect();

    let mut converged = false;
    for _ in 0..n_iterations.max(1) {
        let (_, _, c_sigma) = linear_stage(&s, &h, &poles)?;
        let new_poles = relocate_poles(&poles, &c_sigma)?;
        // scaled coordinates put the half-band at unit length, so the raw
        // displacement is already band-relative
        let movement = poles
            .iter()
            .zip(&new_poles)
            .map(|(a, b)| (a - b).norm())
            .fold(0.0f64, f64::max);
        poles = new_poles;
        if movement < opts.pole_tolerance {
            converged = true;
            break;
        }
    }
    if !converged {
        // a final stationary check: one more relocation must stay put
        let (_, _, c_sigma) = linear_stage(&s, &h, &poles)?;
        let again = relocate_poles(&poles, &c_sigma)?;
        let movement = poles
            .iter()
            .zip(&again)
            .map(|(a, b)| (a - b).norm())
            .fold(0.0f64, f64::max);
        if movement >= opts.pole_tolerance.max(1e-6) {
            return Err(Error::NonConvergence {
                iterations: n_iterations,
                details: format!("pole movement still {movement:.3e} after the final iteration"),
            });
        }
    }

    // final residue fit with fixed poles
    let m = s.len();
    let mut a = Array2::<Complex64>::zeros((m, n_poles + 1));
    let mut b = Array1::<Complex64>::zeros(m);
    for i in 0..m {
        for (j, p) in poles.iter().enumerate() {
            a[(i, j)] = Complex64::new(1.0, 0.0) / (s[i] - p);
        }
        a[(i, n_poles)] = Complex64::new(1.0, 0.0);
        b[i] = h[i];
    }
    let sol = a
        .least_squares(&b)
        .map_err(|e| Error::Linalg(format!("residue fit: {e}")))?
        .solution;

    // map back to absolute rad/s
    let out_poles: Vec<Complex64> = poles
        .iter()
        .map(|p| Complex64::new(p.re * scale, p.im * scale + w_c))
        .collect();
    let out_residues: Vec<Complex64> = (0..n_poles).map(|j| sol[j] * scale).collect();
    let constant = sol[n_poles];
    for p in &out_poles {
        if p.re > 0.0 {
            return Err(Error::Invalid(format!("unstable pole survived flipping: {p}")));
        }
    }

    let mut model = RationalModel {
        constant,
        poles: out_poles,
        residues: out_residues,
        analytic: true,
        rms_error: 0.0,
    };
    let sse: f64 = trace
        .points
        .iter()
        .map(|&(f, v)| (model.evaluate(f) - v).norm_sqr())
        .sum();
    model.rms_error = (sse / m as f64).sqrt();
    Ok(model)
}

struct RefineProblem {
    s: Vec<Complex64>,
    h: Vec<Complex64>,
    n: usize,
}

impl RefineProblem {
    fn model_at(&self, p: &[f64], i: usize) -> Complex64 {
        let mut v = Complex64::new(p[0], p[1]);
        for j in 0..self.n {
            let a = Complex64::new(p[2 + 4 * j], p[3 + 4 * j]);
            let pole = Complex64::new(p[4 + 4 * j], p[5 + 4 * j]);
            v += a / (self.s[i] - pole);
        }
        v
    }
}

impl LeastSquares for RefineProblem {
    fn residuals(&self, p: &[f64]) -> Option<Vec<f64>> {
        let mut r = Vec::with_capacity(2 * self.s.len());
        for i in 0..self.s.len() {
            let d = self.model_at(p, i) - self.h[i];
            if !d.re.is_finite() || !d.im.is_finite() {
                return None;
            }
            r.push(d.re);
            r.push(d.im);
        }
        Some(r)
    }
}

/// Nonlinear maximum-likelihood polish of a vector-fit model, returning the
/// dominant in-band resonance as (omega0, kappa, |a*|) with uncertainties
/// propagated from the residual covariance.
pub fn refine_resonance(model: &RationalModel, trace: &SweepTrace) -> Result<(ResonanceParams, RationalModel)> {
    let w_lo = TAU * trace.points.first().unwrap().0;
    let w_hi = TAU * trace.points.last().unwrap().0;
    let w_c = 0.5 * (w_lo + w_hi);
    let scale = (0.5 * (w_hi - w_lo)).max(1e-30);
    let n = model.poles.len();

    let problem = RefineProblem {
        s: trace
            .points
            .iter()
            .map(|&(f, _)| Complex64::new(0.0, (TAU * f - w_c) / scale))
            .collect(),
        h: trace.points.iter().map(|&(_, v)| v).collect(),
        n,
    };
    let mut init = vec![model.constant.re, model.constant.im];
    for j in 0..n {
        let a = model.residues[j] / scale;
        let p = Complex64::new(model.poles[j].re / scale, (model.poles[j].im - w_c) / scale);
        init.extend_from_slice(&[a.re, a.im, p.re, p.im]);
    }
    let opts = LmOptions {
        max_iterations: 200,
        ..LmOptions::default()
    };
    let res = levenberg_marquardt(&problem, &init, &opts)?;
    let p = &res.params;

    let mut refined = model.clone();
    refined.constant = Complex64::new(p[0], p[1]);
    for j in 0..n {
        refined.residues[j] = Complex64::new(p[2 + 4 * j], p[3 + 4 * j]) * scale;
        refined.poles[j] = Complex64::new(
            p[4 + 4 * j] * scale,
            p[5 + 4 * j] * scale + w_c,
        );
    }
    let sse: f64 = trace
        .points
        .iter()
        .map(|&(f, v)| (refined.evaluate(f) - v).norm_sqr())
        .sum();
    refined.rms_error = (sse / trace.points.len() as f64).sqrt();

    let f_lo = trace.points.first().unwrap().0;
    let f_hi = trace.points.last().unwrap().0;
    let star = refined
        .dominant_pole_in(f_lo, f_hi)
        .ok_or_else(|| Error::Invalid("model has no poles".into()))?;
    let pole = refined.poles[star];
    let residue = refined.residues[star];
    // parameter order for pole j: [2+4j, 3+4j] residue, [4+4j, 5+4j] pole
    let i_re = 4 + 4 * star;
    let i_im = 5 + 4 * star;
    let var_re = res.covariance[(i_re, i_re)].max(0.0);
    let var_im = res.covariance[(i_im, i_im)].max(0.0);
    let var_a_re = res.covariance[(2 + 4 * star, 2 + 4 * star)].max(0.0);
    let var_a_im = res.covariance[(3 + 4 * star, 3 + 4 * star)].max(0.0);
    // |a| variance by the delta method
    let na = residue.norm().max(1e-300);
    let var_na = ((residue.re / na).powi(2) * var_a_re + (residue.im / na).powi(2) * var_a_im)
        * scale
        * scale;

    Ok((
        ResonanceParams {
            omega0: pole.im,
            kappa: -2.0 * pole.re,
            sqrt_k1k2: residue.norm(),
            omega0_sigma: var_im.sqrt() * scale,
            kappa_sigma: 2.0 * var_re.sqrt() * scale,
            sqrt_k1k2_sigma: var_na.sqrt(),
        },
        refined,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    /// Synthesize a single-resonance S21 trace: a/(i w - p) + C.
    #[allow(clippy::too_many_arguments)]
    pub(crate) fn synth_trace(
        f0: f64,
        kappa: f64,
        sqrt_k1k2: f64,
        constant: Complex64,
        span_linewidths: f64,
        n: usize,
        noise: f64,
        seed: u64,
    ) -> SweepTrace {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let pole = Complex64::new(-kappa / 2.0, TAU * f0);
        let mut pts = Vec::with_capacity(n);
        for i in 0..n {
            let f = f0 + kappa / TAU * span_linewidths * ((i as f64 / (n - 1) as f64) - 0.5);
            let s = Complex64::new(0.0, TAU * f);
            let mut v = Complex64::new(sqrt_k1k2, 0.0) / (s - pole) + constant;
            if noise > 0.0 {
                v += Complex64::new(
                    noise * (rng.gen::<f64>() - 0.5) * 2.0,
                    noise * (rng.gen::<f64>() - 0.5) * 2.0,
                );
            }
            pts.push((f, v));
        }
        SweepTrace::new(pts).unwrap()
    }

    #[test]
    fn single_pole_noiseless_recovery() {
        let kappa = TAU * 1e3;
        let trace = synth_trace(
            90e9,
            kappa,
            0.2 * kappa,
            Complex64::new(1e-4, -2e-4),
            20.0,
            801,
            0.0,
            0,
        );
        let model = vector_fit(&trace, 3, 30).unwrap();
        assert!(model.rms_error < 1e-9, "rms {}", model.rms_error);
        let star = model.dominant_pole_in(89.9e9, 90.1e9).unwrap();
        let p = model.poles[star];
        assert_relative_eq!(-2.0 * p.re, kappa, max_relative = 1e-8);
        assert_relative_eq!(p.im, TAU * 90e9, max_relative = 1e-12);
        // passivity
        for p in &model.poles {
            assert!(p.re <= 0.0);
        }
    }

    #[test]
    fn refit_of_model_output_is_fixed_point() {
        let kappa = TAU * 2e3;
        let trace = synth_trace(77.5e9, kappa, 0.3 * kappa, Complex64::new(2e-4, 1e-4), 15.0, 401, 0.0, 0);
        let model = vector_fit(&trace, 2, 30).unwrap();
        // regenerate exactly from the fitted model and refit
        let regen = SweepTrace::new(
            trace
                .points
                .iter()
                .map(|&(f, _)| (f, model.evaluate(f)))
                .collect(),
        )
        .unwrap();
        let refit = vector_fit(&regen, 2, 30).unwrap();
        assert!(refit.rms_error < 1e-10, "rms {}", refit.rms_error);
    }

    #[test]
    fn noisy_recovery_within_one_percent() {
        let kappa = TAU * 1e3;
        let peak = 0.4; // d21 at resonance
        // -80 dB additive noise relative to the peak
        let noise = peak * 1e-4;
        let trace = synth_trace(
            90e9,
            kappa,
            0.2 * kappa,
            Complex64::new(1e-4, -2e-4),
            20.0,
            801,
            noise,
            42,
        );
        let model = vector_fit(&trace, 3, 60).unwrap();
        let star = model.dominant_pole_in(89.9e9, 90.1e9).unwrap();
        assert_relative_eq!(-2.0 * model.poles[star].re, kappa, max_relative = 1e-2);
    }

    #[test]
    fn refine_covariance_and_shift_equivariance() {
        let kappa = TAU * 7.214e3;
        let trace = synth_trace(70.981e9, kappa, 0.25 * kappa, Complex64::new(3e-4, -1e-4), 12.0, 501, 0.0, 7);
        let model = vector_fit(&trace, 2, 100).unwrap();
        let (params, _) = refine_resonance(&model, &trace).unwrap();
        assert_relative_eq!(params.kappa, kappa, max_relative = 3e-3);
        // noiseless: covariance collapses
        assert!(params.kappa_sigma < 1e-6 * params.kappa);
        // shifting the frequency axis shifts omega0 and leaves kappa fixed
        let shift = 50e6;
        let shifted = SweepTrace::new(
            trace.points.iter().map(|&(f, v)| (f + shift, v)).collect(),
        )
        .unwrap();
        let model_s = vector_fit(&shifted, 2, 100).unwrap();
        let (params_s, _) = refine_resonance(&model_s, &shifted).unwrap();
        assert_relative_eq!(params_s.kappa, params.kappa, max_relative = 1e-6);
        assert_relative_eq!(
            params_s.omega0 - params.omega0,
            TAU * shift,
            max_relative = 1e-6
        );
    }

    #[test]
    fn end_to_end_coupling_with_insertion_loss() {
        // kappa0 and symmetric probes, 20 dB line loss
        let kappa0 = TAU * 500.0;
        let k12 = TAU * 250.0;
        let kappa = kappa0 + 2.0 * k12;
        let il_db = 20.0;
        let amp = 10f64.powf(-il_db / 20.0);
        let trace = synth_trace(
            90e9,
            kappa,
            amp * k12, // measured residue is attenuated
            Complex64::new(1e-5, 2e-5),
            18.0,
            641,
            0.0,
            3,
        );
        let model = vector_fit(&trace, 2, 30).unwrap();
        let (params, refined) = refine_resonance(&model, &trace).unwrap();
        let star = refined.dominant_pole_in(89.9e9, 90.1e9).unwrap();
        let sqrt_k1k2 =
            super::super::extract_probe_coupling(&params, refined.residues[star], il_db).unwrap();
        assert_relative_eq!(sqrt_k1k2, k12, max_relative = 1e-2);
    }

    #[test]
    fn rejects_undersampled_traces() {
        let trace = synth_trace(90e9, TAU * 1e3, 100.0, Complex64::new(0.0, 0.0), 10.0, 8, 0.0, 0);
        assert!(vector_fit(&trace, 3, 10).is_err());
        assert!(vector_fit(&trace, 0, 10).is_err());
    }
}
