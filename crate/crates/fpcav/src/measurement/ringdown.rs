//! Ringdown ensemble analysis: incoherent power averaging with a joint
//! offset optimization, and instantaneous-detuning extraction from single
//! shots.

use crate::error::{Error, Result};
use crate::fit::{levenberg_marquardt, nelder_mead, LeastSquares, LmOptions};
use num_complex::Complex64;

/// One ringdown record on a uniform time grid.
#[derive(Debug, Clone)]
pub struct RingdownShot {
    pub shot_id: u64,
    /// (time s, complex signal); strictly increasing uniform times.
    pub samples: Vec<(f64, Complex64)>,
}

impl RingdownShot {
    pub fn new(shot_id: u64, samples: Vec<(f64, Complex64)>) -> Result<Self> {
        if samples.len() < 8 {
            return Err(Error::Invalid("a ringdown shot needs at least 8 samples".into()));
        }
        let dt0 = samples[1].0 - samples[0].0;
        if !(dt0 > 0.0) {
            return Err(Error::Invalid("times must be strictly increasing".into()));
        }
        for w in samples.windows(2) {
            let dt = w[1].0 - w[0].0;
            if ((dt - dt0) / dt0).abs() > 1e-9 {
                return Err(Error::Invalid(format!(
                    "non-uniform sample spacing: {dt} vs {dt0}"
                )));
            }
        }
        Ok(RingdownShot { shot_id, samples })
    }

    pub fn dt(&self) -> f64 {
        self.samples[1].0 - self.samples[0].0
    }
}

/// Ensemble decay-fit result; rates rad/s, powers in signal units squared.
#[derive(Debug, Clone, Copy)]
pub struct RingdownFit {
    pub kappa: f64,
    pub kappa_sigma: f64,
    /// |s0|^2 prefactor of the exponential.
    pub amplitude_sq: f64,
    pub amplitude_sq_sigma: f64,
    /// Noise power sigma^2.
    pub noise_sq: f64,
    /// Fitted common late-time offset.
    pub s_inf: Complex64,
    /// True when amplitude^2 < 3 sigma^2 (estimate unreliable).
    pub low_snr: bool,
}

struct PowerDecay<'a> {
    t: &'a [f64],
    p: &'a [f64],
    /// Per-point weights, frozen for each reweighting pass.
    w: &'a [f64],
}

impl PowerDecay<'_> {
    // parameters: (ln A, kappa, sigma2)
    fn model(&self, th: &[f64], i: usize) -> f64 {
        th[0].exp() * (-(th[1] * self.t[i]).min(700.0)).exp() + th[2]
    }
}

impl LeastSquares for PowerDecay<'_> {
    fn residuals(&self, th: &[f64]) -> Option<Vec<f64>> {
        // sigma^2 may go slightly negative during finite differencing; the
        // model stays evaluable and the final value is clamped
        if th[1] <= 0.0 {
            return None;
        }
        Some(
            (0..self.t.len())
                .map(|i| (self.p[i] - self.model(th, i)) * self.w[i])
                .collect(),
        )
    }
}

/// (ln A, kappa, sigma2) seed from the tail level and a log-domain line fit.
fn seed_power_params(t: &[f64], p: &[f64]) -> [f64; 3] {
    let n = t.len();
    let n_late = (n / 10).max(4).min(n / 2);
    let s2_init = (p[n - n_late..].iter().sum::<f64>() / n_late as f64).max(0.0);
    let a_init = (p[0] - s2_init).max(1e-300);
    let mut sum_t = 0.0;
    let mut sum_y = 0.0;
    let mut sum_tt = 0.0;
    let mut sum_ty = 0.0;
    let mut m = 0.0;
    for i in 0..n {
        let d = p[i] - s2_init;
        if d > 0.05 * a_init {
            let y = d.ln();
            sum_t += t[i];
            sum_y += y;
            sum_tt += t[i] * t[i];
            sum_ty += t[i] * y;
            m += 1.0;
        }
    }
    let k_init = if m >= 3.0 && (m * sum_tt - sum_t * sum_t) > 0.0 {
        (-(m * sum_ty - sum_t * sum_y) / (m * sum_tt - sum_t * sum_t)).max(0.1 / t[n - 1].max(1e-30))
    } else {
        1.0 / t[n - 1].max(1e-30)
    };
    [a_init.ln(), k_init, s2_init]
}

/// Iteratively reweighted fit of A e^(-kappa t) + sigma^2: unit weights
/// first, then weights from the ensemble-power variance model
/// var P = (2 sigma^2 A e^(-kappa t) + sigma^4)/N at the previous iterate.
fn fit_power_curve(t: &[f64], p: &[f64], n_shots: f64) -> Result<(Vec<f64>, f64, ndarray::Array2<f64>)> {
    let n = t.len();
    let opts = LmOptions {
        max_iterations: 300,
        step_tolerance: 1e-12,
        ..LmOptions::default()
    };
    let mut weights = vec![1.0; n];
    let mut params = seed_power_params(t, p);
    let mut last = None;
    for _pass in 0..3 {
        let problem = PowerDecay { t, p, w: &weights };
        let res = levenberg_marquardt(&problem, &params, &opts)?;
        params = [res.params[0], res.params[1], res.params[2].max(0.0)];
        let s2 = params[2];
        if s2 == 0.0 {
            let mut out = res.params.clone();
            out[2] = 0.0;
            return Ok((out, res.cost, res.covariance));
        }
        for (i, w) in weights.iter_mut().enumerate() {
            let e = params[0].exp() * (-(params[1] * t[i]).min(700.0)).exp();
            let var = (2.0 * s2 * e + s2 * s2) / n_shots;
            *w = 1.0 / var.sqrt();
        }
        last = Some((res.params.clone(), res.cost, res.covariance));
    }
    let (p_out, cost, cov) = last.expect("at least one pass ran");
    Ok((p_out, cost, cov))
}

/// Fit the ensemble mean of |s(t) - s_inf|^2 to A e^(-kappa t) + sigma^2,
/// optimizing the common complex offset s_inf as a nuisance parameter.
///
/// Shots are reduced to per-time sufficient statistics (mean signal and
/// mean power) before any fitting, so the estimate depends on the shots
/// only through phase-insensitive averages.
pub fn ringdown_fit_ensemble(shots: &[RingdownShot]) -> Result<RingdownFit> {
    if shots.is_empty() {
        return Err(Error::Invalid("no shots given".into()));
    }
    let n = shots[0].samples.len();
    let dt = shots[0].dt();
    for s in shots {
        if s.samples.len() != n || ((s.dt() - dt) / dt).abs() > 1e-9 {
            return Err(Error::Invalid("shots must share one time grid".into()));
        }
    }
    let n_shots = shots.len() as f64;
    let t: Vec<f64> = shots[0].samples.iter().map(|&(t, _)| t - shots[0].samples[0].0).collect();
    // sufficient statistics
    let mut m1 = vec![Complex64::new(0.0, 0.0); n];
    let mut m2 = vec![0.0f64; n];
    for s in shots {
        for (i, &(_, v)) in s.samples.iter().enumerate() {
            m1[i] += v;
            m2[i] += v.norm_sqr();
        }
    }
    for i in 0..n {
        m1[i] /= n_shots;
        m2[i] /= n_shots;
    }

    let n_late = (n / 10).max(4).min(n / 2);
    let guess: Complex64 = m1[n - n_late..].iter().sum::<Complex64>() / n_late as f64;
    // the search box covers a few standard errors of the late mean plus the
    // residual-decay drift visible between the two halves of the tail
    let var_late = (m2[n - n_late..].iter().sum::<f64>() / n_late as f64 - guess.norm_sqr()).max(0.0);
    let amp0 = (m2[0] - guess.norm_sqr()).abs().sqrt().max(1e-300);
    let half = n_late / 2;
    let tail_a: Complex64 = m1[n - n_late..n - half].iter().sum::<Complex64>() / (n_late - half) as f64;
    let tail_b: Complex64 = m1[n - half..].iter().sum::<Complex64>() / half as f64;
    let half_width = 10.0 * (var_late / (n_shots * n_late as f64)).sqrt()
        + 3.0 * (tail_a - tail_b).norm()
        + 1e-9 * amp0;

    let power_at = |s_inf: Complex64| -> Vec<f64> {
        (0..n)
            .map(|i| (m2[i] - 2.0 * (s_inf.conj() * m1[i]).re + s_inf.norm_sqr()).max(0.0))
            .collect()
    };
    let cost_at = |x: &[f64]| -> f64 {
        if (x[0] - guess.re).abs() > half_width || (x[1] - guess.im).abs() > half_width {
            return f64::INFINITY;
        }
        let p = power_at(Complex64::new(x[0], x[1]));
        match fit_power_curve(&t, &p, n_shots) {
            Ok((_, cost, _)) => cost,
            Err(_) => f64::INFINITY,
        }
    };

    let best = nelder_mead(
        cost_at,
        &[guess.re, guess.im],
        &[half_width / 3.0, half_width / 3.0],
        400,
        1e-14 * amp0.max(1e-30),
    );
    let s_inf = Complex64::new(best[0], best[1]);
    let p = power_at(s_inf);
    let (params, _, cov) = fit_power_curve(&t, &p, n_shots)?;
    let a = params[0].exp();
    let kappa = params[1];
    let s2 = params[2];
    Ok(RingdownFit {
        kappa,
        kappa_sigma: cov[(1, 1)].max(0.0).sqrt(),
        amplitude_sq: a,
        amplitude_sq_sigma: cov[(0, 0)].max(0.0).sqrt() * a,
        noise_sq: s2,
        s_inf,
        low_snr: a < 3.0 * s2,
    })
}

#[derive(Debug, Clone, Copy)]
pub struct DetuningOptions {
    /// Boxcar width (samples) applied to the unwrapped phase before the
    /// central difference.
    pub smooth_width: usize,
    /// Truncate once |s - s_inf| falls below this amplitude (0 disables).
    pub min_amplitude: f64,
}

impl Default for DetuningOptions {
    fn default() -> Self {
        DetuningOptions {
            smooth_width: 5,
            min_amplitude: 0.0,
        }
    }
}

/// Instantaneous mode-probe detuning delta(t) = d/dt arg(s(t) - s_inf),
/// rad/s, from the phase-unwrapped offset-subtracted signal. The output is
/// truncated where the amplitude drops below `min_amplitude`.
pub fn instantaneous_detuning(
    shot: &RingdownShot,
    s_inf: Complex64,
    opts: &DetuningOptions,
) -> Result<Vec<(f64, f64)>> {
    let n = shot.samples.len();
    let dt = shot.dt();
    // unwrap phases up to the truncation point
    let mut phases = Vec::with_capacity(n);
    let mut last = 0.0f64;
    let mut offset = 0.0f64;
    for (i, &(_, v)) in shot.samples.iter().enumerate() {
        let d = v - s_inf;
        if opts.min_amplitude > 0.0 && d.norm() < opts.min_amplitude {
            break;
        }
        let raw = d.arg();
        if i > 0 {
            let mut step = raw + offset - last;
            while step > std::f64::consts::PI {
                offset -= crate::constants::TAU;
                step -= crate::constants::TAU;
            }
            while step < -std::f64::consts::PI {
                offset += crate::constants::TAU;
                step += crate::constants::TAU;
            }
        }
        last = raw + offset;
        phases.push(last);
    }
    if phases.len() < 3 {
        return Err(Error::Invalid(
            "signal below the SNR threshold from the start; nothing to differentiate".into(),
        ));
    }
    // boxcar pre-smoothing
    let w = opts.smooth_width.max(1);
    let smoothed: Vec<f64> = (0..phases.len())
        .map(|i| {
            let lo = i.saturating_sub(w / 2);
            let hi = (i + w / 2 + 1).min(phases.len());
            phases[lo..hi].iter().sum::<f64>() / (hi - lo) as f64
        })
        .collect();
    let mut out = Vec::with_capacity(smoothed.len().saturating_sub(2));
    for i in 1..smoothed.len() - 1 {
        let d = (smoothed[i + 1] - smoothed[i - 1]) / (2.0 * dt);
        out.push((shot.samples[i].0, d));
    }
    Ok(out)
}

/// Cavity length variation from a frequency excursion: dL = L dOmega/omega.
pub fn length_variation(delta_omega: f64, length: f64, omega: f64) -> f64 {
    length * delta_omega / omega
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::constants::TAU;
    use approx::assert_relative_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    pub(crate) struct SynthOpts {
        pub kappa: f64,
        pub n_shots: usize,
        pub n_samples: usize,
        pub record_decay_constants: f64,
        pub s_inf: Complex64,
        pub noise: f64,
        pub detuning_spread: f64,
        pub walk_rate: f64,
        pub random_initial_phase: bool,
        pub seed: u64,
    }

    impl Default for SynthOpts {
        fn default() -> Self {
            SynthOpts {
                kappa: TAU * 813.3,
                n_shots: 200,
                n_samples: 1500,
                record_decay_constants: 12.0,
                s_inf: Complex64::new(0.3, 0.2),
                noise: 0.02,
                detuning_spread: TAU * 250.0,
                walk_rate: TAU * 80.0,
                random_initial_phase: true,
                seed: 11,
            }
        }
    }

    pub(crate) fn synth_shots(o: &SynthOpts) -> Vec<RingdownShot> {
        let mut rng = ChaCha8Rng::seed_from_u64(o.seed);
        let t_end = o.record_decay_constants / o.kappa;
        let dt = t_end / (o.n_samples - 1) as f64;
        let mut shots = Vec::with_capacity(o.n_shots);
        for j in 0..o.n_shots {
            let phi0 = if o.random_initial_phase {
                rng.gen::<f64>() * TAU
            } else {
                0.0
            };
            let delta_j = o.detuning_spread * gauss(&mut rng);
            let mut phase = phi0;
            let mut samples = Vec::with_capacity(o.n_samples);
            for i in 0..o.n_samples {
                let t = i as f64 * dt;
                phase += (delta_j + o.walk_rate * gauss(&mut rng)) * dt;
                let decay = Complex64::new(0.0, phase).exp() * (-0.5 * o.kappa * t).exp();
                let eps = Complex64::new(gauss(&mut rng), gauss(&mut rng))
                    * (o.noise / std::f64::consts::SQRT_2);
                samples.push((t, o.s_inf + decay + eps));
            }
            shots.push(RingdownShot::new(j as u64, samples).unwrap());
        }
        shots
    }

    fn gauss<R: Rng>(rng: &mut R) -> f64 {
        // Box-Muller
        let u1: f64 = rng.gen::<f64>().max(1e-12);
        let u2: f64 = rng.gen();
        (-2.0 * u1.ln()).sqrt() * (TAU * u2).cos()
    }

    #[test]
    fn ensemble_recovers_kappa() {
        let o = SynthOpts::default();
        let shots = synth_shots(&o);
        let fit = ringdown_fit_ensemble(&shots).unwrap();
        assert_relative_eq!(fit.kappa, o.kappa, max_relative = 5e-3);
        assert!(!fit.low_snr);
        assert_relative_eq!(fit.noise_sq, o.noise * o.noise, max_relative = 0.1);
        assert!((fit.s_inf - o.s_inf).norm() < 0.01);
    }

    #[test]
    fn single_noiseless_shot_is_exact() {
        let o = SynthOpts {
            n_shots: 1,
            noise: 0.0,
            s_inf: Complex64::new(0.0, 0.0),
            detuning_spread: 0.0,
            walk_rate: 0.0,
            random_initial_phase: false,
            ..Default::default()
        };
        let shots = synth_shots(&o);
        let fit = ringdown_fit_ensemble(&shots).unwrap();
        assert_relative_eq!(fit.kappa, o.kappa, max_relative = 1e-7);
        assert!(fit.noise_sq < 1e-9);
    }

    #[test]
    fn estimator_invariant_under_decay_phase_rotation_and_reorder() {
        let o = SynthOpts {
            n_shots: 60,
            n_samples: 600,
            ..Default::default()
        };
        let shots = synth_shots(&o);
        let fit = ringdown_fit_ensemble(&shots).unwrap();
        // rotate the decaying part of each shot by its own global phase
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        let rotated: Vec<RingdownShot> = shots
            .iter()
            .map(|s| {
                let rot = Complex64::new(0.0, rng.gen::<f64>() * TAU).exp();
                RingdownShot::new(
                    s.shot_id,
                    s.samples
                        .iter()
                        .map(|&(t, v)| (t, o.s_inf + rot * (v - o.s_inf)))
                        .collect(),
                )
                .unwrap()
            })
            .collect();
        let fit_rot = ringdown_fit_ensemble(&rotated).unwrap();
        // the offset search consumes the coherent mean, so rotation
        // invariance is statistical at the 1/sqrt(shots) level
        assert_relative_eq!(fit.kappa, fit_rot.kappa, max_relative = 5e-3);
        // reorder shots
        let mut rev: Vec<RingdownShot> = shots.to_vec();
        rev.reverse();
        let fit_rev = ringdown_fit_ensemble(&rev).unwrap();
        assert_relative_eq!(fit.kappa, fit_rev.kappa, max_relative = 1e-9);
    }

    #[test]
    fn coherent_averaging_is_biased_high() {
        // shots share the initial phase but dephase through frequency
        // scatter: averaging the complex traces decays faster than the true
        // kappa, while the power-ensemble estimator does not
        let o = SynthOpts {
            random_initial_phase: false,
            detuning_spread: TAU * 250.0,
            noise: 0.01,
            ..Default::default()
        };
        let shots = synth_shots(&o);
        let good = ringdown_fit_ensemble(&shots).unwrap();
        assert_relative_eq!(good.kappa, o.kappa, max_relative = 1e-2);

        // the wrong method: coherent mean, then an amplitude fit
        let n = shots[0].samples.len();
        let mut mean = vec![Complex64::new(0.0, 0.0); n];
        for s in &shots {
            for (i, &(_, v)) in s.samples.iter().enumerate() {
                mean[i] += v;
            }
        }
        for v in mean.iter_mut() {
            *v /= shots.len() as f64;
        }
        let t: Vec<f64> = shots[0].samples.iter().map(|&(t, _)| t).collect();
        let p: Vec<f64> = mean.iter().map(|v| (v - o.s_inf).norm_sqr()).collect();
        let (params, _, _) = fit_power_curve(&t, &p, shots.len() as f64).unwrap();
        let kappa_coherent = params[1];
        assert!(
            kappa_coherent > 1.10 * o.kappa,
            "coherent estimate {kappa_coherent} not biased high vs {}",
            o.kappa
        );
    }

    #[test]
    fn detuning_recovery() {
        // constant detuning spiral
        let kappa = TAU * 813.3;
        let delta = TAU * 200.0;
        let n = 1000;
        let t_end = 8.0 / kappa;
        let dt = t_end / (n - 1) as f64;
        let samples: Vec<(f64, Complex64)> = (0..n)
            .map(|i| {
                let t = i as f64 * dt;
                (
                    t,
                    Complex64::new(0.1, -0.05)
                        + Complex64::new(0.0, delta * t).exp() * (-0.5 * kappa * t).exp(),
                )
            })
            .collect();
        let shot = RingdownShot::new(0, samples).unwrap();
        let d = instantaneous_detuning(&shot, Complex64::new(0.1, -0.05), &DetuningOptions::default())
            .unwrap();
        // interior points recover the constant detuning
        for &(_, v) in &d[5..d.len() - 5] {
            assert_relative_eq!(v, delta, max_relative = 1e-6);
        }
        // zero-detuning decay has zero phase slope
        let samples0: Vec<(f64, Complex64)> = (0..n)
            .map(|i| {
                let t = i as f64 * dt;
                (t, Complex64::new((-0.5 * kappa * t).exp(), 0.0))
            })
            .collect();
        let shot0 = RingdownShot::new(1, samples0).unwrap();
        let d0 =
            instantaneous_detuning(&shot0, Complex64::new(0.0, 0.0), &DetuningOptions::default())
                .unwrap();
        for &(_, v) in &d0 {
            assert!(v.abs() < 1e-9);
        }
    }

    #[test]
    fn detuning_truncates_at_low_snr() {
        let kappa = TAU * 1e3;
        let n = 800;
        let t_end = 14.0 / kappa;
        let dt = t_end / (n - 1) as f64;
        let samples: Vec<(f64, Complex64)> = (0..n)
            .map(|i| {
                let t = i as f64 * dt;
                (t, Complex64::new((-0.5 * kappa * t).exp(), 0.0))
            })
            .collect();
        let shot = RingdownShot::new(0, samples).unwrap();
        let opts = DetuningOptions {
            smooth_width: 5,
            min_amplitude: 1e-2,
        };
        let d = instantaneous_detuning(&shot, Complex64::new(0.0, 0.0), &opts).unwrap();
        assert!(d.len() < n - 2);
        assert!(!d.is_empty());
    }

    #[test]
    fn length_variation_maps_to_sub_nanometer() {
        let dl = length_variation(TAU * 700.0, 45.44e-3, TAU * 77.579e9);
        assert_relative_eq!(dl, 0.41e-9, max_relative = 0.02);
    }
}
