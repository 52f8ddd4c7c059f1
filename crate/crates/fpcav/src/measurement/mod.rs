//! Measurement analysis: rational fits to frequency-domain S21 sweeps,
//! Q-circle coupling extraction, time-domain ringdown ensembles, and the
//! probe-coupling field model.

mod ringdown;
mod vecfit;

pub use ringdown::{
    instantaneous_detuning, length_variation, ringdown_fit_ensemble, DetuningOptions,
    RingdownFit, RingdownShot,
};
pub use vecfit::{refine_resonance, vector_fit, vector_fit_with, VectorFitOptions};

use crate::constants::EPS_0;
use crate::error::{Error, Result};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

/// A frequency sweep: strictly increasing frequencies in Hz with complex
/// S21 samples.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepTrace {
    pub points: Vec<(f64, Complex64)>,
}

impl SweepTrace {
    pub fn new(points: Vec<(f64, Complex64)>) -> Result<Self> {
        if points.len() < 2 {
            return Err(Error::Invalid("a sweep needs at least 2 points".into()));
        }
        for w in points.windows(2) {
            if !(w[1].0 > w[0].0) {
                return Err(Error::Invalid(format!(
                    "sweep frequencies must be strictly increasing ({} then {})",
                    w[0].0, w[1].0
                )));
            }
        }
        Ok(SweepTrace { points })
    }
}

/// Rational model H(s) = C + sum_n a_n / (s - p_n), s = i omega, poles and
/// residues in rad/s.
///
/// Narrowband sweeps around a single resonance are fit as a positive-
/// frequency analytic model with unpaired complex poles (`analytic` set);
/// models with conjugate-paired poles describe real impulse responses.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RationalModel {
    pub constant: Complex64,
    pub poles: Vec<Complex64>,
    pub residues: Vec<Complex64>,
    /// True for the one-sided analytic convention.
    pub analytic: bool,
    /// RMS misfit of the model over the training sweep.
    pub rms_error: f64,
}

impl RationalModel {
    pub fn evaluate(&self, freq_hz: f64) -> Complex64 {
        let s = Complex64::new(0.0, crate::constants::TAU * freq_hz);
        let mut h = self.constant;
        for (a, p) in self.residues.iter().zip(&self.poles) {
            h += a / (s - p);
        }
        h
    }

    /// Index of the pole with the tallest peak response |a|/|Re p| whose
    /// center lies inside [f_lo, f_hi] (Hz); falls back to the tallest
    /// overall.
    pub fn dominant_pole_in(&self, f_lo_hz: f64, f_hi_hz: f64) -> Option<usize> {
        let height = |i: usize| {
            let re = self.poles[i].re.abs().max(1e-300);
            self.residues[i].norm() / re
        };
        let in_band: Vec<usize> = (0..self.poles.len())
            .filter(|&i| {
                let f = self.poles[i].im / crate::constants::TAU;
                f >= f_lo_hz && f <= f_hi_hz
            })
            .collect();
        let candidates = if in_band.is_empty() {
            (0..self.poles.len()).collect()
        } else {
            in_band
        };
        candidates
            .into_iter()
            .max_by(|&a, &b| height(a).partial_cmp(&height(b)).unwrap_or(std::cmp::Ordering::Equal))
    }
}

/// Loaded resonance parameters extracted from a rational model; all rad/s.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct ResonanceParams {
    pub omega0: f64,
    pub kappa: f64,
    /// |a*| of the resonance term; equals sqrt(kappa1 kappa2) for a
    /// lossless feedline.
    pub sqrt_k1k2: f64,
    pub omega0_sigma: f64,
    pub kappa_sigma: f64,
    pub sqrt_k1k2_sigma: f64,
}

/// Geometric mean of the probe couplings from the resonance residue,
/// compensating the feedline insertion loss (amplitude factor
/// 10^(IL_dB/20)). Rejects results violating kappa1 + kappa2 <= kappa.
pub fn extract_probe_coupling(
    params: &ResonanceParams,
    residue: Complex64,
    insertion_loss_db: f64,
) -> Result<f64> {
    if insertion_loss_db < 0.0 {
        return Err(Error::Invalid(format!(
            "insertion loss must be >= 0 dB, got {insertion_loss_db}"
        )));
    }
    let sqrt_k1k2 = residue.norm() * 10f64.powf(insertion_loss_db / 20.0);
    if sqrt_k1k2 > params.kappa / 2.0 {
        return Err(Error::Domain(format!(
            "sqrt(k1 k2) = {sqrt_k1k2:.3e} exceeds kappa/2 = {:.3e}: couplings cannot exceed the loaded linewidth",
            params.kappa / 2.0
        )));
    }
    Ok(sqrt_k1k2)
}

/// Q-circle diameter d21 = 2 sqrt(k1 k2)/kappa.
pub fn q_circle_diameter(sqrt_k1k2: f64, kappa: f64) -> f64 {
    2.0 * sqrt_k1k2 / kappa
}

/// Single-point probe-coupling estimate
/// kappa = omega^2 eps0 |Z| A^2 / V_mode * |E(tip)|^2 / max|E|^2, rad/s.
pub fn probe_coupling_from_field(
    e_tip_over_emax_sq: f64,
    mode_volume: f64,
    omega: f64,
    tip_area: f64,
    line_impedance: f64,
) -> Result<f64> {
    if !(0.0..=1.0).contains(&e_tip_over_emax_sq) {
        return Err(Error::Invalid(format!(
            "field ratio must be in [0, 1], got {e_tip_over_emax_sq}"
        )));
    }
    if !(mode_volume > 0.0 && omega > 0.0 && tip_area > 0.0 && line_impedance > 0.0) {
        return Err(Error::Invalid("mode volume, omega, tip area, impedance must be > 0".into()));
    }
    Ok(omega * omega * EPS_0 * line_impedance * tip_area * tip_area / mode_volume * e_tip_over_emax_sq)
}

/// Midplane intensity of the fundamental mode at transverse radius r,
/// normalized to the on-axis maximum: exp(-2 r^2 / w0^2).
pub fn tem00_midplane_intensity(waist_w0: f64, r: f64) -> f64 {
    (-2.0 * r * r / (waist_w0 * waist_w0)).exp()
}

/// Linear interpolation of a frequency-tabulated insertion loss (Hz, dB);
/// clamps outside the table.
pub fn interpolate_insertion_loss(table: &[(f64, f64)], freq_hz: f64) -> Result<f64> {
    if table.is_empty() {
        return Err(Error::Invalid("empty insertion-loss table".into()));
    }
    let mut t = table.to_vec();
    t.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
    if freq_hz <= t[0].0 {
        return Ok(t[0].1);
    }
    if freq_hz >= t[t.len() - 1].0 {
        return Ok(t[t.len() - 1].1);
    }
    for w in t.windows(2) {
        if freq_hz >= w[0].0 && freq_hz <= w[1].0 {
            let f = (freq_hz - w[0].0) / (w[1].0 - w[0].0);
            return Ok(w[0].1 + f * (w[1].1 - w[0].1));
        }
    }
    unreachable!()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn q_circle_limits() {
        // critically transmitted: k1 = k2, k0 = 0 -> d21 = 1
        let k = 2.0;
        let sqrt = 1.0;
        assert_relative_eq!(q_circle_diameter(sqrt, k), 1.0);
        // k0 = k1 = k2 -> d21 = 2/3
        let k = 3.0;
        assert_relative_eq!(q_circle_diameter(1.0, k), 2.0 / 3.0, max_relative = 1e-12);
    }

    #[test]
    fn probe_coupling_extraction() {
        let params = ResonanceParams {
            omega0: 1.0,
            kappa: 10.0,
            sqrt_k1k2: 0.0,
            omega0_sigma: 0.0,
            kappa_sigma: 0.0,
            sqrt_k1k2_sigma: 0.0,
        };
        // 20 dB insertion loss scales the residue amplitude by 10
        let v = extract_probe_coupling(&params, Complex64::new(0.3, 0.0), 20.0).unwrap();
        assert_relative_eq!(v, 3.0, max_relative = 1e-12);
        // violating AM-GM bound errors out
        assert!(extract_probe_coupling(&params, Complex64::new(0.6, 0.0), 20.0).is_err());
        assert!(extract_probe_coupling(&params, Complex64::new(0.1, 0.0), -1.0).is_err());
    }

    #[test]
    fn field_coupling_scalings() {
        let base = probe_coupling_from_field(0.5, 1e-6, 1e11, 1e-6, 50.0).unwrap();
        assert!(base > 0.0);
        // zero field -> zero coupling
        assert_eq!(probe_coupling_from_field(0.0, 1e-6, 1e11, 1e-6, 50.0).unwrap(), 0.0);
        // doubling the tip area quadruples the coupling
        let quad = probe_coupling_from_field(0.5, 1e-6, 1e11, 2e-6, 50.0).unwrap();
        assert_relative_eq!(quad / base, 4.0, max_relative = 1e-12);
        // coupling decays monotonically as the probe retracts
        let w0 = 4.68e-3;
        let mut prev = f64::INFINITY;
        for i in 0..30 {
            let r = 10e-3 + 0.4e-3 * i as f64;
            let k = probe_coupling_from_field(
                tem00_midplane_intensity(w0, r),
                0.81e-6,
                crate::constants::TAU * 90.818e9,
                1e-6,
                50.0,
            )
            .unwrap();
            assert!(k < prev);
            prev = k;
        }
    }

    #[test]
    fn insertion_loss_table() {
        let t = vec![(70e9, 10.0), (90e9, 20.0), (110e9, 25.0)];
        assert_relative_eq!(interpolate_insertion_loss(&t, 80e9).unwrap(), 15.0);
        assert_relative_eq!(interpolate_insertion_loss(&t, 100e9).unwrap(), 22.5);
        assert_relative_eq!(interpolate_insertion_loss(&t, 60e9).unwrap(), 10.0);
        assert_relative_eq!(interpolate_insertion_loss(&t, 120e9).unwrap(), 25.0);
    }

    #[test]
    fn sweep_validation() {
        assert!(SweepTrace::new(vec![(1.0, Complex64::new(0.0, 0.0))]).is_err());
        assert!(SweepTrace::new(vec![
            (2.0, Complex64::new(0.0, 0.0)),
            (1.0, Complex64::new(0.0, 0.0))
        ])
        .is_err());
    }
}
