//! Geometry fitting from assigned mode frequencies, avoided-crossing
//! reconstruction, and FSR-based peak grouping.

use crate::core::{CavityGeometry, Polarization};
use crate::error::{Error, Result};
use crate::fit::{self, LeastSquares, LmOptions};
use crate::spectrum::tem00_frequency;
use ndarray::Array2;
use serde::{Deserialize, Serialize};

/// One identified TEM00 line: frequency with its longitudinal order and
/// polarization, plus the measurement uncertainty.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct ModeAssignment {
    pub frequency_hz: f64,
    pub q: i64,
    pub polarization: Polarization,
    pub sigma_hz: f64,
}

/// Fitted geometry with the covariance over (L, Rbar, eta, ptilde) and the
/// RMS frequency residual.
#[derive(Debug, Clone)]
pub struct GeometryFit {
    pub geometry: CavityGeometry,
    /// Covariance over (length, mean_curvature, astigmatism, aspheric);
    /// lengths in meters.
    pub covariance: Array2<f64>,
    pub residual_rms_hz: f64,
}

struct GeometryProblem<'a> {
    assignments: &'a [ModeAssignment],
    /// Nondimensionalization scales from the initial guess.
    l0: f64,
}

impl GeometryProblem<'_> {
    /// parameters: (gbar, Rbar/L0, eta, ptilde)
    fn geometry_of(&self, p: &[f64]) -> Option<CavityGeometry> {
        let gbar = p[0];
        let rbar = p[1] * self.l0;
        if !(gbar > -1.0 && gbar < 1.0) || !(rbar > 0.0) {
            return None;
        }
        let length = rbar * (1.0 - gbar);
        if p[2].abs() >= 1.0 {
            return None;
        }
        Some(CavityGeometry {
            length,
            mean_curvature: rbar,
            astigmatism: p[2],
            aspheric: p[3],
            mirror_radius: None,
        })
    }
}

impl LeastSquares for GeometryProblem<'_> {
    fn residuals(&self, p: &[f64]) -> Option<Vec<f64>> {
        let g = self.geometry_of(p)?;
        self.assignments
            .iter()
            .map(|a| {
                tem00_frequency(&g, a.q, a.polarization)
                    .ok()
                    .map(|f| (f - a.frequency_hz) / a.sigma_hz)
            })
            .collect()
    }
}

/// Weighted least-squares fit of (L, Rbar, eta_astig, ptilde) to assigned
/// TEM00 frequencies.
///
/// Needs at least 5 assignments spanning 3 longitudinal orders; resolving
/// the astigmatism requires both polarizations. An unidentifiable parameter
/// is reported by name instead of silently converging sideways.
pub fn fit_geometry(assignments: &[ModeAssignment], initial: &CavityGeometry) -> Result<GeometryFit> {
    initial.validate()?;
    if assignments.len() < 5 {
        return Err(Error::Invalid(format!(
            "need >= 5 assignments, got {}",
            assignments.len()
        )));
    }
    let mut qs: Vec<i64> = assignments.iter().map(|a| a.q).collect();
    qs.sort_unstable();
    qs.dedup();
    if qs.len() < 3 {
        return Err(Error::Invalid(format!(
            "assignments span only {} distinct q (need >= 3)",
            qs.len()
        )));
    }
    for a in assignments {
        if !(a.sigma_hz > 0.0) {
            return Err(Error::Invalid(format!("sigma must be > 0 at q = {}", a.q)));
        }
        if !matches!(a.polarization, Polarization::X | Polarization::Y) {
            return Err(Error::Invalid("assignments must use linear polarization labels".into()));
        }
    }
    let both_pols = {
        let has_x = assignments.iter().any(|a| a.polarization == Polarization::X);
        let has_y = assignments.iter().any(|a| a.polarization == Polarization::Y);
        has_x && has_y
    };

    let problem = GeometryProblem {
        assignments,
        l0: initial.length,
    };
    let init = [
        initial.gbar(),
        initial.mean_curvature / initial.length,
        initial.astigmatism,
        initial.aspheric,
    ];

    // identifiability check at the initial guess
    let r0 = problem
        .residuals(&init)
        .ok_or_else(|| Error::Invalid("model undefined at the initial guess".into()))?;
    let mut jac = Array2::zeros((r0.len(), 4));
    for col in 0..4 {
        let h = (1e-7 * init[col].abs()).max(1e-7);
        let mut p = init;
        p[col] += h;
        let rp = problem
            .residuals(&p)
            .ok_or_else(|| Error::Invalid("model undefined near the initial guess".into()))?;
        let mut m = init;
        m[col] -= h;
        let rm = problem
            .residuals(&m)
            .ok_or_else(|| Error::Invalid("model undefined near the initial guess".into()))?;
        for i in 0..r0.len() {
            jac[(i, col)] = (rp[i] - rm[i]) / (2.0 * h);
        }
    }
    if let Some(idx) = fit::rank_deficient_parameter(&jac, 1e-8) {
        let name = ["gbar", "mean_curvature", "astigmatism_eta", "aspheric_p"][idx];
        let details = if idx == 2 && !both_pols {
            "only one polarization present; the astigmatic splitting is invisible".to_string()
        } else {
            "the assignments do not constrain this parameter".to_string()
        };
        return Err(Error::RankDeficient {
            parameter: name.into(),
            details,
        });
    }

    let opts = LmOptions {
        max_iterations: 100,
        step_tolerance: 1e-10,
        ..LmOptions::default()
    };
    let res = fit::levenberg_marquardt(&problem, &init, &opts)?;
    let geometry = problem
        .geometry_of(&res.params)
        .ok_or_else(|| Error::Invalid("fit converged outside the stability region".into()))?;

    // propagate the internal covariance (gbar, Rbar/L0, eta, pt) to
    // (L, Rbar, eta, pt): L = L0 x (1 - gbar), Rbar = L0 x x2
    // dL/dgbar = -Rbar, dL/dx2 = L0 (1 - gbar)
    let l0 = problem.l0;
    let mut t = Array2::zeros((4, 4));
    t[(0, 0)] = -geometry.mean_curvature;
    t[(0, 1)] = l0 * (1.0 - res.params[0]);
    t[(1, 1)] = l0;
    t[(2, 2)] = 1.0;
    t[(3, 3)] = 1.0;
    let covariance = t.dot(&res.covariance).dot(&t.t());

    let sse: f64 = assignments
        .iter()
        .map(|a| {
            let f = tem00_frequency(&geometry, a.q, a.polarization).unwrap_or(f64::NAN);
            (f - a.frequency_hz).powi(2)
        })
        .sum();
    Ok(GeometryFit {
        geometry,
        covariance,
        residual_rms_hz: (sse / assignments.len() as f64).sqrt(),
    })
}

/// One measured branch pair of an avoided crossing.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct BranchPair {
    pub upper_hz: f64,
    pub lower_hz: f64,
    pub q: i64,
}

/// Reconstructed crossing: global coupling V, per-q bare frequencies and
/// mixing fractions.
#[derive(Debug, Clone)]
pub struct CrossingFit {
    /// |V| in the same units as the input frequencies.
    pub coupling_v: f64,
    /// Per q: (q, bare upper, bare lower, power fraction pair of the upper
    /// dressed mode).
    pub bare_frequencies: Vec<(i64, f64, f64, (f64, f64))>,
    /// Set when the branches never approach within 10 |V|: the
    /// extrapolated coupling is unreliable.
    pub extrapolated: bool,
    pub residual_rms: f64,
}

struct CrossingProblem<'a> {
    branches: &'a [BranchPair],
    q_mid: f64,
    scale: f64,
}

impl CrossingProblem<'_> {
    /// parameters: (c0, c1, d0, d1, ln V): center line c0 + c1 dq, bare
    /// half-splitting delta = d0 + d1 dq, coupling V
    fn model(&self, p: &[f64], q: i64) -> (f64, f64) {
        let dq = q as f64 - self.q_mid;
        let center = p[0] + p[1] * dq;
        let delta = p[2] + p[3] * dq;
        let v = p[4].exp();
        let half_gap = (delta * delta + v * v).sqrt();
        (center + half_gap, center - half_gap)
    }
}

impl LeastSquares for CrossingProblem<'_> {
    fn residuals(&self, p: &[f64]) -> Option<Vec<f64>> {
        let mut r = Vec::with_capacity(2 * self.branches.len());
        for b in self.branches {
            let (up, lo) = self.model(p, b.q);
            if !up.is_finite() || !lo.is_finite() {
                return None;
            }
            r.push((up - b.upper_hz) / self.scale);
            r.push((lo - b.lower_hz) / self.scale);
        }
        Some(r)
    }
}

/// Fit the two-level crossing model to measured branch pairs: bare levels
/// varying linearly across the crossing, constant coupling |V|.
pub fn fit_crossing(branches: &[BranchPair]) -> Result<CrossingFit> {
    if branches.len() < 3 {
        return Err(Error::Invalid(format!(
            "need >= 3 branch pairs spanning the crossing, got {}",
            branches.len()
        )));
    }
    let q_mid = branches.iter().map(|b| b.q as f64).sum::<f64>() / branches.len() as f64;
    let scale = branches
        .iter()
        .map(|b| (b.upper_hz - b.lower_hz).abs())
        .fold(0.0f64, f64::max)
        .max(1e-30);
    // line fit for the center drift
    let centers: Vec<(f64, f64)> = branches
        .iter()
        .map(|b| (b.q as f64 - q_mid, 0.5 * (b.upper_hz + b.lower_hz)))
        .collect();
    let (mut sx, mut sy, mut sxx, mut sxy) = (0.0, 0.0, 0.0, 0.0);
    for &(x, y) in &centers {
        sx += x;
        sy += y;
        sxx += x * x;
        sxy += x * y;
    }
    let nn = centers.len() as f64;
    let denom = (nn * sxx - sx * sx).max(1e-30);
    let c1 = (nn * sxy - sx * sy) / denom;
    let c0 = (sy - c1 * sx) / nn;
    // seed the bare-detuning line through the half-gaps, flipping sign at
    // the gap minimum when the crossing lies inside the data
    let mut by_q: Vec<(f64, f64)> = branches
        .iter()
        .map(|b| (b.q as f64 - q_mid, 0.5 * (b.upper_hz - b.lower_hz)))
        .collect();
    by_q.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
    let imin = by_q
        .iter()
        .enumerate()
        .min_by(|a, b| a.1 .1.partial_cmp(&b.1 .1).unwrap())
        .map(|(i, _)| i)
        .unwrap();
    let interior = imin > 0 && imin + 1 < by_q.len();
    let h_min = by_q[imin].1;
    let (mut sx, mut sy, mut sxx, mut sxy) = (0.0, 0.0, 0.0, 0.0);
    for (i, &(x, h)) in by_q.iter().enumerate() {
        let signed = if interior && i < imin { -h } else { h };
        sx += x;
        sy += signed;
        sxx += x * x;
        sxy += x * signed;
    }
    let denom_d = (nn * sxx - sx * sx).max(1e-30);
    let d1 = (nn * sxy - sx * sy) / denom_d;
    let d0 = (sy - d1 * sx) / nn;
    let v0 = if interior {
        h_min.max(1e-6 * scale)
    } else {
        (0.1 * h_min).max(1e-6 * scale)
    };
    let problem = CrossingProblem {
        branches,
        q_mid,
        scale,
    };
    let init = [c0, c1, d0, d1, v0.ln()];
    let opts = LmOptions {
        max_iterations: 200,
        step_tolerance: 1e-12,
        ..LmOptions::default()
    };
    let res = fit::levenberg_marquardt(&problem, &init, &opts)?;
    let p = res.params.clone();
    let v = p[4].exp();
    let ln_v_sigma = res.covariance[(4, 4)].max(0.0).sqrt();

    let mut bare = Vec::with_capacity(branches.len());
    let mut min_abs_delta = f64::INFINITY;
    for b in branches {
        let dq = b.q as f64 - q_mid;
        let center = p[0] + p[1] * dq;
        let delta = p[2] + p[3] * dq;
        min_abs_delta = min_abs_delta.min(delta.abs());
        let ((up, lo), fr) = crate::spectrum::hybridize_two_level(center, delta, v)?;
        let _ = (up, lo);
        bare.push((b.q, center + delta, center - delta, fr));
    }
    Ok(CrossingFit {
        coupling_v: v,
        bare_frequencies: bare,
        extrapolated: min_abs_delta > 10.0 * v || ln_v_sigma > 0.5,
        residual_rms: (res.cost / (2.0 * branches.len() as f64)).sqrt() * scale,
    })
}

/// Peaks grouped by half-FSR slot with the refined FSR.
#[derive(Debug, Clone)]
pub struct FsrGrouping {
    /// Refined free spectral range, Hz.
    pub fsr_hz: f64,
    /// Groups of peak frequencies sharing a half-FSR slot, ascending.
    pub groups: Vec<Vec<f64>>,
    pub residual_rms_hz: f64,
}

/// Cluster peaks into half-FSR slots and refine the FSR by regressing peak
/// frequency on slot index. A peak equidistant between two slots joins the
/// lower one.
pub fn group_by_fsr(peaks: &[f64], fsr_guess_hz: f64) -> Result<FsrGrouping> {
    if peaks.len() < 2 {
        return Err(Error::Invalid(format!("need >= 2 peaks, got {}", peaks.len())));
    }
    if !(fsr_guess_hz > 0.0) {
        return Err(Error::Invalid(format!("FSR guess must be > 0, got {fsr_guess_hz}")));
    }
    let mut sorted = peaks.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let x0 = sorted[0];
    let mut period = fsr_guess_hz / 2.0;

    let mut slots: Vec<i64> = Vec::new();
    for _pass in 0..8 {
        slots = sorted
            .iter()
            .map(|&x| {
                let u = (x - x0) / period;
                // ties round down
                let r = u - u.floor();
                if (r - 0.5).abs() < 1e-12 {
                    u.floor() as i64
                } else {
                    u.round() as i64
                }
            })
            .collect();
        // regression x = c + slot * period
        let n = sorted.len() as f64;
        let sx: f64 = slots.iter().map(|&s| s as f64).sum();
        let sy: f64 = sorted.iter().sum();
        let sxx: f64 = slots.iter().map(|&s| (s as f64).powi(2)).sum();
        let sxy: f64 = slots.iter().zip(&sorted).map(|(&s, &y)| s as f64 * y).sum();
        let denom = n * sxx - sx * sx;
        if denom.abs() < 1e-9 {
            return Err(Error::Invalid(
                "all peaks fall in a single group; the FSR is undetermined".into(),
            ));
        }
        let new_period = (n * sxy - sx * sy) / denom;
        if !(new_period > 0.0) {
            return Err(Error::NoPeriodicStructure("regressed period is non-positive".into()));
        }
        let rel = ((new_period - period) / period).abs();
        period = new_period;
        if rel < 1e-12 {
            break;
        }
    }

    let n = sorted.len() as f64;
    let sx: f64 = slots.iter().map(|&s| s as f64).sum();
    let sy: f64 = sorted.iter().sum();
    let intercept = (sy - period * sx) / n;
    let sse: f64 = slots
        .iter()
        .zip(&sorted)
        .map(|(&s, &y)| (y - intercept - s as f64 * period).powi(2))
        .sum();
    let rms = (sse / n).sqrt();
    if rms > period / 8.0 {
        return Err(Error::NoPeriodicStructure(format!(
            "residual rms {rms:.3e} Hz is a large fraction of the period {period:.3e} Hz"
        )));
    }

    let mut groups: Vec<Vec<f64>> = Vec::new();
    let mut last_slot = None;
    for (&s, &x) in slots.iter().zip(&sorted) {
        if last_slot == Some(s) {
            groups.last_mut().unwrap().push(x);
        } else {
            groups.push(vec![x]);
            last_slot = Some(s);
        }
    }
    if groups.len() < 2 {
        return Err(Error::Invalid(
            "all peaks fall in a single group; the FSR is undetermined".into(),
        ));
    }
    Ok(FsrGrouping {
        fsr_hz: 2.0 * period,
        groups,
        residual_rms_hz: rms,
    })
}
