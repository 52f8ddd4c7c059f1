//! Atom-cavity figures of merit for circular Rydberg transitions and the
//! non-Hermitian Tavis-Cummings simulation of a cavity-mediated iSWAP gate.
//!
//! All rates here (g, kappa, Gamma, Delta) are angular, rad/s.

use crate::constants::{A_0, C, EPS_0, E_CHARGE, HBAR, RYDBERG, TAU};
use crate::error::{Error, Result};
use crate::fit::golden_section;
use crate::linalg::Propagator;
use ndarray::Array2;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

/// Parameters of one atomic transition coupled to the cavity.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct TransitionParams {
    /// Transition frequency, Hz.
    pub frequency_hz: f64,
    /// Dipole matrix element magnitude, C m.
    pub dipole: f64,
    /// |eps_atom* . eps_cavity|^2, in [0, 1].
    pub polarization_overlap_sq: f64,
    /// Branching ratio of the cavity-coupled decay channel, in (0, 1].
    pub branching_ratio: f64,
}

/// Circular-to-circular Rydberg transition |nC> -> |(n-1)C>.
#[derive(Debug, Clone, Copy)]
pub struct CircularTransition {
    pub params: TransitionParams,
    /// Large-n asymptotic dipole n^2 e a0 / sqrt(2), C m.
    pub asymptotic_dipole: f64,
}

fn ln_factorial(n: u64) -> f64 {
    (2..=n).map(|k| (k as f64).ln()).sum()
}

/// Exact hydrogenic radial integral <n-1,n-2| r |n,n-1> between circular
/// states, in units of a0. Evaluated in log space; the radial functions are
/// R_{n,n-1}(r) = (2/n)^{3/2} [2n (2n-1)!]^{-1/2} (2r/n)^{n-1} e^{-r/n}.
pub fn circular_radial_integral(n_upper: u32) -> f64 {
    let n = n_upper as f64;
    let m = n - 1.0;
    let ln_norm = |q: f64| -> f64 {
        1.5 * (2.0 / q).ln() - 0.5 * ((2.0 * q).ln() + ln_factorial(2.0 as u64 * q as u64 - 1))
            + (q - 1.0) * (2.0 / q).ln()
    };
    let beta = 1.0 / n + 1.0 / m;
    let ln_i = ln_norm(n) + ln_norm(m) + ln_factorial(2 * n_upper as u64) - (2.0 * n + 1.0) * beta.ln();
    ln_i.exp()
}

/// Frequency, exact dipole, and asymptotic dipole of the circular
/// transition with upper principal quantum number `n_upper`.
///
/// The dipole is the exact radial integral times the stretched-state
/// angular factor sqrt(l/(2l+1)) for the sigma+ component, l = n-1. The
/// polarization overlap with a linear cavity mode is 1/2 and circular
/// states have unit branching ratio.
pub fn rydberg_circular_transition(n_upper: u32) -> Result<CircularTransition> {
    if n_upper < 3 {
        return Err(Error::Invalid(format!("need n >= 3, got {n_upper}")));
    }
    let n = n_upper as f64;
    let freq_hz = C * RYDBERG * (1.0 / ((n - 1.0) * (n - 1.0)) - 1.0 / (n * n));
    let l = n - 1.0;
    let angular = (l / (2.0 * l + 1.0)).sqrt();
    let dipole = E_CHARGE * A_0 * circular_radial_integral(n_upper) * angular;
    let asymptotic = n * n * E_CHARGE * A_0 / std::f64::consts::SQRT_2;
    Ok(CircularTransition {
        params: TransitionParams {
            frequency_hz: freq_hz,
            dipole,
            polarization_overlap_sq: 0.5,
            branching_ratio: 1.0,
        },
        asymptotic_dipole: asymptotic,
    })
}

/// Single-photon rms vacuum field sqrt(hbar omega / 2 eps0 V), V/m.
pub fn vacuum_field_rms(frequency_hz: f64, mode_volume: f64) -> f64 {
    (HBAR * TAU * frequency_hz / (2.0 * EPS_0 * mode_volume)).sqrt()
}

/// Vacuum Rabi frequency g = |d| E_rms sqrt(overlap^2) / hbar, rad/s.
pub fn vacuum_rabi(dipole: f64, frequency_hz: f64, mode_volume: f64, overlap_sq: f64) -> f64 {
    dipole * vacuum_field_rms(frequency_hz, mode_volume) * overlap_sq.sqrt() / HBAR
}

/// Free-space spontaneous emission rate Gamma = d^2 omega^3/(3 pi eps0 hbar
/// c^3), rad/s.
pub fn spontaneous_rate(dipole: f64, frequency_hz: f64) -> f64 {
    let omega = TAU * frequency_hz;
    dipole * dipole * omega.powi(3) / (3.0 * std::f64::consts::PI * EPS_0 * HBAR * C.powi(3))
}

/// Geometric cooperativity eta = (6/pi^2)(F lambda / z_R) * overlap^2 *
/// branching ratio.
pub fn cooperativity(
    finesse: f64,
    wavelength: f64,
    rayleigh_zr: f64,
    overlap_sq: f64,
    branching_ratio: f64,
) -> f64 {
    6.0 / std::f64::consts::PI.powi(2) * finesse * wavelength / rayleigh_zr * overlap_sq * branching_ratio
}

/// Rate-form cooperativity 4 g^2 / (kappa Gamma); rates in rad/s.
pub fn cooperativity_from_rates(g: f64, kappa: f64, gamma: f64) -> f64 {
    4.0 * g * g / (kappa * gamma)
}

/// Detuning and evolution time of the m-th exact-return gate point:
/// Delta_m = g (m-1) sqrt(8/(2m-1)), t_m = 2 pi (m-1)/Delta_m.
pub fn special_detunings(m: u32, g: f64) -> Result<(f64, f64)> {
    if m < 2 {
        return Err(Error::Invalid(format!("need m >= 2, got {m} (m = 1 is degenerate)")));
    }
    let mf = m as f64;
    let delta = g * (mf - 1.0) * (8.0 / (2.0 * mf - 1.0)).sqrt();
    let t = TAU * (mf - 1.0) / delta;
    Ok((delta, t))
}

/// Dispersive-regime gate error estimates for given rates (rad/s):
/// epsilon at the supplied detuning, the optimal detuning, and the minimum
/// error 2 pi sqrt(2/eta_bar).
pub fn dispersive_error_estimates(g: f64, kappa: f64, gamma_bar: f64, delta: f64) -> (f64, f64, f64) {
    let eps = std::f64::consts::PI * (kappa / (2.0 * delta) + gamma_bar * delta / (g * g));
    let eta_bar = cooperativity_from_rates(g, kappa, gamma_bar);
    let delta_opt = kappa / 2.0 * (eta_bar / 2.0).sqrt();
    let eps_min = TAU * (2.0 / eta_bar).sqrt();
    (eps, delta_opt, eps_min)
}

/// Parameters of the two-atom Tavis-Cummings gate simulation. Rates rad/s.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct GateParams {
    pub g: f64,
    pub kappa: f64,
    pub gamma_up: f64,
    pub gamma_down: f64,
    pub detuning: f64,
    pub duration: f64,
    pub photon_truncation: usize,
}

impl GateParams {
    pub fn validate(&self) -> Result<()> {
        if self.g < 0.0 || self.kappa < 0.0 || self.gamma_up < 0.0 || self.gamma_down < 0.0 {
            return Err(Error::Invalid("rates must be >= 0".into()));
        }
        if !(self.duration > 0.0) {
            return Err(Error::Invalid(format!("duration must be > 0, got {}", self.duration)));
        }
        if self.photon_truncation < 2 {
            return Err(Error::Invalid(format!(
                "photon truncation must be >= 2, got {}",
                self.photon_truncation
            )));
        }
        Ok(())
    }
}

/// Basis index: qubit pair (0 = up, 1 = down) times Fock level.
fn idx(q1: usize, q2: usize, n: usize, dim_c: usize) -> usize {
    (q1 * 2 + q2) * dim_c + n
}

/// Effective non-Hermitian generator H_TC - (i/2)(kappa a^dag a +
/// sum_j,mu Gamma_mu |mu><mu|_j) on (2 qubits) x Fock(n_max).
fn build_h_eff(p: &GateParams, n_max: usize) -> Array2<Complex64> {
    let dim_c = n_max + 1;
    let d = 4 * dim_c;
    let mut h = Array2::<Complex64>::zeros((d, d));
    let c = Complex64::new;
    for q1 in 0..2 {
        for q2 in 0..2 {
            for n in 0..dim_c {
                let i = idx(q1, q2, n, dim_c);
                let sz = (if q1 == 0 { 1.0 } else { -1.0 }) + (if q2 == 0 { 1.0 } else { -1.0 });
                let gam = (if q1 == 0 { p.gamma_up } else { p.gamma_down })
                    + (if q2 == 0 { p.gamma_up } else { p.gamma_down });
                h[(i, i)] += c(p.detuning / 2.0 * sz, 0.0);
                h[(i, i)] += c(0.0, -0.5 * (p.kappa * n as f64 + gam));
                // sigma^- a^dag
                if q1 == 0 && n + 1 < dim_c {
                    let j = idx(1, q2, n + 1, dim_c);
                    h[(j, i)] += c(p.g * ((n + 1) as f64).sqrt(), 0.0);
                }
                if q2 == 0 && n + 1 < dim_c {
                    let j = idx(q1, 1, n + 1, dim_c);
                    h[(j, i)] += c(p.g * ((n + 1) as f64).sqrt(), 0.0);
                }
                // sigma^+ a
                if q1 == 1 && n > 0 {
                    let j = idx(0, q2, n - 1, dim_c);
                    h[(j, i)] += c(p.g * (n as f64).sqrt(), 0.0);
                }
                if q2 == 1 && n > 0 {
                    let j = idx(q1, 0, n - 1, dim_c);
                    h[(j, i)] += c(p.g * (n as f64).sqrt(), 0.0);
                }
            }
        }
    }
    h
}

/// Average gate fidelity of the zero-photon projected evolution against the
/// iSWAP target, maximized over a global spin rotation about z:
/// F = [tr(M M^dag) + |tr M|^2] / (D(D+1)), D = 4.
fn pedersen_fidelity(m0: &Array2<Complex64>) -> f64 {
    // M(theta) = U0^dag Rz(theta) M0 with Rz = diag(e^{-i theta}, 1, 1,
    // e^{i theta}); U0 = iSWAP = diag-block(1, [[0,i],[i,0]], 1)
    let u0_dag = {
        let c = Complex64::new;
        ndarray::array![
            [c(1.0, 0.0), c(0.0, 0.0), c(0.0, 0.0), c(0.0, 0.0)],
            [c(0.0, 0.0), c(0.0, 0.0), c(0.0, -1.0), c(0.0, 0.0)],
            [c(0.0, 0.0), c(0.0, -1.0), c(0.0, 0.0), c(0.0, 0.0)],
            [c(0.0, 0.0), c(0.0, 0.0), c(0.0, 0.0), c(1.0, 0.0)]
        ]
    };
    let a = u0_dag.dot(m0);
    // tr M(theta) = sum_k diag weights: rows of A weighted by the rotation
    // phase of the row index (charge +1, 0, 0, -1)
    let tr_mmdag: f64 = a.iter().map(|z| z.norm_sqr()).sum();
    let c0 = a[(1, 1)] + a[(2, 2)];
    let cp = a[(0, 0)];
    let cm = a[(3, 3)];
    let trace_at = |theta: f64| -> Complex64 {
        let e = Complex64::new(0.0, -theta).exp();
        cp * e + c0 + cm * e.conj()
    };
    let f_at = |theta: f64| (tr_mmdag + trace_at(theta).norm_sqr()) / 20.0;
    // |tr M|^2 is a degree-2 trigonometric polynomial: locate the best of a
    // dense grid, then refine by golden section
    let mut best_theta = 0.0;
    let mut best = f64::NEG_INFINITY;
    let n_grid = 256;
    for i in 0..n_grid {
        let th = TAU * i as f64 / n_grid as f64;
        let f = f_at(th);
        if f > best {
            best = f;
            best_theta = th;
        }
    }
    let half = TAU / n_grid as f64;
    let refined = golden_section(|th| -f_at(th), best_theta - half, best_theta + half, 1e-12);
    f_at(refined).max(best)
}

/// Zero-photon projection of the propagator as a 4x4 matrix over the qubit
/// basis (uu, ud, du, dd).
fn project_zero_photon(v: &Array2<Complex64>, dim_c: usize) -> Array2<Complex64> {
    let sel = [
        idx(0, 0, 0, dim_c),
        idx(0, 1, 0, dim_c),
        idx(1, 0, 0, dim_c),
        idx(1, 1, 0, dim_c),
    ];
    let mut m = Array2::<Complex64>::zeros((4, 4));
    for (a, &i) in sel.iter().enumerate() {
        for (b, &j) in sel.iter().enumerate() {
            m[(a, b)] = v[(i, j)];
        }
    }
    m
}

fn fidelity_at_truncation(p: &GateParams, n_max: usize) -> Result<f64> {
    let h = build_h_eff(p, n_max);
    let prop = Propagator::new(h)?;
    let v = prop.at(p.duration);
    Ok(pedersen_fidelity(&project_zero_photon(&v, n_max + 1)))
}

/// Average fidelity of the projected conditional evolution against iSWAP.
///
/// The photon truncation is checked by re-running with one more Fock level;
/// a drift above 1e-10 is an error.
pub fn simulate_iswap(params: &GateParams) -> Result<f64> {
    params.validate()?;
    let f = fidelity_at_truncation(params, params.photon_truncation)?;
    let f_up = fidelity_at_truncation(params, params.photon_truncation + 1)?;
    if (f - f_up).abs() > 1e-10 {
        return Err(Error::Consistency(format!(
            "truncation-sensitive result: F({}) = {f:.12}, F({}) = {f_up:.12}",
            params.photon_truncation,
            params.photon_truncation + 1
        )));
    }
    Ok(f)
}

/// Detuning-scan mode: evolve for the dispersive gate time pi Delta/2g^2 at
/// each detuning, or use the exact-return pairs (Delta_m, t_m).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ScanMode {
    FixedTauG,
    SpecialM,
}

/// Infidelity versus detuning. In `FixedTauG` mode `detunings` are absolute
/// detunings (rad/s); in `SpecialM` mode they are the integer m values.
pub fn scan_iswap(
    base: &GateParams,
    detunings: &[f64],
    mode: ScanMode,
) -> Result<Vec<(f64, f64)>> {
    let mut out = Vec::with_capacity(detunings.len());
    for &x in detunings {
        let (delta, t) = match mode {
            ScanMode::FixedTauG => {
                if !(x > 0.0) {
                    return Err(Error::Invalid(format!("detuning must be > 0, got {x}")));
                }
                (x, std::f64::consts::PI * x / (2.0 * base.g * base.g))
            }
            ScanMode::SpecialM => special_detunings(x as u32, base.g)?,
        };
        let p = GateParams {
            detuning: delta,
            duration: t,
            ..*base
        };
        let f = simulate_iswap(&p)?;
        out.push((delta, 1.0 - f));
    }
    Ok(out)
}

/// State evolution diagnostics used by the invariants: propagate an initial
/// state and report per-sector populations.
pub fn evolve_state(
    params: &GateParams,
    initial: &[Complex64],
    t: f64,
) -> Result<Vec<Complex64>> {
    params.validate()?;
    let dim_c = params.photon_truncation + 1;
    let d = 4 * dim_c;
    if initial.len() != d {
        return Err(Error::Invalid(format!("state length {} != {d}", initial.len())));
    }
    let h = build_h_eff(params, params.photon_truncation);
    let prop = Propagator::new(h)?;
    let v = prop.at(t);
    let mut out = vec![Complex64::new(0.0, 0.0); d];
    for (i, o) in out.iter_mut().enumerate() {
        for (j, &s) in initial.iter().enumerate() {
            *o += v[(i, j)] * s;
        }
    }
    Ok(out)
}

/// Index helper exposed for tests and diagnostics: (q1, q2, n) -> flat index
/// at the given truncation.
pub fn state_index(q1: usize, q2: usize, n: usize, photon_truncation: usize) -> usize {
    idx(q1, q2, n, photon_truncation + 1)
}
