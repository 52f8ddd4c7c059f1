//! Post-paraxial round-trip Hamiltonian blocks, mode-frequency prediction,
//! and the two-level hybridization model.
//!
//! The round-trip phase operator is assembled from ladder-operator matrices
//! on the two-oscillator Fock space (circular basis n+, n-), tensored with
//! the two-dimensional Jones polarization space, then restricted to a fixed
//! transverse order N. Eigenvalues are round-trip phases phi; frequencies
//! follow from omega = omega_fsr (q + phi/2pi).

use crate::constants::{C, TAU};
use crate::core::{free_spectral_range, CavityGeometry, ModeLabel, ModeLine, Polarization};
use crate::error::{Error, Result};
use ndarray::Array2;
use ndarray_linalg::{Eigh, UPLO};
use num_complex::Complex64;

/// Default transverse-order ceiling for spectrum prediction.
pub const N_MAX_DEFAULT: usize = 8;
/// Hard cap on the transverse order.
pub const N_MAX_CAP: usize = 16;
/// Extra total-excitation guard absorbed by the Fock-space truncation so
/// quartic operator products are exact on blocks up to the cap.
const TRUNCATION_GUARD: usize = 4;

/// One fixed-N block of the round-trip phase operator.
#[derive(Debug, Clone)]
pub struct HamiltonianBlock {
    pub transverse_n: usize,
    /// Basis ordering: for n_plus = N..0 (descending), polarization R then L.
    pub basis: Vec<(u32, u32, Polarization)>,
    /// Hermitian matrix of dimension 2(N+1); eigenvalues are round-trip phases.
    pub matrix: Array2<Complex64>,
    pub wavenumber_k: f64,
}

/// Dense matrices for the two circular annihilation operators on the
/// truncated Fock space n+ + n- <= cap, ordered by total N ascending and
/// n+ descending within each N.
struct FockOps {
    states: Vec<(u32, u32)>,
    a_plus: Array2<f64>,
    a_minus: Array2<f64>,
}

fn fock_ops(cap: usize) -> FockOps {
    let mut states = Vec::new();
    for n in 0..=cap {
        for np in (0..=n).rev() {
            states.push((np as u32, (n - np) as u32));
        }
    }
    let index: std::collections::HashMap<(u32, u32), usize> =
        states.iter().enumerate().map(|(i, s)| (*s, i)).collect();
    let d = states.len();
    let mut a_plus = Array2::zeros((d, d));
    let mut a_minus = Array2::zeros((d, d));
    for (i, &(np, nm)) in states.iter().enumerate() {
        if np > 0 {
            let j = index[&(np - 1, nm)];
            a_plus[(j, i)] = (np as f64).sqrt();
        }
        if nm > 0 {
            let j = index[&(np, nm - 1)];
            a_minus[(j, i)] = (nm as f64).sqrt();
        }
    }
    FockOps { states, a_plus, a_minus }
}

/// Build the seven-term phase operator at wavenumber `k`, restricted to the
/// excitation-conserving subspace of transverse order `transverse_n`.
pub fn build_block_hamiltonian(
    geometry: &CavityGeometry,
    wavenumber_k: f64,
    transverse_n: usize,
) -> Result<HamiltonianBlock> {
    geometry.validate()?;
    if transverse_n > N_MAX_CAP {
        return Err(Error::OrderAboveCap {
            requested: transverse_n,
            cap: N_MAX_CAP,
        });
    }
    if !(wavenumber_k > 0.0) {
        return Err(Error::Invalid(format!("wavenumber must be > 0, got {wavenumber_k}")));
    }

    let cap = transverse_n + TRUNCATION_GUARD;
    let ops = fock_ops(cap);
    let d = ops.states.len();
    let gbar = geometry.gbar();
    let rbar = geometry.mean_curvature;
    let eta = geometry.astigmatism;
    let ptilde = geometry.aspheric;
    // alpha^2 = 1 + (L/2zR)^2 = 1 + (1-gbar)/(1+gbar), k-independent
    let alpha2 = 1.0 + (1.0 - gbar) / (1.0 + gbar);
    let inv_kr = 1.0 / (wavenumber_k * rbar);

    let to_c = |m: &Array2<f64>| m.mapv(|x| Complex64::new(x, 0.0));
    let ap = to_c(&ops.a_plus);
    let am = to_c(&ops.a_minus);
    let apd = ap.t().mapv(|z| z.conj());
    let amd = am.t().mapv(|z| z.conj());
    let sqrt2_inv = Complex64::new(std::f64::consts::FRAC_1_SQRT_2, 0.0);
    let i_c = Complex64::new(0.0, 1.0);
    // Cartesian ladder operators in the circular basis
    let ax = (&ap + &am) * sqrt2_inv;
    let ay = (&ap - &am) * (i_c * sqrt2_inv);
    let axd = ax.t().mapv(|z| z.conj());
    let ayd = ay.t().mapv(|z| z.conj());
    // dimensionless quadratures: X = x/gamma, K = gamma k_x
    let x_op = (&ax + &axd) * sqrt2_inv;
    let y_op = (&ay + &ayd) * sqrt2_inv;
    let kx_op = (&ax - &axd) * (-i_c * sqrt2_inv);
    let ky_op = (&ay - &ayd) * (-i_c * sqrt2_inv);

    let x2 = x_op.dot(&x_op);
    let y2 = y_op.dot(&y_op);
    let r2 = &x2 + &y2;
    let r4 = r2.dot(&r2);
    let k2 = &kx_op.dot(&kx_op) + &ky_op.dot(&ky_op);
    let k4 = k2.dot(&k2);

    let n_plus = apd.dot(&ap);
    let n_minus = amd.dot(&am);
    let n_tot = &n_plus + &n_minus;
    let lz = &n_plus - &n_minus;
    let eye: Array2<Complex64> = Array2::eye(d);
    let n_plus_1 = &n_tot + &eye;
    let n_plus_1_sq = n_plus_1.dot(&n_plus_1);

    let c = |x: f64| Complex64::new(x, 0.0);
    // orbital part (identity on polarization)
    let h_parax = n_plus_1.mapv(|z| z * c(2.0 * gbar.acos()));
    let h_prop = k4.mapv(|z| z * c(alpha2 * 0.5 * inv_kr));
    let h_wave = (&r4.mapv(|z| z * c(3.0 - alpha2)) - &n_plus_1_sq.mapv(|z| z * c(4.0)))
        .mapv(|z| z * c(0.5 * inv_kr));
    let h_asphere = r4.mapv(|z| z * c((1.0 - alpha2) * ptilde * 0.5 * inv_kr));
    let h_astig = (&x2 - &y2).mapv(|z| z * c(2.0 * eta * (alpha2 - 1.0).sqrt()));
    let h_orb = &h_parax + &h_prop + &h_wave + &h_asphere + &h_astig;

    // polarization operators on {R, L}
    let sz = [c(1.0), c(-1.0)];
    // full H = h_orb (x) I2  - (2/kR)(I + Lz Sz) - (2 eta/kR) Sx
    let full_dim = 2 * d;
    let mut h = Array2::<Complex64>::zeros((full_dim, full_dim));
    for i in 0..d {
        for j in 0..d {
            let orb = h_orb[(i, j)];
            let lzv = lz[(i, j)];
            for s in 0..2 {
                // diagonal-in-polarization part
                h[(2 * i + s, 2 * j + s)] =
                    orb + c(-2.0 * inv_kr) * (if i == j { c(1.0) } else { c(0.0) } + lzv * sz[s]);
                // Sx part flips polarization
                let flip = 1 - s;
                if i == j {
                    h[(2 * i + s, 2 * j + flip)] += c(-2.0 * eta * inv_kr);
                }
            }
        }
    }

    // restrict to the fixed-N subspace
    let sel: Vec<usize> = ops
        .states
        .iter()
        .enumerate()
        .filter(|(_, &(np, nm))| (np + nm) as usize == transverse_n)
        .flat_map(|(i, _)| [2 * i, 2 * i + 1])
        .collect();
    let bd = sel.len();
    let mut block = Array2::<Complex64>::zeros((bd, bd));
    for (bi, &i) in sel.iter().enumerate() {
        for (bj, &j) in sel.iter().enumerate() {
            block[(bi, bj)] = h[(i, j)];
        }
    }
    let basis: Vec<(u32, u32, Polarization)> = sel
        .iter()
        .map(|&i| {
            let (np, nm) = ops.states[i / 2];
            let pol = if i % 2 == 0 { Polarization::R } else { Polarization::L };
            (np, nm, pol)
        })
        .collect();

    Ok(HamiltonianBlock {
        transverse_n,
        basis,
        matrix: block,
        wavenumber_k,
    })
}

/// Paraxial round-trip phase of a transverse order N: 2 (N+1) acos(gbar).
pub fn paraxial_phase(gbar: f64, transverse_n: usize) -> f64 {
    2.0 * (transverse_n as f64 + 1.0) * gbar.acos()
}

/// Paraxial frequency estimate, Hz.
pub fn paraxial_frequency(geometry: &CavityGeometry, q: i64, transverse_n: usize) -> f64 {
    let fsr = free_spectral_range(geometry.length);
    fsr * (q as f64 + paraxial_phase(geometry.gbar(), transverse_n) / TAU)
}

/// Diagonalize a block and attach frequencies for longitudinal order `q`.
///
/// Eigenvectors inside a degenerate cluster are rotated onto definite total
/// angular momentum J = l + s combinations, and every eigenvector's largest
/// component is phase-fixed to the positive real axis, so compositions are
/// reproducible across runs.
pub fn solve_block(block: &HamiltonianBlock, q: i64, length: f64) -> Result<Vec<ModeLine>> {
    if q < 1 {
        return Err(Error::Invalid(format!("longitudinal order q must be >= 1, got {q}")));
    }
    let (vals, vecs) = block.matrix.eigh(UPLO::Lower)?;
    let dim = vals.len();
    let fsr = free_spectral_range(length);

    // J = l + s is diagonal in this basis
    let jdiag: Vec<f64> = block
        .basis
        .iter()
        .map(|&(np, nm, pol)| {
            (np as f64 - nm as f64)
                + match pol {
                    Polarization::R => 1.0,
                    Polarization::L => -1.0,
                    _ => 0.0,
                }
        })
        .collect();

    // re-orthogonalize degenerate clusters against definite-J combinations
    let mut vecs = vecs;
    let scale = vals.iter().fold(0.0f64, |m, v| m.max(v.abs())).max(1e-300);
    let mut start = 0;
    while start < dim {
        let mut end = start + 1;
        while end < dim && (vals[end] - vals[start]).abs() < 1e-9 * scale {
            end += 1;
        }
        if end - start > 1 {
            // project the cluster onto eigenvectors of J restricted to it
            let m = end - start;
            let mut jr = Array2::<Complex64>::zeros((m, m));
            for a in 0..m {
                for b in 0..m {
                    let mut acc = Complex64::new(0.0, 0.0);
                    for r in 0..dim {
                        acc += vecs[(r, start + a)].conj() * Complex64::new(jdiag[r], 0.0) * vecs[(r, start + b)];
                    }
                    jr[(a, b)] = acc;
                }
            }
            if let Ok((_, rot)) = jr.eigh(UPLO::Lower) {
                let mut new_cols = vec![vec![Complex64::new(0.0, 0.0); dim]; m];
                for (a, col) in new_cols.iter_mut().enumerate() {
                    for r in 0..dim {
                        let mut acc = Complex64::new(0.0, 0.0);
                        for b in 0..m {
                            acc += vecs[(r, start + b)] * rot[(b, a)];
                        }
                        col[r] = acc;
                    }
                }
                for (a, col) in new_cols.iter().enumerate() {
                    for r in 0..dim {
                        vecs[(r, start + a)] = col[r];
                    }
                }
            }
        }
        start = end;
    }

    let mut lines = Vec::with_capacity(dim);
    for e in 0..dim {
        let phi = vals[e];
        let freq = fsr * (q as f64 + phi / TAU);
        let mut comp: Vec<(ModeLabel, f64)> = Vec::new();
        for (r, &(np, nm, pol)) in block.basis.iter().enumerate() {
            let w = vecs[(r, e)].norm_sqr();
            if w > 1e-12 {
                comp.push((
                    ModeLabel {
                        q,
                        transverse_n: (np + nm),
                        angular_l: np as i32 - nm as i32,
                        radial_p: np.min(nm),
                        polarization: pol,
                    },
                    w,
                ));
            }
        }
        let total: f64 = comp.iter().map(|(_, w)| w).sum();
        for c in comp.iter_mut() {
            c.1 /= total;
        }
        comp.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap_or(std::cmp::Ordering::Equal));
        lines.push(ModeLine {
            frequency_hz: freq,
            finesse: None,
            coupling_sqrt_k1k2_hz: None,
            composition: comp,
        });
    }
    lines.sort_by(|a, b| a.frequency_hz.partial_cmp(&b.frequency_hz).unwrap());
    Ok(lines)
}

/// Closed-form TEM00 frequency, Hz, evaluated self-consistently: the
/// wavenumber in the post-paraxial correction is set once from the paraxial
/// estimate.
pub fn tem00_frequency(geometry: &CavityGeometry, q: i64, polarization: Polarization) -> Result<f64> {
    geometry.validate()?;
    let sign = match polarization {
        Polarization::X => 1.0,
        Polarization::Y => -1.0,
        _ => {
            return Err(Error::Invalid(
                "TEM00 polarization must be a linear axis (x or y)".into(),
            ))
        }
    };
    let fsr = free_spectral_range(geometry.length);
    let gbar = geometry.gbar();
    let f_par = paraxial_frequency(geometry, q, 0);
    let k = TAU * f_par / C;
    let l = geometry.length;
    let rbar = geometry.mean_curvature;
    let corr = (1.0 + geometry.aspheric * l / (2.0 * rbar - l) + sign * 2.0 * geometry.astigmatism)
        / (TAU * k * rbar);
    Ok(fsr * (q as f64 + gbar.acos() / std::f64::consts::PI - corr))
}

/// Block built at the block's own self-consistent wavenumber for (q, N).
pub fn self_consistent_block(
    geometry: &CavityGeometry,
    q: i64,
    transverse_n: usize,
) -> Result<HamiltonianBlock> {
    let f_par = paraxial_frequency(geometry, q, transverse_n);
    let k = TAU * f_par / C;
    build_block_hamiltonian(geometry, k, transverse_n)
}

/// All modes with q >= 1, N <= n_max whose frequencies fall inside
/// [f_lo_hz, f_hi_hz], sorted by frequency.
pub fn predict_spectrum(
    geometry: &CavityGeometry,
    f_lo_hz: f64,
    f_hi_hz: f64,
    n_max: usize,
) -> Result<Vec<ModeLine>> {
    geometry.validate()?;
    if !(f_lo_hz < f_hi_hz) {
        return Err(Error::Invalid(format!(
            "empty frequency window [{f_lo_hz}, {f_hi_hz}]"
        )));
    }
    if n_max > N_MAX_CAP {
        return Err(Error::OrderAboveCap { requested: n_max, cap: N_MAX_CAP });
    }
    let fsr = free_spectral_range(geometry.length);
    let mut lines = Vec::new();
    for n in 0..=n_max {
        // paraxial offset for this N, in FSR units
        let off = paraxial_phase(geometry.gbar(), n) / TAU;
        let q_lo = ((f_lo_hz / fsr) - off - 2.0).floor().max(1.0) as i64;
        let q_hi = ((f_hi_hz / fsr) - off + 2.0).ceil() as i64;
        for q in q_lo..=q_hi {
            if q < 1 {
                continue;
            }
            let block = self_consistent_block(geometry, q, n)?;
            for line in solve_block(&block, q, geometry.length)? {
                if line.frequency_hz >= f_lo_hz && line.frequency_hz <= f_hi_hz {
                    lines.push(line);
                }
            }
        }
    }
    lines.sort_by(|a, b| a.frequency_hz.partial_cmp(&b.frequency_hz).unwrap());
    Ok(lines)
}

/// Two-level hybridization: bare levels omega0 +/- delta coupled by V.
///
/// Returns the dressed frequencies (upper, lower) and the power fraction of
/// the upper bare mode in each dressed mode, (1 +/- sin beta)/2 with
/// beta = atan(delta/|V|). For the fully degenerate case delta = V = 0 the
/// convention is fractions (1, 0).
pub fn hybridize_two_level(omega0: f64, delta: f64, coupling_v: f64) -> Result<((f64, f64), (f64, f64))> {
    if coupling_v < 0.0 {
        return Err(Error::Invalid(format!("coupling must be >= 0, got {coupling_v}")));
    }
    if coupling_v == 0.0 && delta == 0.0 {
        return Ok(((omega0, omega0), (1.0, 0.0)));
    }
    let half_gap = (delta * delta + coupling_v * coupling_v).sqrt();
    let sin_beta = delta / half_gap;
    Ok((
        (omega0 + half_gap, omega0 - half_gap),
        ((1.0 + sin_beta) / 2.0, (1.0 - sin_beta) / 2.0),
    ))
}
