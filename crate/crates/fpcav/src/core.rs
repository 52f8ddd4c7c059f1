//! Domain types and derived Gaussian-beam geometry shared by all modules.
//!
//! Unit conventions: lengths in meters, temperatures in kelvin. Quantities
//! named `*_hz` or `frequency` (including everything read from or written to
//! files and the CLI) are ordinary frequencies in Hz; every rate or angular
//! frequency used inside formulas (`omega`, `kappa`, `g`, `gamma`, poles) is
//! angular, in rad/s.

use crate::constants::C;
use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};

/// Mirror spacing, curvature, astigmatism and asphericity: the four
/// parameters of the post-paraxial frequency model, plus the transverse
/// mirror radius used by loss and design calculations.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CavityGeometry {
    /// Mirror spacing L, m.
    pub length: f64,
    /// Harmonic mean curvature radius of the two principal axes, m.
    pub mean_curvature: f64,
    /// Astigmatism (R_y - R_x)/(R_y + R_x), dimensionless.
    #[serde(default)]
    pub astigmatism: f64,
    /// Aspheric coefficient: 0 for a sphere, 1 for a paraboloid.
    #[serde(default)]
    pub aspheric: f64,
    /// Transverse mirror radius, m. Optional; needed by loss/design ops.
    #[serde(default)]
    pub mirror_radius: Option<f64>,
}

impl CavityGeometry {
    pub fn new(length: f64, mean_curvature: f64, astigmatism: f64, aspheric: f64) -> Result<Self> {
        let g = Self {
            length,
            mean_curvature,
            astigmatism,
            aspheric,
            mirror_radius: None,
        };
        g.validate()?;
        Ok(g)
    }

    pub fn with_mirror_radius(mut self, r: f64) -> Result<Self> {
        if !(r > 0.0) {
            return Err(Error::Invalid(format!("mirror_radius must be > 0, got {r}")));
        }
        self.mirror_radius = Some(r);
        Ok(self)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.length > 0.0) {
            return Err(Error::Invalid(format!("length must be > 0, got {}", self.length)));
        }
        if !(self.mean_curvature > 0.0) {
            return Err(Error::Invalid(format!(
                "mean_curvature must be > 0, got {}",
                self.mean_curvature
            )));
        }
        if !(self.astigmatism.abs() < 1.0) {
            return Err(Error::Invalid(format!(
                "astigmatism must satisfy |eta| < 1, got {}",
                self.astigmatism
            )));
        }
        if let Some(r) = self.mirror_radius {
            if !(r > 0.0) {
                return Err(Error::Invalid(format!("mirror_radius must be > 0, got {r}")));
            }
        }
        let g = self.gbar();
        if !(g > -1.0 && g < 1.0) {
            return Err(Error::UnstableGeometry { gbar: g });
        }
        Ok(())
    }

    /// Stability parameter gbar = 1 - L/Rbar.
    pub fn gbar(&self) -> f64 {
        1.0 - self.length / self.mean_curvature
    }

    /// Principal curvature radii (R_x, R_y) reconstructed from the harmonic
    /// mean Rbar and the astigmatism eta = (R_y - R_x)/(R_y + R_x):
    /// R_x = Rbar (1 + eta) / (1 + eta^2) ... derived so that
    /// 2/Rbar = 1/R_x + 1/R_y and (R_y - R_x)/(R_y + R_x) = eta.
    pub fn principal_curvatures(&self) -> (f64, f64) {
        let eta = self.astigmatism;
        // With s = Rx + Ry and Rx = s(1-eta)/2, Ry = s(1+eta)/2, the
        // harmonic mean fixes s: Rbar = 2 RxRy/s = s(1-eta^2)/2.
        let s = 2.0 * self.mean_curvature / (1.0 - eta * eta);
        (s * (1.0 - eta) / 2.0, s * (1.0 + eta) / 2.0)
    }
}

/// Derived Gaussian-beam quantities at a given frequency.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GaussianModeParams {
    /// Waist (1/e^2 intensity radius at cavity center), m.
    pub waist_w0: f64,
    /// Spot size at mirror apex, m.
    pub mirror_spot_w1: f64,
    /// Rayleigh range, m.
    pub rayleigh_zr: f64,
    /// Expansion ratio alpha = w1/w0.
    pub expansion_alpha: f64,
    /// Gaussian length scale gamma = w1/sqrt(2), m.
    pub gamma_scale: f64,
    /// Stability parameter of the parent geometry.
    pub gbar: f64,
}

impl GaussianModeParams {
    /// Mode volume (pi/4) w0^2 L of the fundamental standing-wave mode, m^3.
    pub fn mode_volume(&self, length: f64) -> f64 {
        std::f64::consts::FRAC_PI_4 * self.waist_w0 * self.waist_w0 * length
    }
}

/// Rayleigh range of a stable symmetric resonator, m. Depends only on the
/// geometry, not the wavelength.
pub fn rayleigh_range(geometry: &CavityGeometry) -> Result<f64> {
    geometry.validate()?;
    let g = geometry.gbar();
    Ok(geometry.length / 2.0 * ((1.0 + g) / (1.0 - g)).sqrt())
}

/// Stability parameter gbar = 1 - L/Rbar.
pub fn derive_gbar(geometry: &CavityGeometry) -> f64 {
    geometry.gbar()
}

/// Waist, mirror spot, Rayleigh range and expansion ratio at `frequency_hz`.
pub fn derive_gaussian_params(geometry: &CavityGeometry, frequency_hz: f64) -> Result<GaussianModeParams> {
    if !(frequency_hz > 0.0) {
        return Err(Error::Invalid(format!("frequency must be > 0, got {frequency_hz}")));
    }
    let zr = rayleigh_range(geometry)?;
    let lambda = C / frequency_hz;
    let w0_sq = zr * lambda / std::f64::consts::PI;
    let w0 = w0_sq.sqrt();
    let half_l_over_zr = geometry.length / (2.0 * zr);
    let alpha = (1.0 + half_l_over_zr * half_l_over_zr).sqrt();
    let w1 = alpha * w0;
    Ok(GaussianModeParams {
        waist_w0: w0,
        mirror_spot_w1: w1,
        rayleigh_zr: zr,
        expansion_alpha: alpha,
        gamma_scale: w1 / std::f64::consts::SQRT_2,
        gbar: geometry.gbar(),
    })
}

/// Free spectral range c/2L, Hz.
pub fn free_spectral_range(length: f64) -> f64 {
    C / (2.0 * length)
}

/// Finesse from linewidth: F = FSR / kappa. Both arguments in the same
/// frequency convention (both Hz or both rad/s).
pub fn finesse_from_linewidth(kappa: f64, fsr: f64) -> f64 {
    fsr / kappa
}

/// Transverse mode label: longitudinal order q, total transverse order
/// N = 2p + |l|, orbital index l = n_plus - n_minus, radial index p, and
/// polarization.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ModeLabel {
    pub q: i64,
    pub transverse_n: u32,
    pub angular_l: i32,
    pub radial_p: u32,
    pub polarization: Polarization,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Polarization {
    X,
    Y,
    R,
    L,
}

impl std::fmt::Display for Polarization {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Polarization::X => write!(f, "x"),
            Polarization::Y => write!(f, "y"),
            Polarization::R => write!(f, "R"),
            Polarization::L => write!(f, "L"),
        }
    }
}

/// One predicted or measured cavity line: frequency in Hz, optional finesse
/// and probe coupling, and the mode composition as power fractions over
/// labelled basis modes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModeLine {
    pub frequency_hz: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub finesse: Option<f64>,
    /// sqrt(kappa1 kappa2) in Hz when measured.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub coupling_sqrt_k1k2_hz: Option<f64>,
    /// (label, power fraction), descending by fraction; fractions sum to 1.
    pub composition: Vec<(ModeLabel, f64)>,
}

impl ModeLine {
    /// Dominant label of the composition.
    pub fn label(&self) -> Option<&ModeLabel> {
        self.composition.first().map(|(l, _)| l)
    }
}

/// Superconductor material constants for BCS and vortex loss models.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MaterialProps {
    /// Normal-state resistivity, ohm m.
    pub normal_resistivity: f64,
    /// Superconducting gap over k_B, K.
    pub gap_over_kb: f64,
    /// Critical temperature, K.
    pub critical_t: f64,
    /// Pure-material penetration depth at T = 0, m.
    pub lambda_pure_0: f64,
    /// Pure-material coherence length, m.
    pub xi0: f64,
    /// Charge carrier density, 1/m^3.
    pub carrier_density: f64,
}

impl MaterialProps {
    pub fn validate(&self) -> Result<()> {
        let fields = [
            ("normal_resistivity", self.normal_resistivity),
            ("gap_over_kb", self.gap_over_kb),
            ("critical_t", self.critical_t),
            ("lambda_pure_0", self.lambda_pure_0),
            ("xi0", self.xi0),
            ("carrier_density", self.carrier_density),
        ];
        for (name, v) in fields {
            if !(v > 0.0) {
                return Err(Error::Invalid(format!("{name} must be > 0, got {v}")));
            }
        }
        if self.gap_over_kb >= 3.0 * self.critical_t {
            return Err(Error::Invalid(format!(
                "gap_over_kb = {} is not BCS-plausible for Tc = {}",
                self.gap_over_kb, self.critical_t
            )));
        }
        Ok(())
    }

    /// Sputtered niobium film constants used throughout the loss model.
    pub fn niobium_film() -> Self {
        MaterialProps {
            normal_resistivity: 2.8e-9,
            gap_over_kb: 17.67,
            critical_t: 9.2,
            lambda_pure_0: 37e-9,
            xi0: 40e-9,
            carrier_density: 5.56e28,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::{assert_abs_diff_eq, assert_relative_eq};

    fn geom(l_mm: f64, r_mm: f64) -> CavityGeometry {
        CavityGeometry::new(l_mm * 1e-3, r_mm * 1e-3, 0.0, 0.0).unwrap()
    }

    #[test]
    fn gbar_matches_measured_geometries() {
        assert_abs_diff_eq!(derive_gbar(&geom(45.44, 42.53)), -0.068, epsilon = 5e-4);
        assert_abs_diff_eq!(derive_gbar(&geom(43.75, 42.53)), -0.029, epsilon = 5e-4);
        assert_abs_diff_eq!(derive_gbar(&geom(47.15, 42.53)), -0.109, epsilon = 5e-4);
        // confocal limit
        assert_abs_diff_eq!(derive_gbar(&geom(42.53, 42.53)), 0.0, epsilon = 1e-15);
    }

    #[test]
    fn rayleigh_range_and_mode_volume() {
        let g = geom(47.15, 42.53);
        let zr = rayleigh_range(&g).unwrap();
        assert_relative_eq!(zr, 21.13e-3, max_relative = 2e-3);
        let p = derive_gaussian_params(&g, 92.08e9).unwrap();
        assert_relative_eq!(p.mode_volume(g.length), 0.81e-6, max_relative = 5e-3);
        // confocal: zR = L/2
        let gc = geom(42.53, 42.53);
        assert_relative_eq!(rayleigh_range(&gc).unwrap(), gc.length / 2.0, max_relative = 1e-14);
    }

    #[test]
    fn unstable_geometry_rejected() {
        let too_long = CavityGeometry::new(90e-3, 42.53e-3, 0.0, 0.0);
        assert!(matches!(too_long, Err(Error::UnstableGeometry { .. })));
        let err = derive_gaussian_params(
            &CavityGeometry {
                length: 90e-3,
                mean_curvature: 42.53e-3,
                astigmatism: 0.0,
                aspheric: 0.0,
                mirror_radius: None,
            },
            90e9,
        );
        assert!(err.is_err());
    }

    #[test]
    fn fsr_values() {
        assert_relative_eq!(free_spectral_range(45.44e-3), 3.2985e9, max_relative = 5e-4);
        assert_relative_eq!(free_spectral_range(47.15e-3), 3.1792e9, max_relative = 1e-4);
        // by definition: L = c/2 gives exactly 1 Hz
        assert_eq!(free_spectral_range(C / 2.0), 1.0);
    }

    #[test]
    fn finesse_values() {
        assert_relative_eq!(
            finesse_from_linewidth(55.1, free_spectral_range(45.44e-3)),
            5.99e7,
            max_relative = 5e-3
        );
        assert_relative_eq!(
            finesse_from_linewidth(54.7, free_spectral_range(47.15e-3)),
            5.81e7,
            max_relative = 5e-3
        );
        assert_eq!(finesse_from_linewidth(1.0, 1.0), 1.0);
    }

    #[test]
    fn alpha_relation() {
        for (l, r) in [(45.44, 42.53), (30.0, 40.0), (47.15, 42.53), (10.0, 42.0)] {
            let g = geom(l, r);
            let p = derive_gaussian_params(&g, 90e9).unwrap();
            let expected = (1.0 + (g.length / (2.0 * p.rayleigh_zr)).powi(2)).sqrt();
            assert_relative_eq!(p.mirror_spot_w1 / p.waist_w0, expected, max_relative = 1e-12);
            assert!(p.mirror_spot_w1 >= p.waist_w0);
        }
    }

    #[test]
    fn principal_curvatures_roundtrip() {
        let g = CavityGeometry::new(45.44e-3, 42.53e-3, 0.0175, 0.3).unwrap();
        let (rx, ry) = g.principal_curvatures();
        let harm = 2.0 * rx * ry / (rx + ry);
        assert_relative_eq!(harm, g.mean_curvature, max_relative = 1e-12);
        assert_relative_eq!((ry - rx) / (ry + rx), g.astigmatism, max_relative = 1e-12);
    }
}
