//! Design-space exploration: mirror sizing from a clipping-finesse target,
//! sagitta-aware transverse numerical aperture, and the (L/zR, zR/lambda)
//! map of achievable optical access.

use crate::core::{derive_gaussian_params, CavityGeometry};
use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};

/// One cell of the design map.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct DesignPoint {
    pub l_over_zr: f64,
    pub zr_over_lambda: f64,
    pub clip_target_f: f64,
    /// Mirror radius sized to the clipping target, m.
    pub mirror_radius: f64,
    pub numerical_aperture: f64,
    /// Cavity length normalized to the wavelength.
    pub length_over_lambda: f64,
    /// False when the cell is outside the stability region or the sagitta
    /// is undefined (mirror larger than its curvature radius).
    pub valid: bool,
    /// True when the mirrors enclose the midplane (NA reported as 0).
    pub enclosed: bool,
}

/// Mirror radius that pins the clipping finesse at `f_clip`:
/// rm = w sqrt(ln(F/pi)/2), the inverse of `clipping_finesse`.
pub fn mirror_radius_for_clip_target(spot_w1: f64, f_clip: f64) -> Result<f64> {
    if !(f_clip > std::f64::consts::PI) {
        return Err(Error::Invalid(format!(
            "clip target {f_clip} must exceed the fully-clipped limit pi"
        )));
    }
    if !(spot_w1 > 0.0) {
        return Err(Error::Invalid(format!("spot size must be > 0, got {spot_w1}")));
    }
    Ok(spot_w1 * ((f_clip / std::f64::consts::PI).ln() / 2.0).sqrt())
}

/// Transverse numerical aperture left open by the mirrors: the cone from
/// the cavity center, transverse axis, grazing the mirror edge at
/// transverse radius `rm` and axial position L/2 - sagitta, where
/// sagitta = Rbar - sqrt(Rbar^2 - rm^2) for a spherical cap.
///
/// Returns (NA, enclosed): when the mirror caps reach past the midplane
/// (edge z <= 0) the aperture closes and NA is reported as 0 with the flag
/// set.
pub fn numerical_aperture(geometry: &CavityGeometry, mirror_radius: f64) -> Result<(f64, bool)> {
    geometry.validate()?;
    let rbar = geometry.mean_curvature;
    if mirror_radius > rbar {
        return Err(Error::Domain(format!(
            "mirror radius {mirror_radius} exceeds the curvature radius {rbar}; sagitta undefined"
        )));
    }
    if !(mirror_radius > 0.0) {
        return Err(Error::Invalid(format!("mirror radius must be > 0, got {mirror_radius}")));
    }
    let sagitta = rbar - (rbar * rbar - mirror_radius * mirror_radius).sqrt();
    let z_edge = geometry.length / 2.0 - sagitta;
    if z_edge <= 0.0 {
        return Ok((0.0, true));
    }
    Ok(((z_edge / mirror_radius).atan().sin(), false))
}

/// Flat-edge variant ignoring the sagitta; kept for comparison with the
/// sagitta-aware default.
pub fn numerical_aperture_flat_edge(geometry: &CavityGeometry, mirror_radius: f64) -> Result<f64> {
    geometry.validate()?;
    let z_edge = geometry.length / 2.0;
    Ok((z_edge / mirror_radius).atan().sin())
}

/// Reconstruct a cavity geometry from the dimensionless design coordinates
/// at wavelength `lambda`.
pub fn geometry_from_design(l_over_zr: f64, zr_over_lambda: f64, lambda: f64) -> Result<CavityGeometry> {
    if !(l_over_zr > 0.0 && zr_over_lambda > 0.0 && lambda > 0.0) {
        return Err(Error::Invalid("design coordinates must be positive".into()));
    }
    let zr = zr_over_lambda * lambda;
    let length = l_over_zr * zr;
    // zR = (L/2) sqrt((1+g)/(1-g)) inverts to g = (u - 1)/(u + 1) with
    // u = (2 zR / L)^2
    let u = (2.0 * zr / length).powi(2);
    let gbar = (u - 1.0) / (u + 1.0);
    if !(gbar > -1.0 && gbar < 1.0) {
        return Err(Error::UnstableGeometry { gbar });
    }
    CavityGeometry::new(length, length / (1.0 - gbar), 0.0, 0.0)
}

/// Evaluate one design cell: size the mirrors for the clipping target at
/// the given wavelength, then compute the remaining aperture.
pub fn design_point(
    l_over_zr: f64,
    zr_over_lambda: f64,
    f_clip: f64,
    lambda: f64,
) -> DesignPoint {
    let invalid = DesignPoint {
        l_over_zr,
        zr_over_lambda,
        clip_target_f: f_clip,
        mirror_radius: f64::NAN,
        numerical_aperture: f64::NAN,
        length_over_lambda: l_over_zr * zr_over_lambda,
        valid: false,
        enclosed: false,
    };
    let Ok(geometry) = geometry_from_design(l_over_zr, zr_over_lambda, lambda) else {
        return invalid;
    };
    let freq = crate::constants::C / lambda;
    let Ok(params) = derive_gaussian_params(&geometry, freq) else {
        return invalid;
    };
    let Ok(rm) = mirror_radius_for_clip_target(params.mirror_spot_w1, f_clip) else {
        return invalid;
    };
    match numerical_aperture(&geometry, rm) {
        Ok((na, enclosed)) => DesignPoint {
            l_over_zr,
            zr_over_lambda,
            clip_target_f: f_clip,
            mirror_radius: rm,
            numerical_aperture: na,
            length_over_lambda: geometry.length / lambda,
            valid: true,
            enclosed,
        },
        Err(_) => invalid,
    }
}

/// Dense map over the two dimensionless grids. Cells outside the stability
/// region or with undefined sagitta are marked invalid rather than failing
/// the whole map.
pub fn design_map(
    l_over_zr_grid: &[f64],
    zr_over_lambda_grid: &[f64],
    f_clip: f64,
    lambda: f64,
) -> Vec<DesignPoint> {
    let mut out = Vec::with_capacity(l_over_zr_grid.len() * zr_over_lambda_grid.len());
    for &x in l_over_zr_grid {
        for &y in zr_over_lambda_grid {
            out.push(design_point(x, y, f_clip, lambda));
        }
    }
    out
}
