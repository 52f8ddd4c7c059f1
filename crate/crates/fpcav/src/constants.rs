//! Physical constants, CODATA 2018 values, SI units throughout.

/// Speed of light in vacuum, m/s (exact).
pub const C: f64 = 299_792_458.0;
/// Planck constant, J s (exact).
pub const H: f64 = 6.626_070_15e-34;
/// Reduced Planck constant, J s.
pub const HBAR: f64 = H / (2.0 * std::f64::consts::PI);
/// Boltzmann constant, J/K (exact).
pub const K_B: f64 = 1.380_649e-23;
/// Vacuum permittivity, F/m.
pub const EPS_0: f64 = 8.854_187_812_8e-12;
/// Vacuum permeability, H/m.
pub const MU_0: f64 = 1.256_637_062_12e-6;
/// Elementary charge, C (exact).
pub const E_CHARGE: f64 = 1.602_176_634e-19;
/// Bohr radius, m.
pub const A_0: f64 = 5.291_772_109_03e-11;
/// Rydberg constant, 1/m.
pub const RYDBERG: f64 = 10_973_731.568_160;
/// Impedance of free space, ohms (mu0 * c).
pub const Z_0: f64 = MU_0 * C;
/// Magnetic flux quantum h/2e, Wb.
pub const PHI_0: f64 = H / (2.0 * E_CHARGE);
/// Two pi, for Hz <-> rad/s conversions.
pub const TAU: f64 = std::f64::consts::TAU;

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn derived_constants() {
        assert!((Z_0 - 376.730_313_668).abs() < 1e-6);
        assert!((PHI_0 - 2.067_833_848e-15).abs() < 1e-24);
        assert!((HBAR - 1.054_571_817e-34).abs() < 1e-43);
    }
}
