//! Randomized invariants over the pure-function core.

use fpcav::core::{derive_gaussian_params, rayleigh_range, CavityGeometry};
use fpcav::design::{mirror_radius_for_clip_target, numerical_aperture};
use fpcav::loss::{clipping_finesse, combine_losses};
use fpcav::spectrum::hybridize_two_level;
use proptest::prelude::*;

fn stable_geometry() -> impl Strategy<Value = CavityGeometry> {
    (-0.95f64..0.95, 0.01f64..0.2, -0.3f64..0.3, 0.0f64..1.5).prop_map(|(gbar, rbar, eta, pt)| {
        CavityGeometry::new(rbar * (1.0 - gbar), rbar, eta, pt).unwrap()
    })
}

proptest! {
    #[test]
    fn gbar_roundtrip(gbar in -0.999f64..0.999, rbar in 1e-3f64..1.0) {
        let g = CavityGeometry::new(rbar * (1.0 - gbar), rbar, 0.0, 0.0).unwrap();
        prop_assert!((g.gbar() - gbar).abs() < 1e-12);
    }

    #[test]
    fn rayleigh_monotone_in_gbar(rbar in 0.01f64..0.2, a in -0.99f64..0.0, b in -0.99f64..0.0) {
        let (lo, hi) = if a < b { (a, b) } else { (b, a) };
        prop_assume!(hi - lo > 1e-6);
        // compare at fixed length: zR(gbar) = (L/2) sqrt((1+g)/(1-g)) rises
        // with gbar on (-1, 0]
        let length = rbar;
        let g_lo = CavityGeometry::new(length, length / (1.0 - lo), 0.0, 0.0).unwrap();
        let g_hi = CavityGeometry::new(length, length / (1.0 - hi), 0.0, 0.0).unwrap();
        prop_assert!(rayleigh_range(&g_lo).unwrap() < rayleigh_range(&g_hi).unwrap());
    }

    #[test]
    fn expansion_ratio_identity(geom in stable_geometry(), f_ghz in 30f64..300.0) {
        let p = derive_gaussian_params(&geom, f_ghz * 1e9).unwrap();
        let expected = (1.0 + (geom.length / (2.0 * p.rayleigh_zr)).powi(2)).sqrt();
        prop_assert!((p.mirror_spot_w1 / p.waist_w0 / expected - 1.0).abs() < 1e-12);
        prop_assert!(p.mirror_spot_w1 >= p.waist_w0);
    }

    #[test]
    fn hybridize_invariants(w0 in 1e9f64..1e12, delta in -1e8f64..1e8, v in 0f64..1e8) {
        let ((up, lo), (fu, fl)) = hybridize_two_level(w0, delta, v).unwrap();
        // fractions sum to one exactly
        prop_assert!((fu + fl - 1.0).abs() < 1e-15);
        // level repulsion: dressed levels bracket the bare pair
        prop_assert!(up >= w0 + delta.abs() - 1e-6);
        prop_assert!(lo <= w0 - delta.abs() + 1e-6);
    }

    #[test]
    fn loss_combination_permutation(f1 in 1e6f64..1e10, f2 in 1e6f64..1e10, f3 in 1e6f64..1e10) {
        let a = combine_losses(&[("a".into(), f1), ("b".into(), f2), ("c".into(), f3)]).unwrap();
        let b = combine_losses(&[("c".into(), f3), ("a".into(), f1), ("b".into(), f2)]).unwrap();
        prop_assert!((a.total_finesse - b.total_finesse).abs() <= 1e-12 * a.total_finesse);
        // the combination never exceeds the weakest channel
        prop_assert!(a.total_finesse <= f1.min(f2).min(f3) + 1e-9);
    }

    #[test]
    fn clip_inverse_roundtrip(w in 1e-4f64..0.05, f in 10f64..1e12) {
        prop_assume!(f > 4.0);
        let rm = mirror_radius_for_clip_target(w, f).unwrap();
        prop_assert!((clipping_finesse(rm, w) / f - 1.0).abs() < 1e-12);
    }

    #[test]
    fn na_scale_invariance(geom in stable_geometry(), s in 1e-2f64..1e3, frac in 0.05f64..0.5) {
        let rm = frac * geom.mean_curvature;
        let (na, enc) = numerical_aperture(&geom, rm).unwrap();
        let scaled = CavityGeometry::new(
            geom.length * s,
            geom.mean_curvature * s,
            geom.astigmatism,
            geom.aspheric,
        )
        .unwrap();
        let (na_s, enc_s) = numerical_aperture(&scaled, rm * s).unwrap();
        prop_assert_eq!(enc, enc_s);
        prop_assert!((na - na_s).abs() < 1e-12);
    }

    #[test]
    fn mode_volume_positive_and_scales(geom in stable_geometry(), f_ghz in 30f64..300.0) {
        let p = derive_gaussian_params(&geom, f_ghz * 1e9).unwrap();
        let v = p.mode_volume(geom.length);
        prop_assert!(v > 0.0);
        // doubling the frequency halves w0^2 and the volume
        let p2 = derive_gaussian_params(&geom, 2.0 * f_ghz * 1e9).unwrap();
        let v2 = p2.mode_volume(geom.length);
        prop_assert!((v2 / v - 0.5).abs() < 1e-9);
    }
}
