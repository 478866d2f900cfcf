//! Property tests for the simulator invariants.

use array_sim::{
    draw_multipath, steering_vector, wrap_angle, ArrayConfig, GridMap, NoiseSpec,
};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use std::f64::consts::PI;

fn cfg_with(m: usize, spacing: f64) -> ArrayConfig {
    ArrayConfig {
        num_antennas: m,
        carrier_frequency: 1e9,
        element_spacing: spacing,
        origin: (0.0, 0.0),
        normal_angle: PI / 4.0,
    }
}

proptest! {
    #[test]
    fn steering_elements_have_unit_modulus(
        theta in -PI..PI,
        spacing in 0.05f64..2.0,
        m in 2usize..9,
    ) {
        let a = steering_vector(theta, &cfg_with(m, spacing));
        for e in a.iter() {
            prop_assert!((e.norm() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn wrapped_angles_land_in_half_open_interval(a in -50.0f64..50.0) {
        let w = wrap_angle(a);
        prop_assert!(w > -PI - 1e-12 && w <= PI + 1e-12);
        // Same direction modulo a full turn.
        prop_assert!(((w - a).rem_euclid(2.0 * PI)).min((a - w).rem_euclid(2.0 * PI)) < 1e-9);
    }

    #[test]
    fn scattered_delays_are_never_negative(
        seed in any::<u64>(),
        q in 1usize..=36,
        sigma_a in 0.0f64..1.0,
        ds_ratio in 0.0f64..5.0,
    ) {
        let cfg = cfg_with(5, 0.5);
        let grid = GridMap::rectangular(6, 6, 1.0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let chan = draw_multipath(q, &grid, &cfg, 10, sigma_a, ds_ratio, &mut rng).unwrap();
        for p in &chan.paths {
            prop_assert!(p.delay >= 0.0);
        }
        prop_assert_eq!(chan.paths.len(), 11);
    }

    #[test]
    fn ten_more_db_always_means_ten_times_less_gaussian_variance(snr in -20.0f64..40.0) {
        let lo = NoiseSpec::gaussian(snr);
        let hi = NoiseSpec::gaussian(snr + 10.0);
        let ratio = lo.sigma_n2() / hi.sigma_n2();
        prop_assert!((ratio - 10.0).abs() < 1e-10);
    }
}
