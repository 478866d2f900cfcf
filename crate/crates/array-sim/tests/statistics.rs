//! Statistical validation of the simulator against closed-form targets:
//! moment checks for the channel draws, law-of-large-numbers checks for the
//! Gaussian branch, and characteristic-function checks for the alpha-stable
//! branch.

use array_sim::{
    bearing_from_array, draw_multipath, gen_noise, synthesize_block, ArrayConfig, GridMap,
    NoiseSpec,
};
use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use std::f64::consts::PI;

fn test_array() -> ArrayConfig {
    ArrayConfig {
        num_antennas: 5,
        carrier_frequency: 1e9,
        element_spacing: 0.5,
        origin: (0.0, 0.0),
        normal_angle: PI / 4.0,
    }
}

/// Empirical characteristic function E exp(j Re(conj(t) z)) evaluated along
/// the real axis of t; isotropy makes the direction irrelevant.
fn empirical_cf(samples: &[Complex64], t: f64) -> f64 {
    samples.iter().map(|z| (t * z.re).cos()).sum::<f64>() / samples.len() as f64
}

#[test]
fn scattered_aoa_std_matches_angular_spread() {
    let cfg = test_array();
    let grid = GridMap::rectangular(6, 6, 1.0).unwrap();
    let sigma_a = PI / 6.0;
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut aoas = Vec::new();
    let mut delays = Vec::new();
    let mut caoa = 0.0;
    let mut mean_delay = 0.0;
    let mut delay_spread = 0.0;
    // 10_000 channels x 10 scatter paths = 1e5 draws.
    for _ in 0..10_000 {
        let chan = draw_multipath(22, &grid, &cfg, 10, sigma_a, 0.1, &mut rng).unwrap();
        caoa = chan.caoa;
        mean_delay = chan.mean_delay;
        delay_spread = chan.delay_spread;
        for p in chan.paths.iter().skip(1) {
            aoas.push(p.aoa);
            delays.push(p.delay);
        }
    }
    let n = aoas.len() as f64;
    let mean = aoas.iter().sum::<f64>() / n;
    let std = (aoas.iter().map(|a| (a - mean).powi(2)).sum::<f64>() / n).sqrt();
    assert!(
        (std - sigma_a).abs() / sigma_a < 0.02,
        "AoA std {std} vs spread {sigma_a}"
    );
    assert!((mean - caoa).abs() < 0.01, "AoA mean {mean} vs caoa {caoa}");

    let dmean = delays.iter().sum::<f64>() / n;
    let dstd = (delays.iter().map(|d| (d - dmean).powi(2)).sum::<f64>() / n).sqrt();
    assert!(
        (dstd - delay_spread).abs() / delay_spread < 0.02,
        "delay std {dstd} vs spread {delay_spread}"
    );
    assert!((dmean - mean_delay).abs() / mean_delay < 0.01);
}

#[test]
fn scattered_gain_power_matches_los_power() {
    let cfg = test_array();
    let grid = GridMap::rectangular(6, 6, 1.0).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    let mut total = 0.0;
    let trials = 20_000;
    for _ in 0..trials {
        let chan = draw_multipath(8, &grid, &cfg, 10, PI / 6.0, 0.1, &mut rng).unwrap();
        total += chan
            .paths
            .iter()
            .skip(1)
            .map(|p| p.gain.norm_sqr())
            .sum::<f64>();
    }
    let mean_scattered_power = total / trials as f64;
    assert!(
        (mean_scattered_power - 1.0).abs() < 0.03,
        "total scattered power {mean_scattered_power} should match unit LOS power"
    );
}

#[test]
fn gaussian_noise_variance_obeys_law_of_large_numbers() {
    // snr 0 dB with sigma_s2 = 1 gives sigma_n2 = 1.
    let spec = NoiseSpec::gaussian(0.0);
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    let noise = gen_noise(&spec, 2, 100_000, &mut rng).unwrap();
    for i in 0..2 {
        let var = noise.row(i).iter().map(|z| z.norm_sqr()).sum::<f64>() / 100_000.0;
        assert!(
            (var - 1.0).abs() < 0.03,
            "antenna {i} sample variance {var} should be within 3% of 1"
        );
    }
}

#[test]
fn alpha_stable_cf_matches_dispersion_target() {
    // ECF of isotropic SaS must be exp(-gamma |t|^alpha); gamma = 1 at 0 dB.
    let spec = NoiseSpec::alpha_stable(0.0, 1.4).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(19);
    let noise = gen_noise(&spec, 1, 100_000, &mut rng).unwrap();
    let samples: Vec<Complex64> = noise.iter().copied().collect();
    for t in [0.5f64, 1.0, 2.0] {
        let target = (-t.powf(1.4)).exp();
        let emp = empirical_cf(&samples, t);
        assert!(
            (emp - target).abs() < 0.05,
            "alpha=1.4 ECF at t={t}: {emp} vs {target}"
        );
    }
}

#[test]
fn alpha_stable_cf_holds_at_weaker_dispersion() {
    // gamma = 10^(-6/10) at 6 dB.
    let spec = NoiseSpec::alpha_stable(6.0, 1.4).unwrap();
    let gamma = spec.gamma();
    let mut rng = ChaCha8Rng::seed_from_u64(23);
    let noise = gen_noise(&spec, 1, 100_000, &mut rng).unwrap();
    let samples: Vec<Complex64> = noise.iter().copied().collect();
    for t in [0.5f64, 1.0, 2.0] {
        let target = (-gamma * t.powf(1.4)).exp();
        let emp = empirical_cf(&samples, t);
        assert!(
            (emp - target).abs() < 0.05,
            "alpha=1.4 gamma={gamma} ECF at t={t}: {emp} vs {target}"
        );
    }
}

#[test]
fn alpha_two_branch_matches_gaussian_scale() {
    let spec = NoiseSpec::alpha_stable(0.0, 2.0).unwrap();
    let gamma = spec.gamma();
    let mut rng = ChaCha8Rng::seed_from_u64(29);
    let noise = gen_noise(&spec, 1, 100_000, &mut rng).unwrap();
    let samples: Vec<Complex64> = noise.iter().copied().collect();

    // Mean power of the matching complex Gaussian is 4 gamma.
    let power = samples.iter().map(|z| z.norm_sqr()).sum::<f64>() / samples.len() as f64;
    assert!(
        (power - 4.0 * gamma).abs() / (4.0 * gamma) < 0.03,
        "alpha=2 power {power} vs 4*gamma {}",
        4.0 * gamma
    );
    for t in [0.5, 1.0, 2.0] {
        let target = (-gamma * t * t).exp();
        let emp = empirical_cf(&samples, t);
        assert!(
            (emp - target).abs() < 0.02,
            "alpha=2 ECF at t={t}: {emp} vs {target}"
        );
    }
}

#[test]
fn measured_snr_within_one_db_of_requested() {
    let cfg = test_array();
    let grid = GridMap::rectangular(6, 6, 1.0).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(31);
    let chan = draw_multipath(15, &grid, &cfg, 10, PI / 6.0, 0.1, &mut rng).unwrap();
    let spec = NoiseSpec::gaussian(30.0);
    let l = 100_000;
    let block = synthesize_block(&chan, &cfg, l, &spec, 77).unwrap();
    let sigma_s2 = block.noise.sigma_s2;
    let total_power = block.samples.iter().map(|z| z.norm_sqr()).sum::<f64>()
        / (block.num_antennas() * l) as f64;
    let noise_power = total_power - sigma_s2;
    assert!(noise_power > 0.0, "noise power estimate {noise_power}");
    let snr_emp = 10.0 * (sigma_s2 / noise_power).log10();
    assert!(
        (snr_emp - 30.0).abs() < 1.0,
        "empirical SNR {snr_emp} dB should be within 1 dB of 30"
    );
}

#[test]
fn zero_spread_noiseless_covariance_is_rank_one() {
    let cfg = test_array();
    let grid = GridMap::rectangular(6, 6, 1.0).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(37);
    let chan = draw_multipath(29, &grid, &cfg, 10, 0.0, 0.0, &mut rng).unwrap();
    let spec = NoiseSpec::gaussian(f64::INFINITY);
    let l = 256;
    let block = synthesize_block(&chan, &cfg, l, &spec, 5).unwrap();

    let m = cfg.num_antennas;
    // Sample covariance computed inline as an independent oracle.
    let mut cov = vec![vec![Complex64::new(0.0, 0.0); m]; m];
    for t in 0..l {
        for i in 0..m {
            for k in 0..m {
                cov[i][k] += block.samples[(i, t)] * block.samples[(k, t)].conj();
            }
        }
    }
    // Expected rank-one form (sum of gains)(sum of gains)* a a^H; the common
    // carrier rotation exp(-j 2 pi f_c tau_0) cancels inside the modulus.
    let gain_sum: Complex64 = chan.paths.iter().map(|p| p.gain).sum();
    let a = array_sim::steering_vector(chan.caoa, &cfg);
    let mut num = 0.0;
    let mut den = 0.0;
    for i in 0..m {
        for k in 0..m {
            let expected = gain_sum * gain_sum.conj() * a[i] * a[k].conj();
            let got = cov[i][k] / l as f64;
            num += (got - expected).norm_sqr();
            den += expected.norm_sqr();
        }
    }
    let rel = (num / den).sqrt();
    assert!(rel < 1e-10, "relative covariance error {rel}");
}

#[test]
fn bearing_is_relative_to_the_stated_normal() {
    let mut cfg = test_array();
    cfg.normal_angle = 0.0;
    let b = bearing_from_array(&cfg, (0.0, 2.0));
    assert!((b - PI / 2.0).abs() < 1e-12);
}
