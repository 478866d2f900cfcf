//! Multi-antenna multipath signal simulator on a spatial grid.
//!
//! A uniform linear array observes a narrowband transmitter placed at one of
//! Q grid centers. The channel is a line-of-sight path plus a configurable
//! number of scattered paths with uniform angular and delay spread; the
//! received snapshots are corrupted by either white Gaussian noise or
//! isotropic symmetric alpha-stable (impulsive) noise.
//!
//! The narrowband model realizes each path delay as a carrier-phase rotation,
//! so a snapshot is
//!
//!   y(t) = sum_i gain_i * exp(-j 2 pi f_c tau_i) * a(theta_i) * s(t) + n(t)
//!
//! with a shared unit-modulus symbol stream s(t). All randomness flows
//! through explicit seeded generators, so every block is reproducible.

use ndarray::{Array1, Array2};
use num_complex::Complex64;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp1, StandardNormal};
use std::f64::consts::PI;
use thiserror::Error;

/// Propagation speed used to convert distances to delays, in m/s.
pub const SPEED_OF_LIGHT: f64 = 299_792_458.0;

/// Errors raised by simulator inputs that violate their invariants.
#[derive(Debug, Error)]
pub enum SimError {
    #[error("array config invalid: {0}")]
    InvalidArrayConfig(String),
    #[error("grid map invalid: {0}")]
    InvalidGridMap(String),
    #[error("grid index {index} out of range 1..={num_grids}")]
    GridIndexOutOfRange { index: usize, num_grids: usize },
    #[error("noise spec invalid: {0}")]
    InvalidNoiseSpec(String),
    #[error("snapshot block invalid: {0}")]
    InvalidBlock(String),
}

// ─── Array geometry ──────────────────────────────────────────────────────────

/// Uniform linear array geometry and carrier parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct ArrayConfig {
    /// Number of antenna elements M.
    pub num_antennas: usize,
    /// Carrier frequency in Hz.
    pub carrier_frequency: f64,
    /// Element spacing as a fraction of the carrier wavelength (d/lambda).
    pub element_spacing: f64,
    /// Array position (x, y) in meters.
    pub origin: (f64, f64),
    /// World-frame direction of the array broadside, in radians.
    pub normal_angle: f64,
}

impl ArrayConfig {
    pub fn validate(&self) -> Result<(), SimError> {
        if self.num_antennas < 2 {
            return Err(SimError::InvalidArrayConfig(format!(
                "num_antennas must be >= 2, got {}",
                self.num_antennas
            )));
        }
        if !(self.carrier_frequency > 0.0) || !self.carrier_frequency.is_finite() {
            return Err(SimError::InvalidArrayConfig(format!(
                "carrier_frequency must be a positive finite Hz value, got {}",
                self.carrier_frequency
            )));
        }
        if !(self.element_spacing > 0.0) || !self.element_spacing.is_finite() {
            return Err(SimError::InvalidArrayConfig(format!(
                "element_spacing must be a positive finite wavelength fraction, got {}",
                self.element_spacing
            )));
        }
        if !self.origin.0.is_finite() || !self.origin.1.is_finite() || !self.normal_angle.is_finite()
        {
            return Err(SimError::InvalidArrayConfig(
                "origin and normal_angle must be finite".into(),
            ));
        }
        Ok(())
    }
}

/// Ordered set of candidate positions; localization is classification over
/// the 1-based grid index.
#[derive(Debug, Clone, PartialEq)]
pub struct GridMap {
    centers: Vec<(f64, f64)>,
    spacing: f64,
}

impl GridMap {
    /// Builds a map from explicit center coordinates (meters). Centers must
    /// be distinct and the spacing positive.
    pub fn new(centers: Vec<(f64, f64)>, spacing: f64) -> Result<Self, SimError> {
        if centers.is_empty() {
            return Err(SimError::InvalidGridMap("no grid centers".into()));
        }
        if !(spacing > 0.0) || !spacing.is_finite() {
            return Err(SimError::InvalidGridMap(format!(
                "spacing must be positive and finite, got {spacing}"
            )));
        }
        for (i, c) in centers.iter().enumerate() {
            if !c.0.is_finite() || !c.1.is_finite() {
                return Err(SimError::InvalidGridMap(format!(
                    "center {} is not finite",
                    i + 1
                )));
            }
            for other in centers.iter().skip(i + 1) {
                if c == other {
                    return Err(SimError::InvalidGridMap(format!(
                        "duplicate center ({}, {})",
                        c.0, c.1
                    )));
                }
            }
        }
        Ok(Self { centers, spacing })
    }

    /// Rectangular nx-by-ny map with cell centers at ((ix+0.5)s, (iy+0.5)s).
    /// Numbering is row-major with x varying fastest: q = iy*nx + ix + 1.
    pub fn rectangular(nx: usize, ny: usize, spacing: f64) -> Result<Self, SimError> {
        if nx == 0 || ny == 0 {
            return Err(SimError::InvalidGridMap("grid must be non-empty".into()));
        }
        let mut centers = Vec::with_capacity(nx * ny);
        for iy in 0..ny {
            for ix in 0..nx {
                centers.push(((ix as f64 + 0.5) * spacing, (iy as f64 + 0.5) * spacing));
            }
        }
        Self::new(centers, spacing)
    }

    pub fn num_grids(&self) -> usize {
        self.centers.len()
    }

    pub fn spacing(&self) -> f64 {
        self.spacing
    }

    /// Center coordinates of grid q (1-based).
    pub fn center(&self, q: usize) -> Result<(f64, f64), SimError> {
        if q == 0 || q > self.centers.len() {
            return Err(SimError::GridIndexOutOfRange {
                index: q,
                num_grids: self.centers.len(),
            });
        }
        Ok(self.centers[q - 1])
    }
}

// ─── Channel model ────────────────────────────────────────────────────────────

/// One propagation path: complex gain, angle of arrival, absolute delay.
#[derive(Debug, Clone, PartialEq)]
pub struct PathComponent {
    /// Complex path gain alpha_i.
    pub gain: Complex64,
    /// Angle of arrival relative to the array broadside, radians.
    pub aoa: f64,
    /// Propagation delay in seconds (never negative).
    pub delay: f64,
}

/// Multipath channel realization for one grid point. The first path is the
/// line-of-sight path at (caoa, mean_delay).
#[derive(Debug, Clone, PartialEq)]
pub struct MultipathChannel {
    /// Grid index this channel belongs to (1-based).
    pub grid: usize,
    /// LOS path followed by the scattered paths.
    pub paths: Vec<PathComponent>,
    /// Central angle of arrival theta_0 (bearing of the grid center).
    pub caoa: f64,
    /// Mean delay tau_0 = distance / c.
    pub mean_delay: f64,
    /// Angular spread sigma_A in radians.
    pub angular_spread: f64,
    /// Delay spread sigma_D in seconds.
    pub delay_spread: f64,
}

/// Steering vector of the uniform linear array.
///
/// Element m (1-based) is exp(-j 2 pi (m-1) (d/lambda) sin theta), with theta
/// measured from the array broadside. Elements are isotropic, so every entry
/// has unit modulus.
pub fn steering_vector(theta: f64, cfg: &ArrayConfig) -> Array1<Complex64> {
    let phase_step = -2.0 * PI * cfg.element_spacing * theta.sin();
    Array1::from_iter(
        (0..cfg.num_antennas).map(|m| Complex64::from_polar(1.0, phase_step * m as f64)),
    )
}

/// Wraps an angle to (-pi, pi].
pub fn wrap_angle(a: f64) -> f64 {
    let mut w = a.rem_euclid(2.0 * PI);
    if w > PI {
        w -= 2.0 * PI;
    }
    w
}

/// Bearing of a point relative to the array broadside, in (-pi, pi].
pub fn bearing_from_array(cfg: &ArrayConfig, point: (f64, f64)) -> f64 {
    let azimuth = (point.1 - cfg.origin.1).atan2(point.0 - cfg.origin.0);
    wrap_angle(azimuth - cfg.normal_angle)
}

/// Draws a multipath channel for grid q.
///
/// The LOS path sits at the geometric bearing theta_0 with delay
/// tau_0 = distance/c and unit gain. Scattered angles are uniform on
/// [theta_0 - sqrt(3) sigma_a, theta_0 + sqrt(3) sigma_a] and scattered
/// delays uniform on [tau_0 - sqrt(3) sigma_d, tau_0 + sqrt(3) sigma_d]
/// clipped at zero, where sigma_d = ds_ratio * tau_0; the half-width
/// sqrt(3) sigma makes the standard deviations equal sigma_a and sigma_d
/// exactly. Scattered gains are circular complex Gaussian with per-path
/// variance 1/num_scatter_paths, so total scattered power matches LOS power.
///
/// Draw order per scattered path is pinned (angle, delay, gain re, gain im)
/// so a seeded generator reproduces the channel bit for bit.
pub fn draw_multipath<R: Rng>(
    q: usize,
    grid: &GridMap,
    cfg: &ArrayConfig,
    num_scatter_paths: usize,
    sigma_a: f64,
    ds_ratio: f64,
    rng: &mut R,
) -> Result<MultipathChannel, SimError> {
    cfg.validate()?;
    if !(sigma_a >= 0.0) || !(ds_ratio >= 0.0) {
        return Err(SimError::InvalidGridMap(format!(
            "spreads must be non-negative, got sigma_a={sigma_a} ds_ratio={ds_ratio}"
        )));
    }
    let center = grid.center(q)?;
    let caoa = bearing_from_array(cfg, center);
    let dx = center.0 - cfg.origin.0;
    let dy = center.1 - cfg.origin.1;
    let mean_delay = dx.hypot(dy) / SPEED_OF_LIGHT;
    let delay_spread = ds_ratio * mean_delay;
    let half_a = 3.0_f64.sqrt() * sigma_a;
    let half_d = 3.0_f64.sqrt() * delay_spread;

    let mut paths = Vec::with_capacity(1 + num_scatter_paths);
    paths.push(PathComponent {
        gain: Complex64::new(1.0, 0.0),
        aoa: caoa,
        delay: mean_delay,
    });
    let gain_component_std = if num_scatter_paths > 0 {
        (1.0 / (2.0 * num_scatter_paths as f64)).sqrt()
    } else {
        0.0
    };
    for _ in 0..num_scatter_paths {
        let ua: f64 = rng.gen();
        let ud: f64 = rng.gen();
        let gr: f64 = StandardNormal.sample(rng);
        let gi: f64 = StandardNormal.sample(rng);
        paths.push(PathComponent {
            gain: Complex64::new(gr * gain_component_std, gi * gain_component_std),
            aoa: caoa + (2.0 * ua - 1.0) * half_a,
            delay: (mean_delay + (2.0 * ud - 1.0) * half_d).max(0.0),
        });
    }
    Ok(MultipathChannel {
        grid: q,
        paths,
        caoa,
        mean_delay,
        angular_spread: sigma_a,
        delay_spread,
    })
}

// ─── Noise model ─────────────────────────────────────────────────────────────

/// Noise family of a snapshot block.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum NoiseKind {
    /// Circular complex white Gaussian noise.
    GaussianWhite,
    /// Isotropic symmetric alpha-stable noise with characteristic
    /// exponent alpha in (0, 2].
    SymmetricAlphaStable { alpha: f64 },
}

/// Noise model plus the bookkeeping needed to turn an SNR into a scale.
///
/// Gaussian noise variance is sigma_n^2 = sigma_s^2 * 10^(-snr/10), where
/// sigma_s^2 is the average noiseless received power per antenna. The
/// alpha-stable dispersion is gamma = E{|s|^2} * 10^(-snr/10) referenced to
/// the unit transmit power E{|s|^2} = 1, so it does not depend on sigma_s^2.
#[derive(Debug, Clone, PartialEq)]
pub struct NoiseSpec {
    /// Noise family.
    pub kind: NoiseKind,
    /// Signal-to-noise ratio in dB (+inf means noiseless).
    pub snr_db: f64,
    /// Average noiseless received power per antenna (sigma_s^2).
    pub sigma_s2: f64,
}

impl NoiseSpec {
    /// Gaussian spec with a unit signal-power placeholder; `synthesize_block`
    /// replaces `sigma_s2` with the measured per-antenna power.
    pub fn gaussian(snr_db: f64) -> Self {
        Self {
            kind: NoiseKind::GaussianWhite,
            snr_db,
            sigma_s2: 1.0,
        }
    }

    /// Symmetric alpha-stable spec; alpha must lie in (0, 2].
    pub fn alpha_stable(snr_db: f64, alpha: f64) -> Result<Self, SimError> {
        let spec = Self {
            kind: NoiseKind::SymmetricAlphaStable { alpha },
            snr_db,
            sigma_s2: 1.0,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<(), SimError> {
        if self.snr_db.is_nan() || self.snr_db == f64::NEG_INFINITY {
            return Err(SimError::InvalidNoiseSpec(format!(
                "snr_db must not be NaN or -inf, got {}",
                self.snr_db
            )));
        }
        if !(self.sigma_s2 > 0.0) || !self.sigma_s2.is_finite() {
            return Err(SimError::InvalidNoiseSpec(format!(
                "sigma_s2 must be positive and finite, got {}",
                self.sigma_s2
            )));
        }
        if let NoiseKind::SymmetricAlphaStable { alpha } = self.kind {
            if !(alpha > 0.0 && alpha <= 2.0) {
                return Err(SimError::InvalidNoiseSpec(format!(
                    "alpha must lie in (0, 2], got {alpha}"
                )));
            }
        }
        Ok(())
    }

    /// Gaussian noise variance per complex sample.
    pub fn sigma_n2(&self) -> f64 {
        self.sigma_s2 * 10f64.powf(-self.snr_db / 10.0)
    }

    /// Alpha-stable dispersion, referenced to unit transmit power.
    pub fn gamma(&self) -> f64 {
        10f64.powf(-self.snr_db / 10.0)
    }
}

/// Standard totally right-skewed stable variate S_a(1, beta=1, 0) for
/// 0 < a < 1 via the Chambers-Mallows-Stuck construction. Its Laplace
/// transform is E exp(-u X) = exp(-u^a / cos(pi a / 2)).
fn sample_positive_stable<R: Rng>(a: f64, rng: &mut R) -> f64 {
    debug_assert!(a > 0.0 && a < 1.0);
    let beta = 1.0;
    let tan_half = (PI * a / 2.0).tan();
    let b = (beta * tan_half).atan() / a;
    let s = (1.0 + beta * beta * tan_half * tan_half).powf(1.0 / (2.0 * a));
    // V uniform on (-pi/2, pi/2), W standard exponential; both kept away
    // from the degenerate endpoints.
    let u: f64 = rng.gen::<f64>().max(1e-16);
    let v = (u - 0.5) * PI;
    let w: f64 = {
        let e: f64 = Exp1.sample(rng);
        e.max(1e-300)
    };
    let x = s * (a * (v + b)).sin() / v.cos().powf(1.0 / a)
        * ((v - a * (v + b)).cos() / w).powf((1.0 - a) / a);
    x.max(0.0)
}

/// Generates an M-by-L matrix of i.i.d. complex noise samples.
///
/// Gaussian: circular complex Gaussian with total variance sigma_n^2 per
/// sample. Alpha-stable: isotropic complex SaS built as Z = sqrt(A) (G1 + j G2)
/// with A a totally skewed (alpha/2)-stable positive variate scaled so the
/// characteristic function is E exp(j Re(conj(t) Z)) = exp(-gamma |t|^alpha).
/// The alpha = 2 branch is exactly Gaussian with the matching scale.
pub fn gen_noise<R: Rng>(
    spec: &NoiseSpec,
    m: usize,
    l: usize,
    rng: &mut R,
) -> Result<Array2<Complex64>, SimError> {
    spec.validate()?;
    let mut out = Array2::<Complex64>::zeros((m, l));
    match spec.kind {
        NoiseKind::GaussianWhite => {
            let comp_std = (spec.sigma_n2() / 2.0).sqrt();
            for t in 0..l {
                for i in 0..m {
                    let re: f64 = StandardNormal.sample(rng);
                    let im: f64 = StandardNormal.sample(rng);
                    out[(i, t)] = Complex64::new(re * comp_std, im * comp_std);
                }
            }
        }
        NoiseKind::SymmetricAlphaStable { alpha } => {
            let gamma = spec.gamma();
            if alpha == 2.0 {
                // 2-stable is Gaussian: exp(-gamma |t|^2) needs per-component
                // variance 2 gamma.
                let comp_std = (2.0 * gamma).sqrt();
                for t in 0..l {
                    for i in 0..m {
                        let re: f64 = StandardNormal.sample(rng);
                        let im: f64 = StandardNormal.sample(rng);
                        out[(i, t)] = Complex64::new(re * comp_std, im * comp_std);
                    }
                }
            } else {
                // Sub-Gaussian scale chosen so the ECF equals exp(-gamma |t|^alpha):
                // with A = c X, X standard positive (alpha/2)-stable, G ~ N(0,1),
                // E exp(j Re(conj(t) Z)) = E exp(-A |t|^2 / 2)
                //                        = exp(-(c/2)^(alpha/2) |t|^alpha / cos(pi alpha/4)).
                let c = 2.0 * (gamma * (PI * alpha / 4.0).cos()).powf(2.0 / alpha);
                for t in 0..l {
                    for i in 0..m {
                        let a = c * sample_positive_stable(alpha / 2.0, rng);
                        let r = a.sqrt();
                        let g1: f64 = StandardNormal.sample(rng);
                        let g2: f64 = StandardNormal.sample(rng);
                        out[(i, t)] = Complex64::new(r * g1, r * g2);
                    }
                }
            }
        }
    }
    Ok(out)
}

// ─── Snapshot synthesis ──────────────────────────────────────────────────────

/// One block of received array snapshots with its generation metadata.
#[derive(Debug, Clone, PartialEq)]
pub struct SnapshotBlock {
    /// Received samples, one column per snapshot (M x L).
    pub samples: Array2<Complex64>,
    /// True grid index (1-based).
    pub grid: usize,
    /// Noise model the block was generated under, with measured sigma_s2.
    pub noise: NoiseSpec,
    /// Seed that produced the block.
    pub seed: u64,
}

impl SnapshotBlock {
    pub fn new(
        samples: Array2<Complex64>,
        grid: usize,
        noise: NoiseSpec,
        seed: u64,
    ) -> Result<Self, SimError> {
        if samples.nrows() == 0 || samples.ncols() == 0 {
            return Err(SimError::InvalidBlock(format!(
                "samples must be non-empty, got {}x{}",
                samples.nrows(),
                samples.ncols()
            )));
        }
        if grid == 0 {
            return Err(SimError::InvalidBlock("grid index must be 1-based".into()));
        }
        noise.validate()?;
        Ok(Self {
            samples,
            grid,
            noise,
            seed,
        })
    }

    pub fn num_antennas(&self) -> usize {
        self.samples.nrows()
    }

    pub fn num_snapshots(&self) -> usize {
        self.samples.ncols()
    }

    /// Copies out the `group_index`-th disjoint run of `group_size` snapshots.
    pub fn snapshot_group(&self, group_index: usize, group_size: usize) -> Result<Self, SimError> {
        let l = self.num_snapshots();
        if group_size == 0 || l % group_size != 0 {
            return Err(SimError::InvalidBlock(format!(
                "group size {group_size} does not divide snapshot count {l}"
            )));
        }
        let groups = l / group_size;
        if group_index >= groups {
            return Err(SimError::InvalidBlock(format!(
                "group index {group_index} out of range 0..{groups}"
            )));
        }
        let start = group_index * group_size;
        let slice = self
            .samples
            .slice(ndarray::s![.., start..start + group_size])
            .to_owned();
        Ok(Self {
            samples: slice,
            grid: self.grid,
            noise: self.noise.clone(),
            seed: self.seed,
        })
    }
}

/// Synthesizes one snapshot block for a channel realization.
///
/// Each snapshot is y(t) = r * s(t) + n(t) where the effective response
/// r = sum_i gain_i exp(-j 2 pi f_c tau_i) a(theta_i) folds every path delay
/// into a carrier-phase rotation, and s(t) is a unit-modulus symbol with
/// uniform random phase. The returned block records the measured noiseless
/// per-antenna power as sigma_s2 (exact, because |s(t)| = 1).
///
/// The generator is derived from `seed` alone, and the draw order (symbol
/// phases, then the noise matrix) is pinned, so a given seed reproduces the
/// block bit for bit.
pub fn synthesize_block(
    chan: &MultipathChannel,
    cfg: &ArrayConfig,
    l: usize,
    spec: &NoiseSpec,
    seed: u64,
) -> Result<SnapshotBlock, SimError> {
    cfg.validate()?;
    spec.validate()?;
    if l == 0 {
        return Err(SimError::InvalidBlock("snapshot count must be >= 1".into()));
    }
    if chan.paths.is_empty() {
        return Err(SimError::InvalidBlock("channel has no paths".into()));
    }
    let m = cfg.num_antennas;
    let mut response = Array1::<Complex64>::zeros(m);
    for p in &chan.paths {
        let rot = Complex64::from_polar(1.0, -2.0 * PI * cfg.carrier_frequency * p.delay);
        let coeff = p.gain * rot;
        for (r, s) in response.iter_mut().zip(steering_vector(p.aoa, cfg).iter()) {
            *r += coeff * s;
        }
    }
    let sigma_s2 = response.iter().map(|c| c.norm_sqr()).sum::<f64>() / m as f64;
    if !(sigma_s2 > 0.0) {
        return Err(SimError::InvalidBlock(
            "channel response has zero power; cannot reference an SNR".into(),
        ));
    }
    let mut noise_spec = spec.clone();
    noise_spec.sigma_s2 = sigma_s2;

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut samples = Array2::<Complex64>::zeros((m, l));
    for t in 0..l {
        let s = Complex64::from_polar(1.0, rng.gen::<f64>() * 2.0 * PI);
        for i in 0..m {
            samples[(i, t)] = response[i] * s;
        }
    }
    let noise = gen_noise(&noise_spec, m, l, &mut rng)?;
    samples += &noise;
    SnapshotBlock::new(samples, chan.grid, noise_spec, seed)
}

// ─── Tests ───────────────────────────────────────────────────────────────────
