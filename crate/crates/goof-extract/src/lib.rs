//! GOOF fingerprint extraction.
//!
//! This crate turns snapshot blocks from `array-sim` into the five
//! fingerprint families used by the localization pipeline: received signal
//! strength (RSSF), covariance magnitudes (CMF), principal-subspace
//! magnitudes (SSF), fourth-order cumulant magnitudes (FoCF), and
//! fractional lower-order moment magnitudes (FLOMF).  A `GoofDataset`
//! gathers one feature vector per snapshot group per grid cell, ready for
//! ensemble training.
//!
//! All estimators are plain sample averages over the snapshots of a group,
//! so they are symmetric in snapshot order, and every fingerprint is a
//! finite real vector with non-negative entries (RSSF entries are mean
//! powers; the remaining families are entrywise magnitudes).

use std::collections::{BTreeMap, BTreeSet};

use ndarray::{Array1, Array2};
use num_complex::Complex64;
use rayon::prelude::*;
use thiserror::Error;

use array_sim::SnapshotBlock;

pub mod eigen;

pub use eigen::{hermitian_eigen, HermitianEigen};

/// Magnitudes below this floor are clamped before the fractional power in
/// the FLOM estimator, so near-zero snapshots cannot produce infinities.
pub const FLOM_MAGNITUDE_FLOOR: f64 = 1e-12;

// ─────────────────────────────── 1. Errors ───────────────────────────────

/// Errors produced by fingerprint extraction.
#[derive(Debug, Error)]
pub enum ExtractError {
    /// An input array had the wrong shape for the requested operation.
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    /// A numeric parameter was outside its documented range.
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    /// The Jacobi iteration failed to reduce the off-diagonal mass.
    #[error("eigendecomposition did not converge within {sweeps} sweeps")]
    EigenNotConverged { sweeps: usize },
    /// A dataset violated a structural invariant.
    #[error("invalid dataset: {0}")]
    InvalidDataset(String),
    /// A fingerprint label could not be parsed.
    #[error("unknown fingerprint kind: {0}")]
    UnknownKind(String),
}

// ─────────────────────────────── 2. Fingerprint kinds ───────────────────────────────

/// The five fingerprint families, in canonical reporting order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum FingerprintKind {
    /// Received signal strength: real diagonal of the sample covariance.
    Rssf,
    /// Covariance matrix feature: entrywise magnitudes of the covariance.
    Cmf,
    /// Signal subspace feature: magnitudes of the principal eigenvector.
    Ssf,
    /// Fourth-order cumulant feature: entrywise cumulant magnitudes.
    Focf,
    /// Fractional lower-order moment feature: entrywise FLOM magnitudes.
    Flomf,
}

impl FingerprintKind {
    /// Every kind, in canonical order.
    pub const ALL: [FingerprintKind; 5] = [
        FingerprintKind::Rssf,
        FingerprintKind::Cmf,
        FingerprintKind::Ssf,
        FingerprintKind::Focf,
        FingerprintKind::Flomf,
    ];

    /// Length of the vectorized feature for an array of `num_antennas`
    /// elements: M for the vector families, M^2 for the matrix families.
    pub fn feature_len(&self, num_antennas: usize) -> usize {
        match self {
            FingerprintKind::Rssf | FingerprintKind::Ssf => num_antennas,
            FingerprintKind::Cmf | FingerprintKind::Focf | FingerprintKind::Flomf => {
                num_antennas * num_antennas
            }
        }
    }

    /// Canonical text label, as used in reports and archives.
    pub fn label(&self) -> &'static str {
        match self {
            FingerprintKind::Rssf => "RSSF",
            FingerprintKind::Cmf => "CMF",
            FingerprintKind::Ssf => "SSF",
            FingerprintKind::Focf => "FoCF",
            FingerprintKind::Flomf => "FLOMF",
        }
    }

    /// Parses a canonical label back into a kind.
    pub fn from_label(label: &str) -> Result<Self, ExtractError> {
        match label {
            "RSSF" => Ok(FingerprintKind::Rssf),
            "CMF" => Ok(FingerprintKind::Cmf),
            "SSF" => Ok(FingerprintKind::Ssf),
            "FoCF" => Ok(FingerprintKind::Focf),
            "FLOMF" => Ok(FingerprintKind::Flomf),
            other => Err(ExtractError::UnknownKind(other.to_string())),
        }
    }
}

// ─────────────────────────────── 3. Dataset types ───────────────────────────────

/// One labeled feature vector.
#[derive(Debug, Clone, PartialEq)]
pub struct FingerprintSample {
    /// Which fingerprint family the features belong to.
    pub kind: FingerprintKind,
    /// Vectorized features, length `kind.feature_len(num_antennas)`.
    pub features: Vec<f64>,
    /// One-based grid label of the emitter that produced the snapshots.
    pub grid: usize,
}

/// Shape metadata shared by every sample in a dataset.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct GoofMeta {
    /// Antennas in the receiving array.
    pub num_antennas: usize,
    /// Number of grid cells; labels run 1..=num_grids.
    pub num_grids: usize,
    /// Snapshots per fingerprint group.
    pub group_size: usize,
    /// Fingerprint samples per grid cell per kind.
    pub samples_per_grid: usize,
}

/// A complete fingerprint database: for each kind, `num_grids *
/// samples_per_grid` samples ordered by ascending grid, then ascending
/// group index within the grid.
#[derive(Debug, Clone, PartialEq)]
pub struct GoofDataset {
    meta: GoofMeta,
    samples: BTreeMap<FingerprintKind, Vec<FingerprintSample>>,
}

impl GoofDataset {
    /// Builds a dataset after checking every structural invariant: sample
    /// counts, grid-major ordering, feature lengths, and finiteness.
    pub fn new(
        meta: GoofMeta,
        samples: BTreeMap<FingerprintKind, Vec<FingerprintSample>>,
    ) -> Result<Self, ExtractError> {
        if meta.num_antennas == 0
            || meta.num_grids == 0
            || meta.group_size == 0
            || meta.samples_per_grid == 0
        {
            return Err(ExtractError::InvalidDataset(
                "metadata fields must all be positive".to_string(),
            ));
        }
        if samples.is_empty() {
            return Err(ExtractError::InvalidDataset(
                "dataset must contain at least one fingerprint kind".to_string(),
            ));
        }
        let expected = meta.num_grids * meta.samples_per_grid;
        for (kind, list) in &samples {
            if list.len() != expected {
                return Err(ExtractError::InvalidDataset(format!(
                    "{} has {} samples, expected {} ({} grids x {} per grid)",
                    kind.label(),
                    list.len(),
                    expected,
                    meta.num_grids,
                    meta.samples_per_grid
                )));
            }
            let dim = kind.feature_len(meta.num_antennas);
            for (s, sample) in list.iter().enumerate() {
                let expected_grid = s / meta.samples_per_grid + 1;
                if sample.grid != expected_grid {
                    return Err(ExtractError::InvalidDataset(format!(
                        "{} sample {} labeled grid {}, expected grid-major order (grid {})",
                        kind.label(),
                        s,
                        sample.grid,
                        expected_grid
                    )));
                }
                if sample.kind != *kind {
                    return Err(ExtractError::InvalidDataset(format!(
                        "sample {} stored under {} is tagged {}",
                        s,
                        kind.label(),
                        sample.kind.label()
                    )));
                }
                if sample.features.len() != dim {
                    return Err(ExtractError::InvalidDataset(format!(
                        "{} sample {} has {} features, expected {}",
                        kind.label(),
                        s,
                        sample.features.len(),
                        dim
                    )));
                }
                if sample.features.iter().any(|x| !x.is_finite()) {
                    return Err(ExtractError::InvalidDataset(format!(
                        "{} sample {} contains a non-finite feature",
                        kind.label(),
                        s
                    )));
                }
            }
        }
        Ok(Self { meta, samples })
    }

    /// Shape metadata.
    pub fn meta(&self) -> &GoofMeta {
        &self.meta
    }

    /// Kinds present, in canonical order.
    pub fn kinds(&self) -> Vec<FingerprintKind> {
        self.samples.keys().copied().collect()
    }

    /// All samples of one kind, grid-major, or `None` if the kind is absent.
    pub fn samples(&self, kind: FingerprintKind) -> Option<&[FingerprintSample]> {
        self.samples.get(&kind).map(|v| v.as_slice())
    }

    /// The contiguous run of samples for one grid cell of one kind.
    pub fn samples_for_grid(
        &self,
        kind: FingerprintKind,
        grid: usize,
    ) -> Option<&[FingerprintSample]> {
        if grid == 0 || grid > self.meta.num_grids {
            return None;
        }
        let spg = self.meta.samples_per_grid;
        self.samples
            .get(&kind)
            .map(|v| &v[(grid - 1) * spg..grid * spg])
    }

    /// Splits every grid cell into the first `train` samples and the last
    /// `test` samples, returning `(train_set, test_set)`.  Any middle
    /// samples are discarded.
    pub fn split_front_back(
        &self,
        train: usize,
        test: usize,
    ) -> Result<(GoofDataset, GoofDataset), ExtractError> {
        let spg = self.meta.samples_per_grid;
        if train == 0 || test == 0 {
            return Err(ExtractError::InvalidParameter(
                "train and test sample counts must both be positive".to_string(),
            ));
        }
        if train + test > spg {
            return Err(ExtractError::InvalidParameter(format!(
                "train ({}) + test ({}) exceeds the {} samples available per grid",
                train, test, spg
            )));
        }
        let mut train_map = BTreeMap::new();
        let mut test_map = BTreeMap::new();
        for (kind, list) in &self.samples {
            let mut train_list = Vec::with_capacity(self.meta.num_grids * train);
            let mut test_list = Vec::with_capacity(self.meta.num_grids * test);
            for q in 0..self.meta.num_grids {
                let cell = &list[q * spg..(q + 1) * spg];
                train_list.extend_from_slice(&cell[..train]);
                test_list.extend_from_slice(&cell[spg - test..]);
            }
            train_map.insert(*kind, train_list);
            test_map.insert(*kind, test_list);
        }
        let train_meta = GoofMeta {
            samples_per_grid: train,
            ..self.meta
        };
        let test_meta = GoofMeta {
            samples_per_grid: test,
            ..self.meta
        };
        Ok((
            GoofDataset::new(train_meta, train_map)?,
            GoofDataset::new(test_meta, test_map)?,
        ))
    }

    /// Consumes the dataset into its raw parts (for persistence).
    pub fn into_parts(self) -> (GoofMeta, BTreeMap<FingerprintKind, Vec<FingerprintSample>>) {
        (self.meta, self.samples)
    }
}

// ─────────────────────────────── 4. Estimators ───────────────────────────────

/// Sample covariance of a snapshot block: `(1/L) sum_t y(t) y(t)^H`,
/// symmetrized to exact Hermitian form.
///
/// The symmetrization `(R + R^H) / 2` is a bitwise no-op for the plain
/// accumulation used here (conjugate-symmetric terms sum identically), but
/// it pins the Hermitian invariant against future reorderings.
pub fn estimate_covariance(block: &SnapshotBlock) -> Array2<Complex64> {
    let m = block.num_antennas();
    let l = block.num_snapshots();
    let y = &block.samples;
    let mut r = Array2::<Complex64>::zeros((m, m));
    for i in 0..m {
        for k in 0..m {
            let mut acc = Complex64::new(0.0, 0.0);
            for t in 0..l {
                acc += y[(i, t)] * y[(k, t)].conj();
            }
            r[(i, k)] = acc / l as f64;
        }
    }
    for i in 0..m {
        r[(i, i)] = Complex64::new(r[(i, i)].re, 0.0);
        for k in (i + 1)..m {
            let avg = 0.5 * (r[(i, k)] + r[(k, i)].conj());
            r[(i, k)] = avg;
            r[(k, i)] = avg.conj();
        }
    }
    r
}

/// Received-signal-strength fingerprint: the real diagonal of a covariance
/// matrix, exactly the per-antenna mean powers.
pub fn extract_rss(cov: &Array2<Complex64>) -> Result<Array1<f64>, ExtractError> {
    let m = cov.nrows();
    if m == 0 || cov.ncols() != m {
        return Err(ExtractError::ShapeMismatch(format!(
            "RSS extraction needs a square covariance, got {} x {}",
            cov.nrows(),
            cov.ncols()
        )));
    }
    Ok(Array1::from_iter((0..m).map(|i| cov[(i, i)].re)))
}

/// Signal-subspace fingerprint: elementwise magnitudes of the principal
/// (largest-eigenvalue) eigenvector of the covariance.
///
/// Eigenvalue ties resolve to the lowest column index of the Jacobi result,
/// so a perfectly white covariance yields `|e_1| = [1, 0, ..., 0]`.
pub fn extract_subspace(cov: &Array2<Complex64>) -> Result<Array1<f64>, ExtractError> {
    let eig = hermitian_eigen(cov)?;
    let k = eig.principal_index();
    Ok(eig.vectors.column(k).map(|z| z.norm()))
}

/// Fourth-order cumulant matrix of a snapshot block.
///
/// Entry `(i, j)` is the circular cumulant
/// `cum(y_i, y_i*, y_j, y_j*) = E|y_i|^2|y_j|^2 - |E[y_i y_j]|^2
///  - E|y_i|^2 E|y_j|^2 - |E[y_i y_j*]|^2`,
/// estimated with raw sample moments (no mean removal).  The result is an
/// exactly real, symmetric matrix stored as complex for uniformity.  For
/// circular complex Gaussian inputs every entry converges to zero, which is
/// what makes this fingerprint robust to Gaussian noise.
///
/// Requires at least two snapshots; a single snapshot carries no
/// fourth-order information beyond its second-order moments.
pub fn extract_cumulant(block: &SnapshotBlock) -> Result<Array2<Complex64>, ExtractError> {
    let m = block.num_antennas();
    let l = block.num_snapshots();
    if l < 2 {
        return Err(ExtractError::InvalidParameter(format!(
            "cumulant estimation needs at least 2 snapshots, got {}",
            l
        )));
    }
    let y = &block.samples;
    let inv_l = 1.0 / l as f64;

    // Per-antenna instantaneous powers and mean powers.
    let mut power = Array2::<f64>::zeros((m, l));
    for i in 0..m {
        for t in 0..l {
            power[(i, t)] = y[(i, t)].norm_sqr();
        }
    }
    let mean_power: Vec<f64> = (0..m)
        .map(|i| (0..l).map(|t| power[(i, t)]).sum::<f64>() * inv_l)
        .collect();

    let mut cum = Array2::<Complex64>::zeros((m, m));
    for i in 0..m {
        for j in 0..m {
            let mut m_abs = 0.0f64;
            let mut m20 = Complex64::new(0.0, 0.0);
            let mut r_ij = Complex64::new(0.0, 0.0);
            for t in 0..l {
                m_abs += power[(i, t)] * power[(j, t)];
                m20 += y[(i, t)] * y[(j, t)];
                r_ij += y[(i, t)] * y[(j, t)].conj();
            }
            m_abs *= inv_l;
            m20 *= inv_l;
            r_ij *= inv_l;
            let value = m_abs - m20.norm_sqr() - mean_power[i] * mean_power[j] - r_ij.norm_sqr();
            cum[(i, j)] = Complex64::new(value, 0.0);
        }
    }
    Ok(cum)
}

/// Fractional lower-order moment matrix of a snapshot block.
///
/// Entry `(i, k)` is `(1/L) sum_t y_i(t) |y_k(t)|^{p-2} y_k(t)*` with the
/// magnitude floored at `FLOM_MAGNITUDE_FLOOR` before the fractional power,
/// for moment order `1 < p <= 2`.  At `p = 2` the weight is identically one
/// and the estimate coincides with the (unsymmetrized) sample covariance
/// bit for bit.  Lower orders damp impulsive snapshots, which keeps the
/// estimate finite-variance under alpha-stable noise.
pub fn extract_flom(block: &SnapshotBlock, p: f64) -> Result<Array2<Complex64>, ExtractError> {
    if !(p > 1.0 && p <= 2.0) {
        return Err(ExtractError::InvalidParameter(format!(
            "FLOM order p must satisfy 1 < p <= 2, got {}",
            p
        )));
    }
    let m = block.num_antennas();
    let l = block.num_snapshots();
    let y = &block.samples;

    // Weight w_k(t) = max(|y_k(t)|, floor)^(p-2), shared across rows i.
    let mut weight = Array2::<f64>::zeros((m, l));
    for k in 0..m {
        for t in 0..l {
            weight[(k, t)] = y[(k, t)].norm().max(FLOM_MAGNITUDE_FLOOR).powf(p - 2.0);
        }
    }

    let mut flom = Array2::<Complex64>::zeros((m, m));
    for i in 0..m {
        for k in 0..m {
            let mut acc = Complex64::new(0.0, 0.0);
            for t in 0..l {
                acc += (y[(i, t)] * weight[(k, t)]) * y[(k, t)].conj();
            }
            flom[(i, k)] = acc / l as f64;
        }
    }
    Ok(flom)
}

// ─────────────────────────────── 5. Vectorization ───────────────────────────────

/// A fingerprint before vectorization: either an M-vector of reals or an
/// M x M complex matrix.
#[derive(Debug, Clone)]
pub enum RawFingerprint {
    /// RSSF and SSF produce real vectors.
    RealVector(Array1<f64>),
    /// CMF, FoCF, and FLOMF produce complex matrices.
    ComplexMatrix(Array2<Complex64>),
}

/// Flattens a raw fingerprint into the feature vector fed to the ensemble.
///
/// Vector kinds pass through elementwise absolute value (the identity for
/// RSSF powers and subspace magnitudes, pinned for robustness).  Matrix
/// kinds flatten in column-major order, taking entrywise magnitudes.
pub fn vectorize(raw: &RawFingerprint, kind: FingerprintKind) -> Result<Vec<f64>, ExtractError> {
    let features = match (kind, raw) {
        (FingerprintKind::Rssf | FingerprintKind::Ssf, RawFingerprint::RealVector(v)) => {
            v.iter().map(|x| x.abs()).collect::<Vec<f64>>()
        }
        (
            FingerprintKind::Cmf | FingerprintKind::Focf | FingerprintKind::Flomf,
            RawFingerprint::ComplexMatrix(a),
        ) => {
            let m = a.nrows();
            if a.ncols() != m {
                return Err(ExtractError::ShapeMismatch(format!(
                    "matrix fingerprints must be square, got {} x {}",
                    a.nrows(),
                    a.ncols()
                )));
            }
            let mut out = Vec::with_capacity(m * m);
            for j in 0..m {
                for i in 0..m {
                    out.push(a[(i, j)].norm());
                }
            }
            out
        }
        (k, RawFingerprint::RealVector(_)) => {
            return Err(ExtractError::ShapeMismatch(format!(
                "{} expects a complex matrix, got a real vector",
                k.label()
            )));
        }
        (k, RawFingerprint::ComplexMatrix(_)) => {
            return Err(ExtractError::ShapeMismatch(format!(
                "{} expects a real vector, got a complex matrix",
                k.label()
            )));
        }
    };
    if features.iter().any(|x| !x.is_finite()) {
        return Err(ExtractError::InvalidDataset(format!(
            "{} fingerprint contains a non-finite feature",
            kind.label()
        )));
    }
    Ok(features)
}

// ─────────────────────────────── 6. GOOF construction ───────────────────────────────

/// Extracts every requested fingerprint for one snapshot group.
fn extract_group(
    group: &SnapshotBlock,
    kinds: &BTreeSet<FingerprintKind>,
    flom_p: f64,
) -> Result<BTreeMap<FingerprintKind, Vec<f64>>, ExtractError> {
    let needs_cov = kinds.contains(&FingerprintKind::Rssf)
        || kinds.contains(&FingerprintKind::Cmf)
        || kinds.contains(&FingerprintKind::Ssf);
    let cov = if needs_cov {
        Some(estimate_covariance(group))
    } else {
        None
    };

    let mut out = BTreeMap::new();
    for &kind in kinds {
        let raw = match kind {
            FingerprintKind::Rssf => {
                RawFingerprint::RealVector(extract_rss(cov.as_ref().expect("covariance ready"))?)
            }
            FingerprintKind::Cmf => {
                RawFingerprint::ComplexMatrix(cov.as_ref().expect("covariance ready").clone())
            }
            FingerprintKind::Ssf => RawFingerprint::RealVector(extract_subspace(
                cov.as_ref().expect("covariance ready"),
            )?),
            FingerprintKind::Focf => RawFingerprint::ComplexMatrix(extract_cumulant(group)?),
            FingerprintKind::Flomf => RawFingerprint::ComplexMatrix(extract_flom(group, flom_p)?),
        };
        out.insert(kind, vectorize(&raw, kind)?);
    }
    Ok(out)
}

/// Builds the full fingerprint database from one snapshot block per grid.
///
/// Each block is cut into consecutive groups of `group_size` snapshots and
/// every group yields one sample of each requested kind.  Blocks must cover
/// the grid labels `1..=Q` exactly once, share a common array size and
/// snapshot count, and have `group_size` divide the snapshot count.  Grids
/// are processed in parallel; the resulting sample order (ascending grid,
/// then ascending group) is independent of scheduling.
pub fn build_goof(
    blocks: &[SnapshotBlock],
    group_size: usize,
    kinds: &[FingerprintKind],
    flom_p: f64,
) -> Result<GoofDataset, ExtractError> {
    if kinds.is_empty() {
        return Err(ExtractError::InvalidParameter(
            "at least one fingerprint kind must be requested".to_string(),
        ));
    }
    let kind_set: BTreeSet<FingerprintKind> = kinds.iter().copied().collect();
    if blocks.is_empty() {
        return Err(ExtractError::InvalidDataset(
            "at least one snapshot block is required".to_string(),
        ));
    }
    if kind_set.contains(&FingerprintKind::Flomf) && !(flom_p > 1.0 && flom_p <= 2.0) {
        return Err(ExtractError::InvalidParameter(format!(
            "FLOM order p must satisfy 1 < p <= 2, got {}",
            flom_p
        )));
    }
    if kind_set.contains(&FingerprintKind::Focf) && group_size < 2 {
        return Err(ExtractError::InvalidParameter(
            "cumulant fingerprints need a group size of at least 2".to_string(),
        ));
    }

    let num_antennas = blocks[0].num_antennas();
    let num_snapshots = blocks[0].num_snapshots();
    for b in blocks {
        if b.num_antennas() != num_antennas || b.num_snapshots() != num_snapshots {
            return Err(ExtractError::InvalidDataset(format!(
                "all blocks must share one shape; expected {} x {}, grid {} has {} x {}",
                num_antennas,
                num_snapshots,
                b.grid,
                b.num_antennas(),
                b.num_snapshots()
            )));
        }
    }
    if group_size == 0 || num_snapshots % group_size != 0 {
        return Err(ExtractError::InvalidParameter(format!(
            "group size {} must divide the snapshot count {}",
            group_size, num_snapshots
        )));
    }

    // Blocks must cover 1..=Q exactly once.
    let num_grids = blocks.len();
    let mut ordered: Vec<&SnapshotBlock> = blocks.iter().collect();
    ordered.sort_by_key(|b| b.grid);
    for (idx, b) in ordered.iter().enumerate() {
        if b.grid != idx + 1 {
            return Err(ExtractError::InvalidDataset(format!(
                "blocks must cover grids 1..={} exactly once; found grid {} at rank {}",
                num_grids,
                b.grid,
                idx + 1
            )));
        }
    }

    let samples_per_grid = num_snapshots / group_size;
    let per_block: Vec<BTreeMap<FingerprintKind, Vec<FingerprintSample>>> = ordered
        .par_iter()
        .map(|block| {
            let mut per_kind: BTreeMap<FingerprintKind, Vec<FingerprintSample>> = kind_set
                .iter()
                .map(|&k| (k, Vec::with_capacity(samples_per_grid)))
                .collect();
            for g in 0..samples_per_grid {
                let group = block.snapshot_group(g, group_size).map_err(|e| {
                    ExtractError::InvalidDataset(format!(
                        "grid {} group {}: {}",
                        block.grid, g, e
                    ))
                })?;
                let features = extract_group(&group, &kind_set, flom_p)?;
                for (kind, feats) in features {
                    per_kind.get_mut(&kind).expect("kind preallocated").push(
                        FingerprintSample {
                            kind,
                            features: feats,
                            grid: block.grid,
                        },
                    );
                }
            }
            Ok(per_kind)
        })
        .collect::<Result<Vec<_>, ExtractError>>()?;

    let mut merged: BTreeMap<FingerprintKind, Vec<FingerprintSample>> = kind_set
        .iter()
        .map(|&k| (k, Vec::with_capacity(num_grids * samples_per_grid)))
        .collect();
    for block_samples in per_block {
        for (kind, list) in block_samples {
            merged.get_mut(&kind).expect("kind preallocated").extend(list);
        }
    }

    let meta = GoofMeta {
        num_antennas,
        num_grids,
        group_size,
        samples_per_grid,
    };
    GoofDataset::new(meta, merged)
}

// ─────────────────────────────── 7. Tests ───────────────────────────────

#[cfg(test)]
mod tests {
    use super::*;
    use array_sim::{
        draw_multipath, synthesize_block, ArrayConfig, GridMap, NoiseSpec,
    };
    use ndarray::array;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn block_from_columns(columns: &[Vec<Complex64>], grid: usize) -> SnapshotBlock {
        let m = columns[0].len();
        let l = columns.len();
        let mut samples = Array2::<Complex64>::zeros((m, l));
        for (t, col) in columns.iter().enumerate() {
            for i in 0..m {
                samples[(i, t)] = col[i];
            }
        }
        SnapshotBlock::new(samples, grid, NoiseSpec::gaussian(30.0), 0)
            .expect("hand-built block must be valid")
    }

    fn test_array(m: usize) -> ArrayConfig {
        ArrayConfig {
            num_antennas: m,
            carrier_frequency: 1.0e9,
            element_spacing: 0.5,
            origin: (0.0, 0.0),
            normal_angle: std::f64::consts::FRAC_PI_4,
        }
    }

    #[test]
    fn covariance_of_opposing_snapshots_is_identity() {
        let j = Complex64::new(0.0, 1.0);
        let one = Complex64::new(1.0, 0.0);
        let block = block_from_columns(&[vec![one, j], vec![one, -j]], 1);
        let r = estimate_covariance(&block);
        let eye = Array2::<Complex64>::eye(2);
        for i in 0..2 {
            for k in 0..2 {
                assert!(
                    (r[(i, k)] - eye[(i, k)]).norm() < 1e-15,
                    "covariance entry ({}, {}) = {} should match identity",
                    i,
                    k,
                    r[(i, k)]
                );
            }
        }
    }

    #[test]
    fn covariance_of_single_snapshot_is_outer_product() {
        let y = vec![Complex64::new(2.0, 0.0), Complex64::new(1.0, 1.0)];
        let block = block_from_columns(&[y.clone()], 1);
        let r = estimate_covariance(&block);
        for i in 0..2 {
            for k in 0..2 {
                let expect = y[i] * y[k].conj();
                assert_eq!(
                    r[(i, k)],
                    expect,
                    "rank-1 covariance must equal the exact outer product"
                );
            }
        }
    }

    #[test]
    fn rss_is_the_real_diagonal() {
        let y = vec![Complex64::new(2.0, 0.0), Complex64::new(1.0, 1.0)];
        let block = block_from_columns(&[y], 1);
        let r = estimate_covariance(&block);
        let rss = extract_rss(&r).expect("square covariance");
        assert_eq!(rss[0], 4.0, "first antenna power is |2|^2");
        assert_eq!(rss[1], 2.0, "second antenna power is |1+i|^2");
        let rect = Array2::<Complex64>::zeros((2, 3));
        assert!(extract_rss(&rect).is_err(), "non-square input must be rejected");
    }

    #[test]
    fn subspace_of_rank_one_matches_direction_magnitudes() {
        let y = vec![Complex64::new(3.0, 0.0), Complex64::new(0.0, 4.0)];
        let block = block_from_columns(&[y], 1);
        let r = estimate_covariance(&block);
        let v = extract_subspace(&r).expect("rank-1 covariance");
        assert!(
            (v[0] - 0.6).abs() < 1e-12 && (v[1] - 0.8).abs() < 1e-12,
            "principal direction magnitudes should be [0.6, 0.8], got [{}, {}]",
            v[0],
            v[1]
        );
    }

    #[test]
    fn subspace_of_identity_breaks_ties_to_first_basis_vector() {
        let eye = Array2::<Complex64>::eye(3);
        let v = extract_subspace(&eye).expect("identity decomposes");
        assert_eq!(v.to_vec(), vec![1.0, 0.0, 0.0], "white covariance must yield |e_1|");
    }

    #[test]
    fn cumulant_of_constant_signal_matches_closed_form() {
        let c = vec![Complex64::new(1.0, 1.0), Complex64::new(2.0, 0.0)];
        let block = block_from_columns(&[c.clone(), c.clone(), c.clone(), c.clone()], 1);
        let cum = extract_cumulant(&block).expect("four snapshots suffice");
        for i in 0..2 {
            for j in 0..2 {
                let expect = -2.0 * c[i].norm_sqr() * c[j].norm_sqr();
                assert!(
                    (cum[(i, j)].re - expect).abs() < 1e-12,
                    "constant-signal cumulant ({}, {}) should be {}, got {}",
                    i,
                    j,
                    expect,
                    cum[(i, j)].re
                );
                assert_eq!(cum[(i, j)].im, 0.0, "cumulant entries are exactly real");
            }
        }
    }

    #[test]
    fn cumulant_rejects_single_snapshot() {
        let block = block_from_columns(&[vec![Complex64::new(1.0, 0.0)]], 1);
        assert!(
            extract_cumulant(&block).is_err(),
            "one snapshot cannot support a fourth-order estimate"
        );
    }

    #[test]
    fn cumulant_scales_as_fourth_power() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let cols: Vec<Vec<Complex64>> = (0..8)
            .map(|_| {
                (0..3)
                    .map(|_| {
                        Complex64::new(
                            rand::Rng::gen::<f64>(&mut rng) - 0.5,
                            rand::Rng::gen::<f64>(&mut rng) - 0.5,
                        )
                    })
                    .collect()
            })
            .collect();
        let scale = 3.0;
        let scaled: Vec<Vec<Complex64>> = cols
            .iter()
            .map(|c| c.iter().map(|z| z * scale).collect())
            .collect();
        let base = extract_cumulant(&block_from_columns(&cols, 1)).expect("base block");
        let big = extract_cumulant(&block_from_columns(&scaled, 1)).expect("scaled block");
        let s4 = scale.powi(4);
        for i in 0..3 {
            for j in 0..3 {
                assert!(
                    (big[(i, j)].re - s4 * base[(i, j)].re).abs() <= 1e-10 * base[(i, j)].re.abs().max(1.0),
                    "cumulant must scale as s^4: entry ({}, {})",
                    i,
                    j
                );
            }
        }
    }

    #[test]
    fn flom_at_p_two_is_exactly_the_covariance() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let cols: Vec<Vec<Complex64>> = (0..16)
            .map(|_| {
                (0..4)
                    .map(|_| {
                        Complex64::new(
                            rand::Rng::gen::<f64>(&mut rng) - 0.5,
                            rand::Rng::gen::<f64>(&mut rng) - 0.5,
                        )
                    })
                    .collect()
            })
            .collect();
        let block = block_from_columns(&cols, 1);
        let flom = extract_flom(&block, 2.0).expect("p = 2 is in range");
        let cov = estimate_covariance(&block);
        for i in 0..4 {
            for k in 0..4 {
                assert_eq!(
                    flom[(i, k)],
                    cov[(i, k)],
                    "FLOM at p = 2 must reproduce the covariance bit for bit at ({}, {})",
                    i,
                    k
                );
            }
        }
    }

    #[test]
    fn flom_rejects_out_of_range_orders() {
        let block = block_from_columns(&[vec![Complex64::new(1.0, 0.0)]], 1);
        for bad in [0.5, 1.0, 2.0 + 1e-9, f64::NAN] {
            assert!(
                extract_flom(&block, bad).is_err(),
                "order p = {} lies outside (1, 2] and must be rejected",
                bad
            );
        }
        assert!(extract_flom(&block, 1.2).is_ok(), "p = 1.2 is a valid order");
    }

    #[test]
    fn flom_stays_finite_with_a_dead_antenna() {
        let zero = Complex64::new(0.0, 0.0);
        let one = Complex64::new(1.0, 0.0);
        let block = block_from_columns(&[vec![one, zero], vec![one, zero]], 1);
        let flom = extract_flom(&block, 1.2).expect("dead antenna must not break FLOM");
        for i in 0..2 {
            for k in 0..2 {
                assert!(
                    flom[(i, k)].re.is_finite() && flom[(i, k)].im.is_finite(),
                    "entry ({}, {}) must stay finite despite the zero channel",
                    i,
                    k
                );
            }
        }
        assert_eq!(flom[(0, 1)], zero, "a zero reference channel contributes nothing");
        assert_eq!(flom[(1, 0)], zero, "a zero row channel contributes nothing");
    }

    #[test]
    fn vectorize_flattens_matrices_column_major() {
        let a = array![
            [Complex64::new(1.0, 0.0), Complex64::new(2.0, 0.0)],
            [Complex64::new(3.0, 0.0), Complex64::new(4.0, 0.0)],
        ];
        let v = vectorize(&RawFingerprint::ComplexMatrix(a), FingerprintKind::Cmf)
            .expect("square matrix vectorizes");
        assert_eq!(v, vec![1.0, 3.0, 2.0, 4.0], "flattening must walk columns first");
    }

    #[test]
    fn vectorize_takes_entrywise_magnitudes() {
        let j = Complex64::new(0.0, 1.0);
        let one = Complex64::new(1.0, 0.0);
        let a = array![[one, -j], [j, one]];
        let v = vectorize(&RawFingerprint::ComplexMatrix(a), FingerprintKind::Cmf)
            .expect("square matrix vectorizes");
        assert_eq!(v, vec![1.0, 1.0, 1.0, 1.0], "all entries have unit magnitude");
    }

    #[test]
    fn vectorize_rejects_mismatched_variants() {
        let vec_raw = RawFingerprint::RealVector(Array1::from(vec![1.0, 2.0]));
        assert!(
            vectorize(&vec_raw, FingerprintKind::Cmf).is_err(),
            "CMF must demand a complex matrix"
        );
        let mat_raw = RawFingerprint::ComplexMatrix(Array2::eye(2));
        assert!(
            vectorize(&mat_raw, FingerprintKind::Rssf).is_err(),
            "RSSF must demand a real vector"
        );
    }

    #[test]
    fn kind_labels_round_trip() {
        for kind in FingerprintKind::ALL {
            let back = FingerprintKind::from_label(kind.label()).expect("label parses back");
            assert_eq!(back, kind, "label round-trip must be the identity");
        }
        assert!(
            FingerprintKind::from_label("BOGUS").is_err(),
            "unknown labels must be rejected"
        );
    }

    fn tiny_sim_blocks(num_grids_x: usize, num_grids_y: usize, l: usize) -> Vec<SnapshotBlock> {
        let grid = GridMap::rectangular(num_grids_x, num_grids_y, 1.0).expect("grid");
        let cfg = test_array(3);
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        let spec = NoiseSpec::gaussian(12.0);
        (1..=grid.num_grids())
            .map(|q| {
                let chan = draw_multipath(q, &grid, &cfg, 4, 0.3, 0.1, &mut rng)
                    .expect("channel draws");
                synthesize_block(&chan, &cfg, l, &spec, 1000 + q as u64).expect("block")
            })
            .collect()
    }

    #[test]
    fn build_goof_produces_ordered_complete_dataset() {
        let blocks = tiny_sim_blocks(2, 2, 32);
        let ds = build_goof(&blocks, 8, &FingerprintKind::ALL, 1.2).expect("build succeeds");
        let meta = *ds.meta();
        assert_eq!(meta.num_grids, 4, "2 x 2 map has four grid cells");
        assert_eq!(meta.samples_per_grid, 4, "32 snapshots / groups of 8");
        assert_eq!(meta.num_antennas, 3, "array size propagates");
        for kind in FingerprintKind::ALL {
            let samples = ds.samples(kind).expect("every requested kind present");
            assert_eq!(samples.len(), 16, "{} should have Q * L/T samples", kind.label());
            for (s, sample) in samples.iter().enumerate() {
                assert_eq!(
                    sample.grid,
                    s / 4 + 1,
                    "samples must be grid-major in ascending grid order"
                );
                assert_eq!(
                    sample.features.len(),
                    kind.feature_len(3),
                    "feature length must match the kind"
                );
            }
        }
        let cell = ds.samples_for_grid(FingerprintKind::Rssf, 3).expect("grid 3 exists");
        assert!(
            cell.iter().all(|s| s.grid == 3),
            "per-grid slice must contain only that grid's samples"
        );
    }

    #[test]
    fn build_goof_accepts_a_subset_of_kinds() {
        let blocks = tiny_sim_blocks(2, 1, 16);
        let ds = build_goof(&blocks, 8, &[FingerprintKind::Rssf], 0.0)
            .expect("FLOM order is ignored when FLOMF is not requested");
        assert_eq!(ds.kinds(), vec![FingerprintKind::Rssf], "only RSSF was requested");
    }

    #[test]
    fn build_goof_rejects_structural_problems() {
        let blocks = tiny_sim_blocks(2, 1, 16);
        assert!(
            build_goof(&blocks, 5, &FingerprintKind::ALL, 1.2).is_err(),
            "group size must divide the snapshot count"
        );
        assert!(
            build_goof(&blocks, 8, &[], 1.2).is_err(),
            "an empty kind list is meaningless"
        );
        assert!(
            build_goof(&blocks, 8, &[FingerprintKind::Flomf], 2.5).is_err(),
            "FLOM order out of range must be rejected when FLOMF is requested"
        );
        assert!(
            build_goof(&blocks[1..], 8, &FingerprintKind::ALL, 1.2).is_err(),
            "grid labels must cover 1..=Q (a lone grid-2 block fails)"
        );
        let duplicated = vec![blocks[0].clone(), blocks[0].clone()];
        assert!(
            build_goof(&duplicated, 8, &FingerprintKind::ALL, 1.2).is_err(),
            "duplicate grid labels must be rejected"
        );
    }

    fn hand_dataset() -> GoofDataset {
        let meta = GoofMeta {
            num_antennas: 1,
            num_grids: 2,
            group_size: 4,
            samples_per_grid: 4,
        };
        let mut samples = BTreeMap::new();
        let list: Vec<FingerprintSample> = (0..8)
            .map(|s| FingerprintSample {
                kind: FingerprintKind::Rssf,
                features: vec![(s / 4 * 10 + s % 4) as f64],
                grid: s / 4 + 1,
            })
            .collect();
        samples.insert(FingerprintKind::Rssf, list);
        GoofDataset::new(meta, samples).expect("hand dataset is valid")
    }

    #[test]
    fn split_front_back_takes_first_and_last_groups() {
        let ds = hand_dataset();
        let (train, test) = ds.split_front_back(2, 1).expect("2 + 1 <= 4");
        let train_feats: Vec<f64> = train
            .samples(FingerprintKind::Rssf)
            .unwrap()
            .iter()
            .map(|s| s.features[0])
            .collect();
        assert_eq!(
            train_feats,
            vec![0.0, 1.0, 10.0, 11.0],
            "training set must take the first samples of each grid"
        );
        let test_feats: Vec<f64> = test
            .samples(FingerprintKind::Rssf)
            .unwrap()
            .iter()
            .map(|s| s.features[0])
            .collect();
        assert_eq!(
            test_feats,
            vec![3.0, 13.0],
            "test set must take the last samples of each grid"
        );
        assert_eq!(train.meta().samples_per_grid, 2, "train meta reflects the split");
        assert_eq!(test.meta().samples_per_grid, 1, "test meta reflects the split");
    }

    #[test]
    fn split_front_back_rejects_oversized_requests() {
        let ds = hand_dataset();
        assert!(ds.split_front_back(3, 2).is_err(), "3 + 2 > 4 must fail");
        assert!(ds.split_front_back(0, 1).is_err(), "empty training split is invalid");
        assert!(ds.split_front_back(1, 0).is_err(), "empty test split is invalid");
    }

    #[test]
    fn dataset_validation_catches_corruption() {
        let meta = GoofMeta {
            num_antennas: 1,
            num_grids: 2,
            group_size: 4,
            samples_per_grid: 1,
        };
        let make = |grids: Vec<usize>, feat: f64| {
            let mut samples = BTreeMap::new();
            let list: Vec<FingerprintSample> = grids
                .iter()
                .map(|&g| FingerprintSample {
                    kind: FingerprintKind::Rssf,
                    features: vec![feat],
                    grid: g,
                })
                .collect();
            samples.insert(FingerprintKind::Rssf, list);
            GoofDataset::new(meta, samples)
        };
        assert!(make(vec![1, 2], 1.0).is_ok(), "well-formed dataset must pass");
        assert!(make(vec![2, 1], 1.0).is_err(), "out-of-order grids must fail");
        assert!(make(vec![1], 1.0).is_err(), "short sample list must fail");
        assert!(
            make(vec![1, 2], f64::NAN).is_err(),
            "non-finite features must fail"
        );
    }
}
