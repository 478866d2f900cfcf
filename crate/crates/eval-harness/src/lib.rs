//! Experiment orchestration: SNR sweeps under Gaussian or impulsive noise,
//! comparing each single-fingerprint classifier bank against MUCUS fusion.
//!
//! One sweep point proceeds through the full pipeline: synthesize one
//! multipath channel and one snapshot block per grid, extract the GOOF
//! database, split it into train and test samples, train the five pairwise
//! banks, and predict every test sample.  Metrics follow the two standard
//! curves: mean prediction probability (averaged uniformly over grids) and
//! RMSE in meters over grid-center coordinates, pooled over all test
//! samples.  Results serialize to CSV with full round-trip fidelity.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::time::Instant;

use rand::{Rng as _, SeedableRng as _};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use thiserror::Error;

use array_sim::{
    draw_multipath, synthesize_block, ArrayConfig, GridMap, NoiseSpec, SimError, SnapshotBlock,
};
use ensemble::{predict_grid, train_bank, ClassifierBank, EnsembleError};
use goof_extract::{build_goof, ExtractError, FingerprintKind};
use mucus_fusion::{
    mucus_fuse, prediction_probability, rmse_meters, FusionError, PredictionMatrix,
};

// ─────────────────────────────── 1. Errors ───────────────────────────────

/// Errors raised while configuring, running, or serializing experiments.
#[derive(Debug, Error)]
pub enum HarnessError {
    /// A configuration field violated an invariant.
    #[error("invalid experiment configuration: {0}")]
    InvalidConfig(String),
    /// An operation received an empty input it cannot act on.
    #[error("empty input: {0}")]
    EmptyInput(String),
    /// A results document failed to parse.
    #[error("parse failure: {0}")]
    Parse(String),
    /// Signal synthesis failed.
    #[error(transparent)]
    Sim(#[from] SimError),
    /// Fingerprint extraction failed.
    #[error(transparent)]
    Extract(#[from] ExtractError),
    /// Classifier training or prediction failed.
    #[error(transparent)]
    Ensemble(#[from] EnsembleError),
    /// Prediction fusion failed.
    #[error(transparent)]
    Fusion(#[from] FusionError),
}

// ─────────────────────────────── 2. Configuration ───────────────────────────────

/// Rectangular grid layout: `nx * ny` cells of `spacing` meters.
#[derive(Debug, Clone, PartialEq)]
pub struct GridSpec {
    /// Cells along x.
    pub nx: usize,
    /// Cells along y.
    pub ny: usize,
    /// Cell side length in meters.
    pub spacing: f64,
}

/// Multipath channel parameters shared by every grid.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelSpec {
    /// Scattered paths per channel, in addition to the line of sight.
    pub num_scatter_paths: usize,
    /// Angular spread of arrival directions, radians.
    pub sigma_a: f64,
    /// Delay spread as a fraction of the line-of-sight delay.
    pub ds_ratio: f64,
}

/// Snapshot budget per grid cell.
#[derive(Debug, Clone, PartialEq)]
pub struct SnapshotSpec {
    /// Total snapshots L synthesized per grid.
    pub total: usize,
    /// Snapshots T per fingerprint sample group.
    pub group_size: usize,
}

/// Train/test partition of each grid's sample groups.
#[derive(Debug, Clone, PartialEq)]
pub struct SplitSpec {
    /// Leading groups used for training.
    pub train_samples: usize,
    /// Trailing groups used for testing.
    pub test_samples: usize,
}

/// Noise family selector for a sweep.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum NoiseModel {
    /// Circular complex white Gaussian noise.
    Gaussian,
    /// Isotropic symmetric alpha-stable impulsive noise.
    AlphaStable,
}

impl NoiseModel {
    /// Stable token used in CSV output and config files.
    pub fn token(&self) -> &'static str {
        match self {
            NoiseModel::Gaussian => "gaussian",
            NoiseModel::AlphaStable => "alpha_stable",
        }
    }

    /// Parses a token produced by [`NoiseModel::token`].
    pub fn from_token(token: &str) -> Result<Self, HarnessError> {
        match token {
            "gaussian" => Ok(NoiseModel::Gaussian),
            "alpha_stable" => Ok(NoiseModel::AlphaStable),
            other => Err(HarnessError::Parse(format!(
                "unknown noise token {:?} (expected gaussian or alpha_stable)",
                other
            ))),
        }
    }
}

/// Noise family, impulsiveness, and the SNR points to sweep.
#[derive(Debug, Clone, PartialEq)]
pub struct NoiseConfig {
    /// Noise family.
    pub kind: NoiseModel,
    /// Characteristic exponent for the alpha-stable family; ignored for
    /// Gaussian sweeps.
    pub alpha: f64,
    /// SNR points in dB, evaluated in list order.
    pub snr_list_db: Vec<f64>,
}

impl NoiseConfig {
    /// Builds the sampling spec for one SNR point.
    pub fn spec_for(&self, snr_db: f64) -> Result<NoiseSpec, HarnessError> {
        match self.kind {
            NoiseModel::Gaussian => Ok(NoiseSpec::gaussian(snr_db)),
            NoiseModel::AlphaStable => Ok(NoiseSpec::alpha_stable(snr_db, self.alpha)?),
        }
    }
}

/// AdaBoost budget.
#[derive(Debug, Clone, PartialEq)]
pub struct BoostingSpec {
    /// Weak learners trained per pairwise classifier.
    pub num_rounds: usize,
}

/// Complete description of one experiment; every run is a pure function of
/// this value.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    /// Grid layout.
    pub grid: GridSpec,
    /// Antenna array geometry.
    pub array: ArrayConfig,
    /// Multipath channel parameters.
    pub channel: ChannelSpec,
    /// Snapshot budget per grid.
    pub snapshots: SnapshotSpec,
    /// Train/test partition per grid.
    pub split: SplitSpec,
    /// Noise family and SNR points.
    pub noise: NoiseConfig,
    /// AdaBoost budget.
    pub boosting: BoostingSpec,
    /// Fractional moment order for FLOMF features, in (1, 2].
    pub flom_p: f64,
    /// Master seed; all randomness derives from it.
    pub seed: u64,
}

impl Default for ExperimentConfig {
    /// The reference protocol: a 6 x 6 grid of 1 m cells, a 5-element
    /// half-wavelength array at 1 GHz, 100 samples of 512 snapshots per
    /// grid split 50/50, 30 boosting rounds, and a 0 to 30 dB sweep.
    fn default() -> Self {
        Self {
            grid: GridSpec {
                nx: 6,
                ny: 6,
                spacing: 1.0,
            },
            array: ArrayConfig {
                num_antennas: 5,
                carrier_frequency: 1.0e9,
                element_spacing: 0.5,
                origin: (0.0, 0.0),
                normal_angle: std::f64::consts::FRAC_PI_4,
            },
            channel: ChannelSpec {
                num_scatter_paths: 10,
                sigma_a: std::f64::consts::PI / 6.0,
                ds_ratio: 0.1,
            },
            snapshots: SnapshotSpec {
                total: 51_200,
                group_size: 512,
            },
            split: SplitSpec {
                train_samples: 50,
                test_samples: 50,
            },
            noise: NoiseConfig {
                kind: NoiseModel::Gaussian,
                alpha: 1.4,
                snr_list_db: vec![0.0, 6.0, 12.0, 18.0, 24.0, 30.0],
            },
            boosting: BoostingSpec { num_rounds: 30 },
            flom_p: 1.2,
            seed: 42,
        }
    }
}

impl ExperimentConfig {
    /// Checks every invariant the pipeline depends on.
    pub fn validate(&self) -> Result<(), HarnessError> {
        if self.grid.nx == 0 || self.grid.ny == 0 {
            return Err(HarnessError::InvalidConfig(
                "grid.nx and grid.ny must be positive".to_string(),
            ));
        }
        if self.grid.nx * self.grid.ny < 2 {
            return Err(HarnessError::InvalidConfig(
                "at least two grid cells are needed to classify".to_string(),
            ));
        }
        if !(self.grid.spacing > 0.0) || !self.grid.spacing.is_finite() {
            return Err(HarnessError::InvalidConfig(format!(
                "grid.spacing must be positive and finite, got {}",
                self.grid.spacing
            )));
        }
        self.array.validate()?;
        if !(self.channel.sigma_a >= 0.0) || !self.channel.sigma_a.is_finite() {
            return Err(HarnessError::InvalidConfig(format!(
                "channel.sigma_a must be non-negative and finite, got {}",
                self.channel.sigma_a
            )));
        }
        if !(self.channel.ds_ratio >= 0.0) || !self.channel.ds_ratio.is_finite() {
            return Err(HarnessError::InvalidConfig(format!(
                "channel.ds_ratio must be non-negative and finite, got {}",
                self.channel.ds_ratio
            )));
        }
        if self.snapshots.group_size < 2 {
            return Err(HarnessError::InvalidConfig(
                "snapshots.group_size must be at least 2 for cumulant features".to_string(),
            ));
        }
        if self.snapshots.total == 0 || self.snapshots.total % self.snapshots.group_size != 0 {
            return Err(HarnessError::InvalidConfig(format!(
                "snapshots.total ({}) must be a positive multiple of group_size ({})",
                self.snapshots.total, self.snapshots.group_size
            )));
        }
        if self.split.train_samples == 0 || self.split.test_samples == 0 {
            return Err(HarnessError::InvalidConfig(
                "split.train_samples and split.test_samples must be positive".to_string(),
            ));
        }
        let available = self.samples_per_grid();
        if self.split.train_samples + self.split.test_samples > available {
            return Err(HarnessError::InvalidConfig(format!(
                "split needs {} sample groups per grid but only {} are available",
                self.split.train_samples + self.split.test_samples,
                available
            )));
        }
        if self.noise.snr_list_db.is_empty() {
            return Err(HarnessError::InvalidConfig(
                "noise.snr_list_db must not be empty".to_string(),
            ));
        }
        for &snr in &self.noise.snr_list_db {
            if snr.is_nan() || snr == f64::NEG_INFINITY {
                return Err(HarnessError::InvalidConfig(format!(
                    "SNR points must not be NaN or -inf, got {}",
                    snr
                )));
            }
        }
        if self.noise.kind == NoiseModel::AlphaStable
            && !(self.noise.alpha > 0.0 && self.noise.alpha <= 2.0)
        {
            return Err(HarnessError::InvalidConfig(format!(
                "noise.alpha must lie in (0, 2], got {}",
                self.noise.alpha
            )));
        }
        if self.boosting.num_rounds == 0 {
            return Err(HarnessError::InvalidConfig(
                "boosting.num_rounds must be positive".to_string(),
            ));
        }
        if !(self.flom_p > 1.0 && self.flom_p <= 2.0) {
            return Err(HarnessError::InvalidConfig(format!(
                "flom_p must lie in (1, 2], got {}",
                self.flom_p
            )));
        }
        Ok(())
    }

    /// Grid cell count Q.
    pub fn num_grids(&self) -> usize {
        self.grid.nx * self.grid.ny
    }

    /// Fingerprint sample groups available per grid (L / T).
    pub fn samples_per_grid(&self) -> usize {
        self.snapshots.total / self.snapshots.group_size
    }

    /// Materializes the grid layout.
    pub fn grid_map(&self) -> Result<GridMap, HarnessError> {
        Ok(GridMap::rectangular(
            self.grid.nx,
            self.grid.ny,
            self.grid.spacing,
        )?)
    }
}

// ─────────────────────────────── 3. Methods and result rows ───────────────────────────────

/// A localization method under evaluation: one of the five single
/// fingerprint banks, or their MUCUS fusion.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Method {
    Rssf,
    Cmf,
    Ssf,
    Focf,
    Flomf,
    Mucus,
}

impl Method {
    /// Canonical reporting order.
    pub const ALL: [Method; 6] = [
        Method::Rssf,
        Method::Cmf,
        Method::Ssf,
        Method::Focf,
        Method::Flomf,
        Method::Mucus,
    ];

    /// Stable token used in CSV output.
    pub fn token(&self) -> &'static str {
        match self {
            Method::Rssf => "RSSF",
            Method::Cmf => "CMF",
            Method::Ssf => "SSF",
            Method::Focf => "FoCF",
            Method::Flomf => "FLOMF",
            Method::Mucus => "MUCUS",
        }
    }

    /// Parses a token produced by [`Method::token`].
    pub fn from_token(token: &str) -> Result<Self, HarnessError> {
        Method::ALL
            .iter()
            .copied()
            .find(|m| m.token() == token)
            .ok_or_else(|| HarnessError::Parse(format!("unknown method token {:?}", token)))
    }

    /// The fingerprint kind backing a single-bank method; `None` for MUCUS.
    pub fn kind(&self) -> Option<FingerprintKind> {
        match self {
            Method::Rssf => Some(FingerprintKind::Rssf),
            Method::Cmf => Some(FingerprintKind::Cmf),
            Method::Ssf => Some(FingerprintKind::Ssf),
            Method::Focf => Some(FingerprintKind::Focf),
            Method::Flomf => Some(FingerprintKind::Flomf),
            Method::Mucus => None,
        }
    }
}

/// One (noise, SNR, method) measurement.
#[derive(Debug, Clone, PartialEq)]
pub struct ResultRow {
    /// Noise family the sweep ran under.
    pub noise: NoiseModel,
    /// SNR point in dB.
    pub snr_db: f64,
    /// Localization method measured.
    pub method: Method,
    /// Mean prediction probability, averaged uniformly over grids.
    pub pred_prob: f64,
    /// RMSE in meters pooled over all test samples.
    pub rmse_m: f64,
    /// Wall-clock seconds spent on the whole SNR point.
    pub wall_s: f64,
    /// Master seed the experiment ran with.
    pub seed: u64,
}

// ─────────────────────────────── 4. Sweep execution ───────────────────────────────

/// Per-grid test predictions gathered at one SNR point.
#[derive(Debug, Clone, PartialEq)]
pub struct GridPredictions {
    /// True grid index of these test samples.
    pub grid: usize,
    /// Per-kind predicted grids, one entry per test sample.
    pub single: BTreeMap<FingerprintKind, Vec<usize>>,
    /// MUCUS-fused predicted grids, one entry per test sample.
    pub fused: Vec<usize>,
}

/// Everything measured at one SNR point.
#[derive(Debug, Clone, PartialEq)]
pub struct PointOutcome {
    /// SNR in dB.
    pub snr_db: f64,
    /// Predictions for every grid, ascending by grid index.
    pub per_grid: Vec<GridPredictions>,
    /// Wall-clock seconds for the point.
    pub wall_s: f64,
}

/// Synthesizes one multipath channel and one snapshot block per grid for
/// the given SNR point, ascending by grid index.
///
/// Each (SNR, grid) pair is an independent task seeded with
/// `seed XOR task_index` where `task_index = snr_index * Q + (grid - 1)`,
/// so results do not depend on scheduling order and any single task can be
/// reproduced in isolation.
pub fn synthesize_point_blocks(
    cfg: &ExperimentConfig,
    snr_index: usize,
) -> Result<Vec<SnapshotBlock>, HarnessError> {
    cfg.validate()?;
    let snr_db = *cfg.noise.snr_list_db.get(snr_index).ok_or_else(|| {
        HarnessError::InvalidConfig(format!(
            "snr_index {} is out of range for {} SNR points",
            snr_index,
            cfg.noise.snr_list_db.len()
        ))
    })?;
    let map = cfg.grid_map()?;
    let q_total = map.num_grids();
    let spec = cfg.noise.spec_for(snr_db)?;
    (1..=q_total)
        .into_par_iter()
        .map(|q| -> Result<SnapshotBlock, HarnessError> {
            let task = (snr_index * q_total + (q - 1)) as u64;
            let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ task);
            let chan = draw_multipath(
                q,
                &map,
                &cfg.array,
                cfg.channel.num_scatter_paths,
                cfg.channel.sigma_a,
                cfg.channel.ds_ratio,
                &mut rng,
            )?;
            let block_seed = rng.gen::<u64>();
            Ok(synthesize_block(
                &chan,
                &cfg.array,
                cfg.snapshots.total,
                &spec,
                block_seed,
            )?)
        })
        .collect()
}

/// Trains one classifier bank per fingerprint kind on a training split.
pub fn train_banks(
    train: &goof_extract::GoofDataset,
    num_rounds: usize,
) -> Result<Vec<ClassifierBank>, HarnessError> {
    FingerprintKind::ALL
        .iter()
        .map(|&kind| Ok(train_bank(train, kind, num_rounds)?))
        .collect()
}

/// Predicts every test sample at every grid with each bank, then fuses the
/// per-sample predictions with MUCUS.
///
/// The returned entries ascend by grid index; within a grid, predictions
/// follow the test dataset's sample order.
pub fn predict_test_split(
    banks: &[ClassifierBank],
    test: &goof_extract::GoofDataset,
) -> Result<Vec<GridPredictions>, HarnessError> {
    if banks.is_empty() {
        return Err(HarnessError::EmptyInput(
            "prediction needs at least one classifier bank".to_string(),
        ));
    }
    let q_total = test.meta().num_grids;
    (1..=q_total)
        .into_par_iter()
        .map(|q| -> Result<GridPredictions, HarnessError> {
            let mut single = BTreeMap::new();
            let mut j_count = None;
            for bank in banks {
                let samples = test.samples_for_grid(bank.kind, q).ok_or_else(|| {
                    HarnessError::EmptyInput(format!(
                        "no test samples for kind {} at grid {}",
                        bank.kind.label(),
                        q
                    ))
                })?;
                j_count = Some(samples.len());
                let preds = samples
                    .iter()
                    .map(|s| predict_grid(bank, &s.features))
                    .collect::<Result<Vec<_>, _>>()?;
                single.insert(bank.kind, preds);
            }
            let j_count = j_count.expect("at least one bank present");
            let entries: Vec<Vec<usize>> = (0..j_count)
                .map(|j| banks.iter().map(|b| single[&b.kind][j]).collect())
                .collect();
            let matrix = PredictionMatrix::new(entries, Some(q), q_total)?;
            let fused = mucus_fuse(&matrix);
            Ok(GridPredictions {
                grid: q,
                single,
                fused,
            })
        })
        .collect()
}

/// Runs the full pipeline at one SNR point: synthesis, GOOF extraction,
/// training, and prediction of every test sample at every grid.
pub fn run_point(cfg: &ExperimentConfig, snr_index: usize) -> Result<PointOutcome, HarnessError> {
    let start = Instant::now();
    let blocks = synthesize_point_blocks(cfg, snr_index)?;
    let snr_db = cfg.noise.snr_list_db[snr_index];
    let goof = build_goof(
        &blocks,
        cfg.snapshots.group_size,
        &FingerprintKind::ALL,
        cfg.flom_p,
    )?;
    drop(blocks);
    let (train, test) = goof.split_front_back(cfg.split.train_samples, cfg.split.test_samples)?;
    let banks = train_banks(&train, cfg.boosting.num_rounds)?;
    let per_grid = predict_test_split(&banks, &test)?;
    Ok(PointOutcome {
        snr_db,
        per_grid,
        wall_s: start.elapsed().as_secs_f64(),
    })
}

/// Reduces one point's predictions to six result rows, one per method.
///
/// Prediction probability averages the per-grid hit fractions uniformly
/// over grids; RMSE pools the squared center-to-center errors of all test
/// samples before taking the root.
pub fn rows_from_outcome(
    cfg: &ExperimentConfig,
    outcome: &PointOutcome,
) -> Result<Vec<ResultRow>, HarnessError> {
    if outcome.per_grid.is_empty() {
        return Err(HarnessError::EmptyInput(
            "a point outcome needs at least one grid".to_string(),
        ));
    }
    let map = cfg.grid_map()?;
    let mut rows = Vec::with_capacity(Method::ALL.len());
    for method in Method::ALL {
        let mut prob_sum = 0.0f64;
        let mut estimates: Vec<usize> = Vec::new();
        let mut truths: Vec<usize> = Vec::new();
        for gp in &outcome.per_grid {
            let preds: &[usize] = match method.kind() {
                Some(kind) => gp.single.get(&kind).ok_or_else(|| {
                    HarnessError::EmptyInput(format!(
                        "grid {} carries no predictions for kind {}",
                        gp.grid,
                        kind.label()
                    ))
                })?,
                None => &gp.fused,
            };
            prob_sum += prediction_probability(preds, gp.grid)?;
            estimates.extend_from_slice(preds);
            truths.extend(std::iter::repeat(gp.grid).take(preds.len()));
        }
        rows.push(ResultRow {
            noise: cfg.noise.kind,
            snr_db: outcome.snr_db,
            method,
            pred_prob: prob_sum / outcome.per_grid.len() as f64,
            rmse_m: rmse_meters(&estimates, &truths, &map)?,
            wall_s: outcome.wall_s,
            seed: cfg.seed,
        });
    }
    Ok(rows)
}

/// Runs every SNR point of the configured sweep and concatenates the per
/// point rows in list order, methods in canonical order within a point.
///
/// Points run one after another so at most one point's snapshot blocks are
/// resident; grids, extraction, and pairwise training parallelize inside a
/// point, and the index-ordered merges keep the output independent of
/// scheduling.
pub fn run_snr_sweep(cfg: &ExperimentConfig) -> Result<Vec<ResultRow>, HarnessError> {
    cfg.validate()?;
    let mut rows = Vec::with_capacity(cfg.noise.snr_list_db.len() * Method::ALL.len());
    for snr_index in 0..cfg.noise.snr_list_db.len() {
        let outcome = run_point(cfg, snr_index)?;
        rows.extend(rows_from_outcome(cfg, &outcome)?);
    }
    Ok(rows)
}

// ─────────────────────────────── 5. CSV serialization ───────────────────────────────

/// Column order of the results CSV.
pub const CSV_HEADER: &str = "noise,snr_db,method,pred_prob,rmse_m,wall_s,seed";

/// Formats a float with 17 significant digits, enough to reconstruct the
/// exact 64-bit value on parse.
pub fn format_f64(value: f64) -> String {
    format!("{:.16e}", value)
}

/// Parses a float serialized by [`format_f64`].
pub fn parse_f64(text: &str) -> Result<f64, HarnessError> {
    text.trim()
        .parse::<f64>()
        .map_err(|e| HarnessError::Parse(format!("invalid float {:?}: {}", text, e)))
}

/// CSV text plus a human-readable per-method aggregate table.
#[derive(Debug, Clone, PartialEq)]
pub struct Summary {
    /// Machine-readable rows, canonically sorted.
    pub csv: String,
    /// Per-method means across the sweep, for quick reading.
    pub table: String,
}

fn canonical_order(a: &ResultRow, b: &ResultRow) -> std::cmp::Ordering {
    a.noise
        .token()
        .cmp(b.noise.token())
        .then(a.snr_db.total_cmp(&b.snr_db))
        .then(a.method.cmp(&b.method))
        .then(a.seed.cmp(&b.seed))
}

/// Renders rows as CSV plus an aggregate table.
///
/// Rows are sorted by (noise, snr_db, method, seed) so output depends only
/// on the row multiset; floats print with 17 significant digits so
/// [`parse_results`] recovers them exactly.
pub fn summarize(rows: &[ResultRow]) -> Result<Summary, HarnessError> {
    if rows.is_empty() {
        return Err(HarnessError::EmptyInput(
            "summarize needs at least one result row".to_string(),
        ));
    }
    let mut sorted: Vec<&ResultRow> = rows.iter().collect();
    sorted.sort_by(|a, b| canonical_order(a, b));

    let mut csv = String::with_capacity(sorted.len() * 96 + CSV_HEADER.len() + 1);
    csv.push_str(CSV_HEADER);
    csv.push('\n');
    for row in &sorted {
        writeln!(
            csv,
            "{},{},{},{},{},{},{}",
            row.noise.token(),
            format_f64(row.snr_db),
            row.method.token(),
            format_f64(row.pred_prob),
            format_f64(row.rmse_m),
            format_f64(row.wall_s),
            row.seed
        )
        .expect("writing to a String cannot fail");
    }

    #[derive(Default)]
    struct Agg {
        points: usize,
        prob_sum: f64,
        rmse_sum: f64,
    }
    let mut aggregates: BTreeMap<(&'static str, Method), Agg> = BTreeMap::new();
    for row in &sorted {
        let agg = aggregates
            .entry((row.noise.token(), row.method))
            .or_default();
        agg.points += 1;
        agg.prob_sum += row.pred_prob;
        agg.rmse_sum += row.rmse_m;
    }
    let mut table = String::new();
    writeln!(
        table,
        "{:<13} {:<6} {:>6} {:>15} {:>12}",
        "noise", "method", "points", "mean_pred_prob", "mean_rmse_m"
    )
    .expect("writing to a String cannot fail");
    for ((noise, method), agg) in &aggregates {
        writeln!(
            table,
            "{:<13} {:<6} {:>6} {:>15.6} {:>12.6}",
            noise,
            method.token(),
            agg.points,
            agg.prob_sum / agg.points as f64,
            agg.rmse_sum / agg.points as f64
        )
        .expect("writing to a String cannot fail");
    }
    Ok(Summary { csv, table })
}

/// Parses a CSV document produced by [`summarize`] back into rows.
///
/// The header must match [`CSV_HEADER`] exactly; blank lines are ignored;
/// any malformed field is reported with its line number.
pub fn parse_results(text: &str) -> Result<Vec<ResultRow>, HarnessError> {
    let mut lines = text.lines().enumerate();
    let (_, header) = lines.next().ok_or_else(|| {
        HarnessError::Parse("results text is empty, expected a header line".to_string())
    })?;
    if header.trim() != CSV_HEADER {
        return Err(HarnessError::Parse(format!(
            "line 1: bad header {:?}, expected {:?}",
            header, CSV_HEADER
        )));
    }
    let mut rows = Vec::new();
    for (idx, line) in lines {
        let line_no = idx + 1;
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 7 {
            return Err(HarnessError::Parse(format!(
                "line {}: expected 7 fields, got {}",
                line_no,
                fields.len()
            )));
        }
        let contextualize =
            |e: HarnessError| HarnessError::Parse(format!("line {}: {}", line_no, e));
        rows.push(ResultRow {
            noise: NoiseModel::from_token(fields[0]).map_err(contextualize)?,
            snr_db: parse_f64(fields[1]).map_err(contextualize)?,
            method: Method::from_token(fields[2]).map_err(contextualize)?,
            pred_prob: parse_f64(fields[3]).map_err(contextualize)?,
            rmse_m: parse_f64(fields[4]).map_err(contextualize)?,
            wall_s: parse_f64(fields[5]).map_err(contextualize)?,
            seed: fields[6].trim().parse::<u64>().map_err(|e| {
                HarnessError::Parse(format!("line {}: invalid seed {:?}: {}", line_no, fields[6], e))
            })?,
        });
    }
    Ok(rows)
}

// ─────────────────────────────── 6. Tests ───────────────────────────────
