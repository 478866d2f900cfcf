//! MUCUS fusion of parallel classifier predictions, plus evaluation metrics.
//!
//! The banks trained per fingerprint kind each predict a grid label for a
//! test sample; stacking those labels over J samples and H banks gives a
//! prediction matrix.  MUCUS fuses each row with exponential occurrence
//! weights: predictions that recur often dominate sharply (the weight is
//! `exp(count)`), and a batch-consensus term pooled over the whole matrix
//! stabilizes samples whose own row is noisy.  The fused estimate is a real
//! number between the smallest and largest predicted label and is rounded
//! half away from zero onto the grid range.

use std::collections::{BTreeMap, BTreeSet};

use thiserror::Error;

use array_sim::GridMap;
use ensemble::{predict_grid, ClassifierBank, EnsembleError};
use goof_extract::FingerprintKind;

// ─────────────────────────────── 1. Errors ───────────────────────────────

/// Errors produced while assembling or fusing prediction matrices.
#[derive(Debug, Error)]
pub enum FusionError {
    /// A prediction matrix violated a structural invariant.
    #[error("invalid prediction matrix: {0}")]
    InvalidMatrix(String),
    /// An operation received an empty input it cannot act on.
    #[error("empty input: {0}")]
    EmptyInput(String),
    /// Two arguments had inconsistent lengths.
    #[error("length mismatch: {0}")]
    LengthMismatch(String),
    /// A pairwise classifier rejected a feature vector.
    #[error(transparent)]
    Ensemble(#[from] EnsembleError),
    /// A grid lookup failed.
    #[error(transparent)]
    Sim(#[from] array_sim::SimError),
}

// ─────────────────────────────── 2. Prediction matrix ───────────────────────────────

/// J x H matrix of grid predictions: one row per test sample, one column
/// per classifier bank.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PredictionMatrix {
    entries: Vec<Vec<usize>>,
    true_grid: Option<usize>,
    num_grids: usize,
}

impl PredictionMatrix {
    /// Builds a matrix after validating shape and label ranges: at least
    /// one row and one column, rectangular, and every entry (and the true
    /// label, if given) within `1..=num_grids`.
    pub fn new(
        entries: Vec<Vec<usize>>,
        true_grid: Option<usize>,
        num_grids: usize,
    ) -> Result<Self, FusionError> {
        if num_grids == 0 {
            return Err(FusionError::InvalidMatrix(
                "the grid count must be positive".to_string(),
            ));
        }
        if entries.is_empty() {
            return Err(FusionError::EmptyInput(
                "a prediction matrix needs at least one sample row".to_string(),
            ));
        }
        let h = entries[0].len();
        if h == 0 {
            return Err(FusionError::EmptyInput(
                "a prediction matrix needs at least one classifier column".to_string(),
            ));
        }
        for (j, row) in entries.iter().enumerate() {
            if row.len() != h {
                return Err(FusionError::InvalidMatrix(format!(
                    "row {} has {} entries, expected {}",
                    j,
                    row.len(),
                    h
                )));
            }
            for (col, &q) in row.iter().enumerate() {
                if q == 0 || q > num_grids {
                    return Err(FusionError::InvalidMatrix(format!(
                        "entry ({}, {}) = {} is outside 1..={}",
                        j, col, q, num_grids
                    )));
                }
            }
        }
        if let Some(q) = true_grid {
            if q == 0 || q > num_grids {
                return Err(FusionError::InvalidMatrix(format!(
                    "true grid {} is outside 1..={}",
                    q, num_grids
                )));
            }
        }
        Ok(Self {
            entries,
            true_grid,
            num_grids,
        })
    }

    /// The prediction rows, one per sample.
    pub fn entries(&self) -> &[Vec<usize>] {
        &self.entries
    }

    /// The true emitter grid, when known.
    pub fn true_grid(&self) -> Option<usize> {
        self.true_grid
    }

    /// Number of grid cells Q.
    pub fn num_grids(&self) -> usize {
        self.num_grids
    }

    /// Number of test samples J.
    pub fn num_samples(&self) -> usize {
        self.entries.len()
    }

    /// Number of classifier columns H.
    pub fn num_classifiers(&self) -> usize {
        self.entries[0].len()
    }
}

/// Runs every bank on its kind's test samples and stacks the predictions.
///
/// Column order follows the order of `banks`; row j of the matrix holds
/// each bank's prediction for the j-th sample of its kind.  All kinds must
/// supply the same number of samples (they describe the same J snapshot
/// groups), and each bank's kind must appear exactly once.
pub fn build_prediction_matrix(
    banks: &[ClassifierBank],
    samples_by_kind: &BTreeMap<FingerprintKind, Vec<Vec<f64>>>,
    true_grid: Option<usize>,
) -> Result<PredictionMatrix, FusionError> {
    if banks.is_empty() {
        return Err(FusionError::EmptyInput(
            "at least one classifier bank is required".to_string(),
        ));
    }
    let num_grids = banks[0].num_grids;
    let mut seen = BTreeSet::new();
    for bank in banks {
        if bank.num_grids != num_grids {
            return Err(FusionError::InvalidMatrix(format!(
                "banks disagree on the grid count: {} vs {}",
                bank.num_grids, num_grids
            )));
        }
        if !seen.insert(bank.kind) {
            return Err(FusionError::InvalidMatrix(format!(
                "duplicate bank for kind {}",
                bank.kind.label()
            )));
        }
    }

    let mut j_count: Option<usize> = None;
    for bank in banks {
        let samples = samples_by_kind.get(&bank.kind).ok_or_else(|| {
            FusionError::LengthMismatch(format!(
                "no test samples supplied for kind {}",
                bank.kind.label()
            ))
        })?;
        match j_count {
            None => j_count = Some(samples.len()),
            Some(j) if samples.len() != j => {
                return Err(FusionError::LengthMismatch(format!(
                    "kind {} supplies {} samples, other kinds supply {}",
                    bank.kind.label(),
                    samples.len(),
                    j
                )));
            }
            _ => {}
        }
    }
    let j = j_count.expect("at least one bank present");
    if j == 0 {
        return Err(FusionError::EmptyInput(
            "each kind must supply at least one test sample".to_string(),
        ));
    }

    let mut entries = vec![vec![0usize; banks.len()]; j];
    for (col, bank) in banks.iter().enumerate() {
        let samples = &samples_by_kind[&bank.kind];
        for (row, features) in samples.iter().enumerate() {
            entries[row][col] = predict_grid(bank, features)?;
        }
    }
    PredictionMatrix::new(entries, true_grid, num_grids)
}

// ─────────────────────────────── 3. Occurrence tables ───────────────────────────────

/// Distinct predictions with their multiplicities, ascending by prediction.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct OccurrenceTable {
    items: Vec<(usize, usize)>,
    total_distinct: usize,
}

impl OccurrenceTable {
    /// Counts occurrences over any non-empty prediction sequence.
    pub fn from_predictions<I>(predictions: I) -> Result<Self, FusionError>
    where
        I: IntoIterator<Item = usize>,
    {
        let mut counts: BTreeMap<usize, usize> = BTreeMap::new();
        for q in predictions {
            *counts.entry(q).or_insert(0) += 1;
        }
        if counts.is_empty() {
            return Err(FusionError::EmptyInput(
                "an occurrence table needs at least one prediction".to_string(),
            ));
        }
        let items: Vec<(usize, usize)> = counts.into_iter().collect();
        let total_distinct = items.len();
        Ok(Self {
            items,
            total_distinct,
        })
    }

    /// `(prediction, count)` pairs, ascending by prediction.
    pub fn items(&self) -> &[(usize, usize)] {
        &self.items
    }

    /// Number of distinct predictions.
    pub fn total_distinct(&self) -> usize {
        self.total_distinct
    }

    /// Number of pooled predictions (the counts' sum).
    pub fn total_count(&self) -> usize {
        self.items.iter().map(|&(_, n)| n).sum()
    }
}

/// Exponential-occurrence weighted mean of a table's predictions:
/// `sum_i q_i * exp(N_i) / sum_i exp(N_i)`.
///
/// Counts are shifted by their maximum before exponentiation, which leaves
/// the ratio unchanged and keeps every factor at most one, so large batches
/// cannot overflow.  The result is a convex combination of the distinct
/// predictions and therefore lies in `[min q_i, max q_i]`.
pub fn exp_weighted_estimate(table: &OccurrenceTable) -> f64 {
    let max_count = table
        .items()
        .iter()
        .map(|&(_, n)| n)
        .max()
        .expect("tables are non-empty by construction");
    let mut numerator = 0.0f64;
    let mut denominator = 0.0f64;
    for &(q, n) in table.items() {
        let w = (n as f64 - max_count as f64).exp();
        numerator += q as f64 * w;
        denominator += w;
    }
    numerator / denominator
}

// ─────────────────────────────── 4. MUCUS fusion ───────────────────────────────

/// Pre-rounding fused estimates, one per sample row.
///
/// For sample j the estimate is the mean of two exponential-occurrence
/// terms: one over row j's own H predictions, and one over all J x H
/// entries pooled, which injects batch consensus into every row.
pub fn mucus_fuse_raw(matrix: &PredictionMatrix) -> Vec<f64> {
    let pooled = OccurrenceTable::from_predictions(
        matrix.entries().iter().flat_map(|row| row.iter().copied()),
    )
    .expect("matrices hold at least one entry");
    let term_b = exp_weighted_estimate(&pooled);

    matrix
        .entries()
        .iter()
        .map(|row| {
            let table = OccurrenceTable::from_predictions(row.iter().copied())
                .expect("rows hold at least one entry");
            let term_a = exp_weighted_estimate(&table);
            0.5 * (term_a + term_b)
        })
        .collect()
}

/// Fused grid estimates: the raw values rounded half away from zero and
/// clamped onto `1..=Q`.
///
/// The rounded index may be a grid nobody predicted (the exponential mean
/// of labels 8 and 4 can land on 7); it is used as-is, since grid indices
/// map to coordinates and the metric consumes those coordinates.
pub fn mucus_fuse(matrix: &PredictionMatrix) -> Vec<usize> {
    mucus_fuse_raw(matrix)
        .into_iter()
        .map(|value| {
            let rounded = value.round();
            let clamped = rounded.clamp(1.0, matrix.num_grids() as f64);
            clamped as usize
        })
        .collect()
}

// ─────────────────────────────── 5. Metrics ───────────────────────────────

/// Fraction of estimates matching the true grid.
pub fn prediction_probability(
    estimates: &[usize],
    true_grid: usize,
) -> Result<f64, FusionError> {
    if estimates.is_empty() {
        return Err(FusionError::EmptyInput(
            "prediction probability needs at least one estimate".to_string(),
        ));
    }
    let hits = estimates.iter().filter(|&&q| q == true_grid).count();
    Ok(hits as f64 / estimates.len() as f64)
}

/// Root-mean-square localization error in meters, computed between the
/// grid-center coordinates of estimated and true labels.
pub fn rmse_meters(
    estimates: &[usize],
    truths: &[usize],
    grid: &GridMap,
) -> Result<f64, FusionError> {
    if estimates.len() != truths.len() {
        return Err(FusionError::LengthMismatch(format!(
            "{} estimates vs {} truths",
            estimates.len(),
            truths.len()
        )));
    }
    if estimates.is_empty() {
        return Err(FusionError::EmptyInput(
            "RMSE needs at least one estimate".to_string(),
        ));
    }
    let mut acc = 0.0f64;
    for (&est, &tru) in estimates.iter().zip(truths) {
        let (xe, ye) = grid.center(est)?;
        let (xt, yt) = grid.center(tru)?;
        acc += (xe - xt).powi(2) + (ye - yt).powi(2);
    }
    Ok((acc / estimates.len() as f64).sqrt())
}

// ─────────────────────────────── 6. Tests ───────────────────────────────
