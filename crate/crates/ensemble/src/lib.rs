//! One-vs-one AdaBoost ensembles over GOOF fingerprints.
//!
//! For each fingerprint kind a `ClassifierBank` holds one binary AdaBoost
//! classifier per unordered pair of grid cells.  Weak learners are decision
//! stumps with midpoint thresholds, the canonical choice that makes boosting
//! on low-dimensional magnitude features reproducible: training is fully
//! deterministic, so retraining on identical data yields an identical bank.

use ndarray::Array2;
use rayon::prelude::*;
use thiserror::Error;

use goof_extract::{FingerprintKind, GoofDataset};

/// Clamp bounds applied to the round error before computing the round
/// weight, preventing infinite weights at error 0 or 1.
pub const EPSILON_CLAMP: (f64, f64) = (1e-10, 1.0 - 1e-10);

// ─────────────────────────────── 1. Errors ───────────────────────────────

/// Errors produced while training or applying ensembles.
#[derive(Debug, Error)]
pub enum EnsembleError {
    /// Input dimensions disagree with the model or with each other.
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    /// A training parameter or weight vector was invalid.
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    /// Required training data was absent.
    #[error("missing data: {0}")]
    MissingData(String),
}

// ─────────────────────────────── 2. Decision stumps ───────────────────────────────

/// Axis-aligned threshold rule: `polarity` if `x[feature_index] > threshold`,
/// otherwise `-polarity`.
#[derive(Debug, Clone, PartialEq)]
pub struct DecisionStump {
    /// Index of the feature the stump inspects.
    pub feature_index: usize,
    /// Decision threshold (midpoint between two training values).
    pub threshold: f64,
    /// Output on the "greater than" side: +1 or -1.
    pub polarity: i8,
}

impl DecisionStump {
    /// Evaluates the stump on one feature vector.
    ///
    /// The caller guarantees `feature_index < x.len()`; bank and classifier
    /// entry points validate dimensions before reaching this.
    pub fn classify(&self, x: &[f64]) -> i8 {
        if x[self.feature_index] > self.threshold {
            self.polarity
        } else {
            -self.polarity
        }
    }
}

/// One accepted boosting round: a stump and its vote weight.
#[derive(Debug, Clone, PartialEq)]
pub struct BoostRound {
    /// The weak hypothesis chosen in this round.
    pub stump: DecisionStump,
    /// Non-negative vote weight alpha.
    pub alpha: f64,
}

/// A trained binary classifier for one grid pair.
#[derive(Debug, Clone, PartialEq)]
pub struct BinaryAdaBoost {
    /// The two grid labels this classifier separates, lower first; a
    /// positive margin votes for the lower grid.
    pub class_pair: (usize, usize),
    /// Feature dimension the classifier was trained on.
    pub num_features: usize,
    /// Accepted rounds, between 1 and the requested round budget.
    pub rounds: Vec<BoostRound>,
}

// ─────────────────────────────── 3. Stump training ───────────────────────────────

/// Per-feature sample orderings, sorted by ascending feature value.
///
/// Sorting once and reusing the orders across boosting rounds turns each
/// round into a linear sweep per feature.
struct FeatureOrders {
    orders: Vec<Vec<u32>>,
}

impl FeatureOrders {
    fn new(features: &Array2<f64>) -> Self {
        let s = features.nrows();
        let f = features.ncols();
        let mut orders = Vec::with_capacity(f);
        for col in 0..f {
            let mut idx: Vec<u32> = (0..s as u32).collect();
            idx.sort_by(|&a, &b| {
                features[(a as usize, col)]
                    .partial_cmp(&features[(b as usize, col)])
                    .expect("features validated finite")
            });
            orders.push(idx);
        }
        Self { orders }
    }
}

fn validate_training_inputs(
    features: &Array2<f64>,
    labels: &[i8],
) -> Result<(), EnsembleError> {
    let s = features.nrows();
    if s == 0 {
        return Err(EnsembleError::InvalidParameter(
            "training requires at least one sample".to_string(),
        ));
    }
    if features.ncols() == 0 {
        return Err(EnsembleError::InvalidParameter(
            "training requires at least one feature".to_string(),
        ));
    }
    if labels.len() != s {
        return Err(EnsembleError::ShapeMismatch(format!(
            "{} samples but {} labels",
            s,
            labels.len()
        )));
    }
    if labels.iter().any(|&l| l != 1 && l != -1) {
        return Err(EnsembleError::InvalidParameter(
            "labels must be +1 or -1".to_string(),
        ));
    }
    if features.iter().any(|x| !x.is_finite()) {
        return Err(EnsembleError::InvalidParameter(
            "features must all be finite".to_string(),
        ));
    }
    Ok(())
}

/// Finds the stump minimizing weighted 0/1 error.
///
/// Candidate thresholds are the midpoints between consecutive distinct
/// sorted values of each feature.  Both polarities are scored at every
/// candidate; exact error ties resolve to the lowest feature index, then
/// the lowest threshold, then polarity +1 (the scan considers +1 first and
/// only replaces the incumbent on a strictly smaller error).
///
/// Degenerate inputs have defined fallbacks rather than errors: if all
/// labels agree, a trivial always-fire stump on feature 0 returns that
/// label with error 0; if every feature is constant while labels are mixed,
/// a constant stump outputs the weighted majority label.
pub fn train_stump(
    features: &Array2<f64>,
    labels: &[i8],
    weights: &[f64],
) -> Result<(DecisionStump, f64), EnsembleError> {
    validate_training_inputs(features, labels)?;
    let s = features.nrows();
    if weights.len() != s {
        return Err(EnsembleError::ShapeMismatch(format!(
            "{} samples but {} weights",
            s,
            weights.len()
        )));
    }
    if weights.iter().any(|&w| !w.is_finite() || w < 0.0) {
        return Err(EnsembleError::InvalidParameter(
            "weights must be finite and non-negative".to_string(),
        ));
    }
    let total: f64 = weights.iter().sum();
    if (total - 1.0).abs() > 1e-9 {
        return Err(EnsembleError::InvalidParameter(format!(
            "weights must sum to 1 within 1e-9, got {}",
            total
        )));
    }
    let orders = FeatureOrders::new(features);
    Ok(train_stump_with_orders(features, labels, weights, &orders))
}

/// Core stump search; inputs already validated, orders pre-sorted.
fn train_stump_with_orders(
    features: &Array2<f64>,
    labels: &[i8],
    weights: &[f64],
    orders: &FeatureOrders,
) -> (DecisionStump, f64) {
    let s = features.nrows();
    let f = features.ncols();

    // Degenerate case: a single represented label needs no boundary.
    if labels.iter().all(|&l| l == labels[0]) {
        let min0 = orders.orders[0][0] as usize;
        return (
            DecisionStump {
                feature_index: 0,
                threshold: features[(min0, 0)] - 1.0,
                polarity: labels[0],
            },
            0.0,
        );
    }

    let total_pos: f64 = (0..s).map(|i| if labels[i] > 0 { weights[i] } else { 0.0 }).sum();
    let total_neg: f64 = (0..s).map(|i| if labels[i] < 0 { weights[i] } else { 0.0 }).sum();

    let mut best: Option<(f64, DecisionStump)> = None;
    for col in 0..f {
        let order = &orders.orders[col];
        // Running weight of +1 / -1 samples at or below the scan point.
        let mut pos_left = 0.0f64;
        let mut neg_left = 0.0f64;
        for k in 0..s - 1 {
            let idx = order[k] as usize;
            if labels[idx] > 0 {
                pos_left += weights[idx];
            } else {
                neg_left += weights[idx];
            }
            let here = features[(idx, col)];
            let next = features[(order[k + 1] as usize, col)];
            if here == next {
                continue;
            }
            let threshold = 0.5 * (here + next);
            // Polarity +1 misclassifies positives at or below the threshold
            // and negatives above it; polarity -1 is the complement.
            let err_pos = pos_left + (total_neg - neg_left);
            let err_neg = (total_pos - pos_left) + neg_left;
            for (err, polarity) in [(err_pos, 1i8), (err_neg, -1i8)] {
                let better = match &best {
                    None => true,
                    Some((best_err, _)) => err < *best_err,
                };
                if better {
                    best = Some((
                        err,
                        DecisionStump {
                            feature_index: col,
                            threshold,
                            polarity,
                        },
                    ));
                }
            }
        }
    }

    match best {
        Some((err, stump)) => (stump, err),
        None => {
            // Every feature is constant but labels are mixed: emit a
            // constant stump voting the weighted majority (+1 on ties).
            let polarity: i8 = if total_pos >= total_neg { 1 } else { -1 };
            let err = if polarity > 0 { total_neg } else { total_pos };
            (
                DecisionStump {
                    feature_index: 0,
                    threshold: features[(0, 0)] - 1.0,
                    polarity,
                },
                err,
            )
        }
    }
}

// ─────────────────────────────── 4. AdaBoost training ───────────────────────────────

/// Diagnostic trace of one boosting run.
#[derive(Debug, Clone)]
pub struct TrainTrace {
    /// Sample distributions: the initial uniform one, then the distribution
    /// after each accepted round's update.
    pub distributions: Vec<Vec<f64>>,
    /// Raw (unclamped) weighted error of each accepted round.
    pub round_errors: Vec<f64>,
    /// Normalizer Z of each accepted round's distribution update.
    pub normalizers: Vec<f64>,
}

/// Trains a binary AdaBoost classifier and returns its diagnostic trace.
///
/// Rounds are built iteratively from the uniform distribution: each round
/// trains a stump, computes its weighted error, and stops the loop if that
/// error has reached 0.5 (no remaining edge; a weight of exactly 0.5 would
/// earn alpha = 0, so the round is not appended).  Otherwise the error is
/// clamped to `EPSILON_CLAMP`, the round weight is
/// `alpha = ln((1 - e) / e) / 2`, and the distribution is reweighted by
/// `exp(-alpha * label * hypothesis)` and renormalized.
///
/// If the very first round already has no edge, the classifier still gets
/// that round with `alpha = 0` so that every trained model carries at least
/// one stump.
pub fn train_binary_adaboost_traced(
    features: &Array2<f64>,
    labels: &[i8],
    num_rounds: usize,
    class_pair: (usize, usize),
) -> Result<(BinaryAdaBoost, TrainTrace), EnsembleError> {
    if num_rounds == 0 {
        return Err(EnsembleError::InvalidParameter(
            "at least one boosting round is required".to_string(),
        ));
    }
    if class_pair.0 >= class_pair.1 {
        return Err(EnsembleError::InvalidParameter(format!(
            "class pair must be ordered, got ({}, {})",
            class_pair.0, class_pair.1
        )));
    }
    validate_training_inputs(features, labels)?;

    let s = features.nrows();
    let orders = FeatureOrders::new(features);
    let mut dist = vec![1.0 / s as f64; s];
    let mut rounds: Vec<BoostRound> = Vec::new();
    let mut trace = TrainTrace {
        distributions: vec![dist.clone()],
        round_errors: Vec::new(),
        normalizers: Vec::new(),
    };

    let mut first_stump: Option<(DecisionStump, f64)> = None;
    for _w in 0..num_rounds {
        let (stump, eps) = train_stump_with_orders(features, labels, &dist, &orders);
        if first_stump.is_none() {
            first_stump = Some((stump.clone(), eps));
        }
        if eps >= 0.5 {
            break;
        }
        let clamped = eps.clamp(EPSILON_CLAMP.0, EPSILON_CLAMP.1);
        let alpha = 0.5 * ((1.0 - clamped) / clamped).ln();

        let mut z = 0.0f64;
        for i in 0..s {
            let h = stump.classify(features.row(i).to_slice().expect("row is contiguous"));
            dist[i] *= (-alpha * f64::from(labels[i]) * f64::from(h)).exp();
            z += dist[i];
        }
        for d in dist.iter_mut() {
            *d /= z;
        }

        rounds.push(BoostRound { stump, alpha });
        trace.round_errors.push(eps);
        trace.normalizers.push(z);
        trace.distributions.push(dist.clone());
    }

    if rounds.is_empty() {
        // The first stump had no edge; keep it with zero weight so the
        // model satisfies 1 <= |rounds|.  The distribution is untouched
        // (alpha = 0 reweights by exp(0) = 1).
        let (stump, eps) = first_stump.expect("at least one round was attempted");
        rounds.push(BoostRound { stump, alpha: 0.0 });
        trace.round_errors.push(eps);
        trace.normalizers.push(1.0);
        trace.distributions.push(dist.clone());
    }

    Ok((
        BinaryAdaBoost {
            class_pair,
            num_features: features.ncols(),
            rounds,
        },
        trace,
    ))
}

/// Trains a binary AdaBoost classifier for one ordered grid pair.
pub fn train_binary_adaboost(
    features: &Array2<f64>,
    labels: &[i8],
    num_rounds: usize,
    class_pair: (usize, usize),
) -> Result<BinaryAdaBoost, EnsembleError> {
    train_binary_adaboost_traced(features, labels, num_rounds, class_pair).map(|(model, _)| model)
}

// ─────────────────────────────── 5. Prediction ───────────────────────────────

/// Weighted vote margin `sum_w alpha_w * h_w(x)`.
///
/// A positive margin favors the lower grid of the pair; exactly zero also
/// resolves to the lower grid.
pub fn predict_binary_margin(
    model: &BinaryAdaBoost,
    features: &[f64],
) -> Result<f64, EnsembleError> {
    if features.len() != model.num_features {
        return Err(EnsembleError::ShapeMismatch(format!(
            "classifier for pair ({}, {}) expects {} features, got {}",
            model.class_pair.0,
            model.class_pair.1,
            model.num_features,
            features.len()
        )));
    }
    Ok(model
        .rounds
        .iter()
        .map(|r| r.alpha * f64::from(r.stump.classify(features)))
        .sum())
}

/// A full one-vs-one bank for one fingerprint kind.
#[derive(Debug, Clone, PartialEq)]
pub struct ClassifierBank {
    /// Fingerprint kind the bank consumes.
    pub kind: FingerprintKind,
    /// Number of grid cells Q; labels run 1..=Q.
    pub num_grids: usize,
    /// One classifier per unordered pair, in lexicographic (a, b) order
    /// with a < b.
    pub pairwise: Vec<BinaryAdaBoost>,
}

impl ClassifierBank {
    /// Feature dimension the bank expects.
    pub fn num_features(&self) -> usize {
        self.pairwise.first().map_or(0, |c| c.num_features)
    }
}

/// Trains one binary classifier per unordered grid pair for `kind`.
///
/// Each pair (a, b) with a < b trains on exactly the samples of those two
/// grids, labeling the lower grid +1.  Pairs are independent and train in
/// parallel; the output order is the lexicographic pair order regardless of
/// scheduling.
pub fn train_bank(
    goof: &GoofDataset,
    kind: FingerprintKind,
    num_rounds: usize,
) -> Result<ClassifierBank, EnsembleError> {
    let samples = goof.samples(kind).ok_or_else(|| {
        EnsembleError::MissingData(format!("dataset has no {} samples", kind.label()))
    })?;
    let meta = goof.meta();
    let q = meta.num_grids;
    if q < 2 {
        return Err(EnsembleError::InvalidParameter(
            "one-vs-one training needs at least two grids".to_string(),
        ));
    }
    let dim = kind.feature_len(meta.num_antennas);
    debug_assert!(samples.len() == q * meta.samples_per_grid);

    let pairs: Vec<(usize, usize)> = (1..=q)
        .flat_map(|a| ((a + 1)..=q).map(move |b| (a, b)))
        .collect();

    let pairwise = pairs
        .par_iter()
        .map(|&(a, b)| {
            let cell_a = goof
                .samples_for_grid(kind, a)
                .expect("grid indices are in range");
            let cell_b = goof
                .samples_for_grid(kind, b)
                .expect("grid indices are in range");
            let s = cell_a.len() + cell_b.len();
            let mut features = Array2::<f64>::zeros((s, dim));
            let mut labels = Vec::with_capacity(s);
            for (row, sample) in cell_a.iter().chain(cell_b.iter()).enumerate() {
                for (col, &x) in sample.features.iter().enumerate() {
                    features[(row, col)] = x;
                }
                labels.push(if sample.grid == a { 1i8 } else { -1i8 });
            }
            train_binary_adaboost(&features, &labels, num_rounds, (a, b))
        })
        .collect::<Result<Vec<_>, EnsembleError>>()?;

    Ok(ClassifierBank {
        kind,
        num_grids: q,
        pairwise,
    })
}

/// Decodes the one-vs-one votes into a single grid label.
///
/// Every pairwise classifier votes for one of its two grids (margin >= 0
/// votes the lower grid).  The winner is the grid with the most votes; vote
/// ties go to the grid with the larger sum of |margin| over all of its
/// contests, and any remaining tie goes to the lowest grid index.
pub fn predict_grid(bank: &ClassifierBank, features: &[f64]) -> Result<usize, EnsembleError> {
    let q = bank.num_grids;
    let expected = q * (q - 1) / 2;
    if bank.pairwise.len() != expected {
        return Err(EnsembleError::InvalidParameter(format!(
            "bank holds {} classifiers, expected {} for {} grids",
            bank.pairwise.len(),
            expected,
            q
        )));
    }
    let mut votes = vec![0u32; q];
    let mut margin_mass = vec![0.0f64; q];
    for clf in &bank.pairwise {
        let (a, b) = clf.class_pair;
        let margin = predict_binary_margin(clf, features)?;
        if margin >= 0.0 {
            votes[a - 1] += 1;
        } else {
            votes[b - 1] += 1;
        }
        margin_mass[a - 1] += margin.abs();
        margin_mass[b - 1] += margin.abs();
    }
    let mut best = 0usize;
    for g in 1..q {
        if votes[g] > votes[best]
            || (votes[g] == votes[best] && margin_mass[g] > margin_mass[best])
        {
            best = g;
        }
    }
    Ok(best + 1)
}

// ─────────────────────────────── 6. Tests ───────────────────────────────
