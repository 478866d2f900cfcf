//! Durable text archives with a validated header and bit-exact round trips.
//!
//! Every archive is line-oriented UTF-8:
//!
//! ```text
//! GOOF1 <kind> <version>
//! meta <key> <value>
//! <payload body lines>
//! end
//! ```
//!
//! The first line carries the magic string, the payload kind (`snapshots`,
//! `goof`, `bank`, or `results`), and the format version; both are checked
//! before any payload line is read.  Reals are written with 17 significant
//! digits and complexes as `re im` pairs, so loading reproduces the exact
//! 64-bit values.  Writers emit to a temporary sibling file and rename it
//! into place, so a crashed save never leaves a half-written archive, and
//! loaders fail closed: any structural problem aborts with a line-numbered
//! error and no partial payload.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use ndarray::Array2;
use num_complex::Complex64;
use thiserror::Error;

use array_sim::{NoiseKind, NoiseSpec, SimError, SnapshotBlock};
use ensemble::{BinaryAdaBoost, BoostRound, ClassifierBank, DecisionStump, EnsembleError};
use eval_harness::{format_f64, HarnessError, Method, NoiseModel, ResultRow};
use goof_extract::{ExtractError, FingerprintKind, FingerprintSample, GoofDataset, GoofMeta};

// ─────────────────────────────── 1. Errors and constants ───────────────────────────────

/// Magic string opening every archive.
pub const ARCHIVE_MAGIC: &str = "GOOF1";

/// Current archive format version.
pub const ARCHIVE_VERSION: u32 = 1;

/// Errors raised by persistence, configuration, and the CLI layer.
#[derive(Debug, Error)]
pub enum PersistError {
    /// Filesystem access failed.
    #[error("i/o failure: {0}")]
    Io(#[from] std::io::Error),
    /// An archive violated the format (bad magic, version, or structure).
    #[error("archive format error: {0}")]
    Format(String),
    /// An archive held a different payload kind than the caller expected.
    #[error("archive kind mismatch: expected {expected}, found {found}")]
    KindMismatch {
        /// Kind the caller asked for.
        expected: &'static str,
        /// Kind the file declared.
        found: String,
    },
    /// A configuration document or override was invalid.
    #[error("configuration error: {0}")]
    Config(String),
    /// Propagated signal-simulation error.
    #[error(transparent)]
    Sim(#[from] SimError),
    /// Propagated fingerprint-extraction error.
    #[error(transparent)]
    Extract(#[from] ExtractError),
    /// Propagated classifier error.
    #[error(transparent)]
    Ensemble(#[from] EnsembleError),
    /// Propagated fusion error.
    #[error(transparent)]
    Fusion(#[from] mucus_fusion::FusionError),
    /// Propagated harness error.
    #[error(transparent)]
    Harness(#[from] HarnessError),
}

/// A payload bound for or recovered from an archive; the variant fixes the
/// header's kind token, so a payload can never be saved under the wrong
/// kind.
#[derive(Debug, Clone, PartialEq)]
pub enum ArchivePayload {
    /// Per-grid snapshot blocks from `simulate`.
    Snapshots(Vec<SnapshotBlock>),
    /// A complete fingerprint database from `extract`.
    Goof(GoofDataset),
    /// Trained classifier banks from `train`.
    Banks(Vec<ClassifierBank>),
    /// Sweep result rows from `evaluate`.
    Results(Vec<ResultRow>),
}

impl ArchivePayload {
    /// Header token for this payload kind.
    pub fn kind(&self) -> &'static str {
        match self {
            ArchivePayload::Snapshots(_) => "snapshots",
            ArchivePayload::Goof(_) => "goof",
            ArchivePayload::Banks(_) => "bank",
            ArchivePayload::Results(_) => "results",
        }
    }
}

// ─────────────────────────────── 2. Low-level line helpers ───────────────────────────────

fn fmt(value: f64) -> String {
    format_f64(value)
}

struct LineReader<R: BufRead> {
    inner: std::io::Lines<R>,
    line_no: usize,
}

impl<R: BufRead> LineReader<R> {
    fn new(reader: R) -> Self {
        Self {
            inner: reader.lines(),
            line_no: 0,
        }
    }

    /// Next line, trimmed; `None` at end of file.
    fn next_line(&mut self) -> Result<Option<String>, PersistError> {
        match self.inner.next() {
            None => Ok(None),
            Some(line) => {
                self.line_no += 1;
                Ok(Some(line?.trim_end().to_string()))
            }
        }
    }

    /// Next line, or a truncation error mentioning what was expected.
    fn expect_line(&mut self, what: &str) -> Result<String, PersistError> {
        self.next_line()?.ok_or_else(|| {
            PersistError::Format(format!(
                "truncated archive: expected {} after line {}",
                what, self.line_no
            ))
        })
    }

    fn error(&self, message: impl std::fmt::Display) -> PersistError {
        PersistError::Format(format!("line {}: {}", self.line_no, message))
    }
}

fn parse_num<T: std::str::FromStr>(token: &str, what: &str, line_no: usize) -> Result<T, PersistError>
where
    T::Err: std::fmt::Display,
{
    token.parse::<T>().map_err(|e| {
        PersistError::Format(format!("line {}: invalid {} {:?}: {}", line_no, what, token, e))
    })
}

/// Splits a payload line into its leading keyword and the remaining tokens,
/// verifying the keyword.
fn expect_keyword<'a>(
    line: &'a str,
    keyword: &str,
    line_no: usize,
) -> Result<Vec<&'a str>, PersistError> {
    let mut tokens = line.split_whitespace();
    match tokens.next() {
        Some(k) if k == keyword => Ok(tokens.collect()),
        Some(other) => Err(PersistError::Format(format!(
            "line {}: expected {:?}, found {:?}",
            line_no, keyword, other
        ))),
        None => Err(PersistError::Format(format!(
            "line {}: expected {:?}, found a blank line",
            line_no, keyword
        ))),
    }
}

// ─────────────────────────────── 3. Saving ───────────────────────────────

/// Serializes a payload to `path` atomically (write temp, then rename).
pub fn save_archive(payload: &ArchivePayload, path: &Path) -> Result<(), PersistError> {
    let parent = path.parent().map(Path::to_path_buf).unwrap_or_default();
    let file_name = path
        .file_name()
        .ok_or_else(|| PersistError::Format(format!("path {:?} has no file name", path)))?;
    let tmp_path = parent.join(format!(
        "{}.tmp.{}",
        file_name.to_string_lossy(),
        std::process::id()
    ));
    {
        let mut out = BufWriter::new(File::create(&tmp_path)?);
        let write_result = write_payload(&mut out, payload);
        let flush_result = out.flush();
        if let Err(e) = write_result.map_err(PersistError::from).and(flush_result.map_err(PersistError::from)) {
            let _ = std::fs::remove_file(&tmp_path);
            return Err(e);
        }
    }
    std::fs::rename(&tmp_path, path)?;
    Ok(())
}

fn write_payload<W: Write>(out: &mut W, payload: &ArchivePayload) -> std::io::Result<()> {
    writeln!(out, "{} {} {}", ARCHIVE_MAGIC, payload.kind(), ARCHIVE_VERSION)?;
    match payload {
        ArchivePayload::Snapshots(blocks) => write_snapshots(out, blocks)?,
        ArchivePayload::Goof(dataset) => write_goof(out, dataset)?,
        ArchivePayload::Banks(banks) => write_banks(out, banks)?,
        ArchivePayload::Results(rows) => write_results(out, rows)?,
    }
    writeln!(out, "end")
}

fn write_snapshots<W: Write>(out: &mut W, blocks: &[SnapshotBlock]) -> std::io::Result<()> {
    writeln!(out, "meta count {}", blocks.len())?;
    for block in blocks {
        let (m, l) = (block.num_antennas(), block.num_snapshots());
        let noise = match block.noise.kind {
            NoiseKind::GaussianWhite => "gaussian".to_string(),
            NoiseKind::SymmetricAlphaStable { alpha } => {
                format!("alpha_stable {}", fmt(alpha))
            }
        };
        writeln!(
            out,
            "block {} {} {} {} {} {} {}",
            block.grid,
            m,
            l,
            block.seed,
            fmt(block.noise.snr_db),
            fmt(block.noise.sigma_s2),
            noise
        )?;
        for i in 0..m {
            write!(out, "row")?;
            for t in 0..l {
                let z = block.samples[(i, t)];
                write!(out, " {} {}", fmt(z.re), fmt(z.im))?;
            }
            writeln!(out)?;
        }
    }
    Ok(())
}

fn write_goof<W: Write>(out: &mut W, dataset: &GoofDataset) -> std::io::Result<()> {
    let meta = dataset.meta();
    writeln!(out, "meta num_antennas {}", meta.num_antennas)?;
    writeln!(out, "meta num_grids {}", meta.num_grids)?;
    writeln!(out, "meta group_size {}", meta.group_size)?;
    writeln!(out, "meta samples_per_grid {}", meta.samples_per_grid)?;
    let kinds = dataset.kinds();
    let labels: Vec<&str> = kinds.iter().map(|k| k.label()).collect();
    writeln!(out, "meta kinds {}", labels.join(","))?;
    for &kind in &kinds {
        for sample in dataset.samples(kind).expect("kind is present") {
            write!(out, "sample {} {}", kind.label(), sample.grid)?;
            for &f in &sample.features {
                write!(out, " {}", fmt(f))?;
            }
            writeln!(out)?;
        }
    }
    Ok(())
}

fn write_banks<W: Write>(out: &mut W, banks: &[ClassifierBank]) -> std::io::Result<()> {
    writeln!(out, "meta count {}", banks.len())?;
    for bank in banks {
        writeln!(
            out,
            "bank {} {} {} {}",
            bank.kind.label(),
            bank.num_grids,
            bank.num_features(),
            bank.pairwise.len()
        )?;
        for clf in &bank.pairwise {
            writeln!(
                out,
                "pair {} {} {}",
                clf.class_pair.0,
                clf.class_pair.1,
                clf.rounds.len()
            )?;
            for round in &clf.rounds {
                writeln!(
                    out,
                    "round {} {} {} {}",
                    round.stump.feature_index,
                    fmt(round.stump.threshold),
                    round.stump.polarity,
                    fmt(round.alpha)
                )?;
            }
        }
    }
    Ok(())
}

fn write_results<W: Write>(out: &mut W, rows: &[ResultRow]) -> std::io::Result<()> {
    writeln!(out, "meta count {}", rows.len())?;
    for row in rows {
        writeln!(
            out,
            "row {} {} {} {} {} {} {}",
            row.noise.token(),
            fmt(row.snr_db),
            row.method.token(),
            fmt(row.pred_prob),
            fmt(row.rmse_m),
            fmt(row.wall_s),
            row.seed
        )?;
    }
    Ok(())
}

// ─────────────────────────────── 4. Loading ───────────────────────────────

/// Reads an archive, validating the header before any payload line.
pub fn load_archive(path: &Path) -> Result<ArchivePayload, PersistError> {
    let mut reader = LineReader::new(BufReader::new(File::open(path)?));
    let header = reader.expect_line("a header line")?;
    let tokens: Vec<&str> = header.split_whitespace().collect();
    if tokens.len() != 3 {
        return Err(reader.error(format!(
            "bad header {:?}: expected \"{} <kind> <version>\"",
            header, ARCHIVE_MAGIC
        )));
    }
    if tokens[0] != ARCHIVE_MAGIC {
        return Err(reader.error(format!(
            "bad magic {:?}, expected {:?}",
            tokens[0], ARCHIVE_MAGIC
        )));
    }
    let version: u32 = parse_num(tokens[2], "version", reader.line_no)?;
    if version != ARCHIVE_VERSION {
        return Err(reader.error(format!(
            "unsupported version {} (this build reads version {})",
            version, ARCHIVE_VERSION
        )));
    }
    let payload = match tokens[1] {
        "snapshots" => ArchivePayload::Snapshots(read_snapshots(&mut reader)?),
        "goof" => ArchivePayload::Goof(read_goof(&mut reader)?),
        "bank" => ArchivePayload::Banks(read_banks(&mut reader)?),
        "results" => ArchivePayload::Results(read_results(&mut reader)?),
        other => {
            return Err(reader.error(format!(
                "unknown payload kind {:?} (expected snapshots, goof, bank, or results)",
                other
            )))
        }
    };
    let terminator = reader.expect_line("the \"end\" terminator")?;
    if terminator != "end" {
        return Err(reader.error(format!(
            "expected the \"end\" terminator, found {:?}",
            terminator
        )));
    }
    if let Some(extra) = reader.next_line()? {
        if !extra.trim().is_empty() {
            return Err(reader.error(format!(
                "unexpected content after the terminator: {:?}",
                extra
            )));
        }
    }
    Ok(payload)
}

/// Reads `meta <key> <value>` lines for the listed keys, in order.
fn read_meta<R: BufRead>(
    reader: &mut LineReader<R>,
    keys: &[&str],
) -> Result<Vec<String>, PersistError> {
    let mut values = Vec::with_capacity(keys.len());
    for key in keys {
        let line = reader.expect_line(&format!("\"meta {}\"", key))?;
        let tokens = expect_keyword(&line, "meta", reader.line_no)?;
        if tokens.len() < 2 || tokens[0] != *key {
            return Err(reader.error(format!(
                "expected \"meta {} <value>\", found {:?}",
                key, line
            )));
        }
        values.push(tokens[1..].join(" "));
    }
    Ok(values)
}

fn read_snapshots<R: BufRead>(
    reader: &mut LineReader<R>,
) -> Result<Vec<SnapshotBlock>, PersistError> {
    let meta = read_meta(reader, &["count"])?;
    let count: usize = parse_num(&meta[0], "block count", reader.line_no)?;
    let mut blocks = Vec::with_capacity(count);
    for _ in 0..count {
        let line = reader.expect_line("a \"block\" line")?;
        let tokens = expect_keyword(&line, "block", reader.line_no)?;
        if tokens.len() < 7 {
            return Err(reader.error("block line needs grid, shape, seed, and noise fields"));
        }
        let grid: usize = parse_num(tokens[0], "grid", reader.line_no)?;
        let m: usize = parse_num(tokens[1], "antenna count", reader.line_no)?;
        let l: usize = parse_num(tokens[2], "snapshot count", reader.line_no)?;
        let seed: u64 = parse_num(tokens[3], "seed", reader.line_no)?;
        let snr_db: f64 = parse_num(tokens[4], "snr_db", reader.line_no)?;
        let sigma_s2: f64 = parse_num(tokens[5], "sigma_s2", reader.line_no)?;
        let kind = match tokens[6] {
            "gaussian" if tokens.len() == 7 => NoiseKind::GaussianWhite,
            "alpha_stable" if tokens.len() == 8 => NoiseKind::SymmetricAlphaStable {
                alpha: parse_num(tokens[7], "alpha", reader.line_no)?,
            },
            _ => return Err(reader.error(format!("invalid noise fields in {:?}", line))),
        };
        let mut samples = Array2::<Complex64>::zeros((m, l));
        for i in 0..m {
            let row_line = reader.expect_line("a \"row\" line")?;
            let row = expect_keyword(&row_line, "row", reader.line_no)?;
            if row.len() != 2 * l {
                return Err(reader.error(format!(
                    "row holds {} numbers, expected {} (2 per snapshot)",
                    row.len(),
                    2 * l
                )));
            }
            for t in 0..l {
                samples[(i, t)] = Complex64::new(
                    parse_num(row[2 * t], "real part", reader.line_no)?,
                    parse_num(row[2 * t + 1], "imaginary part", reader.line_no)?,
                );
            }
        }
        let noise = NoiseSpec {
            kind,
            snr_db,
            sigma_s2,
        };
        blocks.push(SnapshotBlock::new(samples, grid, noise, seed)?);
    }
    Ok(blocks)
}

fn read_goof<R: BufRead>(reader: &mut LineReader<R>) -> Result<GoofDataset, PersistError> {
    let meta_values = read_meta(
        reader,
        &[
            "num_antennas",
            "num_grids",
            "group_size",
            "samples_per_grid",
            "kinds",
        ],
    )?;
    let meta = GoofMeta {
        num_antennas: parse_num(&meta_values[0], "num_antennas", reader.line_no)?,
        num_grids: parse_num(&meta_values[1], "num_grids", reader.line_no)?,
        group_size: parse_num(&meta_values[2], "group_size", reader.line_no)?,
        samples_per_grid: parse_num(&meta_values[3], "samples_per_grid", reader.line_no)?,
    };
    let kinds: Vec<FingerprintKind> = meta_values[4]
        .split(',')
        .map(|label| {
            FingerprintKind::from_label(label.trim())
                .map_err(|e| reader.error(format!("bad kind list: {}", e)))
        })
        .collect::<Result<_, _>>()?;
    let samples_per_kind = meta.num_grids * meta.samples_per_grid;
    let mut samples: BTreeMap<FingerprintKind, Vec<FingerprintSample>> = BTreeMap::new();
    for &kind in &kinds {
        let feature_len = kind.feature_len(meta.num_antennas);
        let mut kind_samples = Vec::with_capacity(samples_per_kind);
        for _ in 0..samples_per_kind {
            let line = reader.expect_line("a \"sample\" line")?;
            let tokens = expect_keyword(&line, "sample", reader.line_no)?;
            if tokens.len() != 2 + feature_len {
                return Err(reader.error(format!(
                    "sample line holds {} tokens, expected kind, grid, and {} features",
                    tokens.len(),
                    feature_len
                )));
            }
            let line_kind = FingerprintKind::from_label(tokens[0])
                .map_err(|e| reader.error(e.to_string()))?;
            if line_kind != kind {
                return Err(reader.error(format!(
                    "sample kind {} appears inside the {} section",
                    tokens[0],
                    kind.label()
                )));
            }
            let grid: usize = parse_num(tokens[1], "grid", reader.line_no)?;
            let features = tokens[2..]
                .iter()
                .map(|t| parse_num::<f64>(t, "feature", reader.line_no))
                .collect::<Result<Vec<f64>, _>>()?;
            kind_samples.push(FingerprintSample {
                kind,
                features,
                grid,
            });
        }
        samples.insert(kind, kind_samples);
    }
    // The dataset constructor re-checks counts, ordering, and finiteness,
    // so a tampered body cannot produce a structurally invalid dataset.
    Ok(GoofDataset::new(meta, samples)?)
}

fn read_banks<R: BufRead>(reader: &mut LineReader<R>) -> Result<Vec<ClassifierBank>, PersistError> {
    let meta = read_meta(reader, &["count"])?;
    let count: usize = parse_num(&meta[0], "bank count", reader.line_no)?;
    let mut banks = Vec::with_capacity(count);
    for _ in 0..count {
        let line = reader.expect_line("a \"bank\" line")?;
        let tokens = expect_keyword(&line, "bank", reader.line_no)?;
        if tokens.len() != 4 {
            return Err(reader.error(format!(
                "bank line holds {} tokens, expected kind, num_grids, num_features, num_pairs",
                tokens.len()
            )));
        }
        let kind =
            FingerprintKind::from_label(tokens[0]).map_err(|e| reader.error(e.to_string()))?;
        let num_grids: usize = parse_num(tokens[1], "num_grids", reader.line_no)?;
        let num_features: usize = parse_num(tokens[2], "num_features", reader.line_no)?;
        let num_pairs: usize = parse_num(tokens[3], "num_pairs", reader.line_no)?;
        let mut pairwise = Vec::with_capacity(num_pairs);
        for _ in 0..num_pairs {
            let pair_line = reader.expect_line("a \"pair\" line")?;
            let pair_tokens = expect_keyword(&pair_line, "pair", reader.line_no)?;
            if pair_tokens.len() != 3 {
                return Err(reader.error("pair line needs two grids and a round count"));
            }
            let a: usize = parse_num(pair_tokens[0], "grid a", reader.line_no)?;
            let b: usize = parse_num(pair_tokens[1], "grid b", reader.line_no)?;
            let num_rounds: usize = parse_num(pair_tokens[2], "round count", reader.line_no)?;
            let mut rounds = Vec::with_capacity(num_rounds);
            for _ in 0..num_rounds {
                let round_line = reader.expect_line("a \"round\" line")?;
                let round_tokens = expect_keyword(&round_line, "round", reader.line_no)?;
                if round_tokens.len() != 4 {
                    return Err(
                        reader.error("round line needs feature, threshold, polarity, alpha")
                    );
                }
                let polarity: i8 = parse_num(round_tokens[2], "polarity", reader.line_no)?;
                if polarity != 1 && polarity != -1 {
                    return Err(reader.error(format!("polarity must be +/-1, got {}", polarity)));
                }
                rounds.push(BoostRound {
                    stump: DecisionStump {
                        feature_index: parse_num(round_tokens[0], "feature index", reader.line_no)?,
                        threshold: parse_num(round_tokens[1], "threshold", reader.line_no)?,
                        polarity,
                    },
                    alpha: parse_num(round_tokens[3], "alpha", reader.line_no)?,
                });
            }
            pairwise.push(BinaryAdaBoost {
                class_pair: (a, b),
                num_features,
                rounds,
            });
        }
        banks.push(ClassifierBank {
            kind,
            num_grids,
            pairwise,
        });
    }
    Ok(banks)
}

fn read_results<R: BufRead>(reader: &mut LineReader<R>) -> Result<Vec<ResultRow>, PersistError> {
    let meta = read_meta(reader, &["count"])?;
    let count: usize = parse_num(&meta[0], "row count", reader.line_no)?;
    let mut rows = Vec::with_capacity(count);
    for _ in 0..count {
        let line = reader.expect_line("a \"row\" line")?;
        let tokens = expect_keyword(&line, "row", reader.line_no)?;
        if tokens.len() != 7 {
            return Err(reader.error(format!(
                "row line holds {} tokens, expected 7",
                tokens.len()
            )));
        }
        rows.push(ResultRow {
            noise: NoiseModel::from_token(tokens[0]).map_err(|e| reader.error(e.to_string()))?,
            snr_db: parse_num(tokens[1], "snr_db", reader.line_no)?,
            method: Method::from_token(tokens[2]).map_err(|e| reader.error(e.to_string()))?,
            pred_prob: parse_num(tokens[3], "pred_prob", reader.line_no)?,
            rmse_m: parse_num(tokens[4], "rmse_m", reader.line_no)?,
            wall_s: parse_num(tokens[5], "wall_s", reader.line_no)?,
            seed: parse_num(tokens[6], "seed", reader.line_no)?,
        });
    }
    Ok(rows)
}

// ─────────────────────────────── 5. Typed loaders ───────────────────────────────

/// Loads a snapshots archive, rejecting any other payload kind.
pub fn load_snapshots(path: &Path) -> Result<Vec<SnapshotBlock>, PersistError> {
    match load_archive(path)? {
        ArchivePayload::Snapshots(blocks) => Ok(blocks),
        other => Err(PersistError::KindMismatch {
            expected: "snapshots",
            found: other.kind().to_string(),
        }),
    }
}

/// Loads a GOOF archive, rejecting any other payload kind.
pub fn load_goof(path: &Path) -> Result<GoofDataset, PersistError> {
    match load_archive(path)? {
        ArchivePayload::Goof(dataset) => Ok(dataset),
        other => Err(PersistError::KindMismatch {
            expected: "goof",
            found: other.kind().to_string(),
        }),
    }
}

/// Loads a bank archive, rejecting any other payload kind.
pub fn load_banks(path: &Path) -> Result<Vec<ClassifierBank>, PersistError> {
    match load_archive(path)? {
        ArchivePayload::Banks(banks) => Ok(banks),
        other => Err(PersistError::KindMismatch {
            expected: "bank",
            found: other.kind().to_string(),
        }),
    }
}

/// Loads a results archive, rejecting any other payload kind.
pub fn load_results(path: &Path) -> Result<Vec<ResultRow>, PersistError> {
    match load_archive(path)? {
        ArchivePayload::Results(rows) => Ok(rows),
        other => Err(PersistError::KindMismatch {
            expected: "results",
            found: other.kind().to_string(),
        }),
    }
}

// ─────────────────────────────── 6. Tests ───────────────────────────────
