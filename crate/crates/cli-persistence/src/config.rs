//! Flat `key = value` configuration documents.
//!
//! Keys mirror the experiment configuration's field paths with dots
//! (`grid.nx`, `noise.snr_list_db`, ...); the array origin tuple is the one
//! flattened exception (`array.origin_x` / `array.origin_y`).  A missing
//! key keeps its protocol default, unknown keys are rejected, and every
//! parse error names the offending key and line.  Command-line overrides
//! apply after the file, last writer wins, and the assembled configuration
//! is validated as a whole before use.

use std::path::Path;

use eval_harness::{ExperimentConfig, NoiseModel};

use crate::archive::PersistError;

/// Every recognized configuration key, with a short value description.
pub const CONFIG_KEYS: &[(&str, &str)] = &[
    ("grid.nx", "grid cells along x (positive integer)"),
    ("grid.ny", "grid cells along y (positive integer)"),
    ("grid.spacing", "cell side length in meters (positive real)"),
    ("array.num_antennas", "antenna elements M (positive integer)"),
    ("array.carrier_frequency", "carrier frequency in Hz (positive real)"),
    ("array.element_spacing", "element spacing in wavelengths (positive real)"),
    ("array.origin_x", "array x position in meters (real)"),
    ("array.origin_y", "array y position in meters (real)"),
    ("array.normal_angle", "array broadside direction in radians (real)"),
    ("channel.num_scatter_paths", "scattered paths per channel (integer)"),
    ("channel.sigma_a", "angular spread in radians (non-negative real)"),
    ("channel.ds_ratio", "delay spread over LOS delay (non-negative real)"),
    ("snapshots.total", "snapshots L per grid (positive integer)"),
    ("snapshots.group_size", "snapshots T per sample group (integer >= 2)"),
    ("split.train_samples", "training sample groups per grid (positive integer)"),
    ("split.test_samples", "test sample groups per grid (positive integer)"),
    ("noise.kind", "gaussian or alpha_stable"),
    ("noise.alpha", "characteristic exponent in (0, 2]"),
    ("noise.snr_list_db", "comma-separated SNR points in dB"),
    ("boosting.num_rounds", "weak learners per pairwise classifier (positive integer)"),
    ("flom_p", "fractional moment order in (1, 2]"),
    ("seed", "master seed (unsigned 64-bit integer)"),
];

fn bad_value(key: &str, value: &str, detail: impl std::fmt::Display) -> PersistError {
    PersistError::Config(format!(
        "key {:?}: malformed value {:?}: {}",
        key, value, detail
    ))
}

fn parse_scalar<T: std::str::FromStr>(key: &str, value: &str) -> Result<T, PersistError>
where
    T::Err: std::fmt::Display,
{
    value.parse::<T>().map_err(|e| bad_value(key, value, e))
}

fn parse_snr_list(key: &str, value: &str) -> Result<Vec<f64>, PersistError> {
    let points = value
        .split(',')
        .map(|item| parse_scalar::<f64>(key, item.trim()))
        .collect::<Result<Vec<f64>, _>>()?;
    if points.is_empty() {
        return Err(bad_value(key, value, "the list must not be empty"));
    }
    Ok(points)
}

/// Applies one `key = value` assignment to a configuration in place.
pub fn apply_override(
    cfg: &mut ExperimentConfig,
    key: &str,
    value: &str,
) -> Result<(), PersistError> {
    match key {
        "grid.nx" => cfg.grid.nx = parse_scalar(key, value)?,
        "grid.ny" => cfg.grid.ny = parse_scalar(key, value)?,
        "grid.spacing" => cfg.grid.spacing = parse_scalar(key, value)?,
        "array.num_antennas" => cfg.array.num_antennas = parse_scalar(key, value)?,
        "array.carrier_frequency" => cfg.array.carrier_frequency = parse_scalar(key, value)?,
        "array.element_spacing" => cfg.array.element_spacing = parse_scalar(key, value)?,
        "array.origin_x" => cfg.array.origin.0 = parse_scalar(key, value)?,
        "array.origin_y" => cfg.array.origin.1 = parse_scalar(key, value)?,
        "array.normal_angle" => cfg.array.normal_angle = parse_scalar(key, value)?,
        "channel.num_scatter_paths" => {
            cfg.channel.num_scatter_paths = parse_scalar(key, value)?
        }
        "channel.sigma_a" => cfg.channel.sigma_a = parse_scalar(key, value)?,
        "channel.ds_ratio" => cfg.channel.ds_ratio = parse_scalar(key, value)?,
        "snapshots.total" => cfg.snapshots.total = parse_scalar(key, value)?,
        "snapshots.group_size" => cfg.snapshots.group_size = parse_scalar(key, value)?,
        "split.train_samples" => cfg.split.train_samples = parse_scalar(key, value)?,
        "split.test_samples" => cfg.split.test_samples = parse_scalar(key, value)?,
        "noise.kind" => {
            cfg.noise.kind = NoiseModel::from_token(value)
                .map_err(|_| bad_value(key, value, "expected gaussian or alpha_stable"))?
        }
        "noise.alpha" => cfg.noise.alpha = parse_scalar(key, value)?,
        "noise.snr_list_db" => cfg.noise.snr_list_db = parse_snr_list(key, value)?,
        "boosting.num_rounds" => cfg.boosting.num_rounds = parse_scalar(key, value)?,
        "flom_p" => cfg.flom_p = parse_scalar(key, value)?,
        "seed" => cfg.seed = parse_scalar(key, value)?,
        unknown => {
            return Err(PersistError::Config(format!(
                "unknown key {:?}; run with --help for the key schema",
                unknown
            )))
        }
    }
    Ok(())
}

/// Parses a configuration document: protocol defaults, then one
/// `key = value` line at a time.  `#` comments and blank lines are skipped;
/// errors name the line and key.
pub fn parse_config_text(text: &str) -> Result<ExperimentConfig, PersistError> {
    let mut cfg = ExperimentConfig::default();
    for (idx, raw_line) in text.lines().enumerate() {
        let line_no = idx + 1;
        let line = match raw_line.find('#') {
            Some(pos) => &raw_line[..pos],
            None => raw_line,
        }
        .trim();
        if line.is_empty() {
            continue;
        }
        let (key, value) = line.split_once('=').ok_or_else(|| {
            PersistError::Config(format!(
                "line {}: expected \"key = value\", found {:?}",
                line_no, line
            ))
        })?;
        apply_override(&mut cfg, key.trim(), value.trim())
            .map_err(|e| PersistError::Config(format!("line {}: {}", line_no, e)))?;
    }
    Ok(cfg)
}

/// Loads a configuration file, applies overrides in order, and validates
/// the assembled result.
///
/// With no path, overrides apply on top of the protocol defaults alone.
pub fn load_config(
    path: Option<&Path>,
    overrides: &[(String, String)],
) -> Result<ExperimentConfig, PersistError> {
    let mut cfg = match path {
        Some(p) => {
            let text = std::fs::read_to_string(p).map_err(|e| {
                PersistError::Config(format!("cannot read config {:?}: {}", p, e))
            })?;
            parse_config_text(&text)?
        }
        None => ExperimentConfig::default(),
    };
    for (key, value) in overrides {
        apply_override(&mut cfg, key, value)?;
    }
    cfg.validate()?;
    Ok(cfg)
}

// ─────────────────────────────── Tests ───────────────────────────────

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_document_yields_the_protocol_defaults() {
        let cfg = parse_config_text("").expect("empty config parses");
        assert_eq!(cfg, ExperimentConfig::default(), "defaults apply untouched");
        assert_eq!(cfg.num_grids(), 36, "Q = 36 by default");
        assert_eq!(cfg.array.num_antennas, 5, "M = 5 by default");
        assert_eq!(cfg.boosting.num_rounds, 30, "N = 30 by default");
        assert_eq!(cfg.flom_p, 1.2, "p = 1.2 by default");
        assert_eq!(cfg.snapshots.group_size, 512, "T = 512 by default");
    }

    #[test]
    fn full_document_overrides_every_section() {
        let text = "\
# reduced instance
grid.nx = 2
grid.ny = 3
grid.spacing = 0.5
array.num_antennas = 4
array.carrier_frequency = 7e8
array.element_spacing = 0.25
array.origin_x = -1.5
array.origin_y = 2.5
array.normal_angle = 0.1
channel.num_scatter_paths = 7
channel.sigma_a = 0.2
channel.ds_ratio = 0.05
snapshots.total = 640        # 10 groups
snapshots.group_size = 64
split.train_samples = 5
split.test_samples = 5
noise.kind = alpha_stable
noise.alpha = 1.4
noise.snr_list_db = 0, 6, 12
boosting.num_rounds = 10
flom_p = 1.5
seed = 7
";
        let cfg = parse_config_text(text).expect("full config parses");
        cfg.validate().expect("assembled config is valid");
        assert_eq!(cfg.grid.ny, 3, "grid.ny applied");
        assert_eq!(cfg.array.origin, (-1.5, 2.5), "origin pair applied");
        assert_eq!(cfg.noise.kind, NoiseModel::AlphaStable, "noise kind applied");
        assert_eq!(cfg.noise.snr_list_db, vec![0.0, 6.0, 12.0], "SNR list applied");
        assert_eq!(cfg.snapshots.total, 640, "inline comments are stripped");
        assert_eq!(cfg.seed, 7, "seed applied");
    }

    #[test]
    fn alpha_override_builds_the_impulse_configuration() {
        let mut cfg = parse_config_text("").expect("defaults");
        apply_override(&mut cfg, "noise.kind", "alpha_stable").expect("kind applies");
        apply_override(&mut cfg, "noise.alpha", "1.4").expect("alpha applies");
        cfg.validate().expect("impulse config is valid");
        assert_eq!(cfg.noise.kind, NoiseModel::AlphaStable, "kind switched");
        assert_eq!(cfg.noise.alpha, 1.4, "alpha set");
    }

    #[test]
    fn unknown_keys_are_rejected_with_the_line() {
        let err = parse_config_text("grid.nx = 2\nnoise.beta = 0\n").unwrap_err();
        let text = err.to_string();
        assert!(
            text.contains("line 2") && text.contains("noise.beta"),
            "unknown keys name the key and line, got: {}",
            text
        );
    }

    #[test]
    fn malformed_numbers_name_key_and_line() {
        let err = parse_config_text("\n\ngrid.spacing = wide\n").unwrap_err();
        let text = err.to_string();
        assert!(
            text.contains("line 3") && text.contains("grid.spacing") && text.contains("wide"),
            "malformed numerics name the key and line, got: {}",
            text
        );
    }

    #[test]
    fn lines_without_an_equals_sign_are_rejected() {
        let err = parse_config_text("grid.nx 2\n").unwrap_err();
        assert!(
            err.to_string().contains("key = value"),
            "shape errors explain the expected form, got: {}",
            err
        );
    }

    #[test]
    fn overrides_apply_after_the_file_in_order() {
        let dir = tempfile::tempdir().expect("tempdir");
        let path = dir.path().join("exp.cfg");
        std::fs::write(&path, "seed = 1\ngrid.nx = 4\ngrid.ny = 1\n").expect("write");
        let overrides = vec![
            ("seed".to_string(), "2".to_string()),
            ("seed".to_string(), "3".to_string()),
        ];
        let cfg = load_config(Some(path.as_path()), &overrides).expect("config loads");
        assert_eq!(cfg.seed, 3, "the last override wins");
        assert_eq!(cfg.grid.nx, 4, "file values survive unrelated overrides");
    }

    #[test]
    fn assembled_configuration_is_validated() {
        let overrides = vec![("split.train_samples".to_string(), "200".to_string())];
        let err = load_config(None, &overrides).unwrap_err();
        assert!(
            err.to_string().contains("sample groups"),
            "invariant violations surface from validation, got: {}",
            err
        );
    }

    #[test]
    fn key_table_matches_the_recognized_keys() {
        let mut cfg = ExperimentConfig::default();
        for (key, _) in CONFIG_KEYS {
            let probe = match *key {
                "noise.kind" => "gaussian",
                "noise.snr_list_db" => "0,6",
                _ => "1",
            };
            apply_override(&mut cfg, key, probe)
                .unwrap_or_else(|e| panic!("documented key {} must apply: {}", key, e));
        }
    }
}
