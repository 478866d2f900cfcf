//! End-to-end agreement between the staged command-line pipeline, the
//! durable archives it writes, and the monolithic in-memory pipeline.

use std::fs;
use std::path::{Path, PathBuf};

use cli_persistence::cli::predictions_csv;
use cli_persistence::{load_config, run};
use eval_harness::{parse_results, run_point, run_snr_sweep, summarize};

/// Four-grid instance sized so a full staged run takes about a second.
const TINY_CONFIG: &str = "\
# four-grid instance for fast end-to-end runs
grid.nx = 2
grid.ny = 2
array.num_antennas = 3
channel.num_scatter_paths = 6
snapshots.total = 512
snapshots.group_size = 64
split.train_samples = 4
split.test_samples = 4
noise.snr_list_db = 30
boosting.num_rounds = 5
seed = 99
";

fn write_config(dir: &Path) -> PathBuf {
    let path = dir.join("tiny.cfg");
    fs::write(&path, TINY_CONFIG).expect("config file is written");
    path
}

fn fagot(args: &[&str]) -> i32 {
    run(std::iter::once("fagot").chain(args.iter().copied()))
}

fn arg(path: &Path) -> String {
    path.display().to_string()
}

#[test]
fn staged_pipeline_matches_the_in_memory_pipeline() {
    let dir = tempfile::tempdir().expect("tempdir");
    let cfg_path = write_config(dir.path());
    let snaps = dir.path().join("snapshots.ga");
    let goof = dir.path().join("goof.ga");
    let banks = dir.path().join("banks.ga");
    let pred = dir.path().join("predictions.csv");

    assert_eq!(
        fagot(&["simulate", "--config", &arg(&cfg_path), "--out", &arg(&snaps)]),
        0,
        "simulate succeeds"
    );
    assert_eq!(
        fagot(&[
            "extract",
            "--config",
            &arg(&cfg_path),
            "--snapshots",
            &arg(&snaps),
            "--out",
            &arg(&goof),
        ]),
        0,
        "extract succeeds"
    );
    assert_eq!(
        fagot(&[
            "train",
            "--config",
            &arg(&cfg_path),
            "--goof",
            &arg(&goof),
            "--out",
            &arg(&banks),
        ]),
        0,
        "train succeeds"
    );
    assert_eq!(
        fagot(&[
            "predict",
            "--config",
            &arg(&cfg_path),
            "--banks",
            &arg(&banks),
            "--goof",
            &arg(&goof),
            "--out",
            &arg(&pred),
        ]),
        0,
        "predict succeeds"
    );

    let cfg = load_config(Some(cfg_path.as_path()), &[]).expect("config loads");
    let outcome = run_point(&cfg, 0).expect("in-memory pipeline runs");
    let expected = predictions_csv(&outcome.per_grid).expect("reference CSV renders");
    let staged = fs::read_to_string(&pred).expect("predictions CSV exists");
    assert_eq!(
        staged, expected,
        "staged predictions equal the in-memory pipeline's, byte for byte"
    );

    // Feeding an archive of the wrong kind into a stage fails cleanly.
    let misused = dir.path().join("misused.ga");
    assert_eq!(
        fagot(&[
            "extract",
            "--config",
            &arg(&cfg_path),
            "--snapshots",
            &arg(&banks),
            "--out",
            &arg(&misused),
        ]),
        1,
        "a bank archive is rejected as snapshot input"
    );
    assert!(!misused.exists(), "no output is written on a failed stage");
}

#[test]
fn evaluate_subcommand_matches_the_in_memory_sweep() {
    let dir = tempfile::tempdir().expect("tempdir");
    let cfg_path = write_config(dir.path());
    let out = dir.path().join("results.csv");

    assert_eq!(
        fagot(&["evaluate", "--config", &arg(&cfg_path), "--out", &arg(&out)]),
        0,
        "evaluate succeeds"
    );

    let cfg = load_config(Some(cfg_path.as_path()), &[]).expect("config loads");
    let mut in_memory = run_snr_sweep(&cfg).expect("in-memory sweep runs");
    let text = fs::read_to_string(&out).expect("results CSV exists");
    let mut staged = parse_results(&text).expect("results CSV parses");
    for row in in_memory.iter_mut().chain(staged.iter_mut()) {
        row.wall_s = 0.0;
    }
    assert_eq!(
        staged, in_memory,
        "evaluate rows equal the in-memory sweep's up to wall time"
    );
    assert_eq!(
        summarize(&staged).expect("staged summary").csv,
        summarize(&in_memory).expect("in-memory summary").csv,
        "summaries agree byte for byte once wall time is canonicalized"
    );
}

#[test]
fn seed_flag_overrides_the_config_file() {
    let dir = tempfile::tempdir().expect("tempdir");
    let cfg_path = write_config(dir.path());
    let out_default = dir.path().join("seed99.csv");
    let out_override = dir.path().join("seed7.csv");

    assert_eq!(
        fagot(&[
            "evaluate",
            "--config",
            &arg(&cfg_path),
            "--out",
            &arg(&out_default),
        ]),
        0,
        "evaluate with the file seed succeeds"
    );
    assert_eq!(
        fagot(&[
            "evaluate",
            "--config",
            &arg(&cfg_path),
            "--seed",
            "7",
            "--out",
            &arg(&out_override),
        ]),
        0,
        "evaluate with the seed override succeeds"
    );

    let rows_default =
        parse_results(&fs::read_to_string(&out_default).expect("file seed CSV exists"))
            .expect("file seed CSV parses");
    let rows_override =
        parse_results(&fs::read_to_string(&out_override).expect("override CSV exists"))
            .expect("override CSV parses");
    assert!(
        rows_default.iter().all(|r| r.seed == 99),
        "the config file seed is recorded in the rows"
    );
    assert!(
        rows_override.iter().all(|r| r.seed == 7),
        "the --seed override is recorded in the rows"
    );
    assert_ne!(
        rows_default[0].pred_prob, rows_override[0].pred_prob,
        "different seeds produce different measurements"
    );
}
