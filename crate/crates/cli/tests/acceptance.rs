//! CLI acceptance: byte-identical reruns (criterion 10), documented
//! exit statuses, and the file-level operator and metric examples.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::Command;

use physattn_cli::{commands, CliError, ExperimentConfig};
use physattn_core::{FeatureSequence, MaskSequence, MetricConfig, PriorKind};

fn scratch_dir(name: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("physattn-test-{name}-{}", std::process::id()));
    let _ = fs::remove_dir_all(&dir);
    fs::create_dir_all(&dir).unwrap();
    dir
}

fn small_config() -> ExperimentConfig {
    ExperimentConfig {
        seeds: vec![1, 2, 3],
        steps: 8,
        alphas: vec![0.0, 0.5, 1.0],
        ..ExperimentConfig::default()
    }
}

fn binary() -> Command {
    Command::new(env!("CARGO_BIN_EXE_physattn"))
}

#[test]
fn c10_sweep_outputs_are_byte_identical_across_reruns() {
    let dir = scratch_dir("c10");
    let config = small_config();
    let config_path = dir.join("config.json");
    fs::write(&config_path, config.to_pretty_json()).unwrap();

    let out_a = dir.join("a");
    let out_b = dir.join("b");
    for out in [&out_a, &out_b] {
        let status = binary()
            .args(["sweep", "--config"])
            .arg(&config_path)
            .arg("--out")
            .arg(out)
            .status()
            .unwrap();
        assert!(status.success());
    }
    for name in ["sweep.csv", "sweep.svg", "sweep_summary.json"] {
        let a = fs::read(out_a.join(name)).unwrap();
        let b = fs::read(out_b.join(name)).unwrap();
        assert_eq!(a, b, "{name} differs between reruns");
    }
    let csv = fs::read_to_string(out_a.join("sweep.csv")).unwrap();
    assert!(csv.starts_with("run_id,alpha,prior,T,R,D,R_hat,D_hat,S,adjacent_cosine,seed\n"));
    // 3 seeds x 3 alphas data rows plus the header.
    assert_eq!(csv.lines().count(), 1 + 9);
    let svg = fs::read_to_string(out_a.join("sweep.svg")).unwrap();
    assert_eq!(svg.matches("<polyline").count(), 3);
    println!("criterion 10 (byte-identical sweep outputs): PASS");
}

#[test]
fn ablate_is_idempotent_and_labels_divergence() {
    let dir = scratch_dir("ablate");
    let mut config = small_config();
    config.seeds = vec![7];
    // Large magnitudes with a deep virtual loop: burgers must diverge.
    config.scenario.identity_scale = 10.0;
    config.scenario.drift_amplitude = 3.0;
    config.schedule.n_iters = 20;

    let out_a = dir.join("a");
    let out_b = dir.join("b");
    commands::ablate(&config, &out_a).unwrap();
    commands::ablate(&config, &out_b).unwrap();
    for name in ["ablation.csv", "ablation.svg", "ablation_summary.json"] {
        assert_eq!(
            fs::read(out_a.join(name)).unwrap(),
            fs::read(out_b.join(name)).unwrap(),
            "{name} differs between reruns"
        );
    }

    let csv = fs::read_to_string(out_a.join("ablation.csv")).unwrap();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines.len(), 1 + PriorKind::ALL.len());
    assert!(lines[0].ends_with(",status"));
    let burgers_row = lines.iter().find(|l| l.contains(",burgers,")).unwrap();
    assert!(burgers_row.contains("diverged@"), "row: {burgers_row}");
    let heat_row = lines.iter().find(|l| l.contains(",heat,")).unwrap();
    assert!(heat_row.ends_with(",ok"), "row: {heat_row}");
}

#[test]
fn operate_reproduces_the_heat_example() {
    let dir = scratch_dir("operate");
    let features = FeatureSequence::from_scalars(&[0.0, 1.0, 2.0]).unwrap();
    let masks = MaskSequence::all_ones(3, 1, 1).unwrap();
    let features_path = dir.join("features.json");
    let masks_path = dir.join("masks.json");
    fs::write(&features_path, features.to_json_string()).unwrap();
    fs::write(&masks_path, masks.to_json_string()).unwrap();

    // nu = 1, dtau = 0.1, single step, no noise.
    let mut config = small_config();
    config.alpha = 1.0;
    config.constants.c_heat = 1.0;
    config.constants.c_s = 0.0;
    config.constants.c_b = 0.0;
    config.schedule.n_iters = 1;

    let outcome = commands::operate(&features_path, &masks_path, &config, &dir).unwrap();
    let out = FeatureSequence::from_json_str(&fs::read_to_string(&outcome.output_path).unwrap())
        .unwrap();
    let expected = [0.3, 1.0, 1.7];
    for (a, b) in out.data().iter().zip(&expected) {
        assert!((a - b).abs() < 1e-12, "{a} vs {b}");
    }
    assert!(outcome.energy_after < outcome.energy_before);
}

#[test]
fn operate_identity_preserves_binary_bytes() {
    let dir = scratch_dir("operate-id");
    let features = FeatureSequence::from_scalars(&[0.5, -1.25, 3.75, 0.0]).unwrap();
    let masks = MaskSequence::all_ones(4, 1, 1).unwrap();
    let features_path = dir.join("features.bin");
    let masks_path = dir.join("masks.bin");
    fs::write(&features_path, features.to_binary()).unwrap();
    fs::write(&masks_path, masks.to_binary()).unwrap();

    let mut config = small_config();
    config.prior.kind = PriorKind::Identity;
    config.constants.c_s = 0.0;
    config.constants.c_b = 0.0;

    let outcome = commands::operate(&features_path, &masks_path, &config, &dir).unwrap();
    assert_eq!(
        fs::read(&outcome.output_path).unwrap(),
        fs::read(&features_path).unwrap()
    );
}

#[test]
fn operate_shape_mismatch_names_the_dimension() {
    let dir = scratch_dir("operate-shape");
    let features = FeatureSequence::from_scalars(&[0.0, 1.0, 2.0, 3.0]).unwrap();
    let masks = MaskSequence::all_ones(3, 1, 1).unwrap();
    let features_path = dir.join("features.json");
    let masks_path = dir.join("masks.json");
    fs::write(&features_path, features.to_json_string()).unwrap();
    fs::write(&masks_path, masks.to_json_string()).unwrap();

    let err = commands::operate(&features_path, &masks_path, &small_config(), &dir).unwrap_err();
    match &err {
        CliError::Config(msg) => assert!(msg.contains("frame count"), "message: {msg}"),
        other => panic!("expected config error, got {other:?}"),
    }
    assert_eq!(err.exit_code(), 1);

    let output = binary()
        .arg("operate")
        .arg(&features_path)
        .arg(&masks_path)
        .arg("--out")
        .arg(&dir)
        .output()
        .unwrap();
    assert_eq!(output.status.code(), Some(1));
    let stderr = String::from_utf8_lossy(&output.stderr);
    assert!(stderr.contains("frame count"), "stderr: {stderr}");
}

#[test]
fn operate_divergence_exits_with_status_two() {
    let dir = scratch_dir("operate-diverge");
    // Large-amplitude, non-alternating data blows up under advection.
    let values = [100.0, -80.0, 90.0, -100.0, 70.0, -90.0];
    let features = FeatureSequence::from_scalars(&values).unwrap();
    let masks = MaskSequence::all_ones(6, 1, 1).unwrap();
    let features_path = dir.join("features.json");
    let masks_path = dir.join("masks.json");
    fs::write(&features_path, features.to_json_string()).unwrap();
    fs::write(&masks_path, masks.to_json_string()).unwrap();

    let mut config = small_config();
    config.prior.kind = PriorKind::Burgers;
    config.constants.c_s = 0.0;
    config.constants.c_b = 0.0;
    config.schedule.n_iters = 200;
    let config_path = dir.join("config.json");
    fs::write(&config_path, config.to_pretty_json()).unwrap();

    let err = commands::operate(&features_path, &masks_path, &config, &dir).unwrap_err();
    assert!(matches!(err, CliError::Divergence(_)), "{err:?}");
    assert_eq!(err.exit_code(), 2);

    let output = binary()
        .arg("operate")
        .arg(&features_path)
        .arg(&masks_path)
        .arg("--config")
        .arg(&config_path)
        .arg("--out")
        .arg(&dir)
        .output()
        .unwrap();
    assert_eq!(output.status.code(), Some(2));
}

#[test]
fn unknown_config_key_fails_before_any_run() {
    let dir = scratch_dir("badkey");
    let mut value: serde_json::Value =
        serde_json::from_str(&small_config().to_pretty_json()).unwrap();
    value
        .as_object_mut()
        .unwrap()
        .insert("typo_key".into(), serde_json::json!(true));
    let config_path = dir.join("config.json");
    fs::write(&config_path, serde_json::to_string(&value).unwrap()).unwrap();

    let out_dir = dir.join("out");
    let output = binary()
        .args(["ablate", "--config"])
        .arg(&config_path)
        .arg("--out")
        .arg(&out_dir)
        .output()
        .unwrap();
    assert_eq!(output.status.code(), Some(1));
    assert!(!out_dir.exists(), "no run output may exist after a config error");
    let stderr = String::from_utf8_lossy(&output.stderr);
    assert!(stderr.contains("typo_key"), "stderr: {stderr}");
}

#[test]
fn metrics_reports_the_frozen_example() {
    let dir = scratch_dir("metrics");
    let features = FeatureSequence::from_scalars(&[0.0, 1.0, 3.0]).unwrap();
    let features_path = dir.join("features.json");
    fs::write(&features_path, features.to_json_string()).unwrap();

    // Encoder-scale shaping constants for the closed-form example.
    let mut config = small_config();
    config.metrics = MetricConfig::default();
    let report = commands::metrics_report(&features_path, &config, false).unwrap();
    assert_eq!(report.r, 1.0);
    assert_eq!(report.d, 1.5);
    assert!((report.s - 0.1656238170411128).abs() < 1e-12);
    // Frame 0 is the zero vector, so the lenient cosine is undefined.
    assert!(report.adjacent_cosine.is_nan());

    let config_path = dir.join("config.json");
    fs::write(&config_path, config.to_pretty_json()).unwrap();
    let output = binary()
        .arg("metrics")
        .arg(&features_path)
        .arg("--config")
        .arg(&config_path)
        .output()
        .unwrap();
    assert_eq!(output.status.code(), Some(0));
    let report: serde_json::Value = serde_json::from_slice(&output.stdout).unwrap();
    assert_eq!(report["r"], serde_json::json!(1.0));
    assert_eq!(report["d"], serde_json::json!(1.5));
    assert!(report["adjacent_cosine"].is_null());

    // Requesting the cosine on the same file is a domain error.
    let output = binary()
        .arg("metrics")
        .arg(&features_path)
        .arg("--config")
        .arg(&config_path)
        .arg("--cosine")
        .output()
        .unwrap();
    assert_eq!(output.status.code(), Some(1));
    let stderr = String::from_utf8_lossy(&output.stderr);
    assert!(stderr.contains("zero norm"), "stderr: {stderr}");
}

#[test]
fn metrics_constant_sequence_is_all_zero_scores() {
    let dir = scratch_dir("metrics-const");
    let features = FeatureSequence::from_scalars(&[2.0, 2.0, 2.0, 2.0]).unwrap();
    let features_path = dir.join("features.json");
    fs::write(&features_path, features.to_json_string()).unwrap();
    let report = commands::metrics_report(&features_path, &small_config(), true).unwrap();
    assert_eq!(report.r, 0.0);
    assert_eq!(report.d, 0.0);
    assert_eq!(report.s, 0.0);
    assert_eq!(report.adjacent_cosine, 1.0);
}

#[test]
fn metrics_rejects_short_and_zero_norm_inputs() {
    let dir = scratch_dir("metrics-bad");
    let short = FeatureSequence::from_scalars(&[0.0, 1.0]).unwrap();
    let short_path = dir.join("short.json");
    fs::write(&short_path, short.to_json_string()).unwrap();
    let err = commands::metrics_report(&short_path, &small_config(), false).unwrap_err();
    assert_eq!(err.exit_code(), 1);

    let zero = FeatureSequence::from_scalars(&[1.0, 0.0, 2.0]).unwrap();
    let zero_path = dir.join("zero.json");
    fs::write(&zero_path, zero.to_json_string()).unwrap();
    let err = commands::metrics_report(&zero_path, &small_config(), true).unwrap_err();
    match &err {
        CliError::Config(msg) => assert!(msg.contains("zero norm"), "message: {msg}"),
        other => panic!("expected config error, got {other:?}"),
    }
}

#[test]
fn metrics_csv_format_matches_the_report_schema() {
    let dir = scratch_dir("metrics-csv");
    let features = FeatureSequence::from_scalars(&[0.0, 1.0, 3.0]).unwrap();
    let features_path = dir.join("trajectory.json");
    fs::write(&features_path, features.to_json_string()).unwrap();
    let mut config = small_config();
    config.metrics = MetricConfig::default();
    let csv = commands::metrics_csv(&features_path, &config, false).unwrap();
    let mut lines = csv.lines();
    assert_eq!(
        lines.next().unwrap(),
        "run_id,alpha,prior,T,R,D,R_hat,D_hat,S,adjacent_cosine,seed"
    );
    let row = lines.next().unwrap();
    assert!(row.starts_with("trajectory,0.5,heat,3,1,1.5,"), "row: {row}");
}

#[test]
fn sweep_empty_alpha_grid_is_a_config_error() {
    let dir = scratch_dir("sweep-empty");
    let mut config = small_config();
    config.alphas.clear();
    let err = commands::sweep(&config, &dir).unwrap_err();
    assert!(matches!(err, CliError::Config(_)));
    assert_eq!(err.exit_code(), 1);
}

#[test]
fn thread_cap_env_var_is_honored() {
    let dir = scratch_dir("threads");
    let config = small_config();
    let config_path = dir.join("config.json");
    fs::write(&config_path, config.to_pretty_json()).unwrap();
    let out_serial = dir.join("serial");
    let status = binary()
        .env("PHYSATTN_THREADS", "1")
        .args(["sweep", "--config"])
        .arg(&config_path)
        .arg("--out")
        .arg(&out_serial)
        .status()
        .unwrap();
    assert!(status.success());
    let out_parallel = dir.join("parallel");
    let status = binary()
        .env("PHYSATTN_THREADS", "4")
        .args(["sweep", "--config"])
        .arg(&config_path)
        .arg("--out")
        .arg(&out_parallel)
        .status()
        .unwrap();
    assert!(status.success());
    // Thread count must not change the merged result.
    assert_eq!(
        fs::read(out_serial.join("sweep.csv")).unwrap(),
        fs::read(out_parallel.join("sweep.csv")).unwrap()
    );
}

#[test]
fn seed_flag_overrides_the_config_list() {
    let dir = scratch_dir("seed-flag");
    let config = small_config();
    let config_path = dir.join("config.json");
    fs::write(&config_path, config.to_pretty_json()).unwrap();
    let out = dir.join("out");
    let status = binary()
        .args(["sweep", "--config"])
        .arg(&config_path)
        .arg("--out")
        .arg(&out)
        .args(["--seed", "42"])
        .status()
        .unwrap();
    assert!(status.success());
    let csv = fs::read_to_string(out.join("sweep.csv")).unwrap();
    // One seed, three alphas.
    assert_eq!(csv.lines().count(), 1 + 3);
    assert!(csv.lines().skip(1).all(|l| l.ends_with(",42")));
}

fn path_is_clean(p: &Path) -> bool {
    !p.exists() || p.read_dir().map(|mut d| d.next().is_none()).unwrap_or(true)
}

#[test]
fn atomic_writer_leaves_no_temp_files() {
    let dir = scratch_dir("atomic");
    let out = dir.join("out");
    let mut config = small_config();
    config.seeds = vec![1];
    commands::sweep(&config, &out).unwrap();
    let leftovers: Vec<_> = fs::read_dir(&out)
        .unwrap()
        .filter_map(|e| e.ok())
        .filter(|e| e.path().to_string_lossy().ends_with(".tmp"))
        .collect();
    assert!(leftovers.is_empty());
    assert!(!path_is_clean(&out));
}
