use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use ambisense_cli::commands::{self, MetricsReport, MetricsTask};
use ambisense_cli::formats::{self, KeypointRecord, MaskRaster};
use ambisense_cli::oracle::{self, Tolerance};
use ambisense_cli::{presets, CliError, Scenario};
use num_complex::Complex64;

fn bin() -> Command {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_ambisense"));
    cmd.env_clear();
    cmd
}

fn run(cmd: &mut Command) -> Output {
    cmd.output().expect("binary runs")
}

fn env(pairs: &[(&str, &str)]) -> Vec<(String, String)> {
    pairs.iter().map(|(k, v)| (k.to_string(), v.to_string())).collect()
}

/// The static preset shortened and slowed down so a full pipeline stays cheap.
fn quick_static() -> Scenario {
    Scenario::load_with_env(
        "preset:static",
        env(&[("AMBISENSE_RUN__DURATION_S", "0.4"), ("AMBISENSE_RUN__SAMPLE_RATE_HZ", "2e5")]),
    )
    .unwrap()
}

fn dir_files(dir: &Path) -> BTreeMap<PathBuf, Vec<u8>> {
    let mut out = BTreeMap::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for entry in std::fs::read_dir(&d).unwrap() {
            let path = entry.unwrap().path();
            if path.is_dir() {
                stack.push(path);
            } else {
                out.insert(path.strip_prefix(dir).unwrap().to_path_buf(), std::fs::read(&path).unwrap());
            }
        }
    }
    out
}

// ---------------------------------------------------------------- scenarios

#[test]
fn reference_preset_has_paper_configuration() {
    let sc = presets::load("ars_reference").unwrap();
    assert_eq!(sc.ofdm.carrier_hz, 2.35e9);
    assert_eq!(sc.array_geometry().unwrap().rx_positions.len(), 8);
    assert_eq!(sc.run.sample_rate_hz, 2e6);
    assert_eq!(sc.run.duration_s, 4.0);
    assert_eq!(sc.frame_period_s(), 1.0 / 5.25);
}

#[test]
fn every_preset_loads_and_echoes() {
    for name in presets::NAMES {
        let sc = presets::load(name).unwrap();
        let again = Scenario::parse(&sc.to_toml(), "echo").unwrap();
        assert_eq!(again, sc, "{name}");
    }
}

#[test]
fn channel_map_length_mismatch_is_a_validation_error() {
    let err = Scenario::load_with_env("preset:static", env(&[("AMBISENSE_ARRAY__CHANNEL_MAP", "[0, 1, 2]")])).unwrap_err();
    match err {
        CliError::Validation { field, .. } => assert_eq!(field, "array.channel_map"),
        other => panic!("unexpected {other:?}"),
    }
}

#[test]
fn repeated_channel_is_a_validation_error() {
    let err = Scenario::load_with_env("preset:static", env(&[("AMBISENSE_ARRAY__CHANNEL_MAP", "[0, 1, 2, 3, 4, 5, 6, 6]")])).unwrap_err();
    assert!(matches!(err, CliError::Validation { ref field, .. } if field == "array.channel_map"), "{err:?}");
}

#[test]
fn unknown_key_reports_its_line() {
    let text = presets::text("static").unwrap().replace("rng_seed = 7", "rng_seed = 7\nrng_sed = 8");
    let expected = text.lines().position(|l| l.starts_with("rng_sed")).unwrap() + 1;
    match Scenario::parse(&text, "typo.toml").unwrap_err() {
        CliError::Parse { line, message, .. } => {
            assert_eq!(line, expected);
            assert!(message.contains("rng_sed"), "{message}");
        }
        other => panic!("unexpected {other:?}"),
    }
}

#[test]
fn environment_overrides_nested_keys() {
    let sc = Scenario::load_with_env(
        "preset:ars_reference",
        env(&[
            ("AMBISENSE_RUN__DURATION_S", "0.25"),
            ("AMBISENSE_SCENE__REFLECTORS__0__AZIMUTH_RAD", "-0.5"),
            ("AMBISENSE_BEAMFORM__FRAME_RATE_HZ", "10"),
            ("UNRELATED", "ignored"),
        ]),
    )
    .unwrap();
    assert_eq!(sc.run.duration_s, 0.25);
    assert_eq!(sc.scene.reflectors[0].azimuth_rad, -0.5);
    assert_eq!(sc.frame_period_s(), 0.1);
}

#[test]
fn override_with_an_invalid_value_is_rejected() {
    let err = Scenario::load_with_env("preset:static", env(&[("AMBISENSE_RUN__SAMPLE_RATE_HZ", "-1")])).unwrap_err();
    assert!(matches!(err, CliError::Validation { ref field, .. } if field == "run.sample_rate_hz"), "{err:?}");
}

#[test]
fn defaults_are_materialized_on_load() {
    let sc = presets::load("static").unwrap();
    assert_eq!(sc.ofdm.qpsk_seed, Some(sc.run.rng_seed));
    assert_eq!(sc.ofdm.symbol_period_s, Some(1.0 / 30e3));
    assert_eq!(sc.array.channel_map.as_deref(), Some(&[0, 1, 2, 3, 4, 5, 6, 7][..]));
    assert_eq!(sc.array.rx_positions.as_ref().map(Vec::len), Some(8));
}

// ----------------------------------------------------------------- simulate

#[test]
fn empty_scene_simulates_with_a_warning() {
    let sc = Scenario::load_with_env(
        "preset:static",
        env(&[("AMBISENSE_SCENE__REFLECTORS", "[]"), ("AMBISENSE_RUN__DURATION_S", "0.01")]),
    )
    .unwrap();
    let tmp = tempfile::tempdir().unwrap();
    let summary = commands::simulate(&sc, tmp.path()).unwrap();
    assert_eq!(summary.warnings.len(), 1);
    assert!(summary.warnings[0].contains("static"), "{:?}", summary.warnings);
}

#[test]
fn zero_duration_writes_empty_payloads_and_a_valid_header() {
    let sc = Scenario::load_with_env("preset:static", env(&[("AMBISENSE_RUN__DURATION_S", "0")])).unwrap();
    let tmp = tempfile::tempdir().unwrap();
    commands::simulate(&sc, tmp.path()).unwrap();
    let header = formats::read_baseband_header(tmp.path()).unwrap();
    assert_eq!(header.channels, 8);
    assert_eq!(header.samples_per_channel, 0);
    for c in 0..header.channels {
        assert!(std::fs::read(tmp.path().join(formats::channel_file(c))).unwrap().is_empty());
        assert!(formats::read_baseband_channel(tmp.path(), &header, c).unwrap().is_empty());
    }
}

#[test]
fn simulate_is_deterministic_per_seed() {
    let tmp = tempfile::tempdir().unwrap();
    let mut outputs = Vec::new();
    for (dir, seed) in [("a", "5"), ("b", "5"), ("c", "6")] {
        let out = tmp.path().join(dir);
        let status = run(bin()
            .args(["simulate", "--scenario", "preset:ars_reference", "--seed", seed, "--out"])
            .arg(&out)
            .env("AMBISENSE_RUN__DURATION_S", "0.02"));
        assert!(status.status.success(), "{}", String::from_utf8_lossy(&status.stderr));
        outputs.push(dir_files(&out));
    }
    assert_eq!(outputs[0], outputs[1]);
    assert_ne!(outputs[0], outputs[2]);
    assert_eq!(outputs[0].len(), 10);
}

// ----------------------------------------------------------------- pipeline

#[test]
fn static_scene_gives_vanishing_heatmaps() {
    let sc = quick_static();
    let tmp = tempfile::tempdir().unwrap();
    let m = commands::pipeline(&sc, tmp.path()).unwrap();
    assert_eq!(m.heatmap_frames, 2);
    let (manifest, frames) = formats::read_heatmaps(tmp.path()).unwrap();
    // The first sanitized window has no filter history from before the
    // record, so only frames differenced against later windows are exact.
    let settled: Vec<_> = frames.iter().filter(|f| f.t_s - manifest.t_delta_s >= sc.sanitize.window_s).collect();
    assert!(!settled.is_empty());
    for f in settled {
        assert!(f.max() < 1e-20, "frame at {} peaks at {}", f.t_s, f.max());
    }
}

#[test]
fn stages_rerun_from_an_output_directory() {
    let sc = quick_static();
    let tmp = tempfile::tempdir().unwrap();
    let first = tmp.path().join("first");
    commands::pipeline(&sc, &first).unwrap();
    let echoed = Scenario::load_with_env(first.join(formats::SCENARIO_FILE).to_str().unwrap(), std::iter::empty()).unwrap();
    let second = tmp.path().join("second");
    commands::sanitize(&echoed, &first, &second).unwrap();
    commands::velocity(&echoed, &second, &second).unwrap();
    commands::beamform(&echoed, &second, &second).unwrap();
    for name in ["points.csv", "sanitized.json", "velocity.csv", "heatmaps.csv", "heatmaps.json"] {
        assert_eq!(std::fs::read(first.join(name)).unwrap(), std::fs::read(second.join(name)).unwrap(), "{name}");
    }
}

#[test]
fn sanitize_without_a_scenario_uses_the_echo() {
    let tmp = tempfile::tempdir().unwrap();
    let sc = quick_static();
    commands::simulate(&sc, tmp.path()).unwrap();
    let out = run(bin().args(["sanitize", "--out"]).arg(tmp.path()));
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(tmp.path().join("points.csv").exists());
}

// ------------------------------------------------------------------- oracle

#[test]
fn oracle_preset_passes() {
    let sc = presets::load("oracle_scaled").unwrap();
    let report = oracle::run_oracle(&sc, &Tolerance::default()).unwrap();
    assert!(report.pass, "{report:?}");
}

#[test]
fn oracle_flags_beta_doubled_in_one_chain() {
    let sc = presets::load("oracle_scaled").unwrap();
    let mut faulty = sc.clone();
    faulty.scene.beta *= 2.0;
    let z = oracle::time_domain_baseband(&faulty).unwrap();
    let report = oracle::compare(&sc, &z, &Tolerance::default()).unwrap();
    assert!(!report.pass);
    assert!(report.max_rel_amplitude_error > 0.5, "{report:?}");
}

#[test]
fn oracle_matches_zero_delay_closed_form() {
    let sc = Scenario::load_with_env(
        "preset:oracle_scaled",
        env(&[
            ("AMBISENSE_RUN__DURATION_S", "0.005"),
            ("AMBISENSE_SCENE__REFLECTORS", "[{ alpha = [0.7, -0.2], trajectory = { kind = \"linear\", d0_m = 0.0, v_mps = 0.0 } }]"),
        ]),
    )
    .unwrap();
    let z = oracle::time_domain_baseband(&sc).unwrap();
    let cfg = sc.ofdm_config().unwrap();
    let energy: f64 = cfg.qam_symbols.iter().map(|x| x.norm_sqr()).sum();
    let expected = sc.scene.beta.norm_sqr() * Complex64::new(0.7, -0.2) * energy;
    let mid = z.samples.len() / 2;
    assert!((z.samples[mid] - expected).norm() < 1e-9 * expected.norm(), "{} vs {expected}", z.samples[mid]);
    assert!(oracle::run_oracle(&sc, &Tolerance::default()).unwrap().pass);
}

#[test]
fn oracle_rejects_rf_carriers() {
    let sc = presets::load("ars_reference").unwrap();
    let err = oracle::run_oracle(&sc, &Tolerance::default()).unwrap_err();
    assert!(matches!(err, CliError::Validation { ref field, .. } if field == "ofdm.carrier_hz"));
}

// ------------------------------------------------------------------ metrics

fn mask_row(bits: &[bool]) -> MaskRaster {
    MaskRaster { rows: 1, cols: bits.len(), bits: bits.to_vec() }
}

/// Ground truth of ten set pixels and predictions covering 9, 6, and 4 of
/// them, so the IoUs are 0.9, 0.6, and 0.4.
fn write_iou_fixture(dir: &Path) -> (PathBuf, PathBuf) {
    let gt_bits = [true; 10];
    let mut gt = BTreeMap::new();
    let mut pred = BTreeMap::new();
    for (id, covered) in [("a", 9), ("b", 6), ("c", 4)] {
        gt.insert(id.to_string(), mask_row(&gt_bits));
        pred.insert(id.to_string(), mask_row(&(0..10).map(|i| i < covered).collect::<Vec<_>>()));
    }
    let (p, g) = (dir.join("pred.csv"), dir.join("gt.csv"));
    formats::write_masks(&p, &pred).unwrap();
    formats::write_masks(&g, &gt).unwrap();
    (p, g)
}

#[test]
fn identical_masks_score_one_everywhere() {
    let tmp = tempfile::tempdir().unwrap();
    let (_, gt) = write_iou_fixture(tmp.path());
    match commands::metrics(MetricsTask::Mask, &gt, &gt, tmp.path()).unwrap() {
        MetricsReport::Mask { ap, ar, .. } => {
            assert_eq!(ap.mean_ap, 1.0);
            assert!(ap.ap_at.iter().all(|&(_, v)| v == 1.0));
            assert_eq!(ar, 1.0);
        }
        other => panic!("unexpected {other:?}"),
    }
}

#[test]
fn hand_enumerated_mask_fixture_gives_mean_ap_point_four() {
    let tmp = tempfile::tempdir().unwrap();
    let (pred, gt) = write_iou_fixture(tmp.path());
    let report = commands::metrics(MetricsTask::Mask, &pred, &gt, tmp.path()).unwrap();
    let MetricsReport::Mask { ap, iou, .. } = &report else { panic!("mask report expected") };
    assert_eq!(iou["a"], 0.9);
    assert_eq!(iou["b"], 0.6);
    assert_eq!(iou["c"], 0.4);
    assert!((ap.mean_ap - 0.4).abs() < 1e-12, "{}", ap.mean_ap);
    assert_eq!(ap.ap_at[0], (0.5, 2.0 / 3.0));
    let written: MetricsReport = formats::read_json(&tmp.path().join("metrics.json")).unwrap();
    assert_eq!(written, report);
    let table = commands::format_metrics(&report);
    for column in ["AP", "AP@.50", "AP@.80", "AR", "0.4000"] {
        assert!(table.contains(column), "{table}");
    }
}

#[test]
fn keypoint_metrics_on_exact_predictions() {
    let tmp = tempfile::tempdir().unwrap();
    let record = KeypointRecord {
        points: (0..17).map(|k| [k as f64, 2.0 * k as f64]).collect(),
        visibility: vec![2; 17],
        scale: 40.0,
        bbox: (30.0, 40.0),
    };
    let records: BTreeMap<String, KeypointRecord> = [("p0".to_string(), record)].into();
    let path = tmp.path().join("kp.csv");
    formats::write_keypoints(&path, &records).unwrap();
    match commands::metrics(MetricsTask::Keypoint, &path, &path, tmp.path()).unwrap() {
        MetricsReport::Keypoint { keypoints, pck, mean_oks, .. } => {
            assert_eq!(keypoints, 17);
            assert!(pck.iter().flatten().all(|v| *v == Some(100.0)));
            assert_eq!(mean_oks, Some(1.0));
        }
        other => panic!("unexpected {other:?}"),
    }
}

#[test]
fn missing_visibility_column_is_a_schema_error() {
    let tmp = tempfile::tempdir().unwrap();
    let path = tmp.path().join("kp.csv");
    std::fs::write(&path, "instance,keypoint,x,y,scale,bbox_w,bbox_h\np0,0,1,2,3,4,5\n").unwrap();
    match commands::metrics(MetricsTask::Keypoint, &path, &path, tmp.path()).unwrap_err() {
        CliError::Schema { column, .. } => assert_eq!(column, "visibility"),
        other => panic!("unexpected {other:?}"),
    }
}

#[test]
fn bad_cell_reports_row_and_column() {
    let tmp = tempfile::tempdir().unwrap();
    let path = tmp.path().join("kp.csv");
    std::fs::write(&path, "instance,keypoint,x,y,visibility,scale,bbox_w,bbox_h\np0,0,1,2,2,3,4,5\np0,1,oops,2,2,3,4,5\n").unwrap();
    match commands::metrics(MetricsTask::Keypoint, &path, &path, tmp.path()).unwrap_err() {
        CliError::Schema { row, column, .. } => assert_eq!((row, column.as_str()), (3, "x")),
        other => panic!("unexpected {other:?}"),
    }
}

// --------------------------------------------------------------- exit codes

#[test]
fn exit_code_one_on_validation_failure() {
    let tmp = tempfile::tempdir().unwrap();
    let out = run(bin()
        .args(["simulate", "--scenario", "preset:static", "--out"])
        .arg(tmp.path())
        .env("AMBISENSE_RUN__DURATION_S", "-1"));
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("run.duration_s"));
}

#[test]
fn exit_code_one_on_schema_failure() {
    let tmp = tempfile::tempdir().unwrap();
    let path = tmp.path().join("kp.csv");
    std::fs::write(&path, "instance,keypoint,x,y\n").unwrap();
    let out = run(bin().args(["metrics", "--task", "keypoint", "--pred"]).arg(&path).arg("--gt").arg(&path).arg("--out").arg(tmp.path()));
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn exit_code_two_when_the_oracle_misses_its_tolerance() {
    let tmp = tempfile::tempdir().unwrap();
    let out = run(bin()
        .args(["oracle", "--scenario", "preset:oracle_scaled", "--tolerance", "1e-12", "--out"])
        .arg(tmp.path())
        .env("AMBISENSE_RUN__DURATION_S", "0.01"));
    assert_eq!(out.status.code(), Some(2), "{}", String::from_utf8_lossy(&out.stderr));
    let report: oracle::OracleReport = formats::read_json(&tmp.path().join("oracle.json")).unwrap();
    assert!(!report.pass);
}

#[test]
fn exit_code_three_on_missing_scenario_file() {
    let tmp = tempfile::tempdir().unwrap();
    let out = run(bin().args(["simulate", "--scenario"]).arg(tmp.path().join("absent.toml")).arg("--out").arg(tmp.path()));
    assert_eq!(out.status.code(), Some(3));
}

#[test]
fn exit_code_zero_on_success() {
    let tmp = tempfile::tempdir().unwrap();
    let out = run(bin()
        .args(["oracle", "--scenario", "preset:oracle_scaled", "--out"])
        .arg(tmp.path())
        .env("AMBISENSE_RUN__DURATION_S", "0.01"));
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
}
