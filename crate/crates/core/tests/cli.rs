//! Integration tests for the command-line surface: exit codes, JSON
//! output shapes, and flag/env handling.

use std::path::Path;
use std::process::{Command, Output};

use singsim::audio::AudioClip;
use singsim::labels::{write_rttm, Segment, SegmentList};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_singsim"))
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("spawn singsim")
}

fn stdout_json(output: &Output) -> serde_json::Value {
    assert!(
        output.status.success(),
        "command failed: {}",
        String::from_utf8_lossy(&output.stderr)
    );
    serde_json::from_slice(&output.stdout).expect("stdout is JSON")
}

fn write_test_wav(path: &Path, seconds: usize, duty_frames: usize) {
    // `duty_frames` active frames at the head of every 10-frame second.
    let samples: Vec<f64> = (0..seconds * 8000)
        .map(|i| {
            let frame_in_second = (i % 8000) / 800;
            if frame_in_second < duty_frames {
                0.4 * (1.0 + ((i % 97) as f64) / 97.0) / 2.0
            } else {
                0.0
            }
        })
        .collect();
    singsim::save_wav(&AudioClip::new(samples, 8000, "t"), path).unwrap();
}

#[test]
fn help_exits_zero_everywhere() {
    for sub in [
        None,
        Some("vad"),
        Some("segment"),
        Some("cleanse"),
        Some("simulate"),
        Some("score"),
        Some("pit-check"),
        Some("stats"),
    ] {
        let mut args = Vec::new();
        if let Some(s) = sub {
            args.push(s);
        }
        args.push("--help");
        let output = run(&args);
        assert!(
            output.status.success(),
            "--help for {sub:?} exited {:?}",
            output.status.code()
        );
        assert!(!output.stdout.is_empty());
    }
}

#[test]
fn usage_errors_exit_one() {
    let output = run(&["frobnicate"]);
    assert_eq!(output.status.code(), Some(1));
    let output = run(&["score", "--ref", "only_half.rttm"]);
    assert_eq!(output.status.code(), Some(1));
}

#[test]
fn data_errors_exit_two() {
    let output = run(&["score", "--ref", "/nonexistent.rttm", "--hyp", "/nonexistent.rttm"]);
    assert_eq!(output.status.code(), Some(2));
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("bad.rttm"), "not an rttm\n").unwrap();
    let bad = dir.path().join("bad.rttm").to_string_lossy().into_owned();
    let output = run(&["stats", &bad]);
    assert_eq!(output.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&output.stderr).contains("line 1"));
}

#[test]
fn vad_writes_rttm_and_diagnostics() {
    let dir = tempfile::tempdir().unwrap();
    let wav = dir.path().join("clip.wav");
    write_test_wav(&wav, 4, 3);
    let out = dir.path().join("clip.rttm");
    let output = run(&[
        "vad",
        "--input",
        wav.to_str().unwrap(),
        "--output",
        out.to_str().unwrap(),
        "--threshold-db",
        "-6",
    ]);
    let json = stdout_json(&output);
    assert_eq!(json["num_frames"], 40);
    assert_eq!(json["instrumental"], false);
    let map = singsim::read_rttm(&out).unwrap();
    assert!(map.contains_key("clip"));
}

#[test]
fn vad_rejects_sample_rate_mismatch() {
    let dir = tempfile::tempdir().unwrap();
    let wav = dir.path().join("hi.wav");
    singsim::save_wav(&AudioClip::new(vec![0.3; 16_000], 16_000, "hi"), &wav).unwrap();
    let output = run(&["vad", "--input", wav.to_str().unwrap()]);
    assert_eq!(output.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&output.stderr).contains("sample rate"));
}

#[test]
fn segment_splits_with_remainder_rule() {
    let dir = tempfile::tempdir().unwrap();
    let wav = dir.path().join("long.wav");
    write_test_wav(&wav, 75, 5);
    let out_dir = dir.path().join("segs");
    let output = run(&[
        "segment",
        "--input",
        wav.to_str().unwrap(),
        "--out-dir",
        out_dir.to_str().unwrap(),
    ]);
    let json = stdout_json(&output);
    assert_eq!(json["segments"].as_array().unwrap().len(), 3);
}

#[test]
fn score_of_identical_files_is_zero() {
    let dir = tempfile::tempdir().unwrap();
    let rttm = dir.path().join("ref.rttm");
    let list = SegmentList::new(
        "rec",
        vec![
            Segment {
                singer_id: "a".into(),
                onset: 0.0,
                duration: 2.0,
            },
            Segment {
                singer_id: "b".into(),
                onset: 1.0,
                duration: 2.5,
            },
        ],
    )
    .unwrap();
    write_rttm(&[&list], &rttm).unwrap();
    let path = rttm.to_str().unwrap();
    let json = stdout_json(&run(&["score", "--ref", path, "--hyp", path]));
    assert_eq!(json["der_pct"], 0.0);
    assert_eq!(json["dscer_pct"], 0.0);
    assert_eq!(json["mapping"]["a"], "a");
    let expected_fields = [
        "der_pct",
        "miss_pct",
        "fa_pct",
        "cf_pct",
        "dscer_pct",
        "under_pct",
        "over_pct",
        "total_ref_singer_frames",
        "total_active_frames",
        "mapping",
    ];
    for field in expected_fields {
        assert!(json.get(field).is_some(), "missing field {field}");
    }
}

#[test]
fn score_with_external_vad_mask() {
    let dir = tempfile::tempdir().unwrap();
    let reference = SegmentList::new(
        "rec",
        vec![Segment {
            singer_id: "a".into(),
            onset: 0.0,
            duration: 1.0,
        }],
    )
    .unwrap();
    // Hypothesis adds a false alarm outside the VAD span.
    let hypothesis = SegmentList::new(
        "rec",
        vec![
            Segment {
                singer_id: "x".into(),
                onset: 0.0,
                duration: 1.0,
            },
            Segment {
                singer_id: "x".into(),
                onset: 5.0,
                duration: 1.0,
            },
        ],
    )
    .unwrap();
    let vad = SegmentList::new(
        "rec",
        vec![Segment {
            singer_id: "vad".into(),
            onset: 0.0,
            duration: 1.0,
        }],
    )
    .unwrap();
    let ref_p = dir.path().join("ref.rttm");
    let hyp_p = dir.path().join("hyp.rttm");
    let vad_p = dir.path().join("vad.rttm");
    write_rttm(&[&reference], &ref_p).unwrap();
    write_rttm(&[&hypothesis], &hyp_p).unwrap();
    write_rttm(&[&vad], &vad_p).unwrap();
    let json = stdout_json(&run(&[
        "score",
        "--ref",
        ref_p.to_str().unwrap(),
        "--hyp",
        hyp_p.to_str().unwrap(),
        "--vad",
        vad_p.to_str().unwrap(),
    ]));
    assert_eq!(json["der_pct"], 0.0, "masked false alarm should not count");
}

#[test]
fn stats_reports_full_overlap() {
    let dir = tempfile::tempdir().unwrap();
    let rttm = dir.path().join("c.rttm");
    let list = SegmentList::new(
        "duet",
        vec![
            Segment {
                singer_id: "a".into(),
                onset: 0.0,
                duration: 3.0,
            },
            Segment {
                singer_id: "b".into(),
                onset: 0.0,
                duration: 3.0,
            },
        ],
    )
    .unwrap();
    write_rttm(&[&list], &rttm).unwrap();
    let json = stdout_json(&run(&["stats", rttm.to_str().unwrap()]));
    assert_eq!(json["overlap_ratio_pct"], 100.0);
    assert_eq!(json["recordings"], 1);
    assert_eq!(json["per_recording"]["duet"]["num_singers"], 2);
}

#[test]
fn pit_check_reports_loss_and_permutation() {
    let dir = tempfile::tempdir().unwrap();
    let rttm = dir.path().join("labels.rttm");
    // Singer a active the first 0.5 s, singer b the next 0.5 s.
    let list = SegmentList::new(
        "rec",
        vec![
            Segment {
                singer_id: "a".into(),
                onset: 0.0,
                duration: 0.5,
            },
            Segment {
                singer_id: "b".into(),
                onset: 0.5,
                duration: 0.5,
            },
        ],
    )
    .unwrap();
    write_rttm(&[&list], &rttm).unwrap();
    // Predictions swapped relative to the label order.
    let mut csv = String::new();
    for t in 0..10 {
        let (a, b) = if t < 5 { (0.1, 0.9) } else { (0.9, 0.1) };
        csv.push_str(&format!("{a},{b}\n"));
    }
    let pred = dir.path().join("pred.csv");
    std::fs::write(&pred, csv).unwrap();
    let json = stdout_json(&run(&[
        "pit-check",
        "--labels",
        rttm.to_str().unwrap(),
        "--pred",
        pred.to_str().unwrap(),
    ]));
    assert_eq!(json["permutation"], serde_json::json!([1, 0]));
    assert!(json["loss"].as_f64().unwrap() < 0.2);
    assert_eq!(json["per_pair_cost"].as_array().unwrap().len(), 2);
}

#[test]
fn cleanse_writes_manifest_with_rejections() {
    let dir = tempfile::tempdir().unwrap();
    let input = dir.path().join("in");
    std::fs::create_dir_all(&input).unwrap();
    write_test_wav(&input.join("good.wav"), 35, 5);
    singsim::save_wav(
        &AudioClip::new(vec![0.0; 8000 * 20], 8000, "silent"),
        input.join("silent.wav"),
    )
    .unwrap();
    let out = dir.path().join("corpus");
    let json = stdout_json(&run(&[
        "cleanse",
        "--input-dir",
        input.to_str().unwrap(),
        "--out-dir",
        out.to_str().unwrap(),
        "--threshold-db",
        "-6",
    ]));
    assert_eq!(json["accepted"], 1);
    assert_eq!(json["rejected"], 1);
    assert!(out.join("manifest.jsonl").exists());
}

#[test]
fn simulate_respects_env_seed() {
    let dir = tempfile::tempdir().unwrap();
    let input = dir.path().join("in");
    std::fs::create_dir_all(&input).unwrap();
    for name in ["a", "b"] {
        write_test_wav(&input.join(format!("{name}.wav")), 30, 5);
    }
    let run_with_env = |tag: &str| -> Vec<u8> {
        let out = dir.path().join(tag);
        let output = bin()
            .env("SINGSIM_SEED", "1234")
            .args([
                "simulate",
                "--input-dir",
                input.to_str().unwrap(),
                "--work-dir",
                dir.path().join(format!("w{tag}")).to_str().unwrap(),
                "--out-dir",
                out.to_str().unwrap(),
                "--n-mix",
                "3",
                "--threshold-db",
                "-6",
            ])
            .output()
            .expect("spawn");
        let json: serde_json::Value = serde_json::from_slice(&output.stdout).unwrap_or_else(|_| {
            panic!("bad stdout: {}", String::from_utf8_lossy(&output.stderr))
        });
        assert_eq!(json["seed"], 1234);
        std::fs::read(out.join("dataset.jsonl")).unwrap()
    };
    assert_eq!(run_with_env("x"), run_with_env("y"));
}

#[test]
fn config_file_drives_defaults_and_flags_override() {
    let dir = tempfile::tempdir().unwrap();
    let wav = dir.path().join("c.wav");
    write_test_wav(&wav, 4, 3);
    let cfg = dir.path().join("cfg.toml");
    std::fs::write(&cfg, "[vad]\nthreshold_db = -6.0\nmedian_width = 1\n").unwrap();
    let json = stdout_json(&run(&[
        "vad",
        "--input",
        wav.to_str().unwrap(),
        "--config",
        cfg.to_str().unwrap(),
    ]));
    // 3 of 10 frames per second are active at -6 dB.
    assert!((json["active_fraction"].as_f64().unwrap() - 0.3).abs() < 1e-9);
    // A flag override on top of the config flips the result.
    let json = stdout_json(&run(&[
        "vad",
        "--input",
        wav.to_str().unwrap(),
        "--config",
        cfg.to_str().unwrap(),
        "--threshold-db",
        "20",
    ]));
    assert_eq!(json["active_fraction"], 0.0);
}
