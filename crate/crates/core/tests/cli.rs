use std::path::Path;
use std::process::{Command, Output};

fn rgait(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_rgait")).args(args).output().unwrap()
}

fn code(out: &Output) -> i32 {
    out.status.code().unwrap()
}

fn small_config(dir: &Path) -> String {
    let path = dir.join("config.json");
    std::fs::write(
        &path,
        r#"{"toy": {"identities": 3, "detector_frames_per_class": 10},
            "reconstructor": {"train": {"epochs": 1, "windows_per_epoch": 16}}}"#,
    )
    .unwrap();
    path.to_string_lossy().into_owned()
}

#[test]
fn help_usage_and_unknown_flags() {
    assert_eq!(code(&rgait(&["--help"])), 0);
    assert_eq!(code(&rgait(&["--version"])), 0);
    assert_eq!(code(&rgait(&[])), 1);
    assert_eq!(code(&rgait(&["gen-toy", "--no-such-flag"])), 1);
}

#[test]
fn stages_and_failure_exit_codes() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = small_config(tmp.path());
    let data = tmp.path().join("data");
    let data_s = data.to_str().unwrap();

    let out = rgait(&["gen-toy", "--config", &cfg, "--out", data_s]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let manifest = data.join("manifest.jsonl");
    assert!(manifest.exists());

    // refuses to clobber a populated directory
    assert_eq!(code(&rgait(&["gen-toy", "--config", &cfg, "--out", data_s])), 1);
    assert_eq!(code(&rgait(&["gen-toy", "--config", &cfg, "--out", data_s, "--overwrite"])), 0);

    let models = tmp.path().join("models");
    let out = rgait(&[
        "train-reconstructor",
        "--config",
        &cfg,
        "--manifest",
        manifest.to_str().unwrap(),
        "--out",
        models.to_str().unwrap(),
    ]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let rec = models.join("reconstructor.json");

    let repaired = tmp.path().join("repaired");
    let args = [
        "reconstruct",
        "--manifest",
        manifest.to_str().unwrap(),
        "--reconstructor",
        rec.to_str().unwrap(),
        "--out",
        repaired.to_str().unwrap(),
    ];
    assert_eq!(code(&rgait(&args)), 1, "no mask source must be rejected");

    let mut wrong = args.to_vec();
    wrong.extend(["--mask-source", "detector", "--detector", rec.to_str().unwrap()]);
    assert_eq!(code(&rgait(&wrong)), 3, "reconstructor checkpoint used as a detector");

    let bad = tmp.path().join("bad.json");
    std::fs::write(&bad, r#"{"no_such_key": 1}"#).unwrap();
    assert_eq!(code(&rgait(&["gen-toy", "--config", bad.to_str().unwrap(), "--out", data_s, "--overwrite"])), 1);
}
