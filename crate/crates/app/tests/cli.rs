use std::process::Command;

fn codesep() -> Command {
    Command::new(env!("CARGO_BIN_EXE_codesep"))
}

#[test]
fn init_config_round_trips_through_train_validation() {
    let out = codesep().args(["init-config", "--stage", "btd"]).output().unwrap();
    assert!(out.status.success());
    let cfg = codesep::config::TrainConfig::from_json(std::str::from_utf8(&out.stdout).unwrap()).unwrap();
    assert_eq!(cfg.codec_checkpoint.as_deref(), Some(std::path::Path::new("models/codec.ckpt")));
}

#[test]
fn bad_config_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("cfg.json");
    std::fs::write(&path, "{\"stage\": \"codec\"}").unwrap();
    let status = codesep().args(["train", "--stage", "codec", "--config"]).arg(&path).status().unwrap();
    assert_eq!(status.code(), Some(2));
}

#[test]
fn stage_mismatch_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let out = codesep().args(["init-config", "--stage", "atsp"]).output().unwrap();
    let path = dir.path().join("cfg.json");
    std::fs::write(&path, &out.stdout).unwrap();
    let status = codesep().args(["train", "--stage", "codec", "--config"]).arg(&path).status().unwrap();
    assert_eq!(status.code(), Some(2));
}

#[test]
fn truncated_bitstream_exits_3() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("t.cstk");
    std::fs::write(&path, b"CSTK\x01\x00").unwrap();
    let status = codesep()
        .args(["unpack", "--in"])
        .arg(&path)
        .arg("--out-dir")
        .arg(dir.path())
        .status()
        .unwrap();
    assert_eq!(status.code(), Some(3));
}

#[test]
fn missing_models_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    let wav = dir.path().join("y.wav");
    let w = codesep_core::Waveform::new(vec![0.0; 800], 8000).unwrap();
    codesep_core::signal::write_wav(&wav, &w).unwrap();
    let status = codesep()
        .args(["separate", "--in"])
        .arg(&wav)
        .arg("--out-dir")
        .arg(dir.path())
        .arg("--models")
        .arg(dir.path().join("none"))
        .status()
        .unwrap();
    assert_eq!(status.code(), Some(2));
}
