use std::path::Path;
use std::process::{Command, Output};

fn swtf(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_swtf"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn ok(args: &[&str]) -> String {
    let out = swtf(args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn synth_train_eval_fuse_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let spec = dir.path().join("spec.json");
    std::fs::write(
        &spec,
        r#"{"snippets_per_class": 3, "T": 6, "H": 24, "W": 24, "sprite_size": 6.0, "test_fraction": 0.34}"#,
    )
    .unwrap();
    let data = dir.path().join("data");
    let msg = ok(&[
        "synth",
        "--spec",
        s(&spec),
        "--out",
        s(&data),
        "--seed",
        "2",
    ]);
    assert!(msg.contains("8 train / 4 test"), "{msg}");

    let config_path = data.join("train_config.json");
    let mut config: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(&config_path).unwrap()).unwrap();
    config["epochs"] = 2.into();
    config["T"] = 6.into();
    std::fs::write(&config_path, config.to_string()).unwrap();
    let msg = ok(&["train", "--config", s(&config_path)]);
    assert!(msg.contains("trained 2 epochs"), "{msg}");

    let run = data.join("run");
    let metrics = std::fs::read_to_string(run.join("metrics.tsv")).unwrap();
    let lines: Vec<&str> = metrics.lines().collect();
    assert_eq!(lines.len(), 2);
    assert!(lines.iter().all(|l| l.split('\t').count() == 4));

    let report = ok(&["eval", "--checkpoint", s(&run.join("last.ckpt")), "--json"]);
    let report: serde_json::Value = serde_json::from_str(&report).unwrap();
    let confusion = report["confusion"].as_array().unwrap();
    let total: u64 = confusion
        .iter()
        .flat_map(|r| r.as_array().unwrap())
        .map(|v| v.as_u64().unwrap())
        .sum();
    assert_eq!(total, 4);

    let snippet = data.join("right_0000");
    let fused = dir.path().join("fused");
    ok(&[
        "fuse",
        "--config",
        s(&config_path),
        "--snippet",
        s(&snippet),
        "--out",
        s(&fused),
    ]);
    assert!(fused.join("xF.ppm").is_file());
    assert!(fused.join("fused_00005.ppm").is_file());
    assert!(!fused.join("fused_00006.ppm").exists());
}

#[test]
fn resume_continues_training() {
    let dir = tempfile::tempdir().unwrap();
    let spec = dir.path().join("spec.json");
    std::fs::write(
        &spec,
        r#"{"snippets_per_class": 2, "T": 4, "H": 16, "W": 16, "sprite_size": 4.0, "speed": 0.5}"#,
    )
    .unwrap();
    let data = dir.path().join("data");
    ok(&["synth", "--spec", s(&spec), "--out", s(&data)]);
    let config_path = data.join("train_config.json");
    let mut config: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(&config_path).unwrap()).unwrap();
    config["T"] = 4.into();
    config["epochs"] = 1.into();
    std::fs::write(&config_path, config.to_string()).unwrap();
    ok(&["train", "--config", s(&config_path)]);
    config["epochs"] = 3.into();
    std::fs::write(&config_path, config.to_string()).unwrap();
    let ck = data.join("run/last.ckpt");
    let msg = ok(&["train", "--config", s(&config_path), "--resume", s(&ck)]);
    assert!(msg.contains("trained 3 epochs"), "{msg}");
    let metrics = std::fs::read_to_string(data.join("run/metrics.tsv")).unwrap();
    assert_eq!(metrics.lines().count(), 3);

    config["seed"] = 99.into();
    std::fs::write(&config_path, config.to_string()).unwrap();
    let out = swtf(&["train", "--config", s(&config_path), "--resume", s(&ck)]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("different configuration"));
}

#[test]
fn gradcheck_reports_each_op() {
    let text = ok(&["gradcheck", "--scope", "roialign"]);
    assert!(text.contains("roi_align"), "{text}");
    let out = swtf(&["gradcheck", "--scope", "nonsense"]);
    assert!(!out.status.success());
}

#[test]
fn bench_counts_solves() {
    let dir = tempfile::tempdir().unwrap();
    let json = dir.path().join("bench.json");
    let text = ok(&["bench", "--resolutions", "32x24", "--json", s(&json)]);
    assert_eq!(text.lines().count(), 2, "{text}");
    let report: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(&json).unwrap()).unwrap();
    let row = &report["rows"][0];
    assert_eq!(
        (row["width"].as_u64(), row["height"].as_u64()),
        (Some(32), Some(24))
    );
    assert_eq!(row["sparse_flow_solves"].as_u64(), Some(2));
    assert_eq!(row["dense_flow_solves"].as_u64(), Some(14));
}

#[test]
fn bad_inputs_fail_cleanly() {
    let dir = tempfile::tempdir().unwrap();
    let bogus = dir.path().join("bogus.ckpt");
    std::fs::write(&bogus, b"NOPE0000").unwrap();
    let out = swtf(&["eval", "--checkpoint", s(&bogus)]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("bad magic"));

    let out = swtf(&["train", "--config", s(&dir.path().join("missing.json"))]);
    assert!(!out.status.success());

    let out = swtf(&["bench", "--resolutions", "64by64"]);
    assert!(!out.status.success());
}
