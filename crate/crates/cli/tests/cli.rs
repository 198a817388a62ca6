use std::path::Path;
use std::process::Command;

fn run(args: &[&str]) -> (i32, String, String) {
    let out = Command::new(env!("CARGO_BIN_EXE_pulsetone")).args(args).output().unwrap();
    (
        out.status.code().unwrap(),
        String::from_utf8_lossy(&out.stdout).into_owned(),
        String::from_utf8_lossy(&out.stderr).into_owned(),
    )
}

const MINIMAL: &str = r#"
seed = 4
methods = ["pos", "oracle"]

[dataset]
size = 8

[dataset.train]
subjects = 2
mix = "light"
duration_s = 10.0

[train]
size = 8
"#;

fn config(dir: &Path, text: &str) -> String {
    let p = dir.join("exp.toml");
    std::fs::write(&p, text).unwrap();
    p.to_str().unwrap().to_string()
}

#[test]
fn gen_writes_videos_sidecars_and_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config(dir.path(), MINIMAL);
    let out = dir.path().join("run");
    let (code, stdout, stderr) = run(&["gen", "--config", &cfg, "--out", out.to_str().unwrap()]);
    assert_eq!(code, 0, "{stderr}");
    assert!(stdout.contains("2 subjects"));
    for f in ["manifest.json", "train/train000.rvid", "train/train000.json", "train/train001.rvid"] {
        assert!(out.join("data").join(f).exists(), "{f}");
    }
}

#[test]
fn gen_is_byte_identical_and_seed_flag_matters() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config(dir.path(), MINIMAL);
    let read = |o: &Path| std::fs::read(o.join("data/train/train001.rvid")).unwrap();
    let mut runs = Vec::new();
    for (name, seed) in [("a", "4"), ("b", "4"), ("c", "5")] {
        let o = dir.path().join(name);
        assert_eq!(run(&["gen", "--config", &cfg, "--seed", seed, "--out", o.to_str().unwrap()]).0, 0);
        runs.push(read(&o));
    }
    assert_eq!(runs[0], runs[1]);
    assert_ne!(runs[0], runs[2]);
}

#[test]
fn unknown_config_key_is_a_validation_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config(dir.path(), &MINIMAL.replace("size = 8\n\n[dataset.train]", "size = 8\nsizee = 3\n\n[dataset.train]"));
    let (code, _, stderr) = run(&["gen", "--config", &cfg, "--out", "x"]);
    assert_eq!(code, 1);
    assert!(stderr.contains("sizee"), "{stderr}");
}

#[test]
fn bad_flag_is_a_validation_error() {
    assert_eq!(run(&["gen", "--frobnicate"]).0, 1);
    assert_eq!(run(&["--help"]).0, 0);
}

#[test]
fn missing_dataset_is_a_runtime_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config(dir.path(), MINIMAL);
    let (code, _, stderr) = run(&["eval", "--config", &cfg, "--out", dir.path().join("none").to_str().unwrap()]);
    assert_eq!(code, 2);
    assert!(stderr.contains("run `gen` first"), "{stderr}");
}

#[test]
fn missing_output_directory_is_reported() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config(dir.path(), MINIMAL);
    let (code, _, stderr) = run(&["gen", "--config", &cfg]);
    assert_eq!(code, 1);
    assert!(stderr.contains("--out"), "{stderr}");
}

#[test]
fn eval_oracle_end_to_end() {
    let dir = tempfile::tempdir().unwrap();
    let text = MINIMAL.replace("[train]", "[dataset.eval]\nsubjects = 2\nmix = \"vital-like\"\nduration_s = 31.0\n\n[train]");
    let cfg = config(dir.path(), &text);
    let out = dir.path().join("run");
    let o = out.to_str().unwrap();
    assert_eq!(run(&["gen", "--config", &cfg, "--out", o]).0, 0);
    let (code, stdout, stderr) = run(&["eval", "--config", &cfg, "--out", o]);
    assert_eq!(code, 0, "{stderr}");
    assert!(stdout.contains("oracle: MAE 0.00"), "{stdout}");
    let report = std::fs::read_to_string(out.join("eval/report.json")).unwrap();
    pulsetone::harness::validate_report(&report).unwrap();
    assert!(out.join("eval/groups.csv").exists() && out.join("eval/hr_traces.csv").exists());
}

#[test]
fn learned_method_without_checkpoint_lists_available() {
    let dir = tempfile::tempdir().unwrap();
    let text = MINIMAL
        .replace("methods = [\"pos\", \"oracle\"]", "methods = [\"prn-real\"]")
        .replace("[train]", "[dataset.eval]\nsubjects = 1\nduration_s = 31.0\n\n[train]");
    let cfg = config(dir.path(), &text);
    let o = dir.path().join("run");
    assert_eq!(run(&["gen", "--config", &cfg, "--out", o.to_str().unwrap()]).0, 0);
    let (code, _, stderr) = run(&["eval", "--config", &cfg, "--out", o.to_str().unwrap()]);
    assert_eq!(code, 2);
    assert!(stderr.contains("no checkpoint for method prn-real; available: []"), "{stderr}");
}
