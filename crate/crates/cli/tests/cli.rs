use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn smoke() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs/smoke.toml")
}

fn amc(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_amc"))
        .args(args)
        .current_dir(cwd)
        .env_remove("AMC_OUT_ROOT")
        .output()
        .expect("binary runs")
}

fn ok(o: &Output) {
    assert!(
        o.status.success(),
        "exit {:?}\nstdout:\n{}\nstderr:\n{}",
        o.status.code(),
        String::from_utf8_lossy(&o.stdout),
        String::from_utf8_lossy(&o.stderr)
    );
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn gen_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = smoke();
    for run in ["a", "b"] {
        let out = dir.path().join(run);
        ok(&amc(&["gen", "-c", s(&cfg), "-o", s(&out)], dir.path()));
    }
    let a = fs::read(dir.path().join("a/dataset.iqd")).unwrap();
    assert!(!a.is_empty());
    assert_eq!(a, fs::read(dir.path().join("b/dataset.iqd")).unwrap());
    assert!(dir.path().join("a/run.toml").exists());

    let other = dir.path().join("c");
    ok(&amc(&["gen", "-c", s(&cfg), "-o", s(&other), "--seed", "99"], dir.path()));
    assert_ne!(a, fs::read(other.join("dataset.iqd")).unwrap());
}

#[test]
fn usage_errors_write_nothing() {
    let dir = tempfile::tempdir().unwrap();
    let o = amc(&["frobnicate"], dir.path());
    assert_eq!(o.status.code(), Some(2));
    assert!(!String::from_utf8_lossy(&o.stderr).is_empty());
    let o = amc(&["gen", "--no-such-flag"], dir.path());
    assert_eq!(o.status.code(), Some(2));
    assert_eq!(fs::read_dir(dir.path()).unwrap().count(), 0);
    assert_eq!(amc(&["--help"], dir.path()).status.code(), Some(0));
}

#[test]
fn error_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("missing.iqd");
    let o = amc(
        &["eval", "-c", s(&smoke()), "--model", s(&missing), "-o", s(&dir.path().join("e"))],
        dir.path(),
    );
    assert_eq!(o.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&o.stderr).contains("missing.iqd"));

    let o = amc(&["gen", "--set", "model.keep_prob=1.5"], dir.path());
    assert_eq!(o.status.code(), Some(4));

    let o = amc(&["gen", "-c", s(&dir.path().join("nope.toml"))], dir.path());
    assert_eq!(o.status.code(), Some(3));

    let o = amc(&["eval", "-c", s(&smoke()), "-o", s(&dir.path().join("f"))], dir.path());
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn output_root_from_environment() {
    let dir = tempfile::tempdir().unwrap();
    let o = Command::new(env!("CARGO_BIN_EXE_amc"))
        .args(["gen", "-c", s(&smoke())])
        .current_dir(dir.path())
        .env("AMC_OUT_ROOT", dir.path().join("root"))
        .output()
        .unwrap();
    ok(&o);
    assert!(dir.path().join("root/gen/dataset.iqd").exists());
}

#[test]
fn smoke_pipeline_writes_declared_artifacts() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let cfg = smoke();
    let cfg = s(&cfg);
    ok(&amc(&["gen", "-c", cfg, "-o", "gen"], d));
    let ds = d.join("gen/dataset.iqd");
    let ds_bytes = fs::read(&ds).unwrap();
    let ds = s(&ds);

    ok(&amc(&["train", "-c", cfg, "--dataset", ds, "-o", "train"], d));
    for f in ["model.json", "model.params", "history.csv", "run.toml"] {
        assert!(d.join("train").join(f).exists(), "train/{f}");
    }
    let hist = fs::read_to_string(d.join("train/history.csv")).unwrap();
    assert_eq!(hist.lines().count(), 3);

    // Re-running from the resolved config reproduces the checkpoint.
    let resolved = d.join("train/run.toml");
    ok(&amc(&["train", "-c", s(&resolved), "-o", "train2"], d));
    assert_eq!(
        fs::read(d.join("train/model.params")).unwrap(),
        fs::read(d.join("train2/model.params")).unwrap()
    );

    let model = d.join("train/model.json");
    let model = s(&model);
    let o = amc(&["eval", "-c", cfg, "--model", model, "--dataset", ds, "-o", "eval"], d);
    ok(&o);
    assert!(String::from_utf8_lossy(&o.stdout).contains("overall accuracy"));
    for f in ["eval_per_snr.csv", "eval_confusion.csv", "eval_confusion_counts.csv"] {
        assert!(d.join("eval").join(f).exists(), "eval/{f}");
    }
    let per_snr = fs::read_to_string(d.join("eval/eval_per_snr.csv")).unwrap();
    assert_eq!(per_snr.lines().count(), 3);

    ok(&amc(&["quantize", "-c", cfg, "--model", model, "--dataset", ds, "-o", "quant"], d));
    for f in ["footprint.csv", "quant_accuracy.csv", "model_tw_4ba.json", "model_tw_4ba.qparams", "model_full.json"] {
        assert!(d.join("quant").join(f).exists(), "quant/{f}");
    }
    assert_eq!(fs::read_to_string(d.join("quant/footprint.csv")).unwrap().lines().count(), 5);

    ok(&amc(&["quantize", "-c", cfg, "--model", model, "--scheme", "tw-fa", "-o", "q1"], d));
    assert!(d.join("q1/model_tw_fa.json").exists());
    assert!(!d.join("q1/model_bin.json").exists());

    ok(&amc(&["gates", "-c", cfg, "--model", model, "--dataset", ds, "-o", "gates"], d));
    let frames = fs::read_to_string(d.join("gates/frames.csv")).unwrap();
    assert_eq!(frames.lines().count(), 3);
    let first = frames.lines().nth(1).unwrap().split(',').next().unwrap().to_string();
    for f in ["saturation.csv", "inputs.csv", "tanh_c_l0.csv", "tanh_c_l1.csv", "gates_l1.csv"] {
        assert!(d.join(format!("gates/frame{first}_{f}")).exists(), "{f}");
    }

    ok(&amc(&["scan", "-c", cfg, "--dataset", ds, "-o", "scan"], d));
    let psd = fs::read_to_string(d.join("scan/psd.csv")).unwrap();
    assert_eq!(psd.lines().count(), 1 + 80);
    assert_eq!(psd.lines().next().unwrap().split(',').count(), 16);

    let o = amc(&["bench", "-c", cfg, "--model", model, "--dataset", ds, "-o", "bench"], d);
    ok(&o);
    assert!(String::from_utf8_lossy(&o.stderr).contains("not comparable"));
    assert!(d.join("bench/host.txt").exists());
    assert_eq!(fs::read_to_string(d.join("bench/bench.csv")).unwrap().lines().count(), 5);

    ok(&amc(
        &["export-features", "-c", cfg, "--dataset", ds, "--set", "export.max_frames=3", "-o", "feat"],
        d,
    ));
    let feat = fs::read_to_string(d.join("feat/features.csv")).unwrap();
    assert!(feat.starts_with("index,scheme,snr_db,t,amplitude,phase\n"));
    assert_eq!(feat.lines().count(), 1 + 3 * 64);

    // Inputs are untouched.
    assert_eq!(fs::read(d.join("gen/dataset.iqd")).unwrap(), ds_bytes);
}
