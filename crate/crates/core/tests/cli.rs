use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use mirrornet::data::{load_manifest, ArticTrajectory, Split};
use mirrornet::eval::read_exported;

const TINY: &str = r#"
seed = 3

[model]
pre_post_filters = [128, 16, 16]
enc_filters = [16, 8, 9]

[train_synth]
epochs = 2
batch_ft = 4
batch_lt = 8

[init]
epochs = 2
batch = 4

[learn]
iterations = 1
stage_epochs = [1, 1]
batch = 4
lr_enc = 1e-4
lr_dec = 1e-4
"#;

fn bin(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_mirrornet"))
        .args(args)
        .env("RUST_LOG", "warn")
        .output()
        .expect("binary runs")
}

fn ok(args: &[&str]) {
    let out = bin(args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn tiny_config(dir: &Path) -> PathBuf {
    let p = dir.join("tiny.toml");
    std::fs::write(&p, TINY).unwrap();
    p
}

fn dataset(dir: &Path, n: usize, splits: Option<&str>) -> PathBuf {
    let out = dir.join("data");
    let n = n.to_string();
    let mut args = vec!["gen-synthetic", "--n", &n, "--duration", "0.8"];
    args.extend(["--seed", "11", "--out", s(&out)]);
    if let Some(sp) = splits {
        args.extend(["--splits", sp]);
    }
    ok(&args);
    out.join("manifest.json")
}

#[test]
fn gen_synthetic_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    for sub in ["a", "b"] {
        let out = dir.path().join(sub);
        ok(&["gen-synthetic", "--n", "3", "--duration", "0.5", "--seed", "4", "--out", s(&out)]);
    }
    for rel in ["manifest.json", "traj/syn0001.csv", "spec/syn0002.csv"] {
        let a = std::fs::read(dir.path().join("a").join(rel));
        let b = std::fs::read(dir.path().join("b").join(rel));
        assert!(a.is_ok(), "missing {rel}");
        assert_eq!(a.unwrap(), b.unwrap(), "{rel} differs");
    }
}

#[test]
fn usage_errors_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    let out = bin(&["gen-synthetic", "--n", "0", "--out", s(dir.path())]);
    assert_eq!(out.status.code(), Some(2));
    assert_eq!(bin(&["no-such-command"]).status.code(), Some(2));
    let out = bin(&["gen-synthetic", "--n", "2", "--out", s(dir.path()), "--splits", "train=x"]);
    assert_eq!(out.status.code(), Some(2));
    let bad = dir.path().join("bad.toml");
    std::fs::write(&bad, "[learn]\nlr_encoder = 1.0\n").unwrap();
    let out = bin(&["train-mirrornet", "--config", s(&bad), "--manifest", "x", "--synth", "oracle", "--init", "off", "--out", "y"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn runtime_errors_exit_1() {
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("nope.mnc");
    let out = bin(&["invert", "--model", s(&missing), "--wav", "x.wav", "--out-csv", "y.csv"]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn splits_are_speaker_disjoint() {
    let dir = tempfile::tempdir().unwrap();
    let manifest = dataset(dir.path(), 10, Some("train=0.6,dev=0.2,test=0.2"));
    let items = load_manifest(&manifest).unwrap();
    for a in &items {
        for b in &items {
            if a.speaker == b.speaker {
                assert_eq!(a.split, b.split);
            }
        }
    }
    for split in [Split::Train, Split::Dev, Split::Test] {
        assert!(items.iter().any(|i| i.split == split), "{split:?} empty");
    }
}

#[test]
fn train_synth_then_render_audio() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = tiny_config(dir.path());
    let manifest = dataset(dir.path(), 4, Some("train=0.75,dev=0.25"));
    let ck = dir.path().join("synth.mnc");
    ok(&[
        "train-synth", "--config", s(&cfg), "--manifest", s(&manifest), "--variant", "lt", "--crop-frames", "40",
        "--out", s(&ck),
    ]);
    assert!(ck.exists());
    let out = bin(&[
        "train-synth", "--config", s(&cfg), "--manifest", s(&manifest), "--channels", "7", "--out", s(&ck),
    ]);
    assert_eq!(out.status.code(), Some(2));

    let traj = dir.path().join("data/traj/syn0000.csv");
    for synth in [s(&ck), "oracle"] {
        let wav = dir.path().join("out.wav");
        ok(&["synth-audio", "--synth", synth, "--traj", s(&traj), "--out-wav", s(&wav), "--iters", "4"]);
        let (samples, fs) = mirrornet::audfront::wav::read(&wav).unwrap();
        assert_eq!(fs, 16000);
        let frames = ArticTrajectory::read_csv(&traj).unwrap().frames() / 4 * 4;
        let expect = frames * 5 / 4 * 128;
        assert!(samples.len().abs_diff(expect) <= 128, "{} vs {expect}", samples.len());
        assert!(samples.iter().all(|v| v.is_finite()));
    }
}

#[test]
fn train_eval_invert() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = tiny_config(dir.path());
    let manifest = dataset(dir.path(), 4, None);
    let mut entries: serde_json::Value = serde_json::from_slice(&std::fs::read(&manifest).unwrap()).unwrap();
    for (i, e) in entries.as_array_mut().unwrap().iter_mut().enumerate() {
        e["split"] = if i < 2 { "init" } else { "train" }.into();
    }
    std::fs::write(&manifest, serde_json::to_vec(&entries).unwrap()).unwrap();

    let model = dir.path().join("mirror.mnc");
    ok(&[
        "train-mirrornet", "--config", s(&cfg), "--manifest", s(&manifest), "--synth", "oracle", "--init", "on",
        "--crop-frames", "40", "--out", s(&model),
    ]);
    let log = std::fs::read_to_string(model.with_extension("jsonl")).unwrap();
    let stages: Vec<String> = log
        .lines()
        .map(|l| serde_json::from_str::<serde_json::Value>(l).unwrap()["stage"].as_str().unwrap().to_string())
        .collect();
    assert_eq!(stages, ["decoder", "encoder"]);

    let report = dir.path().join("report");
    ok(&["eval", "--model", s(&model), "--manifest", s(&manifest), "--report-dir", s(&report)]);
    for f in ["ppmc_table.csv", "ppmc_items.csv", "summary.json"] {
        assert!(report.join(f).exists(), "missing {f}");
    }
    let (truth, est) = read_exported(&report.join("trajectories/syn0000.csv")).unwrap();
    let stored = ArticTrajectory::read_csv(&dir.path().join("data/traj/syn0000.csv")).unwrap();
    assert_eq!(est.frames(), truth.frames());
    assert_eq!(truth, stored.crop(0, truth.frames()).unwrap());

    let wav = dir.path().join("two.wav");
    let tone: Vec<f32> = (0..32000).map(|i| (i as f32 * 0.1).sin() * 0.3).collect();
    mirrornet::audfront::wav::write(&wav, &tone).unwrap();
    let csv = dir.path().join("two.csv");
    ok(&["invert", "--model", s(&model), "--wav", s(&wav), "--out-csv", s(&csv)]);
    let t = ArticTrajectory::read_csv(&csv).unwrap();
    assert_eq!((t.channels(), t.frames()), (9, 200));
}

#[test]
fn paper_study_writes_tables() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = tiny_config(dir.path());
    let out = dir.path().join("study");
    ok(&[
        "paper-study", "--config", s(&cfg), "--out", s(&out), "--n-train", "3", "--n-init", "2", "--n-dev", "1",
        "--n-test", "2", "--duration", "0.5", "--crop-frames", "40",
    ]);
    for f in ["table1.csv", "table2.csv", "table1_oracle.csv", "data/manifest.json", "reports/ft_init/summary.json"] {
        assert!(out.join(f).exists(), "missing {f}");
    }
    let t1 = std::fs::read_to_string(out.join("table1.csv")).unwrap();
    let lines: Vec<&str> = t1.lines().collect();
    assert_eq!(lines.len(), 3);
    assert!(lines[0].starts_with("model,LA,LP,TBCL,TBCD,TTCL,TTCD,Ap,Per,Pitch"));
    assert!(lines[1].starts_with("MirrorNet(no init),") && lines[2].starts_with("MirrorNet(init),"));
}
