use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use feformer::harness::dice_metric;
use feformer::volume::{read_volume, write_volume, Dtype, VolumeData, VolumeHeader};

fn feformer(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_feformer")).args(args).output().expect("spawn feformer")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn toy_config() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("configs/toy.cfg")
}

/// The bundled toy config with some keys replaced.
fn short_config(dir: &Path, overrides: &[(&str, &str)]) -> PathBuf {
    let mut text = std::fs::read_to_string(toy_config()).unwrap();
    for (k, v) in overrides {
        let lines: Vec<String> = text
            .lines()
            .map(|l| if l.starts_with(&format!("{k}=")) { format!("{k}={v}") } else { l.to_string() })
            .collect();
        text = lines.join("\n") + "\n";
    }
    let p = dir.join("run.cfg");
    std::fs::write(&p, text).unwrap();
    p
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn check_reports_all_properties() {
    let o = feformer(&["check"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let passes = stdout(&o).lines().filter(|l| l.starts_with("pass")).count();
    assert!(passes >= 20, "{}", stdout(&o));
}

#[test]
fn check_filter_runs_only_tagged() {
    let o = feformer(&["check", "--filter", "fft"]);
    assert_eq!(o.status.code(), Some(0));
    let rows: Vec<String> = stdout(&o).lines().filter(|l| l.starts_with("pass")).map(String::from).collect();
    assert!(!rows.is_empty());
    assert!(rows.iter().all(|l| l.contains("fft")), "{rows:?}");
    assert!(!stdout(&o).contains("dwt."));
}

#[test]
fn sabotaged_haar_names_round_trip() {
    let o = feformer(&["check", "--sabotage-haar"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("dwt.round_trip"), "{}", stderr(&o));
}

#[test]
fn gradcheck_waff_passes() {
    let o = feformer(&["gradcheck", "--module", "waff", "--tol", "1e-4"]);
    assert_eq!(o.status.code(), Some(0), "{}{}", stdout(&o), stderr(&o));
    assert!(stdout(&o).contains("waff"));
}

#[test]
fn gradcheck_below_noise_floor_fails() {
    let o = feformer(&["gradcheck", "--module", "fdsa", "--tol", "1e-12"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("module fdsa at"), "{}", stderr(&o));
}

#[test]
fn gradcheck_unknown_module_is_usage_error() {
    assert_eq!(feformer(&["gradcheck", "--module", "nope"]).status.code(), Some(2));
}

#[test]
fn bench_writes_table_and_budget() {
    let dir = tempfile::tempdir().unwrap();
    let tsv = dir.path().join("b.tsv");
    let o = feformer(&["bench", "--sizes", "4,8", "--runs", "1", "--out", s(&tsv)]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let out = stdout(&o);
    assert!(out.contains("vs 39.13G reference"), "{out}");
    assert!(out.contains("vs 18.54M reference"), "{out}");
    assert!(out.contains("patch expanding"), "{out}");
    let table = std::fs::read_to_string(&tsv).unwrap();
    assert_eq!(table.lines().count(), 3);
    assert!(table.starts_with("size\tvoxels\t"));
}

#[test]
fn bench_empty_sizes_is_usage_error() {
    assert_eq!(feformer(&["bench", "--sizes", ""]).status.code(), Some(2));
}

#[test]
fn train_rejects_unknown_key() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.cfg");
    std::fs::write(&cfg, "steps=3\nlearning_rate=1\n").unwrap();
    let o = feformer(&["train", "--config", s(&cfg), "--out-dir", s(dir.path())]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("learning_rate"), "{}", stderr(&o));
}

fn losses(history: &Path) -> Vec<String> {
    let text = std::fs::read_to_string(history).unwrap();
    text.lines().skip(1).map(|l| l.split('\t').nth(2).unwrap().to_string()).collect()
}

#[test]
fn resume_reproduces_next_loss() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = short_config(dir.path(), &[("steps", "4"), ("eval_every", "0"), ("n_phantoms", "2"), ("batch_size", "1")]);
    let full = dir.path().join("full");
    let part = dir.path().join("part");
    let o = feformer(&["--seed", "3", "train", "--config", s(&cfg), "--out-dir", s(&full)]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let o = feformer(&["--seed", "3", "train", "--config", s(&cfg), "--out-dir", s(&part), "--stop-at", "2"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert!(stdout(&o).contains("stopped at step 2 of 4"));
    let ck = part.join("model.fef");
    let rest = dir.path().join("rest");
    let o = feformer(&["--seed", "3", "train", "--config", s(&cfg), "--out-dir", s(&rest), "--resume", s(&ck)]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let (a, b, c) = (losses(&full.join("history.tsv")), losses(&part.join("history.tsv")), losses(&rest.join("history.tsv")));
    assert_eq!(a.len(), 4);
    assert_eq!(b[..], a[..2]);
    assert_eq!(c[..], a[2..]);
    // Same seed, same bytes.
    let again = dir.path().join("again");
    feformer(&["--seed", "3", "train", "--config", s(&cfg), "--out-dir", s(&again)]);
    assert_eq!(std::fs::read(full.join("model.fef")).unwrap(), std::fs::read(again.join("model.fef")).unwrap());
}

#[test]
fn infer_rejects_bad_extent_and_missing_checkpoint() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = short_config(dir.path(), &[("steps", "1"), ("eval_every", "0"), ("n_phantoms", "1"), ("batch_size", "1")]);
    let o = feformer(&["train", "--config", s(&cfg), "--out-dir", s(dir.path())]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let vol = dir.path().join("odd.vol");
    write_volume(&vol, &VolumeHeader::new(Dtype::F32, [32, 32, 48]), &VolumeData::F32(vec![0.0; 32 * 32 * 48])).unwrap();
    let out = dir.path().join("out.vol");
    let ck = dir.path().join("model.fef");
    let o = feformer(&["infer", "--checkpoint", s(&ck), "--input", s(&vol), "--output", s(&out)]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("not divisible by 32"), "{}", stderr(&o));
    let o = feformer(&["infer", "--checkpoint", s(&dir.path().join("none.fef")), "--input", s(&vol), "--output", s(&out)]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn toy_training_then_inference() {
    let dir = tempfile::tempdir().unwrap();
    let o = feformer(&["train", "--config", s(&toy_config()), "--out-dir", s(dir.path())]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let out = stdout(&o);
    let line = out.lines().find(|l| l.starts_with("final mean foreground Dice")).expect("final line");
    let dice: f64 = line.split_whitespace().nth(4).unwrap().parse().unwrap();
    assert!(dice > 95.0, "{line}");

    let o = feformer(&["phantom", "--config", s(&toy_config()), "--out-dir", s(dir.path())]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let pred = dir.path().join("pred.vol");
    let o = feformer(&[
        "infer",
        "--checkpoint",
        s(&dir.path().join("model.fef")),
        "--input",
        s(&dir.path().join("phantom0.vol")),
        "--output",
        s(&pred),
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let pred = read_volume(&pred).unwrap().1.to_labels().unwrap();
    let truth = read_volume(&dir.path().join("phantom0_labels.vol")).unwrap().1.to_labels().unwrap();
    let fg = (dice_metric(&pred, &truth, 1) + dice_metric(&pred, &truth, 2)) / 2.0;
    assert!(fg > 95.0, "{fg}");
}
