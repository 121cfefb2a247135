mod support;

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use lesionseg::dataset::synthetic::write_dataset;
use lesionseg::dataset::LesionClass;
use lesionseg::fusion::CompositeMask;
use lesionseg::imaging::io::write_mask;
use lesionseg::imaging::{ColorSpace, RasterImage};
use lesionseg::training::read_epoch_log;

fn run(out: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_lesionseg"))
        .arg("--out")
        .arg(out)
        .args(args)
        .env_remove("LESIONSEG_DATA_ROOT")
        .output()
        .unwrap()
}

fn ok(out: &Path, args: &[&str]) -> String {
    let o = run(out, args);
    assert_eq!(o.status.code(), Some(0), "{args:?}: {}", String::from_utf8_lossy(&o.stderr));
    String::from_utf8(o.stdout).unwrap()
}

fn fixture() -> PathBuf {
    support::fixture_dir().join("synthetic")
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn split_column_counts(manifest: &Path) -> (usize, usize, usize) {
    let text = fs::read_to_string(manifest).unwrap();
    let mut c = (0, 0, 0);
    for line in text.lines().filter(|l| !l.starts_with('#')) {
        match line.split('\t').next() {
            Some("train") => c.0 += 1,
            Some("validation") => c.1 += 1,
            Some("test") => c.2 += 1,
            other => panic!("unexpected split {other:?}"),
        }
    }
    c
}

#[test]
fn split_of_81_images_follows_the_ratios() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("data");
    write_dataset(&data, 81, 16, 1).unwrap();
    let out = dir.path().join("run");
    ok(&out, &["split", "--root", s(&data), "--lesion", "MA", "--seed", "5"]);
    assert_eq!(split_column_counts(&out.join("splits/MA/manifest.tsv")), (57, 16, 8));
}

#[test]
fn data_root_can_come_from_the_environment() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("run");
    let o = Command::new(env!("CARGO_BIN_EXE_lesionseg"))
        .args(["--out", s(&out), "split", "--lesion", "HE", "--ratios", "0.5,0.25,0.25"])
        .env("LESIONSEG_DATA_ROOT", fixture())
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(split_column_counts(&out.join("splits/HE/manifest.tsv")), (2, 1, 1));
}

#[test]
fn fusing_four_empty_masks_gives_an_empty_composite() {
    let dir = tempfile::tempdir().unwrap();
    let masks = dir.path().join("masks");
    for l in LesionClass::ALL {
        write_mask(&masks.join(l.as_str()).join("eye.png"), &RasterImage::filled(12, 9, ColorSpace::Gray, 0)).unwrap();
    }
    let out = dir.path().join("run");
    ok(&out, &["fuse", "--masks", s(&masks)]);
    let comp = CompositeMask::read_png(&out.join("fused/eye_labels.png")).unwrap();
    assert_eq!(comp.dims(), (12, 9));
    assert!(comp.is_empty());
}

#[test]
fn stages_skip_when_unchanged_and_refuse_changes_without_force() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("run");
    let data = fixture();
    let base = ["split", "--root", s(&data), "--lesion", "EX", "--ratios", "0.5,0.25,0.25"];
    ok(&out, &base);
    let manifest = out.join("splits/EX/manifest.tsv");
    let first = fs::read(&manifest).unwrap();
    let mtime = fs::metadata(&manifest).unwrap().modified().unwrap();

    ok(&out, &base);
    assert_eq!(fs::metadata(&manifest).unwrap().modified().unwrap(), mtime);

    let mut changed = base.to_vec();
    changed.extend(["--seed", "9"]);
    assert_eq!(run(&out, &changed).status.code(), Some(1));
    assert_eq!(fs::read(&manifest).unwrap(), first);

    changed.push("--force");
    ok(&out, &changed);
    assert!(fs::read_to_string(&manifest).unwrap().starts_with("# lesion=EX seed=9"));
    let run_manifest: serde_json::Value = serde_json::from_slice(&fs::read(out.join("run_manifest.json")).unwrap()).unwrap();
    assert_eq!(run_manifest["stages"]["split/EX"]["seed"], 9);
}

#[test]
fn an_interrupted_stage_is_rebuilt() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("run");
    let data = fixture();
    let args = ["split", "--root", s(&data), "--lesion", "SE", "--ratios", "0.5,0.25,0.25"];
    ok(&out, &args);
    fs::remove_file(out.join("splits/SE/stage.json")).unwrap();
    fs::write(out.join("splits/SE/junk.tmp"), b"x").unwrap();
    ok(&out, &args);
    assert!(out.join("splits/SE/stage.json").is_file());
    assert!(!out.join("splits/SE/junk.tmp").exists());
}

#[test]
fn seeded_pipelines_are_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let config = support::fixture_dir().join("tiny.toml");
    let mut outputs = Vec::new();
    for name in ["a", "b"] {
        let out = dir.path().join(name);
        ok(&out, &["preprocess", "--root", s(&fixture())]);
        ok(&out, &["split", "--lesion", "HE", "--ratios", "0.5,0.25,0.25", "--seed", "3"]);
        ok(&out, &["augment", "--lesion", "HE", "--per-image", "1"]);
        ok(&out, &["train", "--lesion", "HE", "--config", s(&config), "--epochs", "1"]);
        ok(&out, &["evaluate", "--lesion", "HE", "--config", s(&config)]);
        outputs.push(out);
    }
    // manifests hold absolute paths, so compare them relative to each run
    for rel in ["splits/HE/manifest.tsv", "augmented/HE/manifest.tsv"] {
        let text: Vec<String> = outputs
            .iter()
            .map(|o| fs::read_to_string(o.join(rel)).unwrap().replace(s(o), "<run>"))
            .collect();
        assert_eq!(text[0], text[1], "{rel}");
    }
    for rel in ["eval/HE/report.json", "eval/HE/roc.csv", "models/HE/model.ckpt"] {
        assert_eq!(fs::read(outputs[0].join(rel)).unwrap(), fs::read(outputs[1].join(rel)).unwrap(), "{rel}");
    }
    let logs: Vec<_> = outputs
        .iter()
        .map(|o| {
            let mut log = read_epoch_log(&o.join("models/HE/epoch_log.jsonl")).unwrap();
            log.iter_mut().for_each(|e| e.wall_time_s = 0.0);
            log
        })
        .collect();
    assert_eq!(logs[0], logs[1]);
}

#[test]
fn usage_errors_exit_with_two_and_stage_errors_with_one() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("run");
    assert_eq!(run(&out, &["frobnicate"]).status.code(), Some(2));
    assert_eq!(run(&out, &["split", "--ratios", "0.5,0.5"]).status.code(), Some(2));
    assert_eq!(run(&out, &["split", "--lesion", "XX"]).status.code(), Some(2));
    assert_eq!(run(&out, &["fuse", "--priority", "MA,MA,HE,EX"]).status.code(), Some(2));
    let missing = dir.path().join("nowhere");
    let o = run(&out, &["split", "--root", s(&missing)]);
    assert_eq!(o.status.code(), Some(1));
    assert!(!o.stderr.is_empty());
    assert_eq!(run(&out, &["evaluate"]).status.code(), Some(1));
}

#[test]
fn help_lists_every_subcommand() {
    let o = Command::new(env!("CARGO_BIN_EXE_lesionseg")).arg("--help").output().unwrap();
    assert_eq!(o.status.code(), Some(0));
    let text = String::from_utf8(o.stdout).unwrap();
    for cmd in ["preprocess", "split", "augment", "train", "evaluate", "infer", "fuse", "report"] {
        assert!(text.contains(cmd), "{cmd}");
    }
}
