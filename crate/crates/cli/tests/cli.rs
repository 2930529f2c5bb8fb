use std::fs;
use std::path::Path;
use std::process::Command;

use tempfile::TempDir;

fn ircut(args: &[&str]) -> i32 {
    let out = Command::new(env!("CARGO_BIN_EXE_ircut"))
        .args(args)
        .output()
        .expect("spawn ircut");
    if !out.status.success() {
        eprintln!("{}", String::from_utf8_lossy(&out.stderr));
    }
    out.status.code().unwrap_or(-1)
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

fn synth(dir: &Path, extra: &[&str]) {
    let mut args = vec!["synth", "--scenes", "2", "--ccts", "5000:6000:1000", "--size", "32", "--patch", "16", "--out", p(dir)];
    args.extend_from_slice(extra);
    assert_eq!(ircut(&args), 0);
}

fn quick_train(data: &Path, out: &Path, extra: &[&str]) {
    let mut args = vec![
        "train", "--data", p(data), "--out", p(out), "--arch", "compact", "--epochs", "2",
        "--steps-per-epoch", "2", "--batch", "2",
    ];
    args.extend_from_slice(extra);
    assert_eq!(ircut(&args), 0);
}

#[test]
fn synth_writes_one_cube_per_scene_and_cct() {
    let t = TempDir::new().unwrap();
    let d = t.path().join("d");
    let args = ["synth", "--scenes", "8", "--ccts", "4000:8000:1000", "--size", "16", "--patch", "16", "--out", p(&d)];
    assert_eq!(ircut(&args), 0);
    let cubes = fs::read_dir(&d)
        .unwrap()
        .filter(|e| e.as_ref().unwrap().path().extension().is_some_and(|x| x == "hsc"))
        .count();
    assert_eq!(cubes, 40);
    for f in ["dataset.json", "split.json", "run.json"] {
        assert!(d.join(f).exists(), "{f}");
    }
}

#[test]
fn exit_codes() {
    let t = TempDir::new().unwrap();
    let d = t.path().join("d");
    assert_eq!(ircut(&["synth", "--ccts", "8000:4000:500", "--out", p(&d)]), 2);
    assert_eq!(ircut(&["synth", "--scenes", "0", "--out", p(&d)]), 2);
    assert_eq!(ircut(&["train", "--out", "x.json"]), 2);
    assert_eq!(ircut(&["plot", "--what", "bars", "--in", "a", "--out", "b"]), 2);

    let missing = t.path().join("missing");
    assert_eq!(ircut(&["eval", "--ckpt", p(&missing), "--data", p(&missing), "--report", p(&d)]), 3);
    let garbage = t.path().join("garbage.csv");
    fs::write(&garbage, "x,y\n1,oops\n").unwrap();
    assert_eq!(ircut(&["plot", "--what", "filter", "--in", p(&garbage), "--out", p(&d.join("f.svg"))]), 3);

    synth(&d, &[]);
    let ck = t.path().join("div.json");
    let args = [
        "train", "--data", p(&d), "--out", p(&ck), "--arch", "compact", "--epochs", "1",
        "--steps-per-epoch", "2", "--batch", "2", "--lr", "1e300",
    ];
    assert_eq!(ircut(&args), 4);
    assert!(t.path().join("div.last_good.json").exists());
    assert!(!ck.exists());
}

#[test]
fn frozen_bands_stay_zero() {
    let t = TempDir::new().unwrap();
    let d = t.path().join("d");
    synth(&d, &[]);
    let ck = t.path().join("ck.json");
    quick_train(&d, &ck, &["--freeze-above-nm", "720"]);
    let filter = fs::read_to_string(t.path().join("ck.filter.csv")).unwrap();
    let mut frozen = 0;
    for line in filter.lines().skip(1) {
        let (nm, v) = line.split_once(',').unwrap();
        let (nm, v): (f64, f64) = (nm.parse().unwrap(), v.parse().unwrap());
        if nm > 720.0 {
            assert_eq!(v, 0.0, "{nm}nm");
            frozen += 1;
        } else {
            assert!(v > 0.0 && v < 1.0);
        }
    }
    assert_eq!(frozen, 5);
}

#[test]
fn illumination_branch_off() {
    let t = TempDir::new().unwrap();
    let d = t.path().join("d");
    synth(&d, &[]);
    let ck = t.path().join("ck.json");
    quick_train(&d, &ck, &["--illum-branch", "off"]);
    let r = t.path().join("r");
    assert_eq!(ircut(&["eval", "--ckpt", p(&ck), "--data", p(&d), "--report", p(&r), "--all"]), 0);
    let metrics = fs::read_to_string(r.join("metrics.csv")).unwrap();
    assert_eq!(metrics.lines().count(), 5);
    // No branch: only the baseline produces illuminant estimates.
    let illum = fs::read_to_string(r.join("illumination.csv")).unwrap();
    for row in illum.lines().skip(1) {
        assert!(row.split(',').nth(3).unwrap() == "NaN");
    }
}

#[test]
fn truth_as_prediction_is_perfect() {
    let t = TempDir::new().unwrap();
    let d = t.path().join("d");
    synth(&d, &[]);
    let ck = t.path().join("ck.json");
    quick_train(&d, &ck, &[]);
    let r = t.path().join("r");
    let args = ["eval", "--ckpt", p(&ck), "--data", p(&d), "--report", p(&r), "--all", "--truth-as-prediction"];
    assert_eq!(ircut(&args), 0);
    let metrics = fs::read_to_string(r.join("metrics.csv")).unwrap();
    for row in metrics.lines().skip(1) {
        let cols: Vec<&str> = row.split(',').collect();
        assert_eq!(cols[1].parse::<f64>().unwrap(), 0.0);
        assert_eq!(cols[2], "inf");
        assert_eq!(cols[3].parse::<f64>().unwrap(), 1.0);
    }
    let s: serde_json::Value = serde_json::from_str(&fs::read_to_string(r.join("summary.json")).unwrap()).unwrap();
    assert_eq!(s["mean_ssim"], 1.0);
    for row in s["illumination"].as_array().unwrap() {
        assert!(row["ae"].as_f64().unwrap() < 1e-7);
    }
}

/// Every artifact of synth → train → eval → plot, minus wall-clock timings.
fn pipeline(root: &Path) -> Vec<(String, Vec<u8>)> {
    let d = root.join("d");
    synth(&d, &["--seed", "7"]);
    let ck = root.join("ck.json");
    quick_train(&d, &ck, &["--seed", "7"]);
    let r = root.join("r");
    assert_eq!(ircut(&["eval", "--ckpt", p(&ck), "--data", p(&d), "--report", p(&r)]), 0);
    for (what, input) in [("filter", root.join("ck.filter.csv")), ("history", root.join("ck.history.csv")), ("illum", r.join("illum_spectra.csv"))] {
        let out = root.join(format!("{what}.svg"));
        assert_eq!(ircut(&["plot", "--what", what, "--in", p(&input), "--out", p(&out)]), 0);
    }
    let mut files = Vec::new();
    for dir in [root.to_path_buf(), d, r] {
        let mut entries: Vec<_> = fs::read_dir(&dir).unwrap().map(|e| e.unwrap().path()).collect();
        entries.sort();
        for path in entries.into_iter().filter(|p| p.is_file()) {
            let name = path.file_name().unwrap().to_string_lossy().into_owned();
            let bytes = if name.ends_with("run.json") {
                let mut v: serde_json::Value = serde_json::from_slice(&fs::read(&path).unwrap()).unwrap();
                v["timings_ms"] = serde_json::Value::Null;
                let text = serde_json::to_string(&v).unwrap();
                text.replace(p(root), "ROOT").into_bytes()
            } else {
                fs::read(&path).unwrap()
            };
            files.push((name, bytes));
        }
    }
    files
}

#[test]
fn pipeline_is_deterministic() {
    let (a, b) = (TempDir::new().unwrap(), TempDir::new().unwrap());
    let fa = pipeline(a.path());
    let fb = pipeline(b.path());
    assert_eq!(fa.len(), 19);
    assert_eq!(fa.len(), fb.len());
    for ((na, ba), (nb, bb)) in fa.iter().zip(&fb) {
        assert_eq!(na, nb);
        assert!(ba == bb, "{na} differs between runs");
    }
}
