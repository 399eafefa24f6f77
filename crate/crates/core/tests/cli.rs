mod common;

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use common::*;
use rootlet_levels::levels::read_levels_csv;
use rootlet_levels::phantom::PhantomManifest;
use rootlet_levels::volume::{read_label_map, write_label_map, Grid, LabelMap};
use serde_json::Value;

fn cli(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_rootlet-levels"))
        .args(args)
        .env_remove("ROOTLET_LEVELS_THREADS")
        .output()
        .unwrap()
}

fn s(p: &Path) -> String {
    p.to_string_lossy().into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn phantom(dir: &Path) -> PathBuf {
    let out = dir.join("ph");
    let o = cli(&["phantom", "--seed", "7", "--out", &s(&out)]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    out
}

fn json(path: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

#[test]
fn levels_csv_matches_phantom_truth() {
    let dir = tempfile::tempdir().unwrap();
    let ph = phantom(dir.path());
    let out = dir.path().join("lv");
    for pmj in ["pmj.nii.gz", "pmj.json"] {
        let o = cli(&[
            "levels",
            "--rootlets",
            &s(&ph.join("rootlets.nii.gz")),
            "--cord",
            &s(&ph.join("cord.nii.gz")),
            "--pmj",
            &s(&ph.join(pmj)),
            "--subject",
            "sub-phantom",
            "--out",
            &s(&out),
        ]);
        assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
        let truth: PhantomManifest = serde_json::from_str(&fs::read_to_string(ph.join("truth.json")).unwrap()).unwrap();
        let rows = read_levels_csv(fs::File::open(out.join("levels.csv")).unwrap()).unwrap();
        assert_eq!(rows.len(), 7);
        for (row, t) in rows.iter().zip(&truth.truth) {
            assert_eq!(row.subject, "sub-phantom");
            assert_eq!(row.level, t.level);
            let d = |a: Option<usize>, b: Option<usize>| (a.unwrap() as i64 - b.unwrap() as i64).abs();
            assert!(d(row.rostral_slice, t.rostral_slice) <= 1);
            assert!(d(row.caudal_slice, t.caudal_slice) <= 1);
        }
    }
    for f in [
        "levels.nii.gz",
        "levels.csv",
        "centerline.csv",
        "report.json",
        "manifest.json",
    ] {
        assert!(out.join(f).is_file(), "{f} missing");
    }
    let levels = read_label_map(out.join("levels.nii.gz")).unwrap();
    assert_eq!(
        levels.labels().into_iter().collect::<Vec<_>>(),
        vec![0, 2, 3, 4, 5, 6, 7, 8]
    );
    let manifest = json(&out.join("manifest.json"));
    assert_eq!(manifest["version"], env!("CARGO_PKG_VERSION"));
    assert_eq!(manifest["config"]["level_config"]["element"]["radius"], 3);
    assert_eq!(manifest["inputs"].as_object().unwrap().len(), 3);
    assert!(manifest["outputs"]["levels.csv"].as_str().unwrap().len() == 64);
    let report = json(&out.join("report.json"));
    assert_eq!(report["flags"].as_array().unwrap().len(), 0);
}

#[test]
fn levels_without_rootlet_classes_exits_2_with_flag() {
    let dir = tempfile::tempdir().unwrap();
    let ph = phantom(dir.path());
    let cord = read_label_map(ph.join("cord.nii.gz")).unwrap();
    let empty = dir.path().join("empty.nii.gz");
    write_label_map(&LabelMap::zeros(cord.grid().clone()), &empty).unwrap();
    let out = dir.path().join("lv");
    let o = cli(&[
        "levels",
        "--rootlets",
        &s(&empty),
        "--cord",
        &s(&ph.join("cord.nii.gz")),
        "--pmj",
        &s(&ph.join("pmj.json")),
        "--out",
        &s(&out),
    ]);
    assert_eq!(o.status.code(), Some(2), "{}", stderr(&o));
    let report = json(&out.join("report.json"));
    let flags: Vec<String> = report["flags"]
        .as_array()
        .unwrap()
        .iter()
        .map(|f| f.as_str().unwrap().into())
        .collect();
    assert!(flags.iter().any(|f| f.contains("no rootlet class")));
    assert!(report["extents"]
        .as_array()
        .unwrap()
        .iter()
        .all(|e| e["flags"]["empty"] == true));
}

#[test]
fn mismatched_grids_exit_1() {
    let dir = tempfile::tempdir().unwrap();
    let ph = phantom(dir.path());
    let other = dir.path().join("small.nii.gz");
    write_label_map(&LabelMap::zeros(unit_grid([4, 4, 4])), &other).unwrap();
    let o = cli(&[
        "levels",
        "--rootlets",
        &s(&other),
        "--cord",
        &s(&ph.join("cord.nii.gz")),
        "--pmj",
        &s(&ph.join("pmj.json")),
        "--out",
        &s(&dir.path().join("lv")),
    ]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("grid"), "{}", stderr(&o));
}

#[test]
fn missing_input_and_bad_flags_exit_1() {
    let dir = tempfile::tempdir().unwrap();
    let o = cli(&[
        "levels",
        "--rootlets",
        "nope.nii",
        "--cord",
        "nope.nii",
        "--pmj",
        "nope.json",
        "--out",
        &s(dir.path()),
    ]);
    assert_eq!(o.status.code(), Some(1));
    assert_eq!(cli(&["levels", "--dilate-shape", "sphere"]).status.code(), Some(1));
    assert_eq!(cli(&["frobnicate"]).status.code(), Some(1));
    assert_eq!(cli(&["--version"]).status.code(), Some(0));
}

#[test]
fn thread_env_must_be_positive() {
    let dir = tempfile::tempdir().unwrap();
    let o = Command::new(env!("CARGO_BIN_EXE_rootlet-levels"))
        .args(["phantom", "--out", &s(&dir.path().join("p"))])
        .env("ROOTLET_LEVELS_THREADS", "zero")
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(1));
    let o = Command::new(env!("CARGO_BIN_EXE_rootlet-levels"))
        .args(["phantom", "--out", &s(&dir.path().join("p"))])
        .env("ROOTLET_LEVELS_THREADS", "2")
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(0));
}

#[test]
fn staple_single_rater_is_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let r = dir.path().join("r.nii.gz");
    write_label_map(&LabelMap::zeros(unit_grid([2, 2, 2])), &r).unwrap();
    let o = cli(&["staple", "--rater", &s(&r), "--out", &s(&dir.path().join("o"))]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("at least 2"));
}

#[test]
fn staple_identical_raters_return_input() {
    let dir = tempfile::tempdir().unwrap();
    let mut rng = rng(5);
    let grid = unit_grid([6, 6, 4]);
    let data = (0..grid.len())
        .map(|_| [0u8, 0, 2, 4, 7][rand::Rng::random_range(&mut rng, 0..5)])
        .collect();
    let map = LabelMap::new(grid, data).unwrap();
    let mut args = vec!["staple".to_string()];
    for i in 0..4 {
        let p = dir.path().join(format!("r{i}.nii.gz"));
        write_label_map(&map, &p).unwrap();
        args.extend(["--rater".into(), s(&p)]);
    }
    let out = dir.path().join("o");
    args.extend(["--out".into(), s(&out)]);
    let args: Vec<&str> = args.iter().map(String::as_str).collect();
    let o = cli(&args);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert_eq!(read_label_map(out.join("consensus.nii.gz")).unwrap(), map);
    let report = json(&out.join("staple_report.json"));
    assert_eq!(report["classes"].as_array().unwrap().len(), 3);
}

/// Three raters disagreeing on a 4×4×2 grid with classes 2, 3 and 5.
fn toy_raters() -> Vec<LabelMap> {
    let grid = Grid::with_spacing([4, 4, 2], [1.0, 1.0, 2.0]).unwrap();
    let base: Vec<u8> = vec![
        0, 2, 2, 0, //
        0, 2, 2, 0, //
        0, 3, 3, 0, //
        0, 0, 0, 0, //
        0, 0, 0, 0, //
        0, 3, 3, 0, //
        5, 5, 0, 0, //
        5, 0, 0, 0,
    ];
    let mut b = base.clone();
    b[1] = 0;
    b[9] = 2;
    b[24] = 0;
    let mut c = base.clone();
    c[2] = 3;
    c[10] = 0;
    c[31] = 5;
    c[3] = 2;
    [base, b, c]
        .into_iter()
        .map(|d| LabelMap::new(grid.clone(), d).unwrap())
        .collect()
}

/// Per-class oracle STAPLE followed by an argmax over posteriors above 0.5.
fn toy_oracle(raters: &[LabelMap]) -> Value {
    let n = raters[0].data().len();
    let mut best = vec![(0u8, 0.5f64); n];
    let mut classes = serde_json::Map::new();
    for class in [2u8, 3, 5] {
        let raw: Vec<Vec<u8>> = raters.iter().map(|m| m.indicator(class).data().to_vec()).collect();
        let o = staple_oracle(&raw, 1e-6, 100).unwrap();
        for i in 0..n {
            if o.w[i] > best[i].1 {
                best[i] = (class, o.w[i]);
            }
        }
        classes.insert(
            class.to_string(),
            serde_json::json!({"sensitivity": o.p, "specificity": o.q}),
        );
    }
    serde_json::json!({
        "consensus": best.iter().map(|b| b.0).collect::<Vec<_>>(),
        "classes": classes,
    })
}

#[test]
fn staple_toy_fixture_matches_golden() {
    let golden_path = Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures/staple_toy_golden.json");
    let raters = toy_raters();
    let oracle = toy_oracle(&raters);
    if std::env::var_os("UPDATE_GOLDEN").is_some() {
        fs::write(&golden_path, serde_json::to_string_pretty(&oracle).unwrap() + "\n").unwrap();
    }
    let golden = json(&golden_path);
    assert_eq!(golden["consensus"], oracle["consensus"], "golden file is stale");

    let dir = tempfile::tempdir().unwrap();
    let mut args = vec!["staple".to_string()];
    for (i, r) in raters.iter().enumerate() {
        let p = dir.path().join(format!("rater{i}.nii"));
        write_label_map(r, &p).unwrap();
        args.extend(["--rater".into(), s(&p)]);
    }
    let out = dir.path().join("o");
    args.extend(["--out".into(), s(&out)]);
    let args: Vec<&str> = args.iter().map(String::as_str).collect();
    let o = cli(&args);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));

    let consensus = read_label_map(out.join("consensus.nii.gz")).unwrap();
    let expected: Vec<u8> = golden["consensus"]
        .as_array()
        .unwrap()
        .iter()
        .map(|v| v.as_u64().unwrap() as u8)
        .collect();
    assert_eq!(consensus.data(), expected.as_slice());
    let report = json(&out.join("staple_report.json"));
    for class in report["classes"].as_array().unwrap() {
        let key = class["class"].to_string();
        let g = &golden["classes"][&key];
        for (j, rater) in class["raters"].as_array().unwrap().iter().enumerate() {
            let close = |field: &str, gfield: &str| {
                (rater[field].as_f64().unwrap() - g[gfield][j].as_f64().unwrap()).abs() <= 1e-6
            };
            assert!(close("sensitivity", "sensitivity"), "class {key} rater {j}");
            assert!(close("specificity", "specificity"), "class {key} rater {j}");
        }
    }
}

#[test]
fn metrics_identity_and_mae() {
    let dir = tempfile::tempdir().unwrap();
    let ph = phantom(dir.path());
    let rootlets = s(&ph.join("rootlets.nii.gz"));
    let out = dir.path().join("m");
    let o = cli(&["metrics", "--pred", &rootlets, "--truth", &rootlets, "--out", &s(&out)]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let m = json(&out.join("metrics.json"));
    assert_eq!(m["dice_mean"], 1.0);
    assert_eq!(m["dice_sd"], 0.0);
    assert!(out.join("metrics.csv").is_file());

    let lv = dir.path().join("lv");
    let o = cli(&[
        "levels",
        "--rootlets",
        &rootlets,
        "--cord",
        &s(&ph.join("cord.nii.gz")),
        "--pmj",
        &s(&ph.join("pmj.json")),
        "--out",
        &s(&lv),
    ]);
    assert_eq!(o.status.code(), Some(0));
    let csv = s(&lv.join("levels.csv"));
    let out2 = dir.path().join("m2");
    let o = cli(&[
        "metrics",
        "--mae-reference",
        &csv,
        "--mae-test",
        &format!("same={csv}"),
        "--cov-input",
        &csv,
        "--out",
        &s(&out2),
        "--format",
        "json",
    ]);
    // one session cannot give a COV: handled, flagged, exit 2
    assert_eq!(o.status.code(), Some(2), "{}", stderr(&o));
    let m = json(&out2.join("metrics.json"));
    assert_eq!(m["mae"]["same"], 0.0);
    assert!(m["flags"]
        .as_array()
        .unwrap()
        .iter()
        .any(|f| f.as_str().unwrap().contains("COV")));
    assert!(!out2.join("metrics.csv").exists());

    assert_eq!(cli(&["metrics", "--out", &s(&out2)]).status.code(), Some(1));
}

#[test]
fn resample_study_reports_mae_per_spacing() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("spec.json");
    let mut spec = rootlet_levels::phantom::PhantomSpec::cervical([48, 48, 160], 0.6, 3);
    spec.rootlets.truncate(4);
    fs::write(&cfg, serde_json::to_string(&spec).unwrap()).unwrap();
    let ph = dir.path().join("ph");
    let o = cli(&["phantom", "--config", &s(&cfg), "--out", &s(&ph)]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let out = dir.path().join("study");
    let o = cli(&[
        "resample-study",
        "--rootlets",
        &s(&ph.join("rootlets.nii.gz")),
        "--cord",
        &s(&ph.join("cord.nii.gz")),
        "--pmj",
        &s(&ph.join("pmj.json")),
        "--image",
        &s(&ph.join("image.nii.gz")),
        "--spacings",
        "0.6,1.2",
        "--out",
        &s(&out),
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let study = json(&out.join("study.json"));
    let entries = study["entries"].as_array().unwrap();
    assert_eq!(entries[0]["mae_mm"], 0.0);
    assert!(entries[1]["mae_mm"].as_f64().unwrap() <= 1.2);
    assert!(fs::read_to_string(out.join("study.csv"))
        .unwrap()
        .starts_with("spacing_mm,mae_mm"));
}

#[test]
fn phantom_bad_config_exits_1() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.json");
    fs::write(&cfg, r#"{"dims": [10, 10]}"#).unwrap();
    let o = cli(&["phantom", "--config", &s(&cfg), "--out", &s(&dir.path().join("p"))]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("phantom spec"));
}
