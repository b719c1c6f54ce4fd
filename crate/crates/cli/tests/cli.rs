use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use implicit_keypoints::io::{read_checkpoint, read_grid, read_keypoints, read_obj, read_ply, read_samples};
use serde_json::Value;

/// Small learned config: a few epochs on tiny nets, enough to exercise every
/// code path in seconds.
const TINY: &str = r#"
seed = 11
resolution = 40

[dataset]
shapes = 2
keypoints = 3

[sampling]
n_volume = 400
n_surface = 400
icosphere_level = 2

[network]
hidden = [16, 16]
epochs = 3
udf_epochs = 3
lr = 1e-3
batch_size = 256
"#;

fn ikp(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ikp"))
        .args(args)
        .env("RUST_LOG", "warn")
        .output()
        .expect("binary runs")
}

fn ok(args: &[&str]) -> Output {
    let out = ikp(args);
    assert!(
        out.status.success(),
        "ikp {args:?} failed:\n{}",
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn code(args: &[&str]) -> i32 {
    ikp(args).status.code().expect("exit code")
}

fn write_config(dir: &Path, text: &str) -> PathBuf {
    let path = dir.join("run.toml");
    std::fs::write(&path, text).unwrap();
    path
}

/// Every file under `root`, keyed by relative path.
fn snapshot(root: &Path) -> BTreeMap<String, Vec<u8>> {
    fn walk(root: &Path, dir: &Path, out: &mut BTreeMap<String, Vec<u8>>) {
        for entry in std::fs::read_dir(dir).unwrap() {
            let path = entry.unwrap().path();
            if path.is_dir() {
                walk(root, &path, out);
            } else {
                let rel = path.strip_prefix(root).unwrap().to_string_lossy().into_owned();
                out.insert(rel, std::fs::read(&path).unwrap());
            }
        }
    }
    let mut out = BTreeMap::new();
    walk(root, root, &mut out);
    out
}

fn read_json(path: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

#[test]
fn analytic_pipeline_recovers_default_suite() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("run");
    let out = out.to_str().unwrap();
    ok(&["--out", out, "--seed", "1", "gen"]);
    ok(&["--out", out, "--analytic", "fit"]);
    ok(&["--out", out, "--analytic", "extract"]);
    ok(&["--out", out, "eval"]);

    let gen = read_json(&Path::new(out).join("manifests/gen.json"));
    let entries = gen["entries"].as_array().unwrap();
    assert_eq!(entries.len(), 10);
    assert!(entries.iter().all(|e| e["min_separation"].as_f64() == Some(0.24)));

    let report = read_json(&Path::new(out).join("report.json"));
    assert!(report["bhd"].as_f64().unwrap() < 0.01);
    assert_eq!(report["failed"].as_u64(), Some(0));
    for i in 0..10 {
        let pred = read_keypoints(&Path::new(out).join(format!("pred/shape_{i:03}.json"))).unwrap();
        assert_eq!(pred.keypoints.len(), 8);
    }
    // text and JSON reports carry the same numbers
    let text = std::fs::read_to_string(Path::new(out).join("report.txt")).unwrap();
    for shape in report["per_shape"].as_array().unwrap() {
        let bhd = format!("{:.16e}", shape["bhd"].as_f64().unwrap());
        assert!(text.contains(&bhd), "{bhd} missing from text report");
    }
}

#[test]
fn eval_of_ground_truth_against_itself_is_perfect() {
    let tmp = tempfile::tempdir().unwrap();
    let root = tmp.path().join("run");
    let out = root.to_str().unwrap();
    ok(&["--out", out, "gen"]);
    std::fs::create_dir_all(root.join("pred")).unwrap();
    for entry in std::fs::read_dir(root.join("gt")).unwrap() {
        let path = entry.unwrap().path();
        std::fs::copy(&path, root.join("pred").join(path.file_name().unwrap())).unwrap();
    }
    ok(&["--out", out, "eval"]);
    let report = read_json(&root.join("report.json"));
    assert_eq!(report["bhd"].as_f64(), Some(0.0));
    assert_eq!(report["cd"].as_f64(), Some(0.0));
    let curve = report["miou_curve"].as_array().unwrap();
    assert!(curve.iter().all(|p| p[1].as_f64() == Some(1.0)));
    assert!(report["categories"]["synthetic"].is_object());
}

#[test]
fn learned_semantic_run_writes_every_artifact() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), TINY);
    let root = tmp.path().join("run");
    let out = root.to_str().unwrap();
    let cfg = cfg.to_str().unwrap();
    ok(&["--config", cfg, "--out", out, "--semantic", "gen"]);
    ok(&["--config", cfg, "--out", out, "--semantic", "fit"]);
    ok(&["--config", cfg, "--out", out, "--semantic", "extract", "--save-grids"]);
    ok(&["--config", cfg, "--out", out, "--semantic", "eval"]);

    for id in ["shape_000", "shape_001"] {
        let samples = read_samples(&root.join(format!("samples/{id}.ikps"))).unwrap();
        assert_eq!(samples.len(), 800);
        assert!(root.join(format!("samples/{id}.udf.ikps")).exists());
        let sdf = read_checkpoint(&root.join(format!("fits/{id}.sdf.ikpn"))).unwrap();
        assert_eq!(sdf.out_dim(), 1);
        let udf = read_checkpoint(&root.join(format!("fits/{id}.udf.ikpn"))).unwrap();
        assert_eq!(udf.out_dim(), 3);
        let log = std::fs::read_to_string(root.join(format!("fits/{id}.sdf.loss.tsv"))).unwrap();
        assert_eq!(log.lines().count(), 4);
        for line in log.lines().skip(1) {
            assert!(line.split('\t').skip(1).all(|v| v.parse::<f64>().unwrap().is_finite()));
        }
        let grid = read_grid(&root.join(format!("grids/{id}.ikpg"))).unwrap();
        assert_eq!(grid.resolution, [40; 3]);
        let obj = read_obj(&root.join(format!("meshes/{id}.obj"))).unwrap();
        let ply = read_ply(&root.join(format!("meshes/{id}.ply"))).unwrap();
        assert_eq!(obj, ply);
        let pred = read_keypoints(&root.join(format!("pred/{id}.json"))).unwrap();
        assert!(pred.keypoints.is_labeled() || pred.keypoints.is_empty());
    }
    let report = read_json(&root.join("report.json"));
    assert!(report["topk"].is_object());
}

#[test]
fn analytic_labels_attach_to_every_prediction() {
    let tmp = tempfile::tempdir().unwrap();
    let root = tmp.path().join("run");
    let out = root.to_str().unwrap();
    ok(&["--out", out, "--analytic", "--semantic", "pipeline"]);
    for i in 0..10 {
        let gt = read_keypoints(&root.join(format!("gt/shape_{i:03}.json"))).unwrap();
        let pred = read_keypoints(&root.join(format!("pred/shape_{i:03}.json"))).unwrap();
        let labels = pred.keypoints.labels.as_ref().unwrap();
        assert_eq!(labels.len(), 8);
        // each prediction carries the label of the ground-truth keypoint it recovered
        for (p, &l) in pred.keypoints.points.iter().zip(labels) {
            let j = (0..8)
                .min_by(|&a, &b| {
                    p.distance(gt.keypoints.points[a])
                        .total_cmp(&p.distance(gt.keypoints.points[b]))
                })
                .unwrap();
            assert_eq!(gt.keypoints.labels.as_ref().unwrap()[j], l);
        }
    }
    let report = read_json(&root.join("report.json"));
    assert_eq!(report["topk"]["1"].as_f64(), Some(1.0));
}

#[test]
fn import_accepts_good_records_and_reports_bad_ones() {
    let tmp = tempfile::tempdir().unwrap();
    let good = tmp.path().join("good.json");
    std::fs::write(
        &good,
        r#"[
            {"class_id": "chair", "model_id": "m1", "keypoints": [
                {"xyz": [0.1, 0.2, 0.3], "semantic_id": 4}, {"xyz": [-0.5, 0.0, 0.4], "semantic_id": 1}]},
            {"class_id": "chair", "model_id": "m2", "keypoints": [{"xyz": [0.0, 0.0, 0.0]}]}
        ]"#,
    )
    .unwrap();
    let root = tmp.path().join("a");
    ok(&["--out", root.to_str().unwrap(), "import", good.to_str().unwrap()]);
    let m1 = read_keypoints(&root.join("gt/m1.json")).unwrap();
    assert_eq!(m1.keypoints.labels, Some(vec![4, 1]));
    assert_eq!(m1.category, "chair");
    assert!(root.join("gt/m2.json").exists());

    let bad = tmp.path().join("bad.json");
    std::fs::write(
        &bad,
        r#"[
            {"model_id": "near", "keypoints": [{"xyz": [0.5, 0.0, 0.0]}]},
            {"model_id": "far", "keypoints": [{"xyz": [5.0, 0.0, 0.0]}]}
        ]"#,
    )
    .unwrap();
    let root = tmp.path().join("b");
    assert_eq!(
        code(&["--out", root.to_str().unwrap(), "import", bad.to_str().unwrap()]),
        2
    );
    assert!(root.join("gt/near.json").exists());
    assert!(!root.join("gt/far.json").exists());
    let report = read_json(&root.join("import_report.json"));
    assert_eq!(report["rejected"][0]["model_id"].as_str(), Some("far"));

    let root = tmp.path().join("c");
    ok(&[
        "--out",
        root.to_str().unwrap(),
        "import",
        "--normalize",
        bad.to_str().unwrap(),
    ]);
    let far = read_keypoints(&root.join("gt/far.json")).unwrap();
    assert!(far.keypoints.points[0].norm() < 1.0);
}

#[test]
fn extract_recovers_a_three_keypoint_shape() {
    let tmp = tempfile::tempdir().unwrap();
    let ann = tmp.path().join("three.json");
    std::fs::write(
        &ann,
        r#"[{"model_id": "three", "keypoints": [
            {"xyz": [-0.5, 0.0, 0.0]}, {"xyz": [0.3, 0.4, 0.0]}, {"xyz": [0.0, -0.2, 0.6]}]}]"#,
    )
    .unwrap();
    let root = tmp.path().join("run");
    let out = root.to_str().unwrap();
    ok(&["--out", out, "import", ann.to_str().unwrap()]);
    ok(&["--out", out, "--analytic", "fit"]);
    ok(&["--out", out, "--analytic", "extract"]);
    let pred = read_keypoints(&root.join("pred/three.json")).unwrap();
    assert_eq!(pred.keypoints.len(), 3);
}

#[test]
fn exit_codes() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("run");
    let out = out.to_str().unwrap();
    // unknown config key: validation
    let bad = write_config(tmp.path(), "radius = 0.08\nbogus = 1\n");
    assert_eq!(code(&["--config", bad.to_str().unwrap(), "--out", out, "gen"]), 2);
    // missing config file: I/O
    assert_eq!(code(&["--config", "/nonexistent/run.toml", "--out", out, "gen"]), 1);
    // eval without predictions: validation
    ok(&["--out", out, "gen"]);
    assert_eq!(code(&["--out", out, "eval"]), 2);
    // extract without fits: validation
    assert_eq!(code(&["--out", out, "extract"]), 2);
    // architecture ablation has no analytic mode
    assert_eq!(
        code(&["--out", out, "--analytic", "ablate", "--axis", "architecture"]),
        2
    );
    // training blows up: numerical failure
    let diverge = write_config(tmp.path(), &format!("{TINY}\n").replace("lr = 1e-3", "lr = 1e300"));
    assert_eq!(code(&["--config", diverge.to_str().unwrap(), "--out", out, "fit"]), 3);
}

#[test]
fn radius_ablation_has_five_rows() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "[dataset]\nshapes = 3\n");
    let root = tmp.path().join("run");
    let out = ok(&[
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        root.to_str().unwrap(),
        "--analytic",
        "ablate",
        "--axis",
        "radius",
    ]);
    let result = read_json(&root.join("ablation/radius.json"));
    let rows = result["rows"].as_array().unwrap();
    let radii: Vec<f64> = rows.iter().map(|r| r["radius"].as_f64().unwrap()).collect();
    assert_eq!(radii, vec![0.24, 0.16, 0.08, 0.04, 0.02]);
    assert!(String::from_utf8(out.stdout).unwrap().contains("r = 0.02"));
}

/// Every command, run twice from scratch with the same config, writes the
/// same bytes.
#[test]
fn reruns_are_byte_identical() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), TINY);
    let cfg = cfg.to_str().unwrap();
    let ann = tmp.path().join("ann.json");
    std::fs::write(
        &ann,
        r#"[{"model_id": "m", "class_id": "c", "keypoints": [{"xyz": [3, 1, 0], "semantic_id": 0}, {"xyz": [7, 2, 1], "semantic_id": 1}]}]"#,
    )
    .unwrap();
    let run = |name: &str| {
        let root = tmp.path().join(name);
        let out = root.to_str().unwrap();
        let base = ["--config", cfg, "--out", out, "--semantic"];
        for extra in [
            &["gen"][..],
            &["fit"],
            &["extract", "--save-grids"],
            &["eval"],
            &["--analytic", "ablate", "--axis", "radius"],
            &["pipeline"],
        ] {
            ok(&[&base[..], extra].concat());
        }
        let imported = tmp.path().join(format!("{name}-import"));
        ok(&[
            "--config",
            cfg,
            "--out",
            imported.to_str().unwrap(),
            "import",
            "--normalize",
            ann.to_str().unwrap(),
        ]);
        (snapshot(&root), snapshot(&imported))
    };
    let a = run("a");
    let b = run("b");
    assert_eq!(a.0.keys().collect::<Vec<_>>(), b.0.keys().collect::<Vec<_>>());
    for (path, bytes) in &a.0 {
        assert!(bytes == &b.0[path], "{path} differs between reruns");
    }
    assert_eq!(a.1, b.1);
}
