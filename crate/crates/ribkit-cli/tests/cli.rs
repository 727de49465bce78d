//! End-to-end tests of the `ribkit` binary: every subcommand runs against
//! generated scenes in temp directories.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use ribkit::features::{self, RibFeatureRecord};
use ribkit::instances::Side;
use ribkit::nifti;
use ribkit::LabelVolume;
use serde_json::Value;
use tempfile::TempDir;

fn ribkit_bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_ribkit"))
}

fn run_ok(cmd: &mut Command) -> Output {
    let out = cmd.output().expect("binary runs");
    assert!(
        out.status.success(),
        "command failed\nstdout: {}\nstderr: {}",
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn make_scene(dir: &Path, extra: &[&str]) -> PathBuf {
    let scene_dir = dir.join("scene");
    let mut cmd = ribkit_bin();
    cmd.args([
        "phantom",
        "--levels",
        "2",
        "--ribs-per-side",
        "1",
        "--spacing",
        "1.0",
        "--out-dir",
    ])
    .arg(&scene_dir)
    .args(extra);
    run_ok(&mut cmd);
    scene_dir
}

fn json_file(path: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(path).expect("file exists")).expect("valid json")
}

#[test]
fn phantom_analyze_matches_truth() {
    let tmp = TempDir::new().unwrap();
    let scene = make_scene(tmp.path(), &["--stumps", "0:left:25"]);
    let out_dir = tmp.path().join("analysis");

    run_ok(
        ribkit_bin()
            .arg("analyze")
            .arg("--ribs")
            .arg(scene.join("rib_mask.nii.gz"))
            .arg("--vertebrae")
            .arg(scene.join("vertebrae.nii.gz"))
            .arg("--out-dir")
            .arg(&out_dir),
    );

    let report = json_file(&out_dir.join("analyze.json"));
    let truth = json_file(&scene.join("truth.json"));

    assert_eq!(report["schema_version"], 1);
    assert_eq!(report["summary"]["num_ribs"], 4);
    assert_eq!(report["summary"]["num_measured"], 4);
    assert_eq!(report["summary"]["num_stumps"], 1);

    // Every truth rib must appear once under its anatomic name with a
    // length inside the tube-width tolerance.
    for rt in truth["ribs"].as_array().unwrap() {
        let name = format!("{}-{}", rt["vertebra_label"], rt["side"].as_str().unwrap());
        let expected = rt["length_mm"].as_f64().unwrap();
        let rib = report["ribs"]
            .as_array()
            .unwrap()
            .iter()
            .find(|r| r["anatomic_label"] == Value::String(name.clone()))
            .unwrap_or_else(|| panic!("missing rib {name}"));
        let got = rib["length_mm"].as_f64().unwrap();
        let tol = (0.03 * expected).max(2.0);
        assert!(
            (got - expected).abs() <= tol,
            "{name}: measured {got:.1} vs expected {expected:.1}"
        );
        let expect_stump = expected <= 38.0;
        assert_eq!(rib["is_stump"].as_bool().unwrap(), expect_stump, "{name}");
    }

    // The cohort CSV round-trips through the library reader.
    let records =
        features::read_csv(fs::read(out_dir.join("features.csv")).unwrap().as_slice()).unwrap();
    assert_eq!(records.len(), 4);
    assert_eq!(records.iter().filter(|r| r.is_stump).count(), 1);

    let manifest = json_file(&out_dir.join("manifest.json"));
    assert_eq!(manifest["schema_version"], 1);
    assert_eq!(manifest["command"], "analyze");
}

#[test]
fn empty_rib_mask_reports_cleanly() {
    let tmp = TempDir::new().unwrap();
    let scene = make_scene(tmp.path(), &[]);
    let verts = nifti::read_nifti_canonical(&scene.join("vertebrae.nii.gz")).unwrap();
    let empty = LabelVolume::new(
        verts.dims(),
        *verts.affine(),
        vec![0; verts.data().len()],
    )
    .unwrap();
    let empty_path = tmp.path().join("empty.nii.gz");
    nifti::write_nifti(&empty, &empty_path).unwrap();

    let out_dir = tmp.path().join("analysis");
    let out = run_ok(
        ribkit_bin()
            .arg("analyze")
            .arg("--ribs")
            .arg(&empty_path)
            .arg("--vertebrae")
            .arg(scene.join("vertebrae.nii.gz"))
            .arg("--out-dir")
            .arg(&out_dir),
    );
    assert!(String::from_utf8_lossy(&out.stdout).contains("no ribs found"));

    let report = json_file(&out_dir.join("analyze.json"));
    assert_eq!(report["summary"]["num_ribs"], 0);
    assert!(report["summary"]["stump_prevalence"].is_null());
}

#[test]
fn misaligned_inputs_fail() {
    let tmp = TempDir::new().unwrap();
    let scene = make_scene(tmp.path(), &[]);
    let verts = nifti::read_nifti_canonical(&scene.join("vertebrae.nii.gz")).unwrap();
    let mut affine = *verts.affine();
    affine[(0, 3)] += 5.0;
    let shifted = LabelVolume::new(verts.dims(), affine, verts.data().to_vec()).unwrap();
    let shifted_path = tmp.path().join("shifted.nii.gz");
    nifti::write_nifti(&shifted, &shifted_path).unwrap();

    let out = ribkit_bin()
        .arg("analyze")
        .arg("--ribs")
        .arg(scene.join("rib_mask.nii.gz"))
        .arg("--vertebrae")
        .arg(&shifted_path)
        .arg("--out-dir")
        .arg(tmp.path().join("analysis"))
        .output()
        .unwrap();
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("aligned"));
}

#[test]
fn snapshot_is_deterministic_and_draws_markers() {
    let tmp = TempDir::new().unwrap();
    let scene = make_scene(tmp.path(), &[]);
    let markers_path = tmp.path().join("markers.json");
    fs::write(&markers_path, "[[16.0, -9.0, 0.0], [0.0, 0.0, 35.0]]").unwrap();

    let render = |out_name: &str, markers: bool| -> Vec<u8> {
        let out_path = tmp.path().join(out_name);
        let mut cmd = ribkit_bin();
        cmd.arg("snapshot")
            .arg("--volume")
            .arg(scene.join("combined.nii.gz"))
            .args(["--plane", "coronal"])
            .arg("--out")
            .arg(&out_path);
        if markers {
            cmd.arg("--markers").arg(&markers_path);
        }
        run_ok(&mut cmd);
        fs::read(&out_path).unwrap()
    };

    let a = render("a.ppm", true);
    let b = render("b.ppm", true);
    assert_eq!(a, b, "snapshot output must be byte-identical across runs");
    assert!(a.starts_with(b"P6\n"));

    let plain = render("plain.ppm", false);
    let whites = |ppm: &[u8]| {
        // Pixel data starts after the third newline of the header.
        let start = ppm
            .iter()
            .enumerate()
            .filter(|(_, &b)| b == b'\n')
            .nth(2)
            .map(|(i, _)| i + 1)
            .unwrap();
        ppm[start..]
            .chunks_exact(3)
            .filter(|c| *c == [255u8, 255, 255])
            .count()
    };
    assert!(whites(&a) > whites(&plain), "markers must add white pixels");
}

#[test]
fn evaluate_identity_then_deleted_instance() {
    let tmp = TempDir::new().unwrap();
    let scene = make_scene(tmp.path(), &[]);
    let ribs_path = scene.join("ribs.nii.gz");

    let out_dir = tmp.path().join("eval_same");
    run_ok(
        ribkit_bin()
            .arg("evaluate")
            .arg("--pred")
            .arg(&ribs_path)
            .arg("--reference")
            .arg(&ribs_path)
            .arg("--out-dir")
            .arg(&out_dir),
    );
    let report = json_file(&out_dir.join("report.json"));
    assert_eq!(report["schema_version"], 1);
    assert_eq!(report["binary_dsc"], 1.0);
    assert_eq!(report["rq"], 1.0);
    assert_eq!(report["pq_dsc"], 1.0);
    assert_eq!(report["sq_assd"], 0.0);
    let csv = fs::read_to_string(out_dir.join("metrics.csv")).unwrap();
    assert!(csv.lines().nth(1).unwrap().starts_with("1.000,1.000,1.000,1.000,0.000,0.000"));

    // Deleting one of the four instances: fn = 1, rq = 3 / 3.5.
    let reference = nifti::read_nifti_canonical(&ribs_path).unwrap();
    let first_label = reference.distinct_labels()[0];
    let data: Vec<u32> = reference
        .data()
        .iter()
        .map(|&l| if l == first_label { 0 } else { l })
        .collect();
    let pred = LabelVolume::new(reference.dims(), *reference.affine(), data).unwrap();
    let pred_path = tmp.path().join("pred.nii.gz");
    nifti::write_nifti(&pred, &pred_path).unwrap();

    let out_dir = tmp.path().join("eval_missing");
    run_ok(
        ribkit_bin()
            .arg("evaluate")
            .arg("--pred")
            .arg(&pred_path)
            .arg("--reference")
            .arg(&ribs_path)
            .arg("--out-dir")
            .arg(&out_dir),
    );
    let report = json_file(&out_dir.join("report.json"));
    assert_eq!(report["matching"]["false_negatives"], 1);
    assert_eq!(report["matching"]["false_positives"], 0);
    let rq = report["rq"].as_f64().unwrap();
    assert!((rq - 3.0 / 3.5).abs() < 1e-12);
}

/// Two-cluster cohort: short ribs with posterior-leaning geometry vs long
/// ribs, spread over enough subjects for seeded splitting.
fn cohort_csv() -> Vec<u8> {
    let mut records = Vec::new();
    for subject in 0..14 {
        for rib in 0..4 {
            let stump = rib == 0 && subject % 2 == 0;
            let (length, dir): (f64, [f64; 3]) = if stump {
                (25.0 + subject as f64 * 0.3, [-0.9, -0.3, 0.1])
            } else {
                (170.0 + rib as f64, [0.1, 0.9, 0.2])
            };
            let norm = (dir[0] * dir[0] + dir[1] * dir[1] + dir[2] * dir[2]).sqrt();
            let unit = [dir[0] / norm, dir[1] / norm, dir[2] / norm];
            records.push(RibFeatureRecord {
                subject: format!("s{subject:02}"),
                rib: format!("10{rib}-left"),
                side: Side::Left,
                length_mm: length,
                is_stump: stump,
                drc: [unit[0] * 20.0, unit[1] * 20.0, unit[2] * 20.0],
                pdrc: unit[1] * 20.0,
                ppr: vec![unit, unit, unit],
                volume_length_ratio: if stump { 60.0 } else { 45.0 },
            });
        }
    }
    let mut out = Vec::new();
    features::write_csv(&records, &mut out).unwrap();
    out
}

#[test]
fn experiment_grid_and_sweep_write_expected_shapes() {
    let tmp = TempDir::new().unwrap();
    let features_path = tmp.path().join("features.csv");
    fs::write(&features_path, cohort_csv()).unwrap();

    let grid_dir = tmp.path().join("grid");
    run_ok(
        ribkit_bin()
            .arg("experiment")
            .arg("--features")
            .arg(&features_path)
            .args(["--mode", "grid"])
            .arg("--out-dir")
            .arg(&grid_dir),
    );
    let grid = fs::read_to_string(grid_dir.join("grid.csv")).unwrap();
    let lines: Vec<&str> = grid.lines().collect();
    assert_eq!(lines.len(), 15, "header + 7 feature sets x 2 kernels");
    assert!(lines[0].starts_with("feature_set,kernel,f1_seed0"));
    assert!(lines[1].starts_with("2-PPR,polynomial"));
    assert!(lines[2].starts_with("2-PPR,linear"));

    let sweep_dir = tmp.path().join("sweep");
    run_ok(
        ribkit_bin()
            .arg("experiment")
            .arg("--features")
            .arg(&features_path)
            .args(["--mode", "sweep"])
            .args(["--thresholds", "30,45"])
            .args(["--feature-sets", "2-PPR,DRC"])
            .arg("--out-dir")
            .arg(&sweep_dir),
    );
    let sweep = fs::read_to_string(sweep_dir.join("sweep.csv")).unwrap();
    let lines: Vec<&str> = sweep.lines().collect();
    assert_eq!(lines.len(), 5, "header + 2 thresholds x 2 sets");
    assert_eq!(lines[0], "threshold_mm,feature_set,mean_f1,std_f1");
}

#[test]
fn config_file_yields_to_flags() {
    let tmp = TempDir::new().unwrap();
    let scene = make_scene(tmp.path(), &["--stumps", "0:left:25"]);
    let config_path = tmp.path().join("ribkit.conf");
    fs::write(
        &config_path,
        "# analysis defaults\nstump-threshold = 10\ncone-rays = 32\nsubject-id = from-config\n",
    )
    .unwrap();

    // Config only: the 25 mm rib is above the 10 mm threshold.
    let cfg_dir = tmp.path().join("cfg_only");
    run_ok(
        ribkit_bin()
            .arg("analyze")
            .arg("--ribs")
            .arg(scene.join("rib_mask.nii.gz"))
            .arg("--vertebrae")
            .arg(scene.join("vertebrae.nii.gz"))
            .arg("--config")
            .arg(&config_path)
            .arg("--out-dir")
            .arg(&cfg_dir),
    );
    let report = json_file(&cfg_dir.join("analyze.json"));
    assert_eq!(report["subject"], "from-config");
    assert_eq!(report["config"]["stump_threshold_mm"], 10.0);
    assert_eq!(report["config"]["rlma"]["cone_ray_count"], 32);
    assert_eq!(report["summary"]["num_stumps"], 0);

    // Flag overrides the config threshold and subject id.
    let flag_dir = tmp.path().join("flagged");
    run_ok(
        ribkit_bin()
            .arg("analyze")
            .arg("--ribs")
            .arg(scene.join("rib_mask.nii.gz"))
            .arg("--vertebrae")
            .arg(scene.join("vertebrae.nii.gz"))
            .arg("--config")
            .arg(&config_path)
            .args(["--stump-threshold", "50", "--subject-id", "from-flag"])
            .arg("--out-dir")
            .arg(&flag_dir),
    );
    let report = json_file(&flag_dir.join("analyze.json"));
    assert_eq!(report["subject"], "from-flag");
    assert_eq!(report["config"]["stump_threshold_mm"], 50.0);
    assert_eq!(report["summary"]["num_stumps"], 1);
}

#[test]
fn prelabeled_rib_instances_are_accepted() {
    let tmp = TempDir::new().unwrap();
    let scene = make_scene(tmp.path(), &[]);
    let out_dir = tmp.path().join("analysis");
    run_ok(
        ribkit_bin()
            .arg("analyze")
            .arg("--ribs")
            .arg(scene.join("ribs.nii.gz"))
            .arg("--vertebrae")
            .arg(scene.join("vertebrae.nii.gz"))
            .arg("--out-dir")
            .arg(&out_dir),
    );
    let report = json_file(&out_dir.join("analyze.json"));
    assert_eq!(report["summary"]["num_ribs"], 4);
    assert_eq!(report["summary"]["num_measured"], 4);
    // Construction labels pass through untouched.
    let labels: Vec<i64> = report["ribs"]
        .as_array()
        .unwrap()
        .iter()
        .map(|r| r["label"].as_i64().unwrap())
        .collect();
    assert_eq!(labels, vec![1, 2, 3, 4]);
}

#[test]
fn lowest_two_restriction_drops_higher_levels() {
    let tmp = TempDir::new().unwrap();
    let scene_dir = tmp.path().join("scene");
    run_ok(
        ribkit_bin()
            .args([
                "phantom",
                "--levels",
                "3",
                "--ribs-per-side",
                "1",
                "--spacing",
                "1.0",
                "--out-dir",
            ])
            .arg(&scene_dir),
    );
    let out_dir = tmp.path().join("analysis");
    run_ok(
        ribkit_bin()
            .arg("analyze")
            .arg("--ribs")
            .arg(scene_dir.join("rib_mask.nii.gz"))
            .arg("--vertebrae")
            .arg(scene_dir.join("vertebrae.nii.gz"))
            .arg("--lowest-two")
            .arg("--out-dir")
            .arg(&out_dir),
    );
    let report = json_file(&out_dir.join("analyze.json"));
    assert_eq!(report["summary"]["num_ribs"], 6);
    assert_eq!(report["summary"]["num_measured"], 4);
    for rib in report["ribs"].as_array().unwrap() {
        let measured = rib["measured"].as_bool().unwrap();
        // Levels stack upward from 101; 103 is the most superior.
        let expect = rib["vertebra"].as_i64().unwrap() < 103;
        assert_eq!(measured, expect);
    }
}
