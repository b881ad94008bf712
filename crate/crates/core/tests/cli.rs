mod common;

use std::path::Path;
use std::process::Command;

use common::{gpmm, last_json, s, Fixture};
use gpmm::lowrank::container;
use gpmm::mesh::{LandmarkSet, TriangleMesh};
use gpmm::modelbuild::MorphableModel;
use gpmm::Point3;
use nalgebra::DVector;

fn read(p: &Path) -> Vec<u8> {
    std::fs::read(p).unwrap()
}

#[test]
fn build_prior_writes_loadable_container() {
    let f = Fixture::new();
    let gp = container::load_prior(&f.prior).unwrap();
    assert_eq!(gp.rank(), 20);
    assert_eq!(gp.vertex_count(), 162);

    let out = f.path("v.gpmm");
    let (code, lines) = gpmm(&["build-prior", s(&f.reference), s(&f.kernel), "--variance", "0.99", "--nystrom", "120", "--out", s(&out)]);
    assert_eq!(code, 0);
    let status = last_json(&lines);
    assert_eq!(status["status"], "ok");
    assert!(status["metrics"]["retained_variance"].as_f64().unwrap() >= 0.99);
    assert_eq!(status["outputs"][0], s(&out));
}

#[test]
fn build_prior_missing_kernel() {
    let f = Fixture::new();
    let missing = f.path("absent.json");
    let (code, lines) = gpmm(&["build-prior", s(&f.reference), s(&missing), "--rank", "5", "--out", s(&f.path("x.gpmm"))]);
    assert_eq!(code, 1);
    let status = last_json(&lines);
    assert_eq!(status["status"], "error");
    assert!(status["metrics"]["error"].as_str().unwrap().contains("absent.json"));
    assert!(!f.path("x.gpmm").exists());
}

#[test]
fn rank_and_variance_conflict() {
    let f = Fixture::new();
    let (code, lines) =
        gpmm(&["build-prior", s(&f.reference), s(&f.kernel), "--rank", "5", "--variance", "0.9", "--out", "x"]);
    assert_eq!(code, 1);
    assert_eq!(last_json(&lines)["status"], "error");
}

#[test]
fn register_single_target() {
    let f = Fixture::new();
    let targets = f.path("targets");
    f.target(&targets, "t0", 1, 1.0);
    let out = f.path("out");
    let (code, lines) = gpmm(&[
        "register", s(&f.prior), s(&targets.join("t0.ply")), "--landmarks-ref", s(&f.landmarks),
        "--max-iterations", "40", "--out", s(&out),
    ]);
    assert_eq!(code, 0, "{lines:?}");
    for file in ["t0.ply", "t0.json", "t0.landmarks.json", "t0.mask.json", "status.json"] {
        assert!(out.join(file).exists(), "{file}");
    }
    let report: serde_json::Value = serde_json::from_slice(&read(&out.join("t0.json"))).unwrap();
    assert_eq!(report["stages"].as_array().unwrap().len(), 5);
    assert!(report["stages"][0]["final_objective"].is_number());
    assert_eq!(report["coefficients"].as_array().unwrap().len(), 20);
    let mesh = TriangleMesh::load(out.join("t0.ply")).unwrap();
    assert_eq!(mesh.triangles(), TriangleMesh::load(&f.reference).unwrap().triangles());
}

#[test]
fn register_directory_isolates_failures() {
    let f = Fixture::new();
    let targets = f.path("targets");
    f.target(&targets, "a", 1, 1.0);
    f.target(&targets, "b", 2, 1.0);
    std::fs::write(targets.join("c.ply"), b"ply\nformat ascii 1.0\nelement vertex 3\nend_header\n1 2\n").unwrap();
    std::fs::copy(targets.join("a.landmarks.json"), targets.join("c.landmarks.json")).unwrap();
    let out = f.path("out");
    let (code, lines) = gpmm(&[
        "register", s(&f.prior), s(&targets), "--landmarks-ref", s(&f.landmarks), "--max-iterations", "30",
        "--jobs", "2", "--out", s(&out),
    ]);
    assert_eq!(code, 1);
    let status = last_json(&lines);
    assert_eq!(status["status"], "failed");
    assert_eq!(status["metrics"]["failed"], 1);
    let file: serde_json::Value = serde_json::from_slice(&read(&out.join("status.json"))).unwrap();
    let entries = file["targets"].as_array().unwrap();
    assert_eq!(entries.iter().map(|e| e["status"].as_str().unwrap()).collect::<Vec<_>>(), ["ok", "ok", "failed"]);
    assert!(entries[2]["error"].as_str().unwrap().contains("c.ply"));
    assert!(out.join("a.ply").exists() && out.join("b.ply").exists() && !out.join("c.ply").exists());
}

#[test]
fn register_and_sample_are_deterministic() {
    let f = Fixture::new();
    let targets = f.path("targets");
    f.target(&targets, "a", 3, 1.0);
    f.target(&targets, "b", 4, 1.0);
    let run = |name: &str| {
        let out = f.path(name);
        let (code, _) = gpmm(&[
            "register", s(&f.prior), s(&targets), "--landmarks-ref", s(&f.landmarks), "--max-iterations", "30",
            "--out", s(&out),
        ]);
        assert_eq!(code, 0);
        out
    };
    let (x, y) = (run("run1"), run("run2"));
    for file in ["a.ply", "a.json", "a.landmarks.json", "a.mask.json", "b.ply", "b.json", "status.json"] {
        assert_eq!(read(&x.join(file)), read(&y.join(file)), "{file}");
    }

    let (p, q) = (f.path("s1.ply"), f.path("s2.ply"));
    assert_eq!(gpmm(&["sample", s(&f.prior), "--seed", "42", "--out", s(&p)]).0, 0);
    assert_eq!(gpmm(&["sample", s(&f.prior), "--seed", "42", "--out", s(&q)]).0, 0);
    assert_eq!(read(&p), read(&q));
    assert!(String::from_utf8_lossy(&read(&p)).contains("comment seed 42"));
}

#[test]
fn sample_zero_overrides_give_mean() {
    let f = Fixture::new();
    let out = f.path("mean.ply");
    let (code, _) = gpmm(&["sample", s(&f.prior), "--seed", "9", "--shape", "0", "--out", s(&out)]);
    assert_eq!(code, 0);
    let mesh = TriangleMesh::load(&out).unwrap();
    let reference = TriangleMesh::load(&f.reference).unwrap();
    for (a, b) in mesh.vertices().iter().zip(reference.vertices()) {
        assert!((a - b).norm() < 1e-5);
    }
}

#[test]
fn sample_spread_matches_model() {
    let f = Fixture::new();
    let gp = container::load_prior(&f.prior).unwrap();
    let n = gp.vertex_count();
    let mut sum_sq = vec![0.0; n];
    let draws = 100;
    for seed in 0..draws {
        let out = f.path("draw.ply");
        assert_eq!(gpmm(&["sample", s(&f.prior), "--seed", &seed.to_string(), "--out", s(&out)]).0, 0);
        let mesh = TriangleMesh::load(&out).unwrap();
        for (i, p) in mesh.vertices().iter().enumerate() {
            sum_sq[i] += (p - gp.reference_mesh().vertices()[i]).norm_squared();
        }
    }
    for (i, ss) in sum_sq.iter().enumerate() {
        let empirical = (ss / draws as f64).sqrt();
        let model = gp.variance_trace(i).sqrt();
        assert!((empirical - model).abs() <= 0.2 * model, "vertex {i}: {empirical} vs {model}");
    }
}

/// Registered-looking meshes: prior samples with colors and masks.
fn registrations(f: &Fixture) -> std::path::PathBuf {
    let dir = f.path("registered");
    for k in 0..4 {
        let mesh = f.target(&dir, &format!("r{k}"), 10 + k, 1.0);
        let colors: Vec<[f64; 3]> =
            mesh.vertices().iter().map(|p| [0.5 + p.x / 100.0, 0.5 + (k as f64) / 10.0, 0.5 - p.z / 100.0]).collect();
        mesh.with_colors(Some(colors)).unwrap().save(dir.join(format!("r{k}.ply"))).unwrap();
        let mask: Vec<u8> = (0..mesh.vertex_count()).map(|i| (i % 7 != k as usize) as u8).collect();
        std::fs::write(dir.join(format!("r{k}.mask.json")), serde_json::json!({ "mask": mask }).to_string()).unwrap();
    }
    dir
}

#[test]
fn build_model_and_reconstruct() {
    let f = Fixture::new();
    let reg = registrations(&f);
    let (neutral, expr) = (f.path("neutral"), f.path("expr"));
    for k in 0..3 {
        f.target(&neutral, &format!("s{k}"), 20 + k, 1.0);
        f.target(&expr, &format!("s{k}_smile"), 30 + k, 1.0);
    }
    let out = f.path("model.gpmm");
    let (code, lines) = gpmm(&[
        "build-model", "--registrations", s(&reg), "--neutrals", s(&neutral), "--expressions", s(&expr),
        "--reference", s(&f.reference), "--rank", "10", "--out", s(&out),
    ]);
    assert_eq!(code, 0, "{lines:?}");
    let m = last_json(&lines)["metrics"].clone();
    assert_eq!((m["shape_rank"].as_u64(), m["expression_rank"].as_u64(), m["expression_pairs"].as_u64()), (Some(3), Some(2), Some(3)));

    let model = MorphableModel::load(&out).unwrap();
    let reference = TriangleMesh::load(&f.reference).unwrap();
    for k in 0..4 {
        let mesh = TriangleMesh::load(reg.join(format!("r{k}.ply"))).unwrap();
        let field = DVector::from_iterator(
            3 * mesh.vertex_count(),
            mesh.vertices().iter().zip(reference.vertices()).flat_map(|(a, b)| (a - b).iter().copied().collect::<Vec<_>>()),
        );
        let back = model.shape.field(&model.shape.project(&field).unwrap()).unwrap();
        // the container stores float32
        assert!((back - field).amax() <= 1e-4);
    }

    let mean = f.path("mean.ply");
    assert_eq!(gpmm(&["sample", s(&out), "--shape", "0", "--color", "0", "--expression", "0", "--out", s(&mean)]).0, 0);
    let inst = TriangleMesh::load(&mean).unwrap();
    let expect = model.mean_instance().unwrap();
    for (a, b) in inst.vertices().iter().zip(expect.vertices()) {
        assert!((a - b).norm() < 1e-4);
    }
}

#[test]
fn build_model_topology_mismatch_names_file() {
    let f = Fixture::new();
    let reg = registrations(&f);
    gpmm::synthetic::icosphere(30.0, 1).save(reg.join("zz_odd.ply")).unwrap();
    let (code, lines) =
        gpmm(&["build-model", "--registrations", s(&reg), "--reference", s(&f.reference), "--out", s(&f.path("m.gpmm"))]);
    assert_eq!(code, 1);
    assert!(last_json(&lines)["metrics"]["error"].as_str().unwrap().contains("zz_odd.ply"));
}

fn write_lms(dir: &Path, name: &str, pts: &[(&str, [f64; 3])]) {
    std::fs::create_dir_all(dir).unwrap();
    LandmarkSet::from_pairs(pts.iter().map(|(n, p)| (*n, Point3::from(*p))))
        .unwrap()
        .save(dir.join(format!("{name}.landmarks.json")))
        .unwrap();
}

#[test]
fn eval_landmarks_files() {
    let dir = tempfile::tempdir().unwrap();
    let (res, truth) = (dir.path().join("res"), dir.path().join("truth"));
    let regions = dir.path().join("regions.json");
    std::fs::write(&regions, r#"{"eye_l": "Left Eye", "eye_r": "Left Eye", "nose": "Nose"}"#).unwrap();
    let base = [("eye_l", [0.0, 0.0, 0.0]), ("eye_r", [5.0, 0.0, 0.0]), ("nose", [0.0, 9.0, 0.0])];
    write_lms(&truth, "subj", &base);
    write_lms(&res, "subj", &[("eye_l", [1.0, 0.0, 0.0]), ("eye_r", [5.0, 3.0, 0.0]), ("nose", [0.0, 9.0, 0.0])]);
    let out = dir.path().join("report");
    let (code, lines) = gpmm(&["eval-landmarks", s(&res), s(&truth), s(&regions), "--out", s(&out)]);
    assert_eq!(code, 0, "{lines:?}");
    assert!(lines.iter().any(|l| l.starts_with("Left Eye") && l.contains("2.00 ± 1.41")));
    assert!(lines.iter().any(|l| l.starts_with("Nose") && l.contains("0.00 ± 0.00")));
    let m = &last_json(&lines)["metrics"]["regions"];
    assert_eq!(m[0]["name"], "Left Eye");
    assert!((m[0]["std"].as_f64().unwrap() - 2f64.sqrt()).abs() < 1e-12);
    assert!(out.join("landmark_report.txt").exists());

    write_lms(&res, "subj", &[("eye_l", [0.0, 0.0, 0.0]), ("eye_r", [5.0, 0.0, 0.0]), ("mouth", [0.0, 9.0, 0.0])]);
    let (code, lines) = gpmm(&["eval-landmarks", s(&res), s(&truth), s(&regions)]);
    assert_eq!(code, 1);
    let err = last_json(&lines)["metrics"]["error"].as_str().unwrap().to_string();
    assert!(err.contains("mouth") && err.contains("nose"), "{err}");
}

#[test]
fn binary_reports_status_on_stdout() {
    let f = Fixture::new();
    let output = Command::new(env!("CARGO_BIN_EXE_gpmm"))
        .args(["sample", s(&f.prior), "--seed", "1", "--out", s(&f.path("x.ply"))])
        .output()
        .unwrap();
    assert_eq!(output.status.code(), Some(0));
    let stdout = String::from_utf8(output.stdout).unwrap();
    let status: serde_json::Value = serde_json::from_str(stdout.lines().last().unwrap()).unwrap();
    assert_eq!(status["metrics"]["seed"], 1);

    let output = Command::new(env!("CARGO_BIN_EXE_gpmm")).args(["sample", s(&f.path("nope.gpmm")), "--out", "y"]).output().unwrap();
    assert_eq!(output.status.code(), Some(1));
    assert!(!output.stderr.is_empty());
}
