#![allow(dead_code)]

use std::path::{Path, PathBuf};

use gpmm::lowrank::container;
use gpmm::mesh::{LandmarkSet, TriangleMesh};
use gpmm::synthetic;
use serde_json::Value;

pub const LANDMARK_IDS: [usize; 6] = [0, 20, 45, 80, 120, 150];

/// Runs the CLI in-process; returns the exit code and stdout lines.
pub fn gpmm(args: &[&str]) -> (i32, Vec<String>) {
    let mut out = Vec::new();
    let code = gpmm::pipeline::cli::run(std::iter::once("gpmm").chain(args.iter().copied()), &mut out);
    let text = String::from_utf8(out).unwrap();
    (code, text.lines().map(str::to_string).collect())
}

pub fn last_json(lines: &[String]) -> Value {
    serde_json::from_str(lines.last().expect("no output")).expect("last line is JSON")
}

pub fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

pub fn landmarks(mesh: &TriangleMesh) -> LandmarkSet {
    LandmarkSet::from_pairs(LANDMARK_IDS.iter().map(|&i| (format!("lm{i}"), mesh.vertices()[i]))).unwrap()
}

pub struct Fixture {
    pub dir: tempfile::TempDir,
    pub reference: PathBuf,
    pub kernel: PathBuf,
    pub landmarks: PathBuf,
    pub prior: PathBuf,
}

impl Fixture {
    /// A 162-vertex sphere, a multi-scale B-spline kernel and a rank-20 prior.
    pub fn new() -> Self {
        let dir = tempfile::tempdir().unwrap();
        let mesh = synthetic::icosphere(30.0, 2);
        let reference = dir.path().join("reference.ply");
        mesh.save(&reference).unwrap();
        let mesh = TriangleMesh::load(&reference).unwrap();
        let kernel = dir.path().join("kernel.json");
        std::fs::write(&kernel, r#"{"type": "bspline_multiscale", "j_lo": -6, "j_hi": -4, "scales": [16, 8, 2]}"#).unwrap();
        let landmarks_path = dir.path().join("reference.landmarks.json");
        landmarks(&mesh).save(&landmarks_path).unwrap();
        let prior = dir.path().join("prior.gpmm");
        let (code, lines) = gpmm(&["build-prior", s(&reference), s(&kernel), "--rank", "20", "--out", s(&prior)]);
        assert_eq!(code, 0, "{lines:?}");
        Fixture { dir, reference, kernel, landmarks: landmarks_path, prior }
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.dir.path().join(name)
    }

    /// Writes `<dir>/<name>.ply` and `<name>.landmarks.json`: the reference
    /// warped by prior sample `seed`, scaled by `scale`.
    pub fn target(&self, dir: &Path, name: &str, seed: u64, scale: f64) -> TriangleMesh {
        std::fs::create_dir_all(dir).unwrap();
        let gp = container::load_prior(&self.prior).unwrap();
        let mesh = gp.warp(&(gp.sample(seed) * scale)).unwrap();
        mesh.save(dir.join(format!("{name}.ply"))).unwrap();
        let mesh = TriangleMesh::load(dir.join(format!("{name}.ply"))).unwrap();
        landmarks(&mesh).save(dir.join(format!("{name}.landmarks.json"))).unwrap();
        mesh
    }
}
