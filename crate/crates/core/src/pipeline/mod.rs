//! Batch commands: prior building, registration, model building, sampling
//! and landmark evaluation. Each command reads its inputs, writes only under
//! its output path and returns an [`Outcome`] whose JSON form is the last
//! line the binary prints.

pub mod cli;

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use nalgebra::DVector;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde_json::{json, Value};

use crate::kernels::config::KernelSpec;
use crate::kernels::squared_exponential;
use crate::lowrank::{build_low_rank, container, LowRankGp, LowRankOptions, RankSelection, Sampling};
use crate::mesh::{ply, rigid_align, LandmarkSet, PlyFormat, Surface, TriangleMesh};
use crate::modelbuild::{
    build_color_model, build_expression_model, build_shape_model, evaluate_landmark_sets, ColorSample, MorphableModel,
    RegionMap,
};
use crate::register::{register, RegistrationConfig};
use crate::{Error, Result, Vec3};

/// What a command produced.
#[derive(Debug, Clone, PartialEq)]
pub struct Outcome {
    pub outputs: Vec<PathBuf>,
    pub metrics: Value,
    /// Nonzero when some batch items failed while others succeeded.
    pub code: i32,
}

impl Outcome {
    fn ok(outputs: Vec<PathBuf>, metrics: Value) -> Self {
        Self { outputs, metrics, code: 0 }
    }
}

/// 1 for input and validation errors, 2 for numerical failures.
pub fn exit_code(err: &Error) -> i32 {
    if err.is_numerical() {
        2
    } else {
        1
    }
}

/// The `{"status", "outputs", "metrics"}` status object and exit code.
pub fn status(result: &Result<Outcome>) -> (Value, i32) {
    match result {
        Ok(o) => {
            let outputs: Vec<String> = o.outputs.iter().map(|p| p.display().to_string()).collect();
            let status = if o.code == 0 { "ok" } else { "failed" };
            (json!({ "status": status, "outputs": outputs, "metrics": o.metrics }), o.code)
        }
        Err(e) => (json!({ "status": "error", "outputs": [], "metrics": { "error": e.to_string() } }), exit_code(e)),
    }
}

fn require(path: &Path) -> Result<()> {
    if path.exists() {
        Ok(())
    } else {
        Err(Error::io(path, std::io::Error::new(std::io::ErrorKind::NotFound, "no such file or directory")))
    }
}

fn create_dir(path: &Path) -> Result<()> {
    std::fs::create_dir_all(path).map_err(|e| Error::io(path, e))
}

fn create_parent(path: &Path) -> Result<()> {
    match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => create_dir(p),
        _ => Ok(()),
    }
}

fn write_json(path: &Path, value: &Value) -> Result<()> {
    let text = serde_json::to_string_pretty(value).expect("JSON values always serialize") + "\n";
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// `*.ply` files of a directory in name order.
fn ply_files(dir: &Path) -> Result<Vec<PathBuf>> {
    require(dir)?;
    let mut files: Vec<PathBuf> = std::fs::read_dir(dir)
        .map_err(|e| Error::io(dir, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x.eq_ignore_ascii_case("ply")))
        .collect();
    files.sort();
    Ok(files)
}

fn stem(path: &Path) -> String {
    path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default()
}

/// `<stem>.landmarks.json`, falling back to `<stem>.json`.
fn landmark_file(dir: &Path, stem: &str) -> PathBuf {
    let primary = dir.join(format!("{stem}.landmarks.json"));
    if primary.exists() {
        primary
    } else {
        dir.join(format!("{stem}.json"))
    }
}

#[derive(Debug, Clone)]
pub struct BuildPriorArgs {
    pub reference: PathBuf,
    pub kernel: PathBuf,
    pub nystrom_points: Option<usize>,
    pub rank: RankSelection,
    pub sampling: Sampling,
    pub out: PathBuf,
}

pub fn build_prior(args: &BuildPriorArgs) -> Result<Outcome> {
    require(&args.reference)?;
    require(&args.kernel)?;
    let reference = Arc::new(Surface::new(TriangleMesh::load(&args.reference)?));
    let spec = KernelSpec::load(&args.kernel)?;
    let base = args.kernel.parent().unwrap_or(Path::new("."));
    let built = spec.build(&reference, base)?;
    let opts = LowRankOptions { nystrom_points: args.nystrom_points, rank: args.rank, sampling: args.sampling, ..Default::default() };
    let kernel = built.kernel.into_matrix();
    let (gp, report) = build_low_rank(kernel.as_ref(), &built.mean, &opts)?;
    create_parent(&args.out)?;
    container::save_prior(&gp, &args.out)?;
    log::info!("prior of rank {} written to {}", report.rank, args.out.display());
    Ok(Outcome::ok(
        vec![args.out.clone()],
        json!({
            "rank": report.rank,
            "retained_variance": report.retained_variance,
            "nystrom_points": report.nystrom_points,
            "min_eigenvalue": report.min_eigenvalue,
            "max_eigenvalue": report.max_eigenvalue,
        }),
    ))
}

#[derive(Debug, Clone)]
pub struct RegisterArgs {
    pub prior: PathBuf,
    /// A PLY file or a directory of them.
    pub target: PathBuf,
    pub reference_landmarks: PathBuf,
    /// A landmark file, or a directory holding `<stem>.landmarks.json`.
    /// Defaults to the target directory.
    pub target_landmarks: Option<PathBuf>,
    pub config: RegistrationConfig,
    /// Similarity-align each target onto the reference landmarks first.
    pub align: bool,
    pub jobs: usize,
    pub out: PathBuf,
}

struct Job {
    name: String,
    mesh: PathBuf,
    landmarks: PathBuf,
}

pub fn register_targets(args: &RegisterArgs) -> Result<Outcome> {
    if args.jobs == 0 {
        return Err(Error::InvalidInput("--jobs must be at least 1".into()));
    }
    require(&args.prior)?;
    require(&args.target)?;
    require(&args.reference_landmarks)?;
    args.config.validate()?;
    let prior = container::load_prior(&args.prior)?;
    let reference_landmarks = LandmarkSet::load(&args.reference_landmarks)?;

    let jobs: Vec<Job> = if args.target.is_dir() {
        let lm_dir = args.target_landmarks.clone().unwrap_or_else(|| args.target.clone());
        if !lm_dir.is_dir() {
            return Err(Error::InvalidInput(format!(
                "target {} is a directory, so target landmarks must be one too",
                args.target.display()
            )));
        }
        ply_files(&args.target)?
            .into_iter()
            .map(|mesh| {
                let name = stem(&mesh);
                Job { landmarks: landmark_file(&lm_dir, &name), name, mesh }
            })
            .collect()
    } else {
        let name = stem(&args.target);
        let landmarks = match &args.target_landmarks {
            Some(p) if p.is_dir() => landmark_file(p, &name),
            Some(p) => p.clone(),
            None => landmark_file(args.target.parent().unwrap_or(Path::new(".")), &name),
        };
        vec![Job { name, mesh: args.target.clone(), landmarks }]
    };
    if jobs.is_empty() {
        return Err(Error::InvalidInput(format!("no .ply targets in {}", args.target.display())));
    }
    create_dir(&args.out)?;

    let results = crate::parallel_map_jobs(args.jobs, &jobs, |job| {
        let r = register_one(&prior, &reference_landmarks, job, args);
        match &r {
            Ok(_) => log::info!("registered {}", job.name),
            Err(e) => log::error!("{}: {e}", job.name),
        }
        r
    });

    let mut outputs = Vec::new();
    let mut entries = Vec::new();
    let mut code = 0;
    let mut residuals = BTreeMap::new();
    for (job, r) in jobs.iter().zip(results) {
        match r {
            Ok((files, mean_residual)) => {
                outputs.extend(files);
                residuals.insert(job.name.clone(), mean_residual);
                entries.push(json!({ "target": job.name, "status": "ok" }));
            }
            Err(e) => {
                code = code.max(exit_code(&e));
                entries.push(json!({ "target": job.name, "status": "failed", "error": e.to_string() }));
            }
        }
    }
    let status_path = args.out.join("status.json");
    let failed = entries.iter().filter(|e| e["status"] == "failed").count();
    write_json(&status_path, &json!({ "targets": entries }))?;
    outputs.push(status_path);
    Ok(Outcome {
        outputs,
        metrics: json!({ "targets": jobs.len(), "failed": failed, "mean_residual": residuals }),
        code,
    })
}

fn register_one(prior: &LowRankGp, reference_landmarks: &LandmarkSet, job: &Job, args: &RegisterArgs) -> Result<(Vec<PathBuf>, f64)> {
    let mut target = TriangleMesh::load(&job.mesh)?;
    let mut target_landmarks = LandmarkSet::load(&job.landmarks)?;
    if args.align {
        let t = rigid_align(&target_landmarks, reference_landmarks)?;
        target = target.transformed(&t);
        target_landmarks = target_landmarks.map_points(|p| t.apply(p));
    }
    let result = register(prior, &target, reference_landmarks, &target_landmarks, &args.config)?;

    let mesh_path = args.out.join(format!("{}.ply", job.name));
    let report_path = args.out.join(format!("{}.json", job.name));
    let lm_path = args.out.join(format!("{}.landmarks.json", job.name));
    let mask_path = args.out.join(format!("{}.mask.json", job.name));
    ply::save_mesh(&result.mesh, &mesh_path, PlyFormat::BinaryLittleEndian, &[format!("registration of {}", job.name)])?;
    let mut report = result.report();
    report["target"] = json!(job.name);
    write_json(&report_path, &report)?;
    std::fs::write(&lm_path, result.landmarks.to_json()).map_err(|e| Error::io(&lm_path, e))?;
    let mask: Vec<u8> = result.active.iter().map(|a| *a as u8).collect();
    write_json(&mask_path, &json!({ "mask": mask }))?;
    let mean = report["residuals"]["mean"].as_f64().unwrap_or(f64::NAN);
    Ok((vec![mesh_path, report_path, lm_path, mask_path], mean))
}

/// Per-vertex color reliability written next to a registered mesh.
pub fn load_mask(path: &Path, vertex_count: usize) -> Result<Vec<bool>> {
    let ctx = path.display().to_string();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let v: Value = serde_json::from_str(&text).map_err(|e| Error::parse(&ctx, e.to_string()))?;
    let arr = v["mask"].as_array().ok_or_else(|| Error::parse(&ctx, "expected {\"mask\": [0|1, …]}"))?;
    if arr.len() != vertex_count {
        return Err(Error::parse(&ctx, format!("mask has {} entries for {vertex_count} vertices", arr.len())));
    }
    arr.iter()
        .map(|x| match x.as_u64() {
            Some(0) => Ok(false),
            Some(1) => Ok(true),
            _ => Err(Error::parse(&ctx, format!("mask entries must be 0 or 1, got {x}"))),
        })
        .collect()
}

#[derive(Debug, Clone)]
pub struct BuildModelArgs {
    pub registrations: PathBuf,
    pub neutrals: Option<PathBuf>,
    pub expressions: Option<PathBuf>,
    /// Defaults to the first registration in name order.
    pub reference: Option<PathBuf>,
    pub color_nystrom_points: Option<usize>,
    pub color_rank: RankSelection,
    pub color_scale: f64,
    pub color_bandwidth: f64,
    pub out: PathBuf,
}

fn load_consistent(path: &Path, reference: &TriangleMesh) -> Result<TriangleMesh> {
    let mesh = TriangleMesh::load(path)?;
    if !mesh.same_topology(reference) {
        return Err(Error::InvalidMesh(format!("{} does not share the reference topology", path.display())));
    }
    Ok(mesh)
}

/// Pairs each expression file with the neutral whose stem is the longest
/// prefix of `<neutral stem>_…`.
fn pair_expressions(neutrals: &[PathBuf], expressions: &[PathBuf]) -> Result<Vec<(usize, usize)>> {
    let stems: Vec<String> = neutrals.iter().map(|p| stem(p)).collect();
    expressions
        .iter()
        .enumerate()
        .map(|(j, e)| {
            let s = stem(e);
            stems
                .iter()
                .enumerate()
                .filter(|(_, n)| s.starts_with(&format!("{n}_")))
                .max_by_key(|(_, n)| n.len())
                .map(|(i, _)| (i, j))
                .ok_or_else(|| Error::InvalidInput(format!("expression {} has no matching neutral", e.display())))
        })
        .collect()
}

pub fn build_model(args: &BuildModelArgs) -> Result<Outcome> {
    if !(args.color_scale > 0.0 && args.color_bandwidth > 0.0) {
        return Err(Error::InvalidInput("color prior scale and bandwidth must be positive".into()));
    }
    let registrations = ply_files(&args.registrations)?;
    if registrations.len() < 2 {
        return Err(Error::InvalidInput(format!(
            "need at least 2 registrations in {}, found {}",
            args.registrations.display(),
            registrations.len()
        )));
    }
    let reference_path = args.reference.clone().unwrap_or_else(|| registrations[0].clone());
    require(&reference_path)?;
    let reference_mesh = TriangleMesh::load(&reference_path)?;
    let reference = Arc::new(Surface::new(reference_mesh.clone()));

    let mut meshes = Vec::new();
    let mut colors = Vec::new();
    for path in &registrations {
        let mesh = load_consistent(path, &reference_mesh)?;
        let n = mesh.vertex_count();
        let mask_path = path.with_extension("mask.json");
        let sample = match mesh.colors() {
            Some(c) => {
                let mask = if mask_path.exists() { load_mask(&mask_path, n)? } else { vec![true; n] };
                ColorSample::new(c.to_vec(), mask)?
            }
            None => ColorSample::new(vec![[0.5; 3]; n], vec![false; n])?,
        };
        colors.push(sample);
        meshes.push(mesh);
    }
    let shape = build_shape_model(&meshes, reference.clone())?;
    let prior = Arc::new(squared_exponential(args.color_scale, args.color_bandwidth)?);
    let opts = LowRankOptions { nystrom_points: args.color_nystrom_points, rank: args.color_rank, ..Default::default() };
    let (color, color_report, color_mean) = build_color_model(colors, reference.clone(), prior, &opts)?;

    let (expression, pair_count) = match (&args.neutrals, &args.expressions) {
        (Some(nd), Some(ed)) => {
            let neutral_files = ply_files(nd)?;
            let expression_files = ply_files(ed)?;
            let pairs = pair_expressions(&neutral_files, &expression_files)?;
            if pairs.is_empty() {
                return Err(Error::InvalidInput(format!("no expression scans in {}", ed.display())));
            }
            let neutrals: Vec<TriangleMesh> =
                neutral_files.iter().map(|p| load_consistent(p, &reference_mesh)).collect::<Result<_>>()?;
            let exprs: Vec<TriangleMesh> =
                expression_files.iter().map(|p| load_consistent(p, &reference_mesh)).collect::<Result<_>>()?;
            let refs: Vec<(&TriangleMesh, &TriangleMesh)> = pairs.iter().map(|&(i, j)| (&neutrals[i], &exprs[j])).collect();
            (build_expression_model(&refs, reference.clone())?, pairs.len())
        }
        (None, None) => (LowRankGp::constant(reference.clone(), &vec![Vec3::zeros(); reference_mesh.vertex_count()])?, 0),
        _ => return Err(Error::InvalidInput("--neutrals and --expressions must be given together".into())),
    };

    let model = MorphableModel::assemble(shape, color, expression)?;
    create_parent(&args.out)?;
    model.save(&args.out)?;
    Ok(Outcome::ok(
        vec![args.out.clone()],
        json!({
            "registrations": meshes.len(),
            "shape_rank": model.shape.rank(),
            "color_rank": model.color.rank(),
            "color_retained_variance": color_report.retained_variance,
            "color_fallback_vertices": color_mean.fallback.iter().filter(|f| **f).count(),
            "expression_pairs": pair_count,
            "expression_rank": model.expression.rank(),
        }),
    ))
}

#[derive(Debug, Clone, Default)]
pub struct SampleArgs {
    /// A prior or a morphable model container.
    pub model: PathBuf,
    pub seed: u64,
    pub shape: Option<Vec<f64>>,
    pub color: Option<Vec<f64>>,
    pub expression: Option<Vec<f64>>,
    pub out: PathBuf,
}

/// Standard-normal draws, or the override zero-padded to `rank`.
fn coefficients(rng: &mut ChaCha8Rng, rank: usize, overrides: &Option<Vec<f64>>, part: &str) -> Result<DVector<f64>> {
    let drawn = DVector::from_iterator(rank, (0..rank).map(|_| StandardNormal.sample(rng)));
    match overrides {
        None => Ok(drawn),
        Some(v) if v.len() > rank => {
            Err(Error::InvalidInput(format!("{} {part} coefficients given for a model of rank {rank}", v.len())))
        }
        Some(v) => Ok(DVector::from_fn(rank, |i, _| v.get(i).copied().unwrap_or(0.0))),
    }
}

pub fn sample(args: &SampleArgs) -> Result<Outcome> {
    require(&args.model)?;
    let (kind, mut parts) = container::load(&args.model)?;
    let mut rng = ChaCha8Rng::seed_from_u64(args.seed);
    let (mesh, norms) = if kind == container::PRIOR_TYPE {
        if args.color.is_some() || args.expression.is_some() {
            return Err(Error::InvalidInput("a prior has only shape coefficients".into()));
        }
        let gp = parts.remove(0).1;
        let a = coefficients(&mut rng, gp.rank(), &args.shape, "shape")?;
        (gp.warp(&a)?, json!({ "shape": a.norm() }))
    } else {
        let model = MorphableModel::load(&args.model)?;
        let s = coefficients(&mut rng, model.shape.rank(), &args.shape, "shape")?;
        let c = coefficients(&mut rng, model.color.rank(), &args.color, "color")?;
        let e = coefficients(&mut rng, model.expression.rank(), &args.expression, "expression")?;
        (model.instance(&s, &c, &e)?, json!({ "shape": s.norm(), "color": c.norm(), "expression": e.norm() }))
    };
    create_parent(&args.out)?;
    ply::save_mesh(&mesh, &args.out, PlyFormat::BinaryLittleEndian, &[format!("seed {}", args.seed)])?;
    Ok(Outcome::ok(vec![args.out.clone()], json!({ "seed": args.seed, "kind": kind, "coefficient_norms": norms })))
}

#[derive(Debug, Clone)]
pub struct EvalLandmarksArgs {
    pub results: PathBuf,
    pub truth: PathBuf,
    pub regions: PathBuf,
    /// Directory for `landmark_report.json` and `landmark_report.txt`.
    pub out: Option<PathBuf>,
}

fn landmark_files(dir: &Path) -> Result<BTreeMap<String, PathBuf>> {
    require(dir)?;
    let mut files = BTreeMap::new();
    for entry in std::fs::read_dir(dir).map_err(|e| Error::io(dir, e))? {
        let path = entry.map_err(|e| Error::io(dir, e))?.path();
        let name = path.file_name().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
        if let Some(s) = name.strip_suffix(".landmarks.json") {
            files.insert(s.to_string(), path);
        }
    }
    Ok(files)
}

/// Returns the outcome and the plain-text table.
pub fn eval_landmarks(args: &EvalLandmarksArgs) -> Result<(Outcome, String)> {
    require(&args.regions)?;
    let regions = RegionMap::load(&args.regions)?;
    let results = landmark_files(&args.results)?;
    let truth = landmark_files(&args.truth)?;
    let unmatched: Vec<String> = results
        .keys()
        .filter(|k| !truth.contains_key(*k))
        .chain(truth.keys().filter(|k| !results.contains_key(*k)))
        .map(|k| format!("{k}.landmarks.json"))
        .collect();
    if !unmatched.is_empty() {
        return Err(Error::InvalidInput(format!("landmark files without a counterpart: {}", unmatched.join(", "))));
    }
    if results.is_empty() {
        return Err(Error::InvalidInput(format!("no .landmarks.json files in {}", args.results.display())));
    }
    let pairs: Vec<(LandmarkSet, LandmarkSet)> = results
        .iter()
        .map(|(k, p)| Ok((LandmarkSet::load(p)?, LandmarkSet::load(&truth[k])?)))
        .collect::<Result<_>>()?;
    let report = evaluate_landmark_sets(&pairs, &regions)?;
    let table = report.to_table();
    let mut outputs = Vec::new();
    if let Some(dir) = &args.out {
        create_dir(dir)?;
        let (jp, tp) = (dir.join("landmark_report.json"), dir.join("landmark_report.txt"));
        write_json(&jp, &report.to_json())?;
        std::fs::write(&tp, &table).map_err(|e| Error::io(&tp, e))?;
        outputs = vec![jp, tp];
    }
    Ok((Outcome::ok(outputs, report.to_json()), table))
}
